use serde::{Deserialize, Serialize};

use super::DetectionIndex;
use crate::corpus::Dataset;
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum SourceFilter {
    All,
    Only(String),
}

/// Share of samples with exactly `k` detections, for `k = 0..=max`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub counts: Vec<usize>,
    pub percentages: Vec<f64>,
    pub total: usize,
}

pub fn object_count_histogram(all: &DetectionIndex, filter: &SourceFilter) -> Histogram {
    let per_sample: Vec<usize> = all
        .sample_ids()
        .map(|id| {
            all.sources(id)
                .into_iter()
                .filter(|d| match filter {
                    SourceFilter::All => true,
                    SourceFilter::Only(s) => &d.source == s,
                })
                .map(|d| d.len())
                .sum()
        })
        .collect();
    let max = per_sample.iter().copied().max().unwrap_or(0);
    let mut counts = vec![0usize; if per_sample.is_empty() { 0 } else { max + 1 }];
    for &k in &per_sample {
        counts[k] += 1;
    }
    let total = per_sample.len();
    let percentages = counts
        .iter()
        .map(|&c| 100.0 * c as f64 / total as f64)
        .collect();
    Histogram {
        counts,
        percentages,
        total,
    }
}

/// One header row of object counts and one row of percentages.
pub fn histogram_csv(label: &str, h: &Histogram) -> String {
    let mut header = vec!["Number of Identified Objects".to_string()];
    let mut row = vec![label.to_string()];
    for (k, p) in h.percentages.iter().enumerate() {
        header.push(k.to_string());
        row.push(format!("{p:.2}%"));
    }
    format!("{}\n{}\n", header.join(","), row.join(","))
}

/// Samples with exactly one detection from the primary source (COCO, or the fixture detector).
pub fn single_object_subset(d: &Dataset, all: &DetectionIndex) -> Result<Dataset> {
    let primary = all.primary_source();
    for s in d.samples() {
        if !all.contains(&s.id) {
            return Err(Error::MissingDetections(s.id.clone()));
        }
    }
    Ok(d.filtered(|s| all.get(&s.id, primary).map_or(0, |x| x.len()) == 1))
}
