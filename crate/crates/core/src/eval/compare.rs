use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{wilcoxon_signed_rank, MetricSet, WilcoxonResult};
use crate::expctl::ResultRecord;
use crate::{Error, Result};

/// Significance level used for every comparison test.
pub const ALPHA: f64 = 0.05;

/// Which record pairs get a paired test.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub enum Pairing {
    /// Every pair on the same dataset whose test ids agree exactly.
    #[default]
    Auto,
    /// Indices into the record list; their test ids must agree.
    Explicit(Vec<(usize, usize)>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub experiment: u8,
    pub dataset: String,
    pub model: String,
    pub metrics: MetricSet,
    pub n_test: usize,
}

impl ReportRow {
    pub fn label(&self) -> String {
        format!("exp{}/{}", self.experiment, self.model)
    }
}

/// Mean of the four metrics over the rows of one (experiment, dataset)
/// group.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupMean {
    pub experiment: u8,
    pub dataset: String,
    pub rows: usize,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Signed-rank test between two label sequences over one test split.
/// `result` is `None` when the sequences are identical.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairTest {
    pub dataset: String,
    pub a: String,
    pub b: String,
    pub n: usize,
    pub result: Option<WilcoxonResult>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub rows: Vec<ReportRow>,
    pub means: Vec<GroupMean>,
    /// Predictions of one record against another.
    pub tests: Vec<PairTest>,
    /// Each record's predictions against its gold labels.
    pub gold_tests: Vec<PairTest>,
}

impl ComparisonReport {
    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn datasets(&self) -> Vec<String> {
        let mut d: Vec<String> = self.rows.iter().map(|r| r.dataset.clone()).collect();
        d.sort();
        d.dedup();
        d
    }

    /// `Dataset,Experiment,Model,Acc,Pre,F1,Rec,Averaging` in row order.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("Dataset,Experiment,Model,Acc,Pre,F1,Rec,Averaging\n");
        for r in &self.rows {
            let m = &r.metrics;
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                r.dataset,
                r.experiment,
                r.model,
                m.accuracy,
                m.precision,
                m.f1,
                m.recall,
                m.averaging.as_str()
            ));
        }
        out
    }
}

fn codes(labels: &[crate::corpus::Sentiment]) -> Vec<f64> {
    labels.iter().map(|l| l.ordinal_code() as f64).collect()
}

fn paired(dataset: &str, a: String, b: String, x: &[f64], y: &[f64]) -> Result<PairTest> {
    let result = match wilcoxon_signed_rank(x, y, ALPHA) {
        Ok(r) => Some(r),
        Err(Error::Degenerate(_)) => None,
        Err(e) => return Err(e),
    };
    Ok(PairTest {
        dataset: dataset.to_string(),
        a,
        b,
        n: x.len(),
        result,
    })
}

/// Builds the side-by-side table, group means and paired tests. Metric
/// values are copied through unchanged.
pub fn compare_experiments(records: &[ResultRecord], pairing: &Pairing) -> Result<ComparisonReport> {
    if records.is_empty() {
        return Err(Error::InvalidArgument("no result records to compare".into()));
    }
    let rows: Vec<ReportRow> = records
        .iter()
        .map(|r| ReportRow {
            experiment: r.experiment,
            dataset: r.dataset.clone(),
            model: r.model.clone(),
            metrics: r.metrics,
            n_test: r.sample_ids.len(),
        })
        .collect();

    let mut groups: BTreeMap<(u8, String), Vec<&MetricSet>> = BTreeMap::new();
    for r in &rows {
        groups.entry((r.experiment, r.dataset.clone())).or_default().push(&r.metrics);
    }
    let means = groups
        .into_iter()
        .map(|((experiment, dataset), ms)| {
            let n = ms.len() as f64;
            let mean = |f: fn(&MetricSet) -> f64| ms.iter().map(|m| f(m)).sum::<f64>() / n;
            GroupMean {
                experiment,
                dataset,
                rows: ms.len(),
                accuracy: mean(|m| m.accuracy),
                precision: mean(|m| m.precision),
                recall: mean(|m| m.recall),
                f1: mean(|m| m.f1),
            }
        })
        .collect();

    let pairs: Vec<(usize, usize)> = match pairing {
        Pairing::Auto => {
            let mut v = Vec::new();
            for i in 0..records.len() {
                for j in i + 1..records.len() {
                    if records[i].dataset == records[j].dataset && records[i].sample_ids == records[j].sample_ids {
                        v.push((i, j));
                    }
                }
            }
            v
        }
        Pairing::Explicit(p) => {
            for &(i, j) in p {
                let (Some(a), Some(b)) = (records.get(i), records.get(j)) else {
                    return Err(Error::InvalidArgument(format!("pair ({i}, {j}) out of range")));
                };
                if a.sample_ids != b.sample_ids {
                    return Err(Error::InvalidArgument(format!(
                        "{} and {} were evaluated on different test splits",
                        rows[i].label(),
                        rows[j].label()
                    )));
                }
            }
            p.clone()
        }
    };
    let tests = pairs
        .iter()
        .map(|&(i, j)| {
            paired(
                &rows[i].dataset,
                rows[i].label(),
                rows[j].label(),
                &codes(&records[i].predictions),
                &codes(&records[j].predictions),
            )
        })
        .collect::<Result<Vec<_>>>()?;
    let gold_tests = records
        .iter()
        .zip(&rows)
        .filter(|(r, _)| !r.predictions.is_empty())
        .map(|(r, row)| paired(&row.dataset, "gold".into(), row.label(), &codes(&r.golds), &codes(&r.predictions)))
        .collect::<Result<Vec<_>>>()?;

    Ok(ComparisonReport {
        rows,
        means,
        tests,
        gold_tests,
    })
}
