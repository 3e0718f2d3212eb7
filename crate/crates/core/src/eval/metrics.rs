use serde::{Deserialize, Serialize};

use crate::corpus::Sentiment;
use crate::{Error, Result};

/// 3×3 counts; rows are gold labels, columns predictions, both in
/// (positive, negative, neutral) order.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: [[u64; 3]; 3],
}

impl ConfusionMatrix {
    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..3).map(|i| self.counts[i][i]).sum()
    }

    /// Count of gold `gold` predicted as `pred`.
    pub fn get(&self, gold: Sentiment, pred: Sentiment) -> u64 {
        self.counts[gold.index()][pred.index()]
    }
}

pub fn confusion(preds: &[Sentiment], golds: &[Sentiment]) -> Result<ConfusionMatrix> {
    if preds.len() != golds.len() {
        return Err(Error::InvalidArgument(format!(
            "{} predictions but {} gold labels",
            preds.len(),
            golds.len()
        )));
    }
    let mut cm = ConfusionMatrix::default();
    for (p, g) in preds.iter().zip(golds) {
        cm.counts[g.index()][p.index()] += 1;
    }
    Ok(cm)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Averaging {
    #[default]
    Macro,
    Weighted,
}

impl Averaging {
    pub fn as_str(self) -> &'static str {
        match self {
            Averaging::Macro => "macro",
            Averaging::Weighted => "weighted",
        }
    }
}

impl std::str::FromStr for Averaging {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "macro" => Ok(Averaging::Macro),
            "weighted" => Ok(Averaging::Weighted),
            other => Err(Error::InvalidArgument(format!("unknown averaging {other:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricSet {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub averaging: Averaging,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Precision, recall and F1 for each class, with 0/0 taken as 0.
pub fn per_class(cm: &ConfusionMatrix) -> [ClassMetrics; 3] {
    std::array::from_fn(|k| {
        let tp = cm.counts[k][k];
        let predicted: u64 = (0..3).map(|g| cm.counts[g][k]).sum();
        let support: u64 = cm.counts[k].iter().sum();
        let precision = ratio(tp, predicted);
        let recall = ratio(tp, support);
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        ClassMetrics {
            precision,
            recall,
            f1,
            support,
        }
    })
}

pub fn metrics(cm: &ConfusionMatrix, averaging: Averaging) -> Result<MetricSet> {
    let total = cm.total();
    if total == 0 {
        return Err(Error::InvalidArgument("metrics over zero samples".into()));
    }
    let classes = per_class(cm);
    let weights: [f64; 3] = match averaging {
        Averaging::Macro => [1.0 / 3.0; 3],
        Averaging::Weighted => std::array::from_fn(|k| classes[k].support as f64 / total as f64),
    };
    let avg = |f: fn(&ClassMetrics) -> f64| match averaging {
        Averaging::Macro => classes.iter().map(f).sum::<f64>() / 3.0,
        Averaging::Weighted => classes.iter().zip(weights).map(|(c, w)| f(c) * w).sum(),
    };
    Ok(MetricSet {
        accuracy: cm.trace() as f64 / total as f64,
        precision: avg(|c| c.precision),
        recall: avg(|c| c.recall),
        f1: avg(|c| c.f1),
        averaging,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use Sentiment::*;

    #[test]
    fn perfect_predictions() {
        let g = [Positive, Negative, Neutral, Neutral];
        let cm = confusion(&g, &g).unwrap();
        assert_eq!(cm.trace(), 4);
        let m = metrics(&cm, Averaging::Macro).unwrap();
        assert_eq!((m.accuracy, m.precision, m.recall, m.f1), (1.0, 1.0, 1.0, 1.0));
    }

    #[test]
    fn single_predicted_column() {
        let g = [Positive, Negative, Neutral, Negative];
        let cm = confusion(&[Positive; 4], &g).unwrap();
        for gold in Sentiment::ALL {
            for p in [Negative, Neutral] {
                assert_eq!(cm.get(gold, p), 0);
            }
        }
        let m = metrics(&cm, Averaging::Macro).unwrap();
        // Negative and neutral are never predicted: their precision is 0.
        assert!((m.precision - 0.25 / 3.0).abs() < 1e-15);
        assert!((m.recall - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn errors() {
        assert!(confusion(&[Positive], &[]).is_err());
        assert!(metrics(&ConfusionMatrix::default(), Averaging::Macro).is_err());
    }

    #[test]
    fn weighted_uses_support() {
        let cm = ConfusionMatrix {
            counts: [[3, 1, 0], [0, 0, 0], [1, 0, 5]],
        };
        let m = metrics(&cm, Averaging::Weighted).unwrap();
        let c = per_class(&cm);
        let expect = (4.0 * c[0].recall + 6.0 * c[2].recall) / 10.0;
        assert!((m.recall - expect).abs() < 1e-15);
        assert_eq!(m.averaging, Averaging::Weighted);
    }

    proptest! {
        #[test]
        fn tally_matches_per_sample_count(pairs in proptest::collection::vec((0usize..3, 0usize..3), 0..500)) {
            let p: Vec<_> = pairs.iter().map(|&(a, _)| Sentiment::from_index(a).unwrap()).collect();
            let g: Vec<_> = pairs.iter().map(|&(_, b)| Sentiment::from_index(b).unwrap()).collect();
            let cm = confusion(&p, &g).unwrap();
            for gi in 0..3 {
                for pi in 0..3 {
                    let n = pairs.iter().filter(|&&(a, b)| a == pi && b == gi).count() as u64;
                    prop_assert_eq!(cm.counts[gi][pi], n);
                }
            }
        }

        #[test]
        fn metrics_in_unit_interval(counts in proptest::array::uniform3(proptest::array::uniform3(0u64..50))) {
            let cm = ConfusionMatrix { counts };
            prop_assume!(cm.total() > 0);
            for avg in [Averaging::Macro, Averaging::Weighted] {
                let m = metrics(&cm, avg).unwrap();
                for v in [m.accuracy, m.precision, m.recall, m.f1] {
                    prop_assert!((0.0..=1.0).contains(&v));
                }
                prop_assert_eq!(m.accuracy, cm.trace() as f64 / cm.total() as f64);
            }
        }
    }
}
