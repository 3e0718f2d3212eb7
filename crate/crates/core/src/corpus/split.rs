use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Dataset, LabelKind, Sample};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SplitOptions {
    /// Fraction of samples that go to the training part.
    pub ratio: f64,
    pub seed: u64,
    /// Cut each class of this label separately instead of the whole set.
    pub stratify_by: Option<LabelKind>,
}

impl SplitOptions {
    pub fn new(ratio: f64, seed: u64) -> Self {
        SplitOptions {
            ratio,
            seed,
            stratify_by: None,
        }
    }
}

fn shuffle_cut(indices: &mut Vec<usize>, ratio: f64, rng: &mut ChaCha8Rng) -> usize {
    indices.shuffle(rng);
    (ratio * indices.len() as f64).round() as usize
}

/// Shuffles then cuts the dataset into (train, test).
///
/// Both parts keep the input order of their samples.
pub fn split_train_test(d: &Dataset, opts: SplitOptions) -> Result<(Dataset, Dataset)> {
    if !(opts.ratio > 0.0 && opts.ratio < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "split ratio must lie in (0, 1), got {}",
            opts.ratio
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut in_train = vec![false; d.len()];

    match opts.stratify_by {
        None => {
            let mut idx: Vec<usize> = (0..d.len()).collect();
            let cut = shuffle_cut(&mut idx, opts.ratio, &mut rng);
            for &i in &idx[..cut] {
                in_train[i] = true;
            }
        }
        Some(kind) => {
            // Unlabeled samples form their own stratum.
            let mut strata: BTreeMap<Option<usize>, Vec<usize>> = BTreeMap::new();
            for (i, s) in d.samples().iter().enumerate() {
                strata.entry(s.label(kind).map(|l| l.index())).or_default().push(i);
            }
            for idx in strata.values_mut() {
                let cut = shuffle_cut(idx, opts.ratio, &mut rng);
                for &i in &idx[..cut] {
                    in_train[i] = true;
                }
            }
        }
    }

    let (mut train, mut test): (Vec<Sample>, Vec<Sample>) = (Vec::new(), Vec::new());
    for (s, &t) in d.samples().iter().zip(&in_train) {
        if t {
            train.push(s.clone());
        } else {
            test.push(s.clone());
        }
    }
    if train.is_empty() || test.is_empty() {
        log::warn!(
            "split of {} samples at ratio {} leaves train={} test={}",
            d.len(),
            opts.ratio,
            train.len(),
            test.len()
        );
    }
    Ok((
        Dataset::from_parts_unchecked(d.name.clone(), train),
        Dataset::from_parts_unchecked(d.name.clone(), test),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::fixtures::sample;
    use crate::corpus::Sentiment;
    use proptest::prelude::*;
    use std::collections::HashSet;

    fn dataset(n: usize) -> Dataset {
        let labels = Sentiment::ALL;
        Dataset::new(
            "d",
            (0..n)
                .map(|i| sample(&format!("s{i}"), "", Some(labels[i % 3]), None, None))
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn eighty_twenty() {
        let (tr, te) = split_train_test(&dataset(100), SplitOptions::new(0.8, 1)).unwrap();
        assert_eq!((tr.len(), te.len()), (80, 20));
    }

    #[test]
    fn single_sample_goes_to_train() {
        let (tr, te) = split_train_test(&dataset(1), SplitOptions::new(0.8, 1)).unwrap();
        assert_eq!((tr.len(), te.len()), (1, 0));
    }

    #[test]
    fn same_seed_same_partition() {
        let d = dataset(57);
        let a = split_train_test(&d, SplitOptions::new(0.8, 9)).unwrap();
        let b = split_train_test(&d, SplitOptions::new(0.8, 9)).unwrap();
        assert_eq!(a.0.ids(), b.0.ids());
        assert_eq!(a.1.ids(), b.1.ids());
        let c = split_train_test(&d, SplitOptions::new(0.8, 10)).unwrap();
        assert_ne!(a.0.ids(), c.0.ids());
    }

    #[test]
    fn ratio_out_of_range() {
        for r in [0.0, 1.0, -0.5, 1.5, f64::NAN] {
            assert!(split_train_test(&dataset(5), SplitOptions::new(r, 0)).is_err());
        }
    }

    #[test]
    fn stratified_cuts_each_class() {
        let opts = SplitOptions {
            stratify_by: Some(LabelKind::Image),
            ..SplitOptions::new(0.8, 3)
        };
        let (tr, _) = split_train_test(&dataset(30), opts).unwrap();
        let stats = crate::corpus::summarize(&tr);
        assert_eq!(stats.image.as_triple(), (8, 8, 8));
    }

    proptest! {
        #[test]
        fn split_is_partition(n in 0usize..200, ratio in 0.01f64..0.99, seed in any::<u64>()) {
            let d = dataset(n);
            let (tr, te) = split_train_test(&d, SplitOptions::new(ratio, seed)).unwrap();
            prop_assert_eq!(tr.len(), (ratio * n as f64).round() as usize);
            let a: HashSet<&str> = tr.ids().into_iter().collect();
            let b: HashSet<&str> = te.ids().into_iter().collect();
            prop_assert!(a.is_disjoint(&b));
            let all: HashSet<&str> = d.ids().into_iter().collect();
            prop_assert_eq!(a.union(&b).copied().collect::<HashSet<_>>(), all);
        }
    }
}
