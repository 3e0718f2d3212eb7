use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::{Error, Result};

/// Largest effective sample size for which the exact null distribution is
/// used under [`MethodChoice::Auto`].
pub const EXACT_LIMIT: usize = 25;

/// Treatment of zero differences.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ZeroMethod {
    /// Drop zeros before ranking.
    #[default]
    Wilcox,
    /// Rank zeros with the rest, then drop them.
    Pratt,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WilcoxonMethod {
    Exact,
    NormalApproximation,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MethodChoice {
    #[default]
    Auto,
    Exact,
    Normal,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WilcoxonOptions {
    pub alpha: f64,
    pub zero_method: ZeroMethod,
    pub method: MethodChoice,
    /// Adds the fourth-cumulant Edgeworth term to the normal approximation.
    pub edgeworth: bool,
}

impl WilcoxonOptions {
    pub fn new(alpha: f64) -> Self {
        WilcoxonOptions {
            alpha,
            zero_method: ZeroMethod::Wilcox,
            method: MethodChoice::Auto,
            edgeworth: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WilcoxonResult {
    /// `min(W+, W-)`.
    pub statistic: f64,
    pub w_plus: f64,
    pub w_minus: f64,
    pub n_effective: usize,
    pub n_zero: usize,
    pub p_value: f64,
    pub method: WilcoxonMethod,
    pub zero_method: ZeroMethod,
    pub alpha: f64,
    pub significant: bool,
}

/// Ranks of `values` (1-based, ties averaged), doubled so they are integers.
fn doubled_ranks(values: &[f64]) -> Vec<u64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0u64; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        // Positions i..=j (0-based) share rank ((i+1) + (j+1)) / 2.
        for &k in &order[i..=j] {
            ranks[k] = (i + j + 2) as u64;
        }
        i = j + 1;
    }
    ranks
}

/// Number of sign assignments reaching each doubled rank sum.
fn subset_sum_counts(doubled: &[u64]) -> Vec<f64> {
    let total: u64 = doubled.iter().sum();
    let mut dist = vec![0.0f64; total as usize + 1];
    dist[0] = 1.0;
    let mut reach = 0usize;
    for &r in doubled {
        let r = r as usize;
        for s in (0..=reach).rev() {
            if dist[s] != 0.0 {
                dist[s + r] += dist[s];
            }
        }
        reach += r;
    }
    dist
}

/// Null distribution of `W+` for ranks `1..=n` without ties:
/// `pmf[w] = P(W+ = w)` for `w` in `0..=n(n+1)/2`.
pub fn signed_rank_null_pmf(n: usize) -> Vec<f64> {
    let ranks: Vec<u64> = (1..=n as u64).map(|r| 2 * r).collect();
    let counts = subset_sum_counts(&ranks);
    let denom = 2f64.powi(n as i32);
    counts.iter().step_by(2).map(|c| c / denom).collect()
}

pub fn wilcoxon_signed_rank(x: &[f64], y: &[f64], alpha: f64) -> Result<WilcoxonResult> {
    wilcoxon_with(x, y, &WilcoxonOptions::new(alpha))
}

/// Two-sided paired signed-rank test of `x - y`.
pub fn wilcoxon_with(x: &[f64], y: &[f64], opts: &WilcoxonOptions) -> Result<WilcoxonResult> {
    if x.len() != y.len() {
        return Err(Error::InvalidArgument(format!("{} vs {} paired values", x.len(), y.len())));
    }
    if x.is_empty() {
        return Err(Error::InvalidArgument("no paired values".into()));
    }
    if !(opts.alpha > 0.0 && opts.alpha < 1.0) {
        return Err(Error::InvalidArgument(format!("alpha {} outside (0, 1)", opts.alpha)));
    }
    let diffs: Vec<f64> = x.iter().zip(y).map(|(a, b)| a - b).collect();
    if diffs.iter().any(|d| !d.is_finite()) {
        return Err(Error::InvalidArgument("non-finite paired difference".into()));
    }
    let n_zero = diffs.iter().filter(|&&d| d == 0.0).count();
    if n_zero == diffs.len() {
        return Err(Error::Degenerate("all differences zero".into()));
    }
    let (signs, doubled): (Vec<bool>, Vec<u64>) = match opts.zero_method {
        ZeroMethod::Wilcox => {
            let nz: Vec<f64> = diffs.iter().copied().filter(|&d| d != 0.0).collect();
            let abs: Vec<f64> = nz.iter().map(|d| d.abs()).collect();
            (nz.iter().map(|&d| d > 0.0).collect(), doubled_ranks(&abs))
        }
        ZeroMethod::Pratt => {
            let abs: Vec<f64> = diffs.iter().map(|d| d.abs()).collect();
            let ranks = doubled_ranks(&abs);
            diffs
                .iter()
                .zip(ranks)
                .filter(|(&d, _)| d != 0.0)
                .map(|(&d, r)| (d > 0.0, r))
                .unzip()
        }
    };
    let n = doubled.len();
    let total: u64 = doubled.iter().sum();
    let w_plus2: u64 = signs.iter().zip(&doubled).filter(|(&s, _)| s).map(|(_, &r)| r).sum();
    let w_min2 = w_plus2.min(total - w_plus2);
    let exact = match opts.method {
        MethodChoice::Auto => n <= EXACT_LIMIT,
        MethodChoice::Exact => true,
        MethodChoice::Normal => false,
    };
    let p_value = if exact {
        let counts = subset_sum_counts(&doubled);
        let tail: f64 = counts[..=w_min2 as usize].iter().sum();
        (2.0 * tail / 2f64.powi(n as i32)).min(1.0)
    } else {
        let mean = total as f64 / 4.0;
        let var: f64 = doubled.iter().map(|&r| (r as f64 / 2.0).powi(2)).sum::<f64>() / 4.0;
        let dev = (w_plus2 as f64 / 2.0 - mean).abs();
        let z = ((dev - 0.5) / var.sqrt()).max(0.0);
        let mut p = erfc(z / std::f64::consts::SQRT_2);
        if opts.edgeworth {
            // Each rank contributes r * Bernoulli(1/2), whose fourth cumulant is -r^4 / 8.
            let k4: f64 = -doubled.iter().map(|&r| (r as f64 / 2.0).powi(4)).sum::<f64>() / 8.0;
            let g2 = k4 / (var * var);
            let phi = (-z * z / 2.0).exp() / (2.0 * std::f64::consts::PI).sqrt();
            p += 2.0 * phi * g2 / 24.0 * (z.powi(3) - 3.0 * z);
        }
        p.clamp(f64::MIN_POSITIVE, 1.0)
    };
    Ok(WilcoxonResult {
        statistic: w_min2 as f64 / 2.0,
        w_plus: w_plus2 as f64 / 2.0,
        w_minus: (total - w_plus2) as f64 / 2.0,
        n_effective: n,
        n_zero,
        p_value,
        method: if exact {
            WilcoxonMethod::Exact
        } else {
            WilcoxonMethod::NormalApproximation
        },
        zero_method: opts.zero_method,
        alpha: opts.alpha,
        significant: p_value < opts.alpha,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    /// Exhaustive sign enumeration over the observed absolute ranks.
    pub(crate) fn brute_force_p(x: &[f64], y: &[f64]) -> f64 {
        let d: Vec<f64> = x.iter().zip(y).map(|(a, b)| a - b).filter(|&d| d != 0.0).collect();
        let abs: Vec<f64> = d.iter().map(|v| v.abs()).collect();
        // Plain average ranks, computed independently of `doubled_ranks`.
        let ranks: Vec<f64> = abs
            .iter()
            .map(|&a| {
                let below = abs.iter().filter(|&&b| b < a).count() as f64;
                let equal = abs.iter().filter(|&&b| b == a).count() as f64;
                below + (equal + 1.0) / 2.0
            })
            .collect();
        let total: f64 = ranks.iter().sum();
        let mean = total / 2.0;
        let observed: f64 = d.iter().zip(&ranks).filter(|(v, _)| **v > 0.0).map(|(_, r)| r).sum();
        let n = d.len();
        let mut hits = 0u64;
        for mask in 0u64..(1 << n) {
            let w: f64 = (0..n).filter(|i| mask >> i & 1 == 1).map(|i| ranks[i]).sum();
            if (w - mean).abs() >= (observed - mean).abs() - 1e-9 {
                hits += 1;
            }
        }
        hits as f64 / (1u64 << n) as f64
    }

    #[test]
    fn all_zero_is_degenerate() {
        let e = wilcoxon_signed_rank(&[1.0, 2.0], &[1.0, 2.0], 0.05);
        assert!(matches!(e, Err(Error::Degenerate(_))));
    }

    #[test]
    fn three_positive_differences() {
        let r = wilcoxon_signed_rank(&[1.0, 2.0, 3.0], &[0.0, 0.0, 0.0], 0.05).unwrap();
        assert_eq!(r.w_minus, 0.0);
        assert_eq!(r.statistic, 0.0);
        assert_eq!(r.p_value, 0.25);
        assert_eq!(r.method, WilcoxonMethod::Exact);
        assert!(!r.significant);
    }

    #[test]
    fn exact_matches_enumeration_with_ties() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(17);
        for n in 1..=10 {
            for _ in 0..30 {
                let x: Vec<f64> = (0..n).map(|_| rng.random_range(0..3) as f64).collect();
                let y: Vec<f64> = (0..n).map(|_| rng.random_range(0..3) as f64).collect();
                let Ok(r) = wilcoxon_signed_rank(&x, &y, 0.05) else { continue };
                assert!((r.p_value - brute_force_p(&x, &y)).abs() < 1e-12, "{x:?} {y:?}");
            }
        }
    }

    #[test]
    fn normal_close_to_exact_at_15() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let x: Vec<f64> = (0..15).map(|_| rng.random_range(-2.0..2.5)).collect();
            let y = vec![0.0; 15];
            let exact = wilcoxon_signed_rank(&x, &y, 0.05).unwrap();
            let normal = wilcoxon_with(
                &x,
                &y,
                &WilcoxonOptions {
                    method: MethodChoice::Normal,
                    ..WilcoxonOptions::new(0.05)
                },
            )
            .unwrap();
            assert!((exact.p_value - normal.p_value).abs() < 0.01);
        }
    }

    #[test]
    fn plain_normal_matches_closed_form() {
        // n = 30, one negative difference of rank 1: W- = 1, mean 232.5, var 2363.75.
        let x: Vec<f64> = (1..=30).map(|i| if i == 1 { -1.0 } else { i as f64 }).collect();
        let y = vec![0.0; 30];
        let opts = WilcoxonOptions {
            edgeworth: false,
            ..WilcoxonOptions::new(0.05)
        };
        let r = wilcoxon_with(&x, &y, &opts).unwrap();
        assert_eq!(r.method, WilcoxonMethod::NormalApproximation);
        let z: f64 = (231.5 - 0.5) / 2363.75f64.sqrt();
        assert!((r.p_value - erfc(z / std::f64::consts::SQRT_2)).abs() < 1e-15);
    }

    #[test]
    fn pmf_sums_to_one() {
        for n in 0..=25 {
            let pmf = signed_rank_null_pmf(n);
            assert_eq!(pmf.len(), n * (n + 1) / 2 + 1);
            assert!((pmf.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        assert_eq!(signed_rank_null_pmf(3), vec![0.125, 0.125, 0.125, 0.25, 0.125, 0.125, 0.125]);
    }

    #[test]
    fn large_samples_use_normal() {
        let x: Vec<f64> = (0..40).map(|i| (i % 7) as f64 - 2.0).collect();
        let r = wilcoxon_signed_rank(&x, &vec![0.0; 40], 0.05).unwrap();
        assert_eq!(r.method, WilcoxonMethod::NormalApproximation);
        assert!(r.p_value > 0.0 && r.p_value <= 1.0);
    }

    #[test]
    fn pratt_keeps_zero_ranks() {
        let x = [0.0, 1.0, 2.0, -3.0];
        let y = [0.0; 4];
        let pratt = wilcoxon_with(
            &x,
            &y,
            &WilcoxonOptions {
                zero_method: ZeroMethod::Pratt,
                ..WilcoxonOptions::new(0.05)
            },
        )
        .unwrap();
        // Ranks with the zero included are 1..4; the zero's rank is dropped.
        assert_eq!((pratt.w_plus, pratt.w_minus), (5.0, 4.0));
        let wilcox = wilcoxon_signed_rank(&x, &y, 0.05).unwrap();
        assert_eq!((wilcox.w_plus, wilcox.w_minus), (3.0, 3.0));
        assert_eq!(wilcox.n_zero, 1);
    }

    proptest! {
        #[test]
        fn symmetric_under_swap(pairs in proptest::collection::vec((0i32..3, 0i32..3), 1..40)) {
            let x: Vec<f64> = pairs.iter().map(|p| p.0 as f64).collect();
            let y: Vec<f64> = pairs.iter().map(|p| p.1 as f64).collect();
            match (wilcoxon_signed_rank(&x, &y, 0.05), wilcoxon_signed_rank(&y, &x, 0.05)) {
                (Ok(a), Ok(b)) => {
                    prop_assert_eq!(a.p_value, b.p_value);
                    prop_assert_eq!(a.statistic, b.statistic);
                    prop_assert!(a.p_value > 0.0 && a.p_value <= 1.0);
                }
                (Err(_), Err(_)) => {}
                _ => prop_assert!(false),
            }
        }
    }
}
