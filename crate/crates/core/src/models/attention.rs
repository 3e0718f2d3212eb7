use serde::{Deserialize, Serialize};

use crate::nn::{Graph, Matrix, ParamSet, Var};
use crate::{Error, Result};

/// Whether attention logits `Qᵢ·Kⱼ` are divided by `√d`.
///
/// `Unscaled` is the literal softmax(Q·K)·V form; pretrained encoders use
/// `Scaled`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttentionScaling {
    Unscaled,
    #[default]
    Scaled,
}

/// Attention weights (rows sum to one) and the weighted values.
#[derive(Clone, Debug, PartialEq)]
pub struct AttentionTensors {
    pub weights: Matrix,
    pub output: Matrix,
}

/// Single-head attention on the tape. Returns `(weights, output)`.
pub fn attention(g: &mut Graph<'_>, q: Var, k: Var, v: Var, scaling: AttentionScaling) -> (Var, Var) {
    let kt = g.transpose(k);
    let mut scores = g.matmul(q, kt);
    if scaling == AttentionScaling::Scaled {
        let d = g.shape(q).1 as f64;
        scores = g.scale(scores, 1.0 / d.sqrt());
    }
    let weights = g.softmax_rows(scores);
    let out = g.matmul(weights, v);
    (weights, out)
}

/// `outputᵢ = Σⱼ softmaxⱼ(Qᵢ·Kⱼ) Vⱼ` for plain matrices (`T × d` queries,
/// `S × d` keys, `S × dv` values).
pub fn self_attention(q: &Matrix, k: &Matrix, v: &Matrix, scaling: AttentionScaling) -> Result<AttentionTensors> {
    if q.ncols() != k.ncols() {
        return Err(Error::Shape(format!(
            "query dim {} != key dim {}",
            q.ncols(),
            k.ncols()
        )));
    }
    if k.nrows() != v.nrows() {
        return Err(Error::Shape(format!(
            "{} keys but {} values",
            k.nrows(),
            v.nrows()
        )));
    }
    if k.nrows() == 0 {
        return Err(Error::Shape("attention over zero tokens".into()));
    }
    let params = ParamSet::new();
    let mut g = Graph::new(&params);
    let (qv, kv, vv) = (g.input(q.clone()), g.input(k.clone()), g.input(v.clone()));
    let (w, out) = attention(&mut g, qv, kv, vv, scaling);
    Ok(AttentionTensors {
        weights: g.value(w).clone(),
        output: g.value(out).clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use proptest::prelude::*;

    #[test]
    fn single_token_returns_value() {
        let out = self_attention(&array![[0.3, -2.0]], &array![[1.0, 4.0]], &array![[7.0, 8.0, 9.0]], AttentionScaling::Unscaled)
            .unwrap();
        assert_eq!(out.output, array![[7.0, 8.0, 9.0]]);
        assert_eq!(out.weights, array![[1.0]]);
    }

    #[test]
    fn identical_keys_average_values() {
        let q = array![[1.0, 2.0], [-3.0, 0.5]];
        let k = array![[0.4, 0.4], [0.4, 0.4], [0.4, 0.4]];
        let v = array![[1.0], [2.0], [6.0]];
        let out = self_attention(&q, &k, &v, AttentionScaling::Unscaled).unwrap();
        for r in 0..2 {
            assert!((out.output[[r, 0]] - 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn three_tokens_match_explicit_softmax() {
        let q = array![[0.2, -0.1], [1.3, 0.7], [-0.4, 0.9]];
        let k = array![[0.5, 1.1], [-0.6, 0.3], [0.8, -1.2]];
        let v = array![[1.0, 0.0], [0.5, 2.0], [-1.0, 1.5]];
        for scaling in [AttentionScaling::Unscaled, AttentionScaling::Scaled] {
            let scale = if scaling == AttentionScaling::Scaled { 1.0 / 2f64.sqrt() } else { 1.0 };
            let out = self_attention(&q, &k, &v, scaling).unwrap();
            for i in 0..3 {
                let logits: Vec<f64> = (0..3)
                    .map(|j| scale * (q[[i, 0]] * k[[j, 0]] + q[[i, 1]] * k[[j, 1]]))
                    .collect();
                let z: f64 = logits.iter().map(|l| l.exp()).sum();
                for c in 0..2 {
                    let expect: f64 = (0..3).map(|j| logits[j].exp() / z * v[[j, c]]).sum();
                    assert!((out.output[[i, c]] - expect).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn dimension_mismatch() {
        let e = self_attention(&array![[1.0, 2.0]], &array![[1.0]], &array![[1.0]], AttentionScaling::Unscaled);
        assert!(matches!(e, Err(Error::Shape(_))));
        let e = self_attention(&array![[1.0]], &array![[1.0], [2.0]], &array![[1.0]], AttentionScaling::Unscaled);
        assert!(matches!(e, Err(Error::Shape(_))));
    }

    proptest! {
        #[test]
        fn rows_sum_to_one(t in 1usize..6, d in 1usize..5, seed in any::<u64>()) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let mut m = |r: usize, c: usize| Matrix::from_shape_fn((r, c), |_| rng.random_range(-5.0..5.0));
            let (q, k, v) = (m(t, d), m(t, d), m(t, 2));
            let out = self_attention(&q, &k, &v, AttentionScaling::Unscaled).unwrap();
            for row in out.weights.rows() {
                prop_assert!((row.sum() - 1.0).abs() < 1e-9);
                prop_assert!(row.iter().all(|&w| w >= 0.0));
            }
        }
    }
}
