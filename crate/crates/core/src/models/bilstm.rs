use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{dropout, glorot, Classifier, NUM_CLASSES};
use crate::nn::{Graph, Matrix, ParamId, ParamSet, Var};
use crate::tems::EncodedSeq;
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BiLstmConfig {
    pub vocab_size: usize,
    pub embed_dim: usize,
    pub hidden_units: usize,
    pub num_classes: usize,
    pub dropout: f64,
    pub train_embeddings: bool,
}

impl BiLstmConfig {
    /// 300-d embeddings, 32 hidden units per direction, dropout 0.1.
    pub fn new(vocab_size: usize) -> Self {
        BiLstmConfig {
            vocab_size,
            embed_dim: 300,
            hidden_units: 32,
            num_classes: NUM_CLASSES,
            dropout: 0.1,
            train_embeddings: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.vocab_size == 0 || self.embed_dim == 0 || self.hidden_units == 0 || self.num_classes < 2 {
            return Err(Error::InvalidArgument(format!("degenerate BiLSTM config {self:?}")));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::InvalidArgument(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug)]
struct LstmIds {
    w: ParamId,
    u: ParamId,
    b: ParamId,
}

/// Hidden states of both directions over the real tokens of one sequence.
#[derive(Clone, Debug, PartialEq)]
pub struct BiLstmState {
    /// Left-to-right state after each real token (`len × H`).
    pub ltr: Matrix,
    /// Right-to-left state after each real token (`len × H`).
    pub rtl: Matrix,
    pub ltr_final: Vec<f64>,
    pub rtl_final: Vec<f64>,
}

impl BiLstmState {
    /// Per-token context `[ltrᵢ ; rtlᵢ]`.
    pub fn contexts(&self) -> Matrix {
        ndarray::concatenate(ndarray::Axis(1), &[self.ltr.view(), self.rtl.view()]).expect("same rows")
    }

    /// Sequence representation fed to the classifier.
    pub fn pooled(&self) -> Vec<f64> {
        self.ltr_final.iter().chain(&self.rtl_final).copied().collect()
    }
}

/// Embedding → bidirectional LSTM → dropout → dense softmax.
#[derive(Clone, Debug)]
pub struct BiLstmClassifier {
    cfg: BiLstmConfig,
    params: ParamSet,
    embedding: ParamId,
    ltr: LstmIds,
    rtl: LstmIds,
    out_w: ParamId,
    out_b: ParamId,
}

impl BiLstmClassifier {
    pub fn new(cfg: BiLstmConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (e, h) = (cfg.embed_dim, cfg.hidden_units);
        let mut params = ParamSet::new();
        let mut emb = Matrix::from_shape_fn((cfg.vocab_size, e), |_| rng.random_range(-0.05..0.05));
        emb.row_mut(0).fill(0.0);
        let embedding = params.add("embedding", emb);
        params.set_trainable(embedding, cfg.train_embeddings);
        let mut lstm = |params: &mut ParamSet, prefix: &str| {
            let mut b = Matrix::zeros((1, 4 * h));
            b.slice_mut(ndarray::s![.., h..2 * h]).fill(1.0);
            LstmIds {
                w: params.add(format!("{prefix}.w"), glorot(&mut rng, e, 4 * h)),
                u: params.add(format!("{prefix}.u"), glorot(&mut rng, h, 4 * h)),
                b: params.add(format!("{prefix}.b"), b),
            }
        };
        let ltr = lstm(&mut params, "ltr");
        let rtl = lstm(&mut params, "rtl");
        let out_w = params.add("out.w", glorot(&mut rng, 2 * h, cfg.num_classes));
        let out_b = params.add("out.b", Matrix::zeros((1, cfg.num_classes)));
        Ok(BiLstmClassifier {
            cfg,
            params,
            embedding,
            ltr,
            rtl,
            out_w,
            out_b,
        })
    }

    pub fn config(&self) -> &BiLstmConfig {
        &self.cfg
    }

    /// Replaces the embedding table, e.g. with pretrained vectors.
    pub fn set_embeddings(&mut self, table: Matrix) -> Result<()> {
        self.params.assign("embedding", table)
    }

    fn check_batch(&self, batch: &[&EncodedSeq]) -> Result<usize> {
        let t = batch.first().map_or(0, |s| s.max_len());
        for s in batch {
            if s.max_len() != t || s.attention_mask.len() != t {
                return Err(Error::Shape(format!(
                    "batch mixes sequence lengths {t} and {}",
                    s.max_len()
                )));
            }
            if let Some(&bad) = s.indices.iter().find(|&&i| i >= self.cfg.vocab_size) {
                return Err(Error::IndexOutOfVocab {
                    index: bad,
                    size: self.cfg.vocab_size,
                });
            }
        }
        Ok(t)
    }

    /// Runs both directions; returns final states and, if requested, the
    /// state after every position.
    #[allow(clippy::type_complexity)]
    fn encode<'a>(
        &'a self,
        g: &mut Graph<'a>,
        batch: &[&EncodedSeq],
        keep_steps: bool,
    ) -> Result<((Var, Var), Option<(Vec<Var>, Vec<Var>)>)> {
        let steps = self.check_batch(batch)?;
        let bsz = batch.len();
        let ids: Vec<usize> = (0..steps)
            .flat_map(|t| batch.iter().map(move |s| s.indices[t]))
            .collect();
        let emb = g.param(self.embedding);
        let x = g.gather(emb, &ids);
        let run = |g: &mut Graph<'a>, p: LstmIds, reverse: bool| {
            let w = g.param(p.w);
            let xw = g.matmul(x, w);
            let u = g.param(p.u);
            let b = g.param(p.b);
            let h_dim = self.cfg.hidden_units;
            let mut h = g.input(Matrix::zeros((bsz, h_dim)));
            let mut c = g.input(Matrix::zeros((bsz, h_dim)));
            let mut states = vec![h; if keep_steps { steps } else { 0 }];
            let order: Vec<usize> = if reverse { (0..steps).rev().collect() } else { (0..steps).collect() };
            for t in order {
                let live: Vec<bool> = batch.iter().map(|s| s.attention_mask[t] == 1).collect();
                if live.iter().any(|&l| l) {
                    let xt = g.slice_rows(xw, t * bsz, (t + 1) * bsz);
                    let hu = g.matmul(h, u);
                    let z = g.add(xt, hu);
                    let z = g.add_row(z, b);
                    let i = g.slice_cols(z, 0, h_dim);
                    let i = g.sigmoid(i);
                    let f = g.slice_cols(z, h_dim, 2 * h_dim);
                    let f = g.sigmoid(f);
                    let gg = g.slice_cols(z, 2 * h_dim, 3 * h_dim);
                    let gg = g.tanh(gg);
                    let o = g.slice_cols(z, 3 * h_dim, 4 * h_dim);
                    let o = g.sigmoid(o);
                    let fc = g.mul(f, c);
                    let ig = g.mul(i, gg);
                    let c_new = g.add(fc, ig);
                    let tc = g.tanh(c_new);
                    let h_new = g.mul(o, tc);
                    if live.iter().all(|&l| l) {
                        h = h_new;
                        c = c_new;
                    } else {
                        let m = Matrix::from_shape_fn((bsz, h_dim), |(r, _)| if live[r] { 1.0 } else { 0.0 });
                        let keep = m.mapv(|v| 1.0 - v);
                        let a = g.mul_const(h_new, m.clone());
                        let k = g.mul_const(h, keep.clone());
                        h = g.add(a, k);
                        let a = g.mul_const(c_new, m);
                        let k = g.mul_const(c, keep);
                        c = g.add(a, k);
                    }
                }
                if keep_steps {
                    states[t] = h;
                }
            }
            (h, states)
        };
        let (lf, ls) = run(g, self.ltr, false);
        let (rf, rs) = run(g, self.rtl, true);
        Ok(((lf, rf), keep_steps.then_some((ls, rs))))
    }

    /// Hidden states for one sequence, evaluated without dropout.
    pub fn states(&self, seq: &EncodedSeq) -> Result<BiLstmState> {
        let mut g = Graph::new(&self.params);
        let ((lf, rf), steps) = self.encode(&mut g, &[seq], true)?;
        let (ls, rs) = steps.expect("requested");
        let real: Vec<usize> = (0..seq.max_len()).filter(|&t| seq.attention_mask[t] == 1).collect();
        let stack = |vars: &[Var]| {
            let h = self.cfg.hidden_units;
            Matrix::from_shape_fn((real.len(), h), |(r, c)| g.value(vars[real[r]])[[0, c]])
        };
        Ok(BiLstmState {
            ltr: stack(&ls),
            rtl: stack(&rs),
            ltr_final: g.value(lf).row(0).to_vec(),
            rtl_final: g.value(rf).row(0).to_vec(),
        })
    }
}

impl Classifier for BiLstmClassifier {
    type Input = EncodedSeq;

    fn params(&self) -> &ParamSet {
        &self.params
    }

    fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    fn num_classes(&self) -> usize {
        self.cfg.num_classes
    }

    fn logits<'a>(&'a self, g: &mut Graph<'a>, batch: &[&EncodedSeq], rng: Option<&mut dyn RngCore>) -> Result<Var> {
        let ((lf, rf), _) = self.encode(g, batch, false)?;
        let pooled = g.concat_cols(&[lf, rf]);
        let pooled = dropout(g, pooled, self.cfg.dropout, rng);
        let w = g.param(self.out_w);
        let b = g.param(self.out_b);
        let z = g.matmul(pooled, w);
        Ok(g.add_row(z, b))
    }
}

/// Class probabilities (`batch × classes`) in evaluation mode.
pub fn bilstm_forward(model: &BiLstmClassifier, batch: &[EncodedSeq]) -> Result<Matrix> {
    let refs: Vec<&EncodedSeq> = batch.iter().collect();
    let mut g = Graph::new(model.params());
    let z = model.logits(&mut g, &refs, None)?;
    let p = g.softmax_rows(z);
    Ok(g.value(p).clone())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::finite_difference_grad;

    fn seq(ids: &[usize], max_len: usize) -> EncodedSeq {
        let mut indices = vec![0; max_len];
        let mut attention_mask = vec![0; max_len];
        for (i, &x) in ids.iter().enumerate() {
            indices[i] = x;
            attention_mask[i] = 1;
        }
        EncodedSeq {
            indices,
            attention_mask,
            vocab_id: "t".into(),
        }
    }

    fn tiny(seed: u64) -> BiLstmClassifier {
        let cfg = BiLstmConfig {
            vocab_size: 6,
            embed_dim: 4,
            hidden_units: 3,
            num_classes: 3,
            dropout: 0.1,
            train_embeddings: true,
        };
        BiLstmClassifier::new(cfg, seed).unwrap()
    }

    fn sigmoid(x: f64) -> f64 {
        1.0 / (1.0 + (-x).exp())
    }

    /// Scalar-loop LSTM over the given tokens.
    fn scalar_lstm(p: &ParamSet, prefix: &str, emb: &Matrix, tokens: &[usize]) -> Vec<Vec<f64>> {
        let w = p.get(p.id(&format!("{prefix}.w")).unwrap());
        let u = p.get(p.id(&format!("{prefix}.u")).unwrap());
        let b = p.get(p.id(&format!("{prefix}.b")).unwrap());
        let h_dim = u.nrows();
        let (mut h, mut c) = (vec![0.0; h_dim], vec![0.0; h_dim]);
        let mut out = Vec::new();
        for &tok in tokens {
            let mut z = vec![0.0; 4 * h_dim];
            for (j, zj) in z.iter_mut().enumerate() {
                *zj = b[[0, j]];
                for k in 0..emb.ncols() {
                    *zj += emb[[tok, k]] * w[[k, j]];
                }
                for k in 0..h_dim {
                    *zj += h[k] * u[[k, j]];
                }
            }
            for k in 0..h_dim {
                let i = sigmoid(z[k]);
                let f = sigmoid(z[h_dim + k]);
                let g = z[2 * h_dim + k].tanh();
                let o = sigmoid(z[3 * h_dim + k]);
                c[k] = f * c[k] + i * g;
                h[k] = o * c[k].tanh();
            }
            out.push(h.clone());
        }
        out
    }

    #[test]
    fn matches_scalar_loop_oracle() {
        let m = tiny(3);
        let p = m.params();
        let emb = p.get(p.id("embedding").unwrap()).clone();
        let toks = [2, 5, 1, 3];
        let s = m.states(&seq(&toks, 6)).unwrap();
        let ltr = scalar_lstm(p, "ltr", &emb, &toks);
        let rev: Vec<usize> = toks.iter().rev().copied().collect();
        let mut rtl = scalar_lstm(p, "rtl", &emb, &rev);
        rtl.reverse();
        for t in 0..toks.len() {
            for k in 0..3 {
                assert!((s.ltr[[t, k]] - ltr[t][k]).abs() < 1e-6);
                assert!((s.rtl[[t, k]] - rtl[t][k]).abs() < 1e-6);
            }
        }
        for k in 0..3 {
            assert!((s.ltr_final[k] - ltr[3][k]).abs() < 1e-12);
            assert!((s.rtl_final[k] - rtl[0][k]).abs() < 1e-12);
        }
        assert_eq!(s.contexts().dim(), (4, 6));

        let pooled = s.pooled();
        let ow = p.get(p.id("out.w").unwrap());
        let logits: Vec<f64> = (0..3).map(|c| (0..6).map(|k| pooled[k] * ow[[k, c]]).sum()).collect();
        let z: f64 = logits.iter().map(|l| l.exp()).sum();
        let probs = bilstm_forward(&m, &[seq(&toks, 6)]).unwrap();
        for c in 0..3 {
            assert!((probs[[0, c]] - logits[c].exp() / z).abs() < 1e-6);
        }
    }

    #[test]
    fn padding_does_not_change_output() {
        let m = tiny(1);
        let a = bilstm_forward(&m, &[seq(&[1, 2, 3], 3)]).unwrap();
        let b = bilstm_forward(&m, &[seq(&[1, 2, 3], 8)]).unwrap();
        for c in 0..3 {
            assert!((a[[0, c]] - b[[0, c]]).abs() < 1e-12);
        }
    }

    #[test]
    fn batch_rows_are_independent() {
        let m = tiny(2);
        let s1 = seq(&[1, 2, 3, 4], 5);
        let s2 = seq(&[5], 5);
        let both = bilstm_forward(&m, &[s1.clone(), s2.clone()]).unwrap();
        let one = bilstm_forward(&m, &[s2]).unwrap();
        let other = bilstm_forward(&m, &[s1]).unwrap();
        for c in 0..3 {
            assert!((both[[1, c]] - one[[0, c]]).abs() < 1e-12);
            assert!((both[[0, c]] - other[[0, c]]).abs() < 1e-12);
        }
    }

    #[test]
    fn zeroed_classifier_is_uniform() {
        let mut m = tiny(4);
        m.params_mut().assign("out.w", Matrix::zeros((6, 3))).unwrap();
        m.params_mut().assign("out.b", Matrix::zeros((1, 3))).unwrap();
        let p = bilstm_forward(&m, &[seq(&[1, 4, 2], 4)]).unwrap();
        for c in 0..3 {
            assert_eq!(p[[0, c]], 1.0 / 3.0);
        }
    }

    #[test]
    fn reversal_with_swapped_weights_swaps_finals() {
        let m = tiny(5);
        let mut swapped = m.clone();
        for part in ["w", "u", "b"] {
            let l = m.params().get(m.params().id(&format!("ltr.{part}")).unwrap()).clone();
            let r = m.params().get(m.params().id(&format!("rtl.{part}")).unwrap()).clone();
            swapped.params_mut().assign(&format!("ltr.{part}"), r).unwrap();
            swapped.params_mut().assign(&format!("rtl.{part}"), l).unwrap();
        }
        let a = m.states(&seq(&[1, 2, 3, 4], 4)).unwrap();
        let b = swapped.states(&seq(&[4, 3, 2, 1], 4)).unwrap();
        for k in 0..3 {
            assert!((a.ltr_final[k] - b.rtl_final[k]).abs() < 1e-12);
            assert!((a.rtl_final[k] - b.ltr_final[k]).abs() < 1e-12);
        }
    }

    #[test]
    fn out_of_vocab_index_is_rejected() {
        let m = tiny(0);
        let e = bilstm_forward(&m, &[seq(&[1, 9], 3)]);
        assert!(matches!(e, Err(Error::IndexOutOfVocab { index: 9, size: 6 })));
    }

    #[test]
    fn gradients_match_finite_differences() {
        let m = tiny(7);
        let batch = [seq(&[1, 2, 3, 4, 5], 5), seq(&[3, 1], 5)];
        let refs: Vec<&EncodedSeq> = batch.iter().collect();
        let targets = [2usize, 0];
        let loss_of = |p: &ParamSet| {
            let mut mm = m.clone();
            *mm.params_mut() = p.clone();
            let mut g = Graph::new(mm.params());
            let z = mm.logits(&mut g, &refs, None).unwrap();
            let l = g.cross_entropy(z, &targets);
            g.value(l)[[0, 0]]
        };
        let mut g = Graph::new(m.params());
        let z = m.logits(&mut g, &refs, None).unwrap();
        let l = g.cross_entropy(z, &targets);
        let grads = g.backward(l);
        for id in m.params().ids() {
            let analytic = grads.get(id).cloned().unwrap_or_else(|| Matrix::zeros(m.params().get(id).dim()));
            let numeric = finite_difference_grad(m.params(), id, 1e-5, loss_of);
            let diff = (&analytic - &numeric).mapv(|v| v * v).sum().sqrt();
            let scale = analytic.mapv(|v| v * v).sum().sqrt() + numeric.mapv(|v| v * v).sum().sqrt();
            assert!(
                diff <= 1e-4 * scale.max(1e-8),
                "{}: rel err {}",
                m.params().name(id),
                diff / scale
            );
        }
    }

    #[test]
    fn dropout_only_in_training() {
        let m = tiny(8);
        let s = seq(&[1, 2], 3);
        let a = bilstm_forward(&m, std::slice::from_ref(&s)).unwrap();
        let b = bilstm_forward(&m, std::slice::from_ref(&s)).unwrap();
        assert_eq!(a, b);
    }
}
