use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{attention, glorot, AttentionScaling, Classifier, ClassifierHead, HeadConfig};
use crate::nn::{Graph, Matrix, ParamId, ParamSet, Var};
use crate::tems::EncodedSeq;
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub vocab_size: usize,
    pub max_positions: usize,
    pub model_dim: usize,
    pub heads: usize,
    pub ffn_dim: usize,
    pub layers: usize,
    pub scaling: AttentionScaling,
    pub layer_norm_eps: f64,
}

impl EncoderConfig {
    /// BERT-base geometry: 12 layers, 768 wide, 12 heads.
    pub fn bert_base(vocab_size: usize) -> Self {
        EncoderConfig {
            vocab_size,
            max_positions: 512,
            model_dim: 768,
            heads: 12,
            ffn_dim: 3072,
            layers: 12,
            scaling: AttentionScaling::Scaled,
            layer_norm_eps: 1e-12,
        }
    }

    /// A narrow two-layer encoder that trains from scratch on a CPU.
    pub fn small(vocab_size: usize) -> Self {
        EncoderConfig {
            vocab_size,
            max_positions: 128,
            model_dim: 64,
            heads: 4,
            ffn_dim: 128,
            layers: 2,
            scaling: AttentionScaling::Scaled,
            layer_norm_eps: 1e-12,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.vocab_size == 0 || self.max_positions == 0 || self.model_dim == 0 || self.ffn_dim == 0 {
            return Err(Error::InvalidArgument(format!("degenerate encoder config {self:?}")));
        }
        if self.heads == 0 || self.model_dim % self.heads != 0 {
            return Err(Error::InvalidArgument(format!(
                "model_dim {} not divisible into {} heads",
                self.model_dim, self.heads
            )));
        }
        Ok(())
    }
}

/// Weights of one post-LayerNorm encoder block. Projections are stored
/// input-major: `y = x·W + b`.
#[derive(Clone, Debug, PartialEq)]
pub struct BlockWeights {
    pub wq: Matrix,
    pub bq: Matrix,
    pub wk: Matrix,
    pub bk: Matrix,
    pub wv: Matrix,
    pub bv: Matrix,
    pub wo: Matrix,
    pub bo: Matrix,
    pub ln1_g: Matrix,
    pub ln1_b: Matrix,
    pub w1: Matrix,
    pub b1: Matrix,
    pub w2: Matrix,
    pub b2: Matrix,
    pub ln2_g: Matrix,
    pub ln2_b: Matrix,
}

const BLOCK_TENSORS: [&str; 16] = [
    "wq", "bq", "wk", "bk", "wv", "bv", "wo", "bo", "ln1_g", "ln1_b", "w1", "b1", "w2", "b2", "ln2_g", "ln2_b",
];

impl BlockWeights {
    fn tensors(&self) -> [&Matrix; 16] {
        [
            &self.wq, &self.bq, &self.wk, &self.bk, &self.wv, &self.bv, &self.wo, &self.bo, &self.ln1_g,
            &self.ln1_b, &self.w1, &self.b1, &self.w2, &self.b2, &self.ln2_g, &self.ln2_b,
        ]
    }

    fn random(d: usize, ffn: usize, rng: &mut dyn RngCore) -> Self {
        BlockWeights {
            wq: glorot(rng, d, d),
            bq: Matrix::zeros((1, d)),
            wk: glorot(rng, d, d),
            bk: Matrix::zeros((1, d)),
            wv: glorot(rng, d, d),
            bv: Matrix::zeros((1, d)),
            wo: glorot(rng, d, d),
            bo: Matrix::zeros((1, d)),
            ln1_g: Matrix::ones((1, d)),
            ln1_b: Matrix::zeros((1, d)),
            w1: glorot(rng, d, ffn),
            b1: Matrix::zeros((1, ffn)),
            w2: glorot(rng, ffn, d),
            b2: Matrix::zeros((1, d)),
            ln2_g: Matrix::ones((1, d)),
            ln2_b: Matrix::zeros((1, d)),
        }
    }

    fn check(&self, d: usize) -> Result<()> {
        let ffn = self.w1.ncols();
        let expected = [
            (d, d),
            (1, d),
            (d, d),
            (1, d),
            (d, d),
            (1, d),
            (d, d),
            (1, d),
            (1, d),
            (1, d),
            (d, ffn),
            (1, ffn),
            (ffn, d),
            (1, d),
            (1, d),
            (1, d),
        ];
        for ((name, t), want) in BLOCK_TENSORS.iter().zip(self.tensors()).zip(expected) {
            if t.dim() != want {
                return Err(Error::Shape(format!("block tensor {name} is {:?}, expected {want:?}", t.dim())));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug)]
struct BlockIds([ParamId; 16]);

impl BlockIds {
    fn register(params: &mut ParamSet, prefix: &str, w: &BlockWeights) -> Self {
        let mut ids = [ParamId(0); 16];
        for (i, (name, t)) in BLOCK_TENSORS.iter().zip(w.tensors()).enumerate() {
            ids[i] = params.add(format!("{prefix}.{name}"), t.clone());
        }
        BlockIds(ids)
    }
}

fn block_forward(
    g: &mut Graph<'_>,
    x: Var,
    ids: &BlockIds,
    heads: usize,
    scaling: AttentionScaling,
    eps: f64,
) -> Var {
    let p: Vec<Var> = ids.0.iter().map(|&id| g.param(id)).collect();
    let [wq, bq, wk, bk, wv, bv, wo, bo, ln1_g, ln1_b, w1, b1, w2, b2, ln2_g, ln2_b] = p[..] else {
        unreachable!()
    };
    let mut proj = |w, b| {
        let y = g.matmul(x, w);
        g.add_row(y, b)
    };
    let q = proj(wq, bq);
    let k = proj(wk, bk);
    let v = proj(wv, bv);
    let d = g.shape(x).1;
    let dh = d / heads;
    let mut outs = Vec::with_capacity(heads);
    for h in 0..heads {
        let qh = g.slice_cols(q, h * dh, (h + 1) * dh);
        let kh = g.slice_cols(k, h * dh, (h + 1) * dh);
        let vh = g.slice_cols(v, h * dh, (h + 1) * dh);
        outs.push(attention(g, qh, kh, vh, scaling).1);
    }
    let heads_cat = if heads == 1 { outs[0] } else { g.concat_cols(&outs) };
    let mha = g.matmul(heads_cat, wo);
    let mha = g.add_row(mha, bo);
    let r1 = g.add(x, mha);
    let y = g.layer_norm(r1, ln1_g, ln1_b, eps);
    let f = g.matmul(y, w1);
    let f = g.add_row(f, b1);
    let f = g.gelu(f);
    let f = g.matmul(f, w2);
    let f = g.add_row(f, b2);
    let r2 = g.add(y, f);
    g.layer_norm(r2, ln2_g, ln2_b, eps)
}

/// One encoder block on a `T × d` input:
/// `y = LN(x + MHA(x))`, `out = LN(y + FFN(y))` with an erf-GELU FFN.
pub fn encoder_block(
    input: &Matrix,
    weights: &BlockWeights,
    heads: usize,
    scaling: AttentionScaling,
    eps: f64,
) -> Result<Matrix> {
    let d = input.ncols();
    if heads == 0 || d % heads != 0 {
        return Err(Error::Shape(format!("width {d} not divisible into {heads} heads")));
    }
    if input.nrows() == 0 {
        return Err(Error::Shape("encoder block over zero tokens".into()));
    }
    weights.check(d)?;
    let mut params = ParamSet::new();
    let ids = BlockIds::register(&mut params, "block", weights);
    let mut g = Graph::new(&params);
    let x = g.input(input.clone());
    let y = block_forward(&mut g, x, &ids, heads, scaling, eps);
    Ok(g.value(y).clone())
}

/// Token states and a fixed-size summary of one sequence.
#[derive(Clone, Copy, Debug)]
pub struct EncoderOutput {
    pub token_states: Var,
    pub pooled: Var,
}

/// A text encoder whose parameters live inside the caller's [`ParamSet`].
pub trait TextEncoder {
    fn hidden_dim(&self) -> usize;
    /// Encodes the real (unpadded) token ids of one sequence.
    fn encode(&self, g: &mut Graph<'_>, ids: &[usize]) -> Result<EncoderOutput>;
}

/// Token + position embeddings, LayerNorm, a stack of encoder blocks and
/// masked-mean pooling.
#[derive(Clone, Debug)]
pub struct TransformerEncoder {
    cfg: EncoderConfig,
    tok: ParamId,
    pos: ParamId,
    emb_ln: (ParamId, ParamId),
    blocks: Vec<BlockIds>,
}

impl TransformerEncoder {
    pub fn register(params: &mut ParamSet, prefix: &str, cfg: EncoderConfig, rng: &mut dyn RngCore) -> Result<Self> {
        cfg.validate()?;
        let d = cfg.model_dim;
        let mut normal = |r, c| Matrix::from_shape_fn((r, c), |_| rng.random_range(-0.03..0.03));
        let tok = params.add(format!("{prefix}.tok"), normal(cfg.vocab_size, d));
        let pos = params.add(format!("{prefix}.pos"), normal(cfg.max_positions, d));
        let emb_ln = (
            params.add(format!("{prefix}.emb_ln_g"), Matrix::ones((1, d))),
            params.add(format!("{prefix}.emb_ln_b"), Matrix::zeros((1, d))),
        );
        let blocks = (0..cfg.layers)
            .map(|l| {
                let w = BlockWeights::random(d, cfg.ffn_dim, rng);
                BlockIds::register(params, &format!("{prefix}.layer{l}"), &w)
            })
            .collect();
        Ok(TransformerEncoder {
            cfg,
            tok,
            pos,
            emb_ln,
            blocks,
        })
    }

    pub fn config(&self) -> &EncoderConfig {
        &self.cfg
    }
}

impl TextEncoder for TransformerEncoder {
    fn hidden_dim(&self) -> usize {
        self.cfg.model_dim
    }

    fn encode(&self, g: &mut Graph<'_>, ids: &[usize]) -> Result<EncoderOutput> {
        // An empty sequence is encoded as a single padding token.
        let ids: &[usize] = if ids.is_empty() { &[0] } else { ids };
        if ids.len() > self.cfg.max_positions {
            return Err(Error::Shape(format!(
                "{} tokens exceed {} positions",
                ids.len(),
                self.cfg.max_positions
            )));
        }
        if let Some(&bad) = ids.iter().find(|&&i| i >= self.cfg.vocab_size) {
            return Err(Error::IndexOutOfVocab {
                index: bad,
                size: self.cfg.vocab_size,
            });
        }
        let tok = g.param(self.tok);
        let pos = g.param(self.pos);
        let t = g.gather(tok, ids);
        let positions: Vec<usize> = (0..ids.len()).collect();
        let p = g.gather(pos, &positions);
        let x = g.add(t, p);
        let lg = g.param(self.emb_ln.0);
        let lb = g.param(self.emb_ln.1);
        let mut x = g.layer_norm(x, lg, lb, self.cfg.layer_norm_eps);
        for b in &self.blocks {
            x = block_forward(g, x, b, self.cfg.heads, self.cfg.scaling, self.cfg.layer_norm_eps);
        }
        let pooled = g.mean_rows(x);
        Ok(EncoderOutput {
            token_states: x,
            pooled,
        })
    }
}

/// Transformer encoder followed by a dense classification head.
#[derive(Clone, Debug)]
pub struct EncoderClassifier {
    params: ParamSet,
    encoder: TransformerEncoder,
    head: ClassifierHead,
}

impl EncoderClassifier {
    pub fn new(cfg: EncoderConfig, head: HeadConfig, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamSet::new();
        let encoder = TransformerEncoder::register(&mut params, "encoder", cfg, &mut rng)?;
        let head = ClassifierHead::register(&mut params, "head", encoder.hidden_dim(), head, &mut rng)?;
        Ok(EncoderClassifier { params, encoder, head })
    }

    pub fn encoder(&self) -> &TransformerEncoder {
        &self.encoder
    }

    pub fn head(&self) -> &ClassifierHead {
        &self.head
    }

    /// Pooled representation of one sequence, without dropout.
    pub fn pooled(&self, seq: &EncodedSeq) -> Result<Vec<f64>> {
        let mut g = Graph::new(&self.params);
        let out = self.encoder.encode(&mut g, &real_ids(seq))?;
        Ok(g.value(out.pooled).row(0).to_vec())
    }
}

fn real_ids(seq: &EncodedSeq) -> Vec<usize> {
    seq.indices
        .iter()
        .zip(&seq.attention_mask)
        .filter(|(_, &m)| m == 1)
        .map(|(&i, _)| i)
        .collect()
}

impl Classifier for EncoderClassifier {
    type Input = EncodedSeq;

    fn params(&self) -> &ParamSet {
        &self.params
    }

    fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    fn num_classes(&self) -> usize {
        self.head.config().num_classes
    }

    fn logits<'a>(&'a self, g: &mut Graph<'a>, batch: &[&EncodedSeq], rng: Option<&mut dyn RngCore>) -> Result<Var> {
        if batch.is_empty() {
            return Err(Error::Shape("empty batch".into()));
        }
        let pooled = batch
            .iter()
            .map(|s| Ok(self.encoder.encode(g, &real_ids(s))?.pooled))
            .collect::<Result<Vec<_>>>()?;
        let x = if pooled.len() == 1 { pooled[0] } else { g.concat_rows(&pooled) };
        self.head.forward(g, x, rng)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::finite_difference_grad;
    use serde_json::Value;

    fn mat(v: &Value) -> Matrix {
        let rows: Vec<Vec<f64>> = serde_json::from_value(v.clone()).unwrap();
        Matrix::from_shape_fn((rows.len(), rows[0].len()), |(r, c)| rows[r][c])
    }

    fn layer_norm_plain(x: &Matrix, eps: f64) -> Matrix {
        let mut out = x.clone();
        for mut row in out.rows_mut() {
            let n = row.len() as f64;
            let mean = row.sum() / n;
            let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
            row.mapv_inplace(|v| (v - mean) / (var + eps).sqrt());
        }
        out
    }

    #[test]
    fn matches_frozen_torch_layer() {
        let j: Value = serde_json::from_str(include_str!("testdata/torch_encoder_layer.json")).unwrap();
        let w = BlockWeights {
            wq: mat(&j["wq"]),
            bq: mat(&j["bq"]),
            wk: mat(&j["wk"]),
            bk: mat(&j["bk"]),
            wv: mat(&j["wv"]),
            bv: mat(&j["bv"]),
            wo: mat(&j["wo"]),
            bo: mat(&j["bo"]),
            ln1_g: mat(&j["ln1_g"]),
            ln1_b: mat(&j["ln1_b"]),
            w1: mat(&j["w1"]),
            b1: mat(&j["b1"]),
            w2: mat(&j["w2"]),
            b2: mat(&j["b2"]),
            ln2_g: mat(&j["ln2_g"]),
            ln2_b: mat(&j["ln2_b"]),
        };
        let heads = j["heads"].as_u64().unwrap() as usize;
        let eps = j["eps"].as_f64().unwrap();
        let out = encoder_block(&mat(&j["input"]), &w, heads, AttentionScaling::Scaled, eps).unwrap();
        let expect = mat(&j["output"]);
        let err = (&out - &expect).mapv(f64::abs).fold(0.0f64, |a, &b| a.max(b));
        assert!(err < 1e-9, "max abs error {err}");
    }

    #[test]
    fn zero_weights_reduce_to_double_layer_norm() {
        let (t, d, ffn) = (3, 4, 6);
        let z = |r, c| Matrix::zeros((r, c));
        let w = BlockWeights {
            wq: z(d, d),
            bq: z(1, d),
            wk: z(d, d),
            bk: z(1, d),
            wv: z(d, d),
            bv: z(1, d),
            wo: z(d, d),
            bo: z(1, d),
            ln1_g: Matrix::ones((1, d)),
            ln1_b: z(1, d),
            w1: z(d, ffn),
            b1: z(1, ffn),
            w2: z(ffn, d),
            b2: z(1, d),
            ln2_g: Matrix::ones((1, d)),
            ln2_b: z(1, d),
        };
        let x = Matrix::from_shape_fn((t, d), |(r, c)| (r * 7 + c * 3) as f64 * 0.37 - 1.0);
        for scaling in [AttentionScaling::Unscaled, AttentionScaling::Scaled] {
            let out = encoder_block(&x, &w, 2, scaling, 1e-5).unwrap();
            let expect = layer_norm_plain(&layer_norm_plain(&x, 1e-5), 1e-5);
            assert!((&out - &expect).mapv(f64::abs).iter().all(|&e| e < 1e-12));
        }
    }

    #[test]
    fn rejects_bad_head_count() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let w = BlockWeights::random(6, 4, &mut rng);
        assert!(encoder_block(&Matrix::zeros((2, 6)), &w, 4, AttentionScaling::Scaled, 1e-5).is_err());
        assert!(EncoderConfig {
            heads: 5,
            ..EncoderConfig::small(10)
        }
        .validate()
        .is_err());
    }

    fn tiny() -> EncoderClassifier {
        let cfg = EncoderConfig {
            vocab_size: 7,
            max_positions: 6,
            model_dim: 4,
            heads: 2,
            ffn_dim: 5,
            layers: 1,
            scaling: AttentionScaling::Scaled,
            layer_norm_eps: 1e-5,
        };
        let head = HeadConfig {
            hidden: 5,
            ..HeadConfig::default()
        };
        EncoderClassifier::new(cfg, head, 9).unwrap()
    }

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

    #[test]
    fn padding_is_ignored() {
        let m = tiny();
        assert_eq!(m.pooled(&seq(&[1, 2], 2)).unwrap(), m.pooled(&seq(&[1, 2], 6)).unwrap());
        assert!(matches!(m.pooled(&seq(&[1, 20], 3)), Err(Error::IndexOutOfVocab { .. })));
    }

    #[test]
    fn gradients_match_finite_differences() {
        let m = tiny();
        let batch = [seq(&[1, 2, 3], 4), seq(&[4, 6, 5, 1], 4)];
        let refs: Vec<&EncodedSeq> = batch.iter().collect();
        let targets = [1usize, 2];
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
            assert!(diff <= 1e-4 * scale.max(1e-8), "{}: {}", m.params().name(id), diff / scale);
        }
    }
}
