use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{argmax, Classifier};
use crate::nn::{Adam, AdamConfig, Graph, Matrix};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    /// Drives the per-epoch shuffle.
    pub seed: u64,
    /// Drives dropout and augmentation; derived from `seed` when absent.
    #[serde(default)]
    pub noise_seed: Option<u64>,
}

impl TrainConfig {
    pub fn new(learning_rate: f64, seed: u64) -> Self {
        TrainConfig {
            learning_rate,
            batch_size: 32,
            epochs: 10,
            seed,
            noise_seed: None,
        }
    }

    pub fn bilstm(seed: u64) -> Self {
        Self::new(1e-2, seed)
    }

    pub fn encoder(seed: u64) -> Self {
        Self::new(6e-6, seed)
    }

    pub fn image(seed: u64) -> Self {
        Self::new(8e-4, seed)
    }

    /// A zero learning rate is accepted (it freezes the model) but a
    /// negative or non-finite one is not.
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return Err(Error::InvalidArgument(format!("learning rate {}", self.learning_rate)));
        }
        if self.batch_size == 0 || self.epochs == 0 {
            return Err(Error::InvalidArgument("batch size and epochs must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub loss: f64,
    pub accuracy: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct History {
    pub epochs: Vec<EpochStats>,
}

impl History {
    pub fn last(&self) -> Option<&EpochStats> {
        self.epochs.last()
    }
}

const DROPOUT_STREAM: u64 = 0x6a09_e667_f3bc_c908;

/// Adam on mean cross-entropy with a fresh shuffle each epoch.
pub fn train<M: Classifier>(model: &mut M, inputs: &[M::Input], labels: &[usize], cfg: &TrainConfig) -> Result<History> {
    cfg.validate()?;
    if inputs.is_empty() {
        return Err(Error::InvalidArgument("empty training set".into()));
    }
    if inputs.len() != labels.len() {
        return Err(Error::InvalidArgument(format!(
            "{} inputs but {} labels",
            inputs.len(),
            labels.len()
        )));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= model.num_classes()) {
        return Err(Error::InvalidArgument(format!("label index {bad} out of range")));
    }
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut noise_rng = ChaCha8Rng::seed_from_u64(cfg.noise_seed.unwrap_or(cfg.seed ^ DROPOUT_STREAM));
    let mut adam = Adam::new(AdamConfig::with_lr(cfg.learning_rate));
    let mut order: Vec<usize> = (0..inputs.len()).collect();
    let mut history = History::default();
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut shuffle_rng);
        let (mut loss_sum, mut correct) = (0.0, 0usize);
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<&M::Input> = chunk.iter().map(|&i| &inputs[i]).collect();
            let targets: Vec<usize> = chunk.iter().map(|&i| labels[i]).collect();
            let grads = {
                let mut g = Graph::new(model.params());
                let z = model.logits(&mut g, &batch, Some(&mut noise_rng))?;
                for (r, &t) in targets.iter().enumerate() {
                    if argmax(g.value(z).row(r).as_slice().expect("row-major")) == t {
                        correct += 1;
                    }
                }
                let l = g.cross_entropy(z, &targets);
                loss_sum += g.value(l)[[0, 0]] * chunk.len() as f64;
                g.backward(l)
            };
            if cfg.learning_rate > 0.0 {
                adam.step(model.params_mut(), &grads);
            }
        }
        let stats = EpochStats {
            epoch,
            loss: loss_sum / inputs.len() as f64,
            accuracy: correct as f64 / inputs.len() as f64,
        };
        log::info!("epoch {epoch}: loss {:.4} acc {:.4}", stats.loss, stats.accuracy);
        history.epochs.push(stats);
    }
    Ok(history)
}

/// Class probabilities in evaluation mode.
pub fn predict_proba<M: Classifier>(model: &M, inputs: &[M::Input], batch_size: usize) -> Result<Matrix> {
    let batch_size = batch_size.max(1);
    let mut out = Matrix::zeros((inputs.len(), model.num_classes()));
    for (b, chunk) in inputs.chunks(batch_size).enumerate() {
        let refs: Vec<&M::Input> = chunk.iter().collect();
        let mut g = Graph::new(model.params());
        let z = model.logits(&mut g, &refs, None)?;
        let p = g.softmax_rows(z);
        out.slice_mut(ndarray::s![b * batch_size..b * batch_size + chunk.len(), ..])
            .assign(g.value(p));
    }
    Ok(out)
}

/// Argmax class per input; ties resolve to the lowest class index.
pub fn predict<M: Classifier>(model: &M, inputs: &[M::Input], batch_size: usize) -> Result<Vec<usize>> {
    let p = predict_proba(model, inputs, batch_size)?;
    Ok(p.rows().into_iter().map(|r| argmax(&r.to_vec())).collect())
}
