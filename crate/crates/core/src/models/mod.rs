//! Sentiment classifiers and their training loop.
//!
//! Text models consume [`EncodedSeq`](crate::tems::EncodedSeq) batches; the
//! image model consumes 224×224 RGB images through a frozen backbone. All
//! models expose the same [`Classifier`] interface so one training loop and
//! one prediction routine serve every experiment.

mod attention;
mod bilstm;
mod checkpoint;
mod encoder;
mod head;
mod image;
mod train;

use rand::{Rng, RngCore};

use crate::nn::{Graph, Matrix, ParamSet, Var};
use crate::Result;

pub use attention::{attention, self_attention, AttentionScaling, AttentionTensors};
pub use bilstm::{bilstm_forward, BiLstmClassifier, BiLstmConfig, BiLstmState};
pub use checkpoint::{load_params, load_params_matching, save_params, TensorEntry};
pub use encoder::{
    encoder_block, BlockWeights, EncoderClassifier, EncoderConfig, EncoderOutput, TextEncoder, TransformerEncoder,
};
pub use head::{classify_head, Activation, ClassifierHead, HeadConfig, HeadWeights};
pub use image::{
    apply_augmentation, image_augment, image_forward, resize_for_backbone, Augmentation, Backbone, BackboneKind,
    FeatureTableBackbone, ImageClassifier, ImageExample, ProjectionBackbone, IMAGE_SIDE,
};
pub use train::{predict, predict_proba, train, EpochStats, History, TrainConfig};

/// Number of sentiment classes.
pub const NUM_CLASSES: usize = 3;

/// A model that maps a batch of inputs to class logits.
pub trait Classifier {
    type Input;

    fn params(&self) -> &ParamSet;
    fn params_mut(&mut self) -> &mut ParamSet;
    fn num_classes(&self) -> usize;

    /// Logits (`batch × classes`). `rng` is `Some` in training mode, where it
    /// drives dropout and augmentation; `None` means evaluation.
    fn logits<'a>(
        &'a self,
        g: &mut Graph<'a>,
        batch: &[&Self::Input],
        rng: Option<&mut dyn RngCore>,
    ) -> Result<Var>;
}

/// Inverted dropout; identity when `rng` is `None` or `rate` is 0.
pub(crate) fn dropout(g: &mut Graph<'_>, x: Var, rate: f64, rng: Option<&mut dyn RngCore>) -> Var {
    match rng {
        Some(rng) if rate > 0.0 => {
            let keep = 1.0 - rate;
            let mask = Matrix::from_shape_fn(g.shape(x), |_| {
                if rng.random::<f64>() < keep {
                    1.0 / keep
                } else {
                    0.0
                }
            });
            g.mul_const(x, mask)
        }
        _ => x,
    }
}

pub(crate) fn reborrow<'a>(rng: &'a mut Option<&mut dyn RngCore>) -> Option<&'a mut dyn RngCore> {
    match rng {
        Some(r) => Some(&mut **r),
        None => None,
    }
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = i;
        }
    }
    best
}

pub(crate) fn glorot(rng: &mut dyn RngCore, rows: usize, cols: usize) -> Matrix {
    let limit = (6.0 / (rows + cols) as f64).sqrt();
    Matrix::from_shape_fn((rows, cols), |_| rng.random_range(-limit..limit))
}
