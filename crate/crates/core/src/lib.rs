//! Multimodal sentiment analysis through object-name textual cues.
//!
//! The pipeline turns every image–text pair into a single token sequence: the
//! cleaned caption (or superimposed text) followed by the names of the objects
//! detected in the image. Those sequences are then classified by a BiLSTM or a
//! transformer encoder, and the resulting experiments are compared with
//! standard classification metrics and a paired Wilcoxon signed-rank test.
//!
//! Modules follow the pipeline order:
//!
//! * [`corpus`] loads manifests, derives joint labels, filters and splits.
//! * [`detect`] runs detector adapters and caches their output as JSONL.
//! * [`tems`] cleans text and builds/encodes the fused token sequences.
//! * [`nn`] is the small reverse-mode autodiff tape the models train on.
//! * [`models`] holds the BiLSTM, encoder, image heads and training loop.
//! * [`eval`] computes metrics, significance tests, reports and plots.
//! * [`expctl`] wires everything into the four experiments.

pub mod corpus;
pub mod detect;
pub mod error;
pub mod eval;
pub mod expctl;
pub mod models;
pub mod nn;
pub mod synth;
pub mod tems;

pub use error::{Error, Result};
