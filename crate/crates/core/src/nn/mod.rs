//! Minimal reverse-mode automatic differentiation over `f64` matrices.
//!
//! A [`Graph`] records operations on 2-D arrays while the forward pass runs;
//! [`Graph::backward`] then walks the tape in reverse and returns gradients
//! for every trainable parameter of the borrowed [`ParamSet`]. Everything is
//! a matrix: vectors are `1 × n` rows and batches stack samples as rows.

mod adam;
mod graph;
mod params;

pub use adam::{Adam, AdamConfig};
pub use graph::{gelu, Graph, Var};
pub use params::{finite_difference_grad, Gradients, ParamId, ParamSet};

pub type Matrix = ndarray::Array2<f64>;
