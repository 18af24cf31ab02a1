//! Hyperspectral pansharpening toolkit: a small reverse-mode tensor engine,
//! the fusion network built on it, Wald-protocol data preparation, quality
//! metrics, training and a command-line front end.

// Negated float comparisons are used on purpose so NaN lands on the
// rejecting branch.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod attention;
pub mod cli;
pub mod error;
pub mod gradcheck;
pub mod image_ops;
pub mod metrics;
pub mod model;
pub mod mvfn;
pub mod nn;
pub mod tensor;
pub mod training;
pub mod wald;

pub use error::{Error, Result};
pub use tensor::{Real, Tensor, Var};
