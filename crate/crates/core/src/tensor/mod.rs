//! Dense tensors with reverse-mode automatic differentiation.

mod array;
mod linalg;
mod ops;
mod var;

pub(crate) use array::split_axis;
pub use array::{Real, Tensor};
pub use var::{corrupt_adjoint, no_grad, Var};
