//! Dense matrices and tape-based reverse-mode differentiation.

mod matrix;
mod tape;

pub use matrix::{ElementwiseOp, Matrix};
pub use tape::{Activation, Gradients, Tape, Var};
