//! Dense-tensor reverse-mode automatic differentiation.

mod check;
pub(crate) mod kernels;
mod tape;
mod tensor;

pub use check::{finite_diff_check, finite_diff_check_named, finite_diff_check_seeded};
pub use tape::{Bindings, Gradients, Tape, Var, LAYERNORM_EPS};
pub use tensor::Tensor;
