//! Dense tensors, a reverse-mode tape over them, and a finite-difference
//! gradient verifier.

mod gradcheck;
mod tape;
mod tensor;

pub use gradcheck::{
    compare_gradients, grad_check, GradCheckOptions, GradCheckReport, GroupReport,
};
pub use tape::{sigmoid, Gradients, Tape, Var, LAYERNORM_EPS};
pub use tensor::Tensor;
