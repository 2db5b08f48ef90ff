//! Dense tensors and a reverse-mode tape covering every differentiable
//! operation the captioning model uses.

mod backward;
pub mod gradcheck;
mod ops;
mod param;
mod real;
pub mod suite;
mod tape;
mod tensor;

pub use gradcheck::{finite_diff_check, rel_error, GradCheck};
pub use ops::{RunningStats, BN_EPS, BN_MOMENTUM, LN_EPS};
pub use param::{ParamId, ParamStore, Parameter};
pub use real::Real;
pub use tape::{AttnMask, OpKind, Tape, Var};
pub use tensor::Tensor;
