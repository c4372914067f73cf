//! Dense `f64` arrays with reverse-mode differentiation, an optimizer and a
//! finite-difference gradient checker.

mod gradcheck;
mod optim;
mod params;
mod tape;
mod tensor;

pub use gradcheck::finite_difference_check;
pub use optim::{Optimizer, OptimizerMode};
pub use params::{ParamSet, Parameter};
pub use tape::{Tape, Var};
pub use tensor::Tensor;
