//! Dense tensors, a reverse-mode tape over a fixed operation set, Adam, and
//! finite-difference gradient checking.

mod gradcheck;
mod optim;
mod params;
mod real;
mod tape;
mod tensor;

pub use gradcheck::finite_difference_check;
pub use optim::{adam_update, AdamConfig, OptimizerState};
pub use params::{Bound, ParameterSet};
pub use real::Real;
pub use tape::{Activation, Gradients, Tape, Var};
pub use tensor::Tensor;
