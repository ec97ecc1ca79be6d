//! Dense tensors, reverse-mode differentiation and the Adam optimizer.

mod adam;
pub mod kernels;
mod params;
mod real;
mod tape;
mod tensor;

pub use adam::{AdamConfig, AdamState};
pub use params::{ParamId, Parameter, ParameterStore};
pub use real::Real;
pub use tape::{Tape, Var};
pub use tensor::Tensor;
