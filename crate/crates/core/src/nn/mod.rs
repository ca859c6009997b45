//! Minimal differentiable tensor machinery backing the codec and probe models.

pub mod conv;
mod params;
mod tape;
mod tensor;

pub use params::{Binding, ParamSet};
pub use tape::{Gradients, Tape, Var};
pub use tensor::Tensor;
