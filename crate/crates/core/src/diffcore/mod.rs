//! Dense tensors, a reverse-mode tape, and the parameter store.

mod gradcheck;
mod params;
mod tape;
mod tensor;

pub use gradcheck::{grad_check, GradCheckReport, MAX_COORDS_PER_PARAM};
pub use params::{Param, ParamId, ParamStore};
pub use tape::{Gradients, Segments, Tape, Var};
pub use tensor::Tensor;

#[cfg(test)]
mod tests;
