//! Differentiable computation: parameter tensors, a per-example tape,
//! Adam, and a finite-difference gradient checker.

mod adam;
mod gradcheck;
mod layers;
mod params;
mod tape;

pub use adam::{adam_step, OptimizerConfig};
pub use gradcheck::{analytic_gradients, check_against, grad_check, relative_error, GradCheckReport, MAX_CHECKED_ENTRIES};
pub use layers::Affine;
pub use params::{ParamId, ParamStore, ParamTensor};
pub use tape::{bce, fm_second_order, sigmoid, window_mean, Mode, NodeId, Tape, BCE_EPS};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum NumericsError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("fm interaction needs at least 2 fields, got {0}")]
    TooFewFields(usize),
    #[error("backward called twice without a new forward pass")]
    BackwardTwice,
    #[error("backward called on an empty tape")]
    EmptyTape,
    #[error("non-finite {what} in parameter `{param}`")]
    NonFinite { what: &'static str, param: String },
    #[error("invalid optimizer config: {0}")]
    Config(String),
}
