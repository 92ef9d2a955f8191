//! Reverse-mode parameter gradients.
//!
//! Each stage has a hand-derived vector-Jacobian product in [`vjp`]; the
//! reverse pass over a retained forward trace lives in `backward`, and
//! [`check`] compares both against central finite differences.
//!
//! Unwrap offsets and gap locations are treated as locally constant
//! selections; gradients flow through interpolation weights but not through
//! those discrete choices.

mod backward;
pub mod check;
pub mod vjp;

use crate::config::FrontendParams;

/// Gradients w.r.t. every learnable parameter, shaped like [`FrontendParams`].
pub type ParamGrads = FrontendParams;

#[derive(Debug, Clone)]
pub struct Gradients {
    pub params: ParamGrads,
    /// Gradient w.r.t. the input samples.
    pub wave: Vec<f64>,
}

pub use check::{
    check_smooth, check_stage, check_stages, grad_check, probe_config, seeded_grad_check, GradCheckEntry, GradCheckReport,
    SeededGradCheck, Stage, StageCheck,
};
