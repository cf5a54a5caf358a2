//! Attentive pairwise interaction networks on a desk-scale budget.
//!
//! This crate trains a small classifier that looks at *pairs* of inputs:
//! each pair produces a mutual vector, per-input gates, and four gated
//! feature views (two per input), which share one linear classifier. The
//! objective couples cross-entropy over all views with a score-ranking
//! hinge that pushes each input's own-view score above its other-view
//! score. At inference the pairwise machinery unloads: single inputs pass
//! through encoder and classifier alone.
//!
//! Everything is self-contained: dense `f64` tensors, a Wengert tape for
//! gradients, seeded synthetic data, an SGD trainer, and an evaluation /
//! ablation bench. See the `examples/` directory for end-to-end usage.

pub mod autodiff;
pub mod commands;
pub mod config;
pub mod data;
pub mod error;
pub mod eval;
pub mod loss;
pub mod model;
pub mod oracle;
pub mod pairing;
pub mod params_io;
pub mod train;

pub use autodiff::{GradMap, ParamId, Tape, Tensor};
pub use error::{Error, Result};
