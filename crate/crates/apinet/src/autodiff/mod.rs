//! Dense-tensor reverse-mode automatic differentiation.
//!
//! [`tensor`] holds the plain forward math; [`tape`] records computations
//! and replays them backwards; [`gradcheck`] validates tapes against
//! central finite differences.

pub mod gradcheck;
pub mod tape;
pub mod tensor;

pub use gradcheck::{grad_check, GradCheckReport};
pub use tape::{GradMap, NodeId, ParamId, Tape};
pub use tensor::Tensor;
