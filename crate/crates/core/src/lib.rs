//! Weakly supervised multimodal temporal localization.
//!
//! A clip-level classifier over audio and visual feature sequences pools each
//! modality with softmax attention and fuses them through a learned gate. The
//! attention and gate weights are then read back to place a single event
//! interval inside each positive segment.

pub mod cli;
pub mod datamodel;
pub mod error;
pub mod evaluator;
pub mod localizer;
pub mod model;
pub mod numerics;
pub mod synthgen;
pub mod trainer;

pub use error::{Error, Result};
pub use numerics::{Matrix, Scalar, Tape};

pub type Matrix32 = Matrix<f32>;
pub type Matrix64 = Matrix<f64>;
/// Parameters as trained and checkpointed.
pub type Params = model::ModelParams<f32>;
/// Parameters in gradient-check precision.
pub type Params64 = model::ModelParams<f64>;
