//! Desk-scale compression simulator.
//!
//! Trains a small MLP on Gaussian blobs, applies pruning, quantization,
//! restoration, calibration and fine-tuning, and writes the resulting
//! experiment tree as fixture files the workbench can load.

pub mod data;
pub mod eval;
pub mod net;
pub mod ops;
pub mod scenario;

use thiserror::Error;

pub use data::{DataConfig, SynthDataset};
pub use net::{train_mlp, DenseNet, TrainConfig};
pub use ops::SimOperation;
pub use scenario::{emit_fixtures, run_scenario, Scenario, ScenarioRun};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("DimensionMismatch: {0}")]
    DimensionMismatch(String),
    #[error("InvalidParameter: {0}")]
    InvalidParameter(String),
    #[error("UnknownPath: {0}")]
    UnknownPath(String),
    #[error("ShapeMismatch: {0}")]
    ShapeMismatch(String),
    #[error("IoError: {0}")]
    Io(String),
}
