//! Lightweight CNN used both as the band-selection fitness model and as the
//! frozen 64-dimensional feature extractor for the classical classifiers.
//!
//! Everything is written against [`Scalar`](crate::scalar::Scalar): training
//! runs in `f32`, finite-difference verification in `f64`.

mod gradcheck;
mod io;
mod model;
mod train;

use thiserror::Error;

pub use gradcheck::{gradient_check, GradientCheck};
pub use io::{read_cnn1, write_cnn1, CNN1_MAGIC};
pub use model::{CnnModel, InputShape, Prediction};
pub use train::{extract_features, stratified_split, train, train_on_split, EpochStats, TrainConfig, TrainHistory, TrainOutcome};

/// Convolution filters in the single conv block.
pub const FILTERS: usize = 32;
/// Square convolution kernel size.
pub const KERNEL: usize = 3;
/// Units in the dense feature layer.
pub const HIDDEN: usize = 64;
/// Output classes, ordered (H, I).
pub const OUTPUTS: usize = 2;

#[derive(Debug, Error, PartialEq)]
pub enum CnnError {
    #[error("input of length {got_len} does not match model input {expected:?}")]
    ShapeMismatch { expected: InputShape, got_len: usize },
    #[error("sample dims {got:?} do not match {expected:?}")]
    DimsMismatch { expected: (usize, usize, usize), got: (usize, usize, usize) },
    #[error("input {rows}x{cols}x{channels} is too small for conv+pool")]
    BadShape { rows: usize, cols: usize, channels: usize },
    #[error("degenerate dataset: {0}")]
    DegenerateDataset(String),
    #[error("loss diverged at epoch {epoch} (train {train_loss}, val {val_loss})")]
    NonFiniteLoss { epoch: usize, train_loss: f64, val_loss: f64 },
    #[error("invalid training configuration: {0}")]
    BadConfig(String),
    #[error("invalid CNN1 blob: {0}")]
    Format(String),
}
