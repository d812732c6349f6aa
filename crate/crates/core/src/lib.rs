//! Hyperspectral leaf-cube pipeline for soybean sudden-death-syndrome
//! screening: cube I/O, calibration and binning, genetic band selection with
//! a CNN fitness model, ten classical classifiers on CNN features, and
//! stratified cross-validation.
//!
//! Numeric code is generic over [`Scalar`]; the aliases below fix the
//! precision used in production (`f32`) and in verification (`f64`).

pub mod bandga;
pub mod classifiers;
pub mod cnn;
pub mod cube;
pub mod dataset;
pub mod eval;
pub mod hsio;
pub mod preprocess;
pub mod scalar;
pub mod seed;
pub mod synth;

pub use cube::{HyperCube, Label, LabeledSample, Stage};
pub use scalar::Scalar;

/// Single-precision cube, the storage format of every container.
pub type Cube = HyperCube<f32>;
/// Double-precision cube for oracle comparisons.
pub type CubeF64 = HyperCube<f64>;
pub type Sample = LabeledSample<f32>;
pub type SampleF64 = LabeledSample<f64>;
/// Production CNN.
pub type Cnn = cnn::CnnModel<f32>;
/// CNN used for finite-difference gradient checks.
pub type CnnF64 = cnn::CnnModel<f64>;

/// Crate version, stamped into reports and exports.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
