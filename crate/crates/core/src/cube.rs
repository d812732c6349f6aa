//! In-memory hyperspectral cube and labelled samples.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Scalar;

/// Processing stage of a cube. Stages only ever advance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Stage {
    Raw,
    Reflectance,
    Binned,
    Trimmed,
}

impl Stage {
    /// Best guess for a cube read from a file that carries no stage marker.
    pub fn infer_from_bands(bands: usize) -> Stage {
        match bands {
            crate::preprocess::TRIMMED_BANDS => Stage::Trimmed,
            crate::preprocess::BINNED_BANDS => Stage::Binned,
            _ => Stage::Reflectance,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Raw => "raw",
            Stage::Reflectance => "reflectance",
            Stage::Binned => "binned",
            Stage::Trimmed => "trimmed",
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum CubeError {
    #[error("cube dimension is zero ({rows}x{cols}x{bands})")]
    ZeroDimension { rows: usize, cols: usize, bands: usize },
    #[error("data length {got} does not match {rows}x{cols}x{bands}")]
    DataLength { rows: usize, cols: usize, bands: usize, got: usize },
    #[error("wavelength table has {got} entries for {bands} bands")]
    WavelengthLength { bands: usize, got: usize },
    #[error("wavelengths are not strictly increasing at band {index}")]
    NonMonotonicWavelengths { index: usize },
    #[error("cannot move cube from stage {from:?} back to {to:?}")]
    StageRegression { from: Stage, to: Stage },
}

/// A `rows x cols x bands` reflectance (or raw DN) cube.
///
/// Storage is band-sequential: element `(r, c, b)` lives at
/// `b * rows * cols + r * cols + c`.
#[derive(Debug, Clone, PartialEq)]
pub struct HyperCube<T = f32> {
    rows: usize,
    cols: usize,
    bands: usize,
    data: Vec<T>,
    wavelengths_nm: Option<Vec<f64>>,
    stage: Stage,
}

impl<T: Scalar> HyperCube<T> {
    pub fn new(
        rows: usize,
        cols: usize,
        bands: usize,
        data: Vec<T>,
        wavelengths_nm: Option<Vec<f64>>,
        stage: Stage,
    ) -> Result<Self, CubeError> {
        if rows == 0 || cols == 0 || bands == 0 {
            return Err(CubeError::ZeroDimension { rows, cols, bands });
        }
        let expected = rows
            .checked_mul(cols)
            .and_then(|v| v.checked_mul(bands))
            .ok_or(CubeError::DataLength { rows, cols, bands, got: data.len() })?;
        if data.len() != expected {
            return Err(CubeError::DataLength { rows, cols, bands, got: data.len() });
        }
        if let Some(wl) = &wavelengths_nm {
            validate_wavelengths(wl, bands)?;
        }
        Ok(HyperCube { rows, cols, bands, data, wavelengths_nm, stage })
    }

    /// Cube filled with a constant value.
    pub fn filled(rows: usize, cols: usize, bands: usize, value: T, stage: Stage) -> Result<Self, CubeError> {
        Self::new(rows, cols, bands, vec![value; rows * cols * bands], None, stage)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }
    pub fn cols(&self) -> usize {
        self.cols
    }
    pub fn bands(&self) -> usize {
        self.bands
    }
    pub fn dims(&self) -> (usize, usize, usize) {
        (self.rows, self.cols, self.bands)
    }
    pub fn stage(&self) -> Stage {
        self.stage
    }
    pub fn data(&self) -> &[T] {
        &self.data
    }
    pub fn into_data(self) -> Vec<T> {
        self.data
    }
    pub fn wavelengths_nm(&self) -> Option<&[f64]> {
        self.wavelengths_nm.as_deref()
    }
    pub fn pixels_per_band(&self) -> usize {
        self.rows * self.cols
    }

    #[inline]
    pub fn index(&self, row: usize, col: usize, band: usize) -> usize {
        band * self.rows * self.cols + row * self.cols + col
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize, band: usize) -> T {
        self.data[self.index(row, col, band)]
    }

    /// Row-major image of one band.
    pub fn band(&self, band: usize) -> &[T] {
        let n = self.pixels_per_band();
        &self.data[band * n..(band + 1) * n]
    }

    pub fn pixel_spectrum(&self, row: usize, col: usize) -> Vec<T> {
        (0..self.bands).map(|b| self.get(row, col, b)).collect()
    }

    /// Moves the cube forward to `stage`. Going backwards is an error.
    pub fn advance_stage(mut self, stage: Stage) -> Result<Self, CubeError> {
        if stage < self.stage {
            return Err(CubeError::StageRegression { from: self.stage, to: stage });
        }
        self.stage = stage;
        Ok(self)
    }

    /// Keeps only the listed bands (0-based), in the given order.
    pub fn select_bands(&self, bands: &[usize]) -> Option<HyperCube<T>> {
        if bands.iter().any(|&b| b >= self.bands) || bands.is_empty() {
            return None;
        }
        let n = self.pixels_per_band();
        let mut data = Vec::with_capacity(n * bands.len());
        for &b in bands {
            data.extend_from_slice(self.band(b));
        }
        // Arbitrary band picks need not be increasing, so the table is dropped.
        Some(HyperCube { rows: self.rows, cols: self.cols, bands: bands.len(), data, wavelengths_nm: None, stage: self.stage })
    }

    /// Converts the element type, e.g. to run an `f64` oracle on an `f32` cube.
    pub fn convert<U: Scalar>(&self) -> HyperCube<U> {
        HyperCube {
            rows: self.rows,
            cols: self.cols,
            bands: self.bands,
            data: self.data.iter().map(|&v| U::from_f64_lossy(v.widen())).collect(),
            wavelengths_nm: self.wavelengths_nm.clone(),
            stage: self.stage,
        }
    }

    pub(crate) fn from_parts_unchecked(
        rows: usize,
        cols: usize,
        bands: usize,
        data: Vec<T>,
        wavelengths_nm: Option<Vec<f64>>,
        stage: Stage,
    ) -> Self {
        debug_assert_eq!(data.len(), rows * cols * bands);
        HyperCube { rows, cols, bands, data, wavelengths_nm, stage }
    }
}

fn validate_wavelengths(wl: &[f64], bands: usize) -> Result<(), CubeError> {
    if wl.len() != bands {
        return Err(CubeError::WavelengthLength { bands, got: wl.len() });
    }
    for i in 1..wl.len() {
        // NaN also fails this comparison.
        if !(wl[i] > wl[i - 1]) {
            return Err(CubeError::NonMonotonicWavelengths { index: i });
        }
    }
    Ok(())
}

/// Binary leaf label. Index 0 is always healthy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Label {
    #[serde(rename = "H")]
    Healthy,
    #[serde(rename = "I")]
    Infected,
}

impl Label {
    pub const ALL: [Label; 2] = [Label::Healthy, Label::Infected];

    pub fn index(self) -> usize {
        match self {
            Label::Healthy => 0,
            Label::Infected => 1,
        }
    }

    pub fn from_index(i: usize) -> Label {
        if i == 0 {
            Label::Healthy
        } else {
            Label::Infected
        }
    }

    pub fn short(self) -> &'static str {
        match self {
            Label::Healthy => "H",
            Label::Infected => "I",
        }
    }

    /// Human-readable verdict text.
    pub fn verdict(self) -> &'static str {
        match self {
            Label::Healthy => "Healthy",
            Label::Infected => "Infected (SDS)",
        }
    }

    pub fn parse(s: &str) -> Option<Label> {
        match s.trim() {
            "H" | "h" | "0" | "healthy" | "Healthy" => Some(Label::Healthy),
            "I" | "i" | "1" | "infected" | "Infected" => Some(Label::Infected),
            _ => None,
        }
    }
}

/// A cube paired with its ground-truth label.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSample<T = f32> {
    pub cube: HyperCube<T>,
    pub label: Label,
}

impl<T: Scalar> LabeledSample<T> {
    pub fn new(cube: HyperCube<T>, label: Label) -> Self {
        LabeledSample { cube, label }
    }
}
