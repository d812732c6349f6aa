//! Reading and writing hyperspectral cubes.
//!
//! Three containers are supported: the native `HSC1` interchange format, an
//! uncompressed subset of MAT-file v5, and ENVI band-interleaved-by-line
//! rasters. Every parser normalizes to the band-sequential layout of
//! [`HyperCube`](crate::cube::HyperCube).

mod bytes;
pub mod envi;
pub mod hsc;
pub mod mat;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cube::{CubeError, HyperCube};

pub use envi::parse_envi_bil;
pub use hsc::{parse_hsc, write_hsc};
pub use mat::{parse_mat_v5, write_mat_v5};

#[derive(Debug, Error, PartialEq)]
pub enum HsioError {
    #[error("bad magic: expected {expected:?}")]
    BadMagic { expected: &'static str },
    #[error("truncated payload: need {needed} bytes at offset {offset}, have {available}")]
    TruncatedPayload { offset: usize, needed: usize, available: usize },
    #[error("zero-sized dimension")]
    ZeroDimension,
    #[error("{0} trailing bytes after payload")]
    TrailingBytes(usize),
    #[error("invalid wavelength-table flag {0}")]
    BadFlag(u8),
    #[error("invalid cube: {0}")]
    Cube(#[from] CubeError),
    #[error("bad MAT header: {0}")]
    BadHeader(String),
    #[error("compressed MAT data elements are not supported")]
    UnsupportedCompressed,
    #[error("no 3-D single/double array found{}", .0.as_ref().map(|n| format!(" named {n:?}")).unwrap_or_default())]
    NoSuitableVariable(Option<String>),
    #[error("malformed MAT element: {0}")]
    MalformedElement(String),
    #[error("unsupported ENVI interleave {0:?} (only bil)")]
    UnsupportedInterleave(String),
    #[error("unsupported ENVI data type {0} (only 4 = float32)")]
    UnsupportedDataType(String),
    #[error("payload size mismatch: expected {expected} bytes, got {got}")]
    SizeMismatch { expected: usize, got: usize },
    #[error("ENVI header is missing required key {0:?}")]
    MissingKey(&'static str),
    #[error("ENVI header value for {key:?} is invalid: {value:?}")]
    BadValue { key: String, value: String },
}

/// Container formats understood by [`parse_any`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CubeFormat {
    Hsc,
    MatV5,
    EnviBil,
}

impl CubeFormat {
    /// Guesses the container from leading bytes. ENVI is never detected
    /// here because its header lives in a separate text file.
    pub fn sniff(bytes: &[u8]) -> Option<CubeFormat> {
        if bytes.starts_with(hsc::MAGIC) {
            Some(CubeFormat::Hsc)
        } else if bytes.len() >= mat::HEADER_LEN
            && (bytes.starts_with(b"MATLAB 5.0") || matches!(&bytes[126..128], b"IM" | b"MI"))
        {
            Some(CubeFormat::MatV5)
        } else {
            None
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            CubeFormat::Hsc => "hsc",
            CubeFormat::MatV5 => "mat-v5",
            CubeFormat::EnviBil => "envi-bil",
        }
    }
}

/// Parses a single-file cube (HSC or MAT v5), dispatching on magic bytes.
pub fn parse_any(bytes: &[u8]) -> Result<(CubeFormat, HyperCube<f32>), HsioError> {
    match CubeFormat::sniff(bytes) {
        Some(CubeFormat::Hsc) => Ok((CubeFormat::Hsc, parse_hsc(bytes)?)),
        Some(CubeFormat::MatV5) => Ok((CubeFormat::MatV5, parse_mat_v5(bytes, None)?)),
        _ => Err(HsioError::BadMagic { expected: "HSC1 or MAT-file v5 header" }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sniff_recognizes_hsc_and_mat() {
        assert_eq!(CubeFormat::sniff(b"HSC1...."), Some(CubeFormat::Hsc));
        let mut mat = vec![b' '; 128];
        mat[..10].copy_from_slice(b"MATLAB 5.0");
        assert_eq!(CubeFormat::sniff(&mat), Some(CubeFormat::MatV5));
        assert_eq!(CubeFormat::sniff(b"garbage"), None);
    }

    #[test]
    fn parse_any_rejects_unknown() {
        assert!(matches!(parse_any(b""), Err(HsioError::BadMagic { .. })));
    }
}
