//! `CNN1` model blobs.
//!
//! Little-endian: magic `CNN1`, `u32` format version, `u32` rows, cols,
//! channels, filters, hidden units, outputs, `u64` seed, per-channel `f32`
//! input shifts then scales, then `f32` weights in the order conv kernels,
//! conv biases, dense weights, dense biases, output weights, output biases.

use super::model::{CnnModel, InputShape};
use super::{CnnError, FILTERS, HIDDEN, OUTPUTS};
use crate::scalar::Scalar;

pub const CNN1_MAGIC: &[u8; 4] = b"CNN1";
const VERSION: u32 = 2;

pub fn write_cnn1<T: Scalar>(model: &CnnModel<T>) -> Vec<u8> {
    let mut out = Vec::with_capacity(40 + model.parameter_count() * 4);
    out.extend_from_slice(CNN1_MAGIC);
    let s = model.shape();
    for v in [VERSION, s.rows as u32, s.cols as u32, s.channels as u32, FILTERS as u32, HIDDEN as u32, OUTPUTS as u32] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out.extend_from_slice(&model.rng_seed().to_le_bytes());
    let (shift, scale) = model.input_normalization();
    for group in [shift, scale].into_iter().chain(model.groups()) {
        for w in group {
            out.extend_from_slice(&w.narrow().to_le_bytes());
        }
    }
    out
}

pub fn read_cnn1<T: Scalar>(bytes: &[u8]) -> Result<CnnModel<T>, CnnError> {
    if !bytes.starts_with(CNN1_MAGIC) {
        return Err(CnnError::Format("missing CNN1 magic".into()));
    }
    let word = |i: usize| -> Result<u32, CnnError> {
        let at = 4 + i * 4;
        bytes
            .get(at..at + 4)
            .map(|b| u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
            .ok_or_else(|| CnnError::Format("truncated header".into()))
    };
    let version = word(0)?;
    if version != VERSION {
        return Err(CnnError::Format(format!("unsupported version {version}")));
    }
    let (rows, cols, channels) = (word(1)? as usize, word(2)? as usize, word(3)? as usize);
    let arch = (word(4)? as usize, word(5)? as usize, word(6)? as usize);
    if arch != (FILTERS, HIDDEN, OUTPUTS) {
        return Err(CnnError::Format(format!("architecture {arch:?} not supported")));
    }
    let seed_bytes = bytes.get(32..40).ok_or_else(|| CnnError::Format("truncated header".into()))?;
    let seed = u64::from_le_bytes(seed_bytes.try_into().expect("8 bytes"));
    let shape = InputShape::new(rows, cols, channels)?;
    let mut model = CnnModel::<T>::zeros(shape);
    model.rng_seed = seed;
    let expected = 40 + (2 * channels + model.parameter_count()) * 4;
    if bytes.len() != expected {
        return Err(CnnError::Format(format!("expected {expected} bytes, got {}", bytes.len())));
    }
    let mut values = bytes[40..].chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]));
    let mut next = || T::from_f64_lossy(values.next().expect("length checked") as f64);
    model.in_shift = (0..channels).map(|_| next()).collect();
    model.in_scale = (0..channels).map(|_| next()).collect();
    for group in model.groups_mut() {
        for w in group.iter_mut() {
            *w = next();
        }
    }
    Ok(model)
}
