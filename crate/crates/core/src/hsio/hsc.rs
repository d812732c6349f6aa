//! Native `HSC1` cube container.
//!
//! Layout (all integers and floats little-endian):
//!
//! | bytes            | content                                  |
//! |------------------|------------------------------------------|
//! | 4                | ASCII magic `HSC1`                       |
//! | 4 + 4 + 4        | `u32` rows, cols, bands                  |
//! | 1                | wavelength-table flag (0 or 1)           |
//! | 8 * bands        | `f64` wavelengths in nm, only if flag=1  |
//! | 4 * r * c * b    | `f32` samples, band-sequential           |

use super::bytes::ByteReader;
use super::HsioError;
use crate::cube::{HyperCube, Stage};

pub const MAGIC: &[u8; 4] = b"HSC1";
/// Bytes preceding the optional wavelength table.
pub const HEADER_LEN: usize = 4 + 12 + 1;

pub fn parse_hsc(bytes: &[u8]) -> Result<HyperCube<f32>, HsioError> {
    if !bytes.starts_with(MAGIC) {
        return Err(HsioError::BadMagic { expected: "HSC1" });
    }
    let mut rd = ByteReader::at(bytes, 4, false);
    let rows = rd.u32()? as usize;
    let cols = rd.u32()? as usize;
    let bands = rd.u32()? as usize;
    if rows == 0 || cols == 0 || bands == 0 {
        return Err(HsioError::ZeroDimension);
    }
    let flag = rd.u8()?;
    let wavelengths = match flag {
        0 => None,
        1 => {
            // Checked before allocating so a hostile header cannot request gigabytes.
            let need = bands.checked_mul(8).unwrap_or(usize::MAX);
            if need > rd.remaining() {
                return Err(HsioError::TruncatedPayload { offset: rd.pos(), needed: need, available: rd.remaining() });
            }
            Some((0..bands).map(|_| rd.f64()).collect::<Result<Vec<_>, _>>()?)
        }
        other => return Err(HsioError::BadFlag(other)),
    };
    let count = rows.checked_mul(cols).and_then(|v| v.checked_mul(bands)).unwrap_or(usize::MAX);
    let need = count.checked_mul(4).unwrap_or(usize::MAX);
    let payload = rd.take(need)?;
    if rd.remaining() > 0 {
        return Err(HsioError::TrailingBytes(rd.remaining()));
    }
    let data: Vec<f32> = payload
        .chunks_exact(4)
        .map(|c| f32::from_bits(u32::from_le_bytes([c[0], c[1], c[2], c[3]])))
        .collect();
    Ok(HyperCube::new(rows, cols, bands, data, wavelengths, Stage::infer_from_bands(bands))?)
}

pub fn write_hsc(cube: &HyperCube<f32>) -> Vec<u8> {
    let (rows, cols, bands) = cube.dims();
    let wl_len = cube.wavelengths_nm().map_or(0, |w| w.len() * 8);
    let mut out = Vec::with_capacity(HEADER_LEN + wl_len + cube.data().len() * 4);
    out.extend_from_slice(MAGIC);
    for d in [rows, cols, bands] {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    match cube.wavelengths_nm() {
        Some(wl) => {
            out.push(1);
            for w in wl {
                out.extend_from_slice(&w.to_le_bytes());
            }
        }
        None => out.push(0),
    }
    for v in cube.data() {
        out.extend_from_slice(&v.to_bits().to_le_bytes());
    }
    out
}
