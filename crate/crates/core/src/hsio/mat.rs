//! Uncompressed MAT-file v5 subset.
//!
//! Only top-level `miMATRIX` elements holding real, 3-D, single or double
//! arrays are turned into cubes. MATLAB stores arrays column-major with
//! dimensions `(rows, cols, bands)`; they are reordered into the
//! band-sequential layout here.

use super::bytes::ByteReader;
use super::HsioError;
use crate::cube::{HyperCube, Stage};

pub const HEADER_LEN: usize = 128;

const MI_INT8: u32 = 1;
const MI_UINT8: u32 = 2;
const MI_INT16: u32 = 3;
const MI_UINT16: u32 = 4;
const MI_INT32: u32 = 5;
const MI_UINT32: u32 = 6;
const MI_SINGLE: u32 = 7;
const MI_DOUBLE: u32 = 9;
const MI_INT64: u32 = 12;
const MI_UINT64: u32 = 13;
const MI_MATRIX: u32 = 14;
const MI_COMPRESSED: u32 = 15;

const MX_DOUBLE_CLASS: u8 = 6;
const MX_SINGLE_CLASS: u8 = 7;
const FLAG_COMPLEX: u32 = 0x0800;

struct Tag {
    data_type: u32,
    len: usize,
    /// Small data elements pack their payload into the tag's second word.
    small: bool,
}

fn read_tag(rd: &mut ByteReader<'_>) -> Result<Tag, HsioError> {
    let first = rd.u32()?;
    if first >> 16 != 0 {
        Ok(Tag { data_type: first & 0xffff, len: (first >> 16) as usize, small: true })
    } else {
        let len = rd.u32()? as usize;
        Ok(Tag { data_type: first, len, small: false })
    }
}

/// Reads one sub-element's payload and advances past its padding.
fn read_sub<'a>(rd: &mut ByteReader<'a>) -> Result<(u32, &'a [u8]), HsioError> {
    let tag = read_tag(rd)?;
    if tag.small {
        if tag.len > 4 {
            return Err(HsioError::MalformedElement(format!("small element claims {} bytes", tag.len)));
        }
        let word = rd.take(4)?;
        Ok((tag.data_type, &word[..tag.len]))
    } else {
        let payload = rd.take(tag.len)?;
        rd.skip(pad8(tag.len))?;
        Ok((tag.data_type, payload))
    }
}

fn pad8(n: usize) -> usize {
    (8 - n % 8) % 8
}

fn element_size(data_type: u32) -> Option<usize> {
    match data_type {
        MI_INT8 | MI_UINT8 => Some(1),
        MI_INT16 | MI_UINT16 => Some(2),
        MI_INT32 | MI_UINT32 | MI_SINGLE => Some(4),
        MI_DOUBLE | MI_INT64 | MI_UINT64 => Some(8),
        _ => None,
    }
}

/// Decodes a numeric payload of any MAT storage type into `f64`.
fn decode_numeric(data_type: u32, payload: &[u8], big_endian: bool) -> Result<Vec<f64>, HsioError> {
    let size = element_size(data_type)
        .ok_or_else(|| HsioError::MalformedElement(format!("non-numeric data type {data_type}")))?;
    if payload.len() % size != 0 {
        return Err(HsioError::MalformedElement("payload not a multiple of element size".into()));
    }
    macro_rules! conv {
        ($t:ty, $n:expr) => {
            payload
                .chunks_exact($n)
                .map(|c| {
                    let arr: [u8; $n] = c.try_into().expect("chunk size");
                    (if big_endian { <$t>::from_be_bytes(arr) } else { <$t>::from_le_bytes(arr) }) as f64
                })
                .collect()
        };
    }
    Ok(match data_type {
        MI_INT8 => payload.iter().map(|&b| b as i8 as f64).collect(),
        MI_UINT8 => payload.iter().map(|&b| b as f64).collect(),
        MI_INT16 => conv!(i16, 2),
        MI_UINT16 => conv!(u16, 2),
        MI_INT32 => conv!(i32, 4),
        MI_UINT32 => conv!(u32, 4),
        MI_SINGLE => conv!(f32, 4),
        MI_DOUBLE => conv!(f64, 8),
        MI_INT64 => conv!(i64, 8),
        _ => conv!(u64, 8),
    })
}

fn decode_i32s(data_type: u32, payload: &[u8], big_endian: bool) -> Result<Vec<i64>, HsioError> {
    Ok(decode_numeric(data_type, payload, big_endian)?.into_iter().map(|v| v as i64).collect())
}

struct MatArray {
    name: String,
    dims: Vec<usize>,
    values: Vec<f64>,
}

/// Parses an `miMATRIX` body. Returns `None` for arrays that can never be
/// cubes (non-numeric class, complex, sparse).
fn parse_matrix(body: &[u8], big_endian: bool) -> Result<Option<MatArray>, HsioError> {
    let mut rd = ByteReader::new(body, big_endian);
    if rd.remaining() == 0 {
        return Ok(None); // empty matrix placeholder
    }
    let (_, flags) = read_sub(&mut rd)?;
    if flags.len() < 8 {
        return Err(HsioError::MalformedElement("array flags too short".into()));
    }
    let flag_word = ByteReader::new(flags, big_endian).u32()?;
    let class = (flag_word & 0xff) as u8;
    if class != MX_DOUBLE_CLASS && class != MX_SINGLE_CLASS {
        return Ok(None);
    }
    let (dim_type, dim_bytes) = read_sub(&mut rd)?;
    let dims = decode_i32s(dim_type, dim_bytes, big_endian)?;
    if dims.iter().any(|&d| d < 0) {
        return Err(HsioError::MalformedElement("negative dimension".into()));
    }
    let dims: Vec<usize> = dims.into_iter().map(|d| d as usize).collect();
    let (_, name_bytes) = read_sub(&mut rd)?;
    let name = String::from_utf8_lossy(name_bytes).into_owned();
    if flag_word & FLAG_COMPLEX != 0 {
        return Ok(None);
    }
    let (real_type, real_bytes) = read_sub(&mut rd)?;
    let values = decode_numeric(real_type, real_bytes, big_endian)?;
    let count = dims.iter().try_fold(1usize, |acc, &d| acc.checked_mul(d));
    if count != Some(values.len()) {
        return Err(HsioError::MalformedElement(format!(
            "array {name:?} has {} values for dims {dims:?}",
            values.len()
        )));
    }
    Ok(Some(MatArray { name, dims, values }))
}

fn to_cube(arr: MatArray) -> Result<HyperCube<f32>, HsioError> {
    let (rows, cols, bands) = (arr.dims[0], arr.dims[1], arr.dims[2]);
    if rows == 0 || cols == 0 || bands == 0 {
        return Err(HsioError::ZeroDimension);
    }
    let mut data = vec![0f32; rows * cols * bands];
    // Column-major source: (r, c, b) at r + rows * (c + cols * b).
    for b in 0..bands {
        for c in 0..cols {
            for r in 0..rows {
                data[b * rows * cols + r * cols + c] = arr.values[r + rows * (c + cols * b)] as f32;
            }
        }
    }
    Ok(HyperCube::new(rows, cols, bands, data, None, Stage::Reflectance)?)
}

/// Reads the first (or the named) real 3-D single/double array as a cube.
pub fn parse_mat_v5(bytes: &[u8], variable: Option<&str>) -> Result<HyperCube<f32>, HsioError> {
    if bytes.len() < HEADER_LEN {
        return Err(HsioError::BadHeader(format!("file is {} bytes, header needs {HEADER_LEN}", bytes.len())));
    }
    let big_endian = match &bytes[126..128] {
        b"IM" => false,
        b"MI" => true,
        other => return Err(HsioError::BadHeader(format!("endian indicator {other:?}"))),
    };
    let mut rd = ByteReader::at(bytes, HEADER_LEN, big_endian);
    while rd.remaining() > 0 {
        let tag = read_tag(&mut rd)?;
        if tag.small {
            rd.skip(4)?;
            continue;
        }
        match tag.data_type {
            MI_COMPRESSED => return Err(HsioError::UnsupportedCompressed),
            MI_MATRIX => {
                let body = rd.take(tag.len)?;
                if let Some(arr) = parse_matrix(body, big_endian)? {
                    let name_ok = variable.is_none_or(|want| want == arr.name);
                    if name_ok && arr.dims.len() == 3 {
                        return to_cube(arr);
                    }
                }
            }
            _ => rd.skip(tag.len)?,
        }
        // Top-level elements are 8-byte aligned; tolerate a missing final pad.
        let pad = pad8(tag.len).min(rd.remaining());
        rd.skip(pad)?;
    }
    Err(HsioError::NoSuitableVariable(variable.map(str::to_owned)))
}

fn push_sub(out: &mut Vec<u8>, data_type: u32, payload: &[u8]) {
    out.extend_from_slice(&data_type.to_le_bytes());
    out.extend_from_slice(&(payload.len() as u32).to_le_bytes());
    out.extend_from_slice(payload);
    out.resize(out.len() + pad8(payload.len()), 0);
}

/// Writes a cube as a little-endian MAT v5 file holding one `single` array.
pub fn write_mat_v5(cube: &HyperCube<f32>, name: &str) -> Vec<u8> {
    let (rows, cols, bands) = cube.dims();
    let mut out = Vec::new();
    let mut text = b"MATLAB 5.0 MAT-file, written by sds-core".to_vec();
    text.resize(116, b' ');
    out.extend_from_slice(&text);
    out.extend_from_slice(&[0u8; 8]);
    out.extend_from_slice(&0x0100u16.to_le_bytes());
    out.extend_from_slice(b"IM");

    let mut body = Vec::new();
    let mut flags = Vec::new();
    flags.extend_from_slice(&(MX_SINGLE_CLASS as u32).to_le_bytes());
    flags.extend_from_slice(&0u32.to_le_bytes());
    push_sub(&mut body, MI_UINT32, &flags);
    let dims: Vec<u8> = [rows, cols, bands].iter().flat_map(|&d| (d as i32).to_le_bytes()).collect();
    push_sub(&mut body, MI_INT32, &dims);
    push_sub(&mut body, MI_INT8, name.as_bytes());
    let mut real = Vec::with_capacity(cube.data().len() * 4);
    for b in 0..bands {
        for c in 0..cols {
            for r in 0..rows {
                real.extend_from_slice(&cube.get(r, c, b).to_le_bytes());
            }
        }
    }
    push_sub(&mut body, MI_SINGLE, &real);
    push_sub(&mut out, MI_MATRIX, &body);
    out
}
