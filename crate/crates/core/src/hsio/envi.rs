//! ENVI header + band-interleaved-by-line (BIL) float32 payloads.

use std::collections::HashMap;

use super::HsioError;
use crate::cube::{HyperCube, Stage};

/// Parsed ENVI header. Keys are lower-cased; brace values are kept verbatim
/// without the braces.
#[derive(Debug, Clone, Default)]
pub struct EnviHeader {
    fields: HashMap<String, String>,
}

impl EnviHeader {
    pub fn parse(text: &str) -> EnviHeader {
        let mut fields = HashMap::new();
        let mut lines = text.lines();
        while let Some(line) = lines.next() {
            let Some((key, value)) = line.split_once('=') else { continue };
            let key = key.trim().to_ascii_lowercase();
            let mut value = value.trim().to_string();
            if value.starts_with('{') {
                while !value.contains('}') {
                    match lines.next() {
                        Some(more) => {
                            value.push(' ');
                            value.push_str(more.trim());
                        }
                        None => break,
                    }
                }
                value = value.trim_start_matches('{').trim_end().trim_end_matches('}').trim().to_string();
            }
            fields.insert(key, value);
        }
        EnviHeader { fields }
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.fields.get(&key.to_ascii_lowercase()).map(String::as_str)
    }

    fn usize_field(&self, key: &'static str) -> Result<usize, HsioError> {
        let raw = self.get(key).ok_or(HsioError::MissingKey(key))?;
        raw.trim().parse().map_err(|_| HsioError::BadValue { key: key.into(), value: raw.into() })
    }

    fn wavelengths_nm(&self) -> Result<Option<Vec<f64>>, HsioError> {
        let Some(raw) = self.get("wavelength") else { return Ok(None) };
        let values = raw
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| s.parse::<f64>().map_err(|_| HsioError::BadValue { key: "wavelength".into(), value: s.into() }))
            .collect::<Result<Vec<_>, _>>()?;
        let scale = match self.get("wavelength units").map(|u| u.trim().to_ascii_lowercase()) {
            Some(u) if u.starts_with("micro") || u == "um" => 1000.0,
            _ => 1.0,
        };
        Ok(Some(values.into_iter().map(|v| v * scale).collect()))
    }
}

/// Parses a BIL payload described by `header_text`.
///
/// BIL stores, for every line, each band's samples in turn: element
/// `(line, sample, band)` is at `(line * bands + band) * samples + sample`.
pub fn parse_envi_bil(header_text: &str, payload: &[u8]) -> Result<HyperCube<f32>, HsioError> {
    let hdr = EnviHeader::parse(header_text);
    let interleave = hdr.get("interleave").ok_or(HsioError::MissingKey("interleave"))?.trim().to_ascii_lowercase();
    if interleave != "bil" {
        return Err(HsioError::UnsupportedInterleave(interleave));
    }
    let data_type = hdr.get("data type").ok_or(HsioError::MissingKey("data type"))?.trim();
    if data_type != "4" {
        return Err(HsioError::UnsupportedDataType(data_type.into()));
    }
    let samples = hdr.usize_field("samples")?;
    let lines = hdr.usize_field("lines")?;
    let bands = hdr.usize_field("bands")?;
    if samples == 0 || lines == 0 || bands == 0 {
        return Err(HsioError::ZeroDimension);
    }
    let big_endian = match hdr.get("byte order").map(str::trim) {
        None | Some("0") => false,
        Some("1") => true,
        Some(other) => return Err(HsioError::BadValue { key: "byte order".into(), value: other.into() }),
    };
    let offset = match hdr.get("header offset") {
        Some(_) => hdr.usize_field("header offset")?,
        None => 0,
    };
    let count = samples.checked_mul(lines).and_then(|v| v.checked_mul(bands)).unwrap_or(usize::MAX);
    let expected = count.checked_mul(4).and_then(|v| v.checked_add(offset)).unwrap_or(usize::MAX);
    if payload.len() != expected {
        return Err(HsioError::SizeMismatch { expected, got: payload.len() });
    }
    let body = &payload[offset..];
    let mut data = vec![0f32; count];
    let plane = lines * samples;
    for (i, chunk) in body.chunks_exact(4).enumerate() {
        let arr = [chunk[0], chunk[1], chunk[2], chunk[3]];
        let v = if big_endian { f32::from_be_bytes(arr) } else { f32::from_le_bytes(arr) };
        let s = i % samples;
        let b = (i / samples) % bands;
        let l = i / (samples * bands);
        data[b * plane + l * samples + s] = v;
    }
    let wavelengths = hdr.wavelengths_nm()?;
    Ok(HyperCube::new(lines, samples, bands, data, wavelengths, Stage::infer_from_bands(bands))?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn header(interleave: &str, data_type: u32) -> String {
        format!(
            "ENVI\nsamples = 2\nLines = 2\nBANDS = 2\nheader offset = 0\nfile type = ENVI Standard\n\
             data type = {data_type}\ninterleave = {interleave}\nbyte order = 0\n\
             wavelength = {{\n 500.0,\n 600.0 }}\n"
        )
    }

    fn payload(n: usize) -> Vec<u8> {
        (0..n).flat_map(|i| (i as f32).to_le_bytes()).collect()
    }

    #[test]
    fn bil_index_arithmetic() {
        let cube = parse_envi_bil(&header("bil", 4), &payload(8)).unwrap();
        assert_eq!(cube.get(1, 0, 1), 6.0);
        assert_eq!(cube.get(0, 1, 0), 1.0);
        assert_eq!(cube.get(1, 1, 0), 5.0);
        assert_eq!(cube.wavelengths_nm(), Some(&[500.0, 600.0][..]));
    }

    #[test]
    fn bsq_is_rejected() {
        assert!(matches!(
            parse_envi_bil(&header("bsq", 4), &payload(8)),
            Err(HsioError::UnsupportedInterleave(s)) if s == "bsq"
        ));
    }

    #[test]
    fn short_payload_is_size_mismatch() {
        assert_eq!(
            parse_envi_bil(&header("bil", 4), &payload(7)),
            Err(HsioError::SizeMismatch { expected: 32, got: 28 })
        );
    }

    #[test]
    fn non_float_type_rejected() {
        assert!(matches!(parse_envi_bil(&header("bil", 12), &payload(8)), Err(HsioError::UnsupportedDataType(_))));
    }

    #[test]
    fn micrometre_wavelengths_are_converted() {
        let hdr = "ENVI\nsamples=1\nlines=1\nbands=2\ndata type=4\ninterleave=BIL\n\
                   wavelength units = Micrometers\nwavelength = {0.5, 0.6}\n";
        let cube = parse_envi_bil(hdr, &payload(2)).unwrap();
        assert_eq!(cube.wavelengths_nm(), Some(&[500.0, 600.0][..]));
    }
}
