//! Flat-field calibration, spectral binning, spatial resampling, band
//! trimming, and the quick-look products (RGB composite, central spectrum).
//!
//! The default chain takes a 348-band raw scan to 116 binned bands and then
//! to the 101 usable bands:
//!
//! ```text
//! raw DN --flat_field--> reflectance --spectral_bin(3)--> 116 bands
//!        --spatial_resize--> target frame --trim_bands(6, 9)--> 101 bands
//! ```

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cube::{CubeError, HyperCube, Stage};
use crate::scalar::Scalar;

pub const RAW_BANDS: usize = 348;
pub const BINNED_BANDS: usize = 116;
pub const TRIMMED_BANDS: usize = 101;
pub const DEFAULT_SPECTRAL_FACTOR: usize = 3;
pub const DEFAULT_FRAME: (usize, usize) = (125, 100);
/// 1-based band indices (trimmed cube) used for the RGB quick-look.
pub const DEFAULT_RGB_BANDS: (usize, usize, usize) = (92, 83, 54);
pub const DEFAULT_EPSILON: f64 = 1e-6;
const REFLECTANCE_MAX: f64 = 2.0;

/// Sensor range of the 348-band camera.
pub const SENSOR_FIRST_NM: f64 = 398.0;
pub const SENSOR_LAST_NM: f64 = 1011.0;

#[derive(Debug, Error, PartialEq)]
pub enum PreprocessError {
    #[error("dimension mismatch: {what} is {got:?}, expected {expected:?}")]
    DimMismatch { what: &'static str, expected: (usize, usize, usize), got: (usize, usize, usize) },
    #[error("expected a {expected:?} cube, got {got:?}")]
    WrongStage { expected: Stage, got: Stage },
    #[error("{bands} bands are not divisible by bin size {factor}")]
    NonDivisibleBands { bands: usize, factor: usize },
    #[error("cannot drop {front}+{back} bands from a {bands}-band cube")]
    TrimExceedsBands { front: usize, back: usize, bands: usize },
    #[error("band index {index} outside 1..={max}")]
    IndexOutOfRange { index: usize, max: usize },
    #[error("invalid resize target {0}x{1}")]
    BadTarget(usize, usize),
    #[error(transparent)]
    Cube(#[from] CubeError),
}

/// White and dark reference frames matching a raw scan.
#[derive(Debug, Clone)]
pub struct CalibrationPair<T = f32> {
    pub white: HyperCube<T>,
    pub dark: HyperCube<T>,
}

impl<T: Scalar> CalibrationPair<T> {
    pub fn new(white: HyperCube<T>, dark: HyperCube<T>) -> Result<Self, PreprocessError> {
        if white.dims() != dark.dims() {
            return Err(PreprocessError::DimMismatch { what: "dark", expected: white.dims(), got: dark.dims() });
        }
        Ok(CalibrationPair { white, dark })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BinSpec {
    pub spectral_factor: usize,
    pub spatial_target: (usize, usize),
}

impl Default for BinSpec {
    fn default() -> Self {
        BinSpec { spectral_factor: DEFAULT_SPECTRAL_FACTOR, spatial_target: DEFAULT_FRAME }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrimSpec {
    pub drop_front: usize,
    pub drop_back: usize,
}

impl Default for TrimSpec {
    fn default() -> Self {
        TrimSpec { drop_front: 6, drop_back: 9 }
    }
}

#[derive(Debug, Clone)]
pub struct FlatField<T> {
    pub cube: HyperCube<T>,
    /// Voxels where `|white - dark| < epsilon`; these are set to 0.
    pub degenerate: usize,
}

/// `(raw - dark) / (white - dark)`, clamped to `[0, 2]`.
pub fn flat_field<T: Scalar>(
    raw: &HyperCube<T>,
    cal: &CalibrationPair<T>,
    epsilon: T,
) -> Result<FlatField<T>, PreprocessError> {
    if raw.stage() != Stage::Raw {
        return Err(PreprocessError::WrongStage { expected: Stage::Raw, got: raw.stage() });
    }
    for (what, other) in [("white", &cal.white), ("dark", &cal.dark)] {
        if other.dims() != raw.dims() {
            return Err(PreprocessError::DimMismatch { what, expected: raw.dims(), got: other.dims() });
        }
    }
    let hi = T::from_f64_lossy(REFLECTANCE_MAX);
    let mut degenerate = 0usize;
    let data: Vec<T> = raw
        .data()
        .iter()
        .zip(cal.white.data())
        .zip(cal.dark.data())
        .map(|((&r, &w), &d)| {
            let span = w - d;
            if span.abs() < epsilon {
                degenerate += 1;
                T::zero()
            } else {
                // max/min also map NaN to a bound.
                ((r - d) / span).max(T::zero()).min(hi)
            }
        })
        .collect();
    let (rows, cols, bands) = raw.dims();
    let cube = HyperCube::from_parts_unchecked(
        rows,
        cols,
        bands,
        data,
        raw.wavelengths_nm().map(<[f64]>::to_vec),
        Stage::Reflectance,
    );
    Ok(FlatField { cube, degenerate })
}

/// Averages each run of `factor` adjacent bands.
pub fn spectral_bin<T: Scalar>(cube: &HyperCube<T>, factor: usize) -> Result<HyperCube<T>, PreprocessError> {
    let (rows, cols, bands) = cube.dims();
    if factor == 0 || bands % factor != 0 {
        return Err(PreprocessError::NonDivisibleBands { bands, factor });
    }
    if cube.stage() > Stage::Binned {
        return Err(CubeError::StageRegression { from: cube.stage(), to: Stage::Binned }.into());
    }
    let out_bands = bands / factor;
    let n = rows * cols;
    let k = T::from_usize_lossy(factor);
    let mut data = vec![T::zero(); n * out_bands];
    for j in 0..out_bands {
        let out = &mut data[j * n..(j + 1) * n];
        for b in j * factor..(j + 1) * factor {
            for (o, &v) in out.iter_mut().zip(cube.band(b)) {
                *o += v;
            }
        }
        for o in out.iter_mut() {
            *o /= k;
        }
    }
    let wavelengths = cube.wavelengths_nm().map(|wl| {
        wl.chunks_exact(factor).map(|c| c.iter().sum::<f64>() / factor as f64).collect::<Vec<_>>()
    });
    Ok(HyperCube::new(rows, cols, out_bands, data, wavelengths, Stage::Binned)?)
}

/// Source pixels and weights contributing to each output pixel along one axis.
fn area_weights(src: usize, dst: usize) -> Vec<Vec<(usize, f64)>> {
    let scale = src as f64 / dst as f64;
    (0..dst)
        .map(|i| {
            let lo = i as f64 * scale;
            let hi = (i + 1) as f64 * scale;
            let first = lo.floor() as usize;
            let last = (hi.ceil() as usize).min(src);
            (first..last)
                .filter_map(|s| {
                    let overlap = (hi.min((s + 1) as f64) - lo.max(s as f64)).max(0.0);
                    (overlap > 0.0).then_some((s, overlap / scale))
                })
                .collect()
        })
        .collect()
}

/// Area-average resampling of every band to `target = (rows, cols)`.
pub fn spatial_resize<T: Scalar>(
    cube: &HyperCube<T>,
    target: (usize, usize),
) -> Result<HyperCube<T>, PreprocessError> {
    let (rows, cols, bands) = cube.dims();
    let (out_rows, out_cols) = target;
    if out_rows == 0 || out_cols == 0 {
        return Err(PreprocessError::BadTarget(out_rows, out_cols));
    }
    if (out_rows, out_cols) == (rows, cols) {
        return Ok(cube.clone());
    }
    let wr: Vec<Vec<(usize, T)>> = to_scalar_weights(area_weights(rows, out_rows));
    let wc: Vec<Vec<(usize, T)>> = to_scalar_weights(area_weights(cols, out_cols));
    let mut data = Vec::with_capacity(out_rows * out_cols * bands);
    let mut tmp = vec![T::zero(); rows * out_cols];
    for b in 0..bands {
        let src = cube.band(b);
        for r in 0..rows {
            let line = &src[r * cols..(r + 1) * cols];
            for (oc, w) in wc.iter().enumerate() {
                tmp[r * out_cols + oc] = w.iter().fold(T::zero(), |acc, &(s, wt)| acc + line[s] * wt);
            }
        }
        for w in &wr {
            for oc in 0..out_cols {
                data.push(w.iter().fold(T::zero(), |acc, &(s, wt)| acc + tmp[s * out_cols + oc] * wt));
            }
        }
    }
    Ok(HyperCube::from_parts_unchecked(
        out_rows,
        out_cols,
        bands,
        data,
        cube.wavelengths_nm().map(<[f64]>::to_vec),
        cube.stage(),
    ))
}

fn to_scalar_weights<T: Scalar>(w: Vec<Vec<(usize, f64)>>) -> Vec<Vec<(usize, T)>> {
    w.into_iter().map(|row| row.into_iter().map(|(s, x)| (s, T::from_f64_lossy(x))).collect()).collect()
}

/// Drops sensor-artifact bands from both ends of the spectrum.
pub fn trim_bands<T: Scalar>(cube: &HyperCube<T>, spec: TrimSpec) -> Result<HyperCube<T>, PreprocessError> {
    let (rows, cols, bands) = cube.dims();
    if spec.drop_front + spec.drop_back >= bands {
        return Err(PreprocessError::TrimExceedsBands { front: spec.drop_front, back: spec.drop_back, bands });
    }
    if cube.stage() > Stage::Trimmed {
        return Err(CubeError::StageRegression { from: cube.stage(), to: Stage::Trimmed }.into());
    }
    let keep = spec.drop_front..bands - spec.drop_back;
    let n = rows * cols;
    let data = cube.data()[keep.start * n..keep.end * n].to_vec();
    let wavelengths = cube.wavelengths_nm().map(|wl| wl[keep.clone()].to_vec());
    Ok(HyperCube::from_parts_unchecked(rows, cols, keep.len(), data, wavelengths, Stage::Trimmed))
}

/// Centre wavelength (nm) of a 1-based band in the 116-band binned space.
///
/// The 348 raw channels are spread linearly over 398–1011 nm; bin `b`
/// reports the wavelength of its middle raw channel.
pub fn wavelength_of_band(index_1based: usize) -> Result<f64, PreprocessError> {
    if !(1..=BINNED_BANDS).contains(&index_1based) {
        return Err(PreprocessError::IndexOutOfRange { index: index_1based, max: BINNED_BANDS });
    }
    let step = (SENSOR_LAST_NM - SENSOR_FIRST_NM) / (RAW_BANDS - 1) as f64;
    let raw_channel = DEFAULT_SPECTRAL_FACTOR * (index_1based - 1) + 1;
    Ok(SENSOR_FIRST_NM + raw_channel as f64 * step)
}

/// Wavelengths of the bands that survive the default trim (bands 7..=107).
pub fn trimmed_wavelengths() -> Vec<f64> {
    let trim = TrimSpec::default();
    (trim.drop_front + 1..=BINNED_BANDS - trim.drop_back)
        .map(|b| wavelength_of_band(b).expect("in range"))
        .collect()
}

/// Wavelengths for every band of the 116-band space.
pub fn binned_wavelengths() -> Vec<f64> {
    (1..=BINNED_BANDS).map(|b| wavelength_of_band(b).expect("in range")).collect()
}

/// Maps a 1-based band of the 116-band space onto a 0-based slot of a cube
/// that is either binned (116 bands) or trimmed (101 bands).
pub fn gene_to_slot(gene: usize, cube_bands: usize) -> Option<usize> {
    let front = TrimSpec::default().drop_front;
    match cube_bands {
        BINNED_BANDS if (1..=BINNED_BANDS).contains(&gene) => Some(gene - 1),
        TRIMMED_BANDS if gene > front && gene - front <= TRIMMED_BANDS => Some(gene - front - 1),
        _ => None,
    }
}

/// 8-bit interleaved RGB raster.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RgbImage {
    pub rows: usize,
    pub cols: usize,
    /// `rows * cols * 3` bytes, row-major, RGB interleaved.
    pub pixels: Vec<u8>,
}

/// Three bands (1-based) stretched independently to 0..=255.
pub fn rgb_composite<T: Scalar>(
    cube: &HyperCube<T>,
    bands: (usize, usize, usize),
) -> Result<RgbImage, PreprocessError> {
    let (rows, cols, nb) = cube.dims();
    let mut pixels = vec![0u8; rows * cols * 3];
    for (channel, &b) in [bands.0, bands.1, bands.2].iter().enumerate() {
        if b == 0 || b > nb {
            return Err(PreprocessError::IndexOutOfRange { index: b, max: nb });
        }
        let plane = cube.band(b - 1);
        let (lo, hi) = plane
            .iter()
            .filter(|v| v.is_finite())
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v.widen()), hi.max(v.widen())));
        let span = hi - lo;
        for (i, v) in plane.iter().enumerate() {
            let v = v.widen();
            pixels[i * 3 + channel] = if span > 0.0 && v.is_finite() {
                ((v - lo) / span * 255.0).round().clamp(0.0, 255.0) as u8
            } else {
                0
            };
        }
    }
    Ok(RgbImage { rows, cols, pixels })
}

/// Encodes an RGB raster as PNG. Output is deterministic for a given image.
pub fn encode_png(img: &RgbImage) -> Vec<u8> {
    let mut out = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut out, img.cols as u32, img.rows as u32);
        enc.set_color(png::ColorType::Rgb);
        enc.set_depth(png::BitDepth::Eight);
        let mut writer = enc.write_header().expect("in-memory PNG header");
        writer.write_image_data(&img.pixels).expect("in-memory PNG data");
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CentralSpectrum {
    pub row: usize,
    pub col: usize,
    pub reflectance: Vec<f64>,
    pub wavelengths_nm: Option<Vec<f64>>,
}

/// Spectrum of pixel `(rows / 2, cols / 2)`.
pub fn central_spectrum<T: Scalar>(cube: &HyperCube<T>) -> CentralSpectrum {
    let (row, col) = (cube.rows() / 2, cube.cols() / 2);
    CentralSpectrum {
        row,
        col,
        reflectance: cube.pixel_spectrum(row, col).into_iter().map(Scalar::widen).collect(),
        wavelengths_nm: cube.wavelengths_nm().map(<[f64]>::to_vec),
    }
}

/// Full raw-to-trimmed chain with the given settings.
pub fn preprocess_raw<T: Scalar>(
    raw: &HyperCube<T>,
    cal: &CalibrationPair<T>,
    bin: BinSpec,
    trim: TrimSpec,
    epsilon: T,
) -> Result<FlatField<T>, PreprocessError> {
    let ff = flat_field(raw, cal, epsilon)?;
    let binned = spectral_bin(&ff.cube, bin.spectral_factor)?;
    let resized = spatial_resize(&binned, bin.spatial_target)?;
    let cube = trim_bands(&resized, trim)?;
    Ok(FlatField { cube, degenerate: ff.degenerate })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn cube1(values: &[f64], stage: Stage) -> HyperCube<f64> {
        HyperCube::new(1, 1, values.len(), values.to_vec(), None, stage).unwrap()
    }

    fn raw_const(v: f64, bands: usize) -> HyperCube<f64> {
        HyperCube::filled(2, 2, bands, v, Stage::Raw).unwrap()
    }

    #[test]
    fn flat_field_basic_cases() {
        let cal = CalibrationPair::new(raw_const(1.0, 3), raw_const(0.0, 3)).unwrap();
        let ff = flat_field(&raw_const(0.5, 3), &cal, 1e-6).unwrap();
        assert!(ff.cube.data().iter().all(|&v| v == 0.5));
        assert_eq!(ff.cube.stage(), Stage::Reflectance);

        let ff = flat_field(&raw_const(1.0, 3), &cal, 1e-6).unwrap();
        assert!(ff.cube.data().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn flat_field_degenerate_pixel() {
        let mut white = vec![1.0; 4];
        white[2] = 0.0;
        let white = HyperCube::new(2, 2, 1, white, None, Stage::Raw).unwrap();
        let cal = CalibrationPair::new(white, raw_const(0.0, 1)).unwrap();
        let ff = flat_field(&raw_const(0.7, 1), &cal, 1e-6).unwrap();
        assert_eq!(ff.degenerate, 1);
        assert_eq!(ff.cube.data()[2], 0.0);
        assert_eq!(ff.cube.data()[0], 0.7);
    }

    #[test]
    fn flat_field_clamps_and_checks_dims() {
        let cal = CalibrationPair::new(raw_const(1.0, 1), raw_const(0.5, 1)).unwrap();
        let hi = flat_field(&raw_const(10.0, 1), &cal, 1e-6).unwrap();
        assert!(hi.cube.data().iter().all(|&v| v == 2.0));
        let lo = flat_field(&raw_const(0.0, 1), &cal, 1e-6).unwrap();
        assert!(lo.cube.data().iter().all(|&v| v == 0.0));
        assert!(matches!(flat_field(&raw_const(0.0, 2), &cal, 1e-6), Err(PreprocessError::DimMismatch { .. })));
    }

    #[test]
    fn spectral_bin_examples() {
        let c = HyperCube::filled(1, 2, RAW_BANDS, 2.0f64, Stage::Reflectance).unwrap();
        let b = spectral_bin(&c, 3).unwrap();
        assert_eq!(b.bands(), BINNED_BANDS);
        assert!(b.data().iter().all(|&v| v == 2.0));

        let one = spectral_bin(&cube1(&[0.1, 0.2, 0.3], Stage::Reflectance), 3).unwrap();
        assert_abs_diff_eq!(one.data()[0], 0.2, epsilon = 1e-15);
        assert_eq!(
            spectral_bin(&cube1(&[0.0; 4], Stage::Reflectance), 3),
            Err(PreprocessError::NonDivisibleBands { bands: 4, factor: 3 })
        );
    }

    #[test]
    fn spectral_bin_averages_wavelengths() {
        let c = HyperCube::new(1, 1, 3, vec![0.0f32; 3], Some(vec![400.0, 401.0, 405.0]), Stage::Reflectance).unwrap();
        assert_eq!(spectral_bin(&c, 3).unwrap().wavelengths_nm(), Some(&[402.0][..]));
    }

    #[test]
    fn area_resize_by_hand() {
        let c = HyperCube::new(2, 2, 1, vec![1.0, 1.0, 3.0, 3.0], None, Stage::Reflectance).unwrap();
        let r = spatial_resize(&c, (1, 1)).unwrap();
        assert_eq!(r.data(), &[2.0]);
        assert_eq!(spatial_resize(&c, (2, 2)).unwrap(), c);
    }

    #[test]
    fn area_resize_non_integer_factor_preserves_mean() {
        let data: Vec<f64> = (0..15).map(|v| v as f64).collect();
        let c = HyperCube::new(3, 5, 1, data.clone(), None, Stage::Reflectance).unwrap();
        let r = spatial_resize(&c, (2, 2)).unwrap();
        let mean_in = data.iter().sum::<f64>() / 15.0;
        let mean_out = r.data().iter().sum::<f64>() / 4.0;
        assert_abs_diff_eq!(mean_in, mean_out, epsilon = 1e-12);
    }

    #[test]
    fn default_frame_resize() {
        let c = HyperCube::filled(250, 270, 1, 0.5f32, Stage::Binned).unwrap();
        let r = spatial_resize(&c, DEFAULT_FRAME).unwrap();
        assert_eq!(r.dims(), (125, 100, 1));
        assert!(r.data().iter().all(|v| (v - 0.5).abs() < 1e-6));
    }

    #[test]
    fn trim_examples() {
        let c = HyperCube::filled(1, 1, BINNED_BANDS, 0.0f32, Stage::Binned).unwrap();
        let t = trim_bands(&c, TrimSpec::default()).unwrap();
        assert_eq!(t.bands(), TRIMMED_BANDS);
        assert_eq!(t.stage(), Stage::Trimmed);
        let same = trim_bands(&c, TrimSpec { drop_front: 0, drop_back: 0 }).unwrap();
        assert_eq!(same.data(), c.data());
        let small = HyperCube::filled(1, 1, 10, 0.0f32, Stage::Binned).unwrap();
        assert!(matches!(trim_bands(&small, TrimSpec::default()), Err(PreprocessError::TrimExceedsBands { .. })));
    }

    #[test]
    fn trim_keeps_wavelengths_in_lockstep() {
        let wl = binned_wavelengths();
        let c = HyperCube::new(1, 1, BINNED_BANDS, vec![0.0f32; BINNED_BANDS], Some(wl), Stage::Binned).unwrap();
        let t = trim_bands(&c, TrimSpec::default()).unwrap();
        assert_eq!(t.wavelengths_nm().unwrap(), trimmed_wavelengths().as_slice());
    }

    #[test]
    fn wavelength_map() {
        assert_abs_diff_eq!(wavelength_of_band(1).unwrap(), 398.0 + 613.0 / 347.0, epsilon = 1e-12);
        assert_abs_diff_eq!(wavelength_of_band(1).unwrap(), 399.77, epsilon = 0.005);
        assert!((wavelength_of_band(21).unwrap() - 505.4).abs() <= 1.0);
        assert!((wavelength_of_band(97).unwrap() - 908.4).abs() <= 1.0);
        assert!(wavelength_of_band(0).is_err());
        assert!(wavelength_of_band(117).is_err());
        let all = binned_wavelengths();
        assert!(all.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn gene_slots() {
        assert_eq!(gene_to_slot(21, 116), Some(20));
        assert_eq!(gene_to_slot(21, 101), Some(14));
        assert_eq!(gene_to_slot(7, 101), Some(0));
        assert_eq!(gene_to_slot(107, 101), Some(100));
        assert_eq!(gene_to_slot(6, 101), None);
        assert_eq!(gene_to_slot(108, 101), None);
        assert_eq!(gene_to_slot(5, 50), None);
    }

    #[test]
    fn rgb_stretch() {
        let mut data = vec![0.3f64, 0.3, 0.3, 0.4];
        data[0] = 0.2;
        data.extend_from_slice(&[1.0; 4]);
        let c = HyperCube::new(2, 2, 2, data, None, Stage::Trimmed).unwrap();
        let img = rgb_composite(&c, (1, 2, 1)).unwrap();
        assert_eq!(img.pixels[0], 0);
        assert_eq!(img.pixels[9], 255);
        assert!((127..=128).contains(&img.pixels[3]));
        // constant band -> all zero
        assert!(img.pixels.iter().skip(1).step_by(3).all(|&p| p == 0));
        assert!(rgb_composite(&c, (1, 3, 1)).is_err());
    }

    #[test]
    fn png_has_signature_and_is_deterministic() {
        let img = RgbImage { rows: 2, cols: 3, pixels: (0..18).collect() };
        let a = encode_png(&img);
        assert_eq!(&a[..8], b"\x89PNG\r\n\x1a\n");
        assert_eq!(a, encode_png(&img));
    }

    #[test]
    fn central_pixel() {
        let s = central_spectrum(&cube1(&[1.0, 2.0, 3.0, 4.0, 5.0], Stage::Trimmed));
        assert_eq!(s.reflectance, vec![1.0, 2.0, 3.0, 4.0, 5.0]);
        let big = HyperCube::filled(125, 100, 1, 0.0f32, Stage::Trimmed).unwrap();
        let s = central_spectrum(&big);
        assert_eq!((s.row, s.col), (62, 50));
    }
}
