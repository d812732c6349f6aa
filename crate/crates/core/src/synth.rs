//! Synthetic leaf cubes with planted disease signatures.
//!
//! Every leaf is a smooth leaf-like baseline spectrum plus Gaussian noise,
//! dotted with `spots_per_sample` small discs. On a healthy leaf all discs
//! are benign spots; on an infected leaf `lesions_per_sample` of them are
//! lesions instead. The noise field of each infected leaf is the noise
//! field of its healthy partner rotated by 180 degrees, so bands that carry
//! no signature have exactly the same per-sample means in both classes.
//!
//! A disc marks each signal band `s` with amplitude `a` on the triple
//! `s-1, s, s+1`: `a` on `s` over the disc, and a zero-sum dipole (`+a` on
//! the left half of the disc, `-a` on the right) on the two neighbours.
//! Lesions use `a = +delta` on every signal band. Benign spots use `+delta`
//! on a random subset of `benign_positive` signal bands and `-delta` on the
//! rest. A model that sees `m` of the five signal bands mistakes a benign
//! spot for a lesion whenever all `m` fall in the positive subset, which
//! for three positives out of five happens with probability 0.6, 0.3 and
//! 0.1 for `m = 1, 2, 3` and never for `m >= 4`.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cube::{HyperCube, Label, LabeledSample, Stage};
use crate::preprocess::{binned_wavelengths, BINNED_BANDS};
use crate::seed::derive_seed;

/// 1-based bands used as the default planted signature.
pub const DEFAULT_SIGNAL_BANDS: [usize; 5] = [21, 32, 60, 79, 97];

#[derive(Debug, Error, PartialEq)]
pub enum SynthError {
    #[error("signal band {0} outside 1..=116")]
    BandOutOfRange(usize),
    #[error("signal bands {0} and {1} are closer than 3 bands apart")]
    OverlappingBands(usize, usize),
    #[error("invalid synth spec: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub n_per_class: usize,
    /// Spatial frame `(rows, cols)`; the band count is always 116.
    pub dims: (usize, usize),
    pub signal_bands: Vec<usize>,
    pub signal_delta: f64,
    pub noise_sigma: f64,
    /// Radius of lesions and benign spots, in pixels.
    pub blob_radius: usize,
    /// Discs on every leaf, benign or not.
    pub spots_per_sample: usize,
    /// Discs that are lesions on an infected leaf.
    pub lesions_per_sample: usize,
    /// Signal bands a benign spot marks positively; the others are marked
    /// negatively. Must be smaller than the number of signal bands.
    pub benign_positive: usize,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            n_per_class: 100,
            dims: (16, 16),
            signal_bands: DEFAULT_SIGNAL_BANDS.to_vec(),
            signal_delta: 0.15,
            noise_sigma: 0.02,
            blob_radius: 3,
            spots_per_sample: 4,
            lesions_per_sample: 2,
            benign_positive: 3,
            seed: 0,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<(), SynthError> {
        let mut sorted = self.signal_bands.clone();
        sorted.sort_unstable();
        for &b in &sorted {
            if !(1..=BINNED_BANDS).contains(&b) {
                return Err(SynthError::BandOutOfRange(b));
            }
        }
        for w in sorted.windows(2) {
            if w[1] - w[0] < 3 {
                return Err(SynthError::OverlappingBands(w[0], w[1]));
            }
        }
        let (rows, cols) = self.dims;
        let span = 2 * self.blob_radius + 1;
        if rows < span || cols < span {
            return Err(SynthError::Invalid(format!("frame {rows}x{cols} smaller than a blob of radius {}", self.blob_radius)));
        }
        if !(self.noise_sigma > 0.0) || !self.signal_delta.is_finite() || self.n_per_class == 0 {
            return Err(SynthError::Invalid("need noise_sigma > 0, finite delta, n_per_class > 0".into()));
        }
        if self.lesions_per_sample == 0 || self.lesions_per_sample > self.spots_per_sample {
            return Err(SynthError::Invalid("need 1 <= lesions_per_sample <= spots_per_sample".into()));
        }
        if self.benign_positive >= self.signal_bands.len() {
            return Err(SynthError::Invalid("benign_positive must be below the number of signal bands".into()));
        }
        Ok(())
    }
}

/// Smooth leaf-like reflectance: flat visible floor with a green bump, a red
/// well near 670 nm, and a steep red edge up to the NIR plateau.
pub fn baseline_reflectance(wavelength_nm: f64) -> f64 {
    const KNOTS: [(f64, f64); 7] =
        [(398.0, 0.24), (500.0, 0.26), (550.0, 0.32), (670.0, 0.22), (700.0, 0.26), (750.0, 0.58), (1011.0, 0.56)];
    if wavelength_nm <= KNOTS[0].0 {
        return KNOTS[0].1;
    }
    for w in KNOTS.windows(2) {
        let ((x0, y0), (x1, y1)) = (w[0], w[1]);
        if wavelength_nm <= x1 {
            return y0 + (y1 - y0) * (wavelength_nm - x0) / (x1 - x0);
        }
    }
    KNOTS[KNOTS.len() - 1].1
}

struct Blob {
    row: usize,
    col: usize,
    /// Signed amplitude per entry of `signal_bands`.
    amplitudes: Vec<f64>,
}

/// Disc centres on a jittered grid: the frame is cut into a
/// `ceil(sqrt(n)) x ceil(sqrt(n))` lattice of cells, `n` distinct cells are
/// drawn, and each disc sits at its cell centre moved by at most one pixel
/// per axis. Discs never leave the frame, so every dipole stays zero-sum.
fn place_centres(rng: &mut ChaCha8Rng, dims: (usize, usize), radius: usize, n: usize) -> Vec<(usize, usize)> {
    let side = (n as f64).sqrt().ceil().max(1.0) as usize;
    let axis = |len: usize, cell: usize, rng: &mut ChaCha8Rng| {
        let centre = ((2 * cell + 1) * len / (2 * side)) as i64;
        let (lo, hi) = (radius as i64, (len - 1 - radius) as i64);
        (centre + rng.random_range(-1..=1i64)).clamp(lo, hi) as usize
    };
    sample(rng, side * side, n)
        .into_iter()
        .map(|cell| (axis(dims.0, cell / side, rng), axis(dims.1, cell % side, rng)))
        .collect()
}

/// Signs of a benign spot: `positive` randomly chosen bands get `+1`, the
/// rest `-1`.
fn benign_signs(rng: &mut ChaCha8Rng, n_groups: usize, positive: usize) -> Vec<f64> {
    let mut s = vec![-1.0; n_groups];
    for i in sample(rng, n_groups, positive) {
        s[i] = 1.0;
    }
    s
}

fn stamp(data: &mut [f64], spec: &SynthSpec, blob: &Blob) {
    let (rows, cols) = spec.dims;
    debug_assert!(blob.row < rows && blob.col < cols);
    let plane = rows * cols;
    let r = spec.blob_radius as i64;
    for (&band, &amp) in spec.signal_bands.iter().zip(&blob.amplitudes) {
        let centre = band - 1;
        for dr in -r..=r {
            for dc in -r..=r {
                if dr * dr + dc * dc > r * r {
                    continue;
                }
                let px = (blob.row as i64 + dr) as usize * cols + (blob.col as i64 + dc) as usize;
                data[centre * plane + px] += amp;
                let dipole = match dc.signum() {
                    -1 => amp,
                    1 => -amp,
                    _ => 0.0,
                };
                for nb in [centre.wrapping_sub(1), centre + 1] {
                    if nb < BINNED_BANDS {
                        data[nb * plane + px] += dipole;
                    }
                }
            }
        }
    }
}

fn noise_field(spec: &SynthSpec, rng: &mut ChaCha8Rng, wavelengths: &[f64]) -> Vec<f64> {
    let plane = spec.dims.0 * spec.dims.1;
    let noise = Normal::new(0.0, spec.noise_sigma).expect("sigma validated");
    let mut data = Vec::with_capacity(plane * BINNED_BANDS);
    for wl in wavelengths {
        let base = baseline_reflectance(*wl);
        for _ in 0..plane {
            data.push(base + noise.sample(rng));
        }
    }
    data
}

/// Stamps `spots_per_sample` discs, the first `lesions` of which are lesions.
fn add_spots(data: &mut [f64], spec: &SynthSpec, rng: &mut ChaCha8Rng, lesions: usize) {
    let n_groups = spec.signal_bands.len();
    let centres = place_centres(rng, spec.dims, spec.blob_radius, spec.spots_per_sample);
    for (k, (row, col)) in centres.into_iter().enumerate() {
        let signs = if k < lesions { vec![1.0; n_groups] } else { benign_signs(rng, n_groups, spec.benign_positive) };
        let amplitudes = signs.into_iter().map(|s| s * spec.signal_delta).collect();
        stamp(data, spec, &Blob { row, col, amplitudes });
    }
}

fn rotate_180(data: &[f64], plane: usize) -> Vec<f64> {
    data.chunks_exact(plane).flat_map(|band| band.iter().rev().copied()).collect()
}

fn finish(data: Vec<f64>, spec: &SynthSpec, wavelengths: &[f64]) -> HyperCube<f32> {
    let (rows, cols) = spec.dims;
    let data: Vec<f32> = data.into_iter().map(|v| v.clamp(0.0, 2.0) as f32).collect();
    HyperCube::new(rows, cols, BINNED_BANDS, data, Some(wavelengths.to_vec()), Stage::Binned).expect("consistent dims")
}

/// Generates `2 * n_per_class` binned (116-band) samples, ordered as
/// matched pairs `[H0, I0, H1, I1, ...]`.
pub fn generate(spec: &SynthSpec) -> Result<Vec<LabeledSample<f32>>, SynthError> {
    spec.validate()?;
    let wavelengths = binned_wavelengths();
    let plane = spec.dims.0 * spec.dims.1;
    let pairs: Vec<[LabeledSample<f32>; 2]> = (0..spec.n_per_class)
        .into_par_iter()
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(spec.seed, &[k as u64]));
            let mut healthy = noise_field(spec, &mut rng, &wavelengths);
            let mut infected = rotate_180(&healthy, plane);
            add_spots(&mut healthy, spec, &mut rng, 0);
            add_spots(&mut infected, spec, &mut rng, spec.lesions_per_sample);
            [
                LabeledSample::new(finish(healthy, spec, &wavelengths), Label::Healthy),
                LabeledSample::new(finish(infected, spec, &wavelengths), Label::Infected),
            ]
        })
        .collect();
    Ok(pairs.into_iter().flatten().collect())
}

/// Per-band class statistics: `(mean_I - mean_H, standard error)` of the
/// per-sample band means.
pub fn band_mean_difference(samples: &[LabeledSample<f32>]) -> Vec<(f64, f64)> {
    let Some(first) = samples.first() else { return Vec::new() };
    let bands = first.cube.bands();
    (0..bands)
        .map(|b| {
            let mut groups: [Vec<f64>; 2] = [Vec::new(), Vec::new()];
            for s in samples {
                let band = s.cube.band(b);
                let m = band.iter().map(|&v| v as f64).sum::<f64>() / band.len() as f64;
                groups[s.label.index()].push(m);
            }
            let stats = |v: &[f64]| {
                let n = v.len() as f64;
                let mean = v.iter().sum::<f64>() / n;
                let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
                (mean, var / n)
            };
            let (mh, vh) = stats(&groups[0]);
            let (mi, vi) = stats(&groups[1]);
            (mi - mh, (vh + vi).sqrt())
        })
        .collect()
}
