//! Gaussian-process regression on 0/1 targets, thresholded at 0.5.

use serde::{Deserialize, Serialize};

use super::linalg::{backward_sub, forward_sub, regularized_cholesky, squared_distance};
use super::target;
use crate::cube::Label;

const LENGTH_SCALE: f64 = 1.0;
const JITTER: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub(crate) struct GpRegressor {
    x: Vec<Vec<f64>>,
    alpha: Vec<f64>,
}

fn kernel(a: &[f64], b: &[f64]) -> f64 {
    (-squared_distance(a, b) / (2.0 * LENGTH_SCALE * LENGTH_SCALE)).exp()
}

impl GpRegressor {
    pub fn fit(x: &[Vec<f64>], y: &[Label], warnings: &mut Vec<String>) -> Self {
        let n = x.len();
        let mut k = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..=i {
                let v = kernel(&x[i], &x[j]);
                k[i * n + j] = v;
                k[j * n + i] = v;
            }
        }
        let (l, jitter) = regularized_cholesky(&k, n, JITTER);
        if jitter > JITTER {
            warnings.push(format!("kernel matrix needed jitter {jitter:e}"));
        }
        let t: Vec<f64> = y.iter().map(|&l| target(l)).collect();
        let alpha = backward_sub(&l, n, &forward_sub(&l, n, &t));
        GpRegressor { x: x.to_vec(), alpha }
    }

    /// Posterior mean, clipped to [0, 1].
    pub fn prob_infected(&self, q: &[f64]) -> f64 {
        let m: f64 = self.x.iter().zip(&self.alpha).map(|(r, a)| a * kernel(r, q)).sum();
        m.clamp(0.0, 1.0)
    }
}
