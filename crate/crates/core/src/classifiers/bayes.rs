//! Generative Gaussian classifiers: diagonal (naive Bayes) and full (QDA).

use serde::{Deserialize, Serialize};

use super::linalg::{cholesky, forward_sub, log_det, regularized_cholesky};
use crate::cube::Label;

const VAR_SMOOTHING: f64 = 1e-9;
const QDA_RIDGE: f64 = 1e-6;

fn split_by_class<'a>(x: &'a [Vec<f64>], y: &[Label]) -> [Vec<&'a [f64]>; 2] {
    let mut out: [Vec<&[f64]>; 2] = [Vec::new(), Vec::new()];
    for (r, l) in x.iter().zip(y) {
        out[l.index()].push(r);
    }
    out
}

fn mean(rows: &[&[f64]], d: usize) -> Vec<f64> {
    let mut m = vec![0.0; d];
    for r in rows {
        for (a, b) in m.iter_mut().zip(r.iter()) {
            *a += b;
        }
    }
    m.iter_mut().for_each(|v| *v /= rows.len() as f64);
    m
}

/// `P(I)` from per-class joint log-likelihoods.
fn posterior(log_h: f64, log_i: f64) -> f64 {
    1.0 / (1.0 + (log_h - log_i).exp())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub(crate) struct GaussianNb {
    means: [Vec<f64>; 2],
    vars: [Vec<f64>; 2],
    log_prior: [f64; 2],
}

impl GaussianNb {
    pub fn fit(x: &[Vec<f64>], y: &[Label]) -> Self {
        let d = x[0].len();
        let all: Vec<&[f64]> = x.iter().map(|r| r.as_slice()).collect();
        let overall = mean(&all, d);
        let max_var = (0..d)
            .map(|f| all.iter().map(|r| (r[f] - overall[f]).powi(2)).sum::<f64>() / all.len() as f64)
            .fold(0.0, f64::max);
        let eps = if max_var > 0.0 { VAR_SMOOTHING * max_var } else { VAR_SMOOTHING };
        let groups = split_by_class(x, y);
        let fit_class = |rows: &[&[f64]]| {
            let m = mean(rows, d);
            let v: Vec<f64> =
                (0..d).map(|f| rows.iter().map(|r| (r[f] - m[f]).powi(2)).sum::<f64>() / rows.len() as f64 + eps).collect();
            (m, v)
        };
        let (m0, v0) = fit_class(&groups[0]);
        let (m1, v1) = fit_class(&groups[1]);
        let n = x.len() as f64;
        GaussianNb {
            means: [m0, m1],
            vars: [v0, v1],
            log_prior: [(groups[0].len() as f64 / n).ln(), (groups[1].len() as f64 / n).ln()],
        }
    }

    fn joint(&self, c: usize, q: &[f64]) -> f64 {
        let ll: f64 = q
            .iter()
            .zip(&self.means[c])
            .zip(&self.vars[c])
            .map(|((x, m), v)| -0.5 * ((2.0 * std::f64::consts::PI * v).ln() + (x - m) * (x - m) / v))
            .sum();
        ll + self.log_prior[c]
    }

    pub fn prob_infected(&self, q: &[f64]) -> f64 {
        posterior(self.joint(0, q), self.joint(1, q))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct GaussianClass {
    mean: Vec<f64>,
    chol: Vec<f64>,
    log_det: f64,
    log_prior: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub(crate) struct Qda {
    d: usize,
    classes: [GaussianClass; 2],
}

impl Qda {
    pub fn fit(x: &[Vec<f64>], y: &[Label], warnings: &mut Vec<String>) -> Self {
        let d = x[0].len();
        let n = x.len() as f64;
        let groups = split_by_class(x, y);
        let mut fit_class = |rows: &[&[f64]], label: Label| {
            let m = mean(rows, d);
            let denom = (rows.len() as f64 - 1.0).max(1.0);
            let mut cov = vec![0.0; d * d];
            for r in rows {
                for i in 0..d {
                    let di = r[i] - m[i];
                    for j in 0..=i {
                        cov[i * d + j] += di * (r[j] - m[j]) / denom;
                    }
                }
            }
            for i in 0..d {
                for j in 0..i {
                    cov[j * d + i] = cov[i * d + j];
                }
            }
            if cholesky(&cov, d).is_none() {
                warnings.push(format!("class {} covariance is singular; regularised with a ridge", label.short()));
            }
            let (chol, ridge) = regularized_cholesky(&cov, d, QDA_RIDGE);
            if ridge > QDA_RIDGE {
                warnings.push(format!("class {} needed ridge {ridge:e}", label.short()));
            }
            GaussianClass { mean: m, log_det: log_det(&chol, d), chol, log_prior: (rows.len() as f64 / n).ln() }
        };
        let h = fit_class(&groups[0], Label::Healthy);
        let i = fit_class(&groups[1], Label::Infected);
        Qda { d, classes: [h, i] }
    }

    fn joint(&self, c: usize, q: &[f64]) -> f64 {
        let g = &self.classes[c];
        let diff: Vec<f64> = q.iter().zip(&g.mean).map(|(a, b)| a - b).collect();
        let z = forward_sub(&g.chol, self.d, &diff);
        -0.5 * (g.log_det + z.iter().map(|v| v * v).sum::<f64>()) + g.log_prior
    }

    pub fn prob_infected(&self, q: &[f64]) -> f64 {
        posterior(self.joint(0, q), self.joint(1, q))
    }
}
