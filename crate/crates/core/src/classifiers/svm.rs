//! Soft-margin SVMs with Platt-calibrated probabilities.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::linalg::squared_distance;
use crate::cube::Label;

const LINEAR_C: f64 = 0.025;
const LINEAR_TOL: f64 = 1e-4;
const LINEAR_MAX_EPOCHS: usize = 1000;
const RBF_GAMMA: f64 = 2.0;
const RBF_C: f64 = 1.0;
const RBF_TOL: f64 = 1e-3;
const TAU: f64 = 1e-12;

fn sign(l: Label) -> f64 {
    match l {
        Label::Healthy => -1.0,
        Label::Infected => 1.0,
    }
}

/// Logistic map `P(I | f) = 1 / (1 + exp(a f + b))` from decision values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub(crate) struct Platt {
    pub a: f64,
    pub b: f64,
}

impl Platt {
    pub fn prob(&self, f: f64) -> f64 {
        let z = self.a * f + self.b;
        if z >= 0.0 {
            let e = (-z).exp();
            e / (1.0 + e)
        } else {
            1.0 / (1.0 + z.exp())
        }
    }

    /// Newton fit with backtracking on smoothed targets, following Lin,
    /// Lin and Weng's numerically careful variant of Platt's method.
    pub fn fit(dec: &[f64], y: &[Label]) -> Platt {
        let n1 = y.iter().filter(|&&l| l == Label::Infected).count() as f64;
        let n0 = y.len() as f64 - n1;
        let hi = (n1 + 1.0) / (n1 + 2.0);
        let lo = 1.0 / (n0 + 2.0);
        let t: Vec<f64> = y.iter().map(|&l| if l == Label::Infected { hi } else { lo }).collect();
        let objective = |a: f64, b: f64| -> f64 {
            dec.iter()
                .zip(&t)
                .map(|(&f, &ti)| {
                    let z = f * a + b;
                    if z >= 0.0 {
                        ti * z + (-z).exp().ln_1p()
                    } else {
                        (ti - 1.0) * z + z.exp().ln_1p()
                    }
                })
                .sum()
        };
        let (mut a, mut b) = (0.0, ((n0 + 1.0) / (n1 + 1.0)).ln());
        let mut fval = objective(a, b);
        for _ in 0..100 {
            let (mut h11, mut h22, mut h21, mut g1, mut g2) = (1e-12, 1e-12, 0.0, 0.0, 0.0);
            for (&f, &ti) in dec.iter().zip(&t) {
                let z = f * a + b;
                let (p, q) = if z >= 0.0 {
                    let e = (-z).exp();
                    (e / (1.0 + e), 1.0 / (1.0 + e))
                } else {
                    let e = z.exp();
                    (1.0 / (1.0 + e), e / (1.0 + e))
                };
                let d2 = p * q;
                h11 += f * f * d2;
                h22 += d2;
                h21 += f * d2;
                let d1 = ti - p;
                g1 += f * d1;
                g2 += d1;
            }
            if g1.abs() < 1e-5 && g2.abs() < 1e-5 {
                break;
            }
            let det = h11 * h22 - h21 * h21;
            let da = -(h22 * g1 - h21 * g2) / det;
            let db = -(-h21 * g1 + h11 * g2) / det;
            let gd = g1 * da + g2 * db;
            let mut step = 1.0;
            while step >= 1e-10 {
                let (na, nb) = (a + step * da, b + step * db);
                let nf = objective(na, nb);
                if nf < fval + 1e-4 * step * gd {
                    (a, b, fval) = (na, nb, nf);
                    break;
                }
                step /= 2.0;
            }
            if step < 1e-10 {
                break;
            }
        }
        Platt { a, b }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub(crate) struct LinearSvm {
    w: Vec<f64>,
    bias: f64,
    platt: Platt,
}

impl LinearSvm {
    /// Dual coordinate descent on the hinge-loss dual, bias folded in as a
    /// constant feature.
    pub fn fit(x: &[Vec<f64>], y: &[Label], seed: u64) -> Self {
        let n = x.len();
        let d = x[0].len();
        let ys: Vec<f64> = y.iter().map(|&l| sign(l)).collect();
        let qii: Vec<f64> = x.iter().map(|r| r.iter().map(|v| v * v).sum::<f64>() + 1.0).collect();
        let mut alpha = vec![0.0; n];
        let mut w = vec![0.0; d];
        let mut bias = 0.0;
        let mut order: Vec<usize> = (0..n).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..LINEAR_MAX_EPOCHS {
            order.shuffle(&mut rng);
            let (mut pg_max, mut pg_min) = (f64::NEG_INFINITY, f64::INFINITY);
            for &i in &order {
                let g = ys[i] * (dot(&w, &x[i]) + bias) - 1.0;
                let pg = if alpha[i] <= 0.0 {
                    g.min(0.0)
                } else if alpha[i] >= LINEAR_C {
                    g.max(0.0)
                } else {
                    g
                };
                pg_max = pg_max.max(pg);
                pg_min = pg_min.min(pg);
                if pg.abs() > 1e-12 {
                    let old = alpha[i];
                    alpha[i] = (old - g / qii[i]).clamp(0.0, LINEAR_C);
                    let step = (alpha[i] - old) * ys[i];
                    for (wj, xj) in w.iter_mut().zip(&x[i]) {
                        *wj += step * xj;
                    }
                    bias += step;
                }
            }
            if pg_max - pg_min < LINEAR_TOL {
                break;
            }
        }
        let dec: Vec<f64> = x.iter().map(|r| dot(&w, r) + bias).collect();
        let platt = Platt::fit(&dec, y);
        LinearSvm { w, bias, platt }
    }

    pub fn decision(&self, q: &[f64]) -> f64 {
        dot(&self.w, q) + self.bias
    }

    pub fn prob_infected(&self, q: &[f64]) -> f64 {
        self.platt.prob(self.decision(q))
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn rbf(a: &[f64], b: &[f64]) -> f64 {
    (-RBF_GAMMA * squared_distance(a, b)).exp()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub(crate) struct RbfSvm {
    support: Vec<Vec<f64>>,
    /// `y_i * alpha_i` for each support vector.
    coef: Vec<f64>,
    rho: f64,
    platt: Platt,
}

impl RbfSvm {
    /// SMO with second-order working-set selection.
    pub fn fit(x: &[Vec<f64>], y: &[Label]) -> Self {
        let n = x.len();
        let ys: Vec<f64> = y.iter().map(|&l| sign(l)).collect();
        let mut k = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..=i {
                let v = rbf(&x[i], &x[j]);
                k[i * n + j] = v;
                k[j * n + i] = v;
            }
        }
        let q = |i: usize, j: usize| ys[i] * ys[j] * k[i * n + j];
        let c = RBF_C;
        let mut alpha = vec![0.0; n];
        let mut grad = vec![-1.0; n];
        let up = |a: f64, s: f64| (s > 0.0 && a < c) || (s < 0.0 && a > 0.0);
        let low = |a: f64, s: f64| (s > 0.0 && a > 0.0) || (s < 0.0 && a < c);
        let max_iter = (100 * n).max(10_000);

        for _ in 0..max_iter {
            let mut gmax = f64::NEG_INFINITY;
            let mut i = usize::MAX;
            for t in 0..n {
                if up(alpha[t], ys[t]) && -ys[t] * grad[t] > gmax {
                    gmax = -ys[t] * grad[t];
                    i = t;
                }
            }
            let mut gmin = f64::INFINITY;
            let mut j = usize::MAX;
            let mut best = f64::INFINITY;
            for t in 0..n {
                if !low(alpha[t], ys[t]) {
                    continue;
                }
                let v = -ys[t] * grad[t];
                gmin = gmin.min(v);
                if i == usize::MAX {
                    continue;
                }
                let b = gmax - v;
                if b > 0.0 {
                    let mut a = k[i * n + i] + k[t * n + t] - 2.0 * k[i * n + t];
                    if a <= 0.0 {
                        a = TAU;
                    }
                    let obj = -(b * b) / a;
                    if obj < best {
                        best = obj;
                        j = t;
                    }
                }
            }
            if i == usize::MAX || j == usize::MAX || gmax - gmin < RBF_TOL {
                break;
            }

            let (old_i, old_j) = (alpha[i], alpha[j]);
            if ys[i] != ys[j] {
                let quad = (q(i, i) + q(j, j) + 2.0 * q(i, j)).max(TAU);
                let delta = (-grad[i] - grad[j]) / quad;
                let diff = alpha[i] - alpha[j];
                alpha[i] += delta;
                alpha[j] += delta;
                if diff > 0.0 {
                    if alpha[j] < 0.0 {
                        alpha[j] = 0.0;
                        alpha[i] = diff;
                    }
                } else if alpha[i] < 0.0 {
                    alpha[i] = 0.0;
                    alpha[j] = -diff;
                }
                if diff > 0.0 {
                    if alpha[i] > c {
                        alpha[i] = c;
                        alpha[j] = c - diff;
                    }
                } else if alpha[j] > c {
                    alpha[j] = c;
                    alpha[i] = c + diff;
                }
            } else {
                let quad = (q(i, i) + q(j, j) - 2.0 * q(i, j)).max(TAU);
                let delta = (grad[i] - grad[j]) / quad;
                let sum = alpha[i] + alpha[j];
                alpha[i] -= delta;
                alpha[j] += delta;
                if sum > c {
                    if alpha[i] > c {
                        alpha[i] = c;
                        alpha[j] = sum - c;
                    }
                } else if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = sum;
                }
                if sum > c {
                    if alpha[j] > c {
                        alpha[j] = c;
                        alpha[i] = sum - c;
                    }
                } else if alpha[i] < 0.0 {
                    alpha[i] = 0.0;
                    alpha[j] = sum;
                }
            }
            let (di, dj) = (alpha[i] - old_i, alpha[j] - old_j);
            for t in 0..n {
                grad[t] += q(t, i) * di + q(t, j) * dj;
            }
        }

        // Offset from free vectors, else the midpoint of the feasible band.
        let (mut sum, mut nfree) = (0.0, 0usize);
        let (mut ub, mut lb) = (f64::INFINITY, f64::NEG_INFINITY);
        for t in 0..n {
            let yg = ys[t] * grad[t];
            if alpha[t] >= c {
                if ys[t] < 0.0 {
                    ub = ub.min(yg);
                } else {
                    lb = lb.max(yg);
                }
            } else if alpha[t] <= 0.0 {
                if ys[t] > 0.0 {
                    ub = ub.min(yg);
                } else {
                    lb = lb.max(yg);
                }
            } else {
                nfree += 1;
                sum += yg;
            }
        }
        let rho = if nfree > 0 { sum / nfree as f64 } else { (ub + lb) / 2.0 };

        let mut support = Vec::new();
        let mut coef = Vec::new();
        for t in 0..n {
            if alpha[t] > 0.0 {
                support.push(x[t].clone());
                coef.push(ys[t] * alpha[t]);
            }
        }
        let mut m = RbfSvm { support, coef, rho, platt: Platt { a: -1.0, b: 0.0 } };
        let dec: Vec<f64> = x.iter().map(|r| m.decision(r)).collect();
        m.platt = Platt::fit(&dec, y);
        m
    }

    pub fn decision(&self, q: &[f64]) -> f64 {
        self.support.iter().zip(&self.coef).map(|(s, c)| c * rbf(s, q)).sum::<f64>() - self.rho
    }

    pub fn prob_infected(&self, q: &[f64]) -> f64 {
        self.platt.prob(self.decision(q))
    }
}
