//! One-hidden-layer perceptron with L2 penalty, trained with Adam.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::target;
use crate::cube::Label;

const HIDDEN: usize = 100;
const ALPHA: f64 = 1.0;
const LEARNING_RATE: f64 = 1e-3;
const MAX_EPOCHS: usize = 200;
const BATCH: usize = 200;
const TOL: f64 = 1e-4;
const NO_CHANGE_EPOCHS: usize = 10;

/// Hidden layer `w1: [HIDDEN][d]`, single logistic output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub(crate) struct Mlp {
    d: usize,
    w1: Vec<f64>,
    b1: Vec<f64>,
    w2: Vec<f64>,
    b2: f64,
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

impl Mlp {
    fn hidden(&self, q: &[f64], h: &mut [f64]) {
        for (j, hj) in h.iter_mut().enumerate() {
            let row = &self.w1[j * self.d..(j + 1) * self.d];
            let z: f64 = row.iter().zip(q).map(|(w, x)| w * x).sum::<f64>() + self.b1[j];
            *hj = z.max(0.0);
        }
    }

    pub fn prob_infected(&self, q: &[f64]) -> f64 {
        let mut h = vec![0.0; HIDDEN];
        self.hidden(q, &mut h);
        sigmoid(h.iter().zip(&self.w2).map(|(a, b)| a * b).sum::<f64>() + self.b2)
    }

    /// Mini-batch Adam on mean log-loss plus `ALPHA / (2 n) * |W|^2`; stops
    /// once the epoch loss fails to improve by `TOL` for ten epochs.
    pub fn fit(x: &[Vec<f64>], y: &[Label], seed: u64) -> Self {
        let n = x.len();
        let d = x[0].len();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let glorot = |fan_in: usize, fan_out: usize, len: usize, rng: &mut ChaCha8Rng| -> Vec<f64> {
            let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
            (0..len).map(|_| rng.random_range(-bound..bound)).collect()
        };
        let mut m = Mlp {
            d,
            w1: glorot(d, HIDDEN, HIDDEN * d, &mut rng),
            b1: glorot(d, HIDDEN, HIDDEN, &mut rng),
            w2: glorot(HIDDEN, 1, HIDDEN, &mut rng),
            b2: glorot(HIDDEN, 1, 1, &mut rng)[0],
        };
        let n_params = HIDDEN * d + HIDDEN + HIDDEN + 1;
        let mut adam_m = vec![0.0; n_params];
        let mut adam_v = vec![0.0; n_params];
        let mut step = 0i32;
        let t: Vec<f64> = y.iter().map(|&l| target(l)).collect();
        let mut order: Vec<usize> = (0..n).collect();
        let mut best_loss = f64::INFINITY;
        let mut stale = 0;
        let mut h = vec![0.0; HIDDEN];
        let mut g = vec![0.0; n_params];

        for _ in 0..MAX_EPOCHS {
            order.shuffle(&mut rng);
            let mut epoch_loss = 0.0;
            for batch in order.chunks(BATCH) {
                g.iter_mut().for_each(|v| *v = 0.0);
                let bn = batch.len() as f64;
                for &i in batch {
                    m.hidden(&x[i], &mut h);
                    let z: f64 = h.iter().zip(&m.w2).map(|(a, b)| a * b).sum::<f64>() + m.b2;
                    let p = sigmoid(z);
                    epoch_loss += -(t[i] * p.max(1e-15).ln() + (1.0 - t[i]) * (1.0 - p).max(1e-15).ln());
                    let dz = (p - t[i]) / bn;
                    let (gw1, rest) = g.split_at_mut(HIDDEN * d);
                    let (gb1, rest) = rest.split_at_mut(HIDDEN);
                    let (gw2, gb2) = rest.split_at_mut(HIDDEN);
                    gb2[0] += dz;
                    for j in 0..HIDDEN {
                        gw2[j] += dz * h[j];
                        if h[j] > 0.0 {
                            let dh = dz * m.w2[j];
                            gb1[j] += dh;
                            for (gw, xv) in gw1[j * d..(j + 1) * d].iter_mut().zip(&x[i]) {
                                *gw += dh * xv;
                            }
                        }
                    }
                }
                // L2 on weights only, normalised by the batch size.
                let reg = ALPHA / bn;
                for (k, w) in m.w1.iter().enumerate() {
                    g[k] += reg * w;
                }
                for (j, w) in m.w2.iter().enumerate() {
                    g[HIDDEN * d + HIDDEN + j] += reg * w;
                }
                step += 1;
                let bc1 = 1.0 - 0.9f64.powi(step);
                let bc2 = 1.0 - 0.999f64.powi(step);
                let mut k = 0;
                for p in m.w1.iter_mut().chain(m.b1.iter_mut()).chain(m.w2.iter_mut()).chain(std::iter::once(&mut m.b2)) {
                    adam_m[k] = 0.9 * adam_m[k] + 0.1 * g[k];
                    adam_v[k] = 0.999 * adam_v[k] + 0.001 * g[k] * g[k];
                    *p -= LEARNING_RATE * (adam_m[k] / bc1) / ((adam_v[k] / bc2).sqrt() + 1e-8);
                    k += 1;
                }
            }
            let sq: f64 = m.w1.iter().chain(&m.w2).map(|w| w * w).sum();
            let loss = epoch_loss / n as f64 + ALPHA * sq / (2.0 * n as f64);
            if loss > best_loss - TOL {
                stale += 1;
                if stale >= NO_CHANGE_EPOCHS {
                    break;
                }
            } else {
                stale = 0;
            }
            best_loss = best_loss.min(loss);
        }
        m
    }
}
