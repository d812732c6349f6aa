use serde::{Deserialize, Serialize};

use super::linalg::squared_distance;
use crate::cube::Label;

pub(crate) const DEFAULT_K: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub(crate) struct Knn {
    pub k: usize,
    x: Vec<Vec<f64>>,
    y: Vec<Label>,
}

impl Knn {
    pub fn fit(x: &[Vec<f64>], y: &[Label]) -> Self {
        Knn { k: DEFAULT_K, x: x.to_vec(), y: y.to_vec() }
    }

    /// Fraction of the `k` nearest training points labelled I. Equal
    /// distances keep training order.
    pub fn prob_infected(&self, q: &[f64], k: usize) -> f64 {
        let k = k.clamp(1, self.x.len());
        let mut d: Vec<(f64, usize)> = self.x.iter().enumerate().map(|(i, r)| (squared_distance(r, q), i)).collect();
        d.select_nth_unstable_by(k - 1, |a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let votes = d[..k].iter().filter(|(_, i)| self.y[*i] == Label::Infected).count();
        votes as f64 / k as f64
    }
}
