//! Discrete AdaBoost (SAMME) over depth-1 trees.

use serde::{Deserialize, Serialize};

use super::tree::{DecisionTree, TreeParams};
use crate::cube::Label;
use crate::seed::derive_seed;

const ROUNDS: usize = 50;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub(crate) struct AdaBoost {
    stumps: Vec<(DecisionTree, f64)>,
}

fn stump_says_infected(t: &DecisionTree, q: &[f64]) -> bool {
    t.prob_infected(q) > 0.5
}

impl AdaBoost {
    pub fn fit(x: &[Vec<f64>], y: &[Label], seed: u64) -> Self {
        let n = x.len();
        let params = TreeParams { max_depth: 1, max_features: None };
        let mut w = vec![1.0 / n as f64; n];
        let mut stumps = Vec::new();
        for round in 0..ROUNDS as u64 {
            let t = DecisionTree::fit(x, y, Some(&w), params, derive_seed(seed, &[round]));
            let miss: Vec<bool> =
                x.iter().zip(y).map(|(r, &l)| stump_says_infected(&t, r) != (l == Label::Infected)).collect();
            let total: f64 = w.iter().sum();
            let err = miss.iter().zip(&w).filter(|(m, _)| **m).map(|(_, wi)| wi).sum::<f64>() / total;
            if err <= 0.0 {
                stumps.push((t, 1.0));
                break;
            }
            // With two classes SAMME needs better than chance.
            if err >= 0.5 {
                if stumps.is_empty() {
                    stumps.push((t, 1.0));
                }
                break;
            }
            let alpha = ((1.0 - err) / err).ln();
            for (wi, m) in w.iter_mut().zip(&miss) {
                if *m {
                    *wi *= alpha.exp();
                }
            }
            let s: f64 = w.iter().sum();
            w.iter_mut().for_each(|v| *v /= s);
            stumps.push((t, alpha));
        }
        AdaBoost { stumps }
    }

    /// Softmax over the alpha-normalised class votes.
    pub fn prob_infected(&self, q: &[f64]) -> f64 {
        let total: f64 = self.stumps.iter().map(|(_, a)| a).sum();
        let vote_i: f64 =
            self.stumps.iter().filter(|(t, _)| stump_says_infected(t, q)).map(|(_, a)| a).sum::<f64>() / total;
        let vote_h = 1.0 - vote_i;
        1.0 / (1.0 + (vote_h - vote_i).exp())
    }
}
