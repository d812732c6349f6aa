//! CART trees (Gini) and bagged forests of them.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cube::Label;
use crate::seed::derive_seed;

const MAX_DEPTH: usize = 5;
const FOREST_TREES: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct TreeParams {
    pub max_depth: usize,
    /// Features examined per split; `None` means all.
    pub max_features: Option<usize>,
}

impl Default for TreeParams {
    fn default() -> Self {
        TreeParams { max_depth: MAX_DEPTH, max_features: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
enum Node {
    Leaf { p_infected: f64 },
    Split { feature: usize, threshold: f64, left: usize, right: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    nodes: Vec<Node>,
}

fn gini(w0: f64, w1: f64) -> f64 {
    let w = w0 + w1;
    if w <= 0.0 {
        return 0.0;
    }
    let (p0, p1) = (w0 / w, w1 / w);
    1.0 - p0 * p0 - p1 * p1
}

struct Builder<'a> {
    x: &'a [Vec<f64>],
    y: &'a [Label],
    w: &'a [f64],
    params: TreeParams,
    rng: ChaCha8Rng,
    nodes: Vec<Node>,
}

impl Builder<'_> {
    fn class_weights(&self, idx: &[usize]) -> (f64, f64) {
        idx.iter().fold((0.0, 0.0), |(a, b), &i| match self.y[i] {
            Label::Healthy => (a + self.w[i], b),
            Label::Infected => (a, b + self.w[i]),
        })
    }

    /// Features are visited in random order. With `max_features = m` the
    /// search stops after `m` non-constant features, or later if none of
    /// them gave a valid split yet.
    fn best_split(&mut self, idx: &[usize], w0: f64, w1: f64) -> Option<(usize, f64)> {
        let d = self.x[0].len();
        let (features, budget): (Vec<usize>, usize) = match self.params.max_features {
            Some(m) if m < d => (sample(&mut self.rng, d, d).into_vec(), m),
            _ => ((0..d).collect(), d),
        };
        let total = w0 + w1;
        let parent = gini(w0, w1);
        let mut best: Option<(f64, usize, f64)> = None;
        let mut visited = 0;
        let mut order = idx.to_vec();
        for f in features {
            if visited >= budget && best.is_some() {
                break;
            }
            order.sort_by(|&a, &b| self.x[a][f].total_cmp(&self.x[b][f]));
            if self.x[order[0]][f] >= self.x[order[order.len() - 1]][f] {
                continue;
            }
            visited += 1;
            let (mut l0, mut l1) = (0.0, 0.0);
            for k in 0..order.len() - 1 {
                let i = order[k];
                match self.y[i] {
                    Label::Healthy => l0 += self.w[i],
                    Label::Infected => l1 += self.w[i],
                }
                let (v, next) = (self.x[i][f], self.x[order[k + 1]][f]);
                if next <= v {
                    continue;
                }
                let (r0, r1) = (w0 - l0, w1 - l1);
                let score = ((l0 + l1) * gini(l0, l1) + (r0 + r1) * gini(r0, r1)) / total;
                if score < parent - 1e-12 && best.is_none_or(|b| score < b.0) {
                    best = Some((score, f, v + (next - v) / 2.0));
                }
            }
        }
        best.map(|(_, f, t)| (f, t))
    }

    fn grow(&mut self, idx: &[usize], depth: usize) -> usize {
        let (w0, w1) = self.class_weights(idx);
        let id = self.nodes.len();
        let p_infected = if w0 + w1 > 0.0 { w1 / (w0 + w1) } else { 0.0 };
        self.nodes.push(Node::Leaf { p_infected });
        if depth >= self.params.max_depth || w0 <= 0.0 || w1 <= 0.0 || idx.len() < 2 {
            return id;
        }
        let Some((feature, threshold)) = self.best_split(idx, w0, w1) else { return id };
        let (li, ri): (Vec<usize>, Vec<usize>) = idx.iter().partition(|&&i| self.x[i][feature] <= threshold);
        let left = self.grow(&li, depth + 1);
        let right = self.grow(&ri, depth + 1);
        self.nodes[id] = Node::Split { feature, threshold, left, right };
        id
    }
}

impl DecisionTree {
    pub(crate) fn fit(x: &[Vec<f64>], y: &[Label], weights: Option<&[f64]>, params: TreeParams, seed: u64) -> Self {
        let uniform;
        let w = match weights {
            Some(w) => w,
            None => {
                uniform = vec![1.0; x.len()];
                &uniform
            }
        };
        let idx: Vec<usize> = (0..x.len()).filter(|&i| w[i] > 0.0).collect();
        let mut b = Builder { x, y, w, params, rng: ChaCha8Rng::seed_from_u64(seed), nodes: Vec::new() };
        b.grow(&idx, 0);
        DecisionTree { nodes: b.nodes }
    }

    pub(crate) fn prob_infected(&self, q: &[f64]) -> f64 {
        let mut at = 0;
        loop {
            match &self.nodes[at] {
                Node::Leaf { p_infected } => return *p_infected,
                Node::Split { feature, threshold, left, right } => {
                    at = if q[*feature] <= *threshold { *left } else { *right };
                }
            }
        }
    }

    /// Number of splits on the longest root-to-leaf path.
    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], at: usize) -> usize {
            match &nodes[at] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, *left).max(walk(nodes, *right)),
            }
        }
        walk(&self.nodes, 0)
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub(crate) struct RandomForest {
    trees: Vec<DecisionTree>,
}

impl RandomForest {
    pub fn fit(x: &[Vec<f64>], y: &[Label], seed: u64) -> Self {
        let n = x.len();
        let d = x[0].len();
        let params = TreeParams { max_depth: MAX_DEPTH, max_features: Some(((d as f64).sqrt() as usize).max(1)) };
        let trees = (0..FOREST_TREES as u64)
            .map(|t| {
                let s = derive_seed(seed, &[t]);
                let mut rng = ChaCha8Rng::seed_from_u64(s);
                // Bootstrap draw expressed as per-sample multiplicities.
                let mut counts = vec![0.0; n];
                for _ in 0..n {
                    counts[rng.random_range(0..n)] += 1.0;
                }
                DecisionTree::fit(x, y, Some(&counts), params, derive_seed(s, &[1]))
            })
            .collect();
        RandomForest { trees }
    }

    pub fn prob_infected(&self, q: &[f64]) -> f64 {
        self.trees.iter().map(|t| t.prob_infected(q)).sum::<f64>() / self.trees.len() as f64
    }
}
