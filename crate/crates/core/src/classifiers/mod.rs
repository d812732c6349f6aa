//! The ten classical classifiers trained on frozen CNN features.
//!
//! All kinds share one pipeline: features are standardised with statistics
//! from the training set, then the kind-specific model is fitted. Every
//! model reports a probability of class I; `predict` is the argmax of that
//! pair with ties going to H, so the two can never disagree.

mod bayes;
mod boost;
mod gp;
mod knn;
pub(crate) mod linalg;
mod mlp;
mod svm;
mod tree;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cube::Label;

pub use tree::DecisionTree;

pub const CLASSIFIER_MAGIC: &[u8; 4] = b"SDSC";
const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error, PartialEq)]
pub enum ClassifierError {
    #[error("degenerate training set: {0}")]
    DegenerateDataset(String),
    #[error("feature width {got} does not match model width {expected}")]
    WidthMismatch { expected: usize, got: usize },
    #[error("non-finite feature at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },
    #[error("invalid classifier blob: {0}")]
    Format(String),
    #[error("unknown classifier kind {0:?}")]
    UnknownKind(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ClassifierKind {
    NearestNeighbors,
    LinearSVM,
    RbfSVM,
    GaussianProcess,
    DecisionTree,
    RandomForest,
    NeuralNet,
    AdaBoost,
    NaiveBayes,
    QDA,
}

impl ClassifierKind {
    pub const ALL: [ClassifierKind; 10] = [
        ClassifierKind::NearestNeighbors,
        ClassifierKind::LinearSVM,
        ClassifierKind::RbfSVM,
        ClassifierKind::GaussianProcess,
        ClassifierKind::DecisionTree,
        ClassifierKind::RandomForest,
        ClassifierKind::NeuralNet,
        ClassifierKind::AdaBoost,
        ClassifierKind::NaiveBayes,
        ClassifierKind::QDA,
    ];

    /// Display name as used in result tables.
    pub fn name(self) -> &'static str {
        match self {
            ClassifierKind::NearestNeighbors => "Nearest Neighbors",
            ClassifierKind::LinearSVM => "Linear SVM",
            ClassifierKind::RbfSVM => "RBF SVM",
            ClassifierKind::GaussianProcess => "Gaussian Process",
            ClassifierKind::DecisionTree => "Decision Tree",
            ClassifierKind::RandomForest => "Random Forest",
            ClassifierKind::NeuralNet => "Neural Net",
            ClassifierKind::AdaBoost => "AdaBoost",
            ClassifierKind::NaiveBayes => "Naive Bayes",
            ClassifierKind::QDA => "QDA",
        }
    }

    /// Stable identifier for files, URLs and CLI flags.
    pub fn slug(self) -> &'static str {
        match self {
            ClassifierKind::NearestNeighbors => "knn",
            ClassifierKind::LinearSVM => "linear-svm",
            ClassifierKind::RbfSVM => "rbf-svm",
            ClassifierKind::GaussianProcess => "gp",
            ClassifierKind::DecisionTree => "decision-tree",
            ClassifierKind::RandomForest => "random-forest",
            ClassifierKind::NeuralNet => "neural-net",
            ClassifierKind::AdaBoost => "adaboost",
            ClassifierKind::NaiveBayes => "naive-bayes",
            ClassifierKind::QDA => "qda",
        }
    }

    pub(crate) fn tag(self) -> u8 {
        ClassifierKind::ALL.iter().position(|&k| k == self).expect("listed") as u8
    }
}

impl fmt::Display for ClassifierKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ClassifierKind {
    type Err = ClassifierError;

    /// Accepts the slug, the display name, or the variant name, ignoring
    /// case, spaces, dashes and underscores.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm = |t: &str| t.chars().filter(|c| c.is_alphanumeric()).collect::<String>().to_lowercase();
        let want = norm(s);
        ClassifierKind::ALL
            .into_iter()
            .find(|k| norm(k.slug()) == want || norm(k.name()) == want || norm(&format!("{k:?}")) == want)
            .ok_or_else(|| ClassifierError::UnknownKind(s.to_string()))
    }
}

/// Feature rows with their labels.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    rows: Vec<Vec<f64>>,
    labels: Vec<Label>,
}

impl FeatureMatrix {
    pub fn new(rows: Vec<Vec<f64>>, labels: Vec<Label>) -> Result<Self, ClassifierError> {
        if rows.len() != labels.len() {
            return Err(ClassifierError::DegenerateDataset(format!("{} rows but {} labels", rows.len(), labels.len())));
        }
        let width = rows.first().map_or(0, Vec::len);
        check_rows(&rows, width)?;
        Ok(FeatureMatrix { rows, labels })
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn width(&self) -> usize {
        self.rows.first().map_or(0, Vec::len)
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn labels(&self) -> &[Label] {
        &self.labels
    }
}

fn check_rows(rows: &[Vec<f64>], width: usize) -> Result<(), ClassifierError> {
    for (r, row) in rows.iter().enumerate() {
        if row.len() != width {
            return Err(ClassifierError::WidthMismatch { expected: width, got: row.len() });
        }
        if let Some(c) = row.iter().position(|v| !v.is_finite()) {
            return Err(ClassifierError::NonFinite { row: r, col: c });
        }
    }
    Ok(())
}

/// Per-feature z-scoring. Constant features are centred but not scaled.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Standardizer {
    mean: Vec<f64>,
    inv_std: Vec<f64>,
}

impl Standardizer {
    fn fit(rows: &[Vec<f64>]) -> Self {
        let d = rows[0].len();
        let n = rows.len() as f64;
        let mut mean = vec![0.0; d];
        for r in rows {
            for (m, v) in mean.iter_mut().zip(r) {
                *m += v / n;
            }
        }
        let mut var = vec![0.0; d];
        for r in rows {
            for ((s, v), m) in var.iter_mut().zip(r).zip(&mean) {
                *s += (v - m) * (v - m) / n;
            }
        }
        let inv_std = var.iter().map(|&v| if v > 1e-24 { 1.0 / v.sqrt() } else { 1.0 }).collect();
        Standardizer { mean, inv_std }
    }

    fn apply(&self, row: &[f64]) -> Vec<f64> {
        row.iter().zip(&self.mean).zip(&self.inv_std).map(|((v, m), s)| (v - m) * s).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
enum Model {
    Knn(knn::Knn),
    LinearSvm(svm::LinearSvm),
    RbfSvm(svm::RbfSvm),
    Gp(gp::GpRegressor),
    Tree(DecisionTree),
    Forest(tree::RandomForest),
    Mlp(mlp::Mlp),
    AdaBoost(boost::AdaBoost),
    NaiveBayes(bayes::GaussianNb),
    Qda(bayes::Qda),
}

impl Model {
    fn prob_infected(&self, x: &[f64]) -> f64 {
        match self {
            Model::Knn(m) => m.prob_infected(x, m.k),
            Model::LinearSvm(m) => m.prob_infected(x),
            Model::RbfSvm(m) => m.prob_infected(x),
            Model::Gp(m) => m.prob_infected(x),
            Model::Tree(m) => m.prob_infected(x),
            Model::Forest(m) => m.prob_infected(x),
            Model::Mlp(m) => m.prob_infected(x),
            Model::AdaBoost(m) => m.prob_infected(x),
            Model::NaiveBayes(m) => m.prob_infected(x),
            Model::Qda(m) => m.prob_infected(x),
        }
    }
}

/// A fitted classifier; pure after construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedClassifier {
    kind: ClassifierKind,
    train_seed: u64,
    scaler: Standardizer,
    model: Model,
    /// Non-fatal conditions met while fitting, e.g. a regularised covariance.
    warnings: Vec<String>,
}

/// Encodes `H = 0`, `I = 1`.
pub(crate) fn target(label: Label) -> f64 {
    label.index() as f64
}

pub fn fit(kind: ClassifierKind, data: &FeatureMatrix, seed: u64) -> Result<TrainedClassifier, ClassifierError> {
    let n_i = data.labels.iter().filter(|&&l| l == Label::Infected).count();
    if data.len() < 2 || n_i == 0 || n_i == data.len() {
        return Err(ClassifierError::DegenerateDataset(format!(
            "need both classes; got {} H and {} I",
            data.len() - n_i,
            n_i
        )));
    }
    if data.width() == 0 {
        return Err(ClassifierError::DegenerateDataset("zero-width features".into()));
    }
    let scaler = Standardizer::fit(&data.rows);
    let x: Vec<Vec<f64>> = data.rows.iter().map(|r| scaler.apply(r)).collect();
    let y = &data.labels;
    let mut warnings = Vec::new();
    let model = match kind {
        ClassifierKind::NearestNeighbors => Model::Knn(knn::Knn::fit(&x, y)),
        ClassifierKind::LinearSVM => Model::LinearSvm(svm::LinearSvm::fit(&x, y, seed)),
        ClassifierKind::RbfSVM => Model::RbfSvm(svm::RbfSvm::fit(&x, y)),
        ClassifierKind::GaussianProcess => Model::Gp(gp::GpRegressor::fit(&x, y, &mut warnings)),
        ClassifierKind::DecisionTree => Model::Tree(DecisionTree::fit(&x, y, None, tree::TreeParams::default(), seed)),
        ClassifierKind::RandomForest => Model::Forest(tree::RandomForest::fit(&x, y, seed)),
        ClassifierKind::NeuralNet => Model::Mlp(mlp::Mlp::fit(&x, y, seed)),
        ClassifierKind::AdaBoost => Model::AdaBoost(boost::AdaBoost::fit(&x, y, seed)),
        ClassifierKind::NaiveBayes => Model::NaiveBayes(bayes::GaussianNb::fit(&x, y)),
        ClassifierKind::QDA => Model::Qda(bayes::Qda::fit(&x, y, &mut warnings)),
    };
    for w in &warnings {
        log::warn!("{}: {w}", kind.name());
    }
    Ok(TrainedClassifier { kind, train_seed: seed, scaler, model, warnings })
}

impl TrainedClassifier {
    pub fn kind(&self) -> ClassifierKind {
        self.kind
    }

    pub fn train_seed(&self) -> u64 {
        self.train_seed
    }

    pub fn width(&self) -> usize {
        self.scaler.mean.len()
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    fn check(&self, rows: &[Vec<f64>]) -> Result<(), ClassifierError> {
        check_rows(rows, self.width())
    }

    /// Rows of `(P(H), P(I))`.
    pub fn predict_proba(&self, rows: &[Vec<f64>]) -> Result<Vec<[f64; 2]>, ClassifierError> {
        self.check(rows)?;
        Ok(rows
            .iter()
            .map(|r| {
                let p = self.model.prob_infected(&self.scaler.apply(r)).clamp(0.0, 1.0);
                [1.0 - p, p]
            })
            .collect())
    }

    pub fn predict(&self, rows: &[Vec<f64>]) -> Result<Vec<Label>, ClassifierError> {
        Ok(self.predict_proba(rows)?.into_iter().map(argmax).collect())
    }

    /// Nearest-neighbour vote with a different `k`; `None` for other kinds.
    pub fn predict_with_k(&self, rows: &[Vec<f64>], k: usize) -> Result<Option<Vec<Label>>, ClassifierError> {
        self.check(rows)?;
        let Model::Knn(m) = &self.model else { return Ok(None) };
        Ok(Some(
            rows.iter()
                .map(|r| {
                    let p = m.prob_infected(&self.scaler.apply(r), k);
                    argmax([1.0 - p, p])
                })
                .collect(),
        ))
    }

    /// The fitted tree, for structural checks.
    pub fn decision_tree(&self) -> Option<&DecisionTree> {
        match &self.model {
            Model::Tree(t) => Some(t),
            _ => None,
        }
    }

    /// Versioned envelope: magic, `u32` LE version, kind tag byte, then the
    /// bincode-encoded model.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(CLASSIFIER_MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.push(self.kind.tag());
        out.extend(bincode::serialize(self).expect("in-memory serialization"));
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, ClassifierError> {
        let fmt = |m: &str| ClassifierError::Format(m.to_string());
        if bytes.len() < 9 || &bytes[..4] != CLASSIFIER_MAGIC {
            return Err(fmt("missing SDSC magic"));
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes"));
        if version != FORMAT_VERSION {
            return Err(fmt(&format!("unsupported version {version}")));
        }
        let model: TrainedClassifier = bincode::deserialize(&bytes[9..]).map_err(|e| fmt(&e.to_string()))?;
        if model.kind.tag() != bytes[8] {
            return Err(fmt("kind tag does not match payload"));
        }
        Ok(model)
    }
}

/// Argmax over (H, I); ties go to H.
pub fn argmax(p: [f64; 2]) -> Label {
    if p[1] > p[0] {
        Label::Infected
    } else {
        Label::Healthy
    }
}
