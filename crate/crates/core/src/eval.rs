//! Stratified k-fold evaluation of the CNN-feature pipeline.
//!
//! Every fold trains its own CNN on the fold's training part, freezes it,
//! and fits each requested classifier on the 64-wide activations. Metrics
//! use hard labels; the mean squared error of 0/1 labels is therefore just
//! the error rate.

use std::fmt;
use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bandga::{select_gene_bands, GaError};
use crate::classifiers::{self, ClassifierError, ClassifierKind, FeatureMatrix, TrainedClassifier};
use crate::cnn::{self, CnnError, CnnModel, TrainConfig};
use crate::cube::{HyperCube, Label, LabeledSample};
use crate::preprocess::wavelength_of_band;
use crate::scalar::Scalar;
use crate::seed::derive_seed;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("class {class} has {have} samples, fewer than the {k} folds")]
    TooFewPerClass { class: &'static str, have: usize, k: usize },
    #[error("label vectors differ in length ({truth} vs {predicted})")]
    LengthMismatch { truth: usize, predicted: usize },
    #[error("confusion matrix is empty")]
    EmptyMatrix,
    #[error("invalid evaluation config: {0}")]
    BadConfig(String),
    #[error(transparent)]
    Bands(#[from] GaError),
    #[error("fold {fold}: CNN training failed: {source}")]
    Cnn { fold: usize, source: CnnError },
    #[error("fold {fold}, {kind}: {source}")]
    Classifier { fold: usize, kind: ClassifierKind, source: ClassifierError },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fold {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldSplit {
    pub k: usize,
    pub seed: u64,
    pub folds: Vec<Fold>,
}

/// Shuffles each class with `seed` and deals its members round-robin into
/// `k` folds. The dealing position carries over from one class to the next,
/// so remainders are spread instead of piling up in the first folds.
pub fn stratified_kfold(labels: &[Label], k: usize, seed: u64) -> Result<FoldSplit, EvalError> {
    if k < 2 {
        return Err(EvalError::BadConfig(format!("need at least 2 folds, got {k}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut tests: Vec<Vec<usize>> = vec![Vec::new(); k];
    let mut next = 0usize;
    for class in Label::ALL {
        let mut members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        if members.len() < k {
            return Err(EvalError::TooFewPerClass { class: class.short(), have: members.len(), k });
        }
        members.shuffle(&mut rng);
        for i in members {
            tests[next % k].push(i);
            next += 1;
        }
    }
    let folds = tests
        .into_iter()
        .map(|mut test| {
            test.sort_unstable();
            let train = (0..labels.len()).filter(|i| test.binary_search(i).is_err()).collect();
            Fold { train, test }
        })
        .collect();
    Ok(FoldSplit { k, seed, folds })
}

/// Counts indexed `[true][predicted]`, H first.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: [[u64; 2]; 2],
}

impl ConfusionMatrix {
    pub fn from_counts(counts: [[u64; 2]; 2]) -> Self {
        ConfusionMatrix { counts }
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn correct(&self) -> u64 {
        self.counts[0][0] + self.counts[1][1]
    }

    pub fn get(&self, truth: Label, predicted: Label) -> u64 {
        self.counts[truth.index()][predicted.index()]
    }

    /// Row-normalised rates; a row with no samples stays all zero.
    pub fn normalized(&self) -> [[f64; 2]; 2] {
        let mut out = [[0.0; 2]; 2];
        for (t, row) in self.counts.iter().enumerate() {
            let n: u64 = row.iter().sum();
            if n > 0 {
                for p in 0..2 {
                    out[t][p] = row[p] as f64 / n as f64;
                }
            }
        }
        out
    }

    pub fn merge(&mut self, other: &ConfusionMatrix) {
        for t in 0..2 {
            for p in 0..2 {
                self.counts[t][p] += other.counts[t][p];
            }
        }
    }
}

pub fn confusion(truth: &[Label], predicted: &[Label]) -> Result<ConfusionMatrix, EvalError> {
    if truth.len() != predicted.len() {
        return Err(EvalError::LengthMismatch { truth: truth.len(), predicted: predicted.len() });
    }
    let mut cm = ConfusionMatrix::default();
    for (t, p) in truth.iter().zip(predicted) {
        cm.counts[t.index()][p.index()] += 1;
    }
    Ok(cm)
}

/// One class treated as the positive class.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    pub mse: f64,
    /// Indexed by [`Label::index`].
    pub per_class: [ClassMetrics; 2],
}

impl Metrics {
    pub fn class(&self, label: Label) -> &ClassMetrics {
        &self.per_class[label.index()]
    }
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

pub fn metrics(cm: &ConfusionMatrix) -> Result<Metrics, EvalError> {
    let total = cm.total();
    if total == 0 {
        return Err(EvalError::EmptyMatrix);
    }
    let accuracy = ratio(cm.correct(), total);
    let per_class = [0usize, 1].map(|c| {
        let o = 1 - c;
        let tp = cm.counts[c][c];
        let fp = cm.counts[o][c];
        let fn_ = cm.counts[c][o];
        let precision = ratio(tp, tp + fp);
        let recall = ratio(tp, tp + fn_);
        let f1 = if precision + recall == 0.0 { 0.0 } else { 2.0 * precision * recall / (precision + recall) };
        ClassMetrics { precision, recall, f1, support: tp + fn_ }
    });
    // Squared error of a 0/1 label is 1 exactly when the label is wrong.
    Ok(Metrics { accuracy, mse: 1.0 - accuracy, per_class })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CvConfig {
    pub folds: usize,
    pub seed: u64,
    /// Per-fold CNN schedule; its seed is replaced by one derived from
    /// `seed` and the fold number.
    pub cnn: TrainConfig,
}

impl Default for CvConfig {
    fn default() -> Self {
        CvConfig { folds: 5, seed: 0, cnn: TrainConfig::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldReport {
    pub fold: usize,
    pub kind: ClassifierKind,
    pub metrics: Metrics,
    pub confusion: ConfusionMatrix,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    pub min: f64,
    pub max: f64,
}

impl Stat {
    pub fn of(values: impl IntoIterator<Item = f64>) -> Stat {
        let (mut n, mut sum, mut min, mut max) = (0usize, 0.0, f64::INFINITY, f64::NEG_INFINITY);
        for v in values {
            n += 1;
            sum += v;
            min = min.min(v);
            max = max.max(v);
        }
        if n == 0 {
            return Stat { mean: f64::NAN, min: f64::NAN, max: f64::NAN };
        }
        Stat { mean: sum / n as f64, min, max }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassSummary {
    pub precision: Stat,
    pub recall: Stat,
    pub f1: Stat,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KindSummary {
    pub kind: ClassifierKind,
    pub accuracy: Stat,
    pub mse: Stat,
    pub per_class: [ClassSummary; 2],
    /// Summed over folds.
    pub confusion: ConfusionMatrix,
    pub normalized_confusion: [[f64; 2]; 2],
}

/// Per-fold CNN training outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CnnFoldInfo {
    pub fold: usize,
    pub train_size: usize,
    pub test_size: usize,
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub best_val_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub version: String,
    pub bands: Vec<usize>,
    pub wavelengths_nm: Vec<f64>,
    pub samples: usize,
    pub config: CvConfig,
    pub cnn: Vec<CnnFoldInfo>,
    /// Ordered by fold, then by the requested kind order.
    pub folds: Vec<FoldReport>,
    pub summary: Vec<KindSummary>,
}

impl CvReport {
    pub fn summary_for(&self, kind: ClassifierKind) -> Option<&KindSummary> {
        self.summary.iter().find(|s| s.kind == kind)
    }

    pub fn to_json(&self) -> Result<String, EvalError> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<CvReport, EvalError> {
        Ok(serde_json::from_str(text)?)
    }

    /// One row per (fold, kind, class).
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), EvalError> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "fold", "kind", "class", "accuracy", "mse", "precision", "recall", "f1", "support", "pred_h", "pred_i",
        ])?;
        for r in &self.folds {
            for class in Label::ALL {
                let m = r.metrics.class(class);
                w.write_record([
                    r.fold.to_string(),
                    r.kind.slug().to_string(),
                    class.short().to_string(),
                    r.metrics.accuracy.to_string(),
                    r.metrics.mse.to_string(),
                    m.precision.to_string(),
                    m.recall.to_string(),
                    m.f1.to_string(),
                    m.support.to_string(),
                    r.confusion.get(class, Label::Healthy).to_string(),
                    r.confusion.get(class, Label::Infected).to_string(),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn save(&self, json_path: &Path, csv_path: Option<&Path>) -> Result<(), EvalError> {
        std::fs::write(json_path, self.to_json()?)?;
        if let Some(p) = csv_path {
            self.write_csv(std::fs::File::create(p)?)?;
        }
        Ok(())
    }
}

impl fmt::Display for CvReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{}-fold CV on {} samples, bands {:?}", self.config.folds, self.samples, self.bands)?;
        writeln!(f, "{:<22} {:>6} {:>6} {:>6} {:>6}", "classifier", "mean", "min", "max", "mse")?;
        for s in &self.summary {
            writeln!(
                f,
                "{:<22} {:>6.3} {:>6.3} {:>6.3} {:>6.3}",
                s.kind.name(),
                s.accuracy.mean,
                s.accuracy.min,
                s.accuracy.max,
                s.mse.mean
            )?;
        }
        Ok(())
    }
}

fn summarize(kind: ClassifierKind, reports: &[&FoldReport]) -> KindSummary {
    let mut cm = ConfusionMatrix::default();
    reports.iter().for_each(|r| cm.merge(&r.confusion));
    let per_class = [0usize, 1].map(|c| ClassSummary {
        precision: Stat::of(reports.iter().map(|r| r.metrics.per_class[c].precision)),
        recall: Stat::of(reports.iter().map(|r| r.metrics.per_class[c].recall)),
        f1: Stat::of(reports.iter().map(|r| r.metrics.per_class[c].f1)),
    });
    KindSummary {
        kind,
        accuracy: Stat::of(reports.iter().map(|r| r.metrics.accuracy)),
        mse: Stat::of(reports.iter().map(|r| r.metrics.mse)),
        per_class,
        confusion: cm,
        normalized_confusion: cm.normalized(),
    }
}

fn features<T: Scalar>(model: &CnnModel<T>, data: &[LabeledSample<T>], idx: &[usize]) -> Result<Vec<Vec<f64>>, CnnError> {
    let inputs: Vec<&[T]> = idx.iter().map(|&i| data[i].cube.data()).collect();
    cnn::extract_features(model, &inputs)
}

fn classifier_seed(seed: u64, fold: usize, kind: ClassifierKind) -> u64 {
    derive_seed(seed, &[fold as u64, kind.tag() as u64])
}

fn run_fold<T: Scalar>(
    fold_no: usize,
    fold: &Fold,
    data: &[LabeledSample<T>],
    kinds: &[ClassifierKind],
    cfg: &CvConfig,
) -> Result<(CnnFoldInfo, Vec<FoldReport>), EvalError> {
    let cnn_err = |source| EvalError::Cnn { fold: fold_no, source };
    let train_set: Vec<LabeledSample<T>> = fold.train.iter().map(|&i| data[i].clone()).collect();
    let outcome = cnn::train(&train_set, &cfg.cnn.with_seed(derive_seed(cfg.seed, &[fold_no as u64])))
        .map_err(cnn_err)?;
    let train_x = features(&outcome.model, data, &fold.train).map_err(cnn_err)?;
    let test_x = features(&outcome.model, data, &fold.test).map_err(cnn_err)?;
    let train_y: Vec<Label> = fold.train.iter().map(|&i| data[i].label).collect();
    let test_y: Vec<Label> = fold.test.iter().map(|&i| data[i].label).collect();

    let mut reports = Vec::with_capacity(kinds.len());
    for &kind in kinds {
        let cls_err = |source| EvalError::Classifier { fold: fold_no, kind, source };
        let matrix = FeatureMatrix::new(train_x.clone(), train_y.clone()).map_err(cls_err)?;
        let model = classifiers::fit(kind, &matrix, classifier_seed(cfg.seed, fold_no, kind)).map_err(cls_err)?;
        let predicted = model.predict(&test_x).map_err(cls_err)?;
        let cm = confusion(&test_y, &predicted)?;
        reports.push(FoldReport {
            fold: fold_no,
            kind,
            metrics: metrics(&cm)?,
            confusion: cm,
            warnings: model.warnings().to_vec(),
        });
    }
    let h = &outcome.history;
    let info = CnnFoldInfo {
        fold: fold_no,
        train_size: fold.train.len(),
        test_size: fold.test.len(),
        best_epoch: h.best_epoch,
        best_val_loss: h.best_val_loss,
        best_val_accuracy: h.best_val_accuracy,
    };
    Ok((info, reports))
}

/// Stratified k-fold cross-validation of CNN features plus each of `kinds`
/// on the bands named by `genes` (1-based, 116-band numbering).
pub fn run_cv<T: Scalar>(
    data: &[LabeledSample<T>],
    genes: &[usize],
    kinds: &[ClassifierKind],
    cfg: &CvConfig,
) -> Result<CvReport, EvalError> {
    if kinds.is_empty() {
        return Err(EvalError::BadConfig("no classifier kinds requested".into()));
    }
    cfg.cnn.validate().map_err(|e| EvalError::BadConfig(e.to_string()))?;
    let subset = select_gene_bands(data, genes)?;
    let labels: Vec<Label> = subset.iter().map(|s| s.label).collect();
    let split = stratified_kfold(&labels, cfg.folds, cfg.seed)?;

    let per_fold: Vec<(CnnFoldInfo, Vec<FoldReport>)> = split
        .folds
        .par_iter()
        .enumerate()
        .map(|(i, fold)| run_fold(i, fold, &subset, kinds, cfg))
        .collect::<Result<_, _>>()?;

    let mut cnn = Vec::with_capacity(per_fold.len());
    let mut folds = Vec::with_capacity(per_fold.len() * kinds.len());
    for (info, reports) in per_fold {
        cnn.push(info);
        folds.extend(reports);
    }
    let summary = kinds
        .iter()
        .map(|&k| summarize(k, &folds.iter().filter(|r| r.kind == k).collect::<Vec<_>>()))
        .collect();
    Ok(CvReport {
        version: crate::VERSION.to_string(),
        bands: genes.to_vec(),
        wavelengths_nm: genes.iter().map(|&g| wavelength_of_band(g).unwrap_or(f64::NAN)).collect(),
        samples: data.len(),
        config: *cfg,
        cnn,
        folds,
        summary,
    })
}

#[derive(Debug, Error)]
pub enum PipelineFormatError {
    #[error("missing SDSP magic")]
    BadMagic,
    #[error("unsupported pipeline version {0}")]
    Version(u32),
    #[error("pipeline bundle is truncated")]
    Truncated,
    #[error("{0} trailing bytes after pipeline bundle")]
    TrailingBytes(usize),
    #[error(transparent)]
    Cnn(#[from] CnnError),
    #[error(transparent)]
    Classifier(#[from] ClassifierError),
    #[error("inconsistent pipeline: {0}")]
    Inconsistent(String),
}

/// A frozen CNN and one classifier on its features, trained on a whole
/// dataset. Inputs are full cubes; band selection happens inside.
#[derive(Debug, Clone)]
pub struct Pipeline {
    pub bands: Vec<usize>,
    pub cnn: CnnModel<f32>,
    pub classifier: TrainedClassifier,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub label: Label,
    /// `[P(H), P(I)]` from the classifier.
    pub probabilities: [f64; 2],
}

/// Magic of the pipeline bundle: `SDSP`, `u32` version, `u32` band count,
/// that many `u32` bands, then a `u64`-prefixed CNN1 blob and a
/// `u64`-prefixed classifier blob. All integers little-endian.
pub const PIPELINE_MAGIC: &[u8; 4] = b"SDSP";
const PIPELINE_VERSION: u32 = 1;

impl Pipeline {
    /// Spatial frame the CNN was trained on.
    pub fn frame(&self) -> (usize, usize) {
        let s = self.cnn.shape();
        (s.rows, s.cols)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let cnn = cnn::write_cnn1(&self.cnn);
        let cls = self.classifier.to_bytes();
        let mut out = Vec::with_capacity(32 + cnn.len() + cls.len());
        out.extend_from_slice(PIPELINE_MAGIC);
        out.extend_from_slice(&PIPELINE_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.bands.len() as u32).to_le_bytes());
        for &b in &self.bands {
            out.extend_from_slice(&(b as u32).to_le_bytes());
        }
        for blob in [&cnn, &cls] {
            out.extend_from_slice(&(blob.len() as u64).to_le_bytes());
            out.extend_from_slice(blob);
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Pipeline, PipelineFormatError> {
        let mut pos = 0usize;
        let mut take = |n: usize| -> Result<&[u8], PipelineFormatError> {
            let end = pos.checked_add(n).filter(|&e| e <= bytes.len()).ok_or(PipelineFormatError::Truncated)?;
            let out = &bytes[pos..end];
            pos = end;
            Ok(out)
        };
        if take(4)? != PIPELINE_MAGIC {
            return Err(PipelineFormatError::BadMagic);
        }
        let u32_at = |b: &[u8]| u32::from_le_bytes(b.try_into().expect("4 bytes"));
        let version = u32_at(take(4)?);
        if version != PIPELINE_VERSION {
            return Err(PipelineFormatError::Version(version));
        }
        let n = u32_at(take(4)?) as usize;
        if n > 116 {
            return Err(PipelineFormatError::Truncated);
        }
        let bands = (0..n).map(|_| take(4).map(|b| u32_at(b) as usize)).collect::<Result<Vec<_>, _>>()?;
        let mut blob = || -> Result<&[u8], PipelineFormatError> {
            let len = u64::from_le_bytes(take(8)?.try_into().expect("8 bytes"));
            take(usize::try_from(len).map_err(|_| PipelineFormatError::Truncated)?)
        };
        let cnn = cnn::read_cnn1(blob()?)?;
        let classifier = TrainedClassifier::from_bytes(blob()?)?;
        if pos != bytes.len() {
            return Err(PipelineFormatError::TrailingBytes(bytes.len() - pos));
        }
        if cnn.shape().channels != bands.len() {
            return Err(PipelineFormatError::Inconsistent(format!(
                "{} bands but the CNN expects {} channels",
                bands.len(),
                cnn.shape().channels
            )));
        }
        if classifier.width() != cnn::HIDDEN {
            return Err(PipelineFormatError::Inconsistent(format!("classifier width {}", classifier.width())));
        }
        Ok(Pipeline { bands, cnn, classifier })
    }

    pub fn features(&self, cube: &HyperCube<f32>) -> Result<Vec<f64>, EvalError> {
        let sample = LabeledSample::new(cube.clone(), Label::Healthy);
        let selected = select_gene_bands(std::slice::from_ref(&sample), &self.bands)?;
        let row = cnn::extract_features(&self.cnn, &[selected[0].cube.data()])
            .map_err(|source| EvalError::Cnn { fold: 0, source })?;
        Ok(row.into_iter().next().expect("one row"))
    }

    pub fn classify(&self, cube: &HyperCube<f32>) -> Result<Verdict, EvalError> {
        let x = vec![self.features(cube)?];
        let kind = self.classifier.kind();
        let p = self
            .classifier
            .predict_proba(&x)
            .map_err(|source| EvalError::Classifier { fold: 0, kind, source })?[0];
        Ok(Verdict { label: classifiers::argmax(p), probabilities: p })
    }
}

/// Trains the CNN on all of `data` (with its internal validation split) and
/// fits `kind` on the resulting features.
pub fn fit_pipeline(
    data: &[LabeledSample<f32>],
    genes: &[usize],
    kind: ClassifierKind,
    cnn_cfg: &TrainConfig,
) -> Result<Pipeline, EvalError> {
    let subset = select_gene_bands(data, genes)?;
    let outcome = cnn::train(&subset, cnn_cfg).map_err(|source| EvalError::Cnn { fold: 0, source })?;
    let all: Vec<usize> = (0..subset.len()).collect();
    let x = features(&outcome.model, &subset, &all).map_err(|source| EvalError::Cnn { fold: 0, source })?;
    let cls_err = |source| EvalError::Classifier { fold: 0, kind, source };
    let matrix = FeatureMatrix::new(x, subset.iter().map(|s| s.label).collect()).map_err(cls_err)?;
    let classifier = classifiers::fit(kind, &matrix, derive_seed(cnn_cfg.seed, &[kind.tag() as u64])).map_err(cls_err)?;
    Ok(Pipeline { bands: genes.to_vec(), cnn: outcome.model, classifier })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use Label::{Healthy as H, Infected as I};

    #[test]
    fn exact_division_gives_one_of_each_per_fold() {
        let labels: Vec<Label> = (0..10).map(|i| if i % 2 == 0 { H } else { I }).collect();
        let split = stratified_kfold(&labels, 5, 3).unwrap();
        for f in &split.folds {
            assert_eq!(f.test.iter().filter(|&&i| labels[i] == H).count(), 1);
            assert_eq!(f.test.iter().filter(|&&i| labels[i] == I).count(), 1);
        }
    }

    #[test]
    fn folds_partition_and_train_is_complement() {
        let labels: Vec<Label> = (0..23).map(|i| if i % 3 == 0 { I } else { H }).collect();
        let split = stratified_kfold(&labels, 5, 9).unwrap();
        let mut all: Vec<usize> = split.folds.iter().flat_map(|f| f.test.clone()).collect();
        all.sort_unstable();
        assert_eq!(all, (0..23).collect::<Vec<_>>());
        for f in &split.folds {
            assert_eq!(f.train.len() + f.test.len(), 23);
            assert!(f.train.iter().all(|i| !f.test.contains(i)));
        }
    }

    #[test]
    fn remainders_are_dealt_round_robin() {
        let labels: Vec<Label> = [vec![H; 7], vec![I; 5]].concat();
        let split = stratified_kfold(&labels, 5, 0).unwrap();
        let mut h: Vec<usize> =
            split.folds.iter().map(|f| f.test.iter().filter(|&&i| labels[i] == H).count()).collect();
        h.sort_unstable_by(|a, b| b.cmp(a));
        assert_eq!(h, vec![2, 2, 1, 1, 1]);
    }

    #[test]
    fn too_few_members_is_rejected() {
        let labels = [vec![H; 10], vec![I; 4]].concat();
        assert!(matches!(stratified_kfold(&labels, 5, 0), Err(EvalError::TooFewPerClass { class: "I", have: 4, k: 5 })));
    }

    #[test]
    fn hand_counted_confusion() {
        let cm = confusion(&[H, H, I, I], &[H, I, I, I]).unwrap();
        assert_eq!(cm.counts, [[1, 1], [0, 2]]);
        assert!(confusion(&[H], &[]).is_err());
    }

    #[test]
    fn row_normalisation() {
        let n = ConfusionMatrix::from_counts([[49, 1], [2, 48]]).normalized();
        assert_eq!(n, [[0.98, 0.02], [0.04, 0.96]]);
        assert_eq!(ConfusionMatrix::from_counts([[0, 0], [1, 3]]).normalized()[0], [0.0, 0.0]);
    }

    #[test]
    fn worked_example_with_infected_positive() {
        // TP=3, FP=1, TN=4, FN=2 with I as the positive class.
        let cm = ConfusionMatrix::from_counts([[4, 1], [2, 3]]);
        let m = metrics(&cm).unwrap();
        let i = m.class(I);
        assert_eq!((i.precision, i.recall), (0.75, 0.6));
        assert!((i.f1 - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(m.accuracy, 0.7);
        assert!((m.mse - 0.3).abs() < 1e-15);
    }

    #[test]
    fn zero_denominators_give_zero() {
        let m = metrics(&ConfusionMatrix::from_counts([[5, 0], [3, 0]])).unwrap();
        assert_eq!(m.class(I).precision, 0.0);
        assert_eq!(m.class(I).recall, 0.0);
        assert_eq!(m.class(I).f1, 0.0);
        assert!(matches!(metrics(&ConfusionMatrix::default()), Err(EvalError::EmptyMatrix)));
    }

    #[test]
    fn perfect_prediction() {
        let m = metrics(&ConfusionMatrix::from_counts([[6, 0], [0, 4]])).unwrap();
        assert_eq!((m.accuracy, m.mse), (1.0, 0.0));
        assert!(m.per_class.iter().all(|c| c.f1 == 1.0));
    }

    #[test]
    fn mse_is_exactly_one_minus_accuracy() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..500 {
            let c = [[0; 2]; 2].map(|r: [u64; 2]| r.map(|_| rng.random_range(0..40u64)));
            if c.iter().flatten().sum::<u64>() == 0 {
                continue;
            }
            let cm = ConfusionMatrix::from_counts(c);
            let m = metrics(&cm).unwrap();
            let wrong = (c[0][1] + c[1][0]) as f64 / cm.total() as f64;
            assert_eq!(m.mse, 1.0 - m.accuracy);
            assert!((m.mse - wrong).abs() < 1e-15);
        }
    }

    #[test]
    fn stat_of_values() {
        let s = Stat::of([0.9, 1.0, 0.8]);
        assert!((s.mean - 0.9).abs() < 1e-12);
        assert_eq!((s.min, s.max), (0.8, 1.0));
        assert!(Stat::of(std::iter::empty()).mean.is_nan());
    }

    #[test]
    fn csv_has_row_per_fold_kind_class() {
        let cm = ConfusionMatrix::from_counts([[4, 1], [0, 5]]);
        let r = FoldReport { fold: 0, kind: ClassifierKind::NearestNeighbors, metrics: metrics(&cm).unwrap(), confusion: cm, warnings: vec![] };
        let report = CvReport {
            version: "x".into(),
            bands: vec![21, 32, 60, 79, 97],
            wavelengths_nm: vec![],
            samples: 10,
            config: CvConfig::default(),
            cnn: vec![],
            folds: vec![r.clone(), FoldReport { fold: 1, ..r }],
            summary: vec![],
        };
        let mut buf = Vec::new();
        report.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 1 + 2 * 2);
        assert!(text.lines().nth(1).unwrap().starts_with("0,knn,H,0.9,"));
        let back = CvReport::from_json(&report.to_json().unwrap()).unwrap();
        assert_eq!(back, report);
    }
}
