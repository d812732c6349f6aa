use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::model::{Activations, CnnModel, Gradients, InputShape};
use super::CnnError;
use crate::cube::{Label, LabeledSample};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub max_epochs: usize,
    pub batch_size: usize,
    pub patience: usize,
    pub val_fraction: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig { learning_rate: 1e-3, max_epochs: 50, batch_size: 16, patience: 5, val_fraction: 0.2, seed: 0 }
    }
}

impl TrainConfig {
    /// Shortened schedule used inside the band-selection search.
    pub fn fitness() -> Self {
        TrainConfig { max_epochs: 15, patience: 3, ..Default::default() }
    }

    pub fn with_seed(self, seed: u64) -> Self {
        TrainConfig { seed, ..self }
    }

    pub fn validate(&self) -> Result<(), CnnError> {
        let ok = self.learning_rate > 0.0
            && self.learning_rate.is_finite()
            && self.max_epochs > 0
            && self.batch_size > 0
            && self.patience > 0
            && self.val_fraction > 0.0
            && self.val_fraction < 1.0;
        if ok {
            Ok(())
        } else {
            Err(CnnError::BadConfig(format!("{self:?}")))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_accuracy: f64,
    pub val_loss: f64,
    pub val_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochStats>,
    /// 1-based epoch whose weights were kept.
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub best_val_accuracy: f64,
    pub stopped_early: bool,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome<T> {
    pub model: CnnModel<T>,
    pub history: TrainHistory,
}

/// Per-class stratified split. Every class keeps at least one sample on
/// each side.
pub fn stratified_split(labels: &[Label], val_fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train = Vec::new();
    let mut val = Vec::new();
    for class in Label::ALL {
        let mut idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        idx.shuffle(&mut rng);
        if idx.is_empty() {
            continue;
        }
        let n_val = ((idx.len() as f64 * val_fraction).round() as usize).clamp(1, idx.len().saturating_sub(1).max(1));
        val.extend_from_slice(&idx[..n_val]);
        train.extend_from_slice(&idx[n_val..]);
    }
    train.sort_unstable();
    val.sort_unstable();
    (train, val)
}

struct Adam<T> {
    lr: T,
    beta1: T,
    beta2: T,
    eps: T,
    step: i32,
    m: Gradients<T>,
    v: Gradients<T>,
}

impl<T: Scalar> Adam<T> {
    fn new(model: &CnnModel<T>, lr: f64) -> Self {
        Adam {
            lr: T::from_f64_lossy(lr),
            beta1: T::from_f64_lossy(0.9),
            beta2: T::from_f64_lossy(0.999),
            eps: T::from_f64_lossy(1e-8),
            step: 0,
            m: Gradients::zeros_like(model),
            v: Gradients::zeros_like(model),
        }
    }

    fn update(&mut self, model: &mut CnnModel<T>, grads: &Gradients<T>) {
        self.step += 1;
        let one = T::one();
        let bc1 = one - self.beta1.powi(self.step);
        let bc2 = one - self.beta2.powi(self.step);
        let (b1, b2, lr, eps) = (self.beta1, self.beta2, self.lr, self.eps);
        let params = model.groups_mut();
        let ms = self.m.groups_mut();
        let vs = self.v.groups_mut();
        let gs = grads.groups();
        for (((p, m), v), g) in params.into_iter().zip(ms).zip(vs).zip(gs) {
            for i in 0..p.len() {
                let gi = g[i];
                m[i] = b1 * m[i] + (one - b1) * gi;
                v[i] = b2 * v[i] + (one - b2) * gi * gi;
                let mhat = m[i] / bc1;
                let vhat = v[i] / bc2;
                p[i] -= lr * mhat / (vhat.sqrt() + eps);
            }
        }
    }
}

fn check_dataset<T: Scalar>(data: &[LabeledSample<T>]) -> Result<InputShape, CnnError> {
    let first = data.first().ok_or_else(|| CnnError::DegenerateDataset("empty dataset".into()))?;
    let dims = first.cube.dims();
    if let Some(bad) = data.iter().position(|s| s.cube.dims() != dims) {
        return Err(CnnError::DimsMismatch { expected: dims, got: data[bad].cube.dims() });
    }
    for class in Label::ALL {
        let n = data.iter().filter(|s| s.label == class).count();
        if n < 2 {
            return Err(CnnError::DegenerateDataset(format!("class {} has {n} samples, need at least 2", class.short())));
        }
    }
    InputShape::of_cube(&first.cube)
}

/// Per-channel mean and inverse standard deviation over the samples in `idx`.
fn channel_statistics<T: Scalar>(data: &[LabeledSample<T>], idx: &[usize], shape: InputShape) -> (Vec<T>, Vec<T>) {
    let plane = shape.rows * shape.cols;
    let mut shift = Vec::with_capacity(shape.channels);
    let mut scale = Vec::with_capacity(shape.channels);
    for ch in 0..shape.channels {
        let (mut sum, mut sq) = (0.0, 0.0);
        for &i in idx {
            for &v in &data[i].cube.data()[ch * plane..(ch + 1) * plane] {
                let v = v.widen();
                sum += v;
                sq += v * v;
            }
        }
        let n = (idx.len() * plane).max(1) as f64;
        let mean = sum / n;
        let std = (sq / n - mean * mean).max(0.0).sqrt();
        shift.push(T::from_f64_lossy(mean));
        scale.push(T::from_f64_lossy(1.0 / std.max(1e-6)));
    }
    (shift, scale)
}

/// Mean loss and accuracy of `model` over `idx`, on standardised `inputs`.
fn evaluate<T: Scalar>(model: &CnnModel<T>, inputs: &[Vec<T>], data: &[LabeledSample<T>], idx: &[usize]) -> (f64, f64) {
    let mut act = Activations::new(&model.shape);
    let mut loss = 0.0;
    let mut correct = 0usize;
    for &i in idx {
        let s = &data[i];
        model.forward_into(&inputs[i], &mut act);
        loss += act.loss(s.label).widen();
        if predicted(act.probs()) == s.label {
            correct += 1;
        }
    }
    let n = idx.len().max(1) as f64;
    (loss / n, correct as f64 / n)
}

fn predicted<T: Scalar>(p: [T; 2]) -> Label {
    if p[1] > p[0] {
        Label::Infected
    } else {
        Label::Healthy
    }
}

/// Mini-batch Adam on cross-entropy with early stopping on validation loss.
/// Returns the weights from the epoch with the lowest validation loss.
pub fn train<T: Scalar>(data: &[LabeledSample<T>], cfg: &TrainConfig) -> Result<TrainOutcome<T>, CnnError> {
    let labels: Vec<Label> = data.iter().map(|s| s.label).collect();
    let (train_idx, val_idx) = stratified_split(&labels, cfg.val_fraction, cfg.seed);
    train_on_split(data, &train_idx, &val_idx, cfg)
}

/// [`train`] with a caller-chosen split; `cfg.val_fraction` is ignored.
pub fn train_on_split<T: Scalar>(
    data: &[LabeledSample<T>],
    train_idx: &[usize],
    val_idx: &[usize],
    cfg: &TrainConfig,
) -> Result<TrainOutcome<T>, CnnError> {
    cfg.validate()?;
    let shape = check_dataset(data)?;
    if train_idx.is_empty() || val_idx.is_empty() {
        return Err(CnnError::DegenerateDataset("empty training or validation split".into()));
    }
    if let Some(&i) = train_idx.iter().chain(val_idx).find(|&&i| i >= data.len()) {
        return Err(CnnError::DegenerateDataset(format!("split index {i} out of range")));
    }
    let mut train_idx = train_idx.to_vec();

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut model = CnnModel::init(shape, &mut rng, cfg.seed);
    let (shift, scale) = channel_statistics(data, &train_idx, shape);
    model.set_input_normalization(&shift, &scale);
    let inputs: Vec<Vec<T>> = data.iter().map(|s| model.normalized(s.cube.data())).collect();
    let mut adam = Adam::new(&model, cfg.learning_rate);
    let mut grads = Gradients::zeros_like(&model);
    let mut act = Activations::new(&shape);

    let mut best: Option<(f64, f64, usize, CnnModel<T>)> = None;
    let mut since_best = 0usize;
    let mut epochs = Vec::with_capacity(cfg.max_epochs);
    let mut stopped_early = false;

    for epoch in 1..=cfg.max_epochs {
        train_idx.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut correct = 0usize;
        for batch in train_idx.chunks(cfg.batch_size) {
            grads.clear();
            for &i in batch {
                let label = data[i].label;
                model.forward_into(&inputs[i], &mut act);
                loss_sum += act.loss(label).widen();
                if predicted(act.probs()) == label {
                    correct += 1;
                }
                model.backward_into(&inputs[i], label, &act, &mut grads);
            }
            let scale = T::one() / T::from_usize_lossy(batch.len());
            for g in grads.groups_mut() {
                g.iter_mut().for_each(|v| *v *= scale);
            }
            adam.update(&mut model, &grads);
        }
        let train_loss = loss_sum / train_idx.len() as f64;
        let (val_loss, val_accuracy) = evaluate(&model, &inputs, data, val_idx);
        if !train_loss.is_finite() || !val_loss.is_finite() {
            return Err(CnnError::NonFiniteLoss { epoch, train_loss, val_loss });
        }
        epochs.push(EpochStats {
            epoch,
            train_loss,
            train_accuracy: correct as f64 / train_idx.len() as f64,
            val_loss,
            val_accuracy,
        });
        log::debug!("epoch {epoch}: train loss {train_loss:.4}, val loss {val_loss:.4}, val acc {val_accuracy:.3}");

        if best.as_ref().is_none_or(|b| val_loss < b.0) {
            best = Some((val_loss, val_accuracy, epoch, model.clone()));
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= cfg.patience {
                stopped_early = epoch < cfg.max_epochs;
                break;
            }
        }
    }

    let (best_val_loss, best_val_accuracy, best_epoch, model) = best.expect("at least one epoch ran");
    Ok(TrainOutcome {
        model,
        history: TrainHistory { epochs, best_epoch, best_val_loss, best_val_accuracy, stopped_early },
    })
}

/// Post-ReLU dense-layer activations for each sample, one row per sample.
pub fn extract_features<T: Scalar>(
    model: &CnnModel<T>,
    samples: &[&[T]],
) -> Result<Vec<Vec<f64>>, CnnError> {
    samples
        .iter()
        .map(|x| model.forward(x).map(|p| p.features.into_iter().map(Scalar::widen).collect()))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cube::{HyperCube, Stage};

    fn const_sample(v: f64, label: Label) -> LabeledSample<f64> {
        LabeledSample::new(HyperCube::filled(8, 8, 2, v, Stage::Binned).unwrap(), label)
    }

    fn toy_set() -> Vec<LabeledSample<f64>> {
        let mut v = Vec::new();
        for i in 0..10 {
            v.push(const_sample(0.2 + 0.001 * i as f64, Label::Healthy));
            v.push(const_sample(0.8 - 0.001 * i as f64, Label::Infected));
        }
        v
    }

    #[test]
    fn separable_constants_reach_full_accuracy() {
        let data = toy_set();
        let cfg = TrainConfig { patience: 50, ..TrainConfig::default() };
        let out = train(&data, &cfg).unwrap();
        let best = out.history.epochs.iter().map(|e| e.train_accuracy).fold(0.0, f64::max);
        assert_eq!(best, 1.0);
        assert!(out.history.epochs.len() <= 50);
        let last = out.history.epochs.last().unwrap();
        assert!(last.train_loss < out.history.epochs[0].train_loss);
    }

    #[test]
    fn training_is_deterministic() {
        let data = toy_set();
        let cfg = TrainConfig { max_epochs: 3, ..TrainConfig::default() };
        let a = train(&data, &cfg).unwrap();
        let b = train(&data, &cfg).unwrap();
        assert_eq!(a.model, b.model);
        assert_eq!(a.history, b.history);
    }

    #[test]
    fn single_class_is_degenerate() {
        let data: Vec<_> = (0..4).map(|_| const_sample(0.1, Label::Healthy)).collect();
        assert!(matches!(train(&data, &TrainConfig::default()), Err(CnnError::DegenerateDataset(_))));
    }

    #[test]
    fn split_is_stratified_and_disjoint() {
        let labels: Vec<Label> = (0..20).map(|i| Label::from_index(usize::from(i < 8))).collect();
        let (tr, va) = stratified_split(&labels, 0.2, 9);
        assert_eq!(tr.len() + va.len(), 20);
        assert!(tr.iter().all(|i| !va.contains(i)));
        assert_eq!(va.iter().filter(|&&i| labels[i] == Label::Infected).count(), 2);
        assert_eq!(va.iter().filter(|&&i| labels[i] == Label::Healthy).count(), 2);
    }

    #[test]
    fn features_are_non_negative_and_pure() {
        let data = toy_set();
        let out = train(&data, &TrainConfig { max_epochs: 2, ..TrainConfig::default() }).unwrap();
        let xs: Vec<&[f64]> = vec![data[0].cube.data(), data[0].cube.data(), data[1].cube.data()];
        let f = extract_features(&out.model, &xs).unwrap();
        assert_eq!(f.len(), 3);
        assert!(f.iter().all(|r| r.len() == 64 && r.iter().all(|&v| v >= 0.0)));
        assert_eq!(f[0], f[1]);
    }

    #[test]
    fn bad_config_rejected() {
        let cfg = TrainConfig { val_fraction: 1.0, ..TrainConfig::default() };
        assert!(matches!(train(&toy_set(), &cfg), Err(CnnError::BadConfig(_))));
    }
}
