use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{CnnError, FILTERS, HIDDEN, KERNEL, OUTPUTS};
use crate::cube::{HyperCube, Label};
use crate::scalar::{axpy, dot, Scalar};

/// Input tensor geometry: `rows x cols x channels`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct InputShape {
    pub rows: usize,
    pub cols: usize,
    pub channels: usize,
}

impl InputShape {
    pub fn new(rows: usize, cols: usize, channels: usize) -> Result<Self, CnnError> {
        // Valid 3x3 convolution followed by a 2x2 pool needs at least 4x4.
        if rows < KERNEL + 1 || cols < KERNEL + 1 || channels == 0 {
            return Err(CnnError::BadShape { rows, cols, channels });
        }
        Ok(InputShape { rows, cols, channels })
    }

    pub fn of_cube<T: Scalar>(cube: &HyperCube<T>) -> Result<Self, CnnError> {
        Self::new(cube.rows(), cube.cols(), cube.bands())
    }

    pub fn len(&self) -> usize {
        self.rows * self.cols * self.channels
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn conv_dims(&self) -> (usize, usize) {
        (self.rows - KERNEL + 1, self.cols - KERNEL + 1)
    }

    pub fn pool_dims(&self) -> (usize, usize) {
        let (r, c) = self.conv_dims();
        (r / 2, c / 2)
    }

    /// Length of the flattened pooled feature map.
    pub fn flat_len(&self) -> usize {
        let (r, c) = self.pool_dims();
        FILTERS * r * c
    }
}

/// conv(3x3, 32, ReLU) -> maxpool(2x2) -> flatten -> dense(64, ReLU) -> dense(2) -> softmax
///
/// Weight layouts (row-major):
/// - `conv_w`: `[filter][channel][ky][kx]`
/// - `fc1_w`:  `[hidden][flat]`, flat index is `[filter][pool_row][pool_col]`
/// - `out_w`:  `[class][hidden]`
#[derive(Debug, Clone, PartialEq)]
pub struct CnnModel<T> {
    pub(crate) shape: InputShape,
    pub(crate) conv_w: Vec<T>,
    pub(crate) conv_b: Vec<T>,
    pub(crate) fc1_w: Vec<T>,
    pub(crate) fc1_b: Vec<T>,
    pub(crate) out_w: Vec<T>,
    pub(crate) out_b: Vec<T>,
    /// Fixed per-channel input standardisation `(x - shift) * scale`,
    /// fitted on the training split and never updated by the optimiser.
    pub(crate) in_shift: Vec<T>,
    pub(crate) in_scale: Vec<T>,
    pub(crate) rng_seed: u64,
}

/// Output of a forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction<T> {
    /// Softmax over (H, I).
    pub probabilities: [T; 2],
    /// Post-ReLU activations of the 64-unit dense layer.
    pub features: Vec<T>,
}

impl<T: Scalar> Prediction<T> {
    pub fn label(&self) -> Label {
        if self.probabilities[1] > self.probabilities[0] {
            Label::Infected
        } else {
            Label::Healthy
        }
    }
}

/// Intermediate activations kept for back-propagation.
pub(crate) struct Activations<T> {
    conv: Vec<T>,
    pool: Vec<T>,
    pool_arg: Vec<u32>,
    hidden: Vec<T>,
    probs: [T; 2],
    logits: [T; 2],
}

impl<T: Scalar> Activations<T> {
    pub(crate) fn new(shape: &InputShape) -> Self {
        let (cr, cc) = shape.conv_dims();
        Activations {
            conv: vec![T::zero(); FILTERS * cr * cc],
            pool: vec![T::zero(); shape.flat_len()],
            pool_arg: vec![0; shape.flat_len()],
            hidden: vec![T::zero(); HIDDEN],
            probs: [T::zero(); 2],
            logits: [T::zero(); 2],
        }
    }

    pub(crate) fn probs(&self) -> [T; 2] {
        self.probs
    }

    /// Cross-entropy of the cached logits against `label`.
    pub(crate) fn loss(&self, label: Label) -> T {
        let m = self.logits[0].max(self.logits[1]);
        let lse = m + ((self.logits[0] - m).exp() + (self.logits[1] - m).exp()).ln();
        lse - self.logits[label.index()]
    }
}

/// Parameter-shaped gradient buffers.
#[derive(Debug, Clone)]
pub(crate) struct Gradients<T> {
    pub conv_w: Vec<T>,
    pub conv_b: Vec<T>,
    pub fc1_w: Vec<T>,
    pub fc1_b: Vec<T>,
    pub out_w: Vec<T>,
    pub out_b: Vec<T>,
}

impl<T: Scalar> Gradients<T> {
    pub(crate) fn zeros_like(m: &CnnModel<T>) -> Self {
        Gradients {
            conv_w: vec![T::zero(); m.conv_w.len()],
            conv_b: vec![T::zero(); m.conv_b.len()],
            fc1_w: vec![T::zero(); m.fc1_w.len()],
            fc1_b: vec![T::zero(); m.fc1_b.len()],
            out_w: vec![T::zero(); m.out_w.len()],
            out_b: vec![T::zero(); m.out_b.len()],
        }
    }

    pub(crate) fn clear(&mut self) {
        for g in self.groups_mut() {
            g.iter_mut().for_each(|v| *v = T::zero());
        }
    }

    pub(crate) fn groups(&self) -> [&[T]; 6] {
        [&self.conv_w, &self.conv_b, &self.fc1_w, &self.fc1_b, &self.out_w, &self.out_b]
    }

    pub(crate) fn groups_mut(&mut self) -> [&mut Vec<T>; 6] {
        [&mut self.conv_w, &mut self.conv_b, &mut self.fc1_w, &mut self.fc1_b, &mut self.out_w, &mut self.out_b]
    }
}

impl<T: Scalar> CnnModel<T> {
    /// He-normal initialised weights, zero biases.
    pub fn init<R: Rng>(shape: InputShape, rng: &mut R, rng_seed: u64) -> Self {
        let flat = shape.flat_len();
        let fan_conv = shape.channels * KERNEL * KERNEL;
        let mut he = |n: usize, fan_in: usize| -> Vec<T> {
            let std = (2.0 / fan_in as f64).sqrt();
            (0..n)
                .map(|_| {
                    let z: f64 = StandardNormal.sample(rng);
                    T::from_f64_lossy(z * std)
                })
                .collect()
        };
        let conv_w = he(FILTERS * fan_conv, fan_conv);
        let fc1_w = he(HIDDEN * flat, flat);
        let out_w = he(OUTPUTS * HIDDEN, HIDDEN);
        CnnModel {
            shape,
            conv_w,
            conv_b: vec![T::zero(); FILTERS],
            fc1_w,
            fc1_b: vec![T::zero(); HIDDEN],
            out_w,
            out_b: vec![T::zero(); OUTPUTS],
            in_shift: vec![T::zero(); shape.channels],
            in_scale: vec![T::one(); shape.channels],
            rng_seed,
        }
    }

    /// Model with every weight and bias set to zero.
    pub fn zeros(shape: InputShape) -> Self {
        let flat = shape.flat_len();
        CnnModel {
            shape,
            conv_w: vec![T::zero(); FILTERS * shape.channels * KERNEL * KERNEL],
            conv_b: vec![T::zero(); FILTERS],
            fc1_w: vec![T::zero(); HIDDEN * flat],
            fc1_b: vec![T::zero(); HIDDEN],
            out_w: vec![T::zero(); OUTPUTS * HIDDEN],
            out_b: vec![T::zero(); OUTPUTS],
            in_shift: vec![T::zero(); shape.channels],
            in_scale: vec![T::one(); shape.channels],
            rng_seed: 0,
        }
    }

    pub fn shape(&self) -> InputShape {
        self.shape
    }

    pub fn rng_seed(&self) -> u64 {
        self.rng_seed
    }

    /// Per-channel `(shift, scale)` applied to inputs before the convolution.
    pub fn input_normalization(&self) -> (&[T], &[T]) {
        (&self.in_shift, &self.in_scale)
    }

    /// Sets the input standardisation; panics if either slice is not one
    /// entry per channel.
    pub fn set_input_normalization(&mut self, shift: &[T], scale: &[T]) {
        assert_eq!(shift.len(), self.shape.channels);
        assert_eq!(scale.len(), self.shape.channels);
        self.in_shift = shift.to_vec();
        self.in_scale = scale.to_vec();
    }

    /// Applies the input standardisation to a band-sequential tensor.
    pub(crate) fn normalized(&self, x: &[T]) -> Vec<T> {
        let plane = self.shape.rows * self.shape.cols;
        x.chunks(plane)
            .zip(self.in_shift.iter().zip(&self.in_scale))
            .flat_map(|(band, (&m, &s))| band.iter().map(move |&v| (v - m) * s))
            .collect()
    }

    /// Trainable parameters; the input standardisation is not counted.
    pub fn parameter_count(&self) -> usize {
        self.groups().iter().map(|g| g.len()).sum()
    }

    pub(crate) fn groups(&self) -> [&[T]; 6] {
        [&self.conv_w, &self.conv_b, &self.fc1_w, &self.fc1_b, &self.out_w, &self.out_b]
    }

    pub(crate) fn groups_mut(&mut self) -> [&mut Vec<T>; 6] {
        [&mut self.conv_w, &mut self.conv_b, &mut self.fc1_w, &mut self.fc1_b, &mut self.out_w, &mut self.out_b]
    }

    /// Converts every weight to another scalar type.
    pub fn convert<U: Scalar>(&self) -> CnnModel<U> {
        let c = |v: &[T]| v.iter().map(|&x| U::from_f64_lossy(x.widen())).collect::<Vec<U>>();
        CnnModel {
            shape: self.shape,
            conv_w: c(&self.conv_w),
            conv_b: c(&self.conv_b),
            fc1_w: c(&self.fc1_w),
            fc1_b: c(&self.fc1_b),
            out_w: c(&self.out_w),
            out_b: c(&self.out_b),
            in_shift: c(&self.in_shift),
            in_scale: c(&self.in_scale),
            rng_seed: self.rng_seed,
        }
    }

    fn check_input(&self, x: &[T]) -> Result<(), CnnError> {
        if x.len() != self.shape.len() {
            return Err(CnnError::ShapeMismatch { expected: self.shape, got_len: x.len() });
        }
        Ok(())
    }

    /// Runs the network on a band-sequential `channels x rows x cols` tensor.
    pub fn forward(&self, x: &[T]) -> Result<Prediction<T>, CnnError> {
        self.check_input(x)?;
        let mut act = Activations::new(&self.shape);
        self.forward_into(&self.normalized(x), &mut act);
        Ok(Prediction { probabilities: act.probs, features: act.hidden })
    }

    /// Forward pass on a cube whose dims must equal the model input.
    pub fn forward_cube(&self, cube: &HyperCube<T>) -> Result<Prediction<T>, CnnError> {
        let got = (cube.rows(), cube.cols(), cube.bands());
        let want = (self.shape.rows, self.shape.cols, self.shape.channels);
        if got != want {
            return Err(CnnError::DimsMismatch { expected: want, got });
        }
        self.forward(cube.data())
    }

    /// Forward pass on an already standardised input.
    pub(crate) fn forward_into(&self, x: &[T], act: &mut Activations<T>) {
        let InputShape { rows, cols, channels } = self.shape;
        let (cr, cc) = self.shape.conv_dims();
        let (pr, pc) = self.shape.pool_dims();
        let plane = rows * cols;
        let cplane = cr * cc;

        for f in 0..FILTERS {
            let out = &mut act.conv[f * cplane..(f + 1) * cplane];
            out.iter_mut().for_each(|v| *v = self.conv_b[f]);
            for ch in 0..channels {
                let img = &x[ch * plane..(ch + 1) * plane];
                let wbase = (f * channels + ch) * KERNEL * KERNEL;
                for ky in 0..KERNEL {
                    for kx in 0..KERNEL {
                        let w = self.conv_w[wbase + ky * KERNEL + kx];
                        for i in 0..cr {
                            let src = &img[(i + ky) * cols + kx..(i + ky) * cols + kx + cc];
                            axpy(w, src, &mut out[i * cc..(i + 1) * cc]);
                        }
                    }
                }
            }
            out.iter_mut().for_each(|v| *v = v.max(T::zero()));
        }

        for f in 0..FILTERS {
            for i in 0..pr {
                for j in 0..pc {
                    let base = f * cplane + (2 * i) * cc + 2 * j;
                    let cand = [base, base + 1, base + cc, base + cc + 1];
                    // First maximum in row-major order wins ties.
                    let mut best = cand[0];
                    for &c in &cand[1..] {
                        if act.conv[c] > act.conv[best] {
                            best = c;
                        }
                    }
                    let p = (f * pr + i) * pc + j;
                    act.pool[p] = act.conv[best];
                    act.pool_arg[p] = best as u32;
                }
            }
        }

        let flat = self.shape.flat_len();
        for h in 0..HIDDEN {
            let z = dot(&self.fc1_w[h * flat..(h + 1) * flat], &act.pool) + self.fc1_b[h];
            act.hidden[h] = z.max(T::zero());
        }
        for o in 0..OUTPUTS {
            act.logits[o] = dot(&self.out_w[o * HIDDEN..(o + 1) * HIDDEN], &act.hidden) + self.out_b[o];
        }
        act.probs = softmax2(act.logits);
    }

    /// Accumulates d(loss)/d(params) for one sample into `grads`.
    /// `act` must hold the forward activations of the same input.
    pub(crate) fn backward_into(&self, x: &[T], label: Label, act: &Activations<T>, grads: &mut Gradients<T>) {
        let InputShape { rows, cols, channels } = self.shape;
        let (_, cc) = self.shape.conv_dims();
        let cplane = self.shape.conv_dims().0 * cc;
        let plane = rows * cols;
        let flat = self.shape.flat_len();

        let mut dlogits = act.probs;
        dlogits[label.index()] -= T::one();

        let mut dhidden = [T::zero(); HIDDEN];
        for o in 0..OUTPUTS {
            axpy(dlogits[o], &act.hidden, &mut grads.out_w[o * HIDDEN..(o + 1) * HIDDEN]);
            grads.out_b[o] += dlogits[o];
            for h in 0..HIDDEN {
                dhidden[h] += dlogits[o] * self.out_w[o * HIDDEN + h];
            }
        }

        let mut dpool = vec![T::zero(); flat];
        for h in 0..HIDDEN {
            if act.hidden[h] <= T::zero() {
                continue;
            }
            let d = dhidden[h];
            grads.fc1_b[h] += d;
            axpy(d, &act.pool, &mut grads.fc1_w[h * flat..(h + 1) * flat]);
            axpy(d, &self.fc1_w[h * flat..(h + 1) * flat], &mut dpool);
        }

        for (p, &d) in dpool.iter().enumerate() {
            let idx = act.pool_arg[p] as usize;
            if d == T::zero() || act.conv[idx] <= T::zero() {
                continue;
            }
            let f = idx / cplane;
            let rem = idx % cplane;
            let (i, j) = (rem / cc, rem % cc);
            grads.conv_b[f] += d;
            for ch in 0..channels {
                let img = &x[ch * plane..(ch + 1) * plane];
                let wbase = (f * channels + ch) * KERNEL * KERNEL;
                for ky in 0..KERNEL {
                    let row = &img[(i + ky) * cols + j..(i + ky) * cols + j + KERNEL];
                    for kx in 0..KERNEL {
                        grads.conv_w[wbase + ky * KERNEL + kx] += d * row[kx];
                    }
                }
            }
        }
    }

    /// Cross-entropy loss and gradient for one raw sample.
    pub(crate) fn loss_and_gradient(&self, x: &[T], label: Label) -> (T, Gradients<T>) {
        let x = self.normalized(x);
        let mut act = Activations::new(&self.shape);
        self.forward_into(&x, &mut act);
        let mut grads = Gradients::zeros_like(self);
        self.backward_into(&x, label, &act, &mut grads);
        (act.loss(label), grads)
    }

    pub(crate) fn loss(&self, x: &[T], label: Label) -> T {
        let mut act = Activations::new(&self.shape);
        self.forward_into(&self.normalized(x), &mut act);
        act.loss(label)
    }
}

fn softmax2<T: Scalar>(logits: [T; 2]) -> [T; 2] {
    let m = logits[0].max(logits[1]);
    let e0 = (logits[0] - m).exp();
    let e1 = (logits[1] - m).exp();
    let s = e0 + e1;
    [e0 / s, e1 / s]
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn paper_input_shape_chain() {
        let s = InputShape::new(125, 100, 5).unwrap();
        assert_eq!(s.conv_dims(), (123, 98));
        assert_eq!(s.pool_dims(), (61, 49));
        assert_eq!(s.flat_len(), 95_648);
    }

    #[test]
    fn zero_model_is_uniform() {
        let s = InputShape::new(8, 8, 2).unwrap();
        let m = CnnModel::<f64>::zeros(s);
        let x: Vec<f64> = (0..s.len()).map(|i| i as f64 * 0.01).collect();
        let p = m.forward(&x).unwrap();
        assert_eq!(p.probabilities, [0.5, 0.5]);
        assert!(p.features.iter().all(|&v| v == 0.0));
        assert_eq!(p.label(), Label::Healthy);
    }

    #[test]
    fn full_size_forward_shapes() {
        let s = InputShape::new(125, 100, 5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let m = CnnModel::<f32>::init(s, &mut rng, 3);
        let x = vec![0.3f32; s.len()];
        let p = m.forward(&x).unwrap();
        assert_eq!(p.features.len(), HIDDEN);
        assert!((p.probabilities[0] + p.probabilities[1] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn wrong_input_length() {
        let s = InputShape::new(8, 8, 2).unwrap();
        let m = CnnModel::<f32>::zeros(s);
        assert!(matches!(m.forward(&[0.0; 10]), Err(CnnError::ShapeMismatch { .. })));
    }

    #[test]
    fn too_small_input_rejected() {
        assert!(InputShape::new(3, 8, 1).is_err());
        assert!(InputShape::new(8, 8, 0).is_err());
    }
}
