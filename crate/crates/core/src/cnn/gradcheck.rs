use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::model::CnnModel;
use crate::cube::LabeledSample;
use crate::scalar::Scalar;

/// Below this magnitude gradients are compared absolutely rather than relatively.
const ABS_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct GradientCheck {
    pub max_relative_error: f64,
    pub checked: usize,
    /// (parameter group, index) of the worst entry.
    pub worst: (usize, usize),
}

/// Compares back-propagated gradients with central finite differences on a
/// random subset of `per_group` weights from each of the six parameter groups.
pub fn gradient_check<T: Scalar>(
    model: &CnnModel<T>,
    sample: &LabeledSample<T>,
    step: f64,
    per_group: usize,
    seed: u64,
) -> GradientCheck {
    let x = sample.cube.data();
    let (_, grads) = model.loss_and_gradient(x, sample.label);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut probe = model.clone();
    let h = T::from_f64_lossy(step);
    let mut result = GradientCheck { max_relative_error: 0.0, checked: 0, worst: (0, 0) };

    for (g, analytic) in grads.groups().iter().enumerate() {
        let len = analytic.len();
        for _ in 0..per_group.min(len) {
            let i = rng.random_range(0..len);
            let orig = probe.groups_mut()[g][i];
            probe.groups_mut()[g][i] = orig + h;
            let up = probe.loss(x, sample.label).widen();
            probe.groups_mut()[g][i] = orig - h;
            let down = probe.loss(x, sample.label).widen();
            probe.groups_mut()[g][i] = orig;

            let numeric = (up - down) / (2.0 * step);
            let a = analytic[i].widen();
            let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(ABS_FLOOR);
            result.checked += 1;
            if err > result.max_relative_error {
                result.max_relative_error = err;
                result.worst = (g, i);
            }
        }
    }
    result
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cnn::InputShape;
    use crate::cube::{HyperCube, Label, Stage};
    use rand_distr::{Distribution, Uniform};

    fn random_sample(seed: u64) -> LabeledSample<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let u = Uniform::new(0.0, 1.0).unwrap();
        let data: Vec<f64> = (0..128).map(|_| u.sample(&mut rng)).collect();
        LabeledSample::new(HyperCube::new(8, 8, 2, data, None, Stage::Binned).unwrap(), Label::Infected)
    }

    #[test]
    fn analytic_gradients_match_finite_differences() {
        let shape = InputShape::new(8, 8, 2).unwrap();
        for seed in 0..3 {
            let model = CnnModel::<f64>::init(shape, &mut ChaCha8Rng::seed_from_u64(seed), seed);
            let r = gradient_check(&model, &random_sample(seed + 100), 1e-5, 25, seed);
            assert!(r.max_relative_error < 1e-4, "seed {seed}: {r:?}");
            assert_eq!(r.checked, 25 * 4 + 25 + 2);
        }
    }

    #[test]
    fn saturated_zero_loss_uses_absolute_fallback() {
        let shape = InputShape::new(8, 8, 2).unwrap();
        let mut model = CnnModel::<f64>::zeros(shape);
        model.out_b = vec![0.0, 60.0];
        let sample = random_sample(1);
        assert!(model.loss(sample.cube.data(), sample.label) < 1e-20);
        let r = gradient_check(&model, &sample, 1e-5, 10, 0);
        assert!(r.max_relative_error < 1e-4, "{r:?}");
    }
}
