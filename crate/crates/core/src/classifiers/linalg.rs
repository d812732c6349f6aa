//! Dense symmetric positive-definite helpers for the GP and QDA models.

/// Lower-triangular Cholesky factor of a row-major `n x n` matrix.
/// Returns `None` if a pivot is not strictly positive.
pub(crate) fn cholesky(a: &[f64], n: usize) -> Option<Vec<f64>> {
    let mut l = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= l[i * n + k] * l[j * n + k];
            }
            if i == j {
                if !(s > 0.0) || !s.is_finite() {
                    return None;
                }
                l[i * n + i] = s.sqrt();
            } else {
                l[i * n + j] = s / l[j * n + j];
            }
        }
    }
    Some(l)
}

/// Solves `L y = b`.
pub(crate) fn forward_sub(l: &[f64], n: usize, b: &[f64]) -> Vec<f64> {
    let mut y = vec![0.0; n];
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= l[i * n + k] * y[k];
        }
        y[i] = s / l[i * n + i];
    }
    y
}

/// Solves `L^T x = y`.
pub(crate) fn backward_sub(l: &[f64], n: usize, y: &[f64]) -> Vec<f64> {
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let mut s = y[i];
        for k in i + 1..n {
            s -= l[k * n + i] * x[k];
        }
        x[i] = s / l[i * n + i];
    }
    x
}

/// `log det(L L^T)`.
pub(crate) fn log_det(l: &[f64], n: usize) -> f64 {
    (0..n).map(|i| l[i * n + i].ln()).sum::<f64>() * 2.0
}

/// Adds `ridge` to the diagonal and factors, growing the ridge tenfold on
/// failure. Returns the factor and the ridge actually used.
pub(crate) fn regularized_cholesky(a: &[f64], n: usize, mut ridge: f64) -> (Vec<f64>, f64) {
    loop {
        let mut m = a.to_vec();
        for i in 0..n {
            m[i * n + i] += ridge;
        }
        if let Some(l) = cholesky(&m, n) {
            return (l, ridge);
        }
        ridge = if ridge > 0.0 { ridge * 10.0 } else { 1e-12 };
    }
}

pub(crate) fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}
