//! Small numeric primitives shared across layers: stable softmax, GELU,
//! sigmoid and cosine similarity, together with their derivatives.

use ndarray::{Array1, Array2, ArrayView1};

use crate::{Error, Result};

/// Numerically stable softmax of a vector (max is subtracted before
/// exponentiation). Requires a non-empty, finite input.
pub fn softmax(x: &ArrayView1<f64>) -> Result<Array1<f64>> {
    if x.is_empty() {
        return Err(Error::Validation("softmax of an empty vector".into()));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("softmax input".into()));
    }
    let max = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exp: Array1<f64> = x.mapv(|v| (v - max).exp());
    let sum = exp.sum();
    Ok(exp / sum)
}

/// Row-wise stable softmax of a matrix.
pub fn softmax_rows(x: &Array2<f64>) -> Array2<f64> {
    let mut out = x.clone();
    for mut row in out.rows_mut() {
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row.mapv_inplace(|v| v / sum);
    }
    out
}

/// Backward through a row-wise softmax: given probabilities `p` and upstream
/// `dp`, returns the gradient with respect to the logits.
pub fn softmax_rows_backward(p: &Array2<f64>, dp: &Array2<f64>) -> Array2<f64> {
    let mut dx = Array2::zeros(p.raw_dim());
    for ((p_row, dp_row), mut dx_row) in p.rows().into_iter().zip(dp.rows()).zip(dx.rows_mut()) {
        let dot: f64 = p_row.iter().zip(dp_row.iter()).map(|(a, b)| a * b).sum();
        for ((&pi, &dpi), dxi) in p_row.iter().zip(dp_row.iter()).zip(dx_row.iter_mut()) {
            *dxi = pi * (dpi - dot);
        }
    }
    dx
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

const GELU_K: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_C: f64 = 0.044_715;

/// GELU in its tanh form: 0.5 x (1 + tanh(sqrt(2/pi) (x + 0.044715 x^3))).
/// Smooth everywhere, which keeps finite-difference gradient checks clean.
pub fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_K * (x + GELU_C * x * x * x)).tanh())
}

/// Exact derivative of the tanh-form GELU.
pub fn gelu_grad(x: f64) -> f64 {
    let u = GELU_K * (x + GELU_C * x * x * x);
    let t = u.tanh();
    let sech2 = 1.0 - t * t;
    0.5 * (1.0 + t) + 0.5 * x * sech2 * GELU_K * (1.0 + 3.0 * GELU_C * x * x)
}

/// Cosine similarity of two equal-length vectors. Errors if either vector is
/// exactly zero, since the similarity is undefined there.
pub fn cosine(a: &ArrayView1<f64>, b: &ArrayView1<f64>) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Shape(format!("cosine over lengths {} and {}", a.len(), b.len())));
    }
    let na = a.dot(a).sqrt();
    let nb = b.dot(b).sqrt();
    if na == 0.0 || nb == 0.0 {
        return Err(Error::ZeroVector("cosine similarity of a zero vector".into()));
    }
    Ok(a.dot(b) / (na * nb))
}

/// L2 norm of a vector.
pub fn l2_norm(a: &ArrayView1<f64>) -> f64 {
    a.dot(a).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    #[test]
    fn softmax_sums_to_one_and_orders() {
        let p = softmax(&array![1.0, 2.0, 3.0].view()).unwrap();
        assert_abs_diff_eq!(p.sum(), 1.0, epsilon = 1e-12);
        assert!(p[0] < p[1] && p[1] < p[2]);
    }

    #[test]
    fn softmax_is_shift_invariant_under_large_offsets() {
        let a = softmax(&array![1e3, 1e3 + 1.0].view()).unwrap();
        let b = softmax(&array![0.0, 1.0].view()).unwrap();
        assert_abs_diff_eq!(a[0], b[0], epsilon = 1e-12);
    }

    #[test]
    fn softmax_rejects_empty_and_nan() {
        assert!(softmax(&Array1::<f64>::zeros(0).view()).is_err());
        assert!(softmax(&array![f64::NAN, 0.0].view()).is_err());
    }

    #[test]
    fn gelu_grad_matches_finite_difference() {
        let h = 1e-6;
        for &x in &[-3.0, -0.7, 0.0, 0.3, 2.5] {
            let fd = (gelu(x + h) - gelu(x - h)) / (2.0 * h);
            assert_abs_diff_eq!(gelu_grad(x), fd, epsilon = 1e-8);
        }
    }

    #[test]
    fn cosine_basics() {
        let a = array![1.0, 0.0];
        let b = array![0.0, 2.0];
        assert_abs_diff_eq!(cosine(&a.view(), &a.view()).unwrap(), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(cosine(&a.view(), &b.view()).unwrap(), 0.0, epsilon = 1e-12);
        assert!(cosine(&a.view(), &array![0.0, 0.0].view()).is_err());
    }
}
