//! Fully connected layer with manual backward.

use ndarray::{Array1, Array2, Ix1, Ix2};
use rand_chacha::ChaCha8Rng;

use super::params::{xavier, zeros1, ParamModule, ParamTensor};

/// `y = x W + b` with `W: d_in x d_out`, applied row-wise to a 2-D input.
#[derive(Debug, Clone)]
pub struct Linear {
    pub w: ParamTensor,
    pub b: ParamTensor,
}

impl Linear {
    pub fn new(prefix: &str, d_in: usize, d_out: usize, rng: &mut ChaCha8Rng) -> Self {
        Self {
            w: xavier(&format!("{prefix}.w"), d_in, d_out, rng),
            b: zeros1(&format!("{prefix}.b"), d_out),
        }
    }

    pub fn d_in(&self) -> usize {
        self.w.mat().nrows()
    }

    pub fn d_out(&self) -> usize {
        self.w.mat().ncols()
    }

    pub fn forward(&self, x: &Array2<f64>) -> Array2<f64> {
        let b = self.b.vec();
        x.dot(&self.w.mat()) + &b
    }

    /// Accumulates dW = x^T dy and db = sum_rows(dy); returns dx = dy W^T.
    pub fn backward(&mut self, x: &Array2<f64>, dy: &Array2<f64>) -> Array2<f64> {
        let dw = x.t().dot(dy);
        let db = dy.sum_axis(ndarray::Axis(0));
        let dx = dy.dot(&self.w.mat().t());
        self.w.add_grad2(&dw);
        self.b.add_grad1(&db);
        dx
    }

    /// Convenience for a single vector input.
    pub fn forward_vec(&self, x: &Array1<f64>) -> Array1<f64> {
        let row = x.view().insert_axis(ndarray::Axis(0)).into_dimensionality::<Ix2>().unwrap();
        let y = row.dot(&self.w.mat()) + &self.b.vec();
        y.index_axis_move(ndarray::Axis(0), 0).into_dimensionality::<Ix1>().unwrap()
    }

    /// Backward for a single vector input; returns dx.
    pub fn backward_vec(&mut self, x: &Array1<f64>, dy: &Array1<f64>) -> Array1<f64> {
        let x2 = x.view().insert_axis(ndarray::Axis(0)).to_owned();
        let dy2 = dy.view().insert_axis(ndarray::Axis(0)).to_owned();
        let dx = self.backward(&x2, &dy2);
        dx.index_axis_move(ndarray::Axis(0), 0)
    }
}

impl ParamModule for Linear {
    fn collect_params<'a>(&'a self, out: &mut Vec<&'a ParamTensor>) {
        out.push(&self.w);
        out.push(&self.b);
    }

    fn collect_params_mut<'a>(&'a mut self, out: &mut Vec<&'a mut ParamTensor>) {
        out.push(&mut self.w);
        out.push(&mut self.b);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;
    use rand::SeedableRng;

    #[test]
    fn forward_matches_hand_computation() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut lin = Linear::new("t", 2, 2, &mut rng);
        lin.w.value_mut().assign(&array![[1.0, 2.0], [3.0, 4.0]].into_dyn());
        lin.b.value_mut().assign(&array![0.5, -0.5].into_dyn());
        let y = lin.forward(&array![[1.0, 1.0]]);
        assert_abs_diff_eq!(y[[0, 0]], 4.5, epsilon = 1e-12);
        assert_abs_diff_eq!(y[[0, 1]], 5.5, epsilon = 1e-12);
    }

    #[test]
    fn backward_shapes_and_bias_grad() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut lin = Linear::new("t", 3, 2, &mut rng);
        let x = array![[1.0, 0.0, -1.0], [2.0, 1.0, 0.5]];
        let dy = array![[1.0, 1.0], [1.0, 1.0]];
        let dx = lin.backward(&x, &dy);
        assert_eq!(dx.dim(), (2, 3));
        // db = column sums of dy
        assert_abs_diff_eq!(lin.b.grad()[[0]], 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(lin.b.grad()[[1]], 2.0, epsilon = 1e-12);
    }
}
