//! Layer normalization with manual backward.

use ndarray::{Array1, Array2, Axis};

use super::params::{ones1, zeros1, ParamModule, ParamTensor};

const EPS: f64 = 1e-5;

/// Row-wise layer norm: `y = gamma * (x - mean) / sqrt(var + eps) + beta`.
#[derive(Debug, Clone)]
pub struct LayerNorm {
    pub gamma: ParamTensor,
    pub beta: ParamTensor,
}

/// Saved activations needed by the backward pass.
pub struct LayerNormCache {
    xhat: Array2<f64>,
    inv_std: Array1<f64>,
}

impl LayerNorm {
    pub fn new(prefix: &str, d: usize) -> Self {
        Self {
            gamma: ones1(&format!("{prefix}.gamma"), d),
            beta: zeros1(&format!("{prefix}.beta"), d),
        }
    }

    pub fn forward(&self, x: &Array2<f64>) -> (Array2<f64>, LayerNormCache) {
        let d = x.ncols() as f64;
        let mean = x.mean_axis(Axis(1)).expect("non-empty rows");
        let mut xhat = x.clone();
        let mut inv_std = Array1::zeros(x.nrows());
        for (i, mut row) in xhat.rows_mut().into_iter().enumerate() {
            let mu = mean[i];
            let var = row.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / d;
            let inv = 1.0 / (var + EPS).sqrt();
            inv_std[i] = inv;
            row.mapv_inplace(|v| (v - mu) * inv);
        }
        let y = &xhat * &self.gamma.vec() + &self.beta.vec();
        (y, LayerNormCache { xhat, inv_std })
    }

    pub fn backward(&mut self, cache: &LayerNormCache, dy: &Array2<f64>) -> Array2<f64> {
        let d = dy.ncols() as f64;
        let gamma = self.gamma.vec().to_owned();
        let dxhat = dy * &gamma;
        let mut dx = Array2::zeros(dy.raw_dim());
        for i in 0..dy.nrows() {
            let xhat_row = cache.xhat.row(i);
            let dxhat_row = dxhat.row(i);
            let sum_dxhat: f64 = dxhat_row.sum();
            let sum_dxhat_xhat: f64 =
                dxhat_row.iter().zip(xhat_row.iter()).map(|(a, b)| a * b).sum();
            let inv = cache.inv_std[i];
            for j in 0..dy.ncols() {
                dx[[i, j]] = inv / d
                    * (d * dxhat_row[j] - sum_dxhat - xhat_row[j] * sum_dxhat_xhat);
            }
        }
        self.gamma.add_grad1(&(dy * &cache.xhat).sum_axis(Axis(0)));
        self.beta.add_grad1(&dy.sum_axis(Axis(0)));
        dx
    }
}

impl ParamModule for LayerNorm {
    fn collect_params<'a>(&'a self, out: &mut Vec<&'a ParamTensor>) {
        out.push(&self.gamma);
        out.push(&self.beta);
    }

    fn collect_params_mut<'a>(&'a mut self, out: &mut Vec<&'a mut ParamTensor>) {
        out.push(&mut self.gamma);
        out.push(&mut self.beta);
    }
}
