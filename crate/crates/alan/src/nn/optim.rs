//! Adam optimizer with global-norm gradient clipping.

use ndarray::ArrayD;

use super::params::ParamTensor;
use crate::{Error, Result};

/// Adam with bias correction. Moment buffers are keyed by parameter order,
/// which therefore must not change between steps.
#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    m: Vec<ArrayD<f64>>,
    v: Vec<ArrayD<f64>>,
}

impl Adam {
    pub fn new(lr: f64) -> Self {
        Self { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8, step: 0, m: Vec::new(), v: Vec::new() }
    }

    pub fn set_lr(&mut self, lr: f64) {
        self.lr = lr;
    }

    /// Scale all gradients so their global L2 norm is at most `max_norm`.
    /// Returns the pre-clip norm.
    pub fn clip_global_norm(params: &mut [&mut ParamTensor], max_norm: f64) -> f64 {
        let mut sq = 0.0;
        for p in params.iter() {
            sq += p.grad().iter().map(|g| g * g).sum::<f64>();
        }
        let norm = sq.sqrt();
        if norm > max_norm && norm > 0.0 {
            let scale = max_norm / norm;
            for p in params.iter_mut() {
                p.grad_mut().mapv_inplace(|g| g * scale);
            }
        }
        norm
    }

    /// One update over the given parameters (in stable order). Errors if any
    /// updated value comes out non-finite, leaving the parameters as written
    /// so the caller can roll back to a saved checkpoint.
    pub fn step(&mut self, params: &mut [&mut ParamTensor]) -> Result<()> {
        if self.m.is_empty() {
            for p in params.iter() {
                self.m.push(ArrayD::zeros(p.value().raw_dim()));
                self.v.push(ArrayD::zeros(p.value().raw_dim()));
            }
        }
        if self.m.len() != params.len() {
            return Err(Error::Shape(format!(
                "optimizer state holds {} tensors but step got {}",
                self.m.len(),
                params.len()
            )));
        }
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        for (i, p) in params.iter_mut().enumerate() {
            let g = p.grad().clone();
            self.m[i].zip_mut_with(&g, |m, &g| *m = self.beta1 * *m + (1.0 - self.beta1) * g);
            self.v[i].zip_mut_with(&g, |v, &g| *v = self.beta2 * *v + (1.0 - self.beta2) * g * g);
            let lr = self.lr;
            let eps = self.eps;
            let m = &self.m[i];
            let v = &self.v[i];
            let mut value = p.value_mut().view_mut();
            ndarray::Zip::from(&mut value).and(m).and(v).for_each(|w, &m, &v| {
                let mhat = m / bc1;
                let vhat = v / bc2;
                *w -= lr * mhat / (vhat.sqrt() + eps);
            });
            p.ensure_finite()?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array1;

    fn param(v: &[f64]) -> ParamTensor {
        ParamTensor::new("p", Array1::from(v.to_vec()).into_dyn())
    }

    #[test]
    fn minimizes_a_quadratic() {
        // f(x) = (x - 3)^2, grad = 2 (x - 3)
        let mut p = param(&[0.0]);
        let mut adam = Adam::new(0.1);
        for _ in 0..500 {
            p.zero_grad();
            let x = p.value()[[0]];
            p.grad_mut()[[0]] = 2.0 * (x - 3.0);
            adam.step(&mut [&mut p]).unwrap();
        }
        assert!((p.value()[[0]] - 3.0).abs() < 1e-3);
    }

    #[test]
    fn first_step_moves_by_lr_regardless_of_gradient_scale() {
        // Bias correction makes the very first Adam step lr * g / (|g| + eps),
        // i.e. almost exactly lr * sign(g) across many orders of magnitude.
        for &g in &[1e-6, 1.0, 1e6] {
            let mut p = param(&[0.0]);
            p.grad_mut()[[0]] = g;
            let mut adam = Adam::new(0.01);
            adam.step(&mut [&mut p]).unwrap();
            let step = -p.value()[[0]];
            assert!(step > 0.0098 && step <= 0.01, "g={g} -> step {step}");
        }
    }

    #[test]
    fn clip_rescales_to_max_norm() {
        let mut a = param(&[0.0, 0.0]);
        let mut b = param(&[0.0]);
        a.grad_mut()[[0]] = 3.0;
        a.grad_mut()[[1]] = 0.0;
        b.grad_mut()[[0]] = 4.0;
        let norm = Adam::clip_global_norm(&mut [&mut a, &mut b], 1.0);
        assert!((norm - 5.0).abs() < 1e-12);
        let sq = a.grad().iter().chain(b.grad().iter()).map(|g| g * g).sum::<f64>();
        assert!((sq.sqrt() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn short_gradients_are_left_alone() {
        let mut a = param(&[0.0]);
        a.grad_mut()[[0]] = 0.5;
        let norm = Adam::clip_global_norm(&mut [&mut a], 1.0);
        assert_eq!(norm, 0.5);
        assert_eq!(a.grad()[[0]], 0.5);
    }

    #[test]
    fn non_finite_update_is_an_error() {
        let mut p = param(&[0.0]);
        p.grad_mut()[[0]] = f64::NAN;
        let mut adam = Adam::new(0.1);
        assert!(adam.step(&mut [&mut p]).is_err());
    }
}
