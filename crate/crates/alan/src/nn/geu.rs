//! Gated embedding unit: a projection with a multiplicative sigmoid gate,
//! followed by L2 normalization.

use ndarray::Array1;
use rand_chacha::ChaCha8Rng;

use super::linear::Linear;
use super::ops::sigmoid;
use super::params::{ParamModule, ParamTensor};
use crate::{Error, Result};

/// What to do when the gated vector is exactly zero (normalization would
/// divide by zero). The default surfaces an error; `Zero` passes a zero
/// vector through instead.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ZeroPolicy {
    #[default]
    Error,
    Zero,
}

/// `z = g / ||g||` with `g = y0 * sigmoid(W2 y0 + b2)`, `y0 = W1 x + b1`.
#[derive(Debug, Clone)]
pub struct GatedEmbeddingUnit {
    pub lin1: Linear,
    pub lin2: Linear,
    zero_policy: ZeroPolicy,
}

pub struct GeuCache {
    x: Array1<f64>,
    y0: Array1<f64>,
    gate: Array1<f64>,
    gated: Array1<f64>,
    norm: f64,
}

impl GatedEmbeddingUnit {
    pub fn new(prefix: &str, d_in: usize, d_out: usize, rng: &mut ChaCha8Rng) -> Self {
        Self {
            lin1: Linear::new(&format!("{prefix}.lin1"), d_in, d_out, rng),
            lin2: Linear::new(&format!("{prefix}.lin2"), d_out, d_out, rng),
            zero_policy: ZeroPolicy::Error,
        }
    }

    pub fn with_zero_policy(mut self, policy: ZeroPolicy) -> Self {
        self.zero_policy = policy;
        self
    }

    pub fn forward(&self, x: &Array1<f64>) -> Result<(Array1<f64>, GeuCache)> {
        let y0 = self.lin1.forward_vec(x);
        let gate = self.lin2.forward_vec(&y0).mapv(sigmoid);
        let gated = &y0 * &gate;
        let norm = gated.dot(&gated).sqrt();
        let z = if norm == 0.0 {
            match self.zero_policy {
                ZeroPolicy::Error => {
                    return Err(Error::ZeroVector(format!(
                        "gated embedding {} produced an exactly zero vector",
                        self.lin1.w.name()
                    )))
                }
                ZeroPolicy::Zero => gated.clone(),
            }
        } else {
            &gated / norm
        };
        Ok((z, GeuCache { x: x.clone(), y0, gate, gated, norm }))
    }

    pub fn backward(&mut self, cache: &GeuCache, dz: &Array1<f64>) -> Array1<f64> {
        // Through the normalization z = g / ||g||:
        //   dg = (dz - z (z . dz)) / ||g||
        let dgated = if cache.norm == 0.0 {
            dz.clone() // zero-policy passthrough: d(identity)
        } else {
            let z = &cache.gated / cache.norm;
            let zdot = z.dot(dz);
            (dz - &(z * zdot)) / cache.norm
        };
        // g = y0 * s, s = sigmoid(a2), a2 = lin2(y0)
        let dgate = &dgated * &cache.y0;
        let da2 = &dgate * &(&cache.gate * &cache.gate.mapv(|s| 1.0 - s));
        let dy0_via_gate = self.lin2.backward_vec(&cache.y0, &da2);
        let dy0 = &dgated * &cache.gate + dy0_via_gate;
        self.lin1.backward_vec(&cache.x, &dy0)
    }
}

impl ParamModule for GatedEmbeddingUnit {
    fn collect_params<'a>(&'a self, out: &mut Vec<&'a ParamTensor>) {
        self.lin1.collect_params(out);
        self.lin2.collect_params(out);
    }

    fn collect_params_mut<'a>(&'a mut self, out: &mut Vec<&'a mut ParamTensor>) {
        self.lin1.collect_params_mut(out);
        self.lin2.collect_params_mut(out);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;
    use rand::{Rng, SeedableRng};

    #[test]
    fn output_is_unit_length() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let geu = GatedEmbeddingUnit::new("t", 5, 4, &mut rng);
        let x = Array1::from_shape_fn(5, |_| rng.random_range(-1.0..1.0));
        let (z, _) = geu.forward(&x).unwrap();
        assert_abs_diff_eq!(z.dot(&z).sqrt(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn zero_gate_surfaces_error_by_default_and_zero_under_policy() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut geu = GatedEmbeddingUnit::new("t", 2, 2, &mut rng);
        // Force y0 = 0 regardless of input: zero projection weight and bias.
        geu.lin1.w.value_mut().fill(0.0);
        geu.lin1.b.value_mut().fill(0.0);
        let x = array![1.0, -1.0];
        assert!(matches!(geu.forward(&x), Err(Error::ZeroVector(_))));

        let geu = geu.with_zero_policy(ZeroPolicy::Zero);
        let (z, _) = geu.forward(&x).unwrap();
        assert!(z.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn input_gradient_matches_finite_difference() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut geu = GatedEmbeddingUnit::new("t", 4, 3, &mut rng);
        let x = Array1::from_shape_fn(4, |_| rng.random_range(-1.0..1.0));
        let (z, cache) = geu.forward(&x).unwrap();
        let dz = Array1::from_shape_fn(3, |i| 0.3 + 0.1 * i as f64);
        let dx = geu.backward(&cache, &dz);

        let h = 1e-6;
        let loss = |v: &Array1<f64>| -> f64 {
            let (z, _) = geu.forward(v).unwrap();
            z.iter().zip(dz.iter()).map(|(a, b)| a * b).sum()
        };
        let _ = z;
        for j in 0..4 {
            let mut xp = x.clone();
            xp[j] += h;
            let mut xm = x.clone();
            xm[j] -= h;
            let fd = (loss(&xp) - loss(&xm)) / (2.0 * h);
            assert_abs_diff_eq!(dx[j], fd, epsilon = 1e-7);
        }
    }
}
