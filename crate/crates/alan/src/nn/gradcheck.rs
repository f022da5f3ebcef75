//! Central finite-difference gradient checking.
//!
//! The harness sweeps every entry of every parameter, so instances must be
//! small enough that O(P) loss evaluations are affordable. All checking runs
//! in 64-bit and expects deterministic (eval-mode) loss closures.

use super::params::ParamModule;
use crate::{Error, Result};

/// cbrt(machine epsilon): the classic step-size constant for central
/// differences, balancing truncation against round-off.
const STEP: f64 = 6.055_454_452_393_343e-6;

/// Relative errors are measured against `max(|analytic| + |numeric|, FLOOR)`,
/// so entries whose true gradient is (near) zero are held to an absolute
/// standard of `tolerance * FLOOR` instead of blowing up a 0/0 ratio.
const FLOOR: f64 = 1e-4;

/// Worst relative error seen for one parameter tensor.
#[derive(Debug, Clone)]
pub struct ParamGradReport {
    pub name: String,
    pub max_rel_err: f64,
    pub entries: usize,
}

/// Outcome of a full gradient check.
#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub tolerance: f64,
    pub worst_rel_err: f64,
    pub worst_param: String,
    pub per_param: Vec<ParamGradReport>,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.worst_rel_err <= self.tolerance
    }
}

/// Check analytic gradients against central differences.
///
/// `run(module, accumulate)` evaluates the loss; when `accumulate` is true it
/// must also backpropagate into the parameters' grad buffers (which arrive
/// zeroed). The closure must be deterministic: two calls at the same
/// parameters must return the same loss.
pub fn grad_check<M, F>(module: &mut M, mut run: F, tolerance: f64) -> Result<GradCheckReport>
where
    M: ParamModule + ?Sized,
    F: FnMut(&mut M, bool) -> Result<f64>,
{
    module.zero_grads();
    let loss = run(module, true)?;
    if !loss.is_finite() {
        return Err(Error::NonFinite("loss during gradient check".into()));
    }

    // Snapshot analytic gradients (flattened, in parameter order).
    let analytic: Vec<Vec<f64>> = module
        .params()
        .iter()
        .map(|p| p.grad().iter().cloned().collect())
        .collect();
    let names: Vec<String> = module.params().iter().map(|p| p.name().to_string()).collect();
    let sizes: Vec<usize> = analytic.iter().map(|g| g.len()).collect();

    let mut per_param = Vec::with_capacity(names.len());
    let mut worst = 0.0f64;
    let mut worst_param = String::new();

    for p_idx in 0..names.len() {
        let mut max_rel = 0.0f64;
        for e_idx in 0..sizes[p_idx] {
            let original = {
                let params = module.params();
                params[p_idx].value().as_slice().expect("standard layout")[e_idx]
            };
            let h = STEP * original.abs().max(1.0);

            set_entry(module, p_idx, e_idx, original + h);
            let plus = run(module, false)?;
            set_entry(module, p_idx, e_idx, original - h);
            let minus = run(module, false)?;
            set_entry(module, p_idx, e_idx, original);

            if !plus.is_finite() || !minus.is_finite() {
                return Err(Error::NonFinite(format!(
                    "loss while perturbing {}[{}]",
                    names[p_idx], e_idx
                )));
            }
            let numeric = (plus - minus) / (2.0 * h);
            let a = analytic[p_idx][e_idx];
            let rel = (a - numeric).abs() / (a.abs() + numeric.abs()).max(FLOOR);
            if rel > max_rel {
                max_rel = rel;
            }
        }
        if max_rel > worst {
            worst = max_rel;
            worst_param = names[p_idx].clone();
        }
        per_param.push(ParamGradReport {
            name: names[p_idx].clone(),
            max_rel_err: max_rel,
            entries: sizes[p_idx],
        });
    }

    Ok(GradCheckReport { tolerance, worst_rel_err: worst, worst_param, per_param })
}

fn set_entry<M: ParamModule + ?Sized>(module: &mut M, p_idx: usize, e_idx: usize, v: f64) {
    let mut params = module.params_mut();
    params[p_idx].value_mut().as_slice_mut().expect("standard layout")[e_idx] = v;
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::linear::Linear;
    use crate::nn::params::ParamTensor;
    use ndarray::{Array1, Array2};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Squared-error probe through a linear layer: loss = ||W x + b - t||^2.
    fn linear_sq_loss(lin: &mut Linear, x: &Array2<f64>, t: &Array2<f64>, backward: bool) -> f64 {
        let y = lin.forward(x);
        let diff = &y - t;
        let loss = diff.iter().map(|d| d * d).sum::<f64>();
        if backward {
            let dy = 2.0 * &diff;
            lin.backward(x, &dy);
        }
        loss
    }

    #[test]
    fn linear_with_squared_error_passes_at_1e_6() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let mut lin = Linear::new("probe", 4, 3, &mut rng);
        let x = Array2::from_shape_fn((5, 4), |_| rng.random_range(-1.0..1.0));
        let t = Array2::from_shape_fn((5, 3), |_| rng.random_range(-1.0..1.0));
        let report =
            grad_check(&mut lin, |m, b| Ok(linear_sq_loss(m, &x, &t, b)), 1e-6).unwrap();
        assert!(report.passed(), "worst {} at {}", report.worst_rel_err, report.worst_param);
    }

    #[test]
    fn sign_flipped_backward_is_rejected() {
        // Negative control: a deliberately wrong backward pass (sign flip)
        // must produce a large relative error, not a silent pass.
        let mut rng = ChaCha8Rng::seed_from_u64(43);
        let mut lin = Linear::new("probe", 3, 2, &mut rng);
        let x = Array2::from_shape_fn((4, 3), |_| rng.random_range(-1.0..1.0));
        let t = Array2::from_shape_fn((4, 2), |_| rng.random_range(-1.0..1.0));
        let report = grad_check(
            &mut lin,
            |m, b| {
                let y = m.forward(&x);
                let diff = &y - &t;
                let loss = diff.iter().map(|d| d * d).sum::<f64>();
                if b {
                    let dy = -2.0 * &diff; // wrong sign
                    m.backward(&x, &dy);
                }
                Ok(loss)
            },
            1e-4,
        )
        .unwrap();
        assert!(!report.passed());
        assert!(report.worst_rel_err > 0.5);
    }

    #[test]
    fn non_finite_loss_is_an_error() {
        struct One(ParamTensor);
        impl ParamModule for One {
            fn collect_params<'a>(&'a self, out: &mut Vec<&'a ParamTensor>) {
                out.push(&self.0);
            }
            fn collect_params_mut<'a>(&'a mut self, out: &mut Vec<&'a mut ParamTensor>) {
                out.push(&mut self.0);
            }
        }
        let mut m = One(ParamTensor::new("p", Array1::<f64>::zeros(1).into_dyn()));
        let err = grad_check(&mut m, |_, _| Ok(f64::NAN), 1e-4);
        assert!(matches!(err, Err(Error::NonFinite(_))));
    }

    #[test]
    fn restores_parameters_exactly_after_sweep() {
        let mut rng = ChaCha8Rng::seed_from_u64(44);
        let mut lin = Linear::new("probe", 3, 3, &mut rng);
        let before: Vec<f64> = lin.params()[0].value().iter().cloned().collect();
        let x = Array2::from_shape_fn((2, 3), |_| rng.random_range(-1.0..1.0));
        let t = Array2::zeros((2, 3));
        grad_check(&mut lin, |m, b| Ok(linear_sq_loss(m, &x, &t, b)), 1e-6).unwrap();
        let after: Vec<f64> = lin.params()[0].value().iter().cloned().collect();
        assert_eq!(before, after, "values must be restored bit-exactly");
    }
}
