//! Named parameter tensors and the module trait that exposes them.

use ndarray::{Array1, Array2, ArrayD, Ix1, Ix2};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::{Error, Result};

/// A learnable tensor: a stable name, its value and a same-shaped gradient
/// accumulator.
///
/// Names are path-like (`"video.self0.attn.wq"`) and must be unique within a
/// model; checkpoints and the optimizer both key off the order in which a
/// module yields its parameters, and checkpoint loading additionally verifies
/// name and shape.
#[derive(Debug, Clone)]
pub struct ParamTensor {
    name: String,
    value: ArrayD<f64>,
    grad: ArrayD<f64>,
}

impl ParamTensor {
    pub fn new(name: impl Into<String>, value: ArrayD<f64>) -> Self {
        let grad = ArrayD::zeros(value.raw_dim());
        Self { name: name.into(), value, grad }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn value(&self) -> &ArrayD<f64> {
        &self.value
    }

    pub fn value_mut(&mut self) -> &mut ArrayD<f64> {
        &mut self.value
    }

    pub fn grad(&self) -> &ArrayD<f64> {
        &self.grad
    }

    pub fn grad_mut(&mut self) -> &mut ArrayD<f64> {
        &mut self.grad
    }

    /// View the value as a matrix; panics if the tensor is not 2-D.
    pub fn mat(&self) -> ndarray::ArrayView2<'_, f64> {
        self.value.view().into_dimensionality::<Ix2>().expect("2-d parameter")
    }

    /// View the value as a vector; panics if the tensor is not 1-D.
    pub fn vec(&self) -> ndarray::ArrayView1<'_, f64> {
        self.value.view().into_dimensionality::<Ix1>().expect("1-d parameter")
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(0.0);
    }

    /// Accumulate a 2-D gradient contribution.
    pub fn add_grad2(&mut self, g: &Array2<f64>) {
        let mut view = self.grad.view_mut().into_dimensionality::<Ix2>().expect("2-d parameter");
        view += g;
    }

    /// Accumulate a 1-D gradient contribution.
    pub fn add_grad1(&mut self, g: &Array1<f64>) {
        let mut view = self.grad.view_mut().into_dimensionality::<Ix1>().expect("1-d parameter");
        view += g;
    }

    /// Error if any value entry is NaN or infinite.
    pub fn ensure_finite(&self) -> Result<()> {
        if self.value.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(Error::NonFinite(format!("parameter {}", self.name)))
        }
    }
}

/// Anything that owns parameters.
///
/// Implementations push their tensors in a fixed, documented order; that
/// order defines the layout of checkpoints and optimizer state.
pub trait ParamModule {
    fn collect_params<'a>(&'a self, out: &mut Vec<&'a ParamTensor>);
    fn collect_params_mut<'a>(&'a mut self, out: &mut Vec<&'a mut ParamTensor>);

    fn params(&self) -> Vec<&ParamTensor> {
        let mut out = Vec::new();
        self.collect_params(&mut out);
        out
    }

    fn params_mut(&mut self) -> Vec<&mut ParamTensor> {
        let mut out = Vec::new();
        self.collect_params_mut(&mut out);
        out
    }

    fn zero_grads(&mut self) {
        for p in self.params_mut() {
            p.zero_grad();
        }
    }
}

/// Xavier-uniform matrix: U(-a, a) with a = sqrt(6 / (rows + cols)).
pub fn xavier(name: &str, rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> ParamTensor {
    let a = (6.0 / (rows + cols) as f64).sqrt();
    let value = Array2::from_shape_fn((rows, cols), |_| rng.random_range(-a..a));
    ParamTensor::new(name, value.into_dyn())
}

/// Gaussian matrix with the given standard deviation (used for embeddings).
pub fn gaussian(name: &str, rows: usize, cols: usize, std: f64, rng: &mut ChaCha8Rng) -> ParamTensor {
    let dist = Normal::new(0.0, std).expect("valid std");
    let value = Array2::from_shape_fn((rows, cols), |_| dist.sample(rng));
    ParamTensor::new(name, value.into_dyn())
}

pub fn zeros1(name: &str, len: usize) -> ParamTensor {
    ParamTensor::new(name, Array1::<f64>::zeros(len).into_dyn())
}

pub fn ones1(name: &str, len: usize) -> ParamTensor {
    ParamTensor::new(name, Array1::<f64>::ones(len).into_dyn())
}
