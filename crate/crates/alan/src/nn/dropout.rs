//! Inverted dropout.

use ndarray::Array2;
use rand::Rng;

use super::Mode;

/// Inverted dropout: in train mode each entry is zeroed with probability
/// `rate` and survivors are scaled by `1/(1-rate)`, so eval mode is the
/// identity with no rescaling.
#[derive(Debug, Clone)]
pub struct Dropout {
    rate: f64,
}

/// The realized mask (scale factors), or `Identity` when dropout was inactive.
pub enum DropoutCache {
    Identity,
    Mask(Array2<f64>),
}

impl Dropout {
    /// `rate` must lie in [0, 1).
    pub fn new(rate: f64) -> crate::Result<Self> {
        if !(0.0..1.0).contains(&rate) {
            return Err(crate::Error::Config(format!("dropout rate {rate} outside [0, 1)")));
        }
        Ok(Self { rate })
    }

    pub fn forward(&self, x: &Array2<f64>, mode: &mut Mode) -> (Array2<f64>, DropoutCache) {
        match mode {
            Mode::Train(rng) if self.rate > 0.0 => {
                let keep = 1.0 - self.rate;
                let mask = Array2::from_shape_fn(x.raw_dim(), |_| {
                    if rng.random::<f64>() < self.rate {
                        0.0
                    } else {
                        1.0 / keep
                    }
                });
                (x * &mask, DropoutCache::Mask(mask))
            }
            _ => (x.clone(), DropoutCache::Identity),
        }
    }

    pub fn backward(&self, cache: &DropoutCache, dy: &Array2<f64>) -> Array2<f64> {
        match cache {
            DropoutCache::Identity => dy.clone(),
            DropoutCache::Mask(mask) => dy * mask,
        }
    }
}
