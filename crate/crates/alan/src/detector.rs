//! Weakly supervised per-clip anomaly scorer: three temporal convolutions
//! (ReLU, ReLU, sigmoid) with dropout between them, top-k multiple-instance
//! aggregation, and binary cross-entropy against the video-level label.

use ndarray::{Array1, Array2, Array3};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::nn::dropout::{Dropout, DropoutCache};
use crate::nn::ops::sigmoid;
use crate::nn::params::{ParamModule, ParamTensor};
use crate::nn::Mode;
use crate::{Error, Result};

/// Per-clip anomaly confidences, each in [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct AnomalyScoreVector(Vec<f64>);

impl AnomalyScoreVector {
    pub fn new(scores: Vec<f64>) -> Result<Self> {
        if scores.is_empty() {
            return Err(Error::Validation("empty anomaly score vector".into()));
        }
        for &s in &scores {
            if !s.is_finite() {
                return Err(Error::NonFinite("anomaly score".into()));
            }
            if !(0.0..=1.0).contains(&s) {
                return Err(Error::Validation(format!("anomaly score {s} outside [0, 1]")));
            }
        }
        Ok(Self(scores))
    }

    pub fn scores(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Detector shape: hidden widths, odd kernel size, dropout on the two hidden
/// layers. The output layer is fixed at one sigmoid unit.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct DetectorConfig {
    pub hidden: (usize, usize),
    pub kernel_size: usize,
    pub dropout: f64,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self { hidden: (128, 32), kernel_size: 7, dropout: 0.6 }
    }
}

impl DetectorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden.0 == 0 || self.hidden.1 == 0 {
            return Err(Error::Config("detector hidden widths must be positive".into()));
        }
        if self.kernel_size == 0 || self.kernel_size % 2 == 0 {
            return Err(Error::Config(format!(
                "kernel size {} must be odd so symmetric padding preserves length",
                self.kernel_size
            )));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        Ok(())
    }
}

/// 1-D convolution along the clip axis with symmetric zero padding, so the
/// output has the same length T as the input.
#[derive(Debug, Clone)]
pub struct TemporalConv {
    /// out_channels x in_channels x kernel
    pub w: ParamTensor,
    pub b: ParamTensor,
    kernel: usize,
}

impl TemporalConv {
    pub fn new(
        prefix: &str,
        in_ch: usize,
        out_ch: usize,
        kernel: usize,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let fan_in = (in_ch * kernel) as f64;
        let fan_out = (out_ch * kernel) as f64;
        let a = (6.0 / (fan_in + fan_out)).sqrt();
        let w = Array3::from_shape_fn((out_ch, in_ch, kernel), |_| rng.random_range(-a..a));
        Self {
            w: ParamTensor::new(format!("{prefix}.w"), w.into_dyn()),
            b: crate::nn::params::zeros1(&format!("{prefix}.b"), out_ch),
            kernel,
        }
    }

    pub fn forward(&self, x: &Array2<f64>) -> Array2<f64> {
        let (t_len, in_ch) = x.dim();
        let w = self.w.value();
        let out_ch = w.shape()[0];
        let c = self.kernel / 2;
        let b = self.b.vec();
        let mut y = Array2::zeros((t_len, out_ch));
        for t in 0..t_len {
            for o in 0..out_ch {
                let mut acc = b[o];
                for j in 0..self.kernel {
                    let s = t as isize + j as isize - c as isize;
                    if s < 0 || s >= t_len as isize {
                        continue; // zero padding
                    }
                    let s = s as usize;
                    for i in 0..in_ch {
                        acc += x[[s, i]] * w[[o, i, j]];
                    }
                }
                y[[t, o]] = acc;
            }
        }
        y
    }

    pub fn backward(&mut self, x: &Array2<f64>, dy: &Array2<f64>) -> Array2<f64> {
        let (t_len, in_ch) = x.dim();
        let out_ch = self.w.value().shape()[0];
        let c = self.kernel / 2;
        let mut dx = Array2::zeros((t_len, in_ch));
        let mut dw = Array3::<f64>::zeros((out_ch, in_ch, self.kernel));
        let mut db = Array1::<f64>::zeros(out_ch);
        {
            let w = self.w.value();
            for t in 0..t_len {
                for o in 0..out_ch {
                    let g = dy[[t, o]];
                    if g == 0.0 {
                        continue;
                    }
                    db[o] += g;
                    for j in 0..self.kernel {
                        let s = t as isize + j as isize - c as isize;
                        if s < 0 || s >= t_len as isize {
                            continue;
                        }
                        let s = s as usize;
                        for i in 0..in_ch {
                            dx[[s, i]] += g * w[[o, i, j]];
                            dw[[o, i, j]] += g * x[[s, i]];
                        }
                    }
                }
            }
        }
        {
            let mut wg = self
                .w
                .grad_mut()
                .view_mut()
                .into_dimensionality::<ndarray::Ix3>()
                .expect("3-d conv weight");
            wg += &dw;
        }
        self.b.add_grad1(&db);
        dx
    }
}

impl ParamModule for TemporalConv {
    fn collect_params<'a>(&'a self, out: &mut Vec<&'a ParamTensor>) {
        out.push(&self.w);
        out.push(&self.b);
    }

    fn collect_params_mut<'a>(&'a mut self, out: &mut Vec<&'a mut ParamTensor>) {
        out.push(&mut self.w);
        out.push(&mut self.b);
    }
}

/// The anomaly scorer: conv-ReLU-drop, conv-ReLU-drop, conv-sigmoid.
#[derive(Debug, Clone)]
pub struct Detector {
    pub conv1: TemporalConv,
    pub conv2: TemporalConv,
    pub conv3: TemporalConv,
    drop: Dropout,
}

pub struct DetectorCache {
    x: Array2<f64>,
    pre1: Array2<f64>,
    dc1: DropoutCache,
    act1_dropped: Array2<f64>,
    pre2: Array2<f64>,
    dc2: DropoutCache,
    act2_dropped: Array2<f64>,
    pre3: Array2<f64>,
}

impl Detector {
    pub fn new(prefix: &str, d_in: usize, config: &DetectorConfig, rng: &mut ChaCha8Rng) -> Result<Self> {
        config.validate()?;
        let (h1, h2) = config.hidden;
        Ok(Self {
            conv1: TemporalConv::new(&format!("{prefix}.conv1"), d_in, h1, config.kernel_size, rng),
            conv2: TemporalConv::new(&format!("{prefix}.conv2"), h1, h2, config.kernel_size, rng),
            conv3: TemporalConv::new(&format!("{prefix}.conv3"), h2, 1, config.kernel_size, rng),
            drop: Dropout::new(config.dropout)?,
        })
    }

    /// Score each clip; the output lies strictly inside (0, 1).
    pub fn score_clips(
        &self,
        features: &Array2<f64>,
        mode: &mut Mode,
    ) -> Result<(AnomalyScoreVector, DetectorCache)> {
        if features.nrows() == 0 {
            return Err(Error::Validation("cannot score an empty clip sequence".into()));
        }
        let pre1 = self.conv1.forward(features);
        let h1 = pre1.mapv(|v| v.max(0.0));
        let (act1_dropped, dc1) = self.drop.forward(&h1, mode);
        let pre2 = self.conv2.forward(&act1_dropped);
        let h2 = pre2.mapv(|v| v.max(0.0));
        let (act2_dropped, dc2) = self.drop.forward(&h2, mode);
        let pre3 = self.conv3.forward(&act2_dropped);
        let scores: Vec<f64> = pre3.column(0).iter().map(|&v| sigmoid(v)).collect();
        let cache = DetectorCache {
            x: features.clone(),
            pre1,
            dc1,
            act1_dropped,
            pre2,
            dc2,
            act2_dropped,
            pre3,
        };
        Ok((AnomalyScoreVector::new(scores)?, cache))
    }

    /// Backward from d(loss)/d(scores); returns d(loss)/d(features).
    pub fn backward(&mut self, cache: &DetectorCache, dscores: &[f64]) -> Array2<f64> {
        let t_len = cache.pre3.nrows();
        let mut dpre3 = Array2::zeros((t_len, 1));
        for t in 0..t_len {
            let s = sigmoid(cache.pre3[[t, 0]]);
            dpre3[[t, 0]] = dscores[t] * s * (1.0 - s);
        }
        let dact2_dropped = self.conv3.backward(&cache.act2_dropped, &dpre3);
        let dh2 = self.drop.backward(&cache.dc2, &dact2_dropped);
        let dpre2 = relu_backward(&cache.pre2, &dh2);
        let dact1_dropped = self.conv2.backward(&cache.act1_dropped, &dpre2);
        let dh1 = self.drop.backward(&cache.dc1, &dact1_dropped);
        let dpre1 = relu_backward(&cache.pre1, &dh1);
        self.conv1.backward(&cache.x, &dpre1)
    }
}

fn relu_backward(pre: &Array2<f64>, dy: &Array2<f64>) -> Array2<f64> {
    // Subgradient 0 at exactly 0.
    let mut dx = dy.clone();
    ndarray::Zip::from(&mut dx).and(pre).for_each(|d, &p| {
        if p <= 0.0 {
            *d = 0.0;
        }
    });
    dx
}

impl ParamModule for Detector {
    fn collect_params<'a>(&'a self, out: &mut Vec<&'a ParamTensor>) {
        self.conv1.collect_params(out);
        self.conv2.collect_params(out);
        self.conv3.collect_params(out);
    }

    fn collect_params_mut<'a>(&'a mut self, out: &mut Vec<&'a mut ParamTensor>) {
        self.conv1.collect_params_mut(out);
        self.conv2.collect_params_mut(out);
        self.conv3.collect_params_mut(out);
    }
}

/// Result of top-k aggregation, keeping the winning indices for backward.
#[derive(Debug, Clone)]
pub struct TopkAggregate {
    pub value: f64,
    pub k: usize,
    /// 0-based positions of the k largest scores (ties broken toward lower
    /// indices, deterministically).
    pub indices: Vec<usize>,
}

/// Video-level prediction: mean of the k = max(1, floor(T/16)) largest clip
/// scores.
pub fn topk_aggregate(l: &AnomalyScoreVector) -> TopkAggregate {
    let t = l.len();
    let k = (t / 16).max(1);
    let mut order: Vec<usize> = (0..t).collect();
    order.sort_by(|&a, &b| {
        l.scores()[b].partial_cmp(&l.scores()[a]).expect("finite scores").then(a.cmp(&b))
    });
    let indices: Vec<usize> = order.into_iter().take(k).collect();
    let value = indices.iter().map(|&i| l.scores()[i]).sum::<f64>() / k as f64;
    TopkAggregate { value, k, indices }
}

/// Gradient of `topk_aggregate` with respect to each score.
pub fn topk_backward(agg: &TopkAggregate, t: usize, dvalue: f64) -> Vec<f64> {
    let mut d = vec![0.0; t];
    for &i in &agg.indices {
        d[i] = dvalue / agg.k as f64;
    }
    d
}

const BCE_EPS: f64 = 1e-7;

/// Binary cross-entropy with both arguments clamped to [eps, 1-eps].
pub fn bce_loss(rho: f64, y: f64) -> Result<f64> {
    if y != 0.0 && y != 1.0 {
        return Err(Error::Validation(format!("binary label must be 0 or 1, got {y}")));
    }
    let r = rho.clamp(BCE_EPS, 1.0 - BCE_EPS);
    Ok(-(y * r.ln() + (1.0 - y) * (1.0 - r).ln()))
}

/// d(bce)/d(rho); zero in the clamped regions where the loss is flat.
pub fn bce_grad(rho: f64, y: f64) -> f64 {
    if !(BCE_EPS..=1.0 - BCE_EPS).contains(&rho) {
        return 0.0;
    }
    (rho - y) / (rho * (1.0 - rho))
}
