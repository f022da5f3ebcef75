//! Multi-head scaled dot-product attention with manual backward.

use ndarray::{s, Array2, Array3};
use rand_chacha::ChaCha8Rng;

use super::linear::Linear;
use super::ops::{softmax_rows, softmax_rows_backward};
use super::params::{ParamModule, ParamTensor};
use crate::{Error, Result};

/// Multi-head attention. Queries come from one sequence, keys and values from
/// another (pass the same array twice for self-attention). All projections
/// map `d_model -> d_model`; heads are contiguous column slices of width
/// `d_model / n_heads`.
#[derive(Debug, Clone)]
pub struct MultiHeadAttention {
    pub wq: Linear,
    pub wk: Linear,
    pub wv: Linear,
    pub wo: Linear,
    n_heads: usize,
    d_model: usize,
}

/// Everything the backward pass needs from the forward pass.
pub struct AttentionCache {
    q_in: Array2<f64>,
    kv_in: Array2<f64>,
    q: Array2<f64>,
    k: Array2<f64>,
    v: Array2<f64>,
    /// Per-head attention probabilities, `n_heads x len_q x len_k`.
    probs: Array3<f64>,
    /// Concatenated per-head context, before the output projection.
    ctx: Array2<f64>,
}

impl MultiHeadAttention {
    pub fn new(prefix: &str, d_model: usize, n_heads: usize, rng: &mut ChaCha8Rng) -> Result<Self> {
        if n_heads == 0 || d_model % n_heads != 0 {
            return Err(Error::Config(format!(
                "attention width {d_model} is not divisible into {n_heads} heads"
            )));
        }
        Ok(Self {
            wq: Linear::new(&format!("{prefix}.wq"), d_model, d_model, rng),
            wk: Linear::new(&format!("{prefix}.wk"), d_model, d_model, rng),
            wv: Linear::new(&format!("{prefix}.wv"), d_model, d_model, rng),
            wo: Linear::new(&format!("{prefix}.wo"), d_model, d_model, rng),
            n_heads,
            d_model,
        })
    }

    pub fn forward(
        &self,
        q_in: &Array2<f64>,
        kv_in: &Array2<f64>,
    ) -> Result<(Array2<f64>, AttentionCache)> {
        if q_in.ncols() != self.d_model || kv_in.ncols() != self.d_model {
            return Err(Error::Shape(format!(
                "attention expects width {}, got query {} / key-value {}",
                self.d_model,
                q_in.ncols(),
                kv_in.ncols()
            )));
        }
        if q_in.nrows() == 0 || kv_in.nrows() == 0 {
            return Err(Error::Validation("attention over an empty sequence".into()));
        }
        let dh = self.d_model / self.n_heads;
        let scale = 1.0 / (dh as f64).sqrt();
        let (lq, lk) = (q_in.nrows(), kv_in.nrows());

        let q = self.wq.forward(q_in);
        let k = self.wk.forward(kv_in);
        let v = self.wv.forward(kv_in);

        let mut probs = Array3::zeros((self.n_heads, lq, lk));
        let mut ctx = Array2::zeros((lq, self.d_model));
        for h in 0..self.n_heads {
            let cols = h * dh..(h + 1) * dh;
            let qh = q.slice(s![.., cols.clone()]);
            let kh = k.slice(s![.., cols.clone()]);
            let vh = v.slice(s![.., cols.clone()]);
            let scores = qh.dot(&kh.t()) * scale;
            let p = softmax_rows(&scores);
            ctx.slice_mut(s![.., cols]).assign(&p.dot(&vh));
            probs.slice_mut(s![h, .., ..]).assign(&p);
        }
        let y = self.wo.forward(&ctx);
        let cache = AttentionCache {
            q_in: q_in.clone(),
            kv_in: kv_in.clone(),
            q,
            k,
            v,
            probs,
            ctx,
        };
        Ok((y, cache))
    }

    /// Returns `(d_q_in, d_kv_in)`. For self-attention, add the two.
    pub fn backward(
        &mut self,
        cache: &AttentionCache,
        dy: &Array2<f64>,
    ) -> (Array2<f64>, Array2<f64>) {
        let dh = self.d_model / self.n_heads;
        let scale = 1.0 / (dh as f64).sqrt();

        let dctx = self.wo.backward(&cache.ctx, dy);
        let mut dq = Array2::zeros(cache.q.raw_dim());
        let mut dk = Array2::zeros(cache.k.raw_dim());
        let mut dv = Array2::zeros(cache.v.raw_dim());
        for h in 0..self.n_heads {
            let cols = h * dh..(h + 1) * dh;
            let p = cache.probs.slice(s![h, .., ..]).to_owned();
            let dctx_h = dctx.slice(s![.., cols.clone()]);
            let vh = cache.v.slice(s![.., cols.clone()]);
            let qh = cache.q.slice(s![.., cols.clone()]);
            let kh = cache.k.slice(s![.., cols.clone()]);

            let dp = dctx_h.dot(&vh.t());
            let dvh = p.t().dot(&dctx_h);
            let dscores = softmax_rows_backward(&p, &dp) * scale;
            let dqh = dscores.dot(&kh);
            let dkh = dscores.t().dot(&qh);

            dq.slice_mut(s![.., cols.clone()]).assign(&dqh);
            dk.slice_mut(s![.., cols.clone()]).assign(&dkh);
            dv.slice_mut(s![.., cols]).assign(&dvh);
        }
        let d_q_in = self.wq.backward(&cache.q_in, &dq);
        let d_kv_in =
            self.wk.backward(&cache.kv_in, &dk) + self.wv.backward(&cache.kv_in, &dv);
        (d_q_in, d_kv_in)
    }
}

impl ParamModule for MultiHeadAttention {
    fn collect_params<'a>(&'a self, out: &mut Vec<&'a ParamTensor>) {
        self.wq.collect_params(out);
        self.wk.collect_params(out);
        self.wv.collect_params(out);
        self.wo.collect_params(out);
    }

    fn collect_params_mut<'a>(&'a mut self, out: &mut Vec<&'a mut ParamTensor>) {
        self.wq.collect_params_mut(out);
        self.wk.collect_params_mut(out);
        self.wv.collect_params_mut(out);
        self.wo.collect_params_mut(out);
    }
}
