//! Composite transformer blocks: feed-forward, encoder layer, cross-attention
//! block and decoder layer. All follow the post-norm residual layout
//! (`LayerNorm(x + Sublayer(x))`).

use ndarray::Array2;
use rand_chacha::ChaCha8Rng;

use super::attention::{AttentionCache, MultiHeadAttention};
use super::dropout::{Dropout, DropoutCache};
use super::linear::Linear;
use super::norm::{LayerNorm, LayerNormCache};
use super::ops::{gelu, gelu_grad};
use super::params::{ParamModule, ParamTensor};
use super::Mode;
use crate::Result;

/// Position-wise feed-forward: `lin2(gelu(lin1(x)))`.
#[derive(Debug, Clone)]
pub struct FeedForward {
    pub lin1: Linear,
    pub lin2: Linear,
}

pub struct FeedForwardCache {
    x: Array2<f64>,
    pre_act: Array2<f64>,
    hidden: Array2<f64>,
}

impl FeedForward {
    pub fn new(prefix: &str, d_model: usize, d_ff: usize, rng: &mut ChaCha8Rng) -> Self {
        Self {
            lin1: Linear::new(&format!("{prefix}.lin1"), d_model, d_ff, rng),
            lin2: Linear::new(&format!("{prefix}.lin2"), d_ff, d_model, rng),
        }
    }

    pub fn forward(&self, x: &Array2<f64>) -> (Array2<f64>, FeedForwardCache) {
        let pre_act = self.lin1.forward(x);
        let hidden = pre_act.mapv(gelu);
        let y = self.lin2.forward(&hidden);
        (y, FeedForwardCache { x: x.clone(), pre_act, hidden })
    }

    pub fn backward(&mut self, cache: &FeedForwardCache, dy: &Array2<f64>) -> Array2<f64> {
        let dhidden = self.lin2.backward(&cache.hidden, dy);
        let dpre = &dhidden * &cache.pre_act.mapv(gelu_grad);
        self.lin1.backward(&cache.x, &dpre)
    }
}

impl ParamModule for FeedForward {
    fn collect_params<'a>(&'a self, out: &mut Vec<&'a ParamTensor>) {
        self.lin1.collect_params(out);
        self.lin2.collect_params(out);
    }

    fn collect_params_mut<'a>(&'a mut self, out: &mut Vec<&'a mut ParamTensor>) {
        self.lin1.collect_params_mut(out);
        self.lin2.collect_params_mut(out);
    }
}

/// One standard transformer encoder layer:
/// `h = LN(x + Drop(SelfAttn(x)))`, `y = LN(h + Drop(FF(h)))`.
#[derive(Debug, Clone)]
pub struct EncoderLayer {
    pub attn: MultiHeadAttention,
    pub ff: FeedForward,
    pub ln1: LayerNorm,
    pub ln2: LayerNorm,
    drop: Dropout,
}

pub struct EncoderLayerCache {
    attn: AttentionCache,
    drop1: DropoutCache,
    ln1: LayerNormCache,
    ff: FeedForwardCache,
    drop2: DropoutCache,
    ln2: LayerNormCache,
}

impl EncoderLayer {
    pub fn new(
        prefix: &str,
        d_model: usize,
        n_heads: usize,
        d_ff: usize,
        dropout: f64,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        Ok(Self {
            attn: MultiHeadAttention::new(&format!("{prefix}.attn"), d_model, n_heads, rng)?,
            ff: FeedForward::new(&format!("{prefix}.ff"), d_model, d_ff, rng),
            ln1: LayerNorm::new(&format!("{prefix}.ln1"), d_model),
            ln2: LayerNorm::new(&format!("{prefix}.ln2"), d_model),
            drop: Dropout::new(dropout)?,
        })
    }

    pub fn forward(&self, x: &Array2<f64>, mode: &mut Mode) -> Result<(Array2<f64>, EncoderLayerCache)> {
        let (attn_out, attn_cache) = self.attn.forward(x, x)?;
        let (dropped1, drop1) = self.drop.forward(&attn_out, mode);
        let (h, ln1) = self.ln1.forward(&(x + &dropped1));
        let (ff_out, ff_cache) = self.ff.forward(&h);
        let (dropped2, drop2) = self.drop.forward(&ff_out, mode);
        let (y, ln2) = self.ln2.forward(&(&h + &dropped2));
        Ok((y, EncoderLayerCache { attn: attn_cache, drop1, ln1, ff: ff_cache, drop2, ln2 }))
    }

    pub fn backward(&mut self, cache: &EncoderLayerCache, dy: &Array2<f64>) -> Array2<f64> {
        let dr2 = self.ln2.backward(&cache.ln2, dy);
        let dff_out = self.drop.backward(&cache.drop2, &dr2);
        let mut dh = dr2; // residual branch
        dh += &self.ff.backward(&cache.ff, &dff_out);
        let dr1 = self.ln1.backward(&cache.ln1, &dh);
        let dattn_out = self.drop.backward(&cache.drop1, &dr1);
        let (dq, dkv) = self.attn.backward(&cache.attn, &dattn_out);
        dr1 + dq + dkv
    }
}

impl ParamModule for EncoderLayer {
    fn collect_params<'a>(&'a self, out: &mut Vec<&'a ParamTensor>) {
        self.attn.collect_params(out);
        self.ff.collect_params(out);
        self.ln1.collect_params(out);
        self.ln2.collect_params(out);
    }

    fn collect_params_mut<'a>(&'a mut self, out: &mut Vec<&'a mut ParamTensor>) {
        self.attn.collect_params_mut(out);
        self.ff.collect_params_mut(out);
        self.ln1.collect_params_mut(out);
        self.ln2.collect_params_mut(out);
    }
}

/// Cross-stream fusion block: attends from one stream onto the other, then
/// `y = LN(x_self + Linear(Attn(x_self -> x_other)))`.
#[derive(Debug, Clone)]
pub struct CrossAttentionBlock {
    pub attn: MultiHeadAttention,
    pub proj: Linear,
    pub ln: LayerNorm,
}

pub struct CrossAttentionCache {
    attn: AttentionCache,
    attn_out: Array2<f64>,
    ln: LayerNormCache,
}

impl CrossAttentionBlock {
    pub fn new(prefix: &str, d_model: usize, n_heads: usize, rng: &mut ChaCha8Rng) -> Result<Self> {
        Ok(Self {
            attn: MultiHeadAttention::new(&format!("{prefix}.attn"), d_model, n_heads, rng)?,
            proj: Linear::new(&format!("{prefix}.proj"), d_model, d_model, rng),
            ln: LayerNorm::new(&format!("{prefix}.ln"), d_model),
        })
    }

    pub fn forward(
        &self,
        x_self: &Array2<f64>,
        x_other: &Array2<f64>,
    ) -> Result<(Array2<f64>, CrossAttentionCache)> {
        let (attn_out, attn_cache) = self.attn.forward(x_self, x_other)?;
        let projected = self.proj.forward(&attn_out);
        let (y, ln) = self.ln.forward(&(x_self + &projected));
        Ok((y, CrossAttentionCache { attn: attn_cache, attn_out, ln }))
    }

    /// Returns `(d_x_self, d_x_other)`.
    pub fn backward(
        &mut self,
        cache: &CrossAttentionCache,
        dy: &Array2<f64>,
    ) -> (Array2<f64>, Array2<f64>) {
        let dr = self.ln.backward(&cache.ln, dy);
        let dproj = self.proj.backward(&cache.attn_out, &dr);
        let (dq, dkv) = self.attn.backward(&cache.attn, &dproj);
        (dr + dq, dkv)
    }
}

impl ParamModule for CrossAttentionBlock {
    fn collect_params<'a>(&'a self, out: &mut Vec<&'a ParamTensor>) {
        self.attn.collect_params(out);
        self.proj.collect_params(out);
        self.ln.collect_params(out);
    }

    fn collect_params_mut<'a>(&'a mut self, out: &mut Vec<&'a mut ParamTensor>) {
        self.attn.collect_params_mut(out);
        self.proj.collect_params_mut(out);
        self.ln.collect_params_mut(out);
    }
}

/// One standard transformer decoder layer without causal masking: self
/// attention over the queries, cross attention onto a memory sequence, then
/// feed-forward, each with a residual + layer norm.
#[derive(Debug, Clone)]
pub struct DecoderLayer {
    pub self_attn: MultiHeadAttention,
    pub cross_attn: MultiHeadAttention,
    pub ff: FeedForward,
    pub ln1: LayerNorm,
    pub ln2: LayerNorm,
    pub ln3: LayerNorm,
    drop: Dropout,
}

pub struct DecoderLayerCache {
    self_attn: AttentionCache,
    drop1: DropoutCache,
    ln1: LayerNormCache,
    cross_attn: AttentionCache,
    drop2: DropoutCache,
    ln2: LayerNormCache,
    ff: FeedForwardCache,
    drop3: DropoutCache,
    ln3: LayerNormCache,
}

impl DecoderLayer {
    pub fn new(
        prefix: &str,
        d_model: usize,
        n_heads: usize,
        d_ff: usize,
        dropout: f64,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        Ok(Self {
            self_attn: MultiHeadAttention::new(&format!("{prefix}.self_attn"), d_model, n_heads, rng)?,
            cross_attn: MultiHeadAttention::new(&format!("{prefix}.cross_attn"), d_model, n_heads, rng)?,
            ff: FeedForward::new(&format!("{prefix}.ff"), d_model, d_ff, rng),
            ln1: LayerNorm::new(&format!("{prefix}.ln1"), d_model),
            ln2: LayerNorm::new(&format!("{prefix}.ln2"), d_model),
            ln3: LayerNorm::new(&format!("{prefix}.ln3"), d_model),
            drop: Dropout::new(dropout)?,
        })
    }

    pub fn forward(
        &self,
        x: &Array2<f64>,
        memory: &Array2<f64>,
        mode: &mut Mode,
    ) -> Result<(Array2<f64>, DecoderLayerCache)> {
        let (sa, self_cache) = self.self_attn.forward(x, x)?;
        let (d1, drop1) = self.drop.forward(&sa, mode);
        let (h1, ln1) = self.ln1.forward(&(x + &d1));
        let (ca, cross_cache) = self.cross_attn.forward(&h1, memory)?;
        let (d2, drop2) = self.drop.forward(&ca, mode);
        let (h2, ln2) = self.ln2.forward(&(&h1 + &d2));
        let (ff_out, ff_cache) = self.ff.forward(&h2);
        let (d3, drop3) = self.drop.forward(&ff_out, mode);
        let (y, ln3) = self.ln3.forward(&(&h2 + &d3));
        Ok((
            y,
            DecoderLayerCache {
                self_attn: self_cache,
                drop1,
                ln1,
                cross_attn: cross_cache,
                drop2,
                ln2,
                ff: ff_cache,
                drop3,
                ln3,
            },
        ))
    }

    /// Returns `(dx, d_memory)`.
    pub fn backward(
        &mut self,
        cache: &DecoderLayerCache,
        dy: &Array2<f64>,
    ) -> (Array2<f64>, Array2<f64>) {
        let dr3 = self.ln3.backward(&cache.ln3, dy);
        let dff_out = self.drop.backward(&cache.drop3, &dr3);
        let mut dh2 = dr3;
        dh2 += &self.ff.backward(&cache.ff, &dff_out);

        let dr2 = self.ln2.backward(&cache.ln2, &dh2);
        let dca = self.drop.backward(&cache.drop2, &dr2);
        let (dq2, dmem) = self.cross_attn.backward(&cache.cross_attn, &dca);
        let dh1 = dr2 + dq2;

        let dr1 = self.ln1.backward(&cache.ln1, &dh1);
        let dsa = self.drop.backward(&cache.drop1, &dr1);
        let (dq1, dkv1) = self.self_attn.backward(&cache.self_attn, &dsa);
        (dr1 + dq1 + dkv1, dmem)
    }
}

impl ParamModule for DecoderLayer {
    fn collect_params<'a>(&'a self, out: &mut Vec<&'a ParamTensor>) {
        self.self_attn.collect_params(out);
        self.cross_attn.collect_params(out);
        self.ff.collect_params(out);
        self.ln1.collect_params(out);
        self.ln2.collect_params(out);
        self.ln3.collect_params(out);
    }

    fn collect_params_mut<'a>(&'a mut self, out: &mut Vec<&'a mut ParamTensor>) {
        self.self_attn.collect_params_mut(out);
        self.cross_attn.collect_params_mut(out);
        self.ff.collect_params_mut(out);
        self.ln1.collect_params_mut(out);
        self.ln2.collect_params_mut(out);
        self.ln3.collect_params_mut(out);
    }
}
