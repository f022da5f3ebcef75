//! The three cross-modal encoders: a symmetric two-stream video encoder
//! (object + motion pathways exchanging information through cross-attention),
//! a text encoder with gated stream-matching units, and a single-stream audio
//! encoder.
//!
//! Video/audio encoders consume two sampled clip sets per item — a fixed set
//! U and an anomaly-led set R — assembled into the token layout
//! `[U_CLS, U_1..U_N, R_CLS, R_1..R_N]` where each CLS slot starts as the
//! mean of its block's projected features. Every encoder produces a dual
//! representation: a CLS-level vector `g` and a mean-pooled vector `h`, split
//! into object-matched and motion-matched variants.

use ndarray::{Array1, Array2, Axis};
use rand_chacha::ChaCha8Rng;

use crate::nn::blocks::{CrossAttentionBlock, CrossAttentionCache, EncoderLayer, EncoderLayerCache};
use crate::nn::embedding::Embedding;
use crate::nn::geu::{GatedEmbeddingUnit, GeuCache};
use crate::nn::linear::Linear;
use crate::nn::params::{ParamModule, ParamTensor};
use crate::nn::Mode;
use crate::{Error, Result};

/// Shared shape configuration for all three encoders.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct EncoderConfig {
    /// Raw feature width of the object/motion streams.
    pub d_in_video: usize,
    /// Raw feature width of the audio stream.
    pub d_in_audio: usize,
    /// Model width d.
    pub d_model: usize,
    pub n_heads: usize,
    pub d_ff: usize,
    /// Self-encoder depth per video/audio stream.
    pub n_self_layers: usize,
    /// Contextual encoder depth of the text backbone stand-in.
    pub n_text_layers: usize,
    pub vocab_size: usize,
    /// Positions above this are clamped into the table.
    pub max_position: usize,
    pub dropout: f64,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            d_in_video: 8,
            d_in_audio: 8,
            d_model: 32,
            n_heads: 4,
            d_ff: 64,
            n_self_layers: 1,
            n_text_layers: 1,
            vocab_size: 128,
            max_position: 512,
            dropout: 0.1,
        }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.d_in_video == 0 || self.d_in_audio == 0 || self.d_model == 0 {
            return Err(Error::Config("encoder widths must be positive".into()));
        }
        if self.n_heads == 0 || self.d_model % self.n_heads != 0 {
            return Err(Error::Config(format!(
                "d_model {} must divide into {} heads",
                self.d_model, self.n_heads
            )));
        }
        if self.n_self_layers == 0 || self.n_text_layers == 0 {
            return Err(Error::Config("encoder depth must be at least 1".into()));
        }
        if self.vocab_size == 0 {
            return Err(Error::Config("vocabulary must be non-empty".into()));
        }
        if self.max_position == 0 {
            return Err(Error::Config("max_position must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        Ok(())
    }
}

/// CLS-level (`g`) and mean-pooled (`h`) vectors, each in an object-matched
/// and a motion-matched variant. For video these are the two streams' own
/// outputs; for text and audio they come from gated embedding units.
#[derive(Debug, Clone, PartialEq)]
pub struct DualRepresentation {
    pub g_obj: Array1<f64>,
    pub g_mot: Array1<f64>,
    pub h_obj: Array1<f64>,
    pub h_mot: Array1<f64>,
}

impl DualRepresentation {
    pub fn zeros_like(&self) -> Self {
        Self {
            g_obj: Array1::zeros(self.g_obj.len()),
            g_mot: Array1::zeros(self.g_mot.len()),
            h_obj: Array1::zeros(self.h_obj.len()),
            h_mot: Array1::zeros(self.h_mot.len()),
        }
    }

    /// Elementwise accumulate (gradient aggregation across loss paths).
    pub fn add(&mut self, other: &DualRepresentation) {
        self.g_obj += &other.g_obj;
        self.g_mot += &other.g_mot;
        self.h_obj += &other.h_obj;
        self.h_mot += &other.h_mot;
    }

    pub fn ensure_finite(&self) -> Result<()> {
        for (name, v) in [
            ("g_obj", &self.g_obj),
            ("g_mot", &self.g_mot),
            ("h_obj", &self.h_obj),
            ("h_mot", &self.h_mot),
        ] {
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFinite(format!("dual representation {name}")));
            }
        }
        Ok(())
    }
}

/// Final token-level outputs feeding the masked-phrase pretext task:
/// `video_tokens` is the (2N+2) x d matrix of video token representations,
/// `text_tokens` the L x d matrix of contextual word representations
/// (the prepended CLS row is excluded, so row i corresponds to caption
/// token i).
#[derive(Debug, Clone)]
pub struct FrameLevelOutput {
    pub video_tokens: Array2<f64>,
    pub text_tokens: Array2<f64>,
}

// ---------------------------------------------------------------------------
// Token assembly shared by video streams and audio
// ---------------------------------------------------------------------------

/// The assembled `[U_CLS, U_1..U_N, R_CLS, R_1..R_N]` block layout for one
/// stream, before contextual encoding: projected token vectors plus the
/// positional and block-tag ids that select embedding rows.
#[derive(Debug, Clone)]
pub struct TokenizedClipSequence {
    pub tokens: Array2<f64>,
    /// Original clip positions; CLS slots get 0.
    pub position_ids: Vec<usize>,
    /// 0 for the U block, 1 for the R block.
    pub sequence_ids: Vec<usize>,
}

impl TokenizedClipSequence {
    /// Build from projected features (T x d) and two 1-based index sets.
    pub fn assemble(projected: &Array2<f64>, u: &[usize], r: &[usize], max_position: usize) -> Result<Self> {
        if u.is_empty() || r.is_empty() {
            return Err(Error::Validation("sampled clip sets must be non-empty".into()));
        }
        if u.len() != r.len() {
            return Err(Error::Validation(format!(
                "U and R must share a length, got {} and {}",
                u.len(),
                r.len()
            )));
        }
        let t = projected.nrows();
        let d = projected.ncols();
        let n = u.len();
        for &idx in u.iter().chain(r.iter()) {
            if idx == 0 || idx > t {
                return Err(Error::Validation(format!(
                    "sampled index {idx} outside 1..={t}"
                )));
            }
        }
        let mut tokens = Array2::zeros((2 * n + 2, d));
        let mut position_ids = Vec::with_capacity(2 * n + 2);
        let mut sequence_ids = Vec::with_capacity(2 * n + 2);

        for (block, indices) in [(0usize, u), (1usize, r)] {
            let cls_row = block * (n + 1);
            position_ids.push(0);
            sequence_ids.push(block);
            for (slot, &idx) in indices.iter().enumerate() {
                let row = projected.row(idx - 1);
                let mut cls = tokens.row_mut(cls_row);
                cls += &row;
                let target = cls_row + 1 + slot;
                tokens.row_mut(target).assign(&row);
                position_ids.push(idx.min(max_position));
                sequence_ids.push(block);
            }
            let mut cls = tokens.row_mut(cls_row);
            cls /= n as f64;
        }
        Ok(Self { tokens, position_ids, sequence_ids })
    }

    pub fn len(&self) -> usize {
        self.tokens.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.nrows() == 0
    }

    fn n(&self) -> usize {
        (self.tokens.nrows() - 2) / 2
    }
}

/// Scatter token gradients back to the projected feature matrix (gather +
/// CLS-mean backward).
fn assembly_backward(
    dtokens: &Array2<f64>,
    u: &[usize],
    r: &[usize],
    t: usize,
) -> Array2<f64> {
    let n = u.len();
    let d = dtokens.ncols();
    let mut dproj = Array2::zeros((t, d));
    for (block, indices) in [(0usize, u), (1usize, r)] {
        let cls_row = block * (n + 1);
        for (slot, &idx) in indices.iter().enumerate() {
            let mut target = dproj.row_mut(idx - 1);
            // direct copy of the token slot
            target += &dtokens.row(cls_row + 1 + slot);
            // share of the block CLS mean
            target += &(&dtokens.row(cls_row) / n as f64);
        }
    }
    dproj
}

// ---------------------------------------------------------------------------
// One stream: projection + self encoder over assembled tokens
// ---------------------------------------------------------------------------

/// Projection plus Self Encoder stack for one video stream or the audio
/// stream.
#[derive(Debug, Clone)]
pub struct StreamEncoder {
    pub proj: Linear,
    pub self_layers: Vec<EncoderLayer>,
}

pub struct StreamCache {
    raw: Array2<f64>,
    u: Vec<usize>,
    r: Vec<usize>,
    t: usize,
    layer_io: Vec<EncoderLayerCache>,
}

impl StreamEncoder {
    fn new(prefix: &str, d_in: usize, config: &EncoderConfig, rng: &mut ChaCha8Rng) -> Result<Self> {
        let proj = Linear::new(&format!("{prefix}.proj"), d_in, config.d_model, rng);
        let mut self_layers = Vec::with_capacity(config.n_self_layers);
        for i in 0..config.n_self_layers {
            self_layers.push(EncoderLayer::new(
                &format!("{prefix}.self{i}"),
                config.d_model,
                config.n_heads,
                config.d_ff,
                config.dropout,
                rng,
            )?);
        }
        Ok(Self { proj, self_layers })
    }

    /// Project raw features into model width (exposed so the anomaly detector
    /// can score the same projected sequence the encoder consumes).
    pub fn project(&self, raw: &Array2<f64>) -> Array2<f64> {
        self.proj.forward(raw)
    }

    /// Assemble + embed + self-encode one stream. `pos` and `seq_tags` belong
    /// to the owning encoder so the two video streams share them.
    fn encode_tokens(
        &self,
        raw: &Array2<f64>,
        u: &[usize],
        r: &[usize],
        pos: &Embedding,
        seq_tags: &Embedding,
        max_position: usize,
        mode: &mut Mode,
    ) -> Result<(Array2<f64>, TokenizedClipSequence, StreamCache)> {
        let projected = self.proj.forward(raw);
        let assembly = TokenizedClipSequence::assemble(&projected, u, r, max_position)?;
        let mut x = &assembly.tokens + &pos.forward(&assembly.position_ids)?;
        x += &seq_tags.forward(&assembly.sequence_ids)?;
        let mut layer_io = Vec::with_capacity(self.self_layers.len());
        for layer in &self.self_layers {
            let (next, cache) = layer.forward(&x, mode)?;
            layer_io.push(cache);
            x = next;
        }
        let cache = StreamCache {
            raw: raw.clone(),
            u: u.to_vec(),
            r: r.to_vec(),
            t: raw.nrows(),
            layer_io,
        };
        Ok((x, assembly, cache))
    }

    /// Backward through self layers, embeddings, assembly and projection.
    /// Returns d(raw input).
    fn backward_tokens(
        &mut self,
        cache: &StreamCache,
        assembly: &TokenizedClipSequence,
        pos: &mut Embedding,
        seq_tags: &mut Embedding,
        dout: &Array2<f64>,
    ) -> Array2<f64> {
        let mut d = dout.clone();
        for (layer, lc) in self.self_layers.iter_mut().zip(&cache.layer_io).rev() {
            d = layer.backward(lc, &d);
        }
        pos.backward(&assembly.position_ids, &d);
        seq_tags.backward(&assembly.sequence_ids, &d);
        let dproj = assembly_backward(&d, &cache.u, &cache.r, cache.t);
        self.proj.backward(&cache.raw, &dproj)
    }
}

impl ParamModule for StreamEncoder {
    fn collect_params<'a>(&'a self, out: &mut Vec<&'a ParamTensor>) {
        self.proj.collect_params(out);
        for l in &self.self_layers {
            l.collect_params(out);
        }
    }

    fn collect_params_mut<'a>(&'a mut self, out: &mut Vec<&'a mut ParamTensor>) {
        self.proj.collect_params_mut(out);
        for l in &mut self.self_layers {
            l.collect_params_mut(out);
        }
    }
}

// ---------------------------------------------------------------------------
// Video encoder
// ---------------------------------------------------------------------------

/// Symmetric two-stream video encoder. Each stream runs its own Self Encoder;
/// the Cross Encoders then attend with the self stream as query and the other
/// stream's contextual tokens as key/value.
#[derive(Debug, Clone)]
pub struct VideoEncoder {
    pub object: StreamEncoder,
    pub motion: StreamEncoder,
    pub cross_object: CrossAttentionBlock,
    pub cross_motion: CrossAttentionBlock,
    pub pos: Embedding,
    pub seq_tags: Embedding,
}

pub struct VideoCache {
    object: StreamCache,
    motion: StreamCache,
    object_assembly: TokenizedClipSequence,
    motion_assembly: TokenizedClipSequence,
    cross_object: CrossAttentionCache,
    cross_motion: CrossAttentionCache,
    n: usize,
}

impl VideoEncoder {
    pub fn new(prefix: &str, config: &EncoderConfig, rng: &mut ChaCha8Rng) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            object: StreamEncoder::new(&format!("{prefix}.object"), config.d_in_video, config, rng)?,
            motion: StreamEncoder::new(&format!("{prefix}.motion"), config.d_in_video, config, rng)?,
            cross_object: CrossAttentionBlock::new(
                &format!("{prefix}.cross_object"),
                config.d_model,
                config.n_heads,
                rng,
            )?,
            cross_motion: CrossAttentionBlock::new(
                &format!("{prefix}.cross_motion"),
                config.d_model,
                config.n_heads,
                rng,
            )?,
            pos: Embedding::new(&format!("{prefix}.pos"), config.max_position + 1, config.d_model, rng),
            seq_tags: Embedding::new(&format!("{prefix}.seq_tags"), 2, config.d_model, rng),
        })
    }

    /// Encode one video. `u` comes from fixed sampling, `r` from anomaly-led
    /// sampling; both use 1-based clip positions. Returns the dual
    /// representation, the fused (2N+2) x d token matrix
    /// (mean of the two streams' final tokens) and the backward cache.
    pub fn encode(
        &self,
        object_raw: &Array2<f64>,
        motion_raw: &Array2<f64>,
        u: &[usize],
        r: &[usize],
        mode: &mut Mode,
    ) -> Result<(DualRepresentation, Array2<f64>, VideoCache)> {
        if object_raw.nrows() != motion_raw.nrows() {
            return Err(Error::Validation(format!(
                "object stream has {} clips but motion has {}",
                object_raw.nrows(),
                motion_raw.nrows()
            )));
        }
        let max_position = self.pos.n_rows() - 1;
        let (self_obj, obj_assembly, obj_cache) =
            self.object.encode_tokens(object_raw, u, r, &self.pos, &self.seq_tags, max_position, mode)?;
        let (self_mot, mot_assembly, mot_cache) =
            self.motion.encode_tokens(motion_raw, u, r, &self.pos, &self.seq_tags, max_position, mode)?;

        let (out_obj, cross_obj_cache) = self.cross_object.forward(&self_obj, &self_mot)?;
        let (out_mot, cross_mot_cache) = self.cross_motion.forward(&self_mot, &self_obj)?;

        let n = obj_assembly.n();
        let dual = DualRepresentation {
            g_obj: pool_g(&out_obj, n),
            g_mot: pool_g(&out_mot, n),
            h_obj: pool_h(&out_obj, n),
            h_mot: pool_h(&out_mot, n),
        };
        dual.ensure_finite()?;
        let fused_tokens = (&out_obj + &out_mot) / 2.0;
        let cache = VideoCache {
            object: obj_cache,
            motion: mot_cache,
            object_assembly: obj_assembly,
            motion_assembly: mot_assembly,
            cross_object: cross_obj_cache,
            cross_motion: cross_mot_cache,
            n,
        };
        Ok((dual, fused_tokens, cache))
    }

    /// Backward from gradients on the dual representation and the fused token
    /// matrix. Returns `(d_object_raw, d_motion_raw)`.
    pub fn backward(
        &mut self,
        cache: &VideoCache,
        d_dual: &DualRepresentation,
        d_tokens: &Array2<f64>,
    ) -> (Array2<f64>, Array2<f64>) {
        let n = cache.n;
        let mut dout_obj = d_tokens / 2.0;
        pool_backward(&mut dout_obj, &d_dual.g_obj, &d_dual.h_obj, n);
        let mut dout_mot = d_tokens / 2.0;
        pool_backward(&mut dout_mot, &d_dual.g_mot, &d_dual.h_mot, n);

        let (dq_obj, dkv_mot) = self.cross_object.backward(&cache.cross_object, &dout_obj);
        let (dq_mot, dkv_obj) = self.cross_motion.backward(&cache.cross_motion, &dout_mot);
        let dself_obj = dq_obj + dkv_obj;
        let dself_mot = dq_mot + dkv_mot;

        let d_object_raw = self.object.backward_tokens(
            &cache.object,
            &cache.object_assembly,
            &mut self.pos,
            &mut self.seq_tags,
            &dself_obj,
        );
        let d_motion_raw = self.motion.backward_tokens(
            &cache.motion,
            &cache.motion_assembly,
            &mut self.pos,
            &mut self.seq_tags,
            &dself_mot,
        );
        (d_object_raw, d_motion_raw)
    }
}

impl ParamModule for VideoEncoder {
    fn collect_params<'a>(&'a self, out: &mut Vec<&'a ParamTensor>) {
        self.object.collect_params(out);
        self.motion.collect_params(out);
        self.cross_object.collect_params(out);
        self.cross_motion.collect_params(out);
        self.pos.collect_params(out);
        self.seq_tags.collect_params(out);
    }

    fn collect_params_mut<'a>(&'a mut self, out: &mut Vec<&'a mut ParamTensor>) {
        self.object.collect_params_mut(out);
        self.motion.collect_params_mut(out);
        self.cross_object.collect_params_mut(out);
        self.cross_motion.collect_params_mut(out);
        self.pos.collect_params_mut(out);
        self.seq_tags.collect_params_mut(out);
    }
}

/// g = ½ (out[U_CLS] + out[R_CLS])
fn pool_g(out: &Array2<f64>, n: usize) -> Array1<f64> {
    (&out.row(0) + &out.row(n + 1)) / 2.0
}

/// h = ½ (mean(out[U_1..U_N]) + mean(out[R_1..R_N])) — CLS rows excluded.
fn pool_h(out: &Array2<f64>, n: usize) -> Array1<f64> {
    let u = out.slice(ndarray::s![1..=n, ..]).mean_axis(Axis(0)).expect("n >= 1");
    let r = out.slice(ndarray::s![n + 2..2 * n + 2, ..]).mean_axis(Axis(0)).expect("n >= 1");
    (u + r) / 2.0
}

fn pool_backward(dout: &mut Array2<f64>, dg: &Array1<f64>, dh: &Array1<f64>, n: usize) {
    {
        let mut row = dout.row_mut(0);
        row += &(dg / 2.0);
    }
    {
        let mut row = dout.row_mut(n + 1);
        row += &(dg / 2.0);
    }
    let share = dh / (2.0 * n as f64);
    for i in 1..=n {
        let mut row = dout.row_mut(i);
        row += &share;
    }
    for i in n + 2..2 * n + 2 {
        let mut row = dout.row_mut(i);
        row += &share;
    }
}

// ---------------------------------------------------------------------------
// Text encoder
// ---------------------------------------------------------------------------

/// Trainable stand-in for a pretrained language model: token + positional
/// embeddings, a small contextual encoder stack, and four gated embedding
/// units mapping the pooled (g, h) pair into object- and motion-matched
/// spaces.
#[derive(Debug, Clone)]
pub struct TextEncoder {
    pub tokens: Embedding,
    pub pos: Embedding,
    pub layers: Vec<EncoderLayer>,
    pub geu_g_obj: GatedEmbeddingUnit,
    pub geu_g_mot: GatedEmbeddingUnit,
    pub geu_h_obj: GatedEmbeddingUnit,
    pub geu_h_mot: GatedEmbeddingUnit,
}

pub struct TextCache {
    ids: Vec<usize>,
    position_ids: Vec<usize>,
    layer_io: Vec<EncoderLayerCache>,
    geu_g_obj: GeuCache,
    geu_g_mot: GeuCache,
    geu_h_obj: GeuCache,
    geu_h_mot: GeuCache,
    n_words: usize,
}

impl TextEncoder {
    pub fn new(prefix: &str, config: &EncoderConfig, rng: &mut ChaCha8Rng) -> Result<Self> {
        config.validate()?;
        let d = config.d_model;
        let mut layers = Vec::with_capacity(config.n_text_layers);
        for i in 0..config.n_text_layers {
            layers.push(EncoderLayer::new(
                &format!("{prefix}.layer{i}"),
                d,
                config.n_heads,
                config.d_ff,
                config.dropout,
                rng,
            )?);
        }
        Ok(Self {
            tokens: Embedding::new(&format!("{prefix}.tokens"), config.vocab_size, d, rng),
            pos: Embedding::new(&format!("{prefix}.pos"), config.max_position + 1, d, rng),
            layers,
            geu_g_obj: GatedEmbeddingUnit::new(&format!("{prefix}.geu_g_obj"), d, d, rng),
            geu_g_mot: GatedEmbeddingUnit::new(&format!("{prefix}.geu_g_mot"), d, d, rng),
            geu_h_obj: GatedEmbeddingUnit::new(&format!("{prefix}.geu_h_obj"), d, d, rng),
            geu_h_mot: GatedEmbeddingUnit::new(&format!("{prefix}.geu_h_mot"), d, d, rng),
        })
    }

    /// Encode a caption (token ids WITHOUT the CLS slot; it is prepended
    /// here). Returns gated dual representations, the L x d contextual word
    /// matrix (CLS row dropped), and the backward cache.
    pub fn encode(
        &self,
        token_ids: &[usize],
        mode: &mut Mode,
    ) -> Result<(DualRepresentation, Array2<f64>, TextCache)> {
        if token_ids.is_empty() {
            return Err(Error::Validation("cannot encode an empty caption".into()));
        }
        let mut ids = Vec::with_capacity(token_ids.len() + 1);
        ids.push(crate::datapack::CLS_TOKEN);
        ids.extend_from_slice(token_ids);
        let max_position = self.pos.n_rows() - 1;
        let position_ids: Vec<usize> = (0..ids.len()).map(|p| p.min(max_position)).collect();

        let mut x = self.tokens.forward(&ids)? + self.pos.forward(&position_ids)?;
        let mut layer_io = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let (next, cache) = layer.forward(&x, mode)?;
            layer_io.push(cache);
            x = next;
        }

        let n_words = token_ids.len();
        let g_t = x.row(0).to_owned();
        let h_t = x.slice(ndarray::s![1.., ..]).mean_axis(Axis(0)).expect("non-empty");
        let text_tokens = x.slice(ndarray::s![1.., ..]).to_owned();

        let (g_obj, c_g_obj) = self.geu_g_obj.forward(&g_t)?;
        let (g_mot, c_g_mot) = self.geu_g_mot.forward(&g_t)?;
        let (h_obj, c_h_obj) = self.geu_h_obj.forward(&h_t)?;
        let (h_mot, c_h_mot) = self.geu_h_mot.forward(&h_t)?;

        let dual = DualRepresentation { g_obj, g_mot, h_obj, h_mot };
        dual.ensure_finite()?;
        let cache = TextCache {
            ids,
            position_ids,
            layer_io,
            geu_g_obj: c_g_obj,
            geu_g_mot: c_g_mot,
            geu_h_obj: c_h_obj,
            geu_h_mot: c_h_mot,
            n_words,
        };
        Ok((dual, text_tokens, cache))
    }

    /// Backward from gradients on the gated representations and the word
    /// matrix.
    pub fn backward(&mut self, cache: &TextCache, d_dual: &DualRepresentation, d_words: &Array2<f64>) {
        let dg_t = self.geu_g_obj.backward(&cache.geu_g_obj, &d_dual.g_obj)
            + self.geu_g_mot.backward(&cache.geu_g_mot, &d_dual.g_mot);
        let dh_t = self.geu_h_obj.backward(&cache.geu_h_obj, &d_dual.h_obj)
            + self.geu_h_mot.backward(&cache.geu_h_mot, &d_dual.h_mot);

        let n_rows = cache.ids.len();
        let mut dx = Array2::zeros((n_rows, dg_t.len()));
        {
            let mut row = dx.row_mut(0);
            row += &dg_t;
        }
        let share = &dh_t / cache.n_words as f64;
        for i in 1..n_rows {
            let mut row = dx.row_mut(i);
            row += &share;
            row += &d_words.row(i - 1);
        }
        for (layer, lc) in self.layers.iter_mut().zip(&cache.layer_io).rev() {
            dx = layer.backward(lc, &dx);
        }
        self.tokens.backward(&cache.ids, &dx);
        self.pos.backward(&cache.position_ids, &dx);
    }
}

impl ParamModule for TextEncoder {
    fn collect_params<'a>(&'a self, out: &mut Vec<&'a ParamTensor>) {
        self.tokens.collect_params(out);
        self.pos.collect_params(out);
        for l in &self.layers {
            l.collect_params(out);
        }
        self.geu_g_obj.collect_params(out);
        self.geu_g_mot.collect_params(out);
        self.geu_h_obj.collect_params(out);
        self.geu_h_mot.collect_params(out);
    }

    fn collect_params_mut<'a>(&'a mut self, out: &mut Vec<&'a mut ParamTensor>) {
        self.tokens.collect_params_mut(out);
        self.pos.collect_params_mut(out);
        for l in &mut self.layers {
            l.collect_params_mut(out);
        }
        self.geu_g_obj.collect_params_mut(out);
        self.geu_g_mot.collect_params_mut(out);
        self.geu_h_obj.collect_params_mut(out);
        self.geu_h_mot.collect_params_mut(out);
    }
}

// ---------------------------------------------------------------------------
// Audio encoder
// ---------------------------------------------------------------------------

/// Single-stream audio encoder: same token assembly and Self Encoder as a
/// video stream, no Cross Encoder; pooled (g, h) go through four gated units
/// exactly like text.
#[derive(Debug, Clone)]
pub struct AudioEncoder {
    pub stream: StreamEncoder,
    pub pos: Embedding,
    pub seq_tags: Embedding,
    pub geu_g_obj: GatedEmbeddingUnit,
    pub geu_g_mot: GatedEmbeddingUnit,
    pub geu_h_obj: GatedEmbeddingUnit,
    pub geu_h_mot: GatedEmbeddingUnit,
}

pub struct AudioCache {
    stream: StreamCache,
    assembly: TokenizedClipSequence,
    geu_g_obj: GeuCache,
    geu_g_mot: GeuCache,
    geu_h_obj: GeuCache,
    geu_h_mot: GeuCache,
    n: usize,
    out: Array2<f64>,
}

impl AudioEncoder {
    pub fn new(prefix: &str, config: &EncoderConfig, rng: &mut ChaCha8Rng) -> Result<Self> {
        config.validate()?;
        let d = config.d_model;
        Ok(Self {
            stream: StreamEncoder::new(&format!("{prefix}.stream"), config.d_in_audio, config, rng)?,
            pos: Embedding::new(&format!("{prefix}.pos"), config.max_position + 1, d, rng),
            seq_tags: Embedding::new(&format!("{prefix}.seq_tags"), 2, d, rng),
            geu_g_obj: GatedEmbeddingUnit::new(&format!("{prefix}.geu_g_obj"), d, d, rng),
            geu_g_mot: GatedEmbeddingUnit::new(&format!("{prefix}.geu_g_mot"), d, d, rng),
            geu_h_obj: GatedEmbeddingUnit::new(&format!("{prefix}.geu_h_obj"), d, d, rng),
            geu_h_mot: GatedEmbeddingUnit::new(&format!("{prefix}.geu_h_mot"), d, d, rng),
        })
    }

    pub fn encode(
        &self,
        audio_raw: &Array2<f64>,
        u: &[usize],
        r: &[usize],
        mode: &mut Mode,
    ) -> Result<(DualRepresentation, AudioCache)> {
        let max_position = self.pos.n_rows() - 1;
        let (out, assembly, stream_cache) =
            self.stream.encode_tokens(audio_raw, u, r, &self.pos, &self.seq_tags, max_position, mode)?;
        let n = assembly.n();
        let g_a = pool_g(&out, n);
        let h_a = pool_h(&out, n);
        let (g_obj, c_g_obj) = self.geu_g_obj.forward(&g_a)?;
        let (g_mot, c_g_mot) = self.geu_g_mot.forward(&g_a)?;
        let (h_obj, c_h_obj) = self.geu_h_obj.forward(&h_a)?;
        let (h_mot, c_h_mot) = self.geu_h_mot.forward(&h_a)?;
        let dual = DualRepresentation { g_obj, g_mot, h_obj, h_mot };
        dual.ensure_finite()?;
        let cache = AudioCache {
            stream: stream_cache,
            assembly,
            geu_g_obj: c_g_obj,
            geu_g_mot: c_g_mot,
            geu_h_obj: c_h_obj,
            geu_h_mot: c_h_mot,
            n,
            out,
        };
        Ok((dual, cache))
    }

    /// Backward to the raw audio features.
    pub fn backward(&mut self, cache: &AudioCache, d_dual: &DualRepresentation) -> Array2<f64> {
        let dg_a = self.geu_g_obj.backward(&cache.geu_g_obj, &d_dual.g_obj)
            + self.geu_g_mot.backward(&cache.geu_g_mot, &d_dual.g_mot);
        let dh_a = self.geu_h_obj.backward(&cache.geu_h_obj, &d_dual.h_obj)
            + self.geu_h_mot.backward(&cache.geu_h_mot, &d_dual.h_mot);
        let mut dout = Array2::zeros(cache.out.raw_dim());
        pool_backward(&mut dout, &dg_a, &dh_a, cache.n);
        self.stream.backward_tokens(
            &cache.stream,
            &cache.assembly,
            &mut self.pos,
            &mut self.seq_tags,
            &dout,
        )
    }
}

impl ParamModule for AudioEncoder {
    fn collect_params<'a>(&'a self, out: &mut Vec<&'a ParamTensor>) {
        self.stream.collect_params(out);
        self.pos.collect_params(out);
        self.seq_tags.collect_params(out);
        self.geu_g_obj.collect_params(out);
        self.geu_g_mot.collect_params(out);
        self.geu_h_obj.collect_params(out);
        self.geu_h_mot.collect_params(out);
    }

    fn collect_params_mut<'a>(&'a mut self, out: &mut Vec<&'a mut ParamTensor>) {
        self.stream.collect_params_mut(out);
        self.pos.collect_params_mut(out);
        self.seq_tags.collect_params_mut(out);
        self.geu_g_obj.collect_params_mut(out);
        self.geu_g_mot.collect_params_mut(out);
        self.geu_h_obj.collect_params_mut(out);
        self.geu_h_mot.collect_params_mut(out);
    }
}
