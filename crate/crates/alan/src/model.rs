//! Full model assembly: the anomaly detector drives clip sampling, the three
//! encoders produce dual representations, the alignment scorer compares them,
//! and the masked-phrase head adds its pretext loss — one joint forward and
//! manual backward over a batch.
//!
//! Clip sampling is a discrete selection step: batch plans are drawn first
//! (from dropout-free detector scores) and held fixed, so gradients flow
//! through everything except the selection itself.

use ndarray::Array2;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use rand::Rng;

use crate::alignment::{ranking_loss, ranking_loss_backward, AlignmentScorer, PairCache};
use crate::datapack::{
    generate_synthetic, PairedItem, Query, QueryModality, Split, SyntheticConfig,
};
use crate::detector::{
    bce_grad, bce_loss, topk_aggregate, topk_backward, Detector, DetectorCache, DetectorConfig,
    TopkAggregate,
};
use crate::encoders::{
    AudioCache, AudioEncoder, DualRepresentation, EncoderConfig, TextCache, TextEncoder,
    VideoCache, VideoEncoder,
};
use crate::nn::params::{ParamModule, ParamTensor};
use crate::nn::{grad_check, Mode};
use crate::rng;
use crate::sampler::{
    fixed_sample, roulette_select, selection_probabilities, FixedMode, SelectionDistribution,
};
use crate::vpmpm::{MaskMode, MaskedPhraseTask, MpmCache};
use crate::{Error, Result};

/// Structural configuration: encoder/detector shapes plus the sampling and
/// fusion constants used at inference time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub encoder: EncoderConfig,
    pub detector: DetectorConfig,
    /// Clips per sampled block (N); token sequences have 2N+2 entries.
    pub n_samples: usize,
    /// Anomaly-led softmax temperature.
    pub tau: f64,
    /// CLS/AVG fusion weight.
    pub alpha: f64,
    /// Build the audio pathway (audio-query corpora).
    pub with_audio: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            encoder: EncoderConfig::default(),
            detector: DetectorConfig::default(),
            n_samples: 3,
            tau: 1.0,
            alpha: 0.5,
            with_audio: false,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        self.encoder.validate()?;
        self.detector.validate()?;
        if self.n_samples == 0 {
            return Err(Error::Config("n_samples must be at least 1".into()));
        }
        if !(self.tau > 0.0) || !self.tau.is_finite() {
            return Err(Error::Config(format!("temperature {} must be positive", self.tau)));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::Config(format!("alpha {} outside [0, 1]", self.alpha)));
        }
        Ok(())
    }
}

/// Which mechanism fills each sampled block. Defaults give the full
/// pipeline: U from uniform fixed sampling, R anomaly-led.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SamplingPolicy {
    /// U block from uniform fixed sampling; when off, U is anomaly-led too.
    pub fixed_u: bool,
    /// R block from anomaly-led sampling; when off, R falls back to random
    /// fixed sampling.
    pub anomaly_led_r: bool,
}

impl Default for SamplingPolicy {
    fn default() -> Self {
        Self { fixed_u: true, anomaly_led_r: true }
    }
}

/// Sampled clip sets for one item, fixed for the duration of a step.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ItemPlan {
    pub video_u: Vec<usize>,
    pub video_r: Vec<usize>,
    pub audio_u: Option<Vec<usize>>,
    pub audio_r: Option<Vec<usize>>,
}

/// Loss weighting and ablation switches for one training step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    /// Ranking margin Δ.
    pub margin: f64,
    /// CLS/AVG fusion weight for this step.
    pub alpha: f64,
    /// λ1: weight of the top-k detector loss.
    pub lambda_topk: f64,
    /// λ2: weight of the masked-phrase loss.
    pub lambda_mpm: f64,
    pub use_vpmpm: bool,
    pub mask_mode: MaskMode,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            margin: 0.05,
            alpha: 0.5,
            lambda_topk: 0.1,
            lambda_mpm: 0.01,
            use_vpmpm: true,
            mask_mode: MaskMode::Phrases,
        }
    }
}

/// Per-term loss values; `total` always reconciles with the weighted sum.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossBreakdown {
    pub align: f64,
    pub topk: f64,
    pub mpm: f64,
    pub total: f64,
}

impl LossBreakdown {
    /// total = align + λ1·topk + λ2·mpm.
    pub fn combine(align: f64, topk: f64, mpm: f64, lambda_topk: f64, lambda_mpm: f64) -> Self {
        Self { align, topk, mpm, total: align + lambda_topk * topk + lambda_mpm * mpm }
    }
}

/// Dual representations of one (video, query) pair, encoded once for
/// retrieval.
#[derive(Debug, Clone)]
pub struct ItemEncoding {
    pub video: DualRepresentation,
    pub query: DualRepresentation,
}

enum QueryCache {
    Text {
        cache: TextCache,
        n_words: usize,
    },
    Audio {
        raw: Array2<f64>,
        cache: AudioCache,
        det: DetectorCache,
        agg: TopkAggregate,
        t: usize,
    },
}

struct ItemCache {
    raw_obj: Array2<f64>,
    video: VideoCache,
    x_v_shape: (usize, usize),
    det: DetectorCache,
    agg: TopkAggregate,
    t: usize,
    label: f64,
    query: QueryCache,
    mpm: Option<MpmCache>,
}

/// Forward record of one batch; feed to `batch_backward` to accumulate
/// gradients.
pub struct BatchCache {
    items: Vec<ItemCache>,
    pairs: Vec<PairCache>,
    s: Array2<f64>,
    loss: LossConfig,
}

impl BatchCache {
    /// The batch similarity matrix (rows = videos, columns = queries).
    pub fn similarity(&self) -> &Array2<f64> {
        &self.s
    }
}

/// The assembled model.
pub struct AlanModel {
    pub config: ModelConfig,
    pub video: VideoEncoder,
    pub text: TextEncoder,
    pub audio: Option<AudioEncoder>,
    pub video_detector: Detector,
    pub audio_detector: Option<Detector>,
    pub scorer: AlignmentScorer,
    pub mpm: MaskedPhraseTask,
}

impl AlanModel {
    pub fn new(config: ModelConfig, rng: &mut ChaCha8Rng) -> Result<Self> {
        config.validate()?;
        let e = &config.encoder;
        let video = VideoEncoder::new("video", e, rng)?;
        let text = TextEncoder::new("text", e, rng)?;
        let audio = if config.with_audio {
            Some(AudioEncoder::new("audio", e, rng)?)
        } else {
            None
        };
        let video_detector = Detector::new("video_det", e.d_model, &config.detector, rng)?;
        let audio_detector = if config.with_audio {
            Some(Detector::new("audio_det", e.d_model, &config.detector, rng)?)
        } else {
            None
        };
        let scorer = AlignmentScorer::new("align", e.d_model, rng);
        let mpm = MaskedPhraseTask::new(
            "mpm",
            e.d_model,
            e.vocab_size,
            e.n_heads,
            e.d_ff,
            e.dropout,
            rng,
        )?;
        Ok(Self { config, video, text, audio, video_detector, audio_detector, scorer, mpm })
    }

    /// Dropout-free anomaly-led selection distribution over a video's clips.
    pub fn video_selection_distribution(&self, item: &PairedItem) -> Result<SelectionDistribution> {
        let proj = self.video.object.project(&item.object.data_f64());
        let (scores, _) = self.video_detector.score_clips(&proj, &mut Mode::Eval)?;
        selection_probabilities(scores.scores(), self.config.tau)
    }

    fn audio_selection_distribution(&self, raw: &Array2<f64>) -> Result<SelectionDistribution> {
        let audio = self.audio.as_ref().ok_or_else(no_audio_pathway)?;
        let det = self.audio_detector.as_ref().ok_or_else(no_audio_pathway)?;
        let proj = audio.stream.project(raw);
        let (scores, _) = det.score_clips(&proj, &mut Mode::Eval)?;
        selection_probabilities(scores.scores(), self.config.tau)
    }

    /// Draw the sampled clip sets for one item under `policy`. `u_rng` and
    /// `r_rng` are independent named streams.
    pub fn plan_item(
        &self,
        item: &PairedItem,
        policy: SamplingPolicy,
        u_rng: &mut ChaCha8Rng,
        r_rng: &mut ChaCha8Rng,
    ) -> Result<ItemPlan> {
        let n = self.config.n_samples;
        let t = item.t();
        let dist = if policy.anomaly_led_r || !policy.fixed_u {
            Some(self.video_selection_distribution(item)?)
        } else {
            None
        };
        let video_u = if policy.fixed_u {
            fixed_sample(t, n, FixedMode::Uniform, u_rng)?.indices
        } else {
            roulette_select(dist.as_ref().expect("distribution prepared"), n, u_rng)?.indices
        };
        let video_r = if policy.anomaly_led_r {
            roulette_select(dist.as_ref().expect("distribution prepared"), n, r_rng)?.indices
        } else {
            fixed_sample(t, n, FixedMode::Random, r_rng)?.indices
        };
        let (audio_u, audio_r) = match &item.query {
            Query::Text { .. } => (None, None),
            Query::Audio { features } => {
                let raw = features.data_f64();
                let t_a = raw.nrows();
                let dist_a = if policy.anomaly_led_r || !policy.fixed_u {
                    Some(self.audio_selection_distribution(&raw)?)
                } else {
                    None
                };
                let u = if policy.fixed_u {
                    fixed_sample(t_a, n, FixedMode::Uniform, u_rng)?.indices
                } else {
                    roulette_select(dist_a.as_ref().expect("distribution prepared"), n, u_rng)?.indices
                };
                let r = if policy.anomaly_led_r {
                    roulette_select(dist_a.as_ref().expect("distribution prepared"), n, r_rng)?.indices
                } else {
                    fixed_sample(t_a, n, FixedMode::Random, r_rng)?.indices
                };
                (Some(u), Some(r))
            }
        };
        Ok(ItemPlan { video_u, video_r, audio_u, audio_r })
    }

    /// Plan a whole batch.
    pub fn plan_batch(
        &self,
        items: &[&PairedItem],
        policy: SamplingPolicy,
        u_rng: &mut ChaCha8Rng,
        r_rng: &mut ChaCha8Rng,
    ) -> Result<Vec<ItemPlan>> {
        items.iter().map(|item| self.plan_item(item, policy, u_rng, r_rng)).collect()
    }

    /// Joint forward over a batch with fixed plans. Returns the per-term loss
    /// breakdown and the cache for `batch_backward`.
    pub fn batch_loss(
        &self,
        items: &[&PairedItem],
        plans: &[ItemPlan],
        loss: &LossConfig,
        mask_rng: &mut ChaCha8Rng,
        mode: &mut Mode,
    ) -> Result<(LossBreakdown, BatchCache)> {
        if items.len() < 2 {
            return Err(Error::Validation(format!(
                "a batch needs at least 2 items for ranking, got {}",
                items.len()
            )));
        }
        if items.len() != plans.len() {
            return Err(Error::Validation(format!(
                "{} items but {} plans",
                items.len(),
                plans.len()
            )));
        }
        let b = items.len();
        let mut item_caches = Vec::with_capacity(b);
        let mut video_duals = Vec::with_capacity(b);
        let mut query_duals = Vec::with_capacity(b);
        let mut topk_sum = 0.0;
        let mut mpm_sum = 0.0;

        for (item, plan) in items.iter().zip(plans) {
            let raw_obj = item.object.data_f64();
            let raw_mot = item.motion.data_f64();
            let (video_dual, x_v, video_cache) =
                self.video.encode(&raw_obj, &raw_mot, &plan.video_u, &plan.video_r, mode)?;

            let proj = self.video.object.project(&raw_obj);
            let (scores, det_cache) = self.video_detector.score_clips(&proj, mode)?;
            let agg = topk_aggregate(&scores);
            let label = f64::from(item.label);
            let video_bce = bce_loss(agg.value, label)?;

            let (query_dual, query_cache, mpm_cache, item_topk) = match &item.query {
                Query::Text { tokens, .. } => {
                    let (q_dual, x_t, text_cache) = self.text.encode(tokens, mode)?;
                    let mpm_cache = if loss.use_vpmpm {
                        let (mpm_loss, cache) = self.mpm.step(
                            &x_t,
                            &x_v,
                            tokens,
                            &item.phrase_spans,
                            loss.mask_mode,
                            mask_rng,
                            mode,
                        )?;
                        mpm_sum += mpm_loss;
                        Some(cache)
                    } else {
                        None
                    };
                    let qc = QueryCache::Text { cache: text_cache, n_words: tokens.len() };
                    (q_dual, qc, mpm_cache, video_bce)
                }
                Query::Audio { features } => {
                    let raw_a = features.data_f64();
                    let audio = self.audio.as_ref().ok_or_else(no_audio_pathway)?;
                    let det = self.audio_detector.as_ref().ok_or_else(no_audio_pathway)?;
                    let (u, r) = match (&plan.audio_u, &plan.audio_r) {
                        (Some(u), Some(r)) => (u, r),
                        _ => {
                            return Err(Error::Validation(
                                "audio query without audio sampling plan".into(),
                            ))
                        }
                    };
                    let (q_dual, audio_cache) = audio.encode(&raw_a, u, r, mode)?;
                    let proj_a = audio.stream.project(&raw_a);
                    let (scores_a, det_a_cache) = det.score_clips(&proj_a, mode)?;
                    let agg_a = topk_aggregate(&scores_a);
                    let audio_bce = bce_loss(agg_a.value, label)?;
                    let t_a = raw_a.nrows();
                    let qc = QueryCache::Audio {
                        raw: raw_a,
                        cache: audio_cache,
                        det: det_a_cache,
                        agg: agg_a,
                        t: t_a,
                    };
                    (q_dual, qc, None, 0.5 * (video_bce + audio_bce))
                }
            };
            topk_sum += item_topk;

            item_caches.push(ItemCache {
                raw_obj,
                x_v_shape: x_v.dim(),
                video: video_cache,
                det: det_cache,
                agg,
                t: item.t(),
                label,
                query: query_cache,
                mpm: mpm_cache,
            });
            video_duals.push(video_dual);
            query_duals.push(query_dual);
        }

        let mut s = Array2::zeros((b, b));
        let mut pairs = Vec::with_capacity(b * b);
        for i in 0..b {
            for j in 0..b {
                let (sij, cache) =
                    self.scorer.fused_similarity(&video_duals[i], &query_duals[j], loss.alpha)?;
                s[[i, j]] = sij;
                pairs.push(cache);
            }
        }

        let align = ranking_loss(&s, loss.margin)?;
        let topk = topk_sum / b as f64;
        let mpm = mpm_sum / b as f64;
        let breakdown = LossBreakdown::combine(align, topk, mpm, loss.lambda_topk, loss.lambda_mpm);
        if !breakdown.total.is_finite() {
            return Err(Error::NonFinite(format!(
                "batch loss (align {}, topk {}, mpm {})",
                align, topk, mpm
            )));
        }
        Ok((breakdown, BatchCache { items: item_caches, pairs, s, loss: *loss }))
    }

    /// Accumulate d(total)/d(params) for a recorded batch.
    pub fn batch_backward(&mut self, cache: &BatchCache) -> Result<()> {
        let b = cache.items.len();
        let ds = ranking_loss_backward(&cache.s, cache.loss.margin)?;

        let mut d_video_duals: Vec<Option<DualRepresentation>> = (0..b).map(|_| None).collect();
        let mut d_query_duals: Vec<Option<DualRepresentation>> = (0..b).map(|_| None).collect();
        for i in 0..b {
            for j in 0..b {
                let (dv, dq) = self.scorer.backward(&cache.pairs[i * b + j], ds[[i, j]]);
                match &mut d_video_duals[i] {
                    Some(acc) => acc.add(&dv),
                    slot => *slot = Some(dv),
                }
                match &mut d_query_duals[j] {
                    Some(acc) => acc.add(&dq),
                    slot => *slot = Some(dq),
                }
            }
        }

        let lambda_topk_share = cache.loss.lambda_topk / b as f64;
        let lambda_mpm_share = cache.loss.lambda_mpm / b as f64;
        let d = self.config.encoder.d_model;

        for (i, ic) in cache.items.iter().enumerate() {
            let d_video_dual = d_video_duals[i].take().expect("every video receives gradient");
            let d_query_dual = d_query_duals[i].take().expect("every query receives gradient");

            // Masked-phrase gradients onto the caption matrix and the fused
            // video tokens.
            let (d_x_t, d_x_v) = match &ic.mpm {
                Some(mpm_cache) => self.mpm.backward(mpm_cache, ic.x_v_shape, lambda_mpm_share),
                None => (Array2::zeros((0, 0)), Array2::zeros(ic.x_v_shape)),
            };

            self.video.backward(&ic.video, &d_video_dual, &d_x_v);

            // Detector path: BCE -> top-k -> temporal convs -> projection.
            let bce_scale = match &ic.query {
                QueryCache::Text { .. } => 1.0,
                QueryCache::Audio { .. } => 0.5,
            };
            let dagg = lambda_topk_share * bce_scale * bce_grad(ic.agg.value, ic.label);
            let dscores = topk_backward(&ic.agg, ic.t, dagg);
            let dproj = self.video_detector.backward(&ic.det, &dscores);
            self.video.object.proj.backward(&ic.raw_obj, &dproj);

            match &ic.query {
                QueryCache::Text { cache: text_cache, n_words } => {
                    let d_words = if d_x_t.nrows() == *n_words {
                        d_x_t
                    } else {
                        Array2::zeros((*n_words, d))
                    };
                    self.text.backward(text_cache, &d_query_dual, &d_words);
                }
                QueryCache::Audio { raw, cache: audio_cache, det, agg, t } => {
                    let audio = self.audio.as_mut().ok_or_else(no_audio_pathway)?;
                    audio.backward(audio_cache, &d_query_dual);
                    let dagg_a = lambda_topk_share * 0.5 * bce_grad(agg.value, ic.label);
                    let dscores_a = topk_backward(agg, *t, dagg_a);
                    let det_module = self.audio_detector.as_mut().ok_or_else(no_audio_pathway)?;
                    let dproj_a = det_module.backward(det, &dscores_a);
                    audio.stream.proj.backward(raw, &dproj_a);
                }
            }
        }
        Ok(())
    }

    /// Encode one pair for retrieval: everything in inference mode, each side
    /// encoded exactly once.
    pub fn encode_pair(&self, item: &PairedItem, plan: &ItemPlan) -> Result<ItemEncoding> {
        let raw_obj = item.object.data_f64();
        let raw_mot = item.motion.data_f64();
        let (video, _, _) =
            self.video.encode(&raw_obj, &raw_mot, &plan.video_u, &plan.video_r, &mut Mode::Eval)?;
        let query = match &item.query {
            Query::Text { tokens, .. } => self.text.encode(tokens, &mut Mode::Eval)?.0,
            Query::Audio { features } => {
                let audio = self.audio.as_ref().ok_or_else(no_audio_pathway)?;
                let (u, r) = match (&plan.audio_u, &plan.audio_r) {
                    (Some(u), Some(r)) => (u, r),
                    _ => {
                        return Err(Error::Validation(
                            "audio query without audio sampling plan".into(),
                        ))
                    }
                };
                audio.encode(&features.data_f64(), u, r, &mut Mode::Eval)?.0
            }
        };
        Ok(ItemEncoding { video, query })
    }

    /// Write all parameters to a checkpoint file.
    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        crate::nn::checkpoint::save_params(path, &self.params())
    }

    /// Load parameters from a checkpoint written by a same-shaped model.
    pub fn load(&mut self, path: &std::path::Path) -> Result<()> {
        let mut params = self.params_mut();
        crate::nn::checkpoint::load_params(path, &mut params)
    }
}

fn no_audio_pathway() -> Error {
    Error::Config("model was built without the audio pathway".into())
}

impl ParamModule for AlanModel {
    fn collect_params<'a>(&'a self, out: &mut Vec<&'a ParamTensor>) {
        self.video.collect_params(out);
        self.text.collect_params(out);
        if let Some(a) = &self.audio {
            a.collect_params(out);
        }
        self.video_detector.collect_params(out);
        if let Some(d) = &self.audio_detector {
            d.collect_params(out);
        }
        self.scorer.collect_params(out);
        self.mpm.collect_params(out);
    }

    fn collect_params_mut<'a>(&'a mut self, out: &mut Vec<&'a mut ParamTensor>) {
        self.video.collect_params_mut(out);
        self.text.collect_params_mut(out);
        if let Some(a) = &mut self.audio {
            a.collect_params_mut(out);
        }
        self.video_detector.collect_params_mut(out);
        if let Some(d) = &mut self.audio_detector {
            d.collect_params_mut(out);
        }
        self.scorer.collect_params_mut(out);
        self.mpm.collect_params_mut(out);
    }
}

/// Which parameter family a finite-difference audit sweeps. Each loss path is
/// checked through the parameters only it reaches, so a defect cannot hide
/// behind another path's correct gradients.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum AuditScope {
    /// Encoders and similarity heads: the ranking path.
    Alignment,
    /// Detector parameters: the top-k detection path.
    Detection,
    /// Masked-phrase head parameters: the pretext path.
    MaskedPhrase,
}

impl AuditScope {
    fn keeps(self, name: &str) -> bool {
        let detector = name.starts_with("video_det") || name.starts_with("audio_det");
        let mpm = name.starts_with("mpm");
        match self {
            AuditScope::Alignment => !detector && !mpm,
            AuditScope::Detection => detector,
            AuditScope::MaskedPhrase => mpm,
        }
    }

    /// Loss weighting that makes this path the only live term over the
    /// scoped parameters (terms from other paths are constant there and
    /// cancel in central differences).
    fn loss_config(self) -> LossConfig {
        let (lambda_topk, lambda_mpm, use_vpmpm) = match self {
            AuditScope::Alignment => (0.0, 0.0, false),
            AuditScope::Detection => (1.0, 0.0, false),
            AuditScope::MaskedPhrase => (0.0, 1.0, true),
        };
        LossConfig {
            margin: 0.05,
            alpha: 0.55,
            lambda_topk,
            lambda_mpm,
            use_vpmpm,
            mask_mode: MaskMode::Phrases,
        }
    }
}

/// View of the model restricted to one scope's parameters; the sweep in
/// `grad_check` only perturbs and reads what `collect_params` exposes.
struct ScopedModel<'a> {
    model: &'a mut AlanModel,
    scope: AuditScope,
}

impl ParamModule for ScopedModel<'_> {
    fn collect_params<'a>(&'a self, out: &mut Vec<&'a ParamTensor>) {
        let mut all = Vec::new();
        self.model.collect_params(&mut all);
        out.extend(all.into_iter().filter(|p| self.scope.keeps(p.name())));
    }

    fn collect_params_mut<'a>(&'a mut self, out: &mut Vec<&'a mut ParamTensor>) {
        let mut all = Vec::new();
        self.model.collect_params_mut(&mut all);
        out.extend(all.into_iter().filter(|p| self.scope.keeps(p.name())));
    }
}

/// Worst finite-difference discrepancy for one audited loss path.
#[derive(Debug, Clone)]
pub struct PathAudit {
    /// What the audited path computes.
    pub path: &'static str,
    /// Independently seeded instances swept.
    pub instances: usize,
    /// Parameter entries checked per instance.
    pub entries: usize,
    /// Worst relative error across all instances and entries.
    pub worst_rel_err: f64,
    /// Pass threshold on the relative error.
    pub tolerance: f64,
}

impl PathAudit {
    pub fn passed(&self) -> bool {
        self.worst_rel_err <= self.tolerance
    }
}

/// Small shapes keep the O(parameters) sweep affordable.
fn audit_config() -> ModelConfig {
    ModelConfig {
        encoder: EncoderConfig {
            d_in_video: 6,
            d_in_audio: 6,
            d_model: 8,
            n_heads: 2,
            d_ff: 12,
            n_self_layers: 1,
            n_text_layers: 1,
            vocab_size: 24,
            max_position: 16,
            dropout: 0.0,
        },
        detector: DetectorConfig { hidden: (5, 3), kernel_size: 5, dropout: 0.0 },
        n_samples: 2,
        tau: 1.0,
        alpha: 0.55,
        with_audio: false,
    }
}

/// Check every trained loss path's analytic gradients against central
/// differences on `instances` independently seeded two-item batches.
///
/// Each path sweeps only the parameters it alone reaches (detector, then
/// masked-phrase head, with everything else under the ranking path), and
/// every sweep must stay within `tolerance` relative error. Clip plans are
/// drawn once per instance and held fixed, matching how training treats the
/// discrete selection step.
pub fn gradient_audit(seed: u64, instances: usize, tolerance: f64) -> Result<Vec<PathAudit>> {
    if instances == 0 {
        return Err(Error::Config("at least one audit instance is required".into()));
    }
    if !(tolerance > 0.0) || !tolerance.is_finite() {
        return Err(Error::Config(format!("tolerance {tolerance} must be positive")));
    }
    let paths = [
        ("ranking loss through encoders and fused similarity", AuditScope::Alignment),
        ("detection loss through top-k score pooling", AuditScope::Detection),
        ("masked-phrase loss through the decoder head", AuditScope::MaskedPhrase),
    ];
    let mut audits = Vec::with_capacity(paths.len());
    for (path, scope) in paths {
        let mut worst = 0.0f64;
        let mut entries = 0;
        for i in 0..instances {
            let mut inst = rng::indexed_stream(seed, "grad-audit", i as u64);
            let corpus_seed: u64 = inst.random();
            let init_seed: u64 = inst.random();
            let stream_seed: u64 = inst.random();
            let corpus = generate_synthetic(&SyntheticConfig {
                n_pairs: 2,
                t: 8 + (i % 5),
                d_in: 6,
                vocab_size: 24,
                anomaly_ratio: 0.5,
                seed: corpus_seed,
                split: Split::Train,
                query_modality: QueryModality::Text,
            })?;
            let items: Vec<&PairedItem> = corpus.items.iter().collect();
            let mut init = rng::stream(init_seed, "init");
            let mut model = AlanModel::new(audit_config(), &mut init)?;
            let mut u_rng = rng::stream(stream_seed, "fs");
            let mut r_rng = rng::stream(stream_seed, "as");
            let plans =
                model.plan_batch(&items, SamplingPolicy::default(), &mut u_rng, &mut r_rng)?;
            let loss = scope.loss_config();
            let mut scoped = ScopedModel { model: &mut model, scope };
            let report = grad_check(
                &mut scoped,
                |m, backward| {
                    let mut mask_rng = rng::stream(stream_seed, "mask");
                    let (breakdown, cache) =
                        m.model.batch_loss(&items, &plans, &loss, &mut mask_rng, &mut Mode::Eval)?;
                    if backward {
                        m.model.zero_grads();
                        m.model.batch_backward(&cache)?;
                    }
                    Ok(breakdown.total)
                },
                tolerance,
            )?;
            worst = worst.max(report.worst_rel_err);
            entries = report.per_param.iter().map(|p| p.entries).sum();
        }
        audits.push(PathAudit { path, instances, entries, worst_rel_err: worst, tolerance });
    }
    Ok(audits)
}
