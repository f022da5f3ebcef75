//! Dual-level cross-modal alignment: a CLS-level similarity over global
//! representations, an AVG-level similarity over mean-pooled representations,
//! a convex fusion of the two, and the bi-directional max-margin ranking
//! loss over a batch similarity matrix.
//!
//! Each level weighs its object-matched and motion-matched cosine terms with
//! a softmax over two scalar heads applied to the query's own
//! representations; the two levels have independent head pairs.

use ndarray::{Array1, Array2};
use rand_chacha::ChaCha8Rng;

use crate::encoders::DualRepresentation;
use crate::nn::linear::Linear;
use crate::nn::params::{ParamModule, ParamTensor};
use crate::{Error, Result};

/// Convex weights over the object- and motion-matched similarity terms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StreamWeights {
    pub w_obj: f64,
    pub w_mot: f64,
}

// ---------------------------------------------------------------------------
// Cosine with manual backward
// ---------------------------------------------------------------------------

struct CosineCache {
    a: Array1<f64>,
    b: Array1<f64>,
    norm_a: f64,
    norm_b: f64,
    value: f64,
}

fn cosine_parts(a: &Array1<f64>, b: &Array1<f64>) -> Result<(f64, CosineCache)> {
    let norm_a = a.dot(a).sqrt();
    let norm_b = b.dot(b).sqrt();
    if norm_a == 0.0 || norm_b == 0.0 {
        return Err(Error::ZeroVector("cosine similarity input".into()));
    }
    let value = a.dot(b) / (norm_a * norm_b);
    if !value.is_finite() {
        return Err(Error::NonFinite("cosine similarity".into()));
    }
    Ok((value, CosineCache { a: a.clone(), b: b.clone(), norm_a, norm_b, value }))
}

/// Cosine value alone, computed with plain loops so large retrieval grids
/// avoid per-pair allocations.
fn cosine_only(a: &Array1<f64>, b: &Array1<f64>) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Shape(format!("cosine inputs of lengths {} and {}", a.len(), b.len())));
    }
    let (mut dot, mut na, mut nb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b.iter()) {
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        return Err(Error::ZeroVector("cosine similarity input".into()));
    }
    let value = dot / (na.sqrt() * nb.sqrt());
    if !value.is_finite() {
        return Err(Error::NonFinite("cosine similarity".into()));
    }
    Ok(value)
}

/// d cos / d a = b/(‖a‖‖b‖) − cos·a/‖a‖²; symmetric for b.
fn cosine_backward(cache: &CosineCache, dc: f64) -> (Array1<f64>, Array1<f64>) {
    let scale = cache.norm_a * cache.norm_b;
    let ca = cache.value / (cache.norm_a * cache.norm_a);
    let cb = cache.value / (cache.norm_b * cache.norm_b);
    let da = (&cache.b / scale - &cache.a * ca) * dc;
    let db = (&cache.a / scale - &cache.b * cb) * dc;
    (da, db)
}

// ---------------------------------------------------------------------------
// Per-level weight heads
// ---------------------------------------------------------------------------

/// Two scalar heads producing the softmax weights of one alignment level.
#[derive(Debug, Clone)]
pub struct SimilarityHeads {
    pub obj: Linear,
    pub mot: Linear,
}

struct WeightsCache {
    q_obj: Array1<f64>,
    q_mot: Array1<f64>,
    w: [f64; 2],
}

impl SimilarityHeads {
    pub fn new(prefix: &str, d: usize, rng: &mut ChaCha8Rng) -> Self {
        Self {
            obj: Linear::new(&format!("{prefix}.obj"), d, 1, rng),
            mot: Linear::new(&format!("{prefix}.mot"), d, 1, rng),
        }
    }

    fn weights(&self, q_obj: &Array1<f64>, q_mot: &Array1<f64>) -> Result<(StreamWeights, WeightsCache)> {
        let e_obj = self.obj.forward_vec(q_obj)[0];
        let e_mot = self.mot.forward_vec(q_mot)[0];
        let w = crate::nn::ops::softmax(&ndarray::array![e_obj, e_mot].view())?;
        let weights = StreamWeights { w_obj: w[0], w_mot: w[1] };
        let cache = WeightsCache { q_obj: q_obj.clone(), q_mot: q_mot.clone(), w: [w[0], w[1]] };
        Ok((weights, cache))
    }

    /// Convex weights without a backward record.
    pub fn weights_only(&self, q_obj: &Array1<f64>, q_mot: &Array1<f64>) -> StreamWeights {
        let e_obj = self.obj.w.mat().column(0).dot(q_obj) + self.obj.b.vec()[0];
        let e_mot = self.mot.w.mat().column(0).dot(q_mot) + self.mot.b.vec()[0];
        let m = e_obj.max(e_mot);
        let (a, b) = ((e_obj - m).exp(), (e_mot - m).exp());
        StreamWeights { w_obj: a / (a + b), w_mot: b / (a + b) }
    }

    /// Returns gradients w.r.t. the two query-side inputs.
    fn weights_backward(&mut self, cache: &WeightsCache, dw: [f64; 2]) -> (Array1<f64>, Array1<f64>) {
        let inner = cache.w[0] * dw[0] + cache.w[1] * dw[1];
        let de = [cache.w[0] * (dw[0] - inner), cache.w[1] * (dw[1] - inner)];
        let dq_obj = self.obj.backward_vec(&cache.q_obj, &ndarray::array![de[0]]);
        let dq_mot = self.mot.backward_vec(&cache.q_mot, &ndarray::array![de[1]]);
        (dq_obj, dq_mot)
    }
}

impl ParamModule for SimilarityHeads {
    fn collect_params<'a>(&'a self, out: &mut Vec<&'a ParamTensor>) {
        self.obj.collect_params(out);
        self.mot.collect_params(out);
    }

    fn collect_params_mut<'a>(&'a mut self, out: &mut Vec<&'a mut ParamTensor>) {
        self.obj.collect_params_mut(out);
        self.mot.collect_params_mut(out);
    }
}

// ---------------------------------------------------------------------------
// Scorer: two levels + fusion
// ---------------------------------------------------------------------------

/// One alignment level's forward record.
pub struct LevelCache {
    weights: WeightsCache,
    cos_obj: CosineCache,
    cos_mot: CosineCache,
}

/// Forward record of a fused video-query score.
pub struct PairCache {
    cls: LevelCache,
    avg: LevelCache,
    alpha: f64,
}

/// Similarity scorer holding the per-level weight heads.
#[derive(Debug, Clone)]
pub struct AlignmentScorer {
    pub cls_heads: SimilarityHeads,
    pub avg_heads: SimilarityHeads,
}

impl AlignmentScorer {
    pub fn new(prefix: &str, d: usize, rng: &mut ChaCha8Rng) -> Self {
        Self {
            cls_heads: SimilarityHeads::new(&format!("{prefix}.cls"), d, rng),
            avg_heads: SimilarityHeads::new(&format!("{prefix}.avg"), d, rng),
        }
    }

    /// CLS-level similarity over the global (g) representations.
    pub fn cls_similarity(
        &self,
        video: &DualRepresentation,
        query: &DualRepresentation,
    ) -> Result<(f64, LevelCache)> {
        level_forward(&self.cls_heads, &video.g_obj, &video.g_mot, &query.g_obj, &query.g_mot)
    }

    /// AVG-level similarity over the mean-pooled (h) representations.
    pub fn avg_similarity(
        &self,
        video: &DualRepresentation,
        query: &DualRepresentation,
    ) -> Result<(f64, LevelCache)> {
        level_forward(&self.avg_heads, &video.h_obj, &video.h_mot, &query.h_obj, &query.h_mot)
    }

    /// Fused score s = α·s_cls + (1−α)·s_avg.
    pub fn fused_similarity(
        &self,
        video: &DualRepresentation,
        query: &DualRepresentation,
        alpha: f64,
    ) -> Result<(f64, PairCache)> {
        let (s_g, cls) = self.cls_similarity(video, query)?;
        let (s_h, avg) = self.avg_similarity(video, query)?;
        let s = fuse(s_g, s_h, alpha)?;
        Ok((s, PairCache { cls, avg, alpha }))
    }

    /// Forward-only fused score with no backward record; the fast path for
    /// building retrieval similarity grids.
    pub fn score(
        &self,
        video: &DualRepresentation,
        query: &DualRepresentation,
        alpha: f64,
    ) -> Result<f64> {
        if !(0.0..=1.0).contains(&alpha) {
            return Err(Error::Config(format!("fusion weight {alpha} outside [0, 1]")));
        }
        let d = self.cls_heads.obj.d_in();
        let parts = [
            &video.g_obj, &video.g_mot, &video.h_obj, &video.h_mot,
            &query.g_obj, &query.g_mot, &query.h_obj, &query.h_mot,
        ];
        if let Some(bad) = parts.iter().find(|v| v.len() != d) {
            return Err(Error::Shape(format!(
                "representation of length {} fed to a scorer built for {d}",
                bad.len()
            )));
        }
        let wg = self.cls_heads.weights_only(&query.g_obj, &query.g_mot);
        let s_g = wg.w_obj * cosine_only(&video.g_obj, &query.g_obj)?
            + wg.w_mot * cosine_only(&video.g_mot, &query.g_mot)?;
        let wh = self.avg_heads.weights_only(&query.h_obj, &query.h_mot);
        let s_h = wh.w_obj * cosine_only(&video.h_obj, &query.h_obj)?
            + wh.w_mot * cosine_only(&video.h_mot, &query.h_mot)?;
        Ok(alpha * s_g + (1.0 - alpha) * s_h)
    }

    /// Backward from d(score) to gradients on both dual representations,
    /// accumulating the head parameter gradients.
    pub fn backward(
        &mut self,
        cache: &PairCache,
        ds: f64,
    ) -> (DualRepresentation, DualRepresentation) {
        let (dv_g, dq_g) = level_backward(&mut self.cls_heads, &cache.cls, cache.alpha * ds);
        let (dv_h, dq_h) = level_backward(&mut self.avg_heads, &cache.avg, (1.0 - cache.alpha) * ds);
        let d_video = DualRepresentation {
            g_obj: dv_g.0,
            g_mot: dv_g.1,
            h_obj: dv_h.0,
            h_mot: dv_h.1,
        };
        let d_query = DualRepresentation {
            g_obj: dq_g.0,
            g_mot: dq_g.1,
            h_obj: dq_h.0,
            h_mot: dq_h.1,
        };
        (d_video, d_query)
    }
}

impl ParamModule for AlignmentScorer {
    fn collect_params<'a>(&'a self, out: &mut Vec<&'a ParamTensor>) {
        self.cls_heads.collect_params(out);
        self.avg_heads.collect_params(out);
    }

    fn collect_params_mut<'a>(&'a mut self, out: &mut Vec<&'a mut ParamTensor>) {
        self.cls_heads.collect_params_mut(out);
        self.avg_heads.collect_params_mut(out);
    }
}

fn level_forward(
    heads: &SimilarityHeads,
    v_obj: &Array1<f64>,
    v_mot: &Array1<f64>,
    q_obj: &Array1<f64>,
    q_mot: &Array1<f64>,
) -> Result<(f64, LevelCache)> {
    let (w, weights) = heads.weights(q_obj, q_mot)?;
    let (c_obj, cos_obj) = cosine_parts(v_obj, q_obj)?;
    let (c_mot, cos_mot) = cosine_parts(v_mot, q_mot)?;
    let s = w.w_obj * c_obj + w.w_mot * c_mot;
    Ok((s, LevelCache { weights, cos_obj, cos_mot }))
}

type VecPair = (Array1<f64>, Array1<f64>);

/// Returns ((d v_obj, d v_mot), (d q_obj, d q_mot)).
fn level_backward(heads: &mut SimilarityHeads, cache: &LevelCache, ds: f64) -> (VecPair, VecPair) {
    let [w_obj, w_mot] = cache.weights.w;
    let dw = [ds * cache.cos_obj.value, ds * cache.cos_mot.value];
    let (mut dq_obj, mut dq_mot) = heads.weights_backward(&cache.weights, dw);
    let (dv_obj, dq_obj_cos) = cosine_backward(&cache.cos_obj, ds * w_obj);
    let (dv_mot, dq_mot_cos) = cosine_backward(&cache.cos_mot, ds * w_mot);
    dq_obj += &dq_obj_cos;
    dq_mot += &dq_mot_cos;
    ((dv_obj, dv_mot), (dq_obj, dq_mot))
}

/// s = α·s_cls + (1−α)·s_avg with α ∈ [0, 1].
pub fn fuse(s_cls: f64, s_avg: f64, alpha: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::Config(format!("fusion weight {alpha} outside [0, 1]")));
    }
    Ok(alpha * s_cls + (1.0 - alpha) * s_avg)
}

// ---------------------------------------------------------------------------
// Ranking loss
// ---------------------------------------------------------------------------

fn check_square(s: &Array2<f64>) -> Result<usize> {
    let b = s.nrows();
    if b < 2 || s.ncols() != b {
        return Err(Error::Validation(format!(
            "ranking loss needs a square matrix of size >= 2, got {}x{}",
            s.nrows(),
            s.ncols()
        )));
    }
    if s.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("similarity matrix".into()));
    }
    Ok(b)
}

/// Bi-directional max-margin ranking loss over a batch similarity matrix
/// (rows = videos, columns = queries, diagonal = matched pairs):
/// (1/B)·Σ_i Σ_{j≠i} ([S_ij − S_ii + Δ]₊ + [S_ji − S_ii + Δ]₊).
pub fn ranking_loss(s: &Array2<f64>, margin: f64) -> Result<f64> {
    if margin < 0.0 {
        return Err(Error::Config(format!("margin {margin} must be >= 0")));
    }
    let b = check_square(s)?;
    let mut total = 0.0;
    for i in 0..b {
        for j in 0..b {
            if i == j {
                continue;
            }
            total += (s[[i, j]] - s[[i, i]] + margin).max(0.0);
            total += (s[[j, i]] - s[[i, i]] + margin).max(0.0);
        }
    }
    Ok(total / b as f64)
}

/// Subgradient of `ranking_loss` w.r.t. every matrix entry; hinge terms at
/// exactly zero contribute nothing.
pub fn ranking_loss_backward(s: &Array2<f64>, margin: f64) -> Result<Array2<f64>> {
    let b = check_square(s)?;
    let inv_b = 1.0 / b as f64;
    let mut ds = Array2::zeros((b, b));
    for i in 0..b {
        for j in 0..b {
            if i == j {
                continue;
            }
            if s[[i, j]] - s[[i, i]] + margin > 0.0 {
                ds[[i, j]] += inv_b;
                ds[[i, i]] -= inv_b;
            }
            if s[[j, i]] - s[[i, i]] + margin > 0.0 {
                ds[[j, i]] += inv_b;
                ds[[i, i]] -= inv_b;
            }
        }
    }
    Ok(ds)
}
