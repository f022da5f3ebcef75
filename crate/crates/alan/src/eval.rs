//! Rank-based retrieval evaluation: similarity grids over representations
//! that are each encoded exactly once, recall/median-rank metrics with
//! pessimistic tie handling, and a whole-corpus evaluation driver.

use std::time::Instant;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::alignment::AlignmentScorer;
use crate::datapack::PairedItem;
use crate::encoders::DualRepresentation;
use crate::model::{AlanModel, SamplingPolicy};
use crate::{rng, Error, Result};

/// Recall and median-rank figures for one retrieval direction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DirectionMetrics {
    /// Percentage of queries whose correct item ranks first.
    pub r1: f64,
    /// Percentage of queries whose correct item ranks in the top 5.
    pub r5: f64,
    /// Percentage of queries whose correct item ranks in the top 10.
    pub r10: f64,
    /// Median rank of the correct item (1 = best; mean of the two middle
    /// ranks for even query counts).
    pub mdr: f64,
}

/// Retrieval quality in both directions plus the overall recall sum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RetrievalReport {
    pub query_to_video: DirectionMetrics,
    pub video_to_query: DirectionMetrics,
    /// Sum of all six recalls.
    pub sum_r: f64,
    /// Number of gallery items (equals the number of queries).
    pub gallery_size: usize,
    /// Wall-clock evaluation time divided by the number of scored pairs;
    /// reported for context, never asserted.
    pub per_pair_seconds: f64,
}

// ---------------------------------------------------------------------------
// Similarity grid
// ---------------------------------------------------------------------------

/// Score every gallery item against every query: S[g][q] is the fused
/// similarity. Pure map over pairs; the representations must already be
/// encoded (once per item).
pub fn build_similarity_matrix(
    scorer: &AlignmentScorer,
    gallery: &[DualRepresentation],
    queries: &[DualRepresentation],
    alpha: f64,
) -> Result<Array2<f64>> {
    if gallery.is_empty() || queries.is_empty() {
        return Err(Error::Validation("similarity grid needs gallery items and queries".into()));
    }
    let mut s = Array2::zeros((gallery.len(), queries.len()));
    for (g, video) in gallery.iter().enumerate() {
        for (q, query) in queries.iter().enumerate() {
            s[[g, q]] = scorer.score(video, query, alpha)?;
        }
    }
    Ok(s)
}

// ---------------------------------------------------------------------------
// Rank metrics
// ---------------------------------------------------------------------------

/// Pessimistic rank of the correct entry within `scores`: 1 plus the number
/// of strictly greater competitors, with ties counted as ranked ahead.
fn pessimistic_rank<'a>(scores: impl Iterator<Item = &'a f64>, truth: f64) -> usize {
    scores.filter(|&&x| x >= truth).count()
}

fn direction_metrics(ranks: &[usize]) -> DirectionMetrics {
    let n = ranks.len() as f64;
    let recall = |k: usize| 100.0 * ranks.iter().filter(|&&r| r <= k).count() as f64 / n;
    let mut sorted = ranks.to_vec();
    sorted.sort_unstable();
    let mid = sorted.len() / 2;
    let mdr = if sorted.len() % 2 == 1 {
        sorted[mid] as f64
    } else {
        (sorted[mid - 1] + sorted[mid]) as f64 / 2.0
    };
    DirectionMetrics { r1: recall(1), r5: recall(5), r10: recall(10), mdr }
}

/// Rank the correct item for every query (columns) and every gallery item
/// (rows) of a square similarity matrix. `pairing[q]` names the correct
/// gallery row for query `q` and must be a permutation so both directions
/// are well defined.
pub fn rank_metrics(s: &Array2<f64>, pairing: &[usize]) -> Result<RetrievalReport> {
    let (g, q) = s.dim();
    if g == 0 || q == 0 {
        return Err(Error::Validation("empty similarity matrix".into()));
    }
    if g != q {
        return Err(Error::Validation(format!(
            "both retrieval directions need a square matrix, got {g}x{q}"
        )));
    }
    if pairing.len() != q {
        return Err(Error::Validation(format!(
            "{q} queries but {} pairing entries",
            pairing.len()
        )));
    }
    if s.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("similarity matrix".into()));
    }
    let mut inverse = vec![usize::MAX; g];
    for (query, &gallery) in pairing.iter().enumerate() {
        if gallery >= g {
            return Err(Error::Validation(format!(
                "pairing references gallery item {gallery} outside 0..{g}"
            )));
        }
        if inverse[gallery] != usize::MAX {
            return Err(Error::Validation(format!(
                "pairing maps two queries to gallery item {gallery}"
            )));
        }
        inverse[gallery] = query;
    }

    let q2v: Vec<usize> = (0..q)
        .map(|j| pessimistic_rank(s.column(j).into_iter(), s[[pairing[j], j]]))
        .collect();
    let v2q: Vec<usize> = (0..g)
        .map(|i| pessimistic_rank(s.row(i).into_iter(), s[[i, inverse[i]]]))
        .collect();
    let query_to_video = direction_metrics(&q2v);
    let video_to_query = direction_metrics(&v2q);
    let sum_r = query_to_video.r1
        + query_to_video.r5
        + query_to_video.r10
        + video_to_query.r1
        + video_to_query.r5
        + video_to_query.r10;
    Ok(RetrievalReport {
        query_to_video,
        video_to_query,
        sum_r,
        gallery_size: g,
        per_pair_seconds: 0.0,
    })
}

// ---------------------------------------------------------------------------
// Corpus driver
// ---------------------------------------------------------------------------

/// Evaluate retrieval over a paired corpus: encode every item exactly once
/// under `policy` (clip choices drawn from per-item streams of `seed`, so
/// results are reproducible and independent of corpus order), score the full
/// gallery-query grid at fusion weight `alpha`, and rank with the identity
/// pairing.
pub fn evaluate(
    model: &AlanModel,
    items: &[&PairedItem],
    policy: SamplingPolicy,
    alpha: f64,
    seed: u64,
) -> Result<RetrievalReport> {
    if items.is_empty() {
        return Err(Error::Validation("evaluation needs at least one item".into()));
    }
    let start = Instant::now();
    let mut gallery = Vec::with_capacity(items.len());
    let mut queries = Vec::with_capacity(items.len());
    for (index, item) in items.iter().enumerate() {
        let mut u_rng = rng::indexed_stream(seed, "eval-u", index as u64);
        let mut r_rng = rng::indexed_stream(seed, "eval-r", index as u64);
        let plan = model.plan_item(item, policy, &mut u_rng, &mut r_rng)?;
        let encoding = model.encode_pair(item, &plan)?;
        gallery.push(encoding.video);
        queries.push(encoding.query);
    }
    let s = build_similarity_matrix(&model.scorer, &gallery, &queries, alpha)?;
    let pairing: Vec<usize> = (0..items.len()).collect();
    let mut report = rank_metrics(&s, &pairing)?;
    report.per_pair_seconds = start.elapsed().as_secs_f64() / (items.len() * items.len()) as f64;
    Ok(report)
}
