//! Masked-phrase pretext task: replace one noun-phrase span and one
//! verb-phrase span of the contextual caption matrix with a shared learned
//! mask vector, decode each masked text against the video tokens as fixed
//! prompts, and score per-token vocabulary predictions at the masked
//! positions.
//!
//! Training-time only; retrieval inference never runs this path.

use ndarray::{s, Array1, Array2};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::datapack::{PhraseKind, PhraseSpan};
use crate::nn::blocks::{DecoderLayer, DecoderLayerCache};
use crate::nn::linear::Linear;
use crate::nn::ops::softmax_rows;
use crate::nn::params::{gaussian, ParamModule, ParamTensor};
use crate::nn::Mode;
use crate::{Error, Result};

/// What gets masked in each pretext pass: whole phrase spans (default), one
/// word inside a noun/verb phrase, or one uniformly random token.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaskMode {
    Phrases,
    Words,
    Random,
}

/// Caption matrix with one phrase span's rows replaced by the mask vector.
#[derive(Debug, Clone)]
pub struct MaskedText {
    pub masked: Array2<f64>,
    pub span: PhraseSpan,
    /// Token ids at the masked positions.
    pub targets: Vec<usize>,
}

/// Apply `mask` over one given span.
fn mask_span(
    x_t: &Array2<f64>,
    token_ids: &[usize],
    span: PhraseSpan,
    mask: &Array1<f64>,
) -> Result<MaskedText> {
    if span.end > x_t.nrows() || span.start >= span.end {
        return Err(Error::Validation(format!(
            "phrase span {}..{} outside caption of length {}",
            span.start,
            span.end,
            x_t.nrows()
        )));
    }
    let mut masked = x_t.clone();
    for row in span.start..span.end {
        masked.row_mut(row).assign(mask);
    }
    let targets = token_ids[span.start..span.end].to_vec();
    Ok(MaskedText { masked, span, targets })
}

/// Vocabulary logits at the masked positions, one row per masked token.
#[derive(Debug, Clone)]
pub struct PhrasePrediction {
    pub logits: Array2<f64>,
}

/// Replace one uniformly chosen span of `kind` with `mask`. Returns `None`
/// when the caption has no span of that kind (the pass is skipped).
pub fn mask_phrase(
    x_t: &Array2<f64>,
    token_ids: &[usize],
    spans: &[PhraseSpan],
    kind: PhraseKind,
    mask: &Array1<f64>,
    rng: &mut ChaCha8Rng,
) -> Result<Option<MaskedText>> {
    if x_t.nrows() != token_ids.len() {
        return Err(Error::Shape(format!(
            "contextual matrix has {} rows but caption has {} tokens",
            x_t.nrows(),
            token_ids.len()
        )));
    }
    if mask.len() != x_t.ncols() {
        return Err(Error::Shape(format!(
            "mask vector width {} does not match d = {}",
            mask.len(),
            x_t.ncols()
        )));
    }
    let candidates: Vec<&PhraseSpan> = spans.iter().filter(|s| s.kind == kind).collect();
    if candidates.is_empty() {
        return Ok(None);
    }
    let span = *candidates[rng.random_range(0..candidates.len())];
    Ok(Some(mask_span(x_t, token_ids, span, mask)?))
}

/// Like `mask_phrase` but masking a single uniformly chosen word inside the
/// chosen span.
pub fn mask_word_in_phrase(
    x_t: &Array2<f64>,
    token_ids: &[usize],
    spans: &[PhraseSpan],
    kind: PhraseKind,
    mask: &Array1<f64>,
    rng: &mut ChaCha8Rng,
) -> Result<Option<MaskedText>> {
    let candidates: Vec<&PhraseSpan> = spans.iter().filter(|s| s.kind == kind).collect();
    if candidates.is_empty() {
        return Ok(None);
    }
    let span = *candidates[rng.random_range(0..candidates.len())];
    let pos = rng.random_range(span.start..span.end);
    let word = PhraseSpan { start: pos, end: pos + 1, kind };
    Ok(Some(mask_span(x_t, token_ids, word, mask)?))
}

/// Mean cross-entropy between softmaxed logits and the target ids, averaged
/// over the masked positions. Returns the loss and the softmax rows (reused
/// by the backward pass).
pub fn mpm_loss(logits: &Array2<f64>, targets: &[usize]) -> Result<(f64, Array2<f64>)> {
    if logits.nrows() != targets.len() || targets.is_empty() {
        return Err(Error::Shape(format!(
            "{} logit rows for {} targets",
            logits.nrows(),
            targets.len()
        )));
    }
    let vocab = logits.ncols();
    for &t in targets {
        if t >= vocab {
            return Err(Error::Validation(format!("target id {t} outside vocabulary of {vocab}")));
        }
    }
    let probs = softmax_rows(logits);
    let mut total = 0.0;
    for (row, &t) in targets.iter().enumerate() {
        let p = probs[[row, t]].max(f64::MIN_POSITIVE);
        total -= p.ln();
    }
    let loss = total / targets.len() as f64;
    if !loss.is_finite() {
        return Err(Error::NonFinite("masked phrase loss".into()));
    }
    Ok((loss, probs))
}

/// d(loss)/d(logits) = (softmax − one-hot) / span_len.
fn mpm_loss_backward(probs: &Array2<f64>, targets: &[usize]) -> Array2<f64> {
    let mut d = probs.clone();
    let scale = 1.0 / targets.len() as f64;
    for (row, &t) in targets.iter().enumerate() {
        d[[row, t]] -= 1.0;
    }
    d * scale
}

/// One masking pass's forward record.
pub struct PassCache {
    span: PhraseSpan,
    targets: Vec<usize>,
    decoder: DecoderLayerCache,
    /// Decoder output rows at the masked positions (vocab head input).
    masked_out: Array2<f64>,
    probs: Array2<f64>,
    text_len: usize,
}

/// Forward record of a full two-pass step.
pub struct MpmCache {
    passes: Vec<PassCache>,
}

/// The pretext head: shared mask vector, one decoder layer, untied
/// vocabulary head.
#[derive(Debug, Clone)]
pub struct MaskedPhraseTask {
    pub mask_embedding: ParamTensor,
    pub decoder: DecoderLayer,
    pub vocab_head: Linear,
}

impl MaskedPhraseTask {
    pub fn new(
        prefix: &str,
        d: usize,
        vocab: usize,
        n_heads: usize,
        d_ff: usize,
        dropout: f64,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        Ok(Self {
            mask_embedding: gaussian(&format!("{prefix}.mask"), 1, d, 0.02, rng),
            decoder: DecoderLayer::new(&format!("{prefix}.decoder"), d, n_heads, d_ff, dropout, rng)?,
            vocab_head: Linear::new(&format!("{prefix}.vocab"), d, vocab, rng),
        })
    }

    fn mask_vector(&self) -> Array1<f64> {
        self.mask_embedding.mat().row(0).to_owned()
    }

    /// Decode one masked text against the video prompt tokens and score the
    /// masked positions.
    pub fn decode_pass(
        &self,
        masked: &MaskedText,
        x_v: &Array2<f64>,
        mode: &mut Mode,
    ) -> Result<(PhrasePrediction, f64, PassCache)> {
        if masked.masked.ncols() != x_v.ncols() {
            return Err(Error::Shape(format!(
                "text width {} does not match video width {}",
                masked.masked.ncols(),
                x_v.ncols()
            )));
        }
        let (out, decoder_cache) = self.decoder.forward(&masked.masked, x_v, mode)?;
        let masked_out = out.slice(s![masked.span.start..masked.span.end, ..]).to_owned();
        let logits = self.vocab_head.forward(&masked_out);
        if logits.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("vocabulary logits".into()));
        }
        let (loss, probs) = mpm_loss(&logits, &masked.targets)?;
        let cache = PassCache {
            span: masked.span,
            targets: masked.targets.clone(),
            decoder: decoder_cache,
            masked_out,
            probs,
            text_len: masked.masked.nrows(),
        };
        Ok((PhrasePrediction { logits }, loss, cache))
    }

    /// Run the masking passes with shared parameters, averaging the losses of
    /// the passes that exist. Phrase and word modes make one noun pass and
    /// one verb pass; random mode masks a single uniformly chosen token. A
    /// caption with nothing to mask contributes zero.
    pub fn step(
        &self,
        x_t: &Array2<f64>,
        x_v: &Array2<f64>,
        token_ids: &[usize],
        spans: &[PhraseSpan],
        mask_mode: MaskMode,
        choice_rng: &mut ChaCha8Rng,
        mode: &mut Mode,
    ) -> Result<(f64, MpmCache)> {
        let mask = self.mask_vector();
        let mut masked_texts = Vec::new();
        match mask_mode {
            MaskMode::Phrases => {
                for kind in [PhraseKind::NounPhrase, PhraseKind::VerbPhrase] {
                    if let Some(m) = mask_phrase(x_t, token_ids, spans, kind, &mask, choice_rng)? {
                        masked_texts.push(m);
                    }
                }
            }
            MaskMode::Words => {
                for kind in [PhraseKind::NounPhrase, PhraseKind::VerbPhrase] {
                    if let Some(m) =
                        mask_word_in_phrase(x_t, token_ids, spans, kind, &mask, choice_rng)?
                    {
                        masked_texts.push(m);
                    }
                }
            }
            MaskMode::Random => {
                if !token_ids.is_empty() {
                    let pos = choice_rng.random_range(0..token_ids.len());
                    let span = PhraseSpan { start: pos, end: pos + 1, kind: PhraseKind::NounPhrase };
                    masked_texts.push(mask_span(x_t, token_ids, span, &mask)?);
                }
            }
        }
        let mut passes = Vec::new();
        let mut total = 0.0;
        for masked in &masked_texts {
            let (_, loss, cache) = self.decode_pass(masked, x_v, mode)?;
            total += loss;
            passes.push(cache);
        }
        let loss = if passes.is_empty() { 0.0 } else { total / passes.len() as f64 };
        Ok((loss, MpmCache { passes }))
    }

    /// Backward through every pass. Returns `(d x_t, d x_v)`; gradients at
    /// masked rows flow to the mask embedding instead of the caption matrix.
    pub fn backward(
        &mut self,
        cache: &MpmCache,
        x_v_shape: (usize, usize),
        dloss: f64,
    ) -> (Array2<f64>, Array2<f64>) {
        let n_passes = cache.passes.len();
        let d = self.mask_embedding.mat().ncols();
        let text_len = cache.passes.first().map_or(0, |p| p.text_len);
        let mut d_x_t = Array2::zeros((text_len, d));
        let mut d_x_v = Array2::zeros(x_v_shape);
        if n_passes == 0 {
            return (d_x_t, d_x_v);
        }
        let pass_weight = dloss / n_passes as f64;
        for pass in &cache.passes {
            let dlogits = mpm_loss_backward(&pass.probs, &pass.targets) * pass_weight;
            let d_masked_out = self.vocab_head.backward(&pass.masked_out, &dlogits);
            let mut d_out = Array2::zeros((pass.text_len, d));
            d_out
                .slice_mut(s![pass.span.start..pass.span.end, ..])
                .assign(&d_masked_out);
            let (d_masked_text, d_mem) = self.decoder.backward(&pass.decoder, &d_out);
            d_x_v += &d_mem;
            for row in 0..pass.text_len {
                if row >= pass.span.start && row < pass.span.end {
                    let mut g = self
                        .mask_embedding
                        .grad_mut()
                        .view_mut()
                        .into_dimensionality::<ndarray::Ix2>()
                        .expect("mask embedding is 1 x d");
                    let mut target = g.row_mut(0);
                    target += &d_masked_text.row(row);
                } else {
                    let mut target = d_x_t.row_mut(row);
                    target += &d_masked_text.row(row);
                }
            }
        }
        (d_x_t, d_x_v)
    }
}

impl ParamModule for MaskedPhraseTask {
    fn collect_params<'a>(&'a self, out: &mut Vec<&'a ParamTensor>) {
        out.push(&self.mask_embedding);
        self.decoder.collect_params(out);
        self.vocab_head.collect_params(out);
    }

    fn collect_params_mut<'a>(&'a mut self, out: &mut Vec<&'a mut ParamTensor>) {
        out.push(&mut self.mask_embedding);
        self.decoder.collect_params_mut(out);
        self.vocab_head.collect_params_mut(out);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::grad_check;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;

    fn span(start: usize, end: usize, kind: PhraseKind) -> PhraseSpan {
        PhraseSpan { start, end, kind }
    }

    fn randn(r: usize, c: usize, seed: u64) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array2::from_shape_fn((r, c), |_| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn single_span_is_chosen_deterministically() {
        let x = randn(5, 4, 1);
        let ids = [3usize, 7, 2, 9, 4];
        let spans = [span(1, 3, PhraseKind::NounPhrase)];
        let mask = Array1::from_elem(4, 0.5);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let m = mask_phrase(&x, &ids, &spans, PhraseKind::NounPhrase, &mask, &mut rng)
            .unwrap()
            .unwrap();
        assert_eq!(m.span, spans[0]);
        assert_eq!(m.targets, vec![7, 2]);
        for row in 1..3 {
            for col in 0..4 {
                assert_eq!(m.masked[[row, col]], 0.5);
            }
        }
        // unmasked rows untouched
        assert_eq!(m.masked.row(0), x.row(0));
        assert_eq!(m.masked.row(3), x.row(3));
    }

    #[test]
    fn missing_kind_skips_the_pass() {
        let x = randn(4, 4, 3);
        let ids = [1usize, 2, 3, 4];
        let spans = [span(0, 2, PhraseKind::NounPhrase)];
        let mask = Array1::zeros(4);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let m = mask_phrase(&x, &ids, &spans, PhraseKind::VerbPhrase, &mask, &mut rng).unwrap();
        assert!(m.is_none());
    }

    #[test]
    fn span_choice_is_uniform_over_candidates() {
        let x = randn(12, 3, 5);
        let ids: Vec<usize> = (0..12).collect();
        let spans = [
            span(0, 2, PhraseKind::NounPhrase),
            span(3, 5, PhraseKind::NounPhrase),
            span(6, 8, PhraseKind::NounPhrase),
            span(9, 11, PhraseKind::NounPhrase),
        ];
        let mask = Array1::zeros(3);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mut counts = [0usize; 4];
        for _ in 0..10_000 {
            let m = mask_phrase(&x, &ids, &spans, PhraseKind::NounPhrase, &mask, &mut rng)
                .unwrap()
                .unwrap();
            let idx = spans.iter().position(|s| *s == m.span).unwrap();
            counts[idx] += 1;
        }
        // 3 sigma for Binomial(10000, 1/4)
        let sigma = (10_000.0f64 * 0.25 * 0.75).sqrt();
        for &c in &counts {
            assert!(
                (c as f64 - 2500.0).abs() <= 3.0 * sigma,
                "count {c} outside 2500 ± {:.1}",
                3.0 * sigma
            );
        }
    }

    #[test]
    fn uniform_logits_cost_log_vocab() {
        let logits = Array2::zeros((3, 16));
        let (loss, _) = mpm_loss(&logits, &[4, 0, 15]).unwrap();
        assert_abs_diff_eq!(loss, 16f64.ln(), epsilon = 1e-12);
    }

    #[test]
    fn confident_correct_predictions_drive_loss_to_zero() {
        let mut logits = Array2::zeros((2, 8));
        logits[[0, 3]] = 50.0;
        logits[[1, 6]] = 50.0;
        let (loss, _) = mpm_loss(&logits, &[3, 6]).unwrap();
        assert!(loss < 1e-12, "loss {loss}");
        assert!(loss >= 0.0);
    }

    #[test]
    fn loss_rejects_out_of_vocab_targets() {
        let logits = Array2::zeros((1, 8));
        assert!(mpm_loss(&logits, &[8]).is_err());
    }

    fn tiny_task(seed: u64) -> MaskedPhraseTask {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        MaskedPhraseTask::new("mpm", 6, 12, 2, 12, 0.1, &mut rng).unwrap()
    }

    #[test]
    fn zeroed_value_projection_ignores_video_prompts() {
        let mut task = tiny_task(7);
        task.decoder.cross_attn.wv.w.value_mut().fill(0.0);
        task.decoder.cross_attn.wv.b.value_mut().fill(0.0);
        let x_t = randn(5, 6, 8);
        let ids = [1usize, 2, 3, 4, 5];
        let spans = [span(0, 2, PhraseKind::NounPhrase)];
        let mask = task.mask_vector();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let masked = mask_phrase(&x_t, &ids, &spans, PhraseKind::NounPhrase, &mask, &mut rng)
            .unwrap()
            .unwrap();
        let video_a = randn(6, 6, 10);
        let video_b = randn(6, 6, 11);
        let (pred_a, _, _) = task.decode_pass(&masked, &video_a, &mut Mode::Eval).unwrap();
        let (pred_b, _, _) = task.decode_pass(&masked, &video_b, &mut Mode::Eval).unwrap();
        assert_eq!(pred_a.logits, pred_b.logits);
    }

    #[test]
    fn nonzero_value_projection_uses_video_prompts() {
        let task = tiny_task(12);
        let x_t = randn(5, 6, 13);
        let ids = [1usize, 2, 3, 4, 5];
        let spans = [span(0, 2, PhraseKind::NounPhrase)];
        let mask = task.mask_vector();
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let masked = mask_phrase(&x_t, &ids, &spans, PhraseKind::NounPhrase, &mask, &mut rng)
            .unwrap()
            .unwrap();
        let video_a = randn(6, 6, 15);
        let video_b = randn(6, 6, 16);
        let (pred_a, _, _) = task.decode_pass(&masked, &video_a, &mut Mode::Eval).unwrap();
        let (pred_b, _, _) = task.decode_pass(&masked, &video_b, &mut Mode::Eval).unwrap();
        assert_ne!(pred_a.logits, pred_b.logits);
    }

    #[test]
    fn eval_decode_is_deterministic() {
        let task = tiny_task(17);
        let x_t = randn(4, 6, 18);
        let x_v = randn(5, 6, 19);
        let ids = [2usize, 4, 6, 8];
        let spans = [span(1, 3, PhraseKind::VerbPhrase)];
        let mut rng_a = ChaCha8Rng::seed_from_u64(20);
        let mut rng_b = ChaCha8Rng::seed_from_u64(20);
        let (a, ca) = task.step(&x_t, &x_v, &ids, &spans, MaskMode::Phrases, &mut rng_a, &mut Mode::Eval).unwrap();
        let (b, cb) = task.step(&x_t, &x_v, &ids, &spans, MaskMode::Phrases, &mut rng_b, &mut Mode::Eval).unwrap();
        assert_eq!(a, b);
        assert_eq!(ca.passes.len(), 1);
        assert_eq!(cb.passes.len(), 1);
    }

    #[test]
    fn noun_only_caption_contributes_noun_loss_alone() {
        let task = tiny_task(21);
        let x_t = randn(5, 6, 22);
        let x_v = randn(4, 6, 23);
        let ids = [1usize, 2, 3, 4, 5];
        let spans = [span(2, 4, PhraseKind::NounPhrase)];
        let mask = task.mask_vector();
        let mut rng = ChaCha8Rng::seed_from_u64(24);
        let masked = mask_phrase(&x_t, &ids, &spans, PhraseKind::NounPhrase, &mask, &mut rng)
            .unwrap()
            .unwrap();
        let (_, noun_loss, _) = task.decode_pass(&masked, &x_v, &mut Mode::Eval).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(24);
        let (total, cache) = task.step(&x_t, &x_v, &ids, &spans, MaskMode::Phrases, &mut rng, &mut Mode::Eval).unwrap();
        assert_abs_diff_eq!(total, noun_loss, epsilon = 1e-12);
        assert_eq!(cache.passes.len(), 1);
        // no spans at all -> zero loss, zero passes
        let (none_loss, none_cache) =
            task.step(&x_t, &x_v, &ids, &[], MaskMode::Phrases, &mut rng, &mut Mode::Eval).unwrap();
        assert_eq!(none_loss, 0.0);
        assert!(none_cache.passes.is_empty());
    }

    #[test]
    fn gradient_passes_at_1e_4_through_decoder_and_loss() {
        let mut task = tiny_task(25);
        let x_t = randn(6, 6, 26);
        let x_v = randn(5, 6, 27);
        let ids = [1usize, 3, 5, 7, 9, 11];
        let spans = [
            span(0, 2, PhraseKind::NounPhrase),
            span(3, 5, PhraseKind::VerbPhrase),
        ];
        let report = grad_check(
            &mut task,
            |task, backward| {
                // fresh rng per evaluation so span choices are frozen
                let mut rng = ChaCha8Rng::seed_from_u64(42);
                let (loss, cache) =
                    task.step(&x_t, &x_v, &ids, &spans, MaskMode::Phrases, &mut rng, &mut Mode::Eval)?;
                if backward {
                    task.backward(&cache, (5, 6), 1.0);
                }
                Ok(loss)
            },
            1e-4,
        )
        .unwrap();
        assert!(report.passed(), "worst {} at {}", report.worst_rel_err, report.worst_param);
    }

    #[test]
    fn input_gradients_split_between_text_and_mask() {
        let mut task = tiny_task(28);
        let x_t = randn(5, 6, 29);
        let x_v = randn(4, 6, 30);
        let ids = [1usize, 2, 3, 4, 5];
        let spans = [span(1, 3, PhraseKind::NounPhrase)];
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let (_, cache) = task.step(&x_t, &x_v, &ids, &spans, MaskMode::Phrases, &mut rng, &mut Mode::Eval).unwrap();
        let (d_x_t, d_x_v) = task.backward(&cache, (4, 6), 1.0);
        // masked rows carry no caption gradient
        for col in 0..6 {
            assert_eq!(d_x_t[[1, col]], 0.0);
            assert_eq!(d_x_t[[2, col]], 0.0);
        }
        // unmasked rows and the video prompts do
        assert!(d_x_t.row(0).iter().any(|&x| x != 0.0));
        assert!(d_x_v.iter().any(|&x| x != 0.0));
        // finite-difference spot check on an unmasked caption entry
        let h = 1e-6;
        let loss_at = |xt: &Array2<f64>| {
            let mut rng = ChaCha8Rng::seed_from_u64(31);
            task.step(xt, &x_v, &ids, &spans, MaskMode::Phrases, &mut rng, &mut Mode::Eval).unwrap().0
        };
        let mut plus = x_t.clone();
        plus[[0, 2]] += h;
        let mut minus = x_t.clone();
        minus[[0, 2]] -= h;
        let numeric = (loss_at(&plus) - loss_at(&minus)) / (2.0 * h);
        assert_abs_diff_eq!(d_x_t[[0, 2]], numeric, epsilon = 1e-7);
        // and on a video prompt entry
        let loss_v = |xv: &Array2<f64>| {
            let mut rng = ChaCha8Rng::seed_from_u64(31);
            task.step(&x_t, xv, &ids, &spans, MaskMode::Phrases, &mut rng, &mut Mode::Eval).unwrap().0
        };
        let mut plus = x_v.clone();
        plus[[2, 4]] += h;
        let mut minus = x_v.clone();
        minus[[2, 4]] -= h;
        let numeric = (loss_v(&plus) - loss_v(&minus)) / (2.0 * h);
        assert_abs_diff_eq!(d_x_v[[2, 4]], numeric, epsilon = 1e-7);
    }

    #[test]
    fn word_and_random_modes_mask_single_tokens() {
        let task = tiny_task(40);
        let x_t = randn(6, 6, 41);
        let x_v = randn(4, 6, 42);
        let ids = [1usize, 2, 3, 4, 5, 6];
        let spans = [
            span(0, 3, PhraseKind::NounPhrase),
            span(4, 6, PhraseKind::VerbPhrase),
        ];
        let mut rng = ChaCha8Rng::seed_from_u64(43);
        let (_, cache) = task
            .step(&x_t, &x_v, &ids, &spans, MaskMode::Words, &mut rng, &mut Mode::Eval)
            .unwrap();
        assert_eq!(cache.passes.len(), 2);
        for (pass, parent) in cache.passes.iter().zip(&spans) {
            assert_eq!(pass.span.end - pass.span.start, 1);
            assert!(pass.span.start >= parent.start && pass.span.end <= parent.end);
            assert_eq!(pass.targets, vec![ids[pass.span.start]]);
        }

        let (_, cache) = task
            .step(&x_t, &x_v, &ids, &spans, MaskMode::Random, &mut rng, &mut Mode::Eval)
            .unwrap();
        assert_eq!(cache.passes.len(), 1);
        let pass = &cache.passes[0];
        assert_eq!(pass.span.end - pass.span.start, 1);
        assert!(pass.span.end <= ids.len());
    }

    #[test]
    fn mask_embedding_receives_gradient() {
        let mut task = tiny_task(32);
        let x_t = randn(5, 6, 33);
        let x_v = randn(4, 6, 34);
        let ids = [1usize, 2, 3, 4, 5];
        let spans = [span(0, 3, PhraseKind::VerbPhrase)];
        let mut rng = ChaCha8Rng::seed_from_u64(35);
        let (_, cache) = task.step(&x_t, &x_v, &ids, &spans, MaskMode::Phrases, &mut rng, &mut Mode::Eval).unwrap();
        task.backward(&cache, (4, 6), 1.0);
        assert!(task.mask_embedding.grad().iter().any(|&g| g != 0.0));
    }
}
