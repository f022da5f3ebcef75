//! Clip sampling over length-T score/feature sequences: temperature-softmax
//! selection distributions, roulette-wheel draws, and fixed (uniform or
//! random) sampling.
//!
//! Indices are 1-based throughout: position `i` refers to the i-th clip of
//! the sequence, matching the cumulative-boundary convention `q_0 = 0`,
//! `q_T = 1` used by the roulette wheel.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::{Error, Result};

/// How a clip set was chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SamplingMethod {
    UniformFixed,
    RandomFixed,
    AnomalyLed,
}

/// A selection distribution over clip positions: probabilities `p` (a strict
/// simplex vector) and cumulative sums `q` with the implicit `q_0 = 0` and
/// exact `q_T = 1`.
#[derive(Debug, Clone)]
pub struct SelectionDistribution {
    p: Vec<f64>,
    q: Vec<f64>,
}

impl SelectionDistribution {
    pub fn probabilities(&self) -> &[f64] {
        &self.p
    }

    pub fn cumulative(&self) -> &[f64] {
        &self.q
    }

    pub fn len(&self) -> usize {
        self.p.len()
    }

    pub fn is_empty(&self) -> bool {
        self.p.is_empty()
    }
}

/// N selected clip positions (1-based). Anomaly-led draws may repeat and stay
/// in draw order; uniform fixed indices are strictly increasing.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SampledClipSet {
    pub indices: Vec<usize>,
    pub method: SamplingMethod,
}

impl SampledClipSet {
    pub fn n(&self) -> usize {
        self.indices.len()
    }
}

/// Temperature softmax over anomaly scores (max is subtracted before
/// exponentiation), plus its cumulative vector.
pub fn selection_probabilities(scores: &[f64], tau: f64) -> Result<SelectionDistribution> {
    if scores.is_empty() {
        return Err(Error::Validation("selection over an empty score vector".into()));
    }
    if !(tau > 0.0) {
        return Err(Error::Config(format!("temperature must be positive, got {tau}")));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::NonFinite("anomaly score".into()));
    }
    let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exp: Vec<f64> = scores.iter().map(|&s| ((s - max) / tau).exp()).collect();
    let sum: f64 = exp.iter().sum();
    let p: Vec<f64> = exp.iter().map(|e| e / sum).collect();
    let mut q = Vec::with_capacity(p.len());
    let mut acc = 0.0;
    for &pi in &p {
        acc += pi;
        q.push(acc);
    }
    // Normalize the boundaries by the full prefix sum: round-off can leave it
    // an ulp away from 1, and dividing keeps q monotone while pinning the last
    // boundary to exactly 1.0 so a draw of 1.0 always lands in range.
    let total = *q.last().expect("non-empty");
    for qi in &mut q {
        *qi /= total;
    }
    Ok(SelectionDistribution { p, q })
}

/// Roulette-wheel selection: N independent uniform draws, each mapped to the
/// position `i` whose cumulative bracket satisfies `q_{i-1} < r <= q_i`.
/// Draws are with replacement and returned in draw order.
pub fn roulette_select(
    dist: &SelectionDistribution,
    n: usize,
    rng: &mut ChaCha8Rng,
) -> Result<SampledClipSet> {
    if n == 0 {
        return Err(Error::Validation("cannot sample zero clips".into()));
    }
    let q = dist.cumulative();
    let indices = (0..n)
        .map(|_| {
            let r: f64 = rng.random();
            // First position whose upper boundary reaches r: q[i-1] < r <= q[i].
            // partition_point counts the strictly-smaller prefix, which is
            // exactly the 0-based position of that bracket.
            let pos = q.partition_point(|&qi| qi < r);
            pos.min(q.len() - 1) + 1
        })
        .collect();
    Ok(SampledClipSet { indices, method: SamplingMethod::AnomalyLed })
}

/// Fixed-frame sampling mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FixedMode {
    Uniform,
    Random,
}

/// Content-independent sampling of N positions from 1..=T.
///
/// Uniform mode spaces indices evenly: `round(1 + (j-1)(T-1)/(N-1))` for
/// `j = 1..N` (all ones when N = 1 or T = 1). Random mode draws without
/// replacement and sorts when `N <= T`; otherwise it draws with replacement.
pub fn fixed_sample(t: usize, n: usize, mode: FixedMode, rng: &mut ChaCha8Rng) -> Result<SampledClipSet> {
    if t == 0 {
        return Err(Error::Validation("cannot sample from an empty sequence".into()));
    }
    if n == 0 {
        return Err(Error::Validation("cannot sample zero clips".into()));
    }
    match mode {
        FixedMode::Uniform => {
            let indices = if n == 1 || t == 1 {
                vec![1; n]
            } else {
                (1..=n)
                    .map(|j| {
                        let x = 1.0 + (j - 1) as f64 * (t - 1) as f64 / (n - 1) as f64;
                        x.round() as usize
                    })
                    .collect()
            };
            Ok(SampledClipSet { indices, method: SamplingMethod::UniformFixed })
        }
        FixedMode::Random => {
            let indices = if n <= t {
                let mut all: Vec<usize> = (1..=t).collect();
                all.shuffle(rng);
                let mut chosen: Vec<usize> = all.into_iter().take(n).collect();
                chosen.sort_unstable();
                chosen
            } else {
                (0..n).map(|_| rng.random_range(1..=t)).collect()
            };
            Ok(SampledClipSet { indices, method: SamplingMethod::RandomFixed })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::SeedableRng;

    #[test]
    fn flat_scores_give_uniform_probabilities() {
        let d = selection_probabilities(&[0.0, 0.0, 0.0], 0.7).unwrap();
        for &p in d.probabilities() {
            assert_abs_diff_eq!(p, 1.0 / 3.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn two_point_softmax_matches_reference_values() {
        // exp(1)/(exp(1)+exp(0)) at tau = 1
        let d = selection_probabilities(&[1.0, 0.0], 1.0).unwrap();
        assert_abs_diff_eq!(d.probabilities()[0], 0.731_058_578_630_004_9, epsilon = 1e-12);
        assert_abs_diff_eq!(d.probabilities()[1], 0.268_941_421_369_995_1, epsilon = 1e-12);
        // sharpened at tau = 0.1
        let d = selection_probabilities(&[1.0, 0.0], 0.1).unwrap();
        assert!(d.probabilities()[0] > 0.9999);
    }

    #[test]
    fn survives_extreme_score_magnitudes() {
        let d = selection_probabilities(&[1e6, 0.0, -1e6], 0.7).unwrap();
        assert!(d.probabilities().iter().all(|p| p.is_finite()));
        assert_abs_diff_eq!(d.probabilities().iter().sum::<f64>(), 1.0, epsilon = 1e-9);
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(selection_probabilities(&[], 0.7).is_err());
        assert!(selection_probabilities(&[0.0], 0.0).is_err());
        assert!(selection_probabilities(&[0.0], -1.0).is_err());
        assert!(selection_probabilities(&[f64::NAN], 0.7).is_err());
    }

    #[test]
    fn boundary_draws_respect_half_open_brackets() {
        // p = (0.5, 0.5): r = 0.5 falls in the first bracket (right-inclusive),
        // anything strictly above goes to the second.
        let d = selection_probabilities(&[0.0, 0.0], 1.0).unwrap();
        let q = d.cumulative();
        assert_eq!(q.partition_point(|&qi| qi < 0.5) + 1, 1);
        assert_eq!(q.partition_point(|&qi| qi < 0.500_01) + 1, 2);
        assert_eq!(q.partition_point(|&qi| qi < 1.0) + 1, 2);
        // r can never be drawn as exactly 0, but 0+ maps to index 1
        assert_eq!(q.partition_point(|&qi| qi < 1e-300) + 1, 1);
    }

    #[test]
    fn degenerate_single_clip_always_selected() {
        let d = selection_probabilities(&[3.7], 0.7).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let s = roulette_select(&d, 16, &mut rng).unwrap();
        assert!(s.indices.iter().all(|&i| i == 1));
    }

    #[test]
    fn roulette_frequencies_track_probabilities() {
        let scores = [0.2f64.ln(), 0.3f64.ln(), 0.5f64.ln()];
        let d = selection_probabilities(&scores, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1234);
        let draws = 100_000;
        let s = roulette_select(&d, draws, &mut rng).unwrap();
        let mut counts = [0usize; 3];
        for &i in &s.indices {
            counts[i - 1] += 1;
        }
        for (c, &p) in counts.iter().zip(d.probabilities()) {
            let mean = draws as f64 * p;
            let sd = (draws as f64 * p * (1.0 - p)).sqrt();
            assert!(
                ((*c as f64) - mean).abs() <= 3.0 * sd,
                "count {c} vs mean {mean:.1} (sd {sd:.1})"
            );
        }
    }

    #[test]
    fn identical_seeds_reproduce_identical_draws() {
        let d = selection_probabilities(&[0.1, 0.9, 0.4, 0.4], 0.7).unwrap();
        let a = roulette_select(&d, 64, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let b = roulette_select(&d, 64, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn uniform_sampling_is_evenly_spaced() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let s = fixed_sample(100, 50, FixedMode::Uniform, &mut rng).unwrap();
        assert_eq!(s.indices[0], 1);
        assert_eq!(*s.indices.last().unwrap(), 100);
        for w in s.indices.windows(2) {
            let step = w[1] as i64 - w[0] as i64;
            assert!((1..=3).contains(&step), "spacing {step}");
        }
    }

    #[test]
    fn uniform_identity_when_n_equals_t() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let s = fixed_sample(10, 10, FixedMode::Uniform, &mut rng).unwrap();
        assert_eq!(s.indices, (1..=10).collect::<Vec<_>>());
    }

    #[test]
    fn random_without_replacement_is_sorted_and_unique() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let s = fixed_sample(20, 8, FixedMode::Random, &mut rng).unwrap();
        assert!(s.indices.windows(2).all(|w| w[0] < w[1]));
        assert!(s.indices.iter().all(|&i| (1..=20).contains(&i)));
    }

    #[test]
    fn random_over_length_allows_duplicates_in_range() {
        let mut rng = ChaCha8Rng::seed_from_u64(78);
        let s = fixed_sample(3, 10, FixedMode::Random, &mut rng).unwrap();
        assert_eq!(s.indices.len(), 10);
        assert!(s.indices.iter().all(|&i| (1..=3).contains(&i)));
    }

    proptest! {
        #[test]
        fn probabilities_form_a_simplex(
            scores in proptest::collection::vec(-50.0f64..50.0, 1..64),
            tau in 0.05f64..5.0,
        ) {
            let d = selection_probabilities(&scores, tau).unwrap();
            let sum: f64 = d.probabilities().iter().sum();
            prop_assert!((sum - 1.0).abs() <= 1e-9);
            // q nondecreasing with exact final boundary
            prop_assert!(d.cumulative().windows(2).all(|w| w[0] <= w[1]));
            prop_assert_eq!(*d.cumulative().last().unwrap(), 1.0);
        }

        // On the anomaly-score domain [0, 1] no exponential can underflow, so
        // every clip keeps strictly positive mass and score order is strictly
        // preserved. (Far outside that domain, score/temperature ratios past
        // ~745 underflow individual probabilities to exactly zero in f64.)
        #[test]
        fn score_domain_keeps_strict_positivity_and_order(
            scores in proptest::collection::vec(0.0f64..=1.0, 2..64),
            tau in 0.05f64..5.0,
        ) {
            let d = selection_probabilities(&scores, tau).unwrap();
            let p = d.probabilities();
            prop_assert!(p.iter().all(|&pi| pi > 0.0));
            for i in 0..scores.len() {
                for j in 0..scores.len() {
                    if scores[i] > scores[j] {
                        prop_assert!(p[i] > p[j]);
                    }
                }
            }
        }

        #[test]
        fn cooling_concentrates_mass(
            scores in proptest::collection::vec(-5.0f64..5.0, 2..16),
        ) {
            // max_i p_i is nondecreasing as tau falls
            let taus = [4.0, 2.0, 1.0, 0.5, 0.25, 0.1];
            let mut prev_max = 0.0f64;
            for &tau in &taus {
                let d = selection_probabilities(&scores, tau).unwrap();
                let max = d.probabilities().iter().cloned().fold(0.0, f64::max);
                prop_assert!(max >= prev_max - 1e-12);
                prev_max = max;
            }
        }

        #[test]
        fn roulette_indices_always_in_range(
            scores in proptest::collection::vec(-10.0f64..10.0, 1..32),
            n in 1usize..64,
            seed in 0u64..1000,
        ) {
            let d = selection_probabilities(&scores, 0.7).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let s = roulette_select(&d, n, &mut rng).unwrap();
            prop_assert_eq!(s.indices.len(), n);
            prop_assert!(s.indices.iter().all(|&i| i >= 1 && i <= scores.len()));
        }
    }
}
