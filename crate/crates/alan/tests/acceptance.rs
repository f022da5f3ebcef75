//! The release gate: nine end-to-end checks covering sampling fidelity,
//! distribution contracts, gradient correctness, loss and metric oracles,
//! chance-level baselines, trainability, detector direction and determinism.
//! Each test prints one PASS line with its measured numbers.

use std::time::Instant;

use ndarray::{Array1, Array2};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use alan::alignment::{ranking_loss, AlignmentScorer};
use alan::datapack::{generate_synthetic, QueryModality, Split, SyntheticConfig};
use alan::detector::{topk_aggregate, AnomalyScoreVector, DetectorConfig};
use alan::encoders::{DualRepresentation, EncoderConfig};
use alan::eval::{build_similarity_matrix, evaluate, rank_metrics, RetrievalReport};
use alan::model::{gradient_audit, AlanModel, ModelConfig};
use alan::nn::Mode;
use alan::rng;
use alan::sampler::{roulette_select, selection_probabilities};
use alan::trainer::{train, AlignmentMode, TrainConfig};

// ---------------------------------------------------------------------------
// Chi-square machinery for the sampling-fidelity check
// ---------------------------------------------------------------------------

/// Lanczos approximation of ln Γ(x) (g = 7, nine coefficients).
fn ln_gamma(x: f64) -> f64 {
    const COEF: [f64; 9] = [
        0.999_999_999_999_809_93,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_13,
        -176.615_029_162_140_59,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_571_6e-6,
        1.505_632_735_149_311_6e-7,
    ];
    assert!(x >= 0.5, "reflection not needed for chi-square arguments");
    let z = x - 1.0;
    let mut a = COEF[0];
    for (i, &c) in COEF.iter().enumerate().skip(1) {
        a += c / (z + i as f64);
    }
    let t = z + 7.5;
    0.5 * (2.0 * std::f64::consts::PI).ln() + (z + 0.5) * t.ln() - t + a.ln()
}

/// Lower regularized incomplete gamma P(a, x) by its power series.
fn gamma_p_series(a: f64, x: f64) -> f64 {
    let mut term = 1.0 / a;
    let mut sum = term;
    let mut n = a;
    for _ in 0..1000 {
        n += 1.0;
        term *= x / n;
        sum += term;
        if term.abs() < sum.abs() * 1e-16 {
            break;
        }
    }
    sum * (-x + a * x.ln() - ln_gamma(a)).exp()
}

/// Upper regularized incomplete gamma Q(a, x) by continued fraction (Lentz).
fn gamma_q_continued_fraction(a: f64, x: f64) -> f64 {
    let tiny = 1e-300;
    let mut b = x + 1.0 - a;
    let mut c = 1.0 / tiny;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..1000 {
        let an = -(i as f64) * (i as f64 - a);
        b += 2.0;
        d = an * d + b;
        if d.abs() < tiny {
            d = tiny;
        }
        c = b + an / c;
        if c.abs() < tiny {
            c = tiny;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < 1e-16 {
            break;
        }
    }
    (-x + a * x.ln() - ln_gamma(a)).exp() * h
}

/// Survival function of the chi-square distribution with `dof` degrees of
/// freedom: P(X >= stat).
fn chi_square_p_value(stat: f64, dof: usize) -> f64 {
    let a = dof as f64 / 2.0;
    let x = stat / 2.0;
    if x <= 0.0 {
        return 1.0;
    }
    if x < a + 1.0 {
        1.0 - gamma_p_series(a, x)
    } else {
        gamma_q_continued_fraction(a, x)
    }
}

#[test]
fn chi_square_survival_matches_table_values() {
    // Classic critical values: dof 1 at 3.8415 -> 0.05, dof 10 at 29.588 -> 0.001.
    assert!((chi_square_p_value(3.841_458_821, 1) - 0.05).abs() < 1e-6);
    assert!((chi_square_p_value(29.588_298_45, 10) - 0.001).abs() < 1e-7);
    assert!((chi_square_p_value(124.839_2, 100) - 0.046_2).abs() < 1e-3);
}

// ---------------------------------------------------------------------------
// 1. Sampling fidelity
// ---------------------------------------------------------------------------

#[test]
fn c1_sampling_frequencies_match_selection_probabilities() {
    let mut score_rng = rng::stream(1, "acceptance-scores");
    let cases: Vec<(Vec<f64>, f64)> = vec![
        ((0..7).map(|_| score_rng.random::<f64>()).collect(), 1.0),
        ((0..33).map(|_| score_rng.random::<f64>()).collect(), 0.5),
        ((0..64).map(|_| score_rng.random::<f64>()).collect(), 1.0),
        // One sharply peaked vector: most mass on two clips.
        (
            {
                let mut v = vec![0.01; 24];
                v[3] = 0.99;
                v[17] = 0.9;
                v
            },
            0.25,
        ),
    ];

    let n_draws = 100_000usize;
    for (case, (scores, tau)) in cases.into_iter().enumerate() {
        let t = scores.len();
        let dist = selection_probabilities(&scores, tau).unwrap();
        let mut draw_rng = rng::indexed_stream(2, "acceptance-draws", case as u64);

        let started = Instant::now();
        let selected = roulette_select(&dist, n_draws, &mut draw_rng).unwrap();
        let elapsed = started.elapsed();
        assert!(
            elapsed.as_secs_f64() < 1.0,
            "case {case}: {n_draws} draws took {elapsed:?}"
        );

        let mut counts = vec![0usize; t];
        for index in &selected.indices {
            counts[index - 1] += 1;
        }

        // Every bin within three multinomial standard deviations.
        let n = n_draws as f64;
        for (i, (&count, &p)) in counts.iter().zip(dist.probabilities()).enumerate() {
            let freq = count as f64 / n;
            let sigma = (p * (1.0 - p) / n).sqrt();
            assert!(
                (freq - p).abs() <= 3.0 * sigma,
                "case {case} bin {i}: frequency {freq:.6} vs probability {p:.6} (3 sigma = {:.6})",
                3.0 * sigma
            );
        }

        // And the joint chi-square test is not rejected at 0.001.
        let stat: f64 = counts
            .iter()
            .zip(dist.probabilities())
            .map(|(&count, &p)| {
                let expected = n * p;
                (count as f64 - expected).powi(2) / expected
            })
            .sum();
        let p_value = chi_square_p_value(stat, t - 1);
        assert!(
            p_value >= 0.001,
            "case {case}: chi-square {stat:.2} with {} dof gives p = {p_value:.6}",
            t - 1
        );
        println!(
            "PASS sampling fidelity case {case}: T = {t}, chi-square {stat:.2}, p = {p_value:.4}, \
             {n_draws} draws in {elapsed:?}"
        );
    }
}

// ---------------------------------------------------------------------------
// 2. Selection-distribution contracts
// ---------------------------------------------------------------------------

#[test]
fn c2_selection_distribution_contracts_hold() {
    let mut rng = rng::stream(3, "acceptance-contracts");
    let taus = [0.25, 1.0, 3.0];
    for case in 0..1000 {
        let t = rng.random_range(1..=64);
        let scores: Vec<f64> = (0..t).map(|_| rng.random::<f64>()).collect();
        let tau = taus[case % taus.len()];
        let dist = selection_probabilities(&scores, tau).unwrap();
        let p = dist.probabilities();
        let q = dist.cumulative();

        let sum: f64 = p.iter().sum();
        assert!((sum - 1.0).abs() <= 1e-9, "case {case}: sum of probabilities {sum}");
        assert!(q.windows(2).all(|w| w[0] <= w[1]), "case {case}: cumulative not monotone");
        assert_eq!(*q.last().unwrap(), 1.0, "case {case}: last boundary");
        for i in 0..t {
            for j in 0..t {
                if scores[i] > scores[j] {
                    assert!(
                        p[i] > p[j],
                        "case {case}: score {} > {} but probability {} <= {}",
                        scores[i],
                        scores[j],
                        p[i],
                        p[j]
                    );
                }
            }
        }
    }
    println!("PASS distribution contracts: 1000 vectors, sums within 1e-9, strict monotonicity");
}

// ---------------------------------------------------------------------------
// 3. Gradient suite
// ---------------------------------------------------------------------------

#[test]
fn c3_every_loss_path_passes_finite_difference_checks() {
    let started = Instant::now();
    let audits = gradient_audit(20_260_821, 10, 1e-4).unwrap();
    let elapsed = started.elapsed();
    assert_eq!(audits.len(), 3);
    for audit in &audits {
        assert!(
            audit.passed(),
            "{}: worst relative error {} exceeds {}",
            audit.path,
            audit.worst_rel_err,
            audit.tolerance
        );
        assert_eq!(audit.instances, 10);
    }
    assert!(elapsed.as_secs_f64() < 300.0, "audit took {elapsed:?}");
    for audit in &audits {
        println!(
            "PASS gradient audit: {} (worst {:.3e} over {} instances, tolerance 1e-4)",
            audit.path, audit.worst_rel_err, audit.instances
        );
    }
    println!("PASS gradient suite: all three paths in {elapsed:?}");
}

// ---------------------------------------------------------------------------
// 4. Loss oracles
// ---------------------------------------------------------------------------

fn ranking_oracle(s: &Array2<f64>, margin: f64) -> f64 {
    let b = s.nrows();
    let mut total = 0.0;
    for i in 0..b {
        for j in 0..b {
            if i != j {
                total += f64::max(0.0, s[[i, j]] - s[[i, i]] + margin);
                total += f64::max(0.0, s[[j, i]] - s[[i, i]] + margin);
            }
        }
    }
    total / b as f64
}

#[test]
fn c4_losses_match_independent_oracles() {
    let mut rng = rng::stream(4, "acceptance-losses");

    // Bidirectional max-margin ranking loss against the double loop.
    let margins = [0.0, 0.05, 0.2];
    for case in 0..100 {
        let b = rng.random_range(2..=8);
        let s = Array2::from_shape_fn((b, b), |_| rng.random_range(-1.0..1.0));
        let margin = margins[case % margins.len()];
        let loss = ranking_loss(&s, margin).unwrap();
        let oracle = ranking_oracle(&s, margin);
        assert!(
            (loss - oracle).abs() <= 1e-9,
            "case {case}: loss {loss} vs oracle {oracle}"
        );
    }

    // Top-k aggregation against sort-then-mean, including the tie order.
    for case in 0..100 {
        let t = rng.random_range(1..=64);
        let quantize = case % 2 == 0;
        let scores: Vec<f64> = (0..t)
            .map(|_| {
                let v = rng.random::<f64>();
                if quantize {
                    (v * 8.0).round() / 8.0
                } else {
                    v
                }
            })
            .collect();
        let agg = topk_aggregate(&AnomalyScoreVector::new(scores.clone()).unwrap());
        let mut sorted = scores.clone();
        sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
        let k = (t / 16).max(1);
        let oracle = sorted[..k].iter().sum::<f64>() / k as f64;
        assert_eq!(agg.k, k, "case {case}");
        assert_eq!(agg.value, oracle, "case {case}: top-{k} of {t} scores");
    }

    // The two-pair worked example.
    let s = ndarray::array![[0.5, 0.6], [0.4, 0.9]];
    let loss = ranking_loss(&s, 0.05).unwrap();
    assert!((loss - 0.075).abs() <= 1e-12, "worked example gave {loss}");

    println!(
        "PASS loss oracles: 100 ranking matrices within 1e-9, 100 top-k cases exact, \
         worked example 0.075"
    );
}

// ---------------------------------------------------------------------------
// 5. Metric oracles
// ---------------------------------------------------------------------------

/// Pessimistic rank by full sort: position after the last entry >= truth.
fn rank_by_full_sort(scores: &[f64], truth: f64) -> usize {
    let mut sorted = scores.to_vec();
    sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
    sorted.iter().rposition(|&v| v >= truth).expect("truth is among the scores") + 1
}

struct OracleDirection {
    r1: f64,
    r5: f64,
    r10: f64,
    mdr: f64,
}

fn oracle_direction(ranks: &[usize]) -> OracleDirection {
    let n = ranks.len() as f64;
    let recall = |k: usize| 100.0 * ranks.iter().filter(|&&r| r <= k).count() as f64 / n;
    let mut sorted = ranks.to_vec();
    sorted.sort_unstable();
    let mdr = if sorted.len() % 2 == 1 {
        sorted[sorted.len() / 2] as f64
    } else {
        (sorted[sorted.len() / 2 - 1] as f64 + sorted[sorted.len() / 2] as f64) / 2.0
    };
    OracleDirection { r1: recall(1), r5: recall(5), r10: recall(10), mdr }
}

fn oracle_report(s: &Array2<f64>, pairing: &[usize]) -> (OracleDirection, OracleDirection) {
    let g = s.nrows();
    let mut inverse = vec![0usize; g];
    for (query, &video) in pairing.iter().enumerate() {
        inverse[video] = query;
    }
    let query_ranks: Vec<usize> = (0..g)
        .map(|query| {
            let column: Vec<f64> = (0..g).map(|video| s[[video, query]]).collect();
            rank_by_full_sort(&column, s[[pairing[query], query]])
        })
        .collect();
    let video_ranks: Vec<usize> = (0..g)
        .map(|video| {
            let row: Vec<f64> = (0..g).map(|query| s[[video, query]]).collect();
            rank_by_full_sort(&row, s[[video, inverse[video]]])
        })
        .collect();
    (oracle_direction(&query_ranks), oracle_direction(&video_ranks))
}

fn assert_direction_matches(
    label: &str,
    actual: &alan::eval::DirectionMetrics,
    oracle: &OracleDirection,
) {
    assert_eq!(actual.r1, oracle.r1, "{label} R@1");
    assert_eq!(actual.r5, oracle.r5, "{label} R@5");
    assert_eq!(actual.r10, oracle.r10, "{label} R@10");
    assert_eq!(actual.mdr, oracle.mdr, "{label} MdR");
}

#[test]
fn c5_rank_metrics_match_full_sort_oracle() {
    let mut rng = rng::stream(5, "acceptance-metrics");

    for case in 0..100 {
        let g = rng.random_range(2..=200);
        // Half the matrices are quantized to force heavy ties.
        let quantize = case % 2 == 0;
        let s = Array2::from_shape_fn((g, g), |_| {
            let v: f64 = rng.random_range(-1.0..1.0);
            if quantize {
                (v * 10.0).round() / 10.0
            } else {
                v
            }
        });
        let mut pairing: Vec<usize> = (0..g).collect();
        for i in (1..g).rev() {
            pairing.swap(i, rng.random_range(0..=i));
        }
        let report = rank_metrics(&s, &pairing).unwrap();
        let (q2v, v2q) = oracle_report(&s, &pairing);
        assert_direction_matches("query-to-video", &report.query_to_video, &q2v);
        assert_direction_matches("video-to-query", &report.video_to_query, &v2q);
        let oracle_sum = q2v.r1 + q2v.r5 + q2v.r10 + v2q.r1 + v2q.r5 + v2q.r10;
        assert!((report.sum_r - oracle_sum).abs() <= 1e-12, "case {case}: SumR");
    }

    // Dominant diagonal: perfect retrieval in both directions.
    let g = 40;
    let mut rng2 = rng::stream(6, "acceptance-diagonal");
    let mut s = Array2::from_shape_fn((g, g), |_| rng2.random_range(0.0..0.5));
    for i in 0..g {
        s[[i, i]] = 1.0 + rng2.random::<f64>();
    }
    let pairing: Vec<usize> = (0..g).collect();
    let perfect = rank_metrics(&s, &pairing).unwrap();
    assert_eq!(perfect.query_to_video.r1, 100.0);
    assert_eq!(perfect.video_to_query.r1, 100.0);
    assert_eq!(perfect.query_to_video.mdr, 1.0);
    assert_eq!(perfect.video_to_query.mdr, 1.0);
    assert_eq!(perfect.sum_r, 600.0);

    // Strictly increasing transforms leave every metric unchanged.
    let mut rng3 = rng::stream(7, "acceptance-monotone");
    let base = Array2::from_shape_fn((60, 60), |_| rng3.random_range(-2.0..2.0));
    let mut pairing: Vec<usize> = (0..60).collect();
    for i in (1..60).rev() {
        pairing.swap(i, rng3.random_range(0..=i));
    }
    let reference = rank_metrics(&base, &pairing).unwrap();
    let transforms: [fn(f64) -> f64; 3] =
        [|x| 2.5 * x + 1.0, |x| x.exp(), |x| x.atan()];
    for (t_idx, transform) in transforms.iter().enumerate() {
        let transformed = base.mapv(*transform);
        let report = rank_metrics(&transformed, &pairing).unwrap();
        assert_eq!(
            (report.query_to_video, report.video_to_query, report.sum_r),
            (reference.query_to_video, reference.video_to_query, reference.sum_r),
            "transform {t_idx}"
        );
    }

    println!(
        "PASS metric oracles: 100 matrices match full sort, dominant diagonal is perfect, \
         monotone transforms are invisible"
    );
}

// ---------------------------------------------------------------------------
// 6. Chance-level baseline with untrained representations
// ---------------------------------------------------------------------------

fn random_unit(d: usize, rng: &mut ChaCha8Rng) -> Array1<f64> {
    loop {
        let v = Array1::from_shape_fn(d, |_| rng.sample::<f64, _>(StandardNormal));
        let norm = v.dot(&v).sqrt();
        if norm > 1e-9 {
            return v / norm;
        }
    }
}

fn random_representation(d: usize, rng: &mut ChaCha8Rng) -> DualRepresentation {
    DualRepresentation {
        g_obj: random_unit(d, rng),
        g_mot: random_unit(d, rng),
        h_obj: random_unit(d, rng),
        h_mot: random_unit(d, rng),
    }
}

/// Mean R@1 (query-to-video) over `n_seeds` galleries of untrained
/// representations, plus the elapsed wall time.
fn chance_level_mean_r1(gallery: usize, n_seeds: usize, d: usize, master: u64) -> f64 {
    let pairing: Vec<usize> = (0..gallery).collect();
    let mut total_r1 = 0.0;
    for seed in 0..n_seeds {
        let mut rng = rng::indexed_stream(master, "baseline", seed as u64);
        let scorer = AlignmentScorer::new("align", d, &mut rng);
        let videos: Vec<DualRepresentation> =
            (0..gallery).map(|_| random_representation(d, &mut rng)).collect();
        let queries: Vec<DualRepresentation> =
            (0..gallery).map(|_| random_representation(d, &mut rng)).collect();
        let s = build_similarity_matrix(&scorer, &videos, &queries, 0.5).unwrap();
        let report = rank_metrics(&s, &pairing).unwrap();
        total_r1 += report.query_to_video.r1;
    }
    total_r1 / n_seeds as f64
}

fn assert_chance_level(gallery: usize, n_seeds: usize, master: u64) {
    let started = Instant::now();
    let mean_r1 = chance_level_mean_r1(gallery, n_seeds, 8, master);
    let elapsed = started.elapsed();

    let p = 1.0 / gallery as f64;
    let expected = 100.0 * p;
    let sigma_seed = 100.0 * (p * (1.0 - p) / gallery as f64).sqrt();
    let band = 3.0 * sigma_seed / (n_seeds as f64).sqrt();
    assert!(
        (mean_r1 - expected).abs() <= band,
        "gallery {gallery}: mean R@1 {mean_r1:.4}% vs expected {expected:.4}% (band {band:.4})"
    );
    println!(
        "PASS chance level: gallery {gallery}, mean R@1 {mean_r1:.4}% in \
         [{:.4}%, {:.4}%] over {n_seeds} seeds ({elapsed:?})",
        expected - band,
        expected + band
    );
}

#[test]
fn c6_untrained_representations_score_at_chance_level() {
    assert_chance_level(290, 1000, 60);
    assert_chance_level(800, 1000, 61);
}

// ---------------------------------------------------------------------------
// 7. End-to-end trainability on a planted corpus
// ---------------------------------------------------------------------------

fn planted_model_config(vocab_size: usize) -> ModelConfig {
    ModelConfig {
        encoder: EncoderConfig {
            d_in_video: 8,
            d_in_audio: 8,
            d_model: 16,
            n_heads: 4,
            d_ff: 32,
            n_self_layers: 1,
            n_text_layers: 1,
            vocab_size,
            max_position: 64,
            dropout: 0.0,
        },
        detector: DetectorConfig { hidden: (8, 4), kernel_size: 5, dropout: 0.0 },
        n_samples: 3,
        tau: 1.0,
        alpha: 0.5,
        with_audio: false,
    }
}

fn planted_train_config() -> TrainConfig {
    TrainConfig {
        batch_size: 32,
        learning_rate: 2e-3,
        lr_decay: 1.0,
        epochs: 300,
        patience: 60,
        seed: 7,
        margin: 0.2,
        ..TrainConfig::default()
    }
}

fn planted_corpus() -> alan::datapack::CorpusManifest {
    generate_synthetic(&SyntheticConfig {
        n_pairs: 32,
        t: 16,
        d_in: 8,
        vocab_size: 128,
        anomaly_ratio: 0.5,
        seed: 101,
        split: Split::Train,
        query_modality: QueryModality::Text,
    })
    .unwrap()
}

#[test]
fn c7_full_training_reaches_perfect_retrieval_and_ablations_converge() {
    let corpus = planted_corpus();
    let items: Vec<&alan::datapack::PairedItem> = corpus.items.iter().collect();

    let run = |label: &str, config: &TrainConfig| {
        let mut init = rng::stream(config.seed, "init");
        let mut model = AlanModel::new(planted_model_config(128), &mut init).unwrap();
        let started = Instant::now();
        let outcome = train(&mut model, &items, &items, config).unwrap();
        let elapsed = started.elapsed();
        assert!(!outcome.diverged, "{label} diverged");
        let best = outcome.best.expect("at least one epoch completed");
        (best, elapsed)
    };

    // The full configuration must reach perfect retrieval in both directions
    // within the epoch and wall-time budgets.
    let full_config = planted_train_config();
    let (full_best, full_elapsed) = run("full", &full_config);
    assert_eq!(full_best.report.query_to_video.r1, 100.0, "query-to-video R@1");
    assert_eq!(full_best.report.video_to_query.r1, 100.0, "video-to-query R@1");
    assert!(full_best.epoch < 300, "needed epoch {}", full_best.epoch);
    assert!(
        full_elapsed.as_secs_f64() < 600.0,
        "full training took {full_elapsed:?}"
    );
    println!(
        "PASS trainability: full configuration at R@1 = 100/100 by epoch {} in {full_elapsed:?}",
        full_best.epoch
    );

    // Every ablation still converges on the same corpus. Epochs-to-best are
    // reported for comparison, not asserted.
    let ablations: Vec<(&str, TrainConfig)> = vec![
        ("uniform-sampling-only", TrainConfig { use_as: false, ..planted_train_config() }),
        ("anomaly-led-only", TrainConfig { use_fs: false, ..planted_train_config() }),
        (
            "global-level-only",
            TrainConfig { alignment_mode: AlignmentMode::Cls, ..planted_train_config() },
        ),
        (
            "pooled-level-only",
            TrainConfig { alignment_mode: AlignmentMode::Avg, ..planted_train_config() },
        ),
        ("without-masked-phrase", TrainConfig { use_vpmpm: false, ..planted_train_config() }),
    ];
    for (label, config) in &ablations {
        let (best, elapsed) = run(label, config);
        assert_eq!(best.report.query_to_video.r1, 100.0, "{label} query-to-video R@1");
        assert_eq!(best.report.video_to_query.r1, 100.0, "{label} video-to-query R@1");
        println!(
            "PASS trainability: {label} converged by epoch {} in {elapsed:?}",
            best.epoch
        );
    }
}

// ---------------------------------------------------------------------------
// 8. Detector direction on held-out items
// ---------------------------------------------------------------------------

#[test]
fn c8_trained_detector_scores_truth_windows_higher() {
    let synth = |split| SyntheticConfig {
        n_pairs: 256,
        t: 16,
        d_in: 8,
        vocab_size: 544,
        anomaly_ratio: 0.5,
        seed: 202,
        split,
        query_modality: QueryModality::Text,
    };
    let train_corpus = generate_synthetic(&synth(Split::Train)).unwrap();
    let test_corpus = generate_synthetic(&synth(Split::Test)).unwrap();
    let train_items: Vec<&alan::datapack::PairedItem> = train_corpus.items.iter().collect();

    let config = TrainConfig { epochs: 15, ..planted_train_config() };
    let mut init = rng::stream(config.seed, "init");
    let mut model = AlanModel::new(planted_model_config(544), &mut init).unwrap();
    train(&mut model, &train_items, &train_items, &config).unwrap();

    let mut directed = 0usize;
    let mut abnormal = 0usize;
    for item in &test_corpus.items {
        if item.label != 1 {
            continue;
        }
        let mask = item.truth_anomaly_mask.as_ref().expect("abnormal items carry a mask");
        let proj = model.video.object.project(&item.object.data_f64());
        let (scores, _) = model.video_detector.score_clips(&proj, &mut Mode::Eval).unwrap();
        let (mut inside, mut n_inside, mut outside, mut n_outside) = (0.0, 0usize, 0.0, 0usize);
        for (&score, &in_window) in scores.scores().iter().zip(mask) {
            if in_window {
                inside += score;
                n_inside += 1;
            } else {
                outside += score;
                n_outside += 1;
            }
        }
        assert!(n_inside > 0 && n_outside > 0, "degenerate truth window");
        abnormal += 1;
        if inside / n_inside as f64 > outside / n_outside as f64 {
            directed += 1;
        }
    }
    let fraction = directed as f64 / abnormal as f64;
    assert!(
        fraction >= 0.9,
        "only {directed}/{abnormal} held-out abnormal items scored higher inside truth windows"
    );
    println!(
        "PASS detector direction: {directed}/{abnormal} held-out abnormal items \
         ({:.1}%) score higher inside truth windows",
        100.0 * fraction
    );
}

// ---------------------------------------------------------------------------
// 9. Determinism
// ---------------------------------------------------------------------------

#[test]
fn c9_same_seed_reproduces_checkpoints_and_reports() {
    let corpus = planted_corpus();
    let items: Vec<&alan::datapack::PairedItem> = corpus.items.iter().collect();
    let config = TrainConfig { epochs: 3, ..planted_train_config() };

    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str| -> (Vec<u8>, RetrievalReport) {
        let mut init = rng::stream(config.seed, "init");
        let mut model = AlanModel::new(planted_model_config(128), &mut init).unwrap();
        train(&mut model, &items, &items, &config).unwrap();
        let path = dir.path().join(name);
        model.save(&path).unwrap();
        let report = evaluate(
            &model,
            &items,
            config.sampling_policy(),
            config.effective_alpha(model.config.alpha),
            config.seed,
        )
        .unwrap();
        (std::fs::read(&path).unwrap(), report)
    };

    let (bytes_a, report_a) = run("first.ckpt");
    let (bytes_b, report_b) = run("second.ckpt");
    assert_eq!(bytes_a, bytes_b, "checkpoints differ between identical runs");
    assert_eq!(report_a.query_to_video, report_b.query_to_video);
    assert_eq!(report_a.video_to_query, report_b.video_to_query);
    assert_eq!(report_a.sum_r.to_bits(), report_b.sum_r.to_bits());
    assert_eq!(report_a.gallery_size, report_b.gallery_size);
    println!(
        "PASS determinism: {} checkpoint bytes identical, reports identical (SumR {:.2})",
        bytes_a.len(),
        report_a.sum_r
    );
}
