//! Command-line front end: synthetic corpora, training, retrieval
//! evaluation, sampler demos and gradient audits.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use alan::datapack::{
    generate_pack, read_blob, read_pack, CorpusManifest, PairedItem, QueryModality, Split,
    SyntheticConfig,
};
use alan::detector::AnomalyScoreVector;
use alan::eval::{evaluate, RetrievalReport};
use alan::model::{gradient_audit, AlanModel};
use alan::rng;
use alan::sampler::{roulette_select, selection_probabilities};
use alan::trainer::{curve_table, train, ExperimentConfig};

#[derive(Parser)]
#[command(name = "alan", version, about = "Anomaly-led cross-modal video retrieval")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic feature pack on disk.
    GenData {
        /// Directory to write the pack into (created if missing).
        #[arg(long)]
        out: PathBuf,
        /// Number of (video, query) pairs.
        #[arg(long, default_value_t = 32)]
        pairs: usize,
        /// Clips per video.
        #[arg(long, default_value_t = 32)]
        clips: usize,
        /// Raw feature width of the video streams.
        #[arg(long, default_value_t = 8)]
        dim: usize,
        /// Vocabulary capacity of the caption generator.
        #[arg(long, default_value_t = 128)]
        vocab: usize,
        /// Fraction of items labeled anomalous.
        #[arg(long, default_value_t = 0.5)]
        anomaly_ratio: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Split tag recorded in the manifest.
        #[arg(long, value_enum, default_value_t = SplitArg::Train)]
        split: SplitArg,
        /// Query modality of the generated pairs.
        #[arg(long, value_enum, default_value_t = ModalityArg::Text)]
        modality: ModalityArg,
    },
    /// Train a model on a feature pack and write a checkpoint.
    Train {
        /// Training pack directory.
        #[arg(long)]
        data: PathBuf,
        /// JSON experiment configuration (model and training sections).
        #[arg(long)]
        config: PathBuf,
        /// Seed override; falls back to the seed in the configuration.
        #[arg(long)]
        seed: Option<u64>,
        /// Checkpoint output path.
        #[arg(long)]
        out: PathBuf,
        /// Validation pack directory (defaults to the training pack).
        #[arg(long)]
        val: Option<PathBuf>,
        /// Also write the epoch table to this file.
        #[arg(long)]
        curve: Option<PathBuf>,
    },
    /// Evaluate a checkpoint on a feature pack and print retrieval metrics.
    Eval {
        /// Evaluation pack directory.
        #[arg(long)]
        data: PathBuf,
        /// JSON experiment configuration the checkpoint was trained with.
        #[arg(long)]
        config: PathBuf,
        /// Checkpoint file to load.
        #[arg(long)]
        checkpoint: PathBuf,
        /// Seed override for the evaluation sampling streams.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Demonstrate anomaly-led clip selection from a score blob.
    Sample {
        /// Length-T score blob (a single row or column of values in [0, 1]).
        #[arg(long)]
        scores: PathBuf,
        /// Clips per draw.
        #[arg(long, default_value_t = 3)]
        n: usize,
        /// Softmax temperature.
        #[arg(long, default_value_t = 1.0)]
        tau: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Monte-Carlo draws behind the frequency table.
        #[arg(long, default_value_t = 10_000)]
        draws: usize,
    },
    /// Audit analytic gradients of every loss path against central
    /// differences.
    Gradcheck {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Independently seeded instances per path.
        #[arg(long, default_value_t = 10)]
        instances: usize,
        /// Relative-error pass threshold.
        #[arg(long, default_value_t = 1e-4)]
        tolerance: f64,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum SplitArg {
    Train,
    Test,
}

impl From<SplitArg> for Split {
    fn from(s: SplitArg) -> Self {
        match s {
            SplitArg::Train => Split::Train,
            SplitArg::Test => Split::Test,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ModalityArg {
    Text,
    Audio,
}

impl From<ModalityArg> for QueryModality {
    fn from(m: ModalityArg) -> Self {
        match m {
            ModalityArg::Text => QueryModality::Text,
            ModalityArg::Audio => QueryModality::Audio,
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(1)
        }
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::GenData { out, pairs, clips, dim, vocab, anomaly_ratio, seed, split, modality } => {
            gen_data(GenDataArgs {
                out,
                config: SyntheticConfig {
                    n_pairs: pairs,
                    t: clips,
                    d_in: dim,
                    vocab_size: vocab,
                    anomaly_ratio,
                    seed,
                    split: split.into(),
                    query_modality: modality.into(),
                },
            })
        }
        Command::Train { data, config, seed, out, val, curve } => {
            train_cmd(&data, &config, seed, &out, val.as_deref(), curve.as_deref())
        }
        Command::Eval { data, config, checkpoint, seed } => {
            eval_cmd(&data, &config, &checkpoint, seed)
        }
        Command::Sample { scores, n, tau, seed, draws } => sample_cmd(&scores, n, tau, seed, draws),
        Command::Gradcheck { seed, instances, tolerance } => gradcheck_cmd(seed, instances, tolerance),
    }
}

struct GenDataArgs {
    out: PathBuf,
    config: SyntheticConfig,
}

fn gen_data(args: GenDataArgs) -> Result<()> {
    let manifest_path = generate_pack(&args.config, &args.out)
        .with_context(|| format!("generating a pack in {}", args.out.display()))?;
    println!(
        "wrote {} pairs ({} clips x {} dims, seed {}) to {}",
        args.config.n_pairs,
        args.config.t,
        args.config.d_in,
        args.config.seed,
        manifest_path.display()
    );
    Ok(())
}

fn load_experiment(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading configuration {}", path.display()))?;
    let experiment: ExperimentConfig = serde_json::from_str(&text)
        .with_context(|| format!("parsing configuration {}", path.display()))?;
    experiment.validate().context("invalid configuration")?;
    Ok(experiment)
}

fn load_items(path: &Path) -> Result<CorpusManifest> {
    read_pack(path).with_context(|| format!("reading pack {}", path.display()))
}

fn train_cmd(
    data: &Path,
    config: &Path,
    seed: Option<u64>,
    out: &Path,
    val: Option<&Path>,
    curve: Option<&Path>,
) -> Result<()> {
    let mut experiment = load_experiment(config)?;
    if let Some(seed) = seed {
        experiment.train.seed = seed;
    }
    let train_pack = load_items(data)?;
    let val_pack = val.map(load_items).transpose()?;
    let train_items: Vec<&PairedItem> = train_pack.items.iter().collect();
    let val_items: Vec<&PairedItem> =
        val_pack.as_ref().unwrap_or(&train_pack).items.iter().collect();

    let mut init = rng::stream(experiment.train.seed, "init");
    let mut model = AlanModel::new(experiment.model.clone(), &mut init)?;
    let outcome = train(&mut model, &train_items, &val_items, &experiment.train)?;

    let table = curve_table(&outcome.curve);
    print!("{table}");
    if let Some(curve_path) = curve {
        std::fs::write(curve_path, &table)
            .with_context(|| format!("writing curve table {}", curve_path.display()))?;
    }
    model.save(out).with_context(|| format!("writing checkpoint {}", out.display()))?;

    match &outcome.best {
        Some(best) => println!(
            "best epoch {} with validation SumR {:.2}{}",
            best.epoch,
            best.sum_r,
            if outcome.stopped_early { " (stopped early)" } else { "" }
        ),
        None => println!("no epoch completed"),
    }
    println!("checkpoint written to {}", out.display());
    if outcome.diverged {
        bail!("training diverged; the checkpoint holds the last stable parameters");
    }
    Ok(())
}

fn eval_cmd(data: &Path, config: &Path, checkpoint: &Path, seed: Option<u64>) -> Result<()> {
    let experiment = load_experiment(config)?;
    let pack = load_items(data)?;
    let items: Vec<&PairedItem> = pack.items.iter().collect();

    let eval_seed = seed.unwrap_or(experiment.train.seed);
    let mut init = rng::stream(eval_seed, "init");
    let mut model = AlanModel::new(experiment.model.clone(), &mut init)?;
    model
        .load(checkpoint)
        .with_context(|| format!("loading checkpoint {}", checkpoint.display()))?;

    let alpha = experiment.train.effective_alpha(model.config.alpha);
    let report = evaluate(&model, &items, experiment.train.sampling_policy(), alpha, eval_seed)?;
    print!("{}", report_table(&report));
    println!();
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(())
}

/// Render a report as the aligned table the terminal shows.
fn report_table(report: &RetrievalReport) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "{:<16}{:>8}{:>8}{:>8}{:>8}\n",
        "direction", "R@1", "R@5", "R@10", "MdR"
    ));
    for (name, m) in
        [("query-to-video", &report.query_to_video), ("video-to-query", &report.video_to_query)]
    {
        out.push_str(&format!(
            "{:<16}{:>8.2}{:>8.2}{:>8.2}{:>8.1}\n",
            name, m.r1, m.r5, m.r10, m.mdr
        ));
    }
    out.push_str(&format!(
        "SumR {:.2} | gallery {} | {:.6} s/pair\n",
        report.sum_r, report.gallery_size, report.per_pair_seconds
    ));
    out
}

fn sample_cmd(scores: &Path, n: usize, tau: f64, seed: u64, draws: usize) -> Result<()> {
    let blob = read_blob(scores)
        .with_context(|| format!("reading score blob {}", scores.display()))?;
    let values: Vec<f64> = if blob.ncols() == 1 || blob.nrows() == 1 {
        blob.iter().map(|&v| v as f64).collect()
    } else {
        bail!("score blob must be a single row or column, got {}x{}", blob.nrows(), blob.ncols());
    };
    let scores = AnomalyScoreVector::new(values)?;
    let dist = selection_probabilities(scores.scores(), tau)?;

    let mut rng = rng::stream(seed, "sample");
    let selected = roulette_select(&dist, n, &mut rng)?;
    println!("selected clips (1-based): {:?}", selected.indices);

    let mut counts = vec![0usize; dist.len()];
    for _ in 0..draws {
        for index in roulette_select(&dist, n, &mut rng)?.indices {
            counts[index - 1] += 1;
        }
    }
    let total = (draws * n) as f64;
    println!("{:>5} {:>8} {:>12} {:>12}", "clip", "score", "probability", "empirical");
    for (i, (&score, &p)) in scores.scores().iter().zip(dist.probabilities()).enumerate() {
        let empirical = if draws == 0 { 0.0 } else { counts[i] as f64 / total };
        println!("{:>5} {:>8.4} {:>12.6} {:>12.6}", i + 1, score, p, empirical);
    }
    Ok(())
}

fn gradcheck_cmd(seed: u64, instances: usize, tolerance: f64) -> Result<()> {
    let audits = gradient_audit(seed, instances, tolerance)?;
    let mut all_passed = true;
    for audit in &audits {
        all_passed &= audit.passed();
        println!(
            "{}  worst {:>10.3e} (tolerance {:.0e}, {} entries x {} instances)  {}",
            if audit.passed() { "PASS" } else { "FAIL" },
            audit.worst_rel_err,
            audit.tolerance,
            audit.entries,
            audit.instances,
            audit.path
        );
    }
    if !all_passed {
        bail!("at least one gradient audit failed");
    }
    println!("all gradient audits passed");
    Ok(())
}
