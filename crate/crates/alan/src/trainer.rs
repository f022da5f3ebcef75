//! Joint training of the full model: per-epoch shuffled batches, the
//! combined alignment + detector + masked-phrase objective, Adam with an
//! exact multiplicative learning-rate decay, gradient clipping, early
//! stopping on validation retrieval quality, and divergence rollback.
//!
//! All randomness flows from four named streams of the run seed — data
//! order, dropout, clip sampling, and phrase masking — so a (config, seed)
//! pair reproduces parameters bit for bit.

use ndarray::ArrayD;
use serde::{Deserialize, Serialize};

use crate::datapack::PairedItem;
use crate::eval::{evaluate, RetrievalReport};
use crate::model::{AlanModel, LossBreakdown, LossConfig, ModelConfig, SamplingPolicy};
use crate::nn::optim::Adam;
use crate::nn::Mode;
use crate::nn::params::ParamModule;
use crate::vpmpm::MaskMode;
use crate::{rng, Error, Result};

/// Which similarity level drives both training and retrieval.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlignmentMode {
    /// Global level only (fusion weight pinned to 1).
    Cls,
    /// Mean-pooled level only (fusion weight pinned to 0).
    Avg,
    /// Convex mix of both levels at the model's configured weight.
    Both,
}

/// Optimization schedule and ablation switches.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub batch_size: usize,
    /// Base learning rate; epoch e runs at `learning_rate * decay^e`.
    pub learning_rate: f64,
    pub lr_decay: f64,
    /// λ1: weight of the top-k detector loss.
    pub lambda_topk: f64,
    /// λ2: weight of the masked-phrase loss.
    pub lambda_mpm: f64,
    pub epochs: usize,
    /// Stop after this many consecutive epochs without a validation
    /// improvement.
    pub patience: usize,
    pub seed: u64,
    /// Anomaly-led sampling for the R block; off falls back to fixed random
    /// sampling.
    pub use_as: bool,
    /// Fixed uniform sampling for the U block; off makes U anomaly-led too.
    pub use_fs: bool,
    pub use_vpmpm: bool,
    pub mask_mode: MaskMode,
    pub alignment_mode: AlignmentMode,
    /// Ranking margin Δ.
    pub margin: f64,
    /// Global gradient-norm ceiling.
    pub grad_clip: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 64,
            learning_rate: 5e-5,
            lr_decay: 0.95,
            lambda_topk: 0.1,
            lambda_mpm: 0.01,
            epochs: 30,
            patience: 5,
            seed: 0,
            use_as: true,
            use_fs: true,
            use_vpmpm: true,
            mask_mode: MaskMode::Phrases,
            alignment_mode: AlignmentMode::Both,
            margin: 0.05,
            grad_clip: 1.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size < 2 {
            return Err(Error::Config(format!(
                "batch size {} too small; ranking needs at least 2 items",
                self.batch_size
            )));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!("learning rate {} must be > 0", self.learning_rate)));
        }
        if !(self.lr_decay > 0.0 && self.lr_decay <= 1.0) {
            return Err(Error::Config(format!("decay {} outside (0, 1]", self.lr_decay)));
        }
        if self.lambda_topk < 0.0 || self.lambda_mpm < 0.0 {
            return Err(Error::Config("loss weights must be nonnegative".into()));
        }
        if self.epochs == 0 {
            return Err(Error::Config("at least one epoch required".into()));
        }
        if self.patience == 0 {
            return Err(Error::Config("patience must be at least 1".into()));
        }
        if self.margin < 0.0 {
            return Err(Error::Config(format!("margin {} must be >= 0", self.margin)));
        }
        if !(self.grad_clip > 0.0) {
            return Err(Error::Config(format!("gradient ceiling {} must be > 0", self.grad_clip)));
        }
        Ok(())
    }

    /// Learning rate for epoch `e` (0-based): base · decay^e.
    pub fn learning_rate_at(&self, epoch: usize) -> f64 {
        self.learning_rate * self.lr_decay.powi(epoch as i32)
    }

    /// Which sampler feeds each token block.
    pub fn sampling_policy(&self) -> SamplingPolicy {
        SamplingPolicy { fixed_u: self.use_fs, anomaly_led_r: self.use_as }
    }

    /// Fusion weight after resolving the alignment-mode switch.
    pub fn effective_alpha(&self, model_alpha: f64) -> f64 {
        match self.alignment_mode {
            AlignmentMode::Cls => 1.0,
            AlignmentMode::Avg => 0.0,
            AlignmentMode::Both => model_alpha,
        }
    }

    /// Per-step loss settings implied by this schedule.
    pub fn loss_config(&self, model_alpha: f64) -> LossConfig {
        LossConfig {
            margin: self.margin,
            alpha: self.effective_alpha(model_alpha),
            lambda_topk: self.lambda_topk,
            lambda_mpm: self.lambda_mpm,
            use_vpmpm: self.use_vpmpm,
            mask_mode: self.mask_mode,
        }
    }
}

/// Model construction plus optimization schedule; the on-disk experiment
/// config mirrors this struct as JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct ExperimentConfig {
    pub model: ModelConfig,
    pub train: TrainConfig,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.train.validate()
    }
}

/// One epoch of the loss curve: batch-averaged loss terms plus the
/// validation retrieval outcome.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub learning_rate: f64,
    pub align: f64,
    pub topk: f64,
    pub mpm: f64,
    pub total: f64,
    pub validation_sum_r: f64,
}

/// The epoch that won on validation SumR.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BestEpoch {
    pub epoch: usize,
    pub sum_r: f64,
    pub report: RetrievalReport,
}

/// Training outcome: loss curve and how the run ended. The trained model is
/// left holding the best parameters by validation SumR, or the last finite
/// parameters after a divergence rollback; `best` is absent only when the
/// run diverged before completing a single epoch.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainOutcome {
    pub curve: Vec<EpochRecord>,
    pub best: Option<BestEpoch>,
    pub stopped_early: bool,
    pub diverged: bool,
}

fn snapshot(model: &AlanModel) -> Vec<ArrayD<f64>> {
    model.params().iter().map(|p| p.value().clone()).collect()
}

fn restore(model: &mut AlanModel, saved: &[ArrayD<f64>]) {
    for (param, value) in model.params_mut().into_iter().zip(saved) {
        param.value_mut().assign(value);
    }
}

/// Optimize `model` on `train_items`, validating on `val_items` after every
/// epoch (pass the training set itself for overfit experiments). Trailing
/// shuffle remainders smaller than 2 items are skipped because the ranking
/// loss needs in-batch negatives.
pub fn train(
    model: &mut AlanModel,
    train_items: &[&PairedItem],
    val_items: &[&PairedItem],
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    config.validate()?;
    if train_items.len() < 2 {
        return Err(Error::Validation(format!(
            "training needs at least 2 paired items, got {}",
            train_items.len()
        )));
    }
    if val_items.is_empty() {
        return Err(Error::Validation("validation set is empty".into()));
    }
    let batch_size = config.batch_size.min(train_items.len());
    let policy = config.sampling_policy();
    let loss_cfg = config.loss_config(model.config.alpha);

    let mut adam = Adam::new(config.learning_rate);
    let mut u_rng = rng::stream(config.seed, "fs");
    let mut r_rng = rng::stream(config.seed, "as");
    let mut mask_rng = rng::stream(config.seed, "mask");
    let mut drop_rng = rng::stream(config.seed, "dropout");

    let mut curve = Vec::new();
    let mut last_good = snapshot(model);
    let mut best: Option<(BestEpoch, Vec<ArrayD<f64>>)> = None;
    let mut since_improvement = 0;
    let mut stopped_early = false;
    let mut diverged = false;

    'epochs: for epoch in 0..config.epochs {
        adam.set_lr(config.learning_rate_at(epoch));

        // Fixed per-epoch data order from its own indexed stream.
        let mut order: Vec<usize> = (0..train_items.len()).collect();
        let mut order_rng = rng::indexed_stream(config.seed, "order", epoch as u64);
        for i in (1..order.len()).rev() {
            order.swap(i, rand::Rng::random_range(&mut order_rng, 0..=i));
        }

        let mut sums = LossBreakdown { align: 0.0, topk: 0.0, mpm: 0.0, total: 0.0 };
        let mut n_batches = 0usize;
        for chunk in order.chunks(batch_size) {
            if chunk.len() < 2 {
                continue;
            }
            let batch: Vec<&PairedItem> = chunk.iter().map(|&i| train_items[i]).collect();
            let step = (|| -> Result<LossBreakdown> {
                let plans = model.plan_batch(&batch, policy, &mut u_rng, &mut r_rng)?;
                let (breakdown, cache) = model.batch_loss(
                    &batch,
                    &plans,
                    &loss_cfg,
                    &mut mask_rng,
                    &mut Mode::Train(&mut drop_rng),
                )?;
                model.zero_grads();
                model.batch_backward(&cache)?;
                Adam::clip_global_norm(&mut model.params_mut(), config.grad_clip);
                adam.step(&mut model.params_mut())?;
                Ok(breakdown)
            })();
            let breakdown = match step {
                Ok(b) if b.total.is_finite() => b,
                Ok(_) | Err(Error::NonFinite(_)) => {
                    restore(model, &last_good);
                    diverged = true;
                    break 'epochs;
                }
                Err(other) => return Err(other),
            };
            sums.align += breakdown.align;
            sums.topk += breakdown.topk;
            sums.mpm += breakdown.mpm;
            sums.total += breakdown.total;
            n_batches += 1;
        }
        if n_batches == 0 {
            return Err(Error::Validation("epoch produced no usable batch".into()));
        }

        let report = evaluate(model, val_items, policy, loss_cfg.alpha, config.seed)?;
        let n = n_batches as f64;
        curve.push(EpochRecord {
            epoch,
            learning_rate: config.learning_rate_at(epoch),
            align: sums.align / n,
            topk: sums.topk / n,
            mpm: sums.mpm / n,
            total: sums.total / n,
            validation_sum_r: report.sum_r,
        });
        last_good = snapshot(model);

        if best.as_ref().map_or(true, |(b, _)| report.sum_r > b.sum_r) {
            best = Some((BestEpoch { epoch, sum_r: report.sum_r, report }, snapshot(model)));
            since_improvement = 0;
        } else {
            since_improvement += 1;
            if since_improvement >= config.patience {
                stopped_early = true;
                break;
            }
        }
    }

    let best = best.map(|(record, saved)| {
        if !diverged {
            restore(model, &saved);
        }
        record
    });
    Ok(TrainOutcome { curve, best, stopped_early, diverged })
}

/// Plain-text loss-curve table.
pub fn curve_table(records: &[EpochRecord]) -> String {
    let mut out = String::from(
        "epoch      lr        align      topk       mpm        total      val SumR\n",
    );
    for r in records {
        out.push_str(&format!(
            "{:<5}  {:<9.3e}  {:<9.5}  {:<9.5}  {:<9.5}  {:<9.5}  {:<8.2}\n",
            r.epoch, r.learning_rate, r.align, r.topk, r.mpm, r.total, r.validation_sum_r
        ));
    }
    out
}
