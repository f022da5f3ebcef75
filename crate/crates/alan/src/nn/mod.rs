//! Minimal neural-network toolkit: parameter tensors, transformer building
//! blocks with hand-written backward passes, Adam, finite-difference gradient
//! checking and binary parameter snapshots.
//!
//! Every layer exposes `forward(...) -> (output, cache)` and
//! `backward(&mut self, &cache, upstream) -> input_gradient`; backward passes
//! accumulate into each parameter's `grad` buffer so a batch can sum
//! contributions before an optimizer step.

pub mod attention;
pub mod blocks;
pub mod checkpoint;
pub mod dropout;
pub mod embedding;
pub mod geu;
pub mod gradcheck;
pub mod linear;
pub mod norm;
pub mod ops;
pub mod optim;
pub mod params;

pub use attention::MultiHeadAttention;
pub use blocks::{CrossAttentionBlock, DecoderLayer, EncoderLayer, FeedForward};
pub use dropout::Dropout;
pub use embedding::Embedding;
pub use geu::GatedEmbeddingUnit;
pub use gradcheck::{grad_check, GradCheckReport};
pub use linear::Linear;
pub use norm::LayerNorm;
pub use optim::Adam;
pub use params::{ParamModule, ParamTensor};

use rand_chacha::ChaCha8Rng;

/// Execution mode threaded through every forward pass.
///
/// Train mode carries the RNG that feeds dropout; eval mode is fully
/// deterministic and never consumes randomness, so the two cannot be mixed up
/// by forgetting a flag.
pub enum Mode<'a> {
    Train(&'a mut ChaCha8Rng),
    Eval,
}

impl Mode<'_> {
    /// True when gradients/noise layers should be active.
    pub fn is_train(&self) -> bool {
        matches!(self, Mode::Train(_))
    }
}
