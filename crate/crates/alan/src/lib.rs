//! Anomaly-led cross-modal retrieval over long untrimmed videos.
//!
//! The crate implements the full pipeline: packed feature corpora on disk, a
//! weakly supervised anomaly detector, anomaly-led clip sampling, symmetric
//! dual-stream video/text/audio encoders, a masked-phrase pretext task, dual
//! (clip-level and frame-level) similarity fusion, a training loop with
//! hand-rolled gradients, and rank-based retrieval evaluation.
//!
//! Everything is deterministic given a seed: data generation, sampling,
//! dropout, masking and initialization each draw from their own named RNG
//! stream, so training runs and evaluation reports reproduce bit for bit.

pub mod alignment;
pub mod datapack;
pub mod detector;
pub mod encoders;
mod error;
pub mod eval;
pub mod model;
pub mod nn;
pub mod rng;
pub mod sampler;
pub mod trainer;
pub mod vpmpm;

pub use error::{Error, Result};
