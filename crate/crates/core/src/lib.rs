//! Metric-learning toolkit for deepfake-detection experiments: online-mined
//! triplet losses on top of softmax cross-entropy, attribution label spaces,
//! balanced multi-dataset sampling, a toy encoder trained with AdamW under a
//! warmup-cosine schedule, and video-level AUC/bACC evaluation.

pub mod checkpoint;
pub mod error;
pub mod eval;
pub mod ingest;
pub mod losses;
pub mod mining;
pub mod model;
pub mod network;
pub mod sampler;
pub mod trainer;

pub use error::{Error, Result};
