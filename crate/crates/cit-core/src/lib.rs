//! Curation-in-training engine.
//!
//! A contrastive dual-tower model (frozen vision side, trainable text side)
//! is trained on pairs selected from a noisy stream. Selection scores each
//! candidate's text against task metadata using the text tower currently
//! being trained, so curation and training feed each other.
//!
//! The crate is `no_std` with `alloc`; file formats, the CLI and wall-clock
//! timing live in the `cit` crate.

#![cfg_attr(not(test), no_std)]
#![forbid(unsafe_code)]

extern crate alloc;

pub mod curation;
pub mod data;
pub mod driver;
pub mod error;
pub mod eval;
pub mod gradcheck;
pub mod linalg;
pub mod loss;
pub mod model;
pub mod trainer;

pub use driver::{
    run_cit, Clock, CurationMode, Event, FrozenClock, RunAbort, RunOutcome, RunSettings,
    TelemetryRow, ValidationConfig,
};
pub use error::{Error, Result};
pub use linalg::{cosine_sim_matrix, l2_normalize, Matrix};
pub use loss::{bidirectional_clip_loss, img2txt_infonce, LossGrad, Objective};
pub use model::{init_params, Batch, Dims, FeatureStage, ModelParams, OptimState, ScheduleConfig};
