//! Inner training loop over a curated set.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::data::TrainPair;
use crate::error::{config_err, Error, Result};
use crate::linalg::Matrix;
use crate::loss::Objective;
use crate::model::{Batch, ModelParams, OptimState, ScheduleConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub objective: Objective,
    /// `total_steps` is overwritten with `budget` when a run starts.
    pub schedule: ScheduleConfig,
    /// Total optimizer steps for the run.
    pub budget: u64,
    /// Optimizer steps between curation rounds.
    pub cadence: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 64,
            objective: Objective::Img2txt,
            schedule: ScheduleConfig::default(),
            budget: 5000,
            cadence: 100,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size < 2 {
            return Err(config_err("batch_size must be >= 2"));
        }
        if self.cadence == 0 || self.budget == 0 {
            return Err(config_err("cadence and budget must be >= 1"));
        }
        self.schedule.validate()
    }

    /// Pairs consumed by one full round of `cadence` steps.
    pub fn pairs_per_round(&self) -> usize {
        self.cadence as usize * self.batch_size
    }
}

/// Summary of one call to [`train_on_curated`].
#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub steps_used: u64,
    pub mean_loss: f64,
    pub losses: Vec<f64>,
}

/// Stacks the pairs of one batch into raw image and text matrices.
pub fn assemble_batch(pairs: &[TrainPair]) -> Result<Batch> {
    Ok(Batch {
        img: Matrix::from_rows(&pairs.iter().map(|p| &p.raw_img).collect::<Vec<_>>())?,
        txt: Matrix::from_rows(&pairs.iter().map(|p| &p.raw_txt).collect::<Vec<_>>())?,
    })
}

/// One optimizer step per full batch of `curated`, in order. A trailing
/// partial batch is dropped.
pub fn train_on_curated(
    params: &mut ModelParams,
    optim: &mut OptimState,
    curated: &[TrainPair],
    config: &TrainConfig,
) -> Result<TrainReport> {
    if curated.len() < config.batch_size {
        return Err(Error::BatchTooSmall { n: curated.len() });
    }
    let mut losses = Vec::with_capacity(curated.len() / config.batch_size);
    for chunk in curated.chunks_exact(config.batch_size) {
        let batch = assemble_batch(chunk)?;
        let loss = params
            .backward_and_step(optim, &config.schedule, &batch, config.objective)
            .map_err(|e| match e {
                Error::ZeroNorm { .. } => Error::NonFiniteLoss {
                    step: optim.step() + 1,
                },
                other => other,
            })?;
        losses.push(loss);
    }
    Ok(TrainReport {
        steps_used: losses.len() as u64,
        mean_loss: losses.iter().sum::<f64>() / losses.len() as f64,
        losses,
    })
}
