//! Outer loop: alternate curation and training until the step budget is
//! spent, validating periodically with optional early stopping.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::curation::{CurationConfig, Curator, Metadata};
use crate::data::{RecordSource, TrainPair};
use crate::error::{config_err, Error, Result};
use crate::eval::{accuracy, EvalSet};
use crate::model::{ModelParams, OptimState};
use crate::trainer::{train_on_curated, TrainConfig};

/// Where training data comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CurationMode {
    /// Curate with the current weights before every round.
    #[default]
    Online,
    /// Curate the whole run's data once, with the initial weights.
    Offline,
    /// Train on the raw stream.
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ValidationConfig {
    /// Steps between validations; a multiple of the curation cadence.
    pub interval: u64,
    pub early_stop: bool,
}

impl Default for ValidationConfig {
    fn default() -> Self {
        Self {
            interval: 500,
            early_stop: true,
        }
    }
}

/// Everything the loop needs besides data and initial weights.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct RunSettings {
    pub mode: CurationMode,
    pub curation: CurationConfig,
    pub train: TrainConfig,
    pub validation: ValidationConfig,
}

impl RunSettings {
    pub fn validate(&self) -> Result<()> {
        self.curation.validate()?;
        self.train.validate()?;
        let v = &self.validation;
        if v.interval == 0 || !v.interval.is_multiple_of(self.train.cadence) {
            return Err(config_err(
                "validation interval must be a positive multiple of cadence",
            ));
        }
        if self.curation.expected_pairs != self.train.pairs_per_round() {
            return Err(config_err(alloc::format!(
                "expected_pairs ({}) must equal cadence x batch_size ({})",
                self.curation.expected_pairs,
                self.train.pairs_per_round()
            )));
        }
        Ok(())
    }

    /// Sets the cadence and keeps `expected_pairs` in step with it.
    pub fn set_cadence(&mut self, cadence: u64) {
        self.train.cadence = cadence;
        self.curation.expected_pairs = self.train.pairs_per_round();
    }

    pub fn set_batch_size(&mut self, batch_size: usize) {
        self.train.batch_size = batch_size;
        self.curation.expected_pairs = self.train.pairs_per_round();
    }
}

/// Millisecond time source for telemetry.
pub trait Clock {
    fn now_ms(&mut self) -> u64;
}

/// Always reads zero; makes telemetry byte-reproducible.
#[derive(Debug, Clone, Copy, Default)]
pub struct FrozenClock;

impl Clock for FrozenClock {
    fn now_ms(&mut self) -> u64 {
        0
    }
}

/// Telemetry event kinds, in their within-step order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Event {
    Train,
    Validation,
    Curation,
}

impl Event {
    pub fn as_str(self) -> &'static str {
        match self {
            Event::Train => "train",
            Event::Validation => "validation",
            Event::Curation => "curation",
        }
    }
}

/// One telemetry record. Fields that do not apply to the event are `None`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TelemetryRow {
    pub event: Event,
    /// Optimizer steps completed when the event was recorded.
    pub step: u64,
    pub ratio: Option<f64>,
    pub fallback: Option<bool>,
    pub loss: Option<f64>,
    pub val_acc: Option<f64>,
    /// Logit scale `exp(log_tau)`.
    pub tau: f64,
    pub ms: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub params: ModelParams,
    pub telemetry: Vec<TelemetryRow>,
    pub steps: u64,
    /// Accuracy of the returned parameters.
    pub final_accuracy: f64,
    /// Best accuracy over periodic validations and the final evaluation.
    pub best_accuracy: f64,
    pub early_stopped: bool,
    /// Frozen backbones unchanged at the end of the run.
    pub frozen_intact: bool,
}

impl RunOutcome {
    /// Mean over curation rounds of the per-round threshold ratio.
    pub fn average_ratio(&self) -> Option<f64> {
        average_ratio(&self.telemetry)
    }
}

pub fn average_ratio(telemetry: &[TelemetryRow]) -> Option<f64> {
    let r: Vec<f64> = telemetry
        .iter()
        .filter(|r| r.event == Event::Curation)
        .filter_map(|r| r.ratio)
        .collect();
    if r.is_empty() {
        None
    } else {
        Some(r.iter().sum::<f64>() / r.len() as f64)
    }
}

/// A run that stopped on an error, with the telemetry gathered so far.
#[derive(Debug, Clone, PartialEq)]
pub struct RunAbort {
    pub error: Error,
    pub telemetry: Vec<TelemetryRow>,
    pub steps: u64,
}

struct Loop<'a, C: Clock> {
    settings: RunSettings,
    params: ModelParams,
    optim: OptimState,
    metadata: &'a Metadata,
    eval: &'a EvalSet,
    clock: &'a mut C,
    start_ms: u64,
    telemetry: Vec<TelemetryRow>,
    steps: u64,
    validations: Vec<f64>,
    early_stopped: bool,
}

impl<C: Clock> Loop<'_, C> {
    fn row(&mut self, event: Event) -> TelemetryRow {
        TelemetryRow {
            event,
            step: self.steps,
            ratio: None,
            fallback: None,
            loss: None,
            val_acc: None,
            tau: self.params.trainable.logit_scale(),
            ms: self.clock.now_ms().saturating_sub(self.start_ms),
        }
    }

    fn remaining(&self) -> u64 {
        self.settings.train.budget - self.steps
    }

    /// Trains on at most one round of data, then validates if due.
    /// Returns `false` once the loop should end.
    fn train_round(&mut self, pairs: &[TrainPair]) -> Result<bool> {
        let steps = self.settings.train.cadence.min(self.remaining());
        let take = (steps as usize * self.settings.train.batch_size).min(pairs.len());
        let report = train_on_curated(
            &mut self.params,
            &mut self.optim,
            &pairs[..take],
            &self.settings.train,
        )?;
        self.steps += report.steps_used;
        let mut row = self.row(Event::Train);
        row.loss = Some(report.mean_loss);
        self.telemetry.push(row);

        if self.steps.is_multiple_of(self.settings.validation.interval) {
            let acc = accuracy(&self.params, self.eval, self.metadata)?;
            let mut row = self.row(Event::Validation);
            row.val_acc = Some(acc);
            self.telemetry.push(row);
            let stop = self.settings.validation.early_stop
                && self.validations.last().is_some_and(|&prev| acc <= prev);
            self.validations.push(acc);
            if stop {
                self.early_stopped = true;
                return Ok(false);
            }
        }
        Ok(self.steps < self.settings.train.budget)
    }

    fn record_curation(&mut self, ratio: f64, fallback: bool) {
        let mut row = self.row(Event::Curation);
        row.ratio = Some(ratio);
        row.fallback = Some(fallback);
        self.telemetry.push(row);
    }

    fn run(&mut self, source: &mut dyn RecordSource) -> Result<()> {
        let s = self.settings.train.pairs_per_round();
        match self.settings.mode {
            CurationMode::Online => {
                let mut curator = Curator::new(self.settings.curation.clone())?;
                loop {
                    let out = curator.curate_n(&self.params, source, self.metadata, s)?;
                    self.record_curation(out.ratio(), out.fallback_count > 0);
                    if !self.train_round(&out.curated)? {
                        break;
                    }
                }
            }
            CurationMode::Offline => {
                let cadence = self.settings.train.cadence;
                let rounds = self.settings.train.budget.div_ceil(cadence) as usize;
                let mut curator = Curator::new(self.settings.curation.clone())?;
                let out = curator.curate_n(&self.params, source, self.metadata, rounds * s)?;
                self.record_curation(out.ratio(), out.fallback_count > 0);
                for chunk in out.curated.chunks(s) {
                    if !self.train_round(chunk)? {
                        break;
                    }
                }
            }
            CurationMode::None => loop {
                let pairs = source.next_pair_batch(s)?;
                if !self.train_round(&pairs)? {
                    break;
                }
            },
        }
        Ok(())
    }
}

/// Runs the full curation/training loop from `params`.
pub fn run_cit<C: Clock>(
    settings: &RunSettings,
    params: ModelParams,
    source: &mut dyn RecordSource,
    metadata: &Metadata,
    eval: &EvalSet,
    clock: &mut C,
) -> core::result::Result<RunOutcome, RunAbort> {
    let abort = |error: Error| RunAbort {
        error,
        telemetry: Vec::new(),
        steps: 0,
    };
    settings.validate().map_err(abort)?;
    metadata.validate(params.dims.raw_txt_dim).map_err(abort)?;
    eval.check_labels(metadata).map_err(abort)?;

    let mut settings = settings.clone();
    settings.train.schedule.total_steps = settings.train.budget;
    let fingerprint = params.frozen.fingerprint();
    let start_ms = clock.now_ms();
    let optim = OptimState::new(&params.trainable);
    let mut lp = Loop {
        settings,
        params,
        optim,
        metadata,
        eval,
        clock,
        start_ms,
        telemetry: Vec::new(),
        steps: 0,
        validations: Vec::new(),
        early_stopped: false,
    };
    if let Err(error) = lp.run(source) {
        return Err(RunAbort {
            error,
            telemetry: lp.telemetry,
            steps: lp.steps,
        });
    }

    let validated_last = lp
        .telemetry
        .last()
        .is_some_and(|r| r.event == Event::Validation);
    let final_accuracy = if validated_last {
        *lp.validations.last().unwrap_or(&0.0)
    } else {
        match accuracy(&lp.params, lp.eval, lp.metadata) {
            Ok(a) => a,
            Err(error) => {
                return Err(RunAbort {
                    error,
                    telemetry: lp.telemetry,
                    steps: lp.steps,
                })
            }
        }
    };
    let best_accuracy = lp
        .validations
        .iter()
        .copied()
        .fold(final_accuracy, f64::max);
    Ok(RunOutcome {
        frozen_intact: lp.params.frozen.fingerprint() == fingerprint,
        params: lp.params,
        telemetry: lp.telemetry,
        steps: lp.steps,
        final_accuracy,
        best_accuracy,
        early_stopped: lp.early_stopped,
    })
}
