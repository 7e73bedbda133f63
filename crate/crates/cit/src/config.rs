//! Run configuration: one JSON document, with command-line overrides applied
//! on top.

use std::path::{Path, PathBuf};

use cit_core::curation::CurationConfig;
use cit_core::data::CorpusParams;
use cit_core::loss::Objective;
use cit_core::trainer::TrainConfig;
use cit_core::{CurationMode, Dims, FeatureStage, RunSettings, ScheduleConfig, ValidationConfig};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

/// Every random draw in a run comes from one of these.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Seeds {
    /// Concept directions, metadata prompts and the eval set.
    pub spec_seed: u64,
    /// Order of the raw record stream.
    pub stream_seed: u64,
    /// Model initialization.
    pub init_seed: u64,
}

impl Default for Seeds {
    fn default() -> Self {
        Self {
            spec_seed: 1,
            stream_seed: 2,
            init_seed: 3,
        }
    }
}

impl Seeds {
    /// The `i`-th seed triple of a multi-seed experiment.
    pub fn offset(self, i: u64) -> Self {
        Self {
            spec_seed: self.spec_seed + i,
            stream_seed: self.stream_seed + i,
            init_seed: self.init_seed + i,
        }
    }
}

/// Seed of the held-out eval set drawn alongside a synthetic corpus.
pub fn eval_seed(spec_seed: u64) -> u64 {
    spec_seed ^ 0x9e37_79b9_7f4a_7c15
}

/// Files replacing the synthetic corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataFiles {
    pub corpus: PathBuf,
    pub metadata: PathBuf,
    pub eval: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seeds: Seeds,
    /// Synthetic corpus, used when `data` is absent.
    pub corpus: CorpusParams,
    pub data: Option<DataFiles>,
    /// Held-out items drawn for a synthetic corpus.
    pub eval_size: usize,
    pub model: Dims,
    pub mode: CurationMode,
    pub curation: CurationConfig,
    pub train: TrainConfig,
    pub validation: ValidationConfig,
    pub out_dir: PathBuf,
    /// Record elapsed milliseconds in telemetry; off gives reproducible files.
    pub wall_clock: bool,
}

impl Default for RunConfig {
    /// The default synthetic benchmark.
    fn default() -> Self {
        let batch_size = 64;
        let cadence = 20;
        Self {
            seeds: Seeds::default(),
            corpus: CorpusParams::default(),
            data: None,
            eval_size: 800,
            model: Dims {
                raw_img_dim: 32,
                raw_txt_dim: 32,
                backbone_dim: 32,
                hidden_dim: 32,
                embed_dim: 16,
            },
            mode: CurationMode::Online,
            curation: CurationConfig {
                threshold: 0.55,
                min_ratio: 0.05,
                expected_pairs: batch_size * cadence as usize,
                ..Default::default()
            },
            train: TrainConfig {
                batch_size,
                objective: Objective::Img2txt,
                schedule: ScheduleConfig {
                    base_lr: 1.5e-4,
                    ..Default::default()
                },
                budget: 600,
                cadence,
            },
            validation: ValidationConfig::default(),
            out_dir: PathBuf::from("cit-run"),
            wall_clock: true,
        }
    }
}

/// Command-line overrides; `None` keeps the config value.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub mode: Option<CurationMode>,
    pub objective: Option<Objective>,
    pub threshold: Option<f64>,
    pub gamma: Option<f64>,
    pub cadence: Option<u64>,
    pub feature: Option<FeatureStage>,
    pub out_dir: Option<PathBuf>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::config(format!("cannot read {}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::config(format!("{}: {e}", path.display())))
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(m) = o.mode {
            self.mode = m;
        }
        if let Some(obj) = o.objective {
            self.train.objective = obj;
        }
        if let Some(t) = o.threshold {
            self.curation.threshold = t;
        }
        if let Some(g) = o.gamma {
            self.curation.min_ratio = g;
        }
        if let Some(c) = o.cadence {
            self.set_cadence(c);
        }
        if let Some(f) = o.feature {
            self.curation.feature_stage = f;
        }
        if let Some(d) = &o.out_dir {
            self.out_dir = d.clone();
        }
    }

    /// Changes the cadence, keeping pairs per round and the validation
    /// interval consistent with it.
    pub fn set_cadence(&mut self, cadence: u64) {
        self.train.cadence = cadence;
        self.curation.expected_pairs = self.train.pairs_per_round();
        if cadence > 0 && !self.validation.interval.is_multiple_of(cadence) {
            self.validation.interval = self.validation.interval.div_ceil(cadence).max(1) * cadence;
        }
    }

    pub fn settings(&self) -> RunSettings {
        RunSettings {
            mode: self.mode,
            curation: self.curation.clone(),
            train: self.train.clone(),
            validation: self.validation.clone(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.settings().validate()?;
        if self.data.is_none() {
            self.corpus.validate()?;
            if self.eval_size == 0 {
                return Err(CliError::config("eval_size must be >= 1"));
            }
            if (self.corpus.raw_img_dim, self.corpus.raw_txt_dim)
                != (self.model.raw_img_dim, self.model.raw_txt_dim)
            {
                return Err(CliError::config(
                    "corpus raw dims must match model raw dims",
                ));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_is_valid_and_round_trips() {
        let c = RunConfig::default();
        c.validate().unwrap();
        let json = serde_json::to_string(&c).unwrap();
        assert_eq!(serde_json::from_str::<RunConfig>(&json).unwrap(), c);
    }

    #[test]
    fn partial_documents_fill_defaults() {
        let c: RunConfig =
            serde_json::from_str(r#"{"mode":"none","curation":{"threshold":0.7}}"#).unwrap();
        assert_eq!(c.mode, CurationMode::None);
        assert_eq!(c.curation.threshold, 0.7);
        assert_eq!(c.curation.raw_batch, 512);
        assert_eq!(c.train, RunConfig::default().train);
    }

    #[test]
    fn unknown_fields_are_rejected() {
        assert!(serde_json::from_str::<RunConfig>(r#"{"mdoe":"none"}"#).is_err());
    }

    #[test]
    fn flags_win_over_the_document() {
        let mut c = RunConfig::default();
        c.apply(&Overrides {
            threshold: Some(0.6),
            cadence: Some(30),
            ..Default::default()
        });
        assert_eq!(c.curation.threshold, 0.6);
        assert_eq!(c.curation.expected_pairs, 30 * 64);
        assert_eq!(c.validation.interval, 510);
        c.validate().unwrap();
    }
}
