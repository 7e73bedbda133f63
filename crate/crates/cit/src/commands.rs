//! Subcommand implementations, callable without going through argv.

use std::fs::OpenOptions;
use std::path::{Path, PathBuf};
use std::time::Instant;

use cit_core::curation::Metadata;
use cit_core::data::{
    CorpusParams, PairRecord, RecordSource, SyntheticCorpusSpec, SyntheticStream,
};
use cit_core::eval::{accuracy, coverage_stats, score_texts, CoverageStats, EvalSet};
use cit_core::linalg::Matrix;
use cit_core::{init_params, run_cit, Clock, FeatureStage, FrozenClock, RunAbort, RunOutcome};
use serde::Serialize;

use crate::checkpoint::{read_checkpoint, write_checkpoint};
use crate::config::{eval_seed, RunConfig};
use crate::error::{io_err, CliError, Result};
use crate::jsonl::{
    read_corpus, read_eval, read_metadata, write_corpus, write_eval, write_json, JsonlStream,
};
use crate::report::{write_coverage, write_sweep, write_telemetry, SweepRow};

/// Milliseconds since construction.
pub struct WallClock(Instant);

impl WallClock {
    pub fn new() -> Self {
        WallClock(Instant::now())
    }
}

impl Default for WallClock {
    fn default() -> Self {
        Self::new()
    }
}

impl Clock for WallClock {
    fn now_ms(&mut self) -> u64 {
        self.0.elapsed().as_millis() as u64
    }
}

/// Paths written by `gen-data` next to the corpus file.
#[derive(Debug, Clone, PartialEq)]
pub struct GenDataOutputs {
    pub corpus: PathBuf,
    pub metadata: PathBuf,
    pub eval: PathBuf,
    pub spec: PathBuf,
}

impl GenDataOutputs {
    pub fn for_corpus(out: &Path) -> Self {
        let stem = out.file_stem().and_then(|s| s.to_str()).unwrap_or("corpus");
        let sibling = |suffix: &str| out.with_file_name(format!("{stem}.{suffix}"));
        Self {
            corpus: out.to_path_buf(),
            metadata: sibling("metadata.json"),
            eval: sibling("eval.jsonl"),
            spec: sibling("spec.json"),
        }
    }
}

/// Writes `n` stream records plus the matching metadata, eval set and full
/// corpus spec. `seed` seeds both the concept directions and the stream.
pub fn gen_data(
    params: &CorpusParams,
    out: &Path,
    n: usize,
    seed: u64,
    eval_n: usize,
) -> Result<GenDataOutputs> {
    if n == 0 {
        return Err(CliError::config("--n must be >= 1"));
    }
    if eval_n == 0 {
        return Err(CliError::config("--eval-n must be >= 1"));
    }
    let spec = SyntheticCorpusSpec::generate(params, seed, seed)?;
    let mut stream = SyntheticStream::new(spec.clone())?;
    let records: Vec<PairRecord> = stream.next_raw_batch(n)?;
    let outs = GenDataOutputs::for_corpus(out);
    write_corpus(&outs.corpus, &records)?;
    write_json(&outs.metadata, &spec.metadata())?;
    write_eval(&outs.eval, &spec.eval_set(eval_n, eval_seed(seed))?)?;
    write_json(&outs.spec, &spec)?;
    Ok(outs)
}

/// Result line printed by `run`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub final_acc: f64,
    pub best_acc: f64,
    pub steps: u64,
    pub avg_ratio: Option<f64>,
    pub early_stopped: bool,
    pub source_exhaustions: u64,
    pub out_dir: PathBuf,
}

/// Telemetry and checkpoint file names inside a run directory.
pub const TELEMETRY_FILE: &str = "telemetry.csv";
pub const CHECKPOINT_FILE: &str = "checkpoint.bin";
pub const CONFIG_FILE: &str = "config.json";
const LOCK_FILE: &str = "run.lock";

struct RunLock(PathBuf);

impl RunLock {
    fn acquire(dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(dir).map_err(io_err(dir))?;
        let path = dir.join(LOCK_FILE);
        OpenOptions::new()
            .write(true)
            .create_new(true)
            .open(&path)
            .map_err(|e| {
                if e.kind() == std::io::ErrorKind::AlreadyExists {
                    CliError::config(format!(
                        "{} exists: another run owns this directory (delete it if stale)",
                        path.display()
                    ))
                } else {
                    io_err(&path)(e)
                }
            })?;
        Ok(RunLock(path))
    }
}

impl Drop for RunLock {
    fn drop(&mut self) {
        let _ = std::fs::remove_file(&self.0);
    }
}

/// Everything a run reads besides the config.
pub struct RunInputs {
    pub source: Box<dyn RecordSource>,
    pub metadata: Metadata,
    pub eval: EvalSet,
}

pub fn load_inputs(cfg: &RunConfig) -> Result<RunInputs> {
    match &cfg.data {
        None => {
            let spec = SyntheticCorpusSpec::generate(
                &cfg.corpus,
                cfg.seeds.spec_seed,
                cfg.seeds.stream_seed,
            )?;
            Ok(RunInputs {
                metadata: spec.metadata(),
                eval: spec.eval_set(cfg.eval_size, eval_seed(cfg.seeds.spec_seed))?,
                source: Box::new(SyntheticStream::new(spec)?),
            })
        }
        Some(files) => {
            let stream = JsonlStream::open(&files.corpus, cfg.seeds.stream_seed)?;
            if stream.dims() != (cfg.model.raw_img_dim, cfg.model.raw_txt_dim) {
                return Err(CliError::config(format!(
                    "corpus record dims {:?} do not match model raw dims",
                    stream.dims()
                )));
            }
            Ok(RunInputs {
                source: Box::new(stream),
                metadata: read_metadata(&files.metadata)?,
                eval: read_eval(&files.eval)?,
            })
        }
    }
}

/// Runs one configuration into `cfg.out_dir`. Telemetry is written even when
/// the run aborts.
pub fn run(cfg: &RunConfig) -> Result<RunSummary> {
    cfg.validate()?;
    let mut inputs = load_inputs(cfg)?;
    let dir = &cfg.out_dir;
    let _lock = RunLock::acquire(dir)?;
    write_json(&dir.join(CONFIG_FILE), cfg)?;

    let params = init_params(cfg.seeds.init_seed, &cfg.model)?;
    let settings = cfg.settings();
    let result = if cfg.wall_clock {
        run_cit(
            &settings,
            params,
            inputs.source.as_mut(),
            &inputs.metadata,
            &inputs.eval,
            &mut WallClock::new(),
        )
    } else {
        run_cit(
            &settings,
            params,
            inputs.source.as_mut(),
            &inputs.metadata,
            &inputs.eval,
            &mut FrozenClock,
        )
    };
    let out: RunOutcome = match result {
        Ok(o) => o,
        Err(RunAbort {
            error, telemetry, ..
        }) => {
            write_telemetry(&dir.join(TELEMETRY_FILE), &telemetry)?;
            return Err(error.into());
        }
    };
    write_telemetry(&dir.join(TELEMETRY_FILE), &out.telemetry)?;
    write_checkpoint(
        &dir.join(CHECKPOINT_FILE),
        &out.params,
        cfg.seeds.init_seed,
        out.steps,
    )?;
    if !out.frozen_intact {
        return Err(CliError::Core(cit_core::Error::Source(
            "frozen backbone changed during training".into(),
        )));
    }
    Ok(RunSummary {
        final_acc: out.final_accuracy,
        best_acc: out.best_accuracy,
        steps: out.steps,
        avg_ratio: out.average_ratio(),
        early_stopped: out.early_stopped,
        source_exhaustions: inputs.source.exhaustion_count(),
        out_dir: dir.clone(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalSummary {
    pub accuracy: f64,
    pub n: usize,
}

pub fn eval(checkpoint: &Path, metadata: &Path, eval_file: &Path) -> Result<EvalSummary> {
    let (params, _) = read_checkpoint(checkpoint)?;
    let metadata = read_metadata(metadata)?;
    metadata.validate(params.dims.raw_txt_dim)?;
    let eval = read_eval(eval_file)?;
    eval.check_labels(&metadata)?;
    Ok(EvalSummary {
        accuracy: accuracy(&params, &eval, &metadata)?,
        n: eval.len(),
    })
}

/// Scores the first `limit` corpus texts (all when `None`) and writes the
/// per-class coverage CSV.
pub fn coverage(
    checkpoint: &Path,
    corpus: &Path,
    metadata: &Path,
    threshold: f64,
    stage: FeatureStage,
    limit: Option<usize>,
    out: &Path,
) -> Result<CoverageStats> {
    let (params, _) = read_checkpoint(checkpoint)?;
    let metadata = read_metadata(metadata)?;
    metadata.validate(params.dims.raw_txt_dim)?;
    let mut records = read_corpus(corpus)?;
    if let Some(n) = limit {
        records.truncate(n);
    }
    if records.is_empty() {
        return Err(CliError::config(
            "coverage needs at least one corpus record",
        ));
    }
    let raw = Matrix::from_rows(&records.iter().map(|r| &r.raw_txt).collect::<Vec<_>>())?;
    let scored = score_texts(&params, &metadata, &raw, stage)?;
    let stats = coverage_stats(&scored, &metadata, threshold)?;
    write_coverage(out, &stats)?;
    Ok(stats)
}

/// Parameters a sweep can vary.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepParam {
    Threshold,
    Gamma,
    Cadence,
    Budget,
    BaseLr,
}

impl std::str::FromStr for SweepParam {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "t" | "threshold" => SweepParam::Threshold,
            "gamma" => SweepParam::Gamma,
            "cadence" => SweepParam::Cadence,
            "budget" => SweepParam::Budget,
            "base_lr" | "lr" => SweepParam::BaseLr,
            _ => {
                return Err(CliError::config(format!(
                    "unknown sweep parameter {s:?} (expected t, gamma, cadence, budget or base_lr)"
                )))
            }
        })
    }
}

impl SweepParam {
    pub fn name(self) -> &'static str {
        match self {
            SweepParam::Threshold => "t",
            SweepParam::Gamma => "gamma",
            SweepParam::Cadence => "cadence",
            SweepParam::Budget => "budget",
            SweepParam::BaseLr => "base_lr",
        }
    }

    fn apply(self, cfg: &mut RunConfig, v: f64) -> Result<()> {
        let count = |v: f64| {
            if v >= 1.0 && v.fract() == 0.0 && v <= u32::MAX as f64 {
                Ok(v as u64)
            } else {
                Err(CliError::config(format!(
                    "{} must be a positive integer, got {v}",
                    self.name()
                )))
            }
        };
        match self {
            SweepParam::Threshold => cfg.curation.threshold = v,
            SweepParam::Gamma => cfg.curation.min_ratio = v,
            SweepParam::Cadence => cfg.set_cadence(count(v)?),
            SweepParam::Budget => cfg.train.budget = count(v)?,
            SweepParam::BaseLr => {
                cfg.train.schedule.base_lr = v;
                cfg.train.schedule.min_lr = cfg.train.schedule.min_lr.min(v);
            }
        }
        Ok(())
    }
}

/// Parses a comma-separated list, dropping repeats but keeping first-seen
/// order.
pub fn parse_values(list: &str) -> Result<Vec<f64>> {
    let mut out: Vec<f64> = Vec::new();
    for tok in list.split(',').map(str::trim).filter(|t| !t.is_empty()) {
        let v: f64 = tok
            .parse()
            .map_err(|_| CliError::config(format!("not a number: {tok:?}")))?;
        if !v.is_finite() {
            return Err(CliError::config(format!("not a finite number: {tok:?}")));
        }
        if !out.contains(&v) {
            out.push(v);
        }
    }
    if out.is_empty() {
        return Err(CliError::config("--values is empty"));
    }
    Ok(out)
}

/// Runs every `(value, seed)` cell into its own directory under
/// `base.out_dir` and writes `sweep.csv` there. Cells that abort on a
/// non-finite loss are recorded with empty accuracies.
pub fn sweep(
    base: &RunConfig,
    param: SweepParam,
    values: &[f64],
    seeds: u64,
) -> Result<(PathBuf, Vec<SweepRow>)> {
    if seeds == 0 {
        return Err(CliError::config("--seeds must be >= 1"));
    }
    // reject bad cells before spending time on good ones
    let mut cells = Vec::new();
    for &v in values {
        for s in 0..seeds {
            let mut cfg = base.clone();
            param.apply(&mut cfg, v)?;
            cfg.seeds = base.seeds.offset(s);
            cfg.out_dir = base
                .out_dir
                .join("sweep")
                .join(format!("{}_{v}", param.name()))
                .join(format!("seed_{s}"));
            cfg.validate()?;
            cells.push((v, s, cfg));
        }
    }
    let mut rows = Vec::new();
    for (v, s, cfg) in cells {
        let row = match run(&cfg) {
            Ok(r) => SweepRow {
                param_value: v,
                seed: s,
                final_acc: Some(r.final_acc),
                best_acc: Some(r.best_acc),
                steps: r.steps,
                avg_ratio: r.avg_ratio,
            },
            Err(CliError::Core(cit_core::Error::NonFiniteLoss { step })) => SweepRow {
                param_value: v,
                seed: s,
                final_acc: None,
                best_acc: None,
                steps: step.saturating_sub(1),
                avg_ratio: None,
            },
            Err(e) => return Err(e),
        };
        rows.push(row);
    }
    let path = base.out_dir.join("sweep.csv");
    write_sweep(&path, &rows)?;
    Ok((path, rows))
}
