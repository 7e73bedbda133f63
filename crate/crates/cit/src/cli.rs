//! Argument parsing and dispatch for the `cit` binary.

use std::path::PathBuf;

use cit_core::data::CorpusParams;
use cit_core::loss::Objective;
use cit_core::{CurationMode, FeatureStage};
use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::commands::{self, SweepParam};
use crate::config::{Overrides, RunConfig};
use crate::error::{CliError, Result};
use crate::jsonl::read_json;

/// Parses a lowercase enum name the same way config files spell it.
fn parse_name<T: DeserializeOwned>(s: &str) -> std::result::Result<T, String> {
    serde_json::from_value(serde_json::Value::String(s.to_owned())).map_err(|e| e.to_string())
}

#[derive(Debug, Parser)]
#[command(
    name = "cit",
    version,
    about = "Contrastive training with online data curation"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic corpus with its metadata and eval set.
    GenData(GenDataArgs),
    /// Train one configuration.
    Run(RunArgs),
    /// Zero-shot accuracy of a checkpoint.
    Eval(EvalArgs),
    /// Run a grid of one parameter over several seeds.
    Sweep(SweepArgs),
    /// Per-class coverage of what a checkpoint would keep.
    Coverage(CoverageArgs),
}

#[derive(Debug, Args)]
pub struct GenDataArgs {
    /// Corpus parameters as JSON; defaults when omitted.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub n: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, default_value_t = 800)]
    pub eval_n: usize,
}

#[derive(Debug, Args)]
pub struct RunOverrides {
    #[arg(long, value_parser = parse_name::<CurationMode>)]
    pub mode: Option<CurationMode>,
    #[arg(long, value_parser = parse_name::<Objective>)]
    pub objective: Option<Objective>,
    /// Curation threshold.
    #[arg(long)]
    pub t: Option<f64>,
    /// Minimum kept fraction per raw batch.
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub cadence: Option<u64>,
    #[arg(long, value_parser = parse_name::<FeatureStage>)]
    pub feature: Option<FeatureStage>,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

impl RunOverrides {
    fn to_overrides(&self) -> Overrides {
        Overrides {
            mode: self.mode,
            objective: self.objective,
            threshold: self.t,
            gamma: self.gamma,
            cadence: self.cadence,
            feature: self.feature,
            out_dir: self.out_dir.clone(),
        }
    }
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Run configuration JSON; the built-in benchmark when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub overrides: RunOverrides,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub metadata: PathBuf,
    #[arg(long)]
    pub eval: PathBuf,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// One of t, gamma, cadence, budget, base_lr.
    #[arg(long)]
    pub param: String,
    /// Comma-separated values.
    #[arg(long)]
    pub values: String,
    #[arg(long, default_value_t = 3)]
    pub seeds: u64,
    #[command(flatten)]
    pub overrides: RunOverrides,
}

#[derive(Debug, Args)]
pub struct CoverageArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub metadata: PathBuf,
    #[arg(long)]
    pub t: f64,
    #[arg(long, value_parser = parse_name::<FeatureStage>, default_value = "pooled")]
    pub feature: FeatureStage,
    /// Score only the first N records.
    #[arg(long)]
    pub limit: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

fn load_config(path: Option<&PathBuf>, o: &RunOverrides) -> Result<RunConfig> {
    let mut cfg = match path {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    cfg.apply(&o.to_overrides());
    Ok(cfg)
}

fn print_json<T: Serialize>(v: &T) {
    println!("{}", serde_json::to_string(v).expect("summary serializes"));
}

/// Runs one parsed command, printing a one-line JSON summary on success.
pub fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenData(a) => {
            let params: CorpusParams = match &a.spec {
                Some(p) => read_json(p).map_err(|e| CliError::config(e.to_string()))?,
                None => CorpusParams::default(),
            };
            let outs = commands::gen_data(&params, &a.out, a.n, a.seed, a.eval_n)?;
            print_json(&serde_json::json!({
                "records": a.n,
                "corpus": outs.corpus,
                "metadata": outs.metadata,
                "eval": outs.eval,
                "spec": outs.spec,
            }));
        }
        Command::Run(a) => {
            let cfg = load_config(a.config.as_ref(), &a.overrides)?;
            print_json(&commands::run(&cfg)?);
        }
        Command::Eval(a) => print_json(&commands::eval(&a.checkpoint, &a.metadata, &a.eval)?),
        Command::Sweep(a) => {
            let param: SweepParam = a.param.parse()?;
            let values = commands::parse_values(&a.values)?;
            let cfg = load_config(a.config.as_ref(), &a.overrides)?;
            let (path, rows) = commands::sweep(&cfg, param, &values, a.seeds)?;
            print_json(&serde_json::json!({ "summary": path, "runs": rows.len() }));
        }
        Command::Coverage(a) => {
            let stats = commands::coverage(
                &a.checkpoint,
                &a.corpus,
                &a.metadata,
                a.t,
                a.feature,
                a.limit,
                &a.out,
            )?;
            print_json(&serde_json::json!({
                "total": stats.total,
                "keep_rate": stats.keep_rate,
                "pairs_per_class": stats.pairs_per_class,
                "out": a.out,
            }));
        }
    }
    Ok(())
}
