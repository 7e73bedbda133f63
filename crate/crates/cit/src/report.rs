//! CSV outputs: run telemetry, curated-data coverage, sweep summaries.

use std::path::Path;

use cit_core::eval::CoverageStats;
use cit_core::TelemetryRow;
use serde::Serialize;

use crate::error::{CliError, Result};
use crate::jsonl::create;

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> CliError + '_ {
    move |e| CliError::Io {
        path: path.to_path_buf(),
        source: e.into(),
    }
}

fn write_rows<T: Serialize>(path: &Path, rows: impl IntoIterator<Item = T>) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    for row in rows {
        w.serialize(row).map_err(csv_err(path))?;
    }
    w.flush().map_err(|e| CliError::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

#[derive(Serialize)]
struct TelemetryCsv {
    event: &'static str,
    step: u64,
    ratio: Option<f64>,
    fallback: Option<u8>,
    loss: Option<f64>,
    val_acc: Option<f64>,
    tau: f64,
    ms: u64,
}

/// Header `event,step,ratio,fallback,loss,val_acc,tau,ms`; fields that do
/// not apply to a row are left empty.
pub fn write_telemetry(path: &Path, rows: &[TelemetryRow]) -> Result<()> {
    // explicit header so that an empty run still gets one
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(create(path)?);
    w.write_record([
        "event", "step", "ratio", "fallback", "loss", "val_acc", "tau", "ms",
    ])
    .map_err(csv_err(path))?;
    for r in rows {
        w.serialize(TelemetryCsv {
            event: r.event.as_str(),
            step: r.step,
            ratio: r.ratio,
            fallback: r.fallback.map(u8::from),
            loss: r.loss,
            val_acc: r.val_acc,
            tau: r.tau,
            ms: r.ms,
        })
        .map_err(csv_err(path))?;
    }
    w.flush().map_err(|e| CliError::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

#[derive(Serialize)]
struct CoverageCsv<'a> {
    class_id: u32,
    name: &'a str,
    count: usize,
    keep_rate: f64,
}

pub fn write_coverage(path: &Path, stats: &CoverageStats) -> Result<()> {
    write_rows(
        path,
        stats.per_class.iter().map(|c| CoverageCsv {
            class_id: c.class_id,
            name: &c.name,
            count: c.count,
            keep_rate: c.keep_rate(),
        }),
    )
}

/// One sweep cell. Accuracy fields are empty for aborted runs and
/// `avg_ratio` is empty when the run never curated.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub param_value: f64,
    pub seed: u64,
    pub final_acc: Option<f64>,
    pub best_acc: Option<f64>,
    pub steps: u64,
    pub avg_ratio: Option<f64>,
}

pub fn write_sweep(path: &Path, rows: &[SweepRow]) -> Result<()> {
    write_rows(path, rows)
}
