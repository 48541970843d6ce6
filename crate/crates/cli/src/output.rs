//! CSV and JSON artifacts. Floats are written with 17 significant digits
//! (`{:.16e}`), so identical runs give identical bytes.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;

use crate::commands::{ConditionInfo, Outcome, QuadratureInfo};
use crate::config::RunConfig;
use crate::{CliError, Command};

pub fn num(v: f64) -> String {
    format!("{v:.16e}")
}

/// `<out>.summary.json`.
pub fn summary_path(out: &Path) -> PathBuf {
    let mut name = out.as_os_str().to_owned();
    name.push(".summary.json");
    PathBuf::from(name)
}

#[derive(Debug, Serialize)]
pub struct Timings {
    pub setup_seconds: f64,
    pub evaluate_seconds: f64,
    pub total_seconds: f64,
}

#[derive(Debug, Serialize)]
pub struct Summary<'a> {
    pub command: &'static str,
    pub version: &'static str,
    pub config: &'a RunConfig,
    pub output: String,
    pub columns: &'a [String],
    pub rows: usize,
    pub passed: Option<bool>,
    pub quadrature: Option<&'a QuadratureInfo>,
    pub condition: &'a ConditionInfo,
    pub warnings: &'a [String],
    pub threads: usize,
    pub timings: Timings,
}

fn write_csv<W: Write>(sink: W, outcome: &Outcome) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(&outcome.columns)?;
    for row in &outcome.rows {
        w.write_record(row)?;
    }
    w.flush()?;
    Ok(())
}

fn io_error(context: String) -> impl FnOnce(csv::Error) -> CliError {
    move |e| CliError::Io { context, source: e.into() }
}

/// Write the CSV (to `--out`, else stdout, except for verify which prints
/// its table instead) and, with `--out`, the JSON summary.
pub fn emit(command: Command, cfg: &RunConfig, outcome: &Outcome, start: Instant) -> Result<(), CliError> {
    if let Some(report) = &outcome.report {
        print!("{report}");
    }
    let Some(out) = &cfg.out else {
        if outcome.report.is_none() {
            write_csv(io::stdout().lock(), outcome).map_err(io_error("writing to stdout".into()))?;
        }
        return Ok(());
    };
    let file = File::create(out).map_err(|e| CliError::Io { context: format!("cannot create {}", out.display()), source: e })?;
    write_csv(BufWriter::new(file), outcome).map_err(io_error(format!("writing {}", out.display())))?;

    let summary = Summary {
        command: command.name(),
        version: env!("CARGO_PKG_VERSION"),
        config: cfg,
        output: out.display().to_string(),
        columns: &outcome.columns,
        rows: outcome.rows.len(),
        passed: outcome.passed,
        quadrature: outcome.quadrature.as_ref(),
        condition: &outcome.condition,
        warnings: &outcome.warnings,
        threads: rayon::current_num_threads(),
        timings: Timings {
            setup_seconds: outcome.setup_seconds,
            evaluate_seconds: outcome.evaluate_seconds,
            total_seconds: start.elapsed().as_secs_f64(),
        },
    };
    let path = summary_path(out);
    let mut text = serde_json::to_string_pretty(&summary).expect("summary serializes");
    text.push('\n');
    std::fs::write(&path, text).map_err(|e| CliError::Io { context: format!("cannot write {}", path.display()), source: e })
}
