//! Machine-readable outputs.
//!
//! * `report.json`: the [`ExperimentReport`]; byte-identical for identical
//!   configurations.
//! * `timing.json`: wall time and thread count, kept apart so the report
//!   stays deterministic.
//! * `runs.csv`: `trial, round, min_n_v, err_norm`.
//! * `rates.csv`: `quantity, predicted, empirical, ci_lo, ci_hi`.
//! * `trace.jsonl` and `summary.csv` when a trace was requested.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::graph::Graph;

use super::config::ExperimentConfig;
use super::experiment::{Experiment, HarnessError, RateEstimate, RateRow, TailEstimate, TrialOutcome, TrialSummary};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphInfo {
    pub nodes: usize,
    pub edges: usize,
    pub max_degree: usize,
    pub diameter: Option<usize>,
}

impl GraphInfo {
    pub fn of(g: &Graph) -> Self {
        Self {
            nodes: g.n(),
            edges: g.edge_count(),
            max_degree: g.max_degree(),
            diameter: g.diameter(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub config_hash: String,
    pub crate_version: String,
    pub config: ExperimentConfig,
    pub graph: GraphInfo,
    pub eps: f64,
    pub eps_star: f64,
    /// Noiseless rate `μ(W)` at `eps`.
    pub mu: f64,
    pub rate: RateEstimate,
    pub rates: Vec<RateRow>,
    pub tails: Vec<TailEstimate>,
    /// Monte Carlo `E‖x(t) − r1‖²` per round and its standard error.
    pub mse: Vec<f64>,
    pub mse_se: Vec<f64>,
    pub trials: Vec<TrialSummary>,
}

impl ExperimentReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub config_hash: String,
    pub wall_seconds: f64,
    pub threads: usize,
}

#[derive(Serialize)]
struct RunRow {
    trial: usize,
    round: usize,
    min_n_v: usize,
    err_norm: f64,
}

pub fn write_runs_csv<W: Write>(outcomes: &[TrialOutcome], out: W) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    if outcomes.is_empty() {
        w.write_record(["trial", "round", "min_n_v", "err_norm"])?;
    }
    for o in outcomes {
        for (round, (&min_n_v, &e)) in o.min_n_v.iter().zip(&o.err_sq).enumerate() {
            w.serialize(RunRow {
                trial: o.trial,
                round,
                min_n_v,
                err_norm: e.sqrt(),
            })?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_rates_csv<W: Write>(rows: &[RateRow], out: W) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    if rows.is_empty() {
        w.write_record(["quantity", "predicted", "empirical", "ci_lo", "ci_hi"])?;
    }
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Write every artifact into `dir`, returning the paths written.
pub fn emit_report(exp: &Experiment, dir: &Path) -> Result<Vec<PathBuf>, HarnessError> {
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    let mut create = |name: &str| -> Result<BufWriter<File>, HarnessError> {
        let path = dir.join(name);
        let f = File::create(&path)?;
        written.push(path);
        Ok(BufWriter::new(f))
    };

    let mut f = create("report.json")?;
    f.write_all(exp.report.to_json().as_bytes())?;
    f.write_all(b"\n")?;
    f.flush()?;

    let timing = Timing {
        config_hash: exp.report.config_hash.clone(),
        wall_seconds: exp.wall_seconds,
        threads: rayon::current_num_threads(),
    };
    let mut f = create("timing.json")?;
    serde_json::to_writer_pretty(&mut f, &timing)?;
    f.write_all(b"\n")?;
    f.flush()?;

    write_runs_csv(&exp.outcomes, create("runs.csv")?)?;
    write_rates_csv(&exp.report.rates, create("rates.csv")?)?;

    if let Some(run) = &exp.trace {
        let mut f = create("trace.jsonl")?;
        run.write_trace_jsonl(&mut f)?;
        f.flush()?;
        run.write_summary_csv(create("summary.csv")?)?;
    }
    Ok(written)
}
