//! CSV reports, single runs, sweeps and log replay.
//!
//! Files written by a run:
//!
//! * `apps.csv` - `app_id,type,benchmark,queue,submitted_s,finished_s,outcome,containers`
//! * `series.csv` - long format `series,x,value` with the series
//!   `cumulative_completion` (x in seconds, value in percent), `throughput`
//!   (x is the minute index, value is batches finished) and `concurrency`
//!   (x in seconds, value is running containers from then on)
//! * `summary.csv` - a header and one [`SummaryRow`]
//! * `events.log` - the serialized event log
//!
//! A sweep writes `cells/<spc>_<scenario>_seed<N>/summary.csv` for every cell
//! and `matrix.csv` with one [`MatrixRow`] per (spc, scenario) pair.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::engine;
use crate::error::{Error, Result};
use crate::event_log::EventLog;
use crate::metrics::MetricsReport;
use crate::queue::ScenarioKind;
use crate::scheduler::SpcKind;

pub const APPS_FILE: &str = "apps.csv";
pub const SERIES_FILE: &str = "series.csv";
pub const SUMMARY_FILE: &str = "summary.csv";
pub const LOG_FILE: &str = "events.log";
pub const MATRIX_FILE: &str = "matrix.csv";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub spc: String,
    pub scenario: String,
    pub seed: String,
    pub apps: usize,
    pub completed: usize,
    pub completion_rate: f64,
    pub turnaround_s: f64,
    pub total_containers: u64,
    pub avg_concurrent_containers: f64,
    pub mean_throughput_per_min: f64,
    pub delay_count: usize,
    pub delay_q1_s: f64,
    pub delay_median_s: f64,
    pub delay_q3_s: f64,
    pub delay_mean_s: f64,
    pub delay_stddev_s: f64,
    pub end_time_s: f64,
    pub log_sha256: String,
}

impl SummaryRow {
    pub fn new(spc: &str, scenario: &str, seed: &str, report: &MetricsReport, log: &EventLog) -> Self {
        let d = report.total_delay_stats;
        SummaryRow {
            spc: spc.to_string(),
            scenario: scenario.to_string(),
            seed: seed.to_string(),
            apps: report.apps.len(),
            completed: report.completed(),
            completion_rate: report.completion_rate,
            turnaround_s: report.turnaround_s,
            total_containers: report.total_containers_launched,
            avg_concurrent_containers: report.avg_concurrent_containers,
            mean_throughput_per_min: report.mean_throughput(),
            delay_count: d.count,
            delay_q1_s: d.q1,
            delay_median_s: d.median,
            delay_q3_s: d.q3,
            delay_mean_s: d.mean,
            delay_stddev_s: d.stddev,
            end_time_s: report.end_time.as_secs_f64(),
            log_sha256: log.digest(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatrixRow {
    pub spc: String,
    pub scenario: String,
    pub runs: usize,
    pub completion_mean: f64,
    pub completion_std: f64,
    pub turnaround_mean_s: f64,
    pub turnaround_std_s: f64,
    pub containers_mean: f64,
    pub containers_std: f64,
    pub throughput_mean: f64,
    pub throughput_std: f64,
    pub delay_median_mean_s: f64,
    pub delay_median_std_s: f64,
}

/// Mean and population standard deviation.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (0.0, 0.0);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

impl MatrixRow {
    /// Aggregates the summaries of one (spc, scenario) cell.
    pub fn aggregate(rows: &[SummaryRow]) -> MatrixRow {
        let col = |f: fn(&SummaryRow) -> f64| mean_std(&rows.iter().map(f).collect::<Vec<_>>());
        let (completion_mean, completion_std) = col(|r| r.completion_rate);
        let (turnaround_mean_s, turnaround_std_s) = col(|r| r.turnaround_s);
        let (containers_mean, containers_std) = col(|r| r.total_containers as f64);
        let (throughput_mean, throughput_std) = col(|r| r.mean_throughput_per_min);
        let (delay_median_mean_s, delay_median_std_s) = col(|r| r.delay_median_s);
        MatrixRow {
            spc: rows.first().map(|r| r.spc.clone()).unwrap_or_default(),
            scenario: rows.first().map(|r| r.scenario.clone()).unwrap_or_default(),
            runs: rows.len(),
            completion_mean,
            completion_std,
            turnaround_mean_s,
            turnaround_std_s,
            containers_mean,
            containers_std,
            throughput_mean,
            throughput_std,
            delay_median_mean_s,
            delay_median_std_s,
        }
    }
}

fn to_csv<T: Serialize>(rows: &[T]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}

pub fn read_csv<T: for<'de> Deserialize<'de>>(text: &str) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let mut out = Vec::new();
    for row in r.deserialize() {
        out.push(row?);
    }
    Ok(out)
}

pub fn summary_csv(row: &SummaryRow) -> Result<String> {
    to_csv(std::slice::from_ref(row))
}

pub fn matrix_csv(rows: &[MatrixRow]) -> Result<String> {
    to_csv(rows)
}

pub fn apps_csv(report: &MetricsReport) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "app_id",
        "type",
        "benchmark",
        "queue",
        "submitted_s",
        "finished_s",
        "outcome",
        "containers",
    ])?;
    for a in &report.apps {
        w.write_record([
            a.app.to_string(),
            a.app_type.to_string(),
            a.benchmark.clone(),
            a.queue.clone(),
            a.submitted.to_string(),
            a.finished.map(|t| t.to_string()).unwrap_or_default(),
            a.outcome.as_str().to_string(),
            a.containers.to_string(),
        ])?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}

pub fn series_csv(report: &MetricsReport) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["series", "x", "value"])?;
    for (t, pct) in &report.cumulative_completion {
        w.write_record(["cumulative_completion", &t.to_string(), &pct.to_string()])?;
    }
    for (m, n) in &report.streaming_throughput {
        w.write_record(["throughput", &m.to_string(), &n.to_string()])?;
    }
    for (t, n) in &report.concurrency {
        w.write_record(["concurrency", &t.to_string(), &n.to_string()])?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}

/// Simulates the configured run.
pub fn execute(cfg: &RunConfig) -> Result<(MetricsReport, EventLog)> {
    cfg.validate()?;
    let engine_cfg = cfg.engine_config()?;
    let workload = cfg.workload()?;
    engine::run(&engine_cfg, &workload)
}

/// Writes every file or none. The directory is created only after all
/// contents are rendered; a failed write removes the files written so far.
fn write_all(out: &Path, files: &[(PathBuf, String)]) -> Result<()> {
    let existed = out.exists();
    fs::create_dir_all(out)?;
    let mut written = Vec::new();
    for (rel, text) in files {
        let path = out.join(rel);
        let res = path
            .parent()
            .map_or(Ok(()), fs::create_dir_all)
            .and_then(|_| fs::write(&path, text));
        if let Err(e) = res {
            for p in &written {
                let _ = fs::remove_file(p);
            }
            if !existed {
                let _ = fs::remove_dir_all(out);
            }
            return Err(e.into());
        }
        written.push(path);
    }
    Ok(())
}

fn seed_label(cfg: &RunConfig) -> String {
    if cfg.run.replay.is_some() {
        "replay".to_string()
    } else {
        cfg.run.seed.to_string()
    }
}

/// Runs one simulation and writes its four report files into `out`.
pub fn run_command(cfg: &RunConfig, out: &Path) -> Result<(MetricsReport, SummaryRow)> {
    let (report, log) = execute(cfg)?;
    let row = SummaryRow::new(
        cfg.run.spc.as_str(),
        cfg.queues.scenario.as_str(),
        &seed_label(cfg),
        &report,
        &log,
    );
    let files = vec![
        (PathBuf::from(APPS_FILE), apps_csv(&report)?),
        (PathBuf::from(SERIES_FILE), series_csv(&report)?),
        (PathBuf::from(SUMMARY_FILE), summary_csv(&row)?),
        (PathBuf::from(LOG_FILE), log.to_text()),
    ];
    write_all(out, &files)?;
    Ok((report, row))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Cell {
    pub spc: SpcKind,
    pub scenario: ScenarioKind,
    pub seed: u64,
}

impl Cell {
    pub fn dir_name(&self) -> String {
        format!("{}_{}_seed{}", self.spc, self.scenario, self.seed)
    }

    pub fn config(&self, base: &RunConfig) -> RunConfig {
        let mut cfg = base.clone();
        cfg.run.spc = self.spc;
        cfg.run.seed = self.seed;
        cfg.queues.scenario = self.scenario;
        cfg.queues.queue.clear();
        cfg
    }
}

/// Every (spc, scenario, seed) combination, seeds `1..=seeds`.
pub fn sweep_cells(cfg: &RunConfig, seeds: u64) -> Vec<Cell> {
    let mut cells = Vec::new();
    for &spc in &cfg.sweep.spcs {
        for &scenario in &cfg.sweep.scenarios {
            for seed in 1..=seeds {
                cells.push(Cell { spc, scenario, seed });
            }
        }
    }
    cells
}

/// Simulates every cell, concurrently, and returns their summaries in cell order.
pub fn run_cells(cfg: &RunConfig, cells: &[Cell]) -> Result<Vec<SummaryRow>> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.sweep.parallelism)
        .build()
        .map_err(|e| Error::config("sweep.parallelism", e.to_string()))?;
    let results: Vec<Result<SummaryRow>> = pool.install(|| {
        cells
            .par_iter()
            .map(|cell| {
                let c = cell.config(cfg);
                let (report, log) = execute(&c)?;
                Ok(SummaryRow::new(
                    cell.spc.as_str(),
                    cell.scenario.as_str(),
                    &cell.seed.to_string(),
                    &report,
                    &log,
                ))
            })
            .collect()
    });
    let done = results.iter().filter(|r| r.is_ok()).count();
    let mut rows = Vec::with_capacity(results.len());
    for (cell, r) in cells.iter().zip(results) {
        match r {
            Ok(row) => rows.push(row),
            Err(e) => {
                return Err(Error::config(
                    "sweep",
                    format!(
                        "cell {} failed ({e}); {done} of {} cells completed",
                        cell.dir_name(),
                        cells.len()
                    ),
                ))
            }
        }
    }
    Ok(rows)
}

/// One matrix row per (spc, scenario), in configuration order.
pub fn aggregate(cells: &[Cell], rows: &[SummaryRow]) -> Vec<MatrixRow> {
    let mut keys: Vec<(SpcKind, ScenarioKind)> = Vec::new();
    for c in cells {
        if !keys.contains(&(c.spc, c.scenario)) {
            keys.push((c.spc, c.scenario));
        }
    }
    keys.into_iter()
        .map(|(spc, scenario)| {
            let group: Vec<SummaryRow> = cells
                .iter()
                .zip(rows)
                .filter(|(c, _)| c.spc == spc && c.scenario == scenario)
                .map(|(_, r)| r.clone())
                .collect();
            MatrixRow::aggregate(&group)
        })
        .collect()
}

/// Runs the whole sweep and writes per-cell summaries and `matrix.csv`.
pub fn sweep_command(cfg: &RunConfig, out: &Path, seeds: u64) -> Result<Vec<MatrixRow>> {
    if seeds == 0 {
        return Err(Error::config("seeds", "at least one repetition is required"));
    }
    cfg.validate()?;
    let cells = sweep_cells(cfg, seeds);
    let rows = run_cells(cfg, &cells)?;
    let matrix = aggregate(&cells, &rows);
    let mut files = Vec::with_capacity(cells.len() + 1);
    for (cell, row) in cells.iter().zip(&rows) {
        files.push((
            Path::new("cells").join(cell.dir_name()).join(SUMMARY_FILE),
            summary_csv(row)?,
        ));
    }
    files.push((PathBuf::from(MATRIX_FILE), matrix_csv(&matrix)?));
    write_all(out, &files)?;
    Ok(matrix)
}

/// Recomputes the metrics of a saved event log.
pub fn replay(log_path: &Path) -> Result<(MetricsReport, SummaryRow)> {
    let text = fs::read_to_string(log_path)?;
    let log = EventLog::parse(&text)?;
    let report = MetricsReport::from_log(&log, MetricsReport::DEFAULT_BUCKET)?;
    let row = SummaryRow::new("-", "-", "-", &report, &log);
    Ok((report, row))
}
