//! Run metrics, computed purely from an [`EventLog`].
//!
//! Because nothing here reads engine state, a saved log replays to exactly
//! the report the live run produced.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::event_log::{EventLog, LogEvent};
use crate::time::SimTime;
use crate::workload::{AppId, AppType};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Outcome {
    Completed,
    Failed,
    /// Submitted but never reached a terminal state. Only seen in truncated logs.
    Unfinished,
}

impl Outcome {
    pub fn as_str(self) -> &'static str {
        match self {
            Outcome::Completed => "completed",
            Outcome::Failed => "failed",
            Outcome::Unfinished => "unfinished",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AppOutcome {
    pub app: AppId,
    pub app_type: AppType,
    pub benchmark: String,
    pub queue: String,
    pub submitted: SimTime,
    pub finished: Option<SimTime>,
    pub outcome: Outcome,
    pub containers: u64,
}

impl AppOutcome {
    pub fn completed(&self) -> bool {
        self.outcome == Outcome::Completed
    }
}

/// Summary of per-batch delays, in seconds.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct DelayStats {
    pub count: usize,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub mean: f64,
    pub stddev: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetricsReport {
    /// Percent of all submitted applications that completed.
    pub completion_rate: f64,
    /// `(bucket boundary, percent completed so far)`.
    pub cumulative_completion: Vec<(SimTime, f64)>,
    pub turnaround_s: f64,
    pub total_containers_launched: u64,
    pub avg_concurrent_containers: f64,
    /// `(minute index, batches finished in that minute)`.
    pub streaming_throughput: Vec<(u64, u64)>,
    pub total_delay_stats: DelayStats,
    /// Running containers after each instant at which the count changed.
    pub concurrency: Vec<(SimTime, u64)>,
    pub apps: Vec<AppOutcome>,
    pub end_time: SimTime,
}

impl MetricsReport {
    pub const DEFAULT_BUCKET: SimTime = SimTime::from_secs(60);

    pub fn from_log(log: &EventLog, bucket: SimTime) -> Result<MetricsReport> {
        let apps = app_outcomes(log)?;
        let (total, avg) = system_load(log);
        Ok(MetricsReport {
            completion_rate: completion_rate(&apps),
            cumulative_completion: cumulative_completion(log, &apps, bucket)?,
            turnaround_s: turnaround(&apps).as_secs_f64(),
            total_containers_launched: total,
            avg_concurrent_containers: avg,
            streaming_throughput: streaming_throughput(log),
            total_delay_stats: total_delay_stats(log),
            concurrency: concurrency_steps(log),
            apps,
            end_time: log.end_time(),
        })
    }

    pub fn completed(&self) -> usize {
        self.apps.iter().filter(|a| a.completed()).count()
    }

    /// Mean of the per-minute throughput series, zero when there is none.
    pub fn mean_throughput(&self) -> f64 {
        if self.streaming_throughput.is_empty() {
            return 0.0;
        }
        let sum: u64 = self.streaming_throughput.iter().map(|&(_, n)| n).sum();
        sum as f64 / self.streaming_throughput.len() as f64
    }
}

fn bad(i: usize, msg: String) -> Error {
    Error::Parse { line: i + 1, msg }
}

/// Per-application outcomes, in submission order.
pub fn app_outcomes(log: &EventLog) -> Result<Vec<AppOutcome>> {
    let mut order = Vec::new();
    let mut apps: BTreeMap<AppId, AppOutcome> = BTreeMap::new();
    for (i, r) in log.records.iter().enumerate() {
        let app = match &r.event {
            LogEvent::AppSubmitted {
                app,
                app_type,
                benchmark,
                queue,
            } => {
                let prev = apps.insert(
                    *app,
                    AppOutcome {
                        app: *app,
                        app_type: *app_type,
                        benchmark: benchmark.clone(),
                        queue: queue.clone(),
                        submitted: r.time,
                        finished: None,
                        outcome: Outcome::Unfinished,
                        containers: 0,
                    },
                );
                if prev.is_some() {
                    return Err(bad(i, format!("{app} submitted twice")));
                }
                order.push(*app);
                continue;
            }
            LogEvent::ContainerStarted { app, .. } => {
                let a = apps
                    .get_mut(app)
                    .ok_or_else(|| bad(i, format!("container for unknown {app}")))?;
                a.containers += 1;
                continue;
            }
            LogEvent::AppCompleted { app, .. } | LogEvent::AppFailed { app, .. } => app,
            _ => continue,
        };
        let a = apps
            .get_mut(app)
            .ok_or_else(|| bad(i, format!("outcome for unknown {app}")))?;
        if a.outcome != Outcome::Unfinished {
            return Err(bad(i, format!("{app} terminated twice")));
        }
        a.finished = Some(r.time);
        a.outcome = match r.event {
            LogEvent::AppCompleted { .. } => Outcome::Completed,
            _ => Outcome::Failed,
        };
    }
    Ok(order
        .into_iter()
        .map(|id| apps.remove(&id).expect("recorded"))
        .collect())
}

fn percent(n: usize, total: usize) -> f64 {
    if total == 0 {
        0.0
    } else {
        n as f64 * 100.0 / total as f64
    }
}

/// Completed applications over all applications, as a percentage.
pub fn completion_rate(apps: &[AppOutcome]) -> f64 {
    percent(apps.iter().filter(|a| a.completed()).count(), apps.len())
}

/// Completion percentage at every multiple of `bucket` up to and including
/// the first boundary at or after the end of the run.
pub fn cumulative_completion(
    log: &EventLog,
    apps: &[AppOutcome],
    bucket: SimTime,
) -> Result<Vec<(SimTime, f64)>> {
    if bucket == SimTime::ZERO {
        return Err(Error::config("bucket", "bucket width must be positive"));
    }
    let mut done: Vec<SimTime> = apps
        .iter()
        .filter(|a| a.completed())
        .filter_map(|a| a.finished)
        .collect();
    done.sort();
    let end = log.end_time().as_millis();
    let buckets = end.div_ceil(bucket.as_millis());
    let mut out = Vec::with_capacity(buckets as usize + 1);
    let mut seen = 0;
    for k in 0..=buckets {
        let t = SimTime::from_millis(k * bucket.as_millis());
        while seen < done.len() && done[seen] <= t {
            seen += 1;
        }
        out.push((t, percent(seen, apps.len())));
    }
    Ok(out)
}

/// Latest termination of a non-streaming application minus the first submission.
pub fn turnaround(apps: &[AppOutcome]) -> SimTime {
    let first = apps.iter().map(|a| a.submitted).min();
    let last = apps
        .iter()
        .filter(|a| a.app_type != AppType::Streaming)
        .filter_map(|a| a.finished)
        .max();
    match (first, last) {
        (Some(f), Some(l)) => l.saturating_sub(f),
        _ => SimTime::ZERO,
    }
}

fn concurrency_steps(log: &EventLog) -> Vec<(SimTime, u64)> {
    let mut out: Vec<(SimTime, u64)> = Vec::new();
    let mut running = 0u64;
    for r in &log.records {
        match r.event {
            LogEvent::ContainerStarted { .. } => running += 1,
            LogEvent::ContainerReleased { .. } => running = running.saturating_sub(1),
            _ => continue,
        }
        match out.last_mut() {
            Some(last) if last.0 == r.time => last.1 = running,
            _ => out.push((r.time, running)),
        }
    }
    out
}

/// Total containers launched, and the time-weighted mean number running
/// between the first submission and the end of the turnaround window.
pub fn system_load(log: &EventLog) -> (u64, f64) {
    let total = log
        .records
        .iter()
        .filter(|r| matches!(r.event, LogEvent::ContainerStarted { .. }))
        .count() as u64;
    let Ok(apps) = app_outcomes(log) else {
        return (total, 0.0);
    };
    let window = turnaround(&apps);
    let Some(start) = apps.iter().map(|a| a.submitted).min() else {
        return (total, 0.0);
    };
    if window == SimTime::ZERO {
        return (total, 0.0);
    }
    let end = start + window;
    let mut area: u128 = 0;
    let mut prev_t = start;
    let mut running = 0u64;
    for (t, n) in concurrency_steps(log) {
        let t_clamped = t.clamp(start, end);
        area += running as u128 * (t_clamped - prev_t).as_millis() as u128;
        prev_t = t_clamped;
        running = n;
    }
    area += running as u128 * (end - prev_t).as_millis() as u128;
    (total, area as f64 / window.as_millis() as f64)
}

/// Batches finished in each whole minute of the run.
pub fn streaming_throughput(log: &EventLog) -> Vec<(u64, u64)> {
    const MINUTE: u64 = 60_000;
    let minutes = log.end_time().as_millis().div_ceil(MINUTE);
    let mut counts = vec![0u64; minutes as usize];
    for r in &log.records {
        if let LogEvent::BatchFinished { .. } = r.event {
            let m = (r.time.as_millis() / MINUTE) as usize;
            if m < counts.len() {
                counts[m] += 1;
            }
        }
    }
    counts
        .into_iter()
        .enumerate()
        .map(|(m, n)| (m as u64, n))
        .collect()
}

/// Finish minus arrival of every finished batch, in seconds, in finish order.
pub fn batch_delays(log: &EventLog) -> Vec<f64> {
    let mut arrived: BTreeMap<(AppId, u64), SimTime> = BTreeMap::new();
    let mut out = Vec::new();
    for r in &log.records {
        match r.event {
            LogEvent::BatchArrived { app, batch } => {
                arrived.insert((app, batch), r.time);
            }
            LogEvent::BatchFinished { app, batch } => {
                if let Some(a) = arrived.get(&(app, batch)) {
                    out.push((r.time - *a).as_secs_f64());
                }
            }
            _ => {}
        }
    }
    out
}

fn median_sorted(xs: &[f64]) -> f64 {
    let n = xs.len();
    if n == 0 {
        0.0
    } else if n % 2 == 1 {
        xs[n / 2]
    } else {
        (xs[n / 2 - 1] + xs[n / 2]) / 2.0
    }
}

/// Quartiles by the inclusive median-of-halves rule: for odd counts the
/// median belongs to both halves.
pub fn quartiles(values: &[f64]) -> (f64, f64, f64) {
    let mut xs = values.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n == 0 {
        return (0.0, 0.0, 0.0);
    }
    let half = n.div_ceil(2);
    (
        median_sorted(&xs[..half]),
        median_sorted(&xs),
        median_sorted(&xs[n - half..]),
    )
}

pub fn describe(values: &[f64]) -> DelayStats {
    if values.is_empty() {
        return DelayStats::default();
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let (q1, median, q3) = quartiles(values);
    DelayStats {
        count: values.len(),
        q1,
        median,
        q3,
        mean,
        stddev: var.sqrt(),
    }
}

pub fn total_delay_stats(log: &EventLog) -> DelayStats {
    describe(&batch_delays(log))
}
