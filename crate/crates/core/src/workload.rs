//! Application types, their container demands, and the mixed-workload generator.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::resource::Resources;
use crate::time::SimTime;

/// Input split handled by one two-stage task.
pub const SPLIT_SIZE_MB: u64 = 128;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AppType {
    TwoStage,
    Dag,
    Dcg,
    Streaming,
}

impl AppType {
    pub const ALL: [AppType; 4] = [
        AppType::TwoStage,
        AppType::Dag,
        AppType::Dcg,
        AppType::Streaming,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            AppType::TwoStage => "two-stage",
            AppType::Dag => "dag",
            AppType::Dcg => "dcg",
            AppType::Streaming => "streaming",
        }
    }
}

impl fmt::Display for AppType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AppType {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        AppType::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| Error::config("app_type", format!("unknown application type `{s}`")))
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct AppId(pub u32);

impl fmt::Display for AppId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "app{:03}", self.0)
    }
}

impl FromStr for AppId {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        s.strip_prefix("app")
            .and_then(|n| n.parse().ok())
            .map(AppId)
            .ok_or_else(|| Error::config("app_id", format!("malformed application id `{s}`")))
    }
}

/// AM and per-task container demand of one application type.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AppDemands {
    pub am: Resources,
    pub task: Resources,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DemandTable {
    pub two_stage: AppDemands,
    pub dag: AppDemands,
    pub dcg: AppDemands,
    pub streaming: AppDemands,
}

impl DemandTable {
    pub fn get(&self, app_type: AppType) -> AppDemands {
        match app_type {
            AppType::TwoStage => self.two_stage,
            AppType::Dag => self.dag,
            AppType::Dcg => self.dcg,
            AppType::Streaming => self.streaming,
        }
    }
}

impl Default for DemandTable {
    fn default() -> Self {
        let demands = |t| {
            let (am, task) = demands_for(t);
            AppDemands { am, task }
        };
        DemandTable {
            two_stage: demands(AppType::TwoStage),
            dag: demands(AppType::Dag),
            dcg: demands(AppType::Dcg),
            streaming: demands(AppType::Streaming),
        }
    }
}

/// Default `(am, task)` container demands for an application type.
///
/// Streaming tasks take two vCores each so that the whole application holds
/// `<5, 5120>` while running.
pub fn demands_for(app_type: AppType) -> (Resources, Resources) {
    match app_type {
        AppType::TwoStage => (Resources::new(1, 2048), Resources::new(1, 1024)),
        AppType::Dag | AppType::Dcg => (Resources::new(1, 1024), Resources::new(1, 2048)),
        AppType::Streaming => (Resources::new(1, 1024), Resources::new(2, 2048)),
    }
}

/// Number of task containers a two-stage application needs for its input.
pub fn two_stage_task_count(data_size_mb: u64) -> Result<u32> {
    if data_size_mb == 0 {
        return Err(Error::config(
            "data_size_mb",
            "two-stage input size must be positive",
        ));
    }
    Ok(data_size_mb.div_ceil(SPLIT_SIZE_MB) as u32)
}

/// Tasks per application for every type other than two-stage.
pub const FIXED_TASK_COUNT: u32 = 2;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AppSpec {
    pub app_id: AppId,
    pub app_type: AppType,
    pub benchmark_name: String,
    /// Input size for two-stage applications, zero otherwise.
    pub data_size_mb: u64,
    pub submission_time: SimTime,
    pub am_demand: Resources,
    pub task_demand: Resources,
    pub task_count: u32,
}

impl AppSpec {
    /// Builds an application whose demands and task count follow its type.
    pub fn new(
        app_id: AppId,
        app_type: AppType,
        benchmark_name: impl Into<String>,
        data_size_mb: u64,
        submission_time: SimTime,
        demands: &DemandTable,
    ) -> Result<Self> {
        let AppDemands { am, task } = demands.get(app_type);
        let (data_size_mb, task_count) = match app_type {
            AppType::TwoStage => (data_size_mb, two_stage_task_count(data_size_mb)?),
            _ => (0, FIXED_TASK_COUNT),
        };
        Ok(AppSpec {
            app_id,
            app_type,
            benchmark_name: benchmark_name.into(),
            data_size_mb,
            submission_time,
            am_demand: am,
            task_demand: task,
            task_count,
        })
    }

    pub fn is_streaming(&self) -> bool {
        self.app_type == AppType::Streaming
    }

    /// Containers the application launches when it runs to completion.
    pub fn container_count(&self) -> u64 {
        1 + self.task_count as u64
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BenchmarkCount {
    pub benchmark: String,
    pub count: u32,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SizeCount {
    pub size_mb: u64,
    pub count: u32,
}

fn bc(benchmark: &str, count: u32) -> BenchmarkCount {
    BenchmarkCount {
        benchmark: benchmark.to_string(),
        count,
    }
}

/// Composition and arrival process of a mixed workload.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorkloadSpec {
    pub two_stage: Vec<BenchmarkCount>,
    /// Input sizes assigned to the two-stage applications; counts must add up
    /// to the number of two-stage applications.
    pub two_stage_sizes: Vec<SizeCount>,
    pub dag: Vec<BenchmarkCount>,
    pub dcg: Vec<BenchmarkCount>,
    pub streaming: Vec<BenchmarkCount>,
    /// Mean of the exponential inter-arrival gap, seconds.
    pub mean_interval_s: f64,
    /// Interval between stream batches, seconds.
    pub stream_interval_s: f64,
    pub demands: DemandTable,
}

impl Default for WorkloadSpec {
    fn default() -> Self {
        WorkloadSpec::paper_default()
    }
}

impl WorkloadSpec {
    /// The 94-application mixed workload.
    pub fn paper_default() -> Self {
        WorkloadSpec {
            two_stage: vec![
                bc("wordcount", 5),
                bc("sort", 3),
                bc("grep", 8),
                bc("wordmean", 6),
                bc("wordstandarddeviation", 15),
            ],
            two_stage_sizes: vec![
                SizeCount { size_mb: 1024, count: 24 },
                SizeCount { size_mb: 5120, count: 11 },
                SizeCount { size_mb: 10240, count: 2 },
            ],
            dag: vec![
                bc("JavaHdfsLR", 9),
                bc("JavaKMeans", 9),
                bc("JavaPageRank", 10),
            ],
            dcg: vec![bc("LiveJournalPageRank", 28)],
            streaming: vec![bc("JavaQueueStream", 1)],
            mean_interval_s: 32.11,
            stream_interval_s: 5.0,
            demands: DemandTable::default(),
        }
    }

    pub fn count(&self, app_type: AppType) -> u32 {
        let list = match app_type {
            AppType::TwoStage => &self.two_stage,
            AppType::Dag => &self.dag,
            AppType::Dcg => &self.dcg,
            AppType::Streaming => &self.streaming,
        };
        list.iter().map(|b| b.count).sum()
    }

    pub fn total_apps(&self) -> u32 {
        AppType::ALL.iter().map(|&t| self.count(t)).sum()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.mean_interval_s.is_finite() && self.mean_interval_s > 0.0) {
            return Err(Error::config(
                "workload.mean_interval_s",
                "mean arrival interval must be positive",
            ));
        }
        if !(self.stream_interval_s.is_finite() && self.stream_interval_s > 0.0) {
            return Err(Error::config(
                "workload.stream_interval_s",
                "stream interval must be positive",
            ));
        }
        let sized: u32 = self.two_stage_sizes.iter().map(|s| s.count).sum();
        if sized != self.count(AppType::TwoStage) {
            return Err(Error::config(
                "workload.two_stage_sizes",
                format!(
                    "size counts add up to {sized} but there are {} two-stage applications",
                    self.count(AppType::TwoStage)
                ),
            ));
        }
        if let Some(s) = self.two_stage_sizes.iter().find(|s| s.size_mb == 0) {
            return Err(Error::config(
                "workload.two_stage_sizes",
                format!("input size {} MiB must be positive", s.size_mb),
            ));
        }
        Ok(())
    }
}

/// Generates the workload for `seed`.
///
/// Streaming applications are submitted first at time zero. The remaining
/// applications are shuffled and arrive by a Poisson process. Arrival gaps
/// and the shuffle draw from independent streams of the same seed, so the
/// first arrival depends only on the seed and the mean interval.
pub fn generate_workload(spec: &WorkloadSpec, seed: u64) -> Result<Vec<AppSpec>> {
    spec.validate()?;

    let mut arrival_rng = ChaCha8Rng::seed_from_u64(seed);
    let mut mix_rng = ChaCha8Rng::seed_from_u64(seed);
    mix_rng.set_stream(1);

    let mut sizes: Vec<u64> = spec
        .two_stage_sizes
        .iter()
        .flat_map(|s| std::iter::repeat_n(s.size_mb, s.count as usize))
        .collect();
    sizes.shuffle(&mut mix_rng);

    let expand = |list: &[BenchmarkCount], t: AppType| -> Vec<(AppType, String)> {
        list.iter()
            .flat_map(|b| std::iter::repeat_n((t, b.benchmark.clone()), b.count as usize))
            .collect()
    };

    let mut entries: Vec<(AppType, String, u64)> = expand(&spec.two_stage, AppType::TwoStage)
        .into_iter()
        .zip(sizes)
        .map(|((t, b), size)| (t, b, size))
        .collect();
    for (t, b) in expand(&spec.dag, AppType::Dag)
        .into_iter()
        .chain(expand(&spec.dcg, AppType::Dcg))
    {
        entries.push((t, b, 0));
    }
    entries.shuffle(&mut mix_rng);

    let gaps = Exp::new(1.0 / spec.mean_interval_s)
        .map_err(|e| Error::config("workload.mean_interval_s", e.to_string()))?;

    let mut apps = Vec::with_capacity(spec.total_apps() as usize);
    let mut next_id = 0u32;
    let mut push = |t, b: String, size, at, apps: &mut Vec<AppSpec>| -> Result<()> {
        apps.push(AppSpec::new(AppId(next_id), t, b, size, at, &spec.demands)?);
        next_id += 1;
        Ok(())
    };

    for (t, b) in expand(&spec.streaming, AppType::Streaming) {
        push(t, b, 0, SimTime::ZERO, &mut apps)?;
    }
    let mut clock = 0.0f64;
    for (t, b, size) in entries {
        clock += gaps.sample(&mut arrival_rng);
        push(t, b, size, SimTime::from_secs_f64(clock), &mut apps)?;
    }
    Ok(apps)
}

/// Service-time model for tasks and stream batches. All values in seconds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DurationModel {
    pub two_stage_base_s: f64,
    /// Added per MiB of input handled by one task.
    pub two_stage_per_mb_s: f64,
    pub dag_base_s: f64,
    pub dcg_base_s: f64,
    pub stream_batch_s: f64,
    /// Relative half-width of the uniform multiplicative noise, in `[0, 1)`.
    pub noise: f64,
}

impl Default for DurationModel {
    fn default() -> Self {
        DurationModel {
            two_stage_base_s: 10.0,
            two_stage_per_mb_s: 0.1,
            dag_base_s: 60.0,
            dcg_base_s: 90.0,
            stream_batch_s: 2.0,
            noise: 0.0,
        }
    }
}

impl DurationModel {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("durations.two_stage_base_s", self.two_stage_base_s),
            ("durations.dag_base_s", self.dag_base_s),
            ("durations.dcg_base_s", self.dcg_base_s),
            ("durations.stream_batch_s", self.stream_batch_s),
        ];
        for (key, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::config(key, format!("{v} must be positive")));
            }
        }
        if !(self.two_stage_per_mb_s.is_finite() && self.two_stage_per_mb_s >= 0.0) {
            return Err(Error::config(
                "durations.two_stage_per_mb_s",
                "rate must be non-negative",
            ));
        }
        if !(0.0..1.0).contains(&self.noise) {
            return Err(Error::config("durations.noise", "noise must lie in [0, 1)"));
        }
        Ok(())
    }

    /// Applies the multiplicative noise to a nominal duration.
    fn perturb<R: Rng + ?Sized>(&self, nominal: f64, rng: &mut R) -> SimTime {
        let factor = if self.noise > 0.0 {
            1.0 + self.noise * rng.random_range(-1.0..=1.0)
        } else {
            1.0
        };
        SimTime::from_secs_f64(nominal * factor)
    }

    pub fn stream_batch_time<R: Rng + ?Sized>(&self, rng: &mut R) -> SimTime {
        self.perturb(self.stream_batch_s, rng)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TaskDuration {
    Finite(SimTime),
    /// Streaming tasks never finish on their own.
    Unbounded,
}

/// Samples how long one task of `app` runs.
///
/// Every task of an application gets the same nominal duration, so
/// `_task_index` only matters through the RNG state.
pub fn sample_task_duration<R: Rng + ?Sized>(
    app: &AppSpec,
    _task_index: u32,
    model: &DurationModel,
    rng: &mut R,
) -> TaskDuration {
    let nominal = match app.app_type {
        AppType::TwoStage => {
            let per_task = app.data_size_mb as f64 / app.task_count.max(1) as f64;
            model.two_stage_base_s + model.two_stage_per_mb_s * per_task
        }
        AppType::Dag => model.dag_base_s,
        AppType::Dcg => model.dcg_base_s,
        AppType::Streaming => return TaskDuration::Unbounded,
    };
    TaskDuration::Finite(model.perturb(nominal, rng))
}

const TABLE_HEADER: &str = "app_id\ttype\tbenchmark\tdata_size_mb\tsubmission_time";

/// Serializes a workload as a tab-separated table for later replay.
pub fn format_workload_table(apps: &[AppSpec]) -> String {
    let mut out = String::from(TABLE_HEADER);
    out.push('\n');
    for a in apps {
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\n",
            a.app_id, a.app_type, a.benchmark_name, a.data_size_mb, a.submission_time
        ));
    }
    out
}

/// Parses a table produced by [`format_workload_table`]. Demands and task
/// counts are rederived from `demands`.
pub fn parse_workload_table(text: &str, demands: &DemandTable) -> Result<Vec<AppSpec>> {
    let mut apps: Vec<AppSpec> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() || line.starts_with('#') || line == TABLE_HEADER {
            continue;
        }
        let parse_err = |msg: String| Error::Parse { line: line_no, msg };
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 5 {
            return Err(parse_err(format!("expected 5 columns, found {}", cols.len())));
        }
        let app_id: AppId = cols[0].parse().map_err(|e: Error| parse_err(e.to_string()))?;
        let app_type: AppType = cols[1].parse().map_err(|e: Error| parse_err(e.to_string()))?;
        let size: u64 = cols[3]
            .parse()
            .map_err(|_| parse_err(format!("bad data size `{}`", cols[3])))?;
        let at = SimTime::parse(cols[4])
            .ok_or_else(|| parse_err(format!("bad submission time `{}`", cols[4])))?;
        if apps.iter().any(|a| a.app_id == app_id) {
            return Err(parse_err(format!("duplicate application id {app_id}")));
        }
        let app = AppSpec::new(app_id, app_type, cols[2], size, at, demands)
            .map_err(|e| parse_err(e.to_string()))?;
        apps.push(app);
    }
    apps.sort_by_key(|a| (a.submission_time, a.app_id));
    Ok(apps)
}
