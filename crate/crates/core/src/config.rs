//! Run configuration: a TOML file with `[cluster]`, `[queues]`, `[workload]`,
//! `[durations]`, `[run]` and optional `[sweep]` sections.
//!
//! Every key has a default, so an empty file gives the same setup as paper.conf.
//! [`RunConfig::to_toml`] writes the fully resolved configuration, and
//! parsing that output gives back an equal value.

use std::path::{Path, PathBuf};

use num_rational::Ratio;
use serde::{Deserialize, Serialize};

use crate::engine::EngineConfig;
use crate::error::{Error, Result};
use crate::queue::{QueueDef, ScenarioConfig, ScenarioKind, UnderservedMetric};
use crate::resource::Resources;
use crate::scheduler::{PlacementPolicy, SpcKind};
use crate::time::SimTime;
use crate::workload::{
    generate_workload, parse_workload_table, AppSpec, AppType, DurationModel, WorkloadSpec,
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClusterConfig {
    /// Slave nodes. The resource manager is not modelled as a node.
    pub nodes: u32,
    pub node_vcores: u64,
    pub node_memory_mb: u64,
    pub min_alloc_vcores: u64,
    pub max_alloc_vcores: u64,
    pub min_alloc_mb: u64,
    pub max_alloc_mb: u64,
}

impl Default for ClusterConfig {
    fn default() -> Self {
        ClusterConfig {
            nodes: 30,
            node_vcores: 2,
            node_memory_mb: 2048,
            min_alloc_vcores: 1,
            max_alloc_vcores: 2,
            min_alloc_mb: 1024,
            max_alloc_mb: 2048,
        }
    }
}

impl ClusterConfig {
    pub fn node_capacity(&self) -> Resources {
        Resources::new(self.node_vcores, self.node_memory_mb)
    }

    pub fn total(&self) -> Resources {
        Resources::new(
            self.node_vcores * self.nodes as u64,
            self.node_memory_mb * self.nodes as u64,
        )
    }

    pub fn min_alloc(&self) -> Resources {
        Resources::new(self.min_alloc_vcores, self.min_alloc_mb)
    }

    pub fn max_alloc(&self) -> Resources {
        Resources::new(self.max_alloc_vcores, self.max_alloc_mb)
    }
}

/// A queue of a custom hierarchy. Percentages are of the whole cluster.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QueueEntry {
    pub name: String,
    pub min_percent: u64,
    pub max_percent: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parent: Option<String>,
    #[serde(default)]
    pub types: Vec<AppType>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QueuesConfig {
    pub scenario: ScenarioKind,
    pub underserved_metric: UnderservedMetric,
    /// Only read when `scenario = "custom"`.
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub queue: Vec<QueueEntry>,
}

impl Default for QueuesConfig {
    fn default() -> Self {
        QueuesConfig {
            scenario: ScenarioKind::OneQueue,
            underserved_metric: UnderservedMetric::Relative,
            queue: Vec::new(),
        }
    }
}

impl QueuesConfig {
    pub fn scenario_config(&self) -> Result<ScenarioConfig> {
        if self.scenario != ScenarioKind::Custom {
            if !self.queue.is_empty() {
                return Err(Error::config(
                    "queues.queue",
                    "queue declarations need scenario = \"custom\"",
                ));
            }
            let mut s = ScenarioConfig::named(self.scenario);
            s.underserved_metric = self.underserved_metric;
            return Ok(s);
        }
        let mut queues = Vec::with_capacity(self.queue.len());
        for q in &self.queue {
            if q.min_percent > 100 || q.max_percent > 100 {
                return Err(Error::config(
                    format!("queues.queue.{}", q.name),
                    "percentages must lie in [0, 100]",
                ));
            }
            queues.push(QueueDef {
                name: q.name.clone(),
                min_fraction: Ratio::new(q.min_percent, 100),
                max_fraction: Ratio::new(q.max_percent, 100),
                parent: q.parent.clone(),
                types: q.types.clone(),
            });
        }
        Ok(ScenarioConfig {
            kind: ScenarioKind::Custom,
            queues,
            underserved_metric: self.underserved_metric,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    pub spc: SpcKind,
    /// Overrides the policy's default placement.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub placement: Option<PlacementPolicy>,
    pub fail_timeout_s: u64,
    pub seed: u64,
    /// Minimum simulated run length. Lets the streaming application keep
    /// running after the batch applications are done.
    pub min_duration_s: u64,
    pub schedule_tick_s: u64,
    pub check_invariants: bool,
    /// A workload table to replay instead of generating one. Relative paths
    /// resolve against the configuration file's directory.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub replay: Option<PathBuf>,
}

impl Default for RunSection {
    fn default() -> Self {
        RunSection {
            spc: SpcKind::CapFifo,
            placement: None,
            fail_timeout_s: 300,
            seed: 1,
            min_duration_s: 0,
            schedule_tick_s: 1,
            check_invariants: false,
            replay: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub spcs: Vec<SpcKind>,
    pub scenarios: Vec<ScenarioKind>,
    /// Worker threads; zero means one per core.
    pub parallelism: usize,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            spcs: SpcKind::ALL.to_vec(),
            scenarios: ScenarioKind::NAMED.to_vec(),
            parallelism: 0,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub cluster: ClusterConfig,
    pub queues: QueuesConfig,
    pub workload: WorkloadSpec,
    pub durations: DurationModel,
    pub run: RunSection,
    pub sweep: SweepConfig,
}

/// Parses `text` and checks every invariant.
pub fn parse_and_validate(text: &str) -> Result<RunConfig> {
    let cfg: RunConfig = toml::from_str(text)?;
    cfg.validate()?;
    Ok(cfg)
}

/// Reads a configuration file. A relative replay path is made relative to
/// the file's directory.
pub fn load(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path)?;
    let mut cfg = parse_and_validate(&text)?;
    if let Some(replay) = &cfg.run.replay {
        if replay.is_relative() {
            let base = path.parent().unwrap_or(Path::new("."));
            cfg.run.replay = Some(base.join(replay));
        }
    }
    Ok(cfg)
}

fn check_bounds(key: &str, d: Resources, min: Resources, max: Resources) -> Result<()> {
    if d.vcores < min.vcores || d.vcores > max.vcores {
        return Err(Error::config(
            key,
            format!("{} vCores outside allocation bounds [{}, {}]", d.vcores, min.vcores, max.vcores),
        ));
    }
    if d.memory_mb < min.memory_mb || d.memory_mb > max.memory_mb {
        return Err(Error::config(
            key,
            format!(
                "{} MiB outside allocation bounds [{}, {}]",
                d.memory_mb, min.memory_mb, max.memory_mb
            ),
        ));
    }
    Ok(())
}

impl RunConfig {
    pub fn paper_default() -> Self {
        RunConfig::default()
    }

    pub fn validate(&self) -> Result<()> {
        let c = &self.cluster;
        if c.nodes == 0 {
            return Err(Error::config("cluster.nodes", "at least one node is required"));
        }
        if c.min_alloc_vcores == 0 || c.min_alloc_mb == 0 {
            return Err(Error::config("cluster.min_alloc", "minimum allocation must be positive"));
        }
        if !c.min_alloc().fits_in(&c.max_alloc()) {
            return Err(Error::config(
                "cluster.max_alloc",
                "maximum allocation is below the minimum",
            ));
        }
        if c.node_vcores < c.max_alloc_vcores {
            return Err(Error::config(
                "cluster.node_vcores",
                "node capacity is below the maximum allocation",
            ));
        }
        if c.node_memory_mb < c.max_alloc_mb {
            return Err(Error::config(
                "cluster.node_memory_mb",
                "node capacity is below the maximum allocation",
            ));
        }
        let (min, max) = (c.min_alloc(), c.max_alloc());
        for t in AppType::ALL {
            let d = self.workload.demands.get(t);
            check_bounds(&format!("workload.demands.{}.am", key_of(t)), d.am, min, max)?;
            check_bounds(&format!("workload.demands.{}.task", key_of(t)), d.task, min, max)?;
        }
        self.workload.validate()?;
        self.durations.validate()?;
        let scenario = self.queues.scenario_config()?;
        crate::queue::QueueTree::build(&scenario, c.total())?;
        if self.run.fail_timeout_s == 0 {
            return Err(Error::config("run.fail_timeout_s", "timeout must be positive"));
        }
        if self.run.schedule_tick_s == 0 {
            return Err(Error::config("run.schedule_tick_s", "tick must be positive"));
        }
        for s in &self.sweep.scenarios {
            if *s == ScenarioKind::Custom {
                return Err(Error::config("sweep.scenarios", "only named scenarios can be swept"));
            }
        }
        if self.sweep.spcs.is_empty() || self.sweep.scenarios.is_empty() {
            return Err(Error::config("sweep", "spcs and scenarios must not be empty"));
        }
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration always serializes")
    }

    pub fn placement(&self) -> PlacementPolicy {
        self.run
            .placement
            .unwrap_or_else(|| self.run.spc.default_placement())
    }

    pub fn engine_config(&self) -> Result<EngineConfig> {
        let mut e = EngineConfig::new(
            self.cluster.nodes,
            self.cluster.node_capacity(),
            self.run.spc,
            self.queues.scenario_config()?,
        );
        e.placement = self.placement();
        e.durations = self.durations.clone();
        e.fail_timeout = SimTime::from_secs(self.run.fail_timeout_s);
        e.stream_interval = SimTime::from_secs_f64(self.workload.stream_interval_s);
        e.schedule_tick = SimTime::from_secs(self.run.schedule_tick_s);
        e.min_duration = SimTime::from_secs(self.run.min_duration_s);
        e.seed = self.run.seed;
        e.check_invariants = self.run.check_invariants;
        Ok(e)
    }

    /// The replayed workload if one is configured, else the generated one.
    pub fn workload(&self) -> Result<Vec<AppSpec>> {
        match &self.run.replay {
            Some(path) => {
                let text = std::fs::read_to_string(path)?;
                parse_workload_table(&text, &self.workload.demands)
            }
            None => generate_workload(&self.workload, self.run.seed),
        }
    }
}

fn key_of(t: AppType) -> &'static str {
    match t {
        AppType::TwoStage => "two_stage",
        AppType::Dag => "dag",
        AppType::Dcg => "dcg",
        AppType::Streaming => "streaming",
    }
}
