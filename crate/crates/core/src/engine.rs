//! The discrete-event simulation engine.
//!
//! Applications follow the lifecycle submit -> AM container granted -> task
//! containers requested all at once -> tasks finish -> AM released. Any
//! request that stays ungranted for the failure timeout fails its whole
//! application. The streaming application never finishes; it processes a
//! batch every stream interval while both of its task containers run.
//!
//! Events at the same instant are processed by kind (see [`EventKind`]) and
//! then by id, so a run is a pure function of its inputs.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap, VecDeque};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::event_log::{EventLog, LogEvent};
use crate::metrics::MetricsReport;
use crate::queue::{QueueId, QueueTree, ScenarioConfig};
use crate::resource::Resources;
use crate::scheduler::{
    schedule_pass, ClusterState, ContainerId, ContainerRequest, Grant, NodeId, PlacementPolicy,
    RequestId, RequestKind, SchedApp, SpcKind, AM_PRIORITY, TASK_PRIORITY,
};
use crate::time::SimTime;
use crate::workload::{sample_task_duration, AppId, AppSpec, DurationModel, TaskDuration};

#[derive(Clone, Debug, PartialEq)]
pub struct EngineConfig {
    pub node_count: u32,
    pub node_capacity: Resources,
    pub spc: SpcKind,
    pub placement: PlacementPolicy,
    pub scenario: ScenarioConfig,
    pub durations: DurationModel,
    /// How long a request may wait before its application fails.
    pub fail_timeout: SimTime,
    pub stream_interval: SimTime,
    /// Period of the safety-net scheduling tick while requests are pending.
    pub schedule_tick: SimTime,
    /// The run lasts at least this long even when every batch application is done.
    pub min_duration: SimTime,
    pub seed: u64,
    /// Check accounting invariants after every event. Always on in debug builds.
    pub check_invariants: bool,
}

impl EngineConfig {
    pub fn new(node_count: u32, node_capacity: Resources, spc: SpcKind, scenario: ScenarioConfig) -> Self {
        EngineConfig {
            node_count,
            node_capacity,
            spc,
            placement: spc.default_placement(),
            scenario,
            durations: DurationModel::default(),
            fail_timeout: SimTime::from_secs(300),
            stream_interval: SimTime::from_secs(5),
            schedule_tick: SimTime::from_secs(1),
            min_duration: SimTime::ZERO,
            seed: 1,
            check_invariants: false,
        }
    }

    pub fn cluster_capacity(&self) -> Resources {
        Resources::new(
            self.node_capacity.vcores * self.node_count as u64,
            self.node_capacity.memory_mb * self.node_count as u64,
        )
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Phase {
    Submitted,
    AmPending,
    Running,
    Completed,
    Failed,
}

impl Phase {
    pub fn is_terminal(self) -> bool {
        matches!(self, Phase::Completed | Phase::Failed)
    }
}

#[derive(Clone, Debug)]
pub struct AppRuntimeState {
    pub spec: AppSpec,
    pub phase: Phase,
    pub leaf: QueueId,
    pub am_container: Option<ContainerId>,
    pub task_containers: BTreeSet<ContainerId>,
    pub tasks_finished: u32,
    pub finish_time: Option<SimTime>,
}

#[derive(Clone, Debug)]
struct Container {
    app: AppId,
    node: NodeId,
    leaf: QueueId,
    demand: Resources,
    kind: RequestKind,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct StreamBatchRecord {
    pub batch_id: u64,
    pub arrival_time: SimTime,
    pub start_time: Option<SimTime>,
    pub finish_time: Option<SimTime>,
}

#[derive(Clone, Debug, Default)]
struct StreamState {
    next_batch: u64,
    waiting: VecDeque<u64>,
    in_service: Option<u64>,
    batches: Vec<StreamBatchRecord>,
}

/// Event kinds in their same-instant processing order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum EventKind {
    AppArrival,
    ContainerFinished,
    StreamBatchArrival,
    StreamBatchFinished,
    RequestTimeoutCheck,
    ScheduleTick,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct SimEvent {
    pub time: SimTime,
    pub kind: EventKind,
    /// App, container or request id, depending on the kind.
    pub id: u64,
    seq: u64,
    /// Secondary payload: the batch id or the owning app of a request.
    pub aux: u64,
}

pub struct Simulation {
    cfg: EngineConfig,
    state: ClusterState,
    apps: BTreeMap<AppId, AppRuntimeState>,
    containers: BTreeMap<ContainerId, Container>,
    streams: BTreeMap<AppId, StreamState>,
    events: BinaryHeap<Reverse<SimEvent>>,
    seq: u64,
    now: SimTime,
    next_container: u64,
    next_request: u64,
    tick_pending: bool,
    unsubmitted: usize,
    rng: ChaCha8Rng,
    log: EventLog,
    check: bool,
}

/// Runs `workload` to completion and returns its metrics and event log.
pub fn run(cfg: &EngineConfig, workload: &[AppSpec]) -> Result<(MetricsReport, EventLog)> {
    let mut sim = Simulation::new(cfg.clone(), workload)?;
    sim.run_to_end()?;
    let log = sim.into_log();
    let report = MetricsReport::from_log(&log, MetricsReport::DEFAULT_BUCKET)?;
    Ok((report, log))
}

impl Simulation {
    pub fn new(cfg: EngineConfig, workload: &[AppSpec]) -> Result<Self> {
        if cfg.node_count == 0 {
            return Err(Error::config("cluster.nodes", "at least one node is required"));
        }
        if cfg.node_capacity.vcores == 0 || cfg.node_capacity.memory_mb == 0 {
            return Err(Error::config("cluster", "node capacity must be positive"));
        }
        if cfg.stream_interval == SimTime::ZERO || cfg.schedule_tick == SimTime::ZERO {
            return Err(Error::config("run", "stream interval and schedule tick must be positive"));
        }
        cfg.durations.validate()?;
        let queues = QueueTree::build(&cfg.scenario, cfg.cluster_capacity())?;
        let state = ClusterState::new(cfg.node_count, cfg.node_capacity, queues);

        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(2);
        let check = cfg.check_invariants || cfg!(debug_assertions);
        let mut sim = Simulation {
            state,
            apps: BTreeMap::new(),
            containers: BTreeMap::new(),
            streams: BTreeMap::new(),
            events: BinaryHeap::new(),
            seq: 0,
            now: SimTime::ZERO,
            next_container: 0,
            next_request: 0,
            tick_pending: false,
            unsubmitted: workload.len(),
            rng,
            log: EventLog::default(),
            check,
            cfg,
        };
        for spec in workload {
            if spec.task_count == 0 {
                return Err(Error::config(
                    format!("workload.{}", spec.app_id),
                    "task count must be positive",
                ));
            }
            let leaf = sim.state.queues.leaf_for(spec.app_type);
            let prev = sim.apps.insert(
                spec.app_id,
                AppRuntimeState {
                    spec: spec.clone(),
                    phase: Phase::Submitted,
                    leaf,
                    am_container: None,
                    task_containers: BTreeSet::new(),
                    tasks_finished: 0,
                    finish_time: None,
                },
            );
            if prev.is_some() {
                return Err(Error::config(
                    format!("workload.{}", spec.app_id),
                    "duplicate application id",
                ));
            }
            sim.push(spec.submission_time, EventKind::AppArrival, spec.app_id.0 as u64, 0);
        }
        Ok(sim)
    }

    fn push(&mut self, time: SimTime, kind: EventKind, id: u64, aux: u64) {
        self.seq += 1;
        self.events.push(Reverse(SimEvent {
            time,
            kind,
            id,
            seq: self.seq,
            aux,
        }));
    }

    pub fn now(&self) -> SimTime {
        self.now
    }

    pub fn app(&self, id: AppId) -> Option<&AppRuntimeState> {
        self.apps.get(&id)
    }

    pub fn cluster(&self) -> &ClusterState {
        &self.state
    }

    pub fn log(&self) -> &EventLog {
        &self.log
    }

    pub fn into_log(self) -> EventLog {
        self.log
    }

    pub fn stream_batches(&self, app: AppId) -> &[StreamBatchRecord] {
        self.streams.get(&app).map(|s| s.batches.as_slice()).unwrap_or(&[])
    }

    /// True once every application has arrived and every non-streaming one is terminal.
    pub fn batch_work_done(&self) -> bool {
        self.unsubmitted == 0
            && self
                .apps
                .values()
                .all(|a| a.spec.is_streaming() || a.phase.is_terminal())
    }

    /// Processes events until the run is over, then finalizes streaming applications.
    pub fn run_to_end(&mut self) -> Result<()> {
        while let Some(Reverse(next)) = self.events.peek().copied() {
            if self.batch_work_done() && next.time > self.cfg.min_duration {
                break;
            }
            self.step()?;
        }
        let end = self.now.max(self.cfg.min_duration);
        self.now = end;
        self.finalize_streaming()?;
        self.log.push(end, LogEvent::RunEnd);
        if self.check {
            self.check_invariants()?;
        }
        Ok(())
    }

    /// Processes the next event. Returns `false` when the queue is empty.
    pub fn step(&mut self) -> Result<bool> {
        let Some(Reverse(ev)) = self.events.pop() else {
            return Ok(false);
        };
        if ev.time < self.now {
            return Err(Error::Invariant {
                time: self.now.to_string(),
                msg: format!("event at {} processed after {}", ev.time, self.now),
            });
        }
        self.now = ev.time;
        match ev.kind {
            EventKind::AppArrival => self.on_app_arrival(AppId(ev.id as u32))?,
            EventKind::ContainerFinished => self.on_container_finished(ContainerId(ev.id))?,
            EventKind::StreamBatchArrival => self.on_stream_batch(AppId(ev.id as u32))?,
            EventKind::StreamBatchFinished => {
                self.on_stream_batch_finished(AppId(ev.id as u32), ev.aux)?
            }
            EventKind::RequestTimeoutCheck => {
                self.on_request_timeout_check(AppId(ev.aux as u32), RequestId(ev.id))?
            }
            EventKind::ScheduleTick => {
                self.tick_pending = false;
                self.schedule()?;
            }
        }
        if self.check {
            self.check_invariants()?;
        }
        Ok(true)
    }

    fn queue_name(&self, leaf: QueueId) -> String {
        self.state.queues.node(leaf).name.clone()
    }

    fn new_request(&mut self, app: AppId, kind: RequestKind, demand: Resources) -> ContainerRequest {
        self.next_request += 1;
        let id = RequestId(self.next_request);
        self.push(
            self.now + self.cfg.fail_timeout,
            EventKind::RequestTimeoutCheck,
            id.0,
            app.0 as u64,
        );
        ContainerRequest {
            id,
            app_id: app,
            kind,
            demand,
            priority: match kind {
                RequestKind::Am => AM_PRIORITY,
                RequestKind::Task => TASK_PRIORITY,
            },
            created_at: self.now,
        }
    }

    pub fn on_app_arrival(&mut self, id: AppId) -> Result<()> {
        self.unsubmitted -= 1;
        let (leaf, spec) = {
            let app = &self.apps[&id];
            (app.leaf, app.spec.clone())
        };
        self.log.push(
            self.now,
            LogEvent::AppSubmitted {
                app: id,
                app_type: spec.app_type,
                benchmark: spec.benchmark_name.clone(),
                queue: self.queue_name(leaf),
            },
        );
        let request = self.new_request(id, RequestKind::Am, spec.am_demand);
        self.state.apps.insert(
            id,
            SchedApp {
                id,
                leaf,
                submitted: spec.submission_time,
                allocated: Resources::ZERO,
                requests: vec![request],
            },
        );
        self.state.queues.node_mut(leaf).pending_apps.push_back(id);
        self.apps.get_mut(&id).expect("known app").phase = Phase::AmPending;
        self.schedule()
    }

    /// Runs scheduling passes until a pass grants nothing. Newly granted AMs
    /// add task requests, which the following pass can serve at the same instant.
    fn schedule(&mut self) -> Result<()> {
        loop {
            let grants = schedule_pass(&mut self.state, self.cfg.spc, self.cfg.placement)?;
            if grants.is_empty() {
                break;
            }
            for g in grants {
                self.start_container(g)?;
            }
        }
        let pending = self.state.apps.values().any(|a| !a.requests.is_empty());
        if pending && !self.tick_pending {
            self.tick_pending = true;
            self.push(self.now + self.cfg.schedule_tick, EventKind::ScheduleTick, 0, 0);
        }
        Ok(())
    }

    fn start_container(&mut self, grant: Grant) -> Result<()> {
        let Grant {
            request,
            node,
            queue,
        } = grant;
        let app_id = request.app_id;
        self.next_container += 1;
        let cid = ContainerId(self.next_container);
        self.state.nodes[node.0 as usize].containers.insert(cid);
        self.containers.insert(
            cid,
            Container {
                app: app_id,
                node,
                leaf: queue,
                demand: request.demand,
                kind: request.kind,
            },
        );
        self.log.push(
            self.now,
            LogEvent::ContainerStarted {
                app: app_id,
                container: cid,
                node,
                queue: self.queue_name(queue),
                demand: request.demand,
                kind: request.kind,
            },
        );
        match request.kind {
            RequestKind::Am => {
                self.apps.get_mut(&app_id).expect("known app").am_container = Some(cid);
                self.on_am_granted(app_id)
            }
            RequestKind::Task => {
                let app = self.apps.get_mut(&app_id).expect("known app");
                let index = app.task_containers.len() as u32;
                app.task_containers.insert(cid);
                let spec = app.spec.clone();
                match sample_task_duration(&spec, index, &self.cfg.durations, &mut self.rng) {
                    TaskDuration::Finite(d) => {
                        self.push(self.now + d, EventKind::ContainerFinished, cid.0, 0)
                    }
                    TaskDuration::Unbounded => self.try_start_batch(app_id),
                }
                Ok(())
            }
        }
    }

    /// The AM registers and asks for all of its task containers at once.
    pub fn on_am_granted(&mut self, id: AppId) -> Result<()> {
        let (leaf, spec) = {
            let app = &self.apps[&id];
            (app.leaf, app.spec.clone())
        };
        let requests: Vec<ContainerRequest> = (0..spec.task_count)
            .map(|_| self.new_request(id, RequestKind::Task, spec.task_demand))
            .collect();
        self.state
            .apps
            .get_mut(&id)
            .expect("scheduled app")
            .requests
            .extend(requests);
        let q = self.state.queues.node_mut(leaf);
        q.pending_apps.retain(|a| *a != id);
        q.running_apps.insert(id);
        self.apps.get_mut(&id).expect("known app").phase = Phase::Running;
        self.log.push(
            self.now,
            LogEvent::AppRunning {
                app: id,
                queue: self.queue_name(leaf),
            },
        );
        if spec.is_streaming() {
            self.streams.entry(id).or_default();
            self.push(self.now, EventKind::StreamBatchArrival, id.0 as u64, 0);
        }
        Ok(())
    }

    fn release_container(&mut self, cid: ContainerId) -> Result<()> {
        let c = self
            .containers
            .remove(&cid)
            .ok_or_else(|| Error::Accounting(format!("release of unknown container {cid}")))?;
        let node = &mut self.state.nodes[c.node.0 as usize];
        node.allocated = node.allocated.checked_sub(c.demand)?;
        node.containers.remove(&cid);
        self.state.queues.credit(c.leaf, c.demand)?;
        if let Some(app) = self.state.apps.get_mut(&c.app) {
            app.allocated = app.allocated.checked_sub(c.demand)?;
        }
        self.log.push(
            self.now,
            LogEvent::ContainerReleased {
                app: c.app,
                container: cid,
                node: c.node,
                queue: self.queue_name(c.leaf),
                demand: c.demand,
                kind: c.kind,
            },
        );
        Ok(())
    }

    /// Releases every container of `id`, cancels its requests, and records the outcome.
    fn terminate(&mut self, id: AppId, phase: Phase) -> Result<()> {
        let (leaf, tasks, am) = {
            let app = &self.apps[&id];
            (app.leaf, app.task_containers.clone(), app.am_container)
        };
        for cid in tasks.into_iter().chain(am) {
            if self.containers.contains_key(&cid) {
                self.release_container(cid)?;
            }
        }
        self.state.apps.remove(&id);
        let q = self.state.queues.node_mut(leaf);
        q.pending_apps.retain(|a| *a != id);
        q.running_apps.remove(&id);
        let app = self.apps.get_mut(&id).expect("known app");
        app.phase = phase;
        app.finish_time = Some(self.now);
        let queue = self.queue_name(leaf);
        self.log.push(
            self.now,
            match phase {
                Phase::Completed => LogEvent::AppCompleted { app: id, queue },
                _ => LogEvent::AppFailed { app: id, queue },
            },
        );
        Ok(())
    }

    pub fn on_container_finished(&mut self, cid: ContainerId) -> Result<()> {
        // Containers of failed applications are released early; their finish
        // events are stale.
        let Some(app_id) = self.containers.get(&cid).map(|c| c.app) else {
            return Ok(());
        };
        self.release_container(cid)?;
        let app = self.apps.get_mut(&app_id).expect("known app");
        app.tasks_finished += 1;
        if !app.spec.is_streaming() && app.tasks_finished == app.spec.task_count {
            self.terminate(app_id, Phase::Completed)?;
        }
        self.schedule()
    }

    pub fn on_request_timeout_check(&mut self, app: AppId, request: RequestId) -> Result<()> {
        let waiting = self
            .state
            .apps
            .get(&app)
            .is_some_and(|a| a.requests.iter().any(|r| r.id == request));
        if !waiting {
            return Ok(());
        }
        self.terminate(app, Phase::Failed)?;
        if let Some(s) = self.streams.get_mut(&app) {
            s.waiting.clear();
        }
        self.schedule()
    }

    fn stream_ready(&self, id: AppId) -> bool {
        let app = &self.apps[&id];
        app.phase == Phase::Running
            && app.task_containers.len() as u32 == app.spec.task_count
            && app
                .task_containers
                .iter()
                .all(|c| self.containers.contains_key(c))
    }

    fn try_start_batch(&mut self, id: AppId) {
        if !self.stream_ready(id) {
            return;
        }
        let service = self.cfg.durations.stream_batch_time(&mut self.rng);
        let Some(s) = self.streams.get_mut(&id) else {
            return;
        };
        if s.in_service.is_some() {
            return;
        }
        let Some(batch) = s.waiting.pop_front() else {
            return;
        };
        s.in_service = Some(batch);
        s.batches[batch as usize].start_time = Some(self.now);
        self.log.push(self.now, LogEvent::BatchStarted { app: id, batch });
        self.push(self.now + service, EventKind::StreamBatchFinished, id.0 as u64, batch);
    }

    pub fn on_stream_batch(&mut self, id: AppId) -> Result<()> {
        if self.apps[&id].phase != Phase::Running {
            return Ok(());
        }
        let s = self.streams.entry(id).or_default();
        let batch = s.next_batch;
        s.next_batch += 1;
        s.waiting.push_back(batch);
        s.batches.push(StreamBatchRecord {
            batch_id: batch,
            arrival_time: self.now,
            start_time: None,
            finish_time: None,
        });
        self.log.push(self.now, LogEvent::BatchArrived { app: id, batch });
        self.try_start_batch(id);
        self.push(
            self.now + self.cfg.stream_interval,
            EventKind::StreamBatchArrival,
            id.0 as u64,
            0,
        );
        Ok(())
    }

    fn on_stream_batch_finished(&mut self, id: AppId, batch: u64) -> Result<()> {
        if self.apps[&id].phase != Phase::Running {
            return Ok(());
        }
        let s = self.streams.get_mut(&id).expect("stream state");
        s.in_service = None;
        s.batches[batch as usize].finish_time = Some(self.now);
        self.log.push(self.now, LogEvent::BatchFinished { app: id, batch });
        self.try_start_batch(id);
        Ok(())
    }

    /// A streaming application completes iff it holds all of its containers
    /// when the run ends.
    fn finalize_streaming(&mut self) -> Result<()> {
        let streaming: Vec<AppId> = self
            .apps
            .values()
            .filter(|a| a.spec.is_streaming() && !a.phase.is_terminal())
            .map(|a| a.spec.app_id)
            .collect();
        for id in streaming {
            if self.apps[&id].phase == Phase::Submitted {
                continue;
            }
            if self.stream_ready(id) {
                let leaf = self.apps[&id].leaf;
                let app = self.apps.get_mut(&id).expect("known app");
                app.phase = Phase::Completed;
                app.finish_time = Some(self.now);
                let queue = self.queue_name(leaf);
                self.log.push(self.now, LogEvent::AppCompleted { app: id, queue });
            } else {
                self.terminate(id, Phase::Failed)?;
            }
        }
        Ok(())
    }

    /// Node, container, queue and application accounting all agree, and no
    /// node or queue exceeds its capacity.
    pub fn check_invariants(&self) -> Result<()> {
        let fail = |msg: String| Error::Invariant {
            time: self.now.to_string(),
            msg,
        };
        self.state.check_invariants().map_err(fail)?;

        let mut per_node: BTreeMap<NodeId, Resources> = BTreeMap::new();
        let mut per_app: BTreeMap<AppId, Resources> = BTreeMap::new();
        for (cid, c) in &self.containers {
            *per_node.entry(c.node).or_default() += c.demand;
            *per_app.entry(c.app).or_default() += c.demand;
            if !self.state.nodes[c.node.0 as usize].containers.contains(cid) {
                return Err(fail(format!("container {cid} missing from node {}", c.node)));
            }
        }
        for n in &self.state.nodes {
            let sum = per_node.get(&n.node_id).copied().unwrap_or_default();
            if sum != n.allocated {
                return Err(fail(format!(
                    "node {} allocated {} but its containers hold {}",
                    n.node_id, n.allocated, sum
                )));
            }
        }
        for (id, a) in &self.state.apps {
            let sum = per_app.get(id).copied().unwrap_or_default();
            if sum != a.allocated {
                return Err(fail(format!(
                    "{id} accounts {} but holds containers worth {}",
                    a.allocated, sum
                )));
            }
        }
        let nodes: Resources = self.state.nodes.iter().map(|n| n.allocated).sum();
        let containers: Resources = self.containers.values().map(|c| c.demand).sum();
        let leaves: Resources = self
            .state
            .queues
            .leaves()
            .iter()
            .map(|&l| self.state.queues.node(l).used)
            .sum();
        if nodes != containers || containers != leaves {
            return Err(fail(format!(
                "nodes {nodes}, containers {containers} and leaf queues {leaves} disagree"
            )));
        }
        for (cid, c) in &self.containers {
            let phase = self.apps[&c.app].phase;
            if phase == Phase::Failed || (phase == Phase::Completed && !self.apps[&c.app].spec.is_streaming()) {
                return Err(fail(format!("container {cid} outlives its application {}", c.app)));
            }
        }
        Ok(())
    }
}
