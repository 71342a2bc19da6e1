//! Scheduling-policy combinations.
//!
//! A scheduling pass repeatedly picks a leaf queue, an application inside it,
//! the application's most urgent container request, and a node for that
//! request. Each grant is accounted immediately, before the next pick.
//!
//! Only *grantable* applications take part in a pick: the application's head
//! request must fit under the maximum capacity of every queue on its path and
//! must fit on at least one node. Queues and applications that are blocked are
//! skipped instead of stalling the pass, so the pass ends exactly when nothing
//! else can be granted.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::queue::{QueueId, QueueTree};
use crate::resource::{dominant_share, fits, Resources, Share};
use crate::time::SimTime;
use crate::workload::AppId;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SpcKind {
    CapFifo,
    FairFifo,
    FairFair,
    FairDrf,
}

impl SpcKind {
    pub const ALL: [SpcKind; 4] = [
        SpcKind::CapFifo,
        SpcKind::FairFifo,
        SpcKind::FairFair,
        SpcKind::FairDrf,
    ];

    pub fn intra_policy(self) -> IntraPolicy {
        match self {
            SpcKind::CapFifo | SpcKind::FairFifo => IntraPolicy::Fifo,
            SpcKind::FairFair => IntraPolicy::Fair,
            SpcKind::FairDrf => IntraPolicy::Drf,
        }
    }

    pub fn default_placement(self) -> PlacementPolicy {
        match self {
            SpcKind::CapFifo => PlacementPolicy::Pack,
            _ => PlacementPolicy::Spread,
        }
    }

    pub fn is_capacity(self) -> bool {
        self == SpcKind::CapFifo
    }

    pub fn as_str(self) -> &'static str {
        match self {
            SpcKind::CapFifo => "cap-fifo",
            SpcKind::FairFifo => "fair-fifo",
            SpcKind::FairFair => "fair-fair",
            SpcKind::FairDrf => "fair-drf",
        }
    }

    pub fn parse(s: &str) -> Option<SpcKind> {
        SpcKind::ALL.into_iter().find(|k| k.as_str() == s)
    }
}

impl fmt::Display for SpcKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum IntraPolicy {
    Fifo,
    Fair,
    Drf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PlacementPolicy {
    /// Busiest feasible node first.
    Pack,
    /// Freest feasible node first.
    Spread,
}

impl PlacementPolicy {
    pub fn as_str(self) -> &'static str {
        match self {
            PlacementPolicy::Pack => "pack",
            PlacementPolicy::Spread => "spread",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(pub u32);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "n{:02}", self.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ContainerId(pub u64);

impl fmt::Display for ContainerId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "c{:05}", self.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct RequestId(pub u64);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum RequestKind {
    Am,
    Task,
}

pub const AM_PRIORITY: u32 = 0;
pub const TASK_PRIORITY: u32 = 1;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ContainerRequest {
    pub id: RequestId,
    pub app_id: AppId,
    pub kind: RequestKind,
    pub demand: Resources,
    /// Lower is more urgent.
    pub priority: u32,
    pub created_at: SimTime,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NodeState {
    pub node_id: NodeId,
    pub capacity: Resources,
    pub allocated: Resources,
    pub containers: BTreeSet<ContainerId>,
}

impl NodeState {
    pub fn new(node_id: NodeId, capacity: Resources) -> Self {
        NodeState {
            node_id,
            capacity,
            allocated: Resources::ZERO,
            containers: BTreeSet::new(),
        }
    }

    pub fn free(&self) -> Resources {
        self.capacity
            .checked_sub(self.allocated)
            .expect("node allocation never exceeds capacity")
    }
}

/// The scheduler's view of one application.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SchedApp {
    pub id: AppId,
    pub leaf: QueueId,
    pub submitted: SimTime,
    pub allocated: Resources,
    /// Ungranted requests.
    pub requests: Vec<ContainerRequest>,
}

/// What intra-queue policies compare.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AppCandidate {
    pub id: AppId,
    pub submitted: SimTime,
    pub allocated: Resources,
}

impl From<&SchedApp> for AppCandidate {
    fn from(a: &SchedApp) -> Self {
        AppCandidate {
            id: a.id,
            submitted: a.submitted,
            allocated: a.allocated,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Grant {
    pub request: ContainerRequest,
    pub node: NodeId,
    pub queue: QueueId,
}

/// Everything a scheduling pass reads and mutates.
#[derive(Clone, Debug)]
pub struct ClusterState {
    pub capacity: Resources,
    pub nodes: Vec<NodeState>,
    pub queues: QueueTree,
    pub apps: BTreeMap<AppId, SchedApp>,
}

/// Grantable applications grouped by leaf.
pub type Candidates = BTreeMap<QueueId, Vec<AppCandidate>>;

impl ClusterState {
    pub fn new(node_count: u32, node_capacity: Resources, queues: QueueTree) -> Self {
        let nodes: Vec<NodeState> = (0..node_count)
            .map(|i| NodeState::new(NodeId(i), node_capacity))
            .collect();
        let capacity = nodes.iter().map(|n| n.capacity).sum();
        ClusterState {
            capacity,
            nodes,
            queues,
            apps: BTreeMap::new(),
        }
    }

    fn is_grantable(&self, app: &SchedApp) -> bool {
        match next_request(app) {
            Some(req) => {
                self.queues.can_admit(app.leaf, req.demand)
                    && self.nodes.iter().any(|n| fits(req.demand, n.free()))
            }
            None => false,
        }
    }

    pub fn candidates(&self) -> Candidates {
        let mut out: Candidates = BTreeMap::new();
        for app in self.apps.values() {
            if self.is_grantable(app) {
                out.entry(app.leaf).or_default().push(app.into());
            }
        }
        out
    }

    /// Node capacity, queue caps, and per-leaf usage against application allocations.
    pub fn check_invariants(&self) -> std::result::Result<(), String> {
        for n in &self.nodes {
            if !n.allocated.fits_in(&n.capacity) {
                return Err(format!(
                    "node {} allocated {} above capacity {}",
                    n.node_id, n.allocated, n.capacity
                ));
            }
        }
        self.queues.check_invariants()?;
        let mut per_leaf: BTreeMap<QueueId, Resources> = BTreeMap::new();
        for a in self.apps.values() {
            *per_leaf.entry(a.leaf).or_default() += a.allocated;
        }
        for &leaf in self.queues.leaves() {
            let apps = per_leaf.get(&leaf).copied().unwrap_or_default();
            let used = self.queues.node(leaf).used;
            if apps != used {
                return Err(format!(
                    "leaf `{}` uses {} but its applications hold {}",
                    self.queues.node(leaf).name,
                    used,
                    apps
                ));
            }
        }
        Ok(())
    }
}

/// The most urgent ungranted request: lowest priority value, then oldest, then lowest id.
pub fn next_request(app: &SchedApp) -> Option<&ContainerRequest> {
    app.requests
        .iter()
        .min_by_key(|r| (r.priority, r.created_at, r.id))
}

/// Chooses a node for `demand`, or `None` when no node has room.
pub fn place(demand: Resources, nodes: &[NodeState], policy: PlacementPolicy) -> Option<NodeId> {
    let feasible = nodes.iter().filter(|n| fits(demand, n.free()));
    // Free vCores break memory ties so that a partially used node always
    // ranks apart from an empty one.
    let best = match policy {
        PlacementPolicy::Pack => {
            feasible.min_by_key(|n| (n.free().memory_mb, n.free().vcores, n.node_id))
        }
        PlacementPolicy::Spread => feasible.max_by_key(|n| {
            (n.free().memory_mb, n.free().vcores, std::cmp::Reverse(n.node_id))
        }),
    };
    best.map(|n| n.node_id)
}

/// Orders candidates by the intra-queue policy; ties by submission time, then id.
pub fn pick_app(candidates: &[AppCandidate], policy: IntraPolicy, cluster: Resources) -> Option<AppId> {
    let tie = |c: &AppCandidate| (c.submitted, c.id);
    match policy {
        IntraPolicy::Fifo => candidates.iter().min_by_key(|c| tie(c)),
        IntraPolicy::Fair => candidates
            .iter()
            .min_by_key(|c| (c.allocated.memory_mb, tie(c))),
        IntraPolicy::Drf => candidates.iter().min_by_key(|c| {
            let share = dominant_share(c.allocated, cluster)
                .map(|d| d.share)
                .unwrap_or_else(|_| Share::from_integer(0));
            (share, tie(c))
        }),
    }
    .map(|c| c.id)
}

/// Capacity scheduler: the grantable leaf with the lowest usage relative to
/// its guarantee; ties by declaration order.
pub fn select_leaf_capacity(tree: &QueueTree, candidates: &Candidates) -> Option<QueueId> {
    let mut best: Option<(Share, QueueId)> = None;
    for &leaf in tree.leaves() {
        if !candidates.get(&leaf).is_some_and(|c| !c.is_empty()) {
            continue;
        }
        let key = tree.underserved_key(leaf);
        if best.is_none_or(|(b, _)| key < b) {
            best = Some((key, leaf));
        }
    }
    best.map(|(_, l)| l)
}

/// Fair scheduler: descends from the root, choosing at each level the
/// grantable child preferred by `policy`, until a leaf is reached.
pub fn select_leaf_fair(tree: &QueueTree, policy: IntraPolicy, candidates: &Candidates) -> Option<QueueId> {
    let leaves_under = |q: QueueId| {
        candidates
            .iter()
            .filter(move |(leaf, c)| !c.is_empty() && tree.is_within(**leaf, q))
    };
    let mut cur = QueueTree::ROOT;
    while !tree.node(cur).is_leaf() {
        let mut best: Option<(ChildKey, QueueId)> = None;
        for &child in &tree.node(cur).children {
            let mut under = leaves_under(child).peekable();
            if under.peek().is_none() {
                continue;
            }
            let key = match policy {
                IntraPolicy::Fifo => {
                    let first = under
                        .flat_map(|(_, c)| c.iter())
                        .map(|c| (c.submitted, c.id))
                        .min()
                        .expect("non-empty");
                    ChildKey::Earliest(first.0, first.1)
                }
                IntraPolicy::Fair => ChildKey::Memory(tree.node(child).used.memory_mb),
                IntraPolicy::Drf => ChildKey::Share(
                    dominant_share(tree.node(child).used, tree.cluster())
                        .map(|d| d.share)
                        .unwrap_or_else(|_| Share::from_integer(0)),
                ),
            };
            if best.as_ref().is_none_or(|(b, _)| key < *b) {
                best = Some((key, child));
            }
        }
        cur = best?.1;
    }
    Some(cur)
}

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum ChildKey {
    Earliest(SimTime, AppId),
    Memory(u64),
    Share(Share),
}

/// Grants containers until no grantable application remains.
pub fn schedule_pass(
    state: &mut ClusterState,
    spc: SpcKind,
    placement: PlacementPolicy,
) -> Result<Vec<Grant>> {
    let policy = spc.intra_policy();
    let mut grants = Vec::new();
    loop {
        let candidates = state.candidates();
        if candidates.is_empty() {
            break;
        }
        let leaf = if spc.is_capacity() {
            select_leaf_capacity(&state.queues, &candidates)
        } else {
            select_leaf_fair(&state.queues, policy, &candidates)
        }
        .ok_or_else(|| Error::Accounting("grantable application outside every leaf".into()))?;

        let app_id = pick_app(&candidates[&leaf], policy, state.capacity)
            .expect("selected leaf has candidates");
        let app = state.apps.get_mut(&app_id).expect("candidate exists");
        let request = next_request(app).expect("candidate has a request").clone();
        let node_id = place(request.demand, &state.nodes, placement)
            .expect("grantable request fits some node");

        state.queues.charge(leaf, request.demand)?;
        let node = &mut state.nodes[node_id.0 as usize];
        node.allocated += request.demand;
        app.allocated += request.demand;
        app.requests.retain(|r| r.id != request.id);

        grants.push(Grant {
            request,
            node: node_id,
            queue: leaf,
        });
    }
    Ok(grants)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::queue::{build_hierarchy, ScenarioConfig, ScenarioKind};
    use crate::workload::AppType;
    use proptest::prelude::*;

    const CLUSTER: Resources = Resources::new(60, 61440);

    fn r(v: u64, m: u64) -> Resources {
        Resources::new(v, m)
    }

    fn cand(id: u32, t: u64, alloc: Resources) -> AppCandidate {
        AppCandidate {
            id: AppId(id),
            submitted: SimTime::from_secs(t),
            allocated: alloc,
        }
    }

    fn nodes_with_free(free: &[Resources]) -> Vec<NodeState> {
        free.iter()
            .enumerate()
            .map(|(i, f)| {
                let cap = r(2, 2048);
                let mut n = NodeState::new(NodeId(i as u32), cap);
                n.allocated = cap.checked_sub(*f).unwrap();
                n
            })
            .collect()
    }

    fn request(app: u32, id: u64, kind: RequestKind, demand: Resources, prio: u32) -> ContainerRequest {
        ContainerRequest {
            id: RequestId(id),
            app_id: AppId(app),
            kind,
            demand,
            priority: prio,
            created_at: SimTime::ZERO,
        }
    }

    #[test]
    fn spc_mappings() {
        assert_eq!(SpcKind::CapFifo.intra_policy(), IntraPolicy::Fifo);
        assert_eq!(SpcKind::FairFifo.intra_policy(), IntraPolicy::Fifo);
        assert_eq!(SpcKind::FairFair.intra_policy(), IntraPolicy::Fair);
        assert_eq!(SpcKind::FairDrf.intra_policy(), IntraPolicy::Drf);
        assert_eq!(SpcKind::CapFifo.default_placement(), PlacementPolicy::Pack);
        for spc in &SpcKind::ALL[1..] {
            assert_eq!(spc.default_placement(), PlacementPolicy::Spread);
        }
        for spc in SpcKind::ALL {
            assert_eq!(SpcKind::parse(spc.as_str()), Some(spc));
        }
    }

    #[test]
    fn pick_app_examples() {
        let c = [cand(1, 5, r(0, 0)), cand(2, 3, r(0, 0))];
        assert_eq!(pick_app(&c, IntraPolicy::Fifo, CLUSTER), Some(AppId(2)));

        let c = [cand(1, 0, r(1, 3072)), cand(2, 1, r(1, 1024))];
        assert_eq!(pick_app(&c, IntraPolicy::Fair, CLUSTER), Some(AppId(2)));

        let c = [cand(1, 0, r(1, 5000)), cand(2, 1, r(2, 1000))];
        assert_eq!(pick_app(&c, IntraPolicy::Drf, r(4, 8000)), Some(AppId(2)));

        assert_eq!(pick_app(&[], IntraPolicy::Drf, CLUSTER), None);
        // Ties fall back to submission time, then id.
        let c = [cand(3, 2, r(1, 1024)), cand(1, 2, r(1, 1024)), cand(2, 4, r(1, 1024))];
        for p in [IntraPolicy::Fifo, IntraPolicy::Fair, IntraPolicy::Drf] {
            assert_eq!(pick_app(&c, p, CLUSTER), Some(AppId(1)));
        }
    }

    #[test]
    fn next_request_examples() {
        let mut app = SchedApp {
            id: AppId(1),
            leaf: QueueId(1),
            submitted: SimTime::ZERO,
            allocated: Resources::ZERO,
            requests: vec![
                request(1, 2, RequestKind::Task, r(1, 1024), 1),
                request(1, 1, RequestKind::Am, r(1, 2048), 0),
                request(1, 3, RequestKind::Task, r(1, 1024), 1),
                request(1, 4, RequestKind::Task, r(1, 1024), 1),
            ],
        };
        assert_eq!(next_request(&app).unwrap().kind, RequestKind::Am);

        app.requests = vec![
            request(1, 5, RequestKind::Task, r(1, 1024), 2),
            request(1, 6, RequestKind::Task, r(1, 1024), 1),
        ];
        assert_eq!(next_request(&app).unwrap().priority, 1);

        app.requests.clear();
        assert!(next_request(&app).is_none());
    }

    #[test]
    fn place_examples() {
        let nodes = nodes_with_free(&[r(1, 1024), r(2, 2048)]);
        assert_eq!(place(r(1, 1024), &nodes, PlacementPolicy::Pack), Some(NodeId(0)));
        assert_eq!(place(r(1, 1024), &nodes, PlacementPolicy::Spread), Some(NodeId(1)));

        let nodes = nodes_with_free(&[r(2, 1024), r(2, 1024), r(2, 1024)]);
        assert_eq!(place(r(1, 2048), &nodes, PlacementPolicy::Pack), None);
        assert_eq!(place(r(1, 2048), &nodes, PlacementPolicy::Spread), None);

        // Equal free memory: lowest id under both policies.
        let nodes = nodes_with_free(&[r(0, 0), r(2, 2048), r(2, 2048)]);
        assert_eq!(place(r(1, 1024), &nodes, PlacementPolicy::Pack), Some(NodeId(1)));
        assert_eq!(place(r(1, 1024), &nodes, PlacementPolicy::Spread), Some(NodeId(1)));
    }

    fn separate_tree() -> QueueTree {
        build_hierarchy(&ScenarioConfig::named(ScenarioKind::SeparateQueue), CLUSTER).unwrap()
    }

    #[test]
    fn select_leaf_capacity_examples() {
        let mut t = separate_tree();
        let a = t.leaf_for(AppType::TwoStage);
        let b = t.leaf_for(AppType::Dag);
        // Ratios 1/5 and 1/2 of a 1/4 guarantee.
        t.node_mut(a).used = r(3, 3072);
        t.node_mut(b).used = r(8, 7680);
        assert_eq!(t.underserved_key(a), Share::new(1, 5));
        assert_eq!(t.underserved_key(b), Share::new(1, 2));
        let mut c = Candidates::new();
        c.insert(a, vec![cand(1, 0, r(0, 0))]);
        c.insert(b, vec![cand(2, 0, r(0, 0))]);
        assert_eq!(select_leaf_capacity(&t, &c), Some(a));

        t.node_mut(b).used = r(3, 3072);
        assert_eq!(select_leaf_capacity(&t, &c), Some(a));
        c.remove(&a);
        assert_eq!(select_leaf_capacity(&t, &c), Some(b));
        c.clear();
        assert_eq!(select_leaf_capacity(&t, &c), None);
    }

    #[test]
    fn select_leaf_fair_examples() {
        let mut t = separate_tree();
        let q1 = t.leaf_for(AppType::Dag);
        let q2 = t.leaf_for(AppType::Dcg);
        t.node_mut(q1).used = r(1, 4096);
        t.node_mut(q2).used = r(1, 2048);
        let mut c = Candidates::new();
        c.insert(q1, vec![cand(1, 0, r(0, 0))]);
        c.insert(q2, vec![cand(2, 5, r(0, 0))]);
        assert_eq!(select_leaf_fair(&t, IntraPolicy::Fair, &c), Some(q2));
        assert_eq!(select_leaf_fair(&t, IntraPolicy::Fifo, &c), Some(q1));

        t.node_mut(q1).used = r(10, 4096);
        t.node_mut(q2).used = r(2, 8192);
        // 10/60 = 1/6 by vcores against 8192/61440 = 2/15 by memory.
        assert!(Share::new(2, 15) < Share::new(1, 6));
        assert_eq!(select_leaf_fair(&t, IntraPolicy::Drf, &c), Some(q2));

        c.remove(&q2);
        assert_eq!(select_leaf_fair(&t, IntraPolicy::Drf, &c), Some(q1));
    }

    fn one_queue_state(nodes: u32) -> ClusterState {
        let t = build_hierarchy(
            &ScenarioConfig::named(ScenarioKind::OneQueue),
            Resources::new(2 * nodes as u64, 2048 * nodes as u64),
        )
        .unwrap();
        ClusterState::new(nodes, r(2, 2048), t)
    }

    fn add_app(s: &mut ClusterState, id: u32, t: AppType, submitted: u64, reqs: Vec<ContainerRequest>) {
        let leaf = s.queues.leaf_for(t);
        s.apps.insert(
            AppId(id),
            SchedApp {
                id: AppId(id),
                leaf,
                submitted: SimTime::from_secs(submitted),
                allocated: Resources::ZERO,
                requests: reqs,
            },
        );
    }

    #[test]
    fn pass_grants_single_am() {
        let mut s = one_queue_state(4);
        add_app(&mut s, 1, AppType::Dag, 0, vec![request(1, 1, RequestKind::Am, r(1, 1024), 0)]);
        let g = schedule_pass(&mut s, SpcKind::FairDrf, PlacementPolicy::Spread).unwrap();
        assert_eq!(g.len(), 1);
        assert_eq!(g[0].request.kind, RequestKind::Am);
        assert!(schedule_pass(&mut s, SpcKind::FairDrf, PlacementPolicy::Spread)
            .unwrap()
            .is_empty());
        s.check_invariants().unwrap();
    }

    #[test]
    fn pass_respects_leaf_cap() {
        let t = separate_tree();
        let mut s = ClusterState::new(30, r(2, 2048), t);
        let leaf = s.queues.leaf_for(AppType::Dag);
        let filler = SchedApp {
            id: AppId(99),
            leaf,
            submitted: SimTime::ZERO,
            allocated: r(9, 18432),
            requests: vec![],
        };
        s.queues.charge(leaf, r(9, 18432)).unwrap();
        for n in &mut s.nodes[..9] {
            n.allocated = r(1, 2048);
        }
        s.apps.insert(AppId(99), filler);
        add_app(&mut s, 1, AppType::Dag, 1, vec![request(1, 1, RequestKind::Am, r(1, 1024), 0)]);
        assert!(!s.queues.can_admit(leaf, r(1, 1024)));
        for spc in SpcKind::ALL {
            let mut st = s.clone();
            assert!(schedule_pass(&mut st, spc, spc.default_placement()).unwrap().is_empty());
        }
    }

    #[test]
    fn capacity_pass_equalises_ratios() {
        let mut s = ClusterState::new(
            4,
            r(2, 2048),
            build_hierarchy(
                &ScenarioConfig::named(ScenarioKind::MergedQueue),
                Resources::new(8, 8192),
            )
            .unwrap(),
        );
        // Two apps, each with four 1 GiB task requests, in queues with
        // guarantees 20% and 80%.
        let tasks = |app: u32, base: u64| {
            (0..4)
                .map(|i| request(app, base + i, RequestKind::Task, r(1, 1024), 1))
                .collect::<Vec<_>>()
        };
        add_app(&mut s, 1, AppType::Streaming, 0, tasks(1, 10));
        add_app(&mut s, 2, AppType::Dag, 0, tasks(2, 20));
        let grants = schedule_pass(&mut s, SpcKind::CapFifo, PlacementPolicy::Pack).unwrap();
        let order: Vec<u32> = grants.iter().map(|g| g.request.app_id.0).collect();
        // The streaming leaf caps at floor(0.3 * 8192) = 2457 MiB: two containers.
        // Ratios: s = k/8192/0.2, o = k/8192/0.8.
        assert_eq!(order, vec![1, 2, 2, 2, 2, 1]);
        s.check_invariants().unwrap();
    }

    #[test]
    fn fragmentation_blocks_big_request() {
        let mut s = one_queue_state(2);
        for n in &mut s.nodes {
            n.allocated = r(1, 1024);
        }
        add_app(&mut s, 1, AppType::Dag, 0, vec![request(1, 1, RequestKind::Task, r(1, 2048), 1)]);
        add_app(&mut s, 2, AppType::TwoStage, 1, vec![request(2, 2, RequestKind::Task, r(1, 1024), 1)]);
        let g = schedule_pass(&mut s, SpcKind::FairFifo, PlacementPolicy::Spread).unwrap();
        // The 2 GiB request is skipped, the later 1 GiB request goes through.
        assert_eq!(g.len(), 1);
        assert_eq!(g[0].request.app_id, AppId(2));
    }

    fn arb_candidates() -> impl Strategy<Value = Vec<AppCandidate>> {
        prop::collection::vec((0u64..100, 0u64..8, 0u64..8), 1..10).prop_map(|v| {
            v.into_iter()
                .enumerate()
                .map(|(i, (t, cpu, mem))| cand(i as u32, t, r(cpu, mem * 1024)))
                .collect()
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(10_000))]

        #[test]
        fn fair_pick_is_min_memory(c in arb_candidates()) {
            let id = pick_app(&c, IntraPolicy::Fair, CLUSTER).unwrap();
            let chosen = c.iter().find(|x| x.id == id).unwrap();
            prop_assert!(c.iter().all(|x| chosen.allocated.memory_mb <= x.allocated.memory_mb));
        }

        #[test]
        fn drf_pick_is_min_share(c in arb_candidates()) {
            let id = pick_app(&c, IntraPolicy::Drf, CLUSTER).unwrap();
            let share = |x: &AppCandidate| dominant_share(x.allocated, CLUSTER).unwrap().share;
            let chosen = c.iter().find(|x| x.id == id).unwrap();
            prop_assert!(c.iter().all(|x| share(chosen) <= share(x)));
        }

        #[test]
        fn fifo_pick_is_earliest(c in arb_candidates()) {
            let id = pick_app(&c, IntraPolicy::Fifo, CLUSTER).unwrap();
            let chosen = c.iter().find(|x| x.id == id).unwrap();
            prop_assert!(c.iter().all(|x| chosen.submitted <= x.submitted));
        }

        #[test]
        fn pack_prefers_used_nodes(
            used in prop::collection::vec((0u64..=2, 0u64..=2), 1..8),
            dv in 1u64..=2,
            dm in 1u64..=2,
        ) {
            let free: Vec<Resources> = used.iter().map(|&(v, m)| r(2 - v, 2048 - m * 1024)).collect();
            let nodes = nodes_with_free(&free);
            let demand = r(dv, dm * 1024);
            let partial_fits = nodes
                .iter()
                .any(|n| !n.allocated.is_zero() && fits(demand, n.free()));
            if let Some(id) = place(demand, &nodes, PlacementPolicy::Pack) {
                let n = &nodes[id.0 as usize];
                prop_assert!(fits(demand, n.free()));
                if partial_fits {
                    prop_assert!(!n.allocated.is_zero());
                }
            } else {
                prop_assert!(nodes.iter().all(|n| !fits(demand, n.free())));
            }
        }
    }
}
