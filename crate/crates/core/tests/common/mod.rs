//! Test support: a naive re-implementation of one scheduling pass, random
//! instance and workload generators, and helpers to turn an instance into
//! the library's cluster state.
//!
//! The oracle deliberately avoids the library's rational type and tree
//! helpers. Fractions are compared by cross-multiplication in `u128`, and
//! the queue path is walked through parent indices.

#![allow(dead_code)]

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use yarnsim::queue::{QueueDef, QueueTree, ScenarioConfig, ScenarioKind, UnderservedMetric};
use yarnsim::resource::{Resources, Share};
use yarnsim::scheduler::{
    ClusterState, ContainerRequest, NodeId, PlacementPolicy, RequestId, RequestKind, SchedApp,
    SpcKind,
};
use yarnsim::workload::{AppId, AppSpec, AppType, DemandTable};
use yarnsim::SimTime;

#[derive(Clone, Debug)]
pub struct OQueue {
    pub name: String,
    /// Index into `Instance::queues`; `None` only for the root at index 0.
    pub parent: Option<usize>,
    pub min_pct: u64,
    pub max_pct: u64,
    pub types: Vec<AppType>,
    pub used: (u64, u64),
}

#[derive(Clone, Debug)]
pub struct OReq {
    pub id: u64,
    pub priority: u32,
    pub created_ms: u64,
    pub demand: (u64, u64),
}

#[derive(Clone, Debug)]
pub struct OApp {
    pub id: u32,
    pub app_type: AppType,
    pub leaf: usize,
    pub submitted_ms: u64,
    pub alloc: (u64, u64),
    pub requests: Vec<OReq>,
}

#[derive(Clone, Debug)]
pub struct Instance {
    pub node_cap: (u64, u64),
    pub nodes: Vec<(u64, u64)>,
    pub queues: Vec<OQueue>,
    pub apps: Vec<OApp>,
    pub relative: bool,
}

/// `(request id, node index, leaf index)`
pub type OGrant = (u64, usize, usize);

impl Instance {
    pub fn cluster(&self) -> (u64, u64) {
        let n = self.nodes.len() as u64;
        (self.node_cap.0 * n, self.node_cap.1 * n)
    }

    fn is_leaf(&self, q: usize) -> bool {
        self.queues.iter().all(|c| c.parent != Some(q))
    }

    fn cap(&self, q: usize) -> (u64, u64) {
        let (v, m) = self.cluster();
        let p = self.queues[q].max_pct;
        (v * p / 100, m * p / 100)
    }

    fn admits(&self, leaf: usize, d: (u64, u64)) -> bool {
        let mut cur = Some(leaf);
        while let Some(q) = cur {
            let (cv, cm) = self.cap(q);
            let (uv, um) = self.queues[q].used;
            if uv + d.0 > cv || um + d.1 > cm {
                return false;
            }
            cur = self.queues[q].parent;
        }
        true
    }

    fn fits_somewhere(&self, d: (u64, u64)) -> bool {
        self.nodes
            .iter()
            .any(|&(v, m)| v + d.0 <= self.node_cap.0 && m + d.1 <= self.node_cap.1)
    }

    fn head(app: &OApp) -> Option<&OReq> {
        let mut best: Option<&OReq> = None;
        for r in &app.requests {
            let better = match best {
                None => true,
                Some(b) => (r.priority, r.created_ms, r.id) < (b.priority, b.created_ms, b.id),
            };
            if better {
                best = Some(r);
            }
        }
        best
    }

    fn grantable(&self) -> Vec<usize> {
        let mut out = Vec::new();
        for (i, a) in self.apps.iter().enumerate() {
            if let Some(r) = Self::head(a) {
                if self.admits(a.leaf, r.demand) && self.fits_somewhere(r.demand) {
                    out.push(i);
                }
            }
        }
        out
    }

    fn under(&self, leaf: usize, q: usize) -> bool {
        let mut cur = Some(leaf);
        while let Some(c) = cur {
            if c == q {
                return true;
            }
            cur = self.queues[c].parent;
        }
        false
    }

    /// `max(v / V, m / M)` scaled by `V * M`, so shares compare as integers.
    fn dom(&self, (v, m): (u64, u64)) -> u128 {
        let (cv, cm) = self.cluster();
        (v as u128 * cm as u128).max(m as u128 * cv as u128)
    }

    fn pick_leaf_capacity(&self, grantable: &[usize]) -> usize {
        let cm = self.cluster().1 as u128;
        let mut best: Option<usize> = None;
        for q in 0..self.queues.len() {
            if !self.is_leaf(q) || !grantable.iter().any(|&a| self.apps[a].leaf == q) {
                continue;
            }
            best = match best {
                None => Some(q),
                Some(b) => {
                    let (uq, ub) = (self.queues[q].used.1 as u128, self.queues[b].used.1 as u128);
                    let less = if self.relative {
                        // uq / (cm * minq) < ub / (cm * minb)
                        let (mq, mb) = (self.queues[q].min_pct as u128, self.queues[b].min_pct as u128);
                        uq * cm * mb < ub * cm * mq
                    } else {
                        uq < ub
                    };
                    if less {
                        Some(q)
                    } else {
                        Some(b)
                    }
                }
            };
        }
        best.expect("some leaf has grantable apps")
    }

    fn pick_leaf_fair(&self, spc: SpcKind, grantable: &[usize]) -> usize {
        let mut cur = 0;
        loop {
            let children: Vec<usize> = (0..self.queues.len())
                .filter(|&c| self.queues[c].parent == Some(cur))
                .collect();
            if children.is_empty() {
                return cur;
            }
            let mut best: Option<(usize, (u128, u64, u32))> = None;
            for c in children {
                let apps: Vec<&OApp> = grantable
                    .iter()
                    .map(|&a| &self.apps[a])
                    .filter(|a| self.under(a.leaf, c))
                    .collect();
                if apps.is_empty() {
                    continue;
                }
                let key = match spc {
                    SpcKind::CapFifo | SpcKind::FairFifo => {
                        let first = apps
                            .iter()
                            .map(|a| (a.submitted_ms, a.id))
                            .min()
                            .unwrap();
                        (0, first.0, first.1)
                    }
                    SpcKind::FairFair => (self.queues[c].used.1 as u128, 0, 0),
                    SpcKind::FairDrf => (self.dom(self.queues[c].used), 0, 0),
                };
                if best.is_none_or(|(_, k)| key < k) {
                    best = Some((c, key));
                }
            }
            cur = best.expect("a child holds the grantable apps").0;
        }
    }

    fn pick_app(&self, spc: SpcKind, leaf: usize, grantable: &[usize]) -> usize {
        let mut best: Option<(usize, (u128, u64, u32))> = None;
        for &i in grantable {
            let a = &self.apps[i];
            if a.leaf != leaf {
                continue;
            }
            let primary = match spc {
                SpcKind::CapFifo | SpcKind::FairFifo => 0,
                SpcKind::FairFair => a.alloc.1 as u128,
                SpcKind::FairDrf => self.dom(a.alloc),
            };
            let key = (primary, a.submitted_ms, a.id);
            if best.is_none_or(|(_, k)| key < k) {
                best = Some((i, key));
            }
        }
        best.unwrap().0
    }

    fn place(&self, d: (u64, u64), placement: PlacementPolicy) -> usize {
        let mut best: Option<usize> = None;
        for (i, &(v, m)) in self.nodes.iter().enumerate() {
            if v + d.0 > self.node_cap.0 || m + d.1 > self.node_cap.1 {
                continue;
            }
            let free = |j: usize| {
                (
                    self.node_cap.1 - self.nodes[j].1,
                    self.node_cap.0 - self.nodes[j].0,
                )
            };
            best = match best {
                None => Some(i),
                Some(b) => {
                    let better = match placement {
                        PlacementPolicy::Pack => free(i) < free(b),
                        PlacementPolicy::Spread => free(i) > free(b),
                    };
                    if better {
                        Some(i)
                    } else {
                        Some(b)
                    }
                }
            };
        }
        best.unwrap()
    }

    /// One scheduling pass, brute force. Mutates the instance like the real pass.
    pub fn oracle_pass(&mut self, spc: SpcKind, placement: PlacementPolicy) -> Vec<OGrant> {
        let mut grants = Vec::new();
        loop {
            let g = self.grantable();
            if g.is_empty() {
                return grants;
            }
            let leaf = if spc == SpcKind::CapFifo {
                self.pick_leaf_capacity(&g)
            } else {
                self.pick_leaf_fair(spc, &g)
            };
            let ai = self.pick_app(spc, leaf, &g);
            let req = Self::head(&self.apps[ai]).unwrap().clone();
            let node = self.place(req.demand, placement);
            self.nodes[node].0 += req.demand.0;
            self.nodes[node].1 += req.demand.1;
            let mut cur = Some(leaf);
            while let Some(q) = cur {
                self.queues[q].used.0 += req.demand.0;
                self.queues[q].used.1 += req.demand.1;
                cur = self.queues[q].parent;
            }
            let app = &mut self.apps[ai];
            app.alloc.0 += req.demand.0;
            app.alloc.1 += req.demand.1;
            app.requests.retain(|r| r.id != req.id);
            grants.push((req.id, node, leaf));
        }
    }

    pub fn scenario(&self) -> ScenarioConfig {
        let queues = self.queues[1..]
            .iter()
            .map(|q| QueueDef {
                name: q.name.clone(),
                min_fraction: Share::new(q.min_pct, 100),
                max_fraction: Share::new(q.max_pct, 100),
                parent: q.parent.filter(|&p| p != 0).map(|p| self.queues[p].name.clone()),
                types: q.types.clone(),
            })
            .collect();
        ScenarioConfig {
            kind: ScenarioKind::Custom,
            queues,
            underserved_metric: if self.relative {
                UnderservedMetric::Relative
            } else {
                UnderservedMetric::Absolute
            },
        }
    }

    /// The same state in the library's representation.
    pub fn to_state(&self) -> ClusterState {
        let (cv, cm) = self.cluster();
        let tree = QueueTree::build(&self.scenario(), Resources::new(cv, cm)).expect("valid instance");
        let mut s = ClusterState::new(
            self.nodes.len() as u32,
            Resources::new(self.node_cap.0, self.node_cap.1),
            tree,
        );
        for (n, &(v, m)) in s.nodes.iter_mut().zip(&self.nodes) {
            n.allocated = Resources::new(v, m);
        }
        for a in &self.apps {
            let leaf = self.queue_id(&s.queues, a.leaf);
            if a.alloc != (0, 0) {
                s.queues
                    .charge(leaf, Resources::new(a.alloc.0, a.alloc.1))
                    .expect("allocations respect caps");
            }
            let requests = a
                .requests
                .iter()
                .map(|r| ContainerRequest {
                    id: RequestId(r.id),
                    app_id: AppId(a.id),
                    kind: if r.priority == 0 { RequestKind::Am } else { RequestKind::Task },
                    demand: Resources::new(r.demand.0, r.demand.1),
                    priority: r.priority,
                    created_at: SimTime::from_millis(r.created_ms),
                })
                .collect();
            s.apps.insert(
                AppId(a.id),
                SchedApp {
                    id: AppId(a.id),
                    leaf,
                    submitted: SimTime::from_millis(a.submitted_ms),
                    allocated: Resources::new(a.alloc.0, a.alloc.1),
                    requests,
                },
            );
        }
        s
    }

    pub fn queue_id(&self, tree: &QueueTree, q: usize) -> yarnsim::queue::QueueId {
        if q == 0 {
            QueueTree::ROOT
        } else {
            tree.find(&self.queues[q].name).expect("declared queue")
        }
    }

    /// Converts library grants to oracle triples.
    pub fn translate(&self, tree: &QueueTree, grants: &[yarnsim::scheduler::Grant]) -> Vec<OGrant> {
        grants
            .iter()
            .map(|g| {
                let leaf = (0..self.queues.len())
                    .find(|&q| self.queue_id(tree, q) == g.queue)
                    .expect("known queue");
                let NodeId(n) = g.node;
                (g.request.id.0, n as usize, leaf)
            })
            .collect()
    }
}

const DEMANDS: [(u64, u64); 4] = [(1, 1024), (1, 2048), (2, 2048), (2, 1024)];

fn queue(name: &str, parent: usize, min_pct: u64, max_pct: u64) -> OQueue {
    OQueue {
        name: name.to_string(),
        parent: Some(parent),
        min_pct,
        max_pct,
        types: Vec::new(),
        used: (0, 0),
    }
}

/// A random consistent instance: at most 4 nodes, 3 queues below the root
/// and 6 applications, some already holding containers.
pub fn random_instance(seed: u64) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let node_cap = *[(2, 2048), (2, 4096), (4, 4096), (3, 3072)].choose(&mut rng).unwrap();
    let n_nodes = rng.random_range(1..=4);
    let mut queues = vec![OQueue {
        name: "root".into(),
        parent: None,
        min_pct: 100,
        max_pct: 100,
        types: Vec::new(),
        used: (0, 0),
    }];
    let split = |rng: &mut ChaCha8Rng, k: usize| -> Vec<(u64, u64)> {
        // k minimums adding up to at most 100, each at least 10.
        let mut left = 100u64;
        (0..k)
            .map(|i| {
                let rest = (k - i - 1) as u64 * 10;
                let min = rng.random_range(10..=left - rest);
                left -= min;
                let max = rng.random_range(min..=100);
                (min, max)
            })
            .collect()
    };
    let leaves: Vec<usize> = match rng.random_range(0..4) {
        0 => {
            queues.push(queue("a", 0, 100, 100));
            vec![1]
        }
        1 => {
            for (i, (min, max)) in split(&mut rng, 2).into_iter().enumerate() {
                queues.push(queue(["a", "b"][i], 0, min, max));
            }
            vec![1, 2]
        }
        2 => {
            for (i, (min, max)) in split(&mut rng, 3).into_iter().enumerate() {
                queues.push(queue(["a", "b", "c"][i], 0, min, max));
            }
            vec![1, 2, 3]
        }
        _ => {
            let pmax = rng.random_range(50..=100);
            queues.push(queue("p", 0, pmax, pmax));
            for (i, (min, max)) in split(&mut rng, 2).into_iter().enumerate() {
                queues.push(queue(["x", "y"][i], 1, min, max));
            }
            vec![2, 3]
        }
    };
    for t in AppType::ALL {
        let l = *leaves.choose(&mut rng).unwrap();
        queues[l].types.push(t);
    }
    let leaf_of = |queues: &[OQueue], t: AppType| {
        (0..queues.len()).find(|&q| queues[q].types.contains(&t)).unwrap()
    };

    let mut inst = Instance {
        node_cap,
        nodes: vec![(0, 0); n_nodes],
        queues,
        apps: Vec::new(),
        relative: rng.random_bool(0.7),
    };
    let n_apps = rng.random_range(0..=6);
    let mut next_req = 1;
    for id in 0..n_apps {
        let app_type = *AppType::ALL.choose(&mut rng).unwrap();
        let n_req = rng.random_range(0..=3);
        let requests = (0..n_req)
            .map(|_| {
                next_req += 1;
                OReq {
                    id: next_req,
                    priority: rng.random_range(0..=1),
                    created_ms: rng.random_range(0..5) * 1000,
                    demand: *DEMANDS.choose(&mut rng).unwrap(),
                }
            })
            .collect();
        inst.apps.push(OApp {
            id: id as u32 * 3 + rng.random_range(0..3),
            app_type,
            leaf: leaf_of(&inst.queues, app_type),
            submitted_ms: rng.random_range(0..4) * 1000,
            alloc: (0, 0),
            requests,
        });
    }
    // Existing containers, each admitted against the node and queue caps.
    for _ in 0..rng.random_range(0..=6) {
        if inst.apps.is_empty() {
            break;
        }
        let ai = rng.random_range(0..inst.apps.len());
        let d = *DEMANDS.choose(&mut rng).unwrap();
        let ni = rng.random_range(0..inst.nodes.len());
        let (v, m) = inst.nodes[ni];
        let leaf = inst.apps[ai].leaf;
        if v + d.0 > node_cap.0 || m + d.1 > node_cap.1 || !inst.admits(leaf, d) {
            continue;
        }
        inst.nodes[ni] = (v + d.0, m + d.1);
        let mut cur = Some(leaf);
        while let Some(q) = cur {
            inst.queues[q].used.0 += d.0;
            inst.queues[q].used.1 += d.1;
            cur = inst.queues[q].parent;
        }
        inst.apps[ai].alloc.0 += d.0;
        inst.apps[ai].alloc.1 += d.1;
    }
    inst
}

/// Runs the library pass and the oracle on the same instance. Returns both grant lists.
pub fn compare_pass(inst: &Instance, spc: SpcKind, placement: PlacementPolicy) -> (Vec<OGrant>, Vec<OGrant>) {
    let mut state = inst.to_state();
    let grants = yarnsim::scheduler::schedule_pass(&mut state, spc, placement).expect("pass succeeds");
    let lib = inst.translate(&state.queues, &grants);
    let mut o = inst.clone();
    let oracle = o.oracle_pass(spc, placement);
    (lib, oracle)
}

/// A random workload of up to `max_apps` applications arriving within ten minutes.
pub fn random_workload(rng: &mut ChaCha8Rng, max_apps: u32) -> Vec<AppSpec> {
    let demands = DemandTable::default();
    let n = rng.random_range(0..=max_apps);
    let mut apps: Vec<AppSpec> = (0..n)
        .map(|i| {
            let t = *AppType::ALL.choose(rng).unwrap();
            let data = rng.random_range(1..=16) * 128;
            let at = SimTime::from_millis(rng.random_range(0..600_000));
            AppSpec::new(AppId(i), t, "fuzz", data, at, &demands).unwrap()
        })
        .collect();
    apps.sort_by_key(|a| (a.submission_time, a.app_id));
    apps
}
