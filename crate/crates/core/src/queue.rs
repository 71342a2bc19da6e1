//! The hierarchical queue tree.
//!
//! Queues form a tree rooted at `root`. Only leaves hold applications. Every
//! queue carries a guaranteed (`min_fraction`) and a ceiling (`max_fraction`)
//! share of the cluster; the ceiling is a hard admission cap enforced per
//! container on both resources. `used` on an inner queue is the sum over its
//! subtree.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::resource::{Resources, Share};
use crate::workload::{AppId, AppType};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct QueueId(pub usize);

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum QueueKind {
    Root,
    Parent,
    Leaf,
}

#[derive(Clone, Debug)]
pub struct QueueNode {
    pub name: String,
    pub kind: QueueKind,
    pub min_fraction: Share,
    pub max_fraction: Share,
    pub parent: Option<QueueId>,
    pub children: Vec<QueueId>,
    /// Applications waiting for their AM container, in arrival order.
    pub pending_apps: VecDeque<AppId>,
    pub running_apps: BTreeSet<AppId>,
    pub used: Resources,
}

impl QueueNode {
    pub fn is_leaf(&self) -> bool {
        self.kind == QueueKind::Leaf
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScenarioKind {
    #[default]
    OneQueue,
    SeparateQueue,
    MergedQueue,
    Custom,
}

impl ScenarioKind {
    pub const NAMED: [ScenarioKind; 3] = [
        ScenarioKind::OneQueue,
        ScenarioKind::SeparateQueue,
        ScenarioKind::MergedQueue,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ScenarioKind::OneQueue => "one-queue",
            ScenarioKind::SeparateQueue => "separate-queue",
            ScenarioKind::MergedQueue => "merged-queue",
            ScenarioKind::Custom => "custom",
        }
    }

    pub fn parse(s: &str) -> Option<ScenarioKind> {
        [
            ScenarioKind::OneQueue,
            ScenarioKind::SeparateQueue,
            ScenarioKind::MergedQueue,
            ScenarioKind::Custom,
        ]
        .into_iter()
        .find(|k| k.as_str() == s)
    }
}

impl fmt::Display for ScenarioKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// How the capacity scheduler measures how under-served a leaf is.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum UnderservedMetric {
    /// Used memory share divided by the guaranteed share.
    #[default]
    Relative,
    /// Used memory share of the whole cluster.
    Absolute,
}

/// One queue declaration. A declaration is a parent iff a later declaration
/// names it as `parent`; only leaves may list routed types.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct QueueDef {
    pub name: String,
    pub min_fraction: Share,
    pub max_fraction: Share,
    pub parent: Option<String>,
    pub types: Vec<AppType>,
}

impl QueueDef {
    pub fn leaf(name: &str, min_pct: u64, max_pct: u64, types: &[AppType]) -> Self {
        QueueDef {
            name: name.to_string(),
            min_fraction: Share::new(min_pct, 100),
            max_fraction: Share::new(max_pct, 100),
            parent: None,
            types: types.to_vec(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ScenarioConfig {
    pub kind: ScenarioKind,
    pub queues: Vec<QueueDef>,
    pub underserved_metric: UnderservedMetric,
}

impl ScenarioConfig {
    /// One of the three named scenarios. `Custom` yields an empty declaration list.
    pub fn named(kind: ScenarioKind) -> Self {
        use AppType::*;
        let queues = match kind {
            ScenarioKind::OneQueue => {
                vec![QueueDef::leaf("default", 100, 100, &AppType::ALL)]
            }
            ScenarioKind::SeparateQueue => AppType::ALL
                .iter()
                .map(|&t| QueueDef::leaf(t.as_str(), 25, 30, &[t]))
                .collect(),
            ScenarioKind::MergedQueue => vec![
                QueueDef::leaf("streaming", 20, 30, &[Streaming]),
                QueueDef::leaf("others", 80, 90, &[TwoStage, Dag, Dcg]),
            ],
            ScenarioKind::Custom => Vec::new(),
        };
        ScenarioConfig {
            kind,
            queues,
            underserved_metric: UnderservedMetric::Relative,
        }
    }
}

/// Leaf name an application type is routed to, if any.
pub fn route(app_type: AppType, config: &ScenarioConfig) -> Option<&str> {
    config
        .queues
        .iter()
        .find(|q| q.types.contains(&app_type))
        .map(|q| q.name.as_str())
}

/// Leaf usage relative to its guarantee: `(used.memory / cluster.memory) / min_fraction`.
pub fn used_ratio(queue: &QueueNode, cluster: Resources) -> Result<Share> {
    if *queue.min_fraction.numer() == 0 {
        return Err(Error::config(
            format!("queues.{}", queue.name),
            "minimum capacity must be positive",
        ));
    }
    let numer = queue.used.memory_mb as u128 * *queue.min_fraction.denom() as u128;
    let denom = cluster.memory_mb as u128 * *queue.min_fraction.numer() as u128;
    if denom == 0 {
        return Err(Error::config("cluster", "cluster memory must be positive"));
    }
    Ok(reduce(numer, denom))
}

fn reduce(numer: u128, denom: u128) -> Share {
    fn gcd(mut a: u128, mut b: u128) -> u128 {
        while b != 0 {
            (a, b) = (b, a % b);
        }
        a
    }
    let g = gcd(numer, denom).max(1);
    Share::new((numer / g) as u64, (denom / g) as u64)
}

/// True iff `queue.used + demand` stays within `floor(max_fraction * cluster)`
/// on both resources.
pub fn can_grow(queue: &QueueNode, demand: Resources, cluster: Resources) -> bool {
    (queue.used + demand).fits_in(&cluster.scale_floor(queue.max_fraction))
}

#[derive(Clone, Debug)]
pub struct QueueTree {
    nodes: Vec<QueueNode>,
    cluster: Resources,
    routing: BTreeMap<AppType, QueueId>,
    metric: UnderservedMetric,
    leaves: Vec<QueueId>,
}

/// Validates `config` and builds its queue tree.
pub fn build_hierarchy(config: &ScenarioConfig, cluster: Resources) -> Result<QueueTree> {
    QueueTree::build(config, cluster)
}

impl QueueTree {
    pub const ROOT: QueueId = QueueId(0);

    pub fn build(config: &ScenarioConfig, cluster: Resources) -> Result<QueueTree> {
        if config.queues.is_empty() {
            return Err(Error::config("queues", "at least one leaf queue is required"));
        }
        let one = Share::from_integer(1);
        let mut nodes = vec![QueueNode {
            name: "root".to_string(),
            kind: QueueKind::Root,
            min_fraction: one,
            max_fraction: one,
            parent: None,
            children: Vec::new(),
            pending_apps: VecDeque::new(),
            running_apps: BTreeSet::new(),
            used: Resources::ZERO,
        }];
        let mut by_name: BTreeMap<&str, QueueId> = BTreeMap::new();
        by_name.insert("root", Self::ROOT);

        for def in &config.queues {
            let key = format!("queues.{}", def.name);
            if def.name.is_empty() {
                return Err(Error::config("queues", "queue names must be non-empty"));
            }
            if by_name.contains_key(def.name.as_str()) {
                return Err(Error::config(key, "duplicate queue name"));
            }
            if def.min_fraction > def.max_fraction {
                return Err(Error::config(key, "minimum capacity exceeds maximum"));
            }
            if def.max_fraction > one {
                return Err(Error::config(key, "maximum capacity exceeds 100%"));
            }
            let parent = match &def.parent {
                None => Self::ROOT,
                Some(p) => *by_name.get(p.as_str()).ok_or_else(|| {
                    Error::config(&key, format!("parent `{p}` must be declared before its children"))
                })?,
            };
            if parent != Self::ROOT {
                let pnode = &mut nodes[parent.0];
                if config
                    .queues
                    .iter()
                    .any(|d| d.name == pnode.name && !d.types.is_empty())
                {
                    return Err(Error::config(
                        &key,
                        format!("parent `{}` routes application types", pnode.name),
                    ));
                }
                pnode.kind = QueueKind::Parent;
            }
            let id = QueueId(nodes.len());
            nodes.push(QueueNode {
                name: def.name.clone(),
                kind: QueueKind::Leaf,
                min_fraction: def.min_fraction,
                max_fraction: def.max_fraction,
                parent: Some(parent),
                children: Vec::new(),
                pending_apps: VecDeque::new(),
                running_apps: BTreeSet::new(),
                used: Resources::ZERO,
            });
            nodes[parent.0].children.push(id);
            by_name.insert(def.name.as_str(), id);
        }

        for node in &nodes {
            let sum: Share = node
                .children
                .iter()
                .map(|c| nodes[c.0].min_fraction)
                .fold(Share::from_integer(0), |a, b| a + b);
            if sum > one {
                return Err(Error::config(
                    format!("queues.{}", node.name),
                    "minimum capacities of the child queues add up to more than 100%",
                ));
            }
        }

        let mut routing = BTreeMap::new();
        for (i, def) in config.queues.iter().enumerate() {
            let id = QueueId(i + 1);
            if nodes[id.0].kind != QueueKind::Leaf {
                continue;
            }
            if *def.min_fraction.numer() == 0 && config.underserved_metric == UnderservedMetric::Relative {
                return Err(Error::config(
                    format!("queues.{}", def.name),
                    "minimum capacity must be positive",
                ));
            }
            for &t in &def.types {
                if routing.insert(t, id).is_some() {
                    return Err(Error::config(
                        format!("queues.{}", def.name),
                        format!("application type `{t}` is routed to more than one leaf"),
                    ));
                }
            }
        }
        for t in AppType::ALL {
            if !routing.contains_key(&t) {
                return Err(Error::config(
                    "queues",
                    format!("application type `{t}` is not routed to any leaf"),
                ));
            }
        }

        let mut tree = QueueTree {
            nodes,
            cluster,
            routing,
            metric: config.underserved_metric,
            leaves: Vec::new(),
        };
        tree.leaves = tree.collect_leaves();
        Ok(tree)
    }

    fn collect_leaves(&self) -> Vec<QueueId> {
        let mut out = Vec::new();
        let mut stack = vec![Self::ROOT];
        while let Some(id) = stack.pop() {
            let node = &self.nodes[id.0];
            if node.is_leaf() {
                out.push(id);
            }
            stack.extend(node.children.iter().rev());
        }
        out
    }

    pub fn cluster(&self) -> Resources {
        self.cluster
    }

    pub fn metric(&self) -> UnderservedMetric {
        self.metric
    }

    pub fn node(&self, id: QueueId) -> &QueueNode {
        &self.nodes[id.0]
    }

    pub fn node_mut(&mut self, id: QueueId) -> &mut QueueNode {
        &mut self.nodes[id.0]
    }

    pub fn root(&self) -> &QueueNode {
        &self.nodes[0]
    }

    pub fn nodes(&self) -> impl Iterator<Item = (QueueId, &QueueNode)> {
        self.nodes.iter().enumerate().map(|(i, n)| (QueueId(i), n))
    }

    /// Leaves in declaration (depth-first) order.
    pub fn leaves(&self) -> &[QueueId] {
        &self.leaves
    }

    pub fn find(&self, name: &str) -> Option<QueueId> {
        self.nodes.iter().position(|n| n.name == name).map(QueueId)
    }

    pub fn leaf_for(&self, app_type: AppType) -> QueueId {
        self.routing[&app_type]
    }

    /// Whether `leaf` lies in the subtree rooted at `ancestor`.
    pub fn is_within(&self, leaf: QueueId, ancestor: QueueId) -> bool {
        let mut cur = Some(leaf);
        while let Some(id) = cur {
            if id == ancestor {
                return true;
            }
            cur = self.nodes[id.0].parent;
        }
        false
    }

    /// The node and all of its ancestors, innermost first.
    pub fn path(&self, id: QueueId) -> Vec<QueueId> {
        let mut out = vec![id];
        let mut cur = self.nodes[id.0].parent;
        while let Some(p) = cur {
            out.push(p);
            cur = self.nodes[p.0].parent;
        }
        out
    }

    pub fn max_resources(&self, id: QueueId) -> Resources {
        self.cluster.scale_floor(self.nodes[id.0].max_fraction)
    }

    /// Whether `demand` can be charged to `leaf` without any queue on its path
    /// exceeding its maximum capacity.
    pub fn can_admit(&self, leaf: QueueId, demand: Resources) -> bool {
        self.path(leaf)
            .into_iter()
            .all(|q| can_grow(&self.nodes[q.0], demand, self.cluster))
    }

    /// Key the capacity scheduler minimises when choosing a leaf.
    pub fn underserved_key(&self, leaf: QueueId) -> Share {
        let node = &self.nodes[leaf.0];
        match self.metric {
            UnderservedMetric::Relative => {
                used_ratio(node, self.cluster).expect("validated at build time")
            }
            UnderservedMetric::Absolute => Share::new(node.used.memory_mb, self.cluster.memory_mb),
        }
    }

    pub fn charge(&mut self, leaf: QueueId, demand: Resources) -> Result<()> {
        if !self.nodes[leaf.0].is_leaf() {
            return Err(Error::Accounting(format!(
                "charge to non-leaf queue `{}`",
                self.nodes[leaf.0].name
            )));
        }
        if !self.can_admit(leaf, demand) {
            return Err(Error::Accounting(format!(
                "charging {demand} to `{}` exceeds a maximum capacity",
                self.nodes[leaf.0].name
            )));
        }
        for q in self.path(leaf) {
            self.nodes[q.0].used += demand;
        }
        Ok(())
    }

    pub fn credit(&mut self, leaf: QueueId, demand: Resources) -> Result<()> {
        let path = self.path(leaf);
        for &q in &path {
            if !demand.fits_in(&self.nodes[q.0].used) {
                return Err(Error::Accounting(format!(
                    "crediting {demand} to `{}` which only uses {}",
                    self.nodes[q.0].name, self.nodes[q.0].used
                )));
            }
        }
        for q in path {
            let node = &mut self.nodes[q.0];
            node.used = node.used.checked_sub(demand)?;
        }
        Ok(())
    }

    /// Checks that every inner queue's usage is the sum of its children and
    /// that no queue exceeds its cap.
    pub fn check_invariants(&self) -> std::result::Result<(), String> {
        for (id, node) in self.nodes() {
            if !node.is_leaf() {
                let sum: Resources = node.children.iter().map(|c| self.nodes[c.0].used).sum();
                if sum != node.used {
                    return Err(format!(
                        "queue `{}` uses {} but its children sum to {}",
                        node.name, node.used, sum
                    ));
                }
            }
            if !node.used.fits_in(&self.max_resources(id)) {
                return Err(format!(
                    "queue `{}` uses {} above its cap {}",
                    node.name,
                    node.used,
                    self.max_resources(id)
                ));
            }
        }
        Ok(())
    }
}
