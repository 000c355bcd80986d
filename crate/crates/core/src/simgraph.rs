//! Bipartite similarity graph between training and evaluation instances, and
//! the weighted highest-degree pruning loop.
//!
//! Each step removes the node with the largest `degree × remaining pool size`,
//! where the pool is the node's own side (train, or dev and test combined).
//! Ties go to the larger raw degree, then to eval-side nodes, then to the
//! lexicographically smallest id.

use std::cmp::{Ordering, Reverse};
use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::SplitTag;
use crate::rouge::{PairScore, RougeConfig};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum GraphError {
    #[error("instance id {0} does not resolve to a split")]
    UnknownId(String),
    #[error("pair ({a}, {b}) joins two {side:?} instances")]
    SameSide { a: String, b: String, side: Side },
    #[error("pair ({train_id}, {eval_id}) lists an evaluation instance in the train position")]
    Misoriented { train_id: String, eval_id: String },
    #[error("node {0} is not in the graph")]
    MissingNode(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    TrainSide,
    EvalSide,
}

impl Side {
    pub fn of(split: SplitTag) -> Side {
        match split {
            SplitTag::Train => Side::TrainSide,
            SplitTag::Dev | SplitTag::Test => Side::EvalSide,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimNode {
    pub instance_id: String,
    pub side: Side,
    pub split_tag: SplitTag,
}

/// Nodes are kept sorted by id, so node indices follow id order.
#[derive(Debug, Clone, Default)]
pub struct SimilarityGraph {
    nodes: Vec<SimNode>,
    index: HashMap<String, usize>,
    adjacency: Vec<Vec<usize>>,
    edge_count: usize,
}

impl SimilarityGraph {
    pub fn nodes(&self) -> &[SimNode] {
        &self.nodes
    }

    pub fn node(&self, id: &str) -> Option<&SimNode> {
        self.index.get(id).map(|&i| &self.nodes[i])
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edge_count
    }

    pub fn degree(&self, id: &str) -> Option<usize> {
        self.index.get(id).map(|&i| self.adjacency[i].len())
    }

    pub fn neighbors(&self, id: &str) -> Option<impl Iterator<Item = &str>> {
        self.index
            .get(id)
            .map(|&i| self.adjacency[i].iter().map(|&j| self.nodes[j].instance_id.as_str()))
    }

    /// Edges as `(train_id, eval_id)`, sorted.
    pub fn edges(&self) -> Vec<(&str, &str)> {
        let mut out = Vec::with_capacity(self.edge_count);
        for (i, node) in self.nodes.iter().enumerate() {
            if node.side == Side::TrainSide {
                for &j in &self.adjacency[i] {
                    out.push((node.instance_id.as_str(), self.nodes[j].instance_id.as_str()));
                }
            }
        }
        out
    }

    pub fn max_degree(&self, side: Side) -> usize {
        self.nodes
            .iter()
            .zip(&self.adjacency)
            .filter(|(n, _)| n.side == side)
            .map(|(_, adj)| adj.len())
            .max()
            .unwrap_or(0)
    }
}

/// Builds the graph from scored pairs. `split_of` resolves instance ids to
/// their split. Duplicate pairs collapse into one edge.
pub fn build_graph(
    pairs: &[PairScore],
    split_of: impl Fn(&str) -> Option<SplitTag>,
) -> Result<SimilarityGraph, GraphError> {
    let mut edges = BTreeSet::new();
    let mut nodes = BTreeSet::new();
    for p in pairs {
        let ts = split_of(&p.train_id).ok_or_else(|| GraphError::UnknownId(p.train_id.clone()))?;
        let es = split_of(&p.eval_id).ok_or_else(|| GraphError::UnknownId(p.eval_id.clone()))?;
        if Side::of(ts) == Side::of(es) {
            return Err(GraphError::SameSide {
                a: p.train_id.clone(),
                b: p.eval_id.clone(),
                side: Side::of(ts),
            });
        }
        if Side::of(ts) != Side::TrainSide {
            return Err(GraphError::Misoriented {
                train_id: p.train_id.clone(),
                eval_id: p.eval_id.clone(),
            });
        }
        nodes.insert((p.train_id.as_str(), ts));
        nodes.insert((p.eval_id.as_str(), es));
        edges.insert((p.train_id.as_str(), p.eval_id.as_str()));
    }

    let nodes: Vec<SimNode> = nodes
        .into_iter()
        .map(|(id, split_tag)| SimNode {
            instance_id: id.to_string(),
            side: Side::of(split_tag),
            split_tag,
        })
        .collect();
    let index: HashMap<String, usize> = nodes
        .iter()
        .enumerate()
        .map(|(i, n)| (n.instance_id.clone(), i))
        .collect();
    let mut adjacency = vec![Vec::new(); nodes.len()];
    for &(t, e) in &edges {
        let (ti, ei) = (index[t], index[e]);
        adjacency[ti].push(ei);
        adjacency[ei].push(ti);
    }
    for adj in &mut adjacency {
        adj.sort_unstable();
    }
    Ok(SimilarityGraph {
        nodes,
        index,
        adjacency,
        edge_count: edges.len(),
    })
}

/// Instance counts still present in each split, including instances that
/// never entered the graph.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct RemainingPools {
    pub train: usize,
    pub dev: usize,
    pub test: usize,
}

impl RemainingPools {
    pub fn new(train: usize, dev: usize, test: usize) -> Self {
        RemainingPools { train, dev, test }
    }

    /// The pool size that weights a node from `split`.
    pub fn weight(&self, split: SplitTag, mode: PoolMode) -> usize {
        match (split, mode) {
            (SplitTag::Train, _) => self.train,
            (_, PoolMode::PerSide) => self.dev + self.test,
            (SplitTag::Dev, PoolMode::PerSplit) => self.dev,
            (SplitTag::Test, PoolMode::PerSplit) => self.test,
        }
    }

    fn decrement(&mut self, split: SplitTag) {
        let slot = match split {
            SplitTag::Train => &mut self.train,
            SplitTag::Dev => &mut self.dev,
            SplitTag::Test => &mut self.test,
        };
        *slot = slot.saturating_sub(1);
    }
}

/// How evaluation-side nodes are weighted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PoolMode {
    /// Dev and test share one combined pool.
    #[default]
    PerSide,
    /// Dev and test nodes are weighted by their own split's pool.
    PerSplit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StopRule {
    AllEdgesRemoved,
    /// Stop once every eval-side node has degree ≤ `limit`.
    MaxEvalDegree {
        limit: u32,
    },
}

impl Default for StopRule {
    fn default() -> Self {
        StopRule::MaxEvalDegree { limit: 5 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PruneConfig {
    pub rouge: RougeConfig,
    pub stop_rule: StopRule,
    #[serde(default)]
    pub pool_mode: PoolMode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PruneReport {
    pub config: PruneConfig,
    pub pruned_train_ids: Vec<String>,
    pub pruned_dev_ids: Vec<String>,
    pub pruned_test_ids: Vec<String>,
    /// Every pruned id in removal order.
    pub sequence: Vec<String>,
    pub iterations: usize,
    pub final_max_eval_degree: usize,
    pub edges_initial: usize,
    pub edges_final: usize,
    pub remaining_final: RemainingPools,
    pub train_emptied: bool,
}

pub fn weighted_degree(
    graph: &SimilarityGraph,
    id: &str,
    remaining: &RemainingPools,
    mode: PoolMode,
) -> Result<u64, GraphError> {
    let node = graph.node(id).ok_or_else(|| GraphError::MissingNode(id.to_string()))?;
    let degree = graph.degree(id).unwrap_or(0) as u64;
    Ok(degree * remaining.weight(node.split_tag, mode) as u64)
}

/// Selection key; the greatest key is pruned next.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Priority {
    weighted: u64,
    degree: usize,
    eval_side: bool,
    // Node indices follow id order, so smaller index means smaller id.
    index: usize,
}

impl Ord for Priority {
    fn cmp(&self, other: &Self) -> Ordering {
        self.weighted
            .cmp(&other.weighted)
            .then(self.degree.cmp(&other.degree))
            .then(self.eval_side.cmp(&other.eval_side))
            .then(other.index.cmp(&self.index))
    }
}

impl PartialOrd for Priority {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

fn group_of(split: SplitTag, mode: PoolMode) -> usize {
    match (split, mode) {
        (SplitTag::Train, _) => 0,
        (_, PoolMode::PerSide) => 1,
        (SplitTag::Dev, PoolMode::PerSplit) => 1,
        (SplitTag::Test, PoolMode::PerSplit) => 2,
    }
}

/// Runs the greedy pruning loop on a copy of `graph`.
///
/// Within one weight group every node shares the same multiplier, so each
/// group keeps its live nodes ordered by (degree desc, id asc) and only the
/// group heads compete on weighted degree.
pub fn prune(graph: &SimilarityGraph, config: &PruneConfig, initial_remaining: RemainingPools) -> PruneReport {
    let n = graph.nodes.len();
    let mode = config.pool_mode;
    let mut degree: Vec<usize> = graph.adjacency.iter().map(Vec::len).collect();
    let mut alive = vec![true; n];
    let mut groups: [BTreeSet<(Reverse<usize>, usize)>; 3] = Default::default();
    for (i, node) in graph.nodes.iter().enumerate() {
        if degree[i] > 0 {
            groups[group_of(node.split_tag, mode)].insert((Reverse(degree[i]), i));
        }
    }
    let eval_groups: &[usize] = match mode {
        PoolMode::PerSide => &[1],
        PoolMode::PerSplit => &[1, 2],
    };
    let max_eval_degree = |groups: &[BTreeSet<(Reverse<usize>, usize)>; 3]| {
        eval_groups
            .iter()
            .filter_map(|&g| groups[g].first().map(|&(Reverse(d), _)| d))
            .max()
            .unwrap_or(0)
    };

    let mut remaining = initial_remaining;
    let mut edges = graph.edge_count;
    let mut sequence = Vec::new();
    let (mut pruned_train, mut pruned_dev, mut pruned_test) = (Vec::new(), Vec::new(), Vec::new());

    loop {
        let done = match config.stop_rule {
            StopRule::AllEdgesRemoved => edges == 0,
            StopRule::MaxEvalDegree { limit } => max_eval_degree(&groups) <= limit as usize,
        };
        if done || edges == 0 {
            break;
        }
        let best = groups
            .iter()
            .filter_map(|g| g.first())
            .map(|&(Reverse(d), i)| {
                let node = &graph.nodes[i];
                Priority {
                    weighted: d as u64 * remaining.weight(node.split_tag, mode) as u64,
                    degree: d,
                    eval_side: node.side == Side::EvalSide,
                    index: i,
                }
            })
            .max();
        let Some(best) = best else { break };
        let v = best.index;
        let node = &graph.nodes[v];
        groups[group_of(node.split_tag, mode)].remove(&(Reverse(degree[v]), v));
        for &u in &graph.adjacency[v] {
            if !alive[u] {
                continue;
            }
            let g = group_of(graph.nodes[u].split_tag, mode);
            groups[g].remove(&(Reverse(degree[u]), u));
            degree[u] -= 1;
            if degree[u] > 0 {
                groups[g].insert((Reverse(degree[u]), u));
            }
        }
        edges -= degree[v];
        degree[v] = 0;
        alive[v] = false;
        remaining.decrement(node.split_tag);
        sequence.push(node.instance_id.clone());
        match node.split_tag {
            SplitTag::Train => pruned_train.push(node.instance_id.clone()),
            SplitTag::Dev => pruned_dev.push(node.instance_id.clone()),
            SplitTag::Test => pruned_test.push(node.instance_id.clone()),
        }
    }

    PruneReport {
        config: *config,
        iterations: sequence.len(),
        pruned_train_ids: pruned_train,
        pruned_dev_ids: pruned_dev,
        pruned_test_ids: pruned_test,
        sequence,
        final_max_eval_degree: max_eval_degree(&groups),
        edges_initial: graph.edge_count,
        edges_final: edges,
        remaining_final: remaining,
        train_emptied: initial_remaining.train > 0 && remaining.train == 0,
    }
}
