//! Semi-aggregated MDP over state clusters.
//!
//! The model counts observed `(from-cluster, action, to-cluster)` transitions
//! within episodes. Views turn the counts into graphs; path queries search the
//! graph whose edge `f → t` carries `max_a P(t | f, a)`.

use std::cmp::Ordering;
use std::collections::{BTreeSet, BinaryHeap};
use std::fmt;
use std::str::FromStr;

use ndarray::Array3;
use serde::{Deserialize, Serialize};

use crate::clustering::{ClusterAssignment, Stage};
use crate::dataset::{DerivedFields, XrlDataset};
use crate::error::{Error, Result};

pub const DEFAULT_MAX_HOPS: usize = 10;
/// Enumeration in [`all_paths`] gives up beyond this many paths.
pub const MAX_ENUMERATED_PATHS: usize = 1_000_000;

#[derive(Debug, Clone, PartialEq)]
pub struct SamdpModel {
    /// `[C × |A| × C]` transition occurrences.
    pub counts: Array3<u64>,
    /// `counts` normalized over the destination axis; all-zero rows stay zero.
    pub probs: Array3<f64>,
    pub stages: Vec<Stage>,
}

impl SamdpModel {
    /// Builds the model from raw counts.
    pub fn from_counts(counts: Array3<u64>, stages: Vec<Stage>) -> Result<Self> {
        let (c, a, c2) = counts.dim();
        if c != c2 || stages.len() != c {
            return Err(Error::Input(format!(
                "counts shape {:?} does not match {} clusters",
                counts.dim(),
                stages.len()
            )));
        }
        let mut probs = Array3::zeros((c, a, c));
        for f in 0..c {
            for act in 0..a {
                let total: u64 = (0..c).map(|t| counts[[f, act, t]]).sum();
                if total > 0 {
                    for t in 0..c {
                        probs[[f, act, t]] = counts[[f, act, t]] as f64 / total as f64;
                    }
                }
            }
        }
        Ok(SamdpModel { counts, probs, stages })
    }

    pub fn num_clusters(&self) -> usize {
        self.stages.len()
    }

    pub fn num_actions(&self) -> usize {
        self.counts.dim().1
    }

    pub fn total_transitions(&self) -> u64 {
        self.counts.sum()
    }

    /// Best action from `f` to `t` (ties to the lowest action) and its
    /// probability, or `None` when no transition `f → t` was observed.
    pub fn best_action(&self, f: usize, t: usize) -> Option<(usize, f64)> {
        let mut best: Option<(usize, f64)> = None;
        for a in 0..self.num_actions() {
            let p = self.probs[[f, a, t]];
            if self.counts[[f, a, t]] > 0 && best.is_none_or(|(_, bp)| p > bp) {
                best = Some((a, p));
            }
        }
        best
    }

    /// Successors of `f` other than itself, ascending.
    fn successors(&self, f: usize) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.num_clusters())
            .filter(move |&t| t != f)
            .filter_map(move |t| self.best_action(f, t).map(|(a, p)| (t, a, p)))
    }

    fn check_cluster(&self, id: usize) -> Result<()> {
        if id >= self.num_clusters() {
            return Err(Error::Input(format!(
                "cluster {id} does not exist ({} clusters)",
                self.num_clusters()
            )));
        }
        Ok(())
    }

    fn nodes(&self, ids: impl IntoIterator<Item = usize>) -> Vec<Node> {
        ids.into_iter()
            .map(|id| Node {
                id,
                stage: self.stages[id],
            })
            .collect()
    }
}

/// Counts every in-episode transition `(label_i, action_i, label_{i+1})`.
pub fn build_samdp(dataset: &XrlDataset, derived: &DerivedFields, clusters: &ClusterAssignment) -> Result<SamdpModel> {
    let n = dataset.len();
    if clusters.labels.len() != n || derived.episode_ids.len() != n {
        return Err(Error::Input(format!(
            "dataset has {n} records, clusters {} and derived fields {}",
            clusters.labels.len(),
            derived.episode_ids.len()
        )));
    }
    let c = clusters.num_clusters();
    let a = dataset.num_actions();
    let mut counts = Array3::<u64>::zeros((c, a, c));
    for i in 0..n.saturating_sub(1) {
        if derived.episode_ids[i] != derived.episode_ids[i + 1] {
            continue;
        }
        let act = dataset.actions[i];
        if act < 0 || act as usize >= a {
            return Err(Error::Input(format!("action {act} at index {i} out of range")));
        }
        counts[[clusters.labels[i], act as usize, clusters.labels[i + 1]]] += 1;
    }
    SamdpModel::from_counts(counts, clusters.stages())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ViewKind {
    Complete,
    Simplified,
    Likely,
    Path,
    TerminalPaths,
}

impl ViewKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ViewKind::Complete => "complete",
            ViewKind::Simplified => "simplified",
            ViewKind::Likely => "likely",
            ViewKind::Path => "path",
            ViewKind::TerminalPaths => "terminal-paths",
        }
    }
}

impl fmt::Display for ViewKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ViewKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [
            ViewKind::Complete,
            ViewKind::Simplified,
            ViewKind::Likely,
            ViewKind::Path,
            ViewKind::TerminalPaths,
        ]
        .into_iter()
        .find(|k| k.as_str() == s)
        .ok_or_else(|| Error::Input(format!("unknown view kind {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub id: usize,
    pub stage: Stage,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub from: usize,
    pub to: usize,
    /// `None` when the edge merges all actions.
    pub action: Option<usize>,
    pub probability: f64,
    pub count: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamdpView {
    pub kind: ViewKind,
    pub nodes: Vec<Node>,
    pub edges: Vec<Edge>,
}

impl SamdpView {
    /// Drops edges below `min_prob`.
    pub fn with_min_prob(mut self, min_prob: f64) -> Self {
        self.edges.retain(|e| e.probability >= min_prob);
        self
    }

    pub fn out_degree(&self, id: usize) -> usize {
        self.edges.iter().filter(|e| e.from == id).count()
    }

    fn sorted(mut self) -> Self {
        self.nodes.sort_by_key(|n| n.id);
        self.edges.sort_by_key(|e| (e.from, e.to, e.action));
        self
    }
}

/// Complete, simplified or likely view; self-loops are left out.
pub fn make_view(model: &SamdpModel, kind: ViewKind) -> Result<SamdpView> {
    let c = model.num_clusters();
    let a = model.num_actions();
    let mut edges = Vec::new();
    match kind {
        ViewKind::Complete => {
            for f in 0..c {
                for act in 0..a {
                    for t in (0..c).filter(|&t| t != f) {
                        let count = model.counts[[f, act, t]];
                        if count > 0 {
                            edges.push(Edge {
                                from: f,
                                to: t,
                                action: Some(act),
                                probability: model.probs[[f, act, t]],
                                count,
                            });
                        }
                    }
                }
            }
        }
        ViewKind::Simplified => {
            for f in 0..c {
                let total: u64 = (0..a)
                    .flat_map(|act| (0..c).map(move |t| (act, t)))
                    .map(|(act, t)| model.counts[[f, act, t]])
                    .sum();
                for t in (0..c).filter(|&t| t != f) {
                    let count: u64 = (0..a).map(|act| model.counts[[f, act, t]]).sum();
                    if count > 0 {
                        edges.push(Edge {
                            from: f,
                            to: t,
                            action: None,
                            probability: count as f64 / total as f64,
                            count,
                        });
                    }
                }
            }
        }
        ViewKind::Likely => {
            for f in 0..c {
                for act in 0..a {
                    let mut best: Option<usize> = None;
                    for t in 0..c {
                        if model.counts[[f, act, t]] > 0
                            && best.is_none_or(|b| model.probs[[f, act, t]] > model.probs[[f, act, b]])
                        {
                            best = Some(t);
                        }
                    }
                    if let Some(t) = best.filter(|&t| t != f) {
                        edges.push(Edge {
                            from: f,
                            to: t,
                            action: Some(act),
                            probability: model.probs[[f, act, t]],
                            count: model.counts[[f, act, t]],
                        });
                    }
                }
            }
        }
        ViewKind::Path | ViewKind::TerminalPaths => {
            return Err(Error::Input(format!("{kind} views come from path queries")));
        }
    }
    Ok(SamdpView {
        kind,
        nodes: model.nodes(0..c),
        edges,
    }
    .sorted())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hop {
    pub from: usize,
    pub to: usize,
    pub action: usize,
    pub probability: f64,
}

/// A simple path with its most probable action per hop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterPath {
    /// Visited clusters, endpoints included.
    pub nodes: Vec<usize>,
    pub hops: Vec<Hop>,
    /// Product of the hop probabilities, multiplied from the start.
    pub probability: f64,
}

impl ClusterPath {
    fn from_nodes(model: &SamdpModel, nodes: Vec<usize>) -> Self {
        let mut probability = 1.0;
        let hops = nodes
            .windows(2)
            .map(|w| {
                let (action, p) = model.best_action(w[0], w[1]).expect("path follows edges");
                probability *= p;
                Hop {
                    from: w[0],
                    to: w[1],
                    action,
                    probability: p,
                }
            })
            .collect();
        ClusterPath {
            nodes,
            hops,
            probability,
        }
    }

    pub fn to_view(&self, model: &SamdpModel) -> SamdpView {
        let ids: BTreeSet<usize> = self.nodes.iter().copied().collect();
        SamdpView {
            kind: ViewKind::Path,
            nodes: model.nodes(ids),
            edges: self
                .hops
                .iter()
                .map(|h| Edge {
                    from: h.from,
                    to: h.to,
                    action: Some(h.action),
                    probability: h.probability,
                    count: model.counts[[h.from, h.action, h.to]],
                })
                .collect(),
        }
        .sorted()
    }
}

fn check_endpoints(model: &SamdpModel, from: usize, to: usize) -> Result<()> {
    model.check_cluster(from)?;
    model.check_cluster(to)?;
    if model.stages[from] == Stage::Terminal {
        return Err(Error::Input(format!(
            "cluster {from} is terminal and has no outgoing paths"
        )));
    }
    Ok(())
}

#[derive(PartialEq)]
struct Frontier {
    prob: f64,
    node: usize,
}

impl Eq for Frontier {}

impl Ord for Frontier {
    fn cmp(&self, other: &Self) -> Ordering {
        self.prob
            .total_cmp(&other.prob)
            .then_with(|| other.node.cmp(&self.node))
    }
}

impl PartialOrd for Frontier {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Most probable path from `from` to `to`.
///
/// Dijkstra on products of hop probabilities, which is shortest path under
/// `-ln p` weights without the logarithm's rounding. `None` when `to` is
/// unreachable; `from == to` gives the empty path with probability 1.
pub fn best_path(model: &SamdpModel, from: usize, to: usize) -> Result<Option<ClusterPath>> {
    check_endpoints(model, from, to)?;
    let c = model.num_clusters();
    let mut best = vec![0.0f64; c];
    let mut prev = vec![usize::MAX; c];
    let mut done = vec![false; c];
    let mut heap = BinaryHeap::new();
    best[from] = 1.0;
    heap.push(Frontier { prob: 1.0, node: from });
    while let Some(Frontier { prob, node }) = heap.pop() {
        if done[node] {
            continue;
        }
        done[node] = true;
        if node == to {
            break;
        }
        for (t, _, p) in model.successors(node) {
            let cand = prob * p;
            if !done[t] && cand > best[t] {
                best[t] = cand;
                prev[t] = node;
                heap.push(Frontier { prob: cand, node: t });
            }
        }
    }
    if !done[to] {
        return Ok(None);
    }
    let mut nodes = vec![to];
    while *nodes.last().unwrap() != from {
        nodes.push(prev[*nodes.last().unwrap()]);
    }
    nodes.reverse();
    Ok(Some(ClusterPath::from_nodes(model, nodes)))
}

/// Every simple path of at most `max_hops` hops, most probable first, ties
/// by lexicographic node sequence.
pub fn all_paths(model: &SamdpModel, from: usize, to: usize, max_hops: usize) -> Result<Vec<ClusterPath>> {
    check_endpoints(model, from, to)?;
    if max_hops < 1 {
        return Err(Error::Input("max_hops must be >= 1".into()));
    }
    if from == to {
        return Ok(vec![ClusterPath::from_nodes(model, vec![from])]);
    }
    let adjacency: Vec<Vec<usize>> = (0..model.num_clusters())
        .map(|f| model.successors(f).map(|(t, _, _)| t).collect())
        .collect();
    let mut found = Vec::new();
    let mut stack = vec![from];
    let mut on_path = vec![false; model.num_clusters()];
    on_path[from] = true;
    extend(&adjacency, to, max_hops, &mut stack, &mut on_path, &mut found)?;

    let mut paths: Vec<ClusterPath> = found
        .into_iter()
        .map(|nodes| ClusterPath::from_nodes(model, nodes))
        .collect();
    paths.sort_by(|a, b| {
        b.probability
            .total_cmp(&a.probability)
            .then_with(|| a.nodes.cmp(&b.nodes))
    });
    Ok(paths)
}

fn extend(
    adjacency: &[Vec<usize>],
    to: usize,
    max_hops: usize,
    stack: &mut Vec<usize>,
    on_path: &mut [bool],
    found: &mut Vec<Vec<usize>>,
) -> Result<()> {
    let here = *stack.last().unwrap();
    if here == to {
        if found.len() == MAX_ENUMERATED_PATHS {
            return Err(Error::Input(format!(
                "more than {MAX_ENUMERATED_PATHS} paths; lower max_hops"
            )));
        }
        found.push(stack.clone());
        return Ok(());
    }
    if stack.len() > max_hops {
        return Ok(());
    }
    for &t in &adjacency[here] {
        if !on_path[t] {
            on_path[t] = true;
            stack.push(t);
            extend(adjacency, to, max_hops, stack, on_path, found)?;
            stack.pop();
            on_path[t] = false;
        }
    }
    Ok(())
}

/// Edges that lead into a terminal cluster, found by reverse reachability,
/// each with its best action.
pub fn terminal_paths_view(model: &SamdpModel) -> Result<SamdpView> {
    let c = model.num_clusters();
    let mut reaches: Vec<bool> = model.stages.iter().map(|&s| s == Stage::Terminal).collect();
    if !reaches.iter().any(|&r| r) {
        return Err(Error::Staging("model has no terminal clusters".into()));
    }
    let predecessors: Vec<Vec<usize>> = (0..c)
        .map(|t| {
            (0..c)
                .filter(|&f| f != t && model.best_action(f, t).is_some())
                .collect()
        })
        .collect();
    let mut queue: Vec<usize> = (0..c).filter(|&t| reaches[t]).collect();
    while let Some(t) = queue.pop() {
        for &f in &predecessors[t] {
            if !reaches[f] {
                reaches[f] = true;
                queue.push(f);
            }
        }
    }
    let mut edges = Vec::new();
    for t in (0..c).filter(|&t| reaches[t]) {
        for &f in &predecessors[t] {
            let (action, probability) = model.best_action(f, t).expect("predecessor edge");
            edges.push(Edge {
                from: f,
                to: t,
                action: Some(action),
                probability,
                count: model.counts[[f, action, t]],
            });
        }
    }
    Ok(SamdpView {
        kind: ViewKind::TerminalPaths,
        nodes: model.nodes((0..c).filter(|&id| reaches[id])),
        edges,
    }
    .sorted())
}
