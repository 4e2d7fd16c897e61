use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap};

use num_integer::Integer;
use num_traits::{One, Zero};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rational::{int, Rational};

pub type NodeId = usize;
pub type EdgeId = usize;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GraphError {
    #[error("edge {edge} is a self-loop on node {node}")]
    SelfLoop { edge: usize, node: NodeId },
    #[error("edge {edge} duplicates the pair {{{u},{v}}}")]
    DuplicateEdge { edge: usize, u: NodeId, v: NodeId },
    #[error("edge {edge} references node {node} but n = {n}")]
    NodeOutOfRange { edge: usize, node: NodeId, n: usize },
    #[error("edge {edge} has cost {cost}; costs must be at least 1")]
    NonPositiveCost { edge: usize, cost: i64 },
    #[error("edge {edge} has negative cost {cost}")]
    NegativeCost { edge: usize, cost: i64 },
    #[error("epsilon must be positive")]
    NonPositiveEpsilon,
    #[error("shortest-path forest needs at least one source")]
    EmptySources,
    #[error("node {0} is out of range")]
    BadNode(NodeId),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Edge {
    pub id: EdgeId,
    pub u: NodeId,
    pub v: NodeId,
    pub cost: u64,
}

impl Edge {
    pub fn other(&self, x: NodeId) -> NodeId {
        if x == self.u {
            self.v
        } else {
            debug_assert_eq!(x, self.v);
            self.u
        }
    }

    pub fn touches(&self, x: NodeId) -> bool {
        self.u == x || self.v == x
    }
}

/// Simple undirected graph with positive integer costs. Edge ids are positions
/// in the edge list. Nodes may be flagged virtual (not part of any
/// communication topology).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WeightedGraph {
    n: usize,
    edges: Vec<Edge>,
    adj: Vec<Vec<(NodeId, EdgeId)>>,
    virtual_nodes: Vec<bool>,
}

impl WeightedGraph {
    pub fn new(n: usize, edges: impl IntoIterator<Item = (NodeId, NodeId, u64)>) -> Result<Self, GraphError> {
        let mut out = Vec::new();
        let mut seen = BTreeSet::new();
        let mut adj = vec![Vec::new(); n];
        for (id, (u, v, cost)) in edges.into_iter().enumerate() {
            for x in [u, v] {
                if x >= n {
                    return Err(GraphError::NodeOutOfRange { edge: id, node: x, n });
                }
            }
            if u == v {
                return Err(GraphError::SelfLoop { edge: id, node: u });
            }
            if cost == 0 {
                return Err(GraphError::NonPositiveCost { edge: id, cost: 0 });
            }
            if !seen.insert((u.min(v), u.max(v))) {
                return Err(GraphError::DuplicateEdge { edge: id, u, v });
            }
            adj[u].push((v, id));
            adj[v].push((u, id));
            out.push(Edge { id, u, v, cost });
        }
        for list in &mut adj {
            list.sort_unstable();
        }
        Ok(Self { n, edges: out, adj, virtual_nodes: vec![false; n] })
    }

    /// Like [`WeightedGraph::new`] but parallel edges are merged keeping the
    /// minimum cost, in order of first appearance. Self-loops are dropped.
    pub fn collapsed(n: usize, edges: impl IntoIterator<Item = (NodeId, NodeId, u64)>) -> Result<Self, GraphError> {
        let mut order: Vec<(NodeId, NodeId)> = Vec::new();
        let mut best: BTreeMap<(NodeId, NodeId), u64> = BTreeMap::new();
        for (u, v, c) in edges {
            if u == v {
                continue;
            }
            let key = (u.min(v), u.max(v));
            match best.get_mut(&key) {
                Some(old) => *old = (*old).min(c),
                None => {
                    best.insert(key, c);
                    order.push(key);
                }
            }
        }
        Self::new(n, order.into_iter().map(|k| (k.0, k.1, best[&k])))
    }

    pub fn with_virtual(mut self, v: NodeId) -> Result<Self, GraphError> {
        if v >= self.n {
            return Err(GraphError::BadNode(v));
        }
        self.virtual_nodes[v] = true;
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn edge(&self, id: EdgeId) -> &Edge {
        &self.edges[id]
    }

    /// Sorted by neighbour id.
    pub fn neighbors(&self, v: NodeId) -> &[(NodeId, EdgeId)] {
        &self.adj[v]
    }

    pub fn find_edge(&self, u: NodeId, v: NodeId) -> Option<EdgeId> {
        let list = self.adj.get(u)?;
        list.binary_search_by_key(&v, |&(w, _)| w).ok().map(|i| list[i].1)
    }

    pub fn is_virtual(&self, v: NodeId) -> bool {
        self.virtual_nodes[v]
    }

    pub fn virtual_nodes(&self) -> impl Iterator<Item = NodeId> + '_ {
        (0..self.n).filter(|&v| self.virtual_nodes[v])
    }

    pub fn is_virtual_edge(&self, e: EdgeId) -> bool {
        let e = &self.edges[e];
        self.virtual_nodes[e.u] || self.virtual_nodes[e.v]
    }

    pub fn max_cost(&self) -> u64 {
        self.edges.iter().map(|e| e.cost).max().unwrap_or(0)
    }

    pub fn cost_of<'a>(&self, edges: impl IntoIterator<Item = &'a EdgeId>) -> u64 {
        edges.into_iter().map(|&e| self.edges[e].cost).sum()
    }
}

/// Replaces zero costs by 1 and multiplies every other cost by ⌈n/ε⌉.
/// Returns the scaled graph and the multiplier.
pub fn scale_zero_weights(
    n: usize,
    edges: &[(NodeId, NodeId, i64)],
    epsilon: &Rational,
) -> Result<(WeightedGraph, u64), GraphError> {
    if *epsilon <= Rational::zero() {
        return Err(GraphError::NonPositiveEpsilon);
    }
    let q = int(n as u64) / epsilon;
    let mult = q.numer().div_ceil(q.denom());
    let mult: u64 = u64::try_from(mult).expect("multiplier fits in u64");
    let mut scaled = Vec::with_capacity(edges.len());
    for (id, &(u, v, c)) in edges.iter().enumerate() {
        if c < 0 {
            return Err(GraphError::NegativeCost { edge: id, cost: c });
        }
        let c = if c == 0 { 1 } else { c as u64 * mult };
        scaled.push((u, v, c));
    }
    Ok((WeightedGraph::new(n, scaled)?, mult))
}

#[derive(Debug, Clone)]
pub struct Dsu {
    parent: Vec<usize>,
}

impl Dsu {
    pub fn new(n: usize) -> Self {
        Self { parent: (0..n).collect() }
    }

    pub fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    /// Returns false if already joined. The smaller representative wins.
    pub fn union(&mut self, a: usize, b: usize) -> bool {
        let (a, b) = (self.find(a), self.find(b));
        if a == b {
            return false;
        }
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        self.parent[hi] = lo;
        true
    }
}

/// Component labelling; every component is named by its minimum node id.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Partition {
    comp: Vec<NodeId>,
}

impl Partition {
    pub fn singletons(n: usize) -> Self {
        Self { comp: (0..n).collect() }
    }

    /// Builds from arbitrary per-node labels, renaming each class to its minimum member.
    pub fn from_labels<L: Ord + Clone>(labels: &[L]) -> Self {
        let mut first: BTreeMap<L, NodeId> = BTreeMap::new();
        for (v, l) in labels.iter().enumerate() {
            first.entry(l.clone()).or_insert(v);
        }
        Self { comp: labels.iter().map(|l| first[l]).collect() }
    }

    pub fn n(&self) -> usize {
        self.comp.len()
    }

    pub fn component_of(&self, v: NodeId) -> NodeId {
        self.comp[v]
    }

    pub fn ids(&self) -> &[NodeId] {
        &self.comp
    }

    pub fn same(&self, u: NodeId, v: NodeId) -> bool {
        self.comp[u] == self.comp[v]
    }

    pub fn components(&self) -> BTreeMap<NodeId, Vec<NodeId>> {
        let mut out: BTreeMap<NodeId, Vec<NodeId>> = BTreeMap::new();
        for (v, &c) in self.comp.iter().enumerate() {
            out.entry(c).or_default().push(v);
        }
        out
    }

    pub fn count(&self) -> usize {
        self.comp.iter().enumerate().filter(|&(v, &c)| v == c).count()
    }
}

pub fn connected_components(n: usize, edges: impl IntoIterator<Item = (NodeId, NodeId)>) -> Partition {
    let mut dsu = Dsu::new(n);
    for (u, v) in edges {
        dsu.union(u, v);
    }
    // union keeps the smaller root, so every root is its component's minimum
    Partition { comp: (0..n).map(|v| dsu.find(v)).collect() }
}

pub fn partition_of(graph: &WeightedGraph, edges: &BTreeSet<EdgeId>) -> Partition {
    connected_components(graph.n(), edges.iter().map(|&e| (graph.edge(e).u, graph.edge(e).v)))
}

/// Kruskal over explicit candidates `(weight, edge id, u, v)`, processed in
/// `(weight, edge id)` order.
pub fn kruskal<W: Ord>(n: usize, mut items: Vec<(W, EdgeId, NodeId, NodeId)>) -> Vec<EdgeId> {
    items.sort_by(|a, b| (&a.0, a.1).cmp(&(&b.0, b.1)));
    let mut dsu = Dsu::new(n);
    items.into_iter().filter(|&(_, _, u, v)| dsu.union(u, v)).map(|(_, e, _, _)| e).collect()
}

pub fn minimum_spanning_forest<W: Ord + Clone>(graph: &WeightedGraph, weights: &[W]) -> Vec<EdgeId> {
    assert_eq!(weights.len(), graph.m(), "weight map must cover every edge");
    let items = graph.edges().iter().map(|e| (weights[e.id].clone(), e.id, e.u, e.v)).collect();
    let mut out = kruskal(graph.n(), items);
    out.sort_unstable();
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub enum SsspMode {
    #[default]
    Exact,
    /// Edge costs are rounded up to integral powers of `1 + eps` before the
    /// search; reported distances are true forest distances.
    RoundedPowers { eps: Rational },
}

impl SsspMode {
    pub fn stretch(&self) -> Rational {
        match self {
            SsspMode::Exact => Rational::one(),
            SsspMode::RoundedPowers { eps } => Rational::one() + eps,
        }
    }
}

pub fn round_up_to_power(c: &Rational, eps: &Rational) -> Rational {
    if c.is_zero() {
        return Rational::zero();
    }
    let base = Rational::one() + eps;
    let mut p = Rational::one();
    if *c <= p {
        while &p / &base >= *c {
            p /= &base;
        }
    } else {
        while p < *c {
            p *= &base;
        }
    }
    p
}

/// Shortest-path label, compared field by field.
///
/// `hops` counts edges outside the glued set. A path that steps onto a glued
/// component records the node where it did so in `entry`, and `inner` counts
/// glued edges walked since. Every node of a glued component therefore shares
/// the component's best `(dist, hops, root, entry)`, so the component lands in
/// one tree whose parent edges are exactly its glued edges.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct Label {
    pub dist: Rational,
    pub hops: u32,
    pub root: NodeId,
    pub entry: NodeId,
    pub inner: u32,
}

impl Label {
    pub fn source(v: NodeId) -> Self {
        Label { dist: Rational::zero(), hops: 0, root: v, entry: v, inner: 0 }
    }

    /// The label offered to `to` across an edge of cost `cost`.
    pub fn extend(&self, cost: &Rational, glued: bool, to: NodeId) -> Self {
        if glued {
            Label { inner: self.inner + 1, ..self.clone() }
        } else {
            Label { dist: &self.dist + cost, hops: self.hops + 1, root: self.root, entry: to, inner: 0 }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SsspForest {
    pub parent: Vec<Option<EdgeId>>,
    pub root: Vec<Option<NodeId>>,
    pub dist: Vec<Option<Rational>>,
    pub hops: Vec<Option<u32>>,
    pub edges: BTreeSet<EdgeId>,
}

impl SsspForest {
    pub fn reached(&self, v: NodeId) -> bool {
        self.dist[v].is_some()
    }

    pub fn ball(&self) -> BTreeSet<NodeId> {
        (0..self.dist.len()).filter(|&v| self.reached(v)).collect()
    }

    /// Parent edges from `v` up to its root, nearest first.
    pub fn path_to_root(&self, graph: &WeightedGraph, mut v: NodeId) -> Vec<EdgeId> {
        let mut out = Vec::new();
        while let Some(e) = self.parent[v] {
            out.push(e);
            v = graph.edge(e).other(v);
        }
        out
    }
}

/// Labels from the source set over edges with `Some` cost. Unreachable nodes
/// get `None`. Glued edges must cost zero.
pub fn shortest_labels(
    graph: &WeightedGraph,
    costs: &[Option<Rational>],
    sources: &BTreeSet<NodeId>,
    glue: &BTreeSet<EdgeId>,
) -> Vec<Option<Label>> {
    let mut label: Vec<Option<Label>> = vec![None; graph.n()];
    let mut heap = BinaryHeap::new();
    for &s in sources {
        label[s] = Some(Label::source(s));
        heap.push(Reverse((Label::source(s), s)));
    }
    let mut done = vec![false; graph.n()];
    while let Some(Reverse((l, v))) = heap.pop() {
        if done[v] {
            continue;
        }
        done[v] = true;
        for &(w, e) in graph.neighbors(v) {
            let Some(c) = &costs[e] else { continue };
            let glued = glue.contains(&e);
            debug_assert!(!glued || c.is_zero(), "glued edge {e} has positive cost");
            let cand = l.extend(c, glued, w);
            if label[w].as_ref().is_none_or(|old| cand < *old) {
                heap.push(Reverse((cand.clone(), w)));
                label[w] = Some(cand);
            }
        }
    }
    label
}

pub fn sssp_forest(
    graph: &WeightedGraph,
    costs: &[Option<Rational>],
    sources: &BTreeSet<NodeId>,
    radius: &Rational,
    mode: &SsspMode,
) -> Result<SsspForest, GraphError> {
    sssp_forest_glued(graph, costs, sources, &BTreeSet::new(), radius, mode)
}

/// Set-source shortest-path forest truncated to distance `radius`, with the
/// zero-cost `glue` edges kept together as described on [`Label`]. The glue
/// must be a forest with at most one source per component.
///
/// A node's parent is its minimum-id neighbour `u` whose label, extended
/// across the connecting edge, equals the node's own.
pub fn sssp_forest_glued(
    graph: &WeightedGraph,
    costs: &[Option<Rational>],
    sources: &BTreeSet<NodeId>,
    glue: &BTreeSet<EdgeId>,
    radius: &Rational,
    mode: &SsspMode,
) -> Result<SsspForest, GraphError> {
    if sources.is_empty() {
        return Err(GraphError::EmptySources);
    }
    if let Some(&bad) = sources.iter().find(|&&s| s >= graph.n()) {
        return Err(GraphError::BadNode(bad));
    }
    let search_costs: Vec<Option<Rational>> = match mode {
        SsspMode::Exact => costs.to_vec(),
        SsspMode::RoundedPowers { eps } => {
            costs.iter().map(|c| c.as_ref().map(|c| round_up_to_power(c, eps))).collect()
        }
    };
    let label = shortest_labels(graph, &search_costs, sources, glue);
    let n = graph.n();
    let mut parent = vec![None; n];
    for v in 0..n {
        let Some(lv) = &label[v] else { continue };
        if sources.contains(&v) {
            continue;
        }
        parent[v] = graph.neighbors(v).iter().find_map(|&(u, e)| {
            let c = search_costs[e].as_ref()?;
            let lu = label[u].as_ref()?;
            (lu.extend(c, glue.contains(&e), v) == *lv).then_some(e)
        });
        debug_assert!(parent[v].is_some());
    }
    // a parent's label is strictly smaller, so label order is topological
    let mut order: Vec<NodeId> = (0..n).filter(|&v| label[v].is_some()).collect();
    order.sort_by(|&a, &b| label[a].cmp(&label[b]));
    let mut root = vec![None; n];
    let mut dist: Vec<Option<Rational>> = vec![None; n];
    for &v in &order {
        match parent[v] {
            None => {
                root[v] = Some(v);
                dist[v] = Some(Rational::zero());
            }
            Some(e) => {
                let p = graph.edge(e).other(v);
                root[v] = root[p];
                let c = costs[e].as_ref().expect("parent edge has a cost");
                dist[v] = dist[p].as_ref().map(|d| d + c);
            }
        }
    }
    let mut hops = vec![None; n];
    let mut edges = BTreeSet::new();
    for &v in &order {
        let keep = dist[v].as_ref().is_some_and(|d| d <= radius);
        if keep {
            hops[v] = label[v].as_ref().map(|l| l.hops);
            if let Some(e) = parent[v] {
                edges.insert(e);
            }
        } else {
            parent[v] = None;
            root[v] = None;
            dist[v] = None;
        }
    }
    Ok(SsspForest { parent, root, dist, hops, edges })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::rat;

    fn path3() -> WeightedGraph {
        WeightedGraph::new(3, [(0, 1, 1), (1, 2, 2)]).unwrap()
    }

    fn live(g: &WeightedGraph) -> Vec<Option<Rational>> {
        g.edges().iter().map(|e| Some(int(e.cost))).collect()
    }

    #[test]
    fn rejects_bad_graphs() {
        assert!(matches!(WeightedGraph::new(2, [(0, 0, 1)]), Err(GraphError::SelfLoop { .. })));
        assert!(matches!(WeightedGraph::new(2, [(0, 1, 1), (1, 0, 2)]), Err(GraphError::DuplicateEdge { .. })));
        assert!(matches!(WeightedGraph::new(2, [(0, 1, 0)]), Err(GraphError::NonPositiveCost { .. })));
        assert!(matches!(WeightedGraph::new(2, [(0, 5, 1)]), Err(GraphError::NodeOutOfRange { .. })));
    }

    #[test]
    fn collapse_keeps_min() {
        let g = WeightedGraph::collapsed(3, [(0, 1, 5), (1, 0, 2), (1, 2, 3), (2, 2, 1)]).unwrap();
        assert_eq!(g.m(), 2);
        assert_eq!(g.edge(0).cost, 2);
        assert_eq!(g.find_edge(2, 1), Some(1));
    }

    #[test]
    fn scaling_examples() {
        let (g, m) = scale_zero_weights(3, &[(0, 1, 0), (1, 2, 5)], &int(1)).unwrap();
        assert_eq!(m, 3);
        assert_eq!(g.edges().iter().map(|e| e.cost).collect::<Vec<_>>(), vec![1, 15]);
        let (g, m) = scale_zero_weights(4, &[(0, 1, 0), (1, 2, 0), (2, 3, 1)], &rat(1, 2)).unwrap();
        assert_eq!(m, 8);
        assert_eq!(g.edges().iter().map(|e| e.cost).collect::<Vec<_>>(), vec![1, 1, 8]);
        assert!(matches!(scale_zero_weights(2, &[(0, 1, -1)], &int(1)), Err(GraphError::NegativeCost { .. })));
        assert!(scale_zero_weights(2, &[(0, 1, 1)], &int(0)).is_err());
    }

    #[test]
    fn components_examples() {
        assert_eq!(connected_components(3, []).ids(), &[0, 1, 2]);
        assert_eq!(connected_components(3, [(0, 1)]).ids(), &[0, 0, 2]);
        assert_eq!(connected_components(4, [(1, 2), (2, 3)]).ids(), &[0, 1, 1, 1]);
        assert_eq!(connected_components(4, [(3, 2), (2, 1)]).ids(), &[0, 1, 1, 1]);
    }

    #[test]
    fn partition_from_labels() {
        let p = Partition::from_labels(&["x", "y", "x", "z"]);
        assert_eq!(p.ids(), &[0, 1, 0, 3]);
        assert_eq!(p.count(), 3);
    }

    #[test]
    fn msf_examples() {
        let tri = WeightedGraph::new(3, [(0, 1, 1), (1, 2, 2), (0, 2, 3)]).unwrap();
        let w: Vec<u64> = tri.edges().iter().map(|e| e.cost).collect();
        assert_eq!(minimum_spanning_forest(&tri, &w), vec![0, 1]);
        let p = path3();
        assert_eq!(minimum_spanning_forest(&p, &[5u64, 5]), vec![0, 1]);
    }

    #[test]
    fn sssp_examples() {
        let g = path3();
        let f = sssp_forest(&g, &live(&g), &[0].into(), &int(1), &SsspMode::Exact).unwrap();
        assert_eq!(f.dist, vec![Some(int(0)), Some(int(1)), None]);
        assert_eq!(f.edges, [0].into());
        let f = sssp_forest(&g, &live(&g), &[0, 2].into(), &int(0), &SsspMode::Exact).unwrap();
        assert_eq!(f.dist, vec![Some(int(0)), None, Some(int(0))]);
        assert!(f.edges.is_empty());
        assert_eq!(f.root, vec![Some(0), None, Some(2)]);
        assert_eq!(
            sssp_forest(&g, &live(&g), &BTreeSet::new(), &int(1), &SsspMode::Exact),
            Err(GraphError::EmptySources)
        );
    }

    #[test]
    fn zero_cost_ties_use_hops() {
        // 0 -0- 1 -0- 2 and 0 -0- 2: node 2 must hang directly off 0
        let g = WeightedGraph::new(3, [(0, 1, 1), (1, 2, 1), (0, 2, 1)]).unwrap();
        let c = vec![Some(int(0)); 3];
        let f = sssp_forest(&g, &c, &[0].into(), &int(0), &SsspMode::Exact).unwrap();
        assert_eq!(f.parent, vec![None, Some(0), Some(2)]);
    }

    #[test]
    fn glued_component_joins_one_tree() {
        // 0 -1- 1 =0= 2 -1- 3 with 1=2 glued; sources 0 and 3 tie at 1 and 2
        let g = WeightedGraph::new(4, [(0, 1, 1), (1, 2, 1), (2, 3, 1)]).unwrap();
        let c = vec![Some(int(1)), Some(int(0)), Some(int(1))];
        let plain = sssp_forest(&g, &c, &[0, 3].into(), &int(2), &SsspMode::Exact).unwrap();
        assert_eq!(plain.root, vec![Some(0), Some(0), Some(3), Some(3)]);
        let glued = sssp_forest_glued(&g, &c, &[0, 3].into(), &[1].into(), &int(2), &SsspMode::Exact).unwrap();
        assert_eq!(glued.root, vec![Some(0), Some(0), Some(0), Some(3)]);
        assert_eq!(glued.parent, vec![None, Some(0), Some(1), None]);
        assert_eq!(glued.dist, plain.dist);
    }

    #[test]
    fn rounding_to_powers() {
        let e = rat(1, 4);
        assert_eq!(round_up_to_power(&int(1), &e), int(1));
        assert_eq!(round_up_to_power(&int(2), &e), rat(625, 256));
        assert_eq!(round_up_to_power(&rat(1, 2), &e), rat(64, 125));
        assert_eq!(round_up_to_power(&int(0), &e), int(0));
    }
}
