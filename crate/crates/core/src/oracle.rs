//! Exhaustive ground truth for small instances.

use std::collections::BTreeSet;

use num_traits::Zero;
use serde::Serialize;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::engine::{gw_factor, EngineConfig};
use crate::graph::{partition_of, Dsu, EdgeId, NodeId, WeightedGraph};
use crate::rational::{int, serde_str, Rational};
use crate::spec::{MaskEvaluator, ProblemSpec, SpecError};

pub const ALL_SUBSETS_EDGE_LIMIT: usize = 20;
pub const FOREST_SEARCH_NODE_LIMIT: usize = 12;
pub const CUT_CHECK_NODE_LIMIT: usize = 10;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum OracleError {
    #[error("instance too large for the oracle (n = {n}, m = {m})")]
    TooLarge { n: usize, m: usize },
    #[error("no feasible edge set exists")]
    Infeasible,
    #[error(transparent)]
    Spec(#[from] SpecError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SearchMode {
    /// Every one of the 2^m edge subsets.
    AllSubsets,
    /// Depth-first search over acyclic subsets with cost pruning.
    ForestsOnly,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct OptSolution {
    pub cost: u64,
    /// Sorted; lexicographically smallest among minimum-cost sets.
    pub edges: Vec<EdgeId>,
}

/// Chooses the all-subsets enumeration when m ≤ 20, else the forest search when n ≤ 12.
pub fn brute_force_opt(graph: &WeightedGraph, spec: &ProblemSpec) -> Result<OptSolution, OracleError> {
    if graph.m() <= ALL_SUBSETS_EDGE_LIMIT {
        brute_force_with(graph, spec, SearchMode::AllSubsets)
    } else if graph.n() <= FOREST_SEARCH_NODE_LIMIT {
        brute_force_with(graph, spec, SearchMode::ForestsOnly)
    } else {
        Err(OracleError::TooLarge { n: graph.n(), m: graph.m() })
    }
}

pub fn brute_force_with(
    graph: &WeightedGraph,
    spec: &ProblemSpec,
    mode: SearchMode,
) -> Result<OptSolution, OracleError> {
    let (n, m) = (graph.n(), graph.m());
    let too_large = OracleError::TooLarge { n, m };
    if n > 63 {
        return Err(too_large);
    }
    let eval = MaskEvaluator::compile(spec, n)?;
    match mode {
        SearchMode::AllSubsets => {
            if m > ALL_SUBSETS_EDGE_LIMIT {
                return Err(too_large);
            }
            let mut best: Option<OptSolution> = None;
            for mask in 0u32..(1u32 << m) {
                let edges: Vec<EdgeId> = (0..m).filter(|&e| mask >> e & 1 == 1).collect();
                let cost = graph.cost_of(&edges);
                if best.as_ref().is_some_and(|b| (b.cost, &b.edges) <= (cost, &edges)) {
                    continue;
                }
                if feasible_masks(graph, &eval, &edges) {
                    best = Some(OptSolution { cost, edges });
                }
            }
            best.ok_or(OracleError::Infeasible)
        }
        SearchMode::ForestsOnly => {
            if n > FOREST_SEARCH_NODE_LIMIT && m > ALL_SUBSETS_EDGE_LIMIT {
                return Err(too_large);
            }
            let mut search = ForestSearch { graph, eval: &eval, best: None, stack: Vec::new() };
            search.go(0, 0, &Dsu::new(n));
            search.best.ok_or(OracleError::Infeasible)
        }
    }
}

struct ForestSearch<'a> {
    graph: &'a WeightedGraph,
    eval: &'a MaskEvaluator,
    best: Option<OptSolution>,
    stack: Vec<EdgeId>,
}

impl ForestSearch<'_> {
    fn go(&mut self, next: EdgeId, cost: u64, dsu: &Dsu) {
        if self.best.as_ref().is_some_and(|b| b.cost < cost) {
            return;
        }
        if feasible_masks(self.graph, self.eval, &self.stack) {
            let better = match &self.best {
                None => true,
                Some(b) => (cost, &self.stack) < (b.cost, &b.edges),
            };
            if better {
                self.best = Some(OptSolution { cost, edges: self.stack.clone() });
            }
            // supersets cost strictly more
            return;
        }
        for e in next..self.graph.m() {
            let edge = self.graph.edge(e);
            let mut d = dsu.clone();
            if !d.union(edge.u, edge.v) {
                continue;
            }
            self.stack.push(e);
            self.go(e + 1, cost + edge.cost, &d);
            self.stack.pop();
        }
    }
}

fn component_masks(graph: &WeightedGraph, edges: &[EdgeId]) -> Vec<u64> {
    let n = graph.n();
    let mut dsu = Dsu::new(n);
    for &e in edges {
        dsu.union(graph.edge(e).u, graph.edge(e).v);
    }
    let mut masks = vec![0u64; n];
    for v in 0..n {
        masks[dsu.find(v)] |= 1 << v;
    }
    masks.retain(|&m| m != 0);
    masks
}

fn feasible_masks(graph: &WeightedGraph, eval: &MaskEvaluator, edges: &[EdgeId]) -> bool {
    component_masks(graph, edges).into_iter().all(|c| !eval.f(c))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub enum Feasibility {
    Feasible,
    /// A set S with f(S) = 1 and no selected edge leaving it.
    Violated {
        witness: Vec<NodeId>,
    },
}

impl Feasibility {
    pub fn holds(&self) -> bool {
        matches!(self, Feasibility::Feasible)
    }
}

/// Component check, plus every cut when n ≤ 10.
pub fn check_primal_feasible(graph: &WeightedGraph, spec: &ProblemSpec, forest: &BTreeSet<EdgeId>) -> Feasibility {
    let parts = partition_of(graph, forest);
    let activity = spec.evaluate_components(&parts);
    if let Some(c) = activity.active_ids().next() {
        let witness = parts.components().remove(&c).unwrap_or_default();
        return Feasibility::Violated { witness };
    }
    let n = graph.n();
    if n <= CUT_CHECK_NODE_LIMIT {
        let eval = MaskEvaluator::compile(spec, n).expect("n is small");
        let edge_masks: Vec<u64> =
            forest.iter().map(|&e| (1u64 << graph.edge(e).u) | (1u64 << graph.edge(e).v)).collect();
        for s in 1u64..(1 << n) {
            if !eval.f(s) {
                continue;
            }
            let crossing = edge_masks.iter().any(|&em| {
                let k = (em & s).count_ones();
                k == 1
            });
            if !crossing {
                return Feasibility::Violated { witness: (0..n).filter(|&v| s >> v & 1 == 1).collect() };
            }
        }
    }
    Feasibility::Feasible
}

/// Stable fingerprint of (graph, spec).
pub fn instance_digest(graph: &WeightedGraph, spec: &ProblemSpec) -> String {
    let mut h = Sha256::new();
    h.update(format!("n={}\n", graph.n()));
    for e in graph.edges() {
        h.update(format!("{} {} {} {}\n", e.id, e.u, e.v, e.cost));
    }
    let virt: Vec<NodeId> = graph.virtual_nodes().collect();
    h.update(format!("virtual={virt:?}\n{spec:?}\n"));
    hex::encode(h.finalize())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RatioKind {
    Shell(EngineConfig),
    Gw,
}

impl RatioKind {
    pub fn bound(&self, t: usize) -> Rational {
        match self {
            RatioKind::Shell(cfg) => cfg.ratio_bound(t),
            RatioKind::Gw => gw_factor(t),
        }
    }
}

impl PartialEq for EngineConfig {
    fn eq(&self, other: &Self) -> bool {
        self.eps_prime == other.eps_prime && self.eps_dprime == other.eps_dprime && self.sssp == other.sssp
    }
}

impl Eq for EngineConfig {}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Link {
    pub name: &'static str,
    pub holds: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Certificate {
    pub digest: String,
    pub opt: Option<OptSolution>,
    pub cost: u64,
    #[serde(with = "serde_str")]
    pub lb: Rational,
    #[serde(with = "serde_str")]
    pub ratio_bound: Rational,
    pub terminals: usize,
    pub feasibility: Feasibility,
    pub links: Vec<Link>,
}

impl Certificate {
    pub fn passed(&self) -> bool {
        self.links.iter().all(|l| l.holds)
    }

    pub fn failures(&self) -> Vec<&'static str> {
        self.links.iter().filter(|l| !l.holds).map(|l| l.name).collect()
    }
}

/// Re-derives cost, terminal count and ratio from raw data and checks the
/// chain LB ≤ OPT ≤ c(F) ≤ ratio·LB, plus feasibility of F.
pub fn certify_run(
    graph: &WeightedGraph,
    spec: &ProblemSpec,
    forest: &BTreeSet<EdgeId>,
    lb: &Rational,
    kind: &RatioKind,
    opt: Option<&OptSolution>,
) -> Certificate {
    let cost = graph.cost_of(forest);
    let t = spec.terminals(graph.n()).len();
    let ratio_bound = kind.bound(t);
    let feasibility = check_primal_feasible(graph, spec, forest);
    let mut links = vec![
        Link { name: "feasible", holds: feasibility.holds() },
        Link { name: "lb >= 0", holds: *lb >= Rational::zero() },
        Link { name: "cost <= ratio * lb", holds: int(cost) <= &ratio_bound * lb },
    ];
    if let Some(o) = opt {
        links.push(Link { name: "lb <= opt", holds: *lb <= int(o.cost) });
        links.push(Link { name: "opt <= cost", holds: o.cost <= cost });
    }
    Certificate {
        digest: instance_digest(graph, spec),
        opt: opt.cloned(),
        cost,
        lb: lb.clone(),
        ratio_bound,
        terminals: t,
        feasibility,
        links,
    }
}
