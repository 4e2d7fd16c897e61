use std::collections::{BTreeMap, BTreeSet};

use num_traits::{One, Zero};
use serde::Serialize;
use thiserror::Error;

use crate::graph::{
    kruskal, partition_of, sssp_forest_glued, Dsu, EdgeId, GraphError, NodeId, Partition, SsspForest, SsspMode,
    WeightedGraph,
};
use crate::rational::{ceil_log, int, max0, rat, serde_str, Rational};
use crate::spec::{check_proper, ProblemSpec, SpecError};

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("epsilon values must satisfy 0 < eps <= 1/4 (got eps' = {}, eps'' = {})", .0 .0, .0 .1)]
    BadEpsilon(Box<(Rational, Rational)>),
    #[error("invalid problem: {0}")]
    Spec(#[from] SpecError),
    #[error("forest function is not proper: {0}")]
    Improper(String),
    #[error("infeasible: the graph component containing node {0} is active")]
    Infeasible(NodeId),
    #[error("phase limit {0} exceeded")]
    PhaseLimit(u32),
    #[error("internal invariant violated: {0}")]
    Invariant(String),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

#[derive(Debug, Clone)]
pub struct EngineConfig {
    pub eps_prime: Rational,
    pub eps_dprime: Rational,
    pub sssp: SsspMode,
    /// Run the exhaustive axiom sweep up to this many nodes.
    pub proper_check_limit: usize,
}

impl EngineConfig {
    pub fn new(eps_prime: Rational, eps_dprime: Rational) -> Result<Self, EngineError> {
        let quarter = rat(1, 4);
        let ok = |e: &Rational| *e > Rational::zero() && *e <= quarter;
        if !ok(&eps_prime) || !ok(&eps_dprime) {
            return Err(EngineError::BadEpsilon(Box::new((eps_prime, eps_dprime))));
        }
        Ok(Self { eps_prime, eps_dprime, sssp: SsspMode::Exact, proper_check_limit: 10 })
    }

    pub fn quarter() -> Self {
        Self::new(rat(1, 4), rat(1, 4)).expect("1/4 is in range")
    }

    /// (2 − 2/t)(1+ε′)(1+ε″)², with the leading factor 2 for t ≤ 1.
    pub fn ratio_bound(&self, t: usize) -> Rational {
        let one = Rational::one();
        let g = &one + &self.eps_dprime;
        gw_factor(t) * (&one + &self.eps_prime) * &g * &g
    }

    pub fn phase_bound(&self, n: usize, max_cost: u64) -> u32 {
        phase_bound(n, max_cost, &self.eps_prime, &self.eps_dprime)
    }
}

pub fn gw_factor(t: usize) -> Rational {
    if t <= 1 {
        int(2)
    } else {
        int(2) - rat(2, t as i64)
    }
}

/// ⌈log_{1+ε″}(4(1+ε′)·n·max_cost/ε″)⌉ + 1.
pub fn phase_bound(n: usize, max_cost: u64, eps_prime: &Rational, eps_dprime: &Rational) -> u32 {
    let one = Rational::one();
    let x = int(4) * (&one + eps_prime) * int(n as u64) * int(max_cost.max(1)) / eps_dprime;
    ceil_log(&(&one + eps_dprime), &x) + 1
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EngineState {
    pub forest: BTreeSet<EdgeId>,
    pub live: BTreeSet<EdgeId>,
    /// Indexed by edge id; only entries of live edges are meaningful.
    pub reduced: Vec<Rational>,
    pub components: Partition,
    pub active_terminals: BTreeSet<NodeId>,
    pub radius: Rational,
    pub lb: Rational,
    pub phase: u32,
}

impl EngineState {
    pub fn new(graph: &WeightedGraph, spec: &ProblemSpec, cfg: &EngineConfig) -> Self {
        Self {
            forest: BTreeSet::new(),
            live: (0..graph.m()).collect(),
            reduced: graph.edges().iter().map(|e| int(e.cost)).collect(),
            components: Partition::singletons(graph.n()),
            active_terminals: spec.terminals(graph.n()).into_iter().collect(),
            radius: &cfg.eps_dprime / int(4),
            lb: Rational::zero(),
            phase: 0,
        }
    }

    pub fn live_costs(&self, graph: &WeightedGraph) -> Vec<Option<Rational>> {
        (0..graph.m()).map(|e| self.live.contains(&e).then(|| self.reduced[e].clone())).collect()
    }

    /// The truncated shortest-path forest around the active terminals.
    pub fn grow(&self, graph: &WeightedGraph, mode: &SsspMode) -> Result<SsspForest, GraphError> {
        sssp_forest_glued(graph, &self.live_costs(graph), &self.active_terminals, &self.forest, &self.radius, mode)
    }

    pub fn is_done(&self) -> bool {
        self.active_terminals.is_empty()
    }

    pub fn check_invariants(
        &self,
        graph: &WeightedGraph,
        spec: &ProblemSpec,
        cfg: &EngineConfig,
    ) -> Result<(), EngineError> {
        let bad = |m: String| Err(EngineError::Invariant(m));
        let mut dsu = Dsu::new(graph.n());
        for &e in &self.forest {
            let edge = graph.edge(e);
            if !dsu.union(edge.u, edge.v) {
                return bad(format!("edge {e} closes a cycle in F"));
            }
            if !self.reduced[e].is_zero() {
                return bad(format!("forest edge {e} has nonzero reduced cost"));
            }
        }
        if self.components != partition_of(graph, &self.forest) {
            return bad("components out of date".into());
        }
        if self.active_terminals != active_terminals(spec, &self.components, graph.n()) {
            return bad("active terminal set out of date".into());
        }
        let mut r = &cfg.eps_dprime / int(4);
        for _ in 0..self.phase {
            r *= Rational::one() + &cfg.eps_dprime;
        }
        if r != self.radius {
            return bad("radius does not match phase".into());
        }
        Ok(())
    }
}

/// Minimum-id terminal of each active component.
pub fn active_terminals(spec: &ProblemSpec, components: &Partition, n: usize) -> BTreeSet<NodeId> {
    let activity = spec.evaluate_components(components);
    let mut best: BTreeMap<NodeId, NodeId> = BTreeMap::new();
    for t in spec.terminals(n) {
        let c = components.component_of(t);
        if activity.is_active(c) {
            best.entry(c).or_insert(t);
        }
    }
    best.into_values().collect()
}

/// c′(e) ← max(0, c′(e) − Σ_{v∈e} max(r − d(v), 0)) on live edges.
pub fn edge_cost_reduction(state: &mut EngineState, graph: &WeightedGraph, sssp: &SsspForest) {
    let cover = |v: NodeId| match &sssp.dist[v] {
        Some(d) => max0(&state.radius - d),
        None => Rational::zero(),
    };
    for &e in &state.live {
        let edge = graph.edge(e);
        let c_u = cover(edge.u) + cover(edge.v);
        if !c_u.is_zero() {
            state.reduced[e] = max0(&state.reduced[e] - c_u);
        }
    }
}

/// Live zero-cost edges joining two different trees of the truncated forest.
pub fn candidate_merges(state: &EngineState, graph: &WeightedGraph, sssp: &SsspForest) -> BTreeSet<EdgeId> {
    state
        .live
        .iter()
        .copied()
        .filter(|&e| {
            let edge = graph.edge(e);
            state.reduced[e].is_zero() && matches!((sssp.root[edge.u], sssp.root[edge.v]), (Some(a), Some(b)) if a != b)
        })
        .collect()
}

/// Two-tier Kruskal: the forest edges first, then merge candidates by id.
pub fn select_merge_forest(graph: &WeightedGraph, sssp: &SsspForest, merges: &BTreeSet<EdgeId>) -> BTreeSet<EdgeId> {
    let tier = |class: u8, es: &BTreeSet<EdgeId>| {
        es.iter().map(move |&e| (class, e, graph.edge(e).u, graph.edge(e).v)).collect::<Vec<_>>()
    };
    let mut items = tier(0, &sssp.edges);
    items.extend(tier(1, merges));
    kruskal(graph.n(), items).into_iter().filter(|e| merges.contains(e)).collect()
}

/// Adds A and every endpoint's path to its root. Returns the edges new to F.
pub fn root_path_selection(
    state: &mut EngineState,
    graph: &WeightedGraph,
    sssp: &SsspForest,
    merges: &BTreeSet<EdgeId>,
) -> Result<BTreeSet<EdgeId>, EngineError> {
    let mut added = BTreeSet::new();
    for &e in merges {
        let edge = graph.edge(e);
        added.insert(e);
        for v in [edge.u, edge.v] {
            if sssp.root[v].is_none() {
                return Err(EngineError::Invariant(format!(
                    "merge edge {e} has endpoint {v} outside the grown forest"
                )));
            }
            added.extend(sssp.path_to_root(graph, v));
        }
    }
    added.retain(|e| !state.forest.contains(e));
    state.forest.extend(added.iter().copied());
    Ok(added)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PruneOutcome {
    pub pruned: BTreeSet<EdgeId>,
    pub lb_increment: Rational,
}

/// Priority of a zero-cost live edge when deciding what to keep: forest
/// edges first, then this phase's shortest-path and merge edges, then the
/// rest. Only the last tier is ever pruned.
pub fn zero_edge_tier(
    e: EdgeId,
    forest: &BTreeSet<EdgeId>,
    sssp_edges: &BTreeSet<EdgeId>,
    merges: &BTreeSet<EdgeId>,
) -> u8 {
    if forest.contains(&e) {
        0
    } else if sssp_edges.contains(&e) || merges.contains(&e) {
        1
    } else {
        2
    }
}

/// Drops exhausted edges, recomputes components and active terminals, and
/// advances LB and the radius.
///
/// An exhausted edge is dropped only if the zero-cost edges kept so far
/// already join its endpoints. Dropping every exhausted edge outside the
/// current shortest-path forest can disconnect the live graph: once a
/// component turns inactive nobody grows from it, so the zero-cost edges it
/// reached earlier are not reselected, and two active components can end
/// up with no path between them. Forest edges are never dropped.
pub fn prune_and_advance(
    state: &mut EngineState,
    graph: &WeightedGraph,
    spec: &ProblemSpec,
    sssp: &SsspForest,
    merges: &BTreeSet<EdgeId>,
    cfg: &EngineConfig,
) -> PruneOutcome {
    let tier = |e: EdgeId| zero_edge_tier(e, &state.forest, &sssp.edges, merges);
    let zero: Vec<EdgeId> = state.live.iter().copied().filter(|&e| state.reduced[e].is_zero()).collect();
    let items = zero.iter().map(|&e| (tier(e), e, graph.edge(e).u, graph.edge(e).v)).collect();
    let keep: BTreeSet<EdgeId> = kruskal(graph.n(), items).into_iter().collect();
    let pruned: BTreeSet<EdgeId> = zero.into_iter().filter(|&e| tier(e) == 2 && !keep.contains(&e)).collect();
    state.live.retain(|e| !pruned.contains(e));
    state.components = partition_of(graph, &state.forest);
    state.active_terminals = active_terminals(spec, &state.components, graph.n());
    let lb_increment = &state.radius * int(state.active_terminals.len() as u64) / (Rational::one() + &cfg.eps_prime);
    state.lb += &lb_increment;
    state.radius *= Rational::one() + &cfg.eps_dprime;
    state.phase += 1;
    PruneOutcome { pruned, lb_increment }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PhaseTrace {
    pub phase: u32,
    #[serde(with = "serde_str")]
    pub radius: Rational,
    pub active_before: usize,
    pub active_after: usize,
    pub ball: Vec<NodeId>,
    pub sssp_edges: Vec<EdgeId>,
    pub merge_candidates: Vec<EdgeId>,
    pub merges: Vec<EdgeId>,
    pub added: Vec<EdgeId>,
    pub pruned: Vec<EdgeId>,
    #[serde(with = "serde_str")]
    pub lb_increment: Rational,
}

impl PhaseTrace {
    /// Applies the recorded transition to `state` (everything except reduced costs).
    pub fn replay(&self, state: &mut EngineState, graph: &WeightedGraph, spec: &ProblemSpec, cfg: &EngineConfig) {
        state.forest.extend(self.added.iter().copied());
        for e in &self.pruned {
            state.live.remove(e);
        }
        state.components = partition_of(graph, &state.forest);
        state.active_terminals = active_terminals(spec, &state.components, graph.n());
        state.lb += &self.lb_increment;
        state.radius *= Rational::one() + &cfg.eps_dprime;
        state.phase += 1;
    }
}

/// Per-block round counts of one distributed phase, keyed by block tag.
pub type BlockRounds = BTreeMap<String, u64>;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Default)]
pub struct RoundStats {
    pub setup: BlockRounds,
    pub per_phase: Vec<BlockRounds>,
    pub total_rounds: u64,
    pub messages: u64,
    pub bfs_depth: u32,
    /// Largest number of rounds any single partwise aggregation took.
    pub max_pa_rounds: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RunReport {
    pub forest: Vec<EdgeId>,
    pub cost: u64,
    #[serde(with = "serde_str")]
    pub lb: Rational,
    #[serde(with = "serde_str")]
    pub ratio_bound: Rational,
    pub terminals: usize,
    pub phases: u32,
    pub phase_bound: u32,
    pub rounds: Option<RoundStats>,
}

impl RunReport {
    /// c(F) ≤ ratio_bound · LB.
    pub fn self_certified(&self) -> bool {
        int(self.cost) <= &self.ratio_bound * &self.lb
    }
}

#[derive(Debug, Clone)]
pub struct ShellRun {
    pub forest: BTreeSet<EdgeId>,
    pub lb: Rational,
    pub report: RunReport,
    pub traces: Vec<PhaseTrace>,
    pub state: EngineState,
}

/// Checks shared by every executor: ε range, structure, axioms on small
/// graphs, and feasibility of the whole graph.
pub fn preflight(graph: &WeightedGraph, spec: &ProblemSpec, cfg: &EngineConfig) -> Result<(), EngineError> {
    EngineConfig::new(cfg.eps_prime.clone(), cfg.eps_dprime.clone())?;
    spec.validate_on(graph)?;
    if graph.n() <= cfg.proper_check_limit {
        let report = check_proper(spec, graph.n())?;
        if !report.is_proper() {
            return Err(EngineError::Improper(format!(
                "zero axiom holds: {}, symmetry violations: {}, disjointness violations: {}",
                report.zero_holds, report.symmetry_violations, report.disjointness_violations
            )));
        }
    }
    let whole = partition_of(graph, &(0..graph.m()).collect());
    let activity = spec.evaluate_components(&whole);
    if let Some(c) = activity.active_ids().next() {
        return Err(EngineError::Infeasible(c));
    }
    Ok(())
}

pub fn run_shell_decomposition(
    graph: &WeightedGraph,
    spec: &ProblemSpec,
    cfg: &EngineConfig,
) -> Result<ShellRun, EngineError> {
    preflight(graph, spec, cfg)?;
    let t = spec.terminals(graph.n()).len();
    let bound = cfg.phase_bound(graph.n(), graph.max_cost());
    let mut state = EngineState::new(graph, spec, cfg);
    let mut traces = Vec::new();
    while !state.is_done() {
        if state.phase > bound {
            return Err(EngineError::PhaseLimit(bound));
        }
        traces.push(run_phase(&mut state, graph, spec, cfg)?);
        if cfg!(debug_assertions) {
            state.check_invariants(graph, spec, cfg)?;
        }
    }
    let report = RunReport {
        forest: state.forest.iter().copied().collect(),
        cost: graph.cost_of(&state.forest),
        lb: state.lb.clone(),
        ratio_bound: cfg.ratio_bound(t),
        terminals: t,
        phases: state.phase,
        phase_bound: bound,
        rounds: None,
    };
    Ok(ShellRun { forest: state.forest.clone(), lb: state.lb.clone(), report, traces, state })
}

pub fn run_phase(
    state: &mut EngineState,
    graph: &WeightedGraph,
    spec: &ProblemSpec,
    cfg: &EngineConfig,
) -> Result<PhaseTrace, EngineError> {
    let active_before = state.active_terminals.len();
    let radius = state.radius.clone();
    let sssp = state.grow(graph, &cfg.sssp)?;
    edge_cost_reduction(state, graph, &sssp);
    let candidates = candidate_merges(state, graph, &sssp);
    let merges = select_merge_forest(graph, &sssp, &candidates);
    let added = root_path_selection(state, graph, &sssp, &merges)?;
    let outcome = prune_and_advance(state, graph, spec, &sssp, &merges, cfg);
    Ok(PhaseTrace {
        phase: state.phase - 1,
        radius,
        active_before,
        active_after: state.active_terminals.len(),
        ball: sssp.ball().into_iter().collect(),
        sssp_edges: sssp.edges.iter().copied().collect(),
        merge_candidates: candidates.into_iter().collect(),
        merges: merges.into_iter().collect(),
        added: added.into_iter().collect(),
        pruned: outcome.pruned.into_iter().collect(),
        lb_increment: outcome.lb_increment,
    })
}
