//! The shell decomposition executed on the simulated network.
//!
//! Per-edge state (reduced cost, live flag, forest membership) is held by
//! both endpoints; both apply the same local rule, so the simulator keeps a
//! single copy. The virtual node's state is replicated and only changes
//! through global aggregates.

use std::collections::{BTreeMap, BTreeSet};

use num_traits::{One, Zero};
use shellforest_core::engine::{preflight, zero_edge_tier, BlockRounds, RoundStats};
use shellforest_core::graph::SsspMode;
use shellforest_core::rational::{int, max0};
use shellforest_core::{EdgeId, EngineConfig, EngineError, NodeId, ProblemSpec, Rational, RunReport, WeightedGraph};
use thiserror::Error;

use crate::ffe::{ffe_distributed, ffe_setup, FfeOptions, Knowledge};
use crate::msf::msf_partwise;
use crate::network::{SimConfig, SimError, SimNetwork, Tag};
use crate::parts::{build_component_view, component_aggregate, exchange, global_aggregate, ComponentView, Ctx};
use crate::rps::root_paths;
use crate::sssp::distributed_sssp;
use crate::tree::build_bfs_tree;

#[derive(Debug, Error)]
pub enum DistError {
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error("unsupported: {0}")]
    Unsupported(String),
}

#[derive(Debug, Clone, Default)]
pub struct DistConfig {
    pub sim: SimConfig,
    pub ffe: FfeOptions,
}

#[derive(Debug, Clone)]
pub struct DistRun {
    pub forest: BTreeSet<EdgeId>,
    pub lb: Rational,
    pub report: RunReport,
    /// Activity map after each phase.
    pub activity: Vec<shellforest_core::ActivityMap>,
    pub trace: Vec<crate::network::TraceRecord>,
}

const BLOCKS: [Tag; 7] = [Tag::Sssp, Tag::Ecr, Tag::Cmi, Tag::Msf, Tag::Rps, Tag::Ffe, Tag::Sync];

fn snapshot(net: &SimNetwork) -> BTreeMap<Tag, u64> {
    net.tally().clone()
}

fn diff(net: &SimNetwork, before: &BTreeMap<Tag, u64>, tags: &[Tag]) -> BlockRounds {
    tags.iter()
        .map(|t| {
            let now = net.tally().get(t).copied().unwrap_or(0);
            (t.name().to_string(), now - before.get(t).copied().unwrap_or(0))
        })
        .collect()
}

struct Runner<'a> {
    graph: &'a WeightedGraph,
    spec: &'a ProblemSpec,
    cx: Ctx<'a>,
    know: Knowledge,
    opts: FfeOptions,
    depth: u64,
}

impl Runner<'_> {
    fn barrier(&self, net: &mut SimNetwork) {
        net.charge(Tag::Sync, 2 * self.depth);
    }

    fn view_of(&self, net: &mut SimNetwork, forest: &BTreeSet<EdgeId>) -> Result<ComponentView, SimError> {
        let n = net.n();
        let mut nbrs = vec![Vec::new(); n];
        let mut touches = vec![false; n];
        for &e in forest {
            let edge = self.graph.edge(e);
            let (u, v) = (edge.u, edge.v);
            match (net.is_physical(u), net.is_physical(v)) {
                (true, true) => {
                    nbrs[u].push(v);
                    nbrs[v].push(u);
                }
                (true, false) => touches[u] = true,
                (false, true) => touches[v] = true,
                (false, false) => {}
            }
        }
        build_component_view(net, &self.cx, &nbrs, &touches, Tag::Ffe)
    }

    /// Minimum-id terminal of each active component, and how many there are.
    fn pick_terminals(
        &self,
        net: &mut SimNetwork,
        view: &ComponentView,
        active: &[bool],
    ) -> Result<(Vec<bool>, u64), SimError> {
        let n = net.n();
        let term = |v: NodeId| self.know.is_terminal(self.spec, v);
        let vals = (0..n).map(|v| (net.is_physical(v) && term(v)).then_some(v)).collect();
        let virt = self.cx.virtual_node.filter(|&s| term(s));
        let agg = component_aggregate(net, &self.cx, view, vals, virt, vec![None; n], |a, b| *a.min(b), Tag::Ffe)?;
        let chosen: Vec<bool> = (0..n).map(|v| active[v] && agg.per_node[v] == Some(v)).collect();
        let mut counts: Vec<Option<u64>> = (0..n).map(|v| net.is_physical(v).then_some(u64::from(chosen[v]))).collect();
        if let Some(s) = self.cx.virtual_node {
            let r = self.cx.bfs.root;
            counts[r] = counts[r].map(|c| c + u64::from(chosen[s]));
        }
        let (total, _) = global_aggregate(net, self.cx.bfs, counts, |a, b| a + b, Tag::Ffe)?;
        Ok((chosen, total[self.cx.bfs.root].unwrap_or(0)))
    }
}

/// Runs the phases of the shell decomposition on a simulated network. The
/// forest equals the centralized one when all randomized evaluations succeed.
pub fn run_distributed_cfp(
    graph: &WeightedGraph,
    spec: &ProblemSpec,
    cfg: &EngineConfig,
    dist: &DistConfig,
    seed: Option<u64>,
) -> Result<DistRun, DistError> {
    preflight(graph, spec, cfg)?;
    if cfg.sssp != SsspMode::Exact {
        return Err(DistError::Unsupported("the simulator runs exact shortest paths only".into()));
    }
    let virtuals: Vec<NodeId> = graph.virtual_nodes().collect();
    if virtuals.len() > 1 {
        return Err(DistError::Unsupported("at most one virtual node".into()));
    }
    let n = graph.n();
    let mut net = SimNetwork::new(graph, dist.sim.clone())?;
    let root = net.physical_nodes().next().ok_or_else(|| DistError::Unsupported("no physical node".into()))?;
    let bfs = build_bfs_tree(&mut net, root)?;
    let cx = Ctx { bfs: &bfs, virtual_node: virtuals.first().copied() };
    let know = ffe_setup(&mut net, &cx, spec, seed, Tag::Setup)?;
    let run = Runner { graph, spec, cx, know, opts: dist.ffe.clone(), depth: u64::from(bfs.depth) };
    let setup = diff(&net, &BTreeMap::new(), &[Tag::Bfs, Tag::Setup]);

    let terminals: Vec<NodeId> = (0..n).filter(|&v| run.know.is_terminal(spec, v)).collect();
    let t = terminals.len();
    let bound = cfg.phase_bound(n, graph.max_cost());
    let mut reduced: Vec<Rational> = graph.edges().iter().map(|e| int(e.cost)).collect();
    let mut live = vec![true; graph.m()];
    let mut forest: BTreeSet<EdgeId> = BTreeSet::new();
    let mut sources = vec![false; n];
    for &v in &terminals {
        sources[v] = true;
    }
    let mut count = t as u64;
    let mut radius = &cfg.eps_dprime / int(4);
    let mut lb = Rational::zero();
    let mut phase = 0u32;
    let mut per_phase = Vec::new();
    let mut activity = Vec::new();

    while count > 0 {
        if phase > bound {
            return Err(EngineError::PhaseLimit(bound).into());
        }
        let before = snapshot(&net);

        let costs: Vec<Option<Rational>> = (0..graph.m()).map(|e| live[e].then(|| reduced[e].clone())).collect();
        let glue: Vec<bool> = (0..graph.m()).map(|e| forest.contains(&e)).collect();
        let sp = distributed_sssp(&mut net, &run.cx, graph, &costs, &glue, &sources, &radius, Tag::Sssp)?;
        run.barrier(&mut net);

        // edge cost reduction: both endpoints know both distances, no messages
        net.charge(Tag::Ecr, 0);
        let cover = |v: NodeId| sp.dist[v].as_ref().map_or_else(Rational::zero, |d| max0(&radius - d));
        for e in graph.edges() {
            if live[e.id] {
                let c = cover(e.u) + cover(e.v);
                if !c.is_zero() {
                    reduced[e.id] = max0(&reduced[e.id] - c);
                }
            }
        }
        let sssp_edges: BTreeSet<EdgeId> = (0..n).filter_map(|v| sp.parent[v]).collect();
        let merges: BTreeSet<EdgeId> = graph
            .edges()
            .iter()
            .filter(|e| {
                live[e.id]
                    && reduced[e.id].is_zero()
                    && matches!((sp.root[e.u], sp.root[e.v]), (Some(a), Some(b)) if a != b)
            })
            .map(|e| e.id)
            .collect();
        run.barrier(&mut net);

        // children learn who their parent is
        let notes = (0..n)
            .map(|v| match sp.parent[v] {
                Some(e) if net.is_physical(v) => {
                    let p = graph.edge(e).other(v);
                    if net.is_physical(p) {
                        vec![(p, ())]
                    } else {
                        Vec::new()
                    }
                }
                _ => Vec::new(),
            })
            .collect();
        let heard = exchange(&mut net, notes, Tag::Cmi)?;
        let children: Vec<Vec<NodeId>> = heard.into_iter().map(|h| h.into_iter().map(|(c, _)| c).collect()).collect();
        run.barrier(&mut net);

        let weights: Vec<Option<u64>> = (0..graph.m())
            .map(|e| {
                if sssp_edges.contains(&e) {
                    Some(0)
                } else if merges.contains(&e) {
                    Some(1)
                } else {
                    None
                }
            })
            .collect();
        let msf = msf_partwise(&mut net, &run.cx, graph, &weights, Tag::Msf)?;
        let chosen: BTreeSet<EdgeId> = msf.forest.intersection(&merges).copied().collect();
        run.barrier(&mut net);

        let mut marked = vec![false; n];
        for &e in &chosen {
            marked[graph.edge(e).u] = true;
            marked[graph.edge(e).v] = true;
        }
        let paths = root_paths(&mut net, &run.cx, graph, &sp, &children, &marked, Tag::Rps)?;
        forest.extend(chosen.iter().copied());
        forest.extend(paths);
        run.barrier(&mut net);

        // exhausted edges go only when kept zero-cost edges already join
        // their endpoints; a spanning forest over the tiers decides which
        let tiers: Vec<Option<u8>> = (0..graph.m())
            .map(|e| (live[e] && reduced[e].is_zero()).then(|| zero_edge_tier(e, &forest, &sssp_edges, &chosen)))
            .collect();
        let weights: Vec<Option<u64>> = tiers.iter().map(|t| t.map(u64::from)).collect();
        let keep = msf_partwise(&mut net, &run.cx, graph, &weights, Tag::Msf)?;
        for e in 0..graph.m() {
            if tiers[e] == Some(2) && !keep.forest.contains(&e) {
                live[e] = false;
            }
        }
        run.barrier(&mut net);

        let view = run.view_of(&mut net, &forest)?;
        let ffe = ffe_distributed(&mut net, &run.cx, &view, spec, &run.know, phase, &run.opts, Tag::Ffe)?;
        let (next, c) = run.pick_terminals(&mut net, &view, &ffe.active)?;
        run.barrier(&mut net);
        activity.push(ffe.activity);
        sources = next;
        count = c;

        lb += &radius * int(count) / (Rational::one() + &cfg.eps_prime);
        radius *= Rational::one() + &cfg.eps_dprime;
        phase += 1;
        per_phase.push(diff(&net, &before, &BLOCKS));
    }

    let rounds = RoundStats {
        setup,
        per_phase,
        total_rounds: net.rounds(),
        messages: net.messages(),
        bfs_depth: bfs.depth,
        max_pa_rounds: net.max_pa_rounds(),
    };
    let report = RunReport {
        forest: forest.iter().copied().collect(),
        cost: graph.cost_of(&forest),
        lb: lb.clone(),
        ratio_bound: cfg.ratio_bound(t),
        terminals: t,
        phases: phase,
        phase_bound: bound,
        rounds: Some(rounds),
    };
    Ok(DistRun { forest, lb, report, activity, trace: net.trace().to_vec() })
}
