//! Event-driven moat growing with the final reverse filter. Used as a
//! reference executor next to the shell decomposition.

use std::collections::BTreeSet;

use num_traits::Zero;

use crate::engine::{gw_factor, preflight, EngineConfig, EngineError, RunReport};
use crate::graph::{partition_of, Dsu, EdgeId, WeightedGraph};
use crate::rational::{int, Rational};
use crate::spec::ProblemSpec;

#[derive(Debug, Clone)]
pub struct GwRun {
    pub forest: BTreeSet<EdgeId>,
    /// Forest before the reverse filter.
    pub unfiltered: BTreeSet<EdgeId>,
    pub lb: Rational,
    pub report: RunReport,
}

pub fn run_gw_reference(graph: &WeightedGraph, spec: &ProblemSpec) -> Result<GwRun, EngineError> {
    let cfg = EngineConfig::quarter();
    preflight(graph, spec, &cfg)?;
    let n = graph.n();
    let t = spec.terminals(n).len();
    let mut grown: Vec<Rational> = vec![Rational::zero(); n];
    let mut dsu = Dsu::new(n);
    let mut chosen: BTreeSet<EdgeId> = BTreeSet::new();
    let mut lb = Rational::zero();
    let mut events = 0u32;
    loop {
        let parts = partition_of(graph, &chosen);
        let activity = spec.evaluate_components(&parts);
        let active_count = activity.active_ids().count();
        if active_count == 0 {
            break;
        }
        let f = |v: usize| u64::from(activity.is_active(parts.component_of(v)));
        let mut best: Option<(Rational, EdgeId)> = None;
        for e in graph.edges() {
            if dsu.find(e.u) == dsu.find(e.v) {
                continue;
            }
            let k = f(e.u) + f(e.v);
            if k == 0 {
                continue;
            }
            let slack = int(e.cost) - &grown[e.u] - &grown[e.v];
            let eta = slack / int(k);
            if best.as_ref().is_none_or(|(b, _)| eta < *b) {
                best = Some((eta, e.id));
            }
        }
        let Some((eta, e)) = best else {
            return Err(EngineError::Infeasible(activity.active_ids().next().unwrap_or(0)));
        };
        for (v, g) in grown.iter_mut().enumerate() {
            if f(v) == 1 {
                *g += &eta;
            }
        }
        lb += &eta * int(active_count as u64);
        let edge = graph.edge(e);
        dsu.union(edge.u, edge.v);
        chosen.insert(e);
        events += 1;
    }
    let forest = reverse_filter(graph, spec, &chosen);
    let report = RunReport {
        forest: forest.iter().copied().collect(),
        cost: graph.cost_of(&forest),
        lb: lb.clone(),
        ratio_bound: gw_factor(t),
        terminals: t,
        phases: events,
        phase_bound: n.saturating_sub(1) as u32,
        rounds: None,
    };
    Ok(GwRun { forest, unfiltered: chosen, lb, report })
}

/// Keeps e only if removing it leaves some active component.
pub fn reverse_filter(graph: &WeightedGraph, spec: &ProblemSpec, forest: &BTreeSet<EdgeId>) -> BTreeSet<EdgeId> {
    forest
        .iter()
        .copied()
        .filter(|e| {
            let mut without = forest.clone();
            without.remove(e);
            !spec.evaluate_components(&partition_of(graph, &without)).all_inactive()
        })
        .collect()
}
