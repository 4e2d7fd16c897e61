//! Runs instances through one executor and certifies every result.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::Serialize;
use shellforest_congest::network::TraceRecord;
use shellforest_congest::{run_distributed_cfp, DistConfig};
use shellforest_core::gw::run_gw_reference;
use shellforest_core::oracle::{brute_force_opt, certify_run, Certificate, RatioKind};
use shellforest_core::rational::serde_str;
use shellforest_core::{run_shell_decomposition, EdgeId, EngineConfig, Rational, RunReport};

use crate::instance::InstanceFile;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    /// Shell decomposition, self-certified against its own LB.
    Central,
    /// The same algorithm on the message-passing simulator.
    Distributed,
    /// Classic event-driven moat growing with reverse delete.
    GwRef,
    /// Shell decomposition certified against the brute-force optimum.
    Oracle,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Central => "central",
            Mode::Distributed => "distributed",
            Mode::GwRef => "gw-ref",
            Mode::Oracle => "oracle",
        })
    }
}

impl FromStr for Mode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "central" => Ok(Mode::Central),
            "distributed" => Ok(Mode::Distributed),
            "gw-ref" => Ok(Mode::GwRef),
            "oracle" => Ok(Mode::Oracle),
            _ => Err(format!("unknown mode {s:?}")),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub mode: Mode,
    pub engine: EngineConfig,
    pub seed: Option<u64>,
    /// Brute force runs only up to this many edges. Central and distributed
    /// modes use it opportunistically; oracle mode fails beyond it.
    pub max_oracle_edges: usize,
    pub dist: DistConfig,
}

impl ExperimentConfig {
    pub fn new(mode: Mode) -> Self {
        Self { mode, engine: EngineConfig::quarter(), seed: None, max_oracle_edges: 0, dist: DistConfig::default() }
    }
}

/// Round totals of a distributed run.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RoundSummary {
    pub total: u64,
    pub messages: u64,
    pub bfs_depth: u32,
    pub max_pa: u64,
    /// Sum over phases, per building block.
    pub per_block: BTreeMap<String, u64>,
    /// Largest single-phase count, per building block.
    pub max_per_phase: BTreeMap<String, u64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Row {
    pub name: String,
    pub mode: Mode,
    pub variant: String,
    pub n: usize,
    pub m: usize,
    pub terminals: usize,
    pub cost: Option<u64>,
    #[serde(serialize_with = "opt_rational")]
    pub lb: Option<Rational>,
    #[serde(serialize_with = "opt_rational")]
    pub ratio_bound: Option<Rational>,
    pub opt: Option<u64>,
    pub phases: Option<u32>,
    pub phase_bound: Option<u32>,
    pub forest: Vec<EdgeId>,
    pub rounds: Option<RoundSummary>,
    /// Distributed mode: whether the forest equals the centralized one.
    pub matches_central: Option<bool>,
    pub failures: Vec<String>,
    pub error: Option<String>,
    #[serde(skip)]
    pub trace: Vec<TraceRecord>,
}

fn opt_rational<S: serde::Serializer>(r: &Option<Rational>, s: S) -> Result<S::Ok, S::Error> {
    match r {
        Some(r) => serde_str::serialize(r, s),
        None => s.serialize_none(),
    }
}

impl Row {
    fn empty(name: &str, mode: Mode, inst: &InstanceFile) -> Self {
        let n = inst.graph.n();
        Row {
            name: name.to_string(),
            mode,
            variant: inst.spec.variant().to_string(),
            n,
            m: inst.graph.m(),
            terminals: inst.spec.terminals(n).len(),
            cost: None,
            lb: None,
            ratio_bound: None,
            opt: None,
            phases: None,
            phase_bound: None,
            forest: Vec::new(),
            rounds: None,
            matches_central: None,
            failures: Vec::new(),
            error: None,
            trace: Vec::new(),
        }
    }

    /// Ran to completion and every certificate link held.
    pub fn certified(&self) -> bool {
        self.error.is_none() && self.failures.is_empty()
    }

    fn absorb(&mut self, report: &RunReport, cert: &Certificate) {
        self.cost = Some(report.cost);
        self.lb = Some(report.lb.clone());
        self.ratio_bound = Some(cert.ratio_bound.clone());
        self.opt = cert.opt.as_ref().map(|o| o.cost);
        self.phases = Some(report.phases);
        self.phase_bound = Some(report.phase_bound);
        self.forest = report.forest.clone();
        self.failures.extend(cert.failures().into_iter().map(String::from));
        if report.phases > report.phase_bound {
            self.failures.push("phases <= bound".into());
        }
    }
}

fn summarize(stats: &shellforest_core::engine::RoundStats) -> RoundSummary {
    let mut per_block = BTreeMap::new();
    let mut max_per_phase: BTreeMap<String, u64> = BTreeMap::new();
    for phase in &stats.per_phase {
        for (k, &v) in phase {
            *per_block.entry(k.clone()).or_insert(0) += v;
            let slot = max_per_phase.entry(k.clone()).or_insert(0);
            *slot = (*slot).max(v);
        }
    }
    RoundSummary {
        total: stats.total_rounds,
        messages: stats.messages,
        bfs_depth: stats.bfs_depth,
        max_pa: stats.max_pa_rounds,
        per_block,
        max_per_phase,
    }
}

pub fn run_one(name: &str, inst: &InstanceFile, cfg: &ExperimentConfig) -> Row {
    let mut row = Row::empty(name, cfg.mode, inst);
    let (g, spec) = (&inst.graph, &inst.spec);
    let opt = if g.m() <= cfg.max_oracle_edges {
        match brute_force_opt(g, spec) {
            Ok(o) => Some(o),
            Err(e) if cfg.mode == Mode::Oracle => {
                row.error = Some(e.to_string());
                return row;
            }
            Err(_) => None,
        }
    } else if cfg.mode == Mode::Oracle {
        row.error = Some(format!("m = {} exceeds the oracle limit of {} edges", g.m(), cfg.max_oracle_edges));
        return row;
    } else {
        None
    };
    let shell = RatioKind::Shell(cfg.engine.clone());
    match cfg.mode {
        Mode::Central | Mode::Oracle => match run_shell_decomposition(g, spec, &cfg.engine) {
            Ok(run) => {
                let cert = certify_run(g, spec, &run.forest, &run.lb, &shell, opt.as_ref());
                row.absorb(&run.report, &cert);
            }
            Err(e) => row.error = Some(e.to_string()),
        },
        Mode::GwRef => match run_gw_reference(g, spec) {
            Ok(run) => {
                let cert = certify_run(g, spec, &run.forest, &run.lb, &RatioKind::Gw, opt.as_ref());
                row.absorb(&run.report, &cert);
            }
            Err(e) => row.error = Some(e.to_string()),
        },
        Mode::Distributed => match run_distributed_cfp(g, spec, &cfg.engine, &cfg.dist, cfg.seed) {
            Ok(run) => {
                let cert = certify_run(g, spec, &run.forest, &run.lb, &shell, opt.as_ref());
                row.absorb(&run.report, &cert);
                row.rounds = run.report.rounds.as_ref().map(summarize);
                row.matches_central =
                    run_shell_decomposition(g, spec, &cfg.engine).ok().map(|c| c.forest == run.forest);
                row.trace = run.trace;
            }
            Err(e) => row.error = Some(e.to_string()),
        },
    }
    row
}

/// Instances run independently and in parallel; rows come back in input order.
pub fn run_experiment(instances: &[(String, InstanceFile)], cfg: &ExperimentConfig) -> Vec<Row> {
    instances.par_iter().map(|(name, inst)| run_one(name, inst, cfg)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use shellforest_core::{ProblemSpec, WeightedGraph};

    fn path() -> InstanceFile {
        let graph = WeightedGraph::new(3, [(0, 1, 1), (1, 2, 2)]).unwrap();
        let spec = ProblemSpec::SfIc { labels: vec![Some(0), None, Some(0)] };
        InstanceFile { graph, spec, generator: None }
    }

    #[test]
    fn path_certifies_in_every_mode() {
        for mode in [Mode::Central, Mode::Distributed, Mode::GwRef, Mode::Oracle] {
            let mut cfg = ExperimentConfig::new(mode);
            cfg.max_oracle_edges = 20;
            let row = run_one("path", &path(), &cfg);
            assert!(row.certified(), "{mode}: {:?} {:?}", row.failures, row.error);
            assert_eq!(row.cost, Some(3));
            assert_eq!(row.opt, Some(3));
        }
    }

    #[test]
    fn oracle_mode_respects_the_size_limit() {
        let mut cfg = ExperimentConfig::new(Mode::Oracle);
        cfg.max_oracle_edges = 1;
        let row = run_one("path", &path(), &cfg);
        assert!(!row.certified());
        assert!(row.error.unwrap().contains("oracle limit"));
    }

    #[test]
    fn distributed_rows_carry_rounds() {
        let row = run_one("path", &path(), &ExperimentConfig::new(Mode::Distributed));
        let r = row.rounds.unwrap();
        assert_eq!(r.bfs_depth, 2);
        assert!(r.total > 0);
        assert_eq!(row.matches_central, Some(true));
    }
}
