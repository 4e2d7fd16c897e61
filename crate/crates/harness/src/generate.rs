//! Instance generators: random connected graphs with per-variant problem
//! data, and the double-star family whose heavy edges reveal whether A = B.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use shellforest_core::spec::augment_fpc;
use shellforest_core::{NodeId, ProblemSpec, Variant, WeightedGraph};
use thiserror::Error;

use crate::instance::{GeneratorMeta, InstanceFile};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GenError {
    #[error("{0}")]
    Params(String),
    #[error(transparent)]
    Spec(#[from] shellforest_core::SpecError),
    #[error(transparent)]
    Graph(#[from] shellforest_core::GraphError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    /// Random recursive spanning tree plus uniform extra edges.
    Random,
    /// Hamiltonian path on a random order plus uniform chords; large diameter.
    Path,
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Family::Random => "random",
            Family::Path => "path",
        })
    }
}

impl FromStr for Family {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "random" => Ok(Family::Random),
            "path" => Ok(Family::Path),
            _ => Err(format!("unknown family {s:?} (expected random or path)")),
        }
    }
}

#[derive(Debug, Clone)]
pub struct RandomParams {
    pub family: Family,
    /// Physical nodes. FPC adds the facility on top.
    pub n: usize,
    /// Physical edges.
    pub m: usize,
    pub max_cost: u64,
    pub variant: Variant,
    /// Groups (SF-IC/CIC), requests (SF-CR/SCR), |X| = |Y| (PPC) or clients
    /// (FPC). Defaults depend on n.
    pub k: Option<usize>,
    pub seed: u64,
}

impl RandomParams {
    pub fn new(variant: Variant, n: usize, m: usize, seed: u64) -> Self {
        Self { family: Family::Random, n, m, max_cost: 8, variant, k: None, seed }
    }

    fn default_k(&self) -> usize {
        match self.variant {
            Variant::SfIc | Variant::SfCic | Variant::Ppc => (self.n / 4).max(1),
            Variant::SfCr | Variant::SfScr | Variant::Fpc => (self.n / 3).max(1),
        }
    }
}

fn random_graph(p: &RandomParams, rng: &mut ChaCha8Rng) -> Result<WeightedGraph, GenError> {
    let (n, m) = (p.n, p.m);
    if n < 2 {
        return Err(GenError::Params("need at least 2 nodes".into()));
    }
    if m < n - 1 || m > n * (n - 1) / 2 {
        return Err(GenError::Params(format!("m = {m} must lie in [{}, {}] for n = {n}", n - 1, n * (n - 1) / 2)));
    }
    if p.max_cost == 0 {
        return Err(GenError::Params("max cost must be at least 1".into()));
    }
    let mut order: Vec<NodeId> = (0..n).collect();
    order.shuffle(rng);
    let mut pairs = BTreeSet::new();
    for i in 1..n {
        let j = match p.family {
            Family::Random => rng.gen_range(0..i),
            Family::Path => i - 1,
        };
        let (a, b) = (order[i], order[j]);
        pairs.insert((a.min(b), a.max(b)));
    }
    let mut rest: Vec<(NodeId, NodeId)> =
        (0..n).flat_map(|u| (u + 1..n).map(move |v| (u, v))).filter(|e| !pairs.contains(e)).collect();
    rest.shuffle(rng);
    pairs.extend(rest.into_iter().take(m - (n - 1)));
    let edges: Vec<_> = pairs.into_iter().map(|(u, v)| (u, v, rng.gen_range(1..=p.max_cost))).collect();
    Ok(WeightedGraph::new(n, edges)?)
}

/// Connected random instance; bit-identical for equal parameters.
pub fn gen_random(p: &RandomParams) -> Result<InstanceFile, GenError> {
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    let graph = random_graph(p, &mut rng)?;
    let n = p.n;
    let k = p.k.unwrap_or_else(|| p.default_k());
    if k == 0 {
        return Err(GenError::Params("k must be positive".into()));
    }
    let mut nodes: Vec<NodeId> = (0..n).collect();
    nodes.shuffle(&mut rng);
    let (graph, spec) = match p.variant {
        Variant::SfIc | Variant::SfCic => {
            if 2 * k > n {
                return Err(GenError::Params(format!("{k} groups of at least 2 need n ≥ {}", 2 * k)));
            }
            let mut labels = vec![None; n];
            for (i, &v) in nodes.iter().take(2 * k).enumerate() {
                labels[v] = Some((i / 2) as u32);
            }
            // leftover nodes join a random group or stay Steiner nodes
            for &v in &nodes[2 * k..] {
                if rng.gen_bool(0.5) {
                    labels[v] = Some(rng.gen_range(0..k) as u32);
                }
            }
            let spec = if p.variant == Variant::SfIc {
                ProblemSpec::SfIc { labels }
            } else {
                ProblemSpec::cic_from_labels(labels)
            };
            (graph, spec)
        }
        Variant::SfCr | Variant::SfScr => {
            let max_pairs = n * (n - 1) / 2;
            if k > max_pairs {
                return Err(GenError::Params(format!("at most {max_pairs} distinct requests on {n} nodes")));
            }
            let mut requests = vec![BTreeSet::new(); n];
            let mut seen = BTreeSet::new();
            while seen.len() < k {
                let u = rng.gen_range(0..n);
                let v = rng.gen_range(0..n);
                if u == v || !seen.insert((u.min(v), u.max(v))) {
                    continue;
                }
                requests[u].insert(v);
                if p.variant == Variant::SfScr {
                    requests[v].insert(u);
                }
            }
            let spec = if p.variant == Variant::SfCr {
                ProblemSpec::SfCr { requests }
            } else {
                ProblemSpec::SfScr { requests }
            };
            (graph, spec)
        }
        Variant::Ppc => {
            if 2 * k > n {
                return Err(GenError::Params(format!("|X| = |Y| = {k} needs n ≥ {}", 2 * k)));
            }
            let sources = nodes[..k].iter().copied().collect();
            let targets = nodes[k..2 * k].iter().copied().collect();
            (graph, ProblemSpec::Ppc { sources, targets })
        }
        Variant::Fpc => {
            if k > n {
                return Err(GenError::Params(format!("{k} clients on {n} nodes")));
            }
            let opening: Vec<u64> = (0..n).map(|_| rng.gen_range(1..=p.max_cost)).collect();
            let clients: BTreeSet<NodeId> = nodes[..k].iter().copied().collect();
            augment_fpc(&graph, &opening, &clients)?
        }
    };
    spec.validate_on(&graph)?;
    let mut params = BTreeMap::new();
    params.insert("n".to_string(), n.to_string());
    params.insert("m".to_string(), p.m.to_string());
    params.insert("max_cost".to_string(), p.max_cost.to_string());
    params.insert("k".to_string(), k.to_string());
    Ok(InstanceFile {
        graph,
        spec,
        generator: Some(GeneratorMeta { family: p.family.to_string(), seed: Some(p.seed), params }),
    })
}

/// Node ids of the double-star graph with `n` pairs.
#[derive(Debug, Clone, Copy)]
pub struct DoubleStar {
    pub n: usize,
}

impl DoubleStar {
    pub fn a(&self, i: usize) -> NodeId {
        i
    }
    pub fn a_plus(&self) -> NodeId {
        self.n
    }
    pub fn a_minus(&self) -> NodeId {
        self.n + 1
    }
    pub fn b(&self, i: usize) -> NodeId {
        self.n + 2 + i
    }
    pub fn b_plus(&self) -> NodeId {
        2 * self.n + 2
    }
    pub fn b_minus(&self) -> NodeId {
        2 * self.n + 3
    }
    pub fn heavy_cost(&self, rho: u64) -> u64 {
        rho * (2 * self.n as u64 + 2) + 1
    }
}

/// The equality-testing reduction graph: a_i hangs off a+ or a− by membership
/// in A, b_i off b+ or b− by membership in B, and the hubs are joined by
/// a+b+ and a−b− at cost 1 and the two heavy edges a+b−, a−b+ at cost
/// W = ρ(2n+2)+1. Pairs (a_i, b_i) are requests (SF-SCR, SF-CR one-way) or
/// size-2 input components (SF-CIC, SF-IC).
pub fn gen_lower_bound(a: &[bool], b: &[bool], rho: u64, variant: Variant) -> Result<InstanceFile, GenError> {
    let n = a.len();
    if b.len() != n || n == 0 {
        return Err(GenError::Params("A and B must be nonempty bitsets of equal length".into()));
    }
    if rho == 0 {
        return Err(GenError::Params("rho must be at least 1".into()));
    }
    let d = DoubleStar { n };
    let w = d.heavy_cost(rho);
    let mut edges = Vec::new();
    for i in 0..n {
        edges.push((d.a(i), if a[i] { d.a_plus() } else { d.a_minus() }, 1));
        edges.push((d.b(i), if b[i] { d.b_plus() } else { d.b_minus() }, 1));
    }
    edges.push((d.a_plus(), d.b_plus(), 1));
    edges.push((d.a_minus(), d.b_minus(), 1));
    edges.push((d.a_plus(), d.b_minus(), w));
    edges.push((d.a_minus(), d.b_plus(), w));
    let total = 2 * n + 4;
    let graph = WeightedGraph::new(total, edges)?;
    let spec = match variant {
        Variant::SfScr | Variant::SfCr => {
            let mut requests = vec![BTreeSet::new(); total];
            for i in 0..n {
                requests[d.a(i)].insert(d.b(i));
                if variant == Variant::SfScr {
                    requests[d.b(i)].insert(d.a(i));
                }
            }
            if variant == Variant::SfScr {
                ProblemSpec::SfScr { requests }
            } else {
                ProblemSpec::SfCr { requests }
            }
        }
        Variant::SfCic | Variant::SfIc => {
            let mut labels = vec![None; total];
            for i in 0..n {
                labels[d.a(i)] = Some(i as u32);
                labels[d.b(i)] = Some(i as u32);
            }
            if variant == Variant::SfCic {
                ProblemSpec::cic_from_labels(labels)
            } else {
                ProblemSpec::SfIc { labels }
            }
        }
        other => return Err(GenError::Params(format!("the double-star family has no {other} form"))),
    };
    spec.validate_on(&graph)?;
    let bits = |s: &[bool]| s.iter().map(|&x| if x { '1' } else { '0' }).collect::<String>();
    let mut params = BTreeMap::new();
    params.insert("rho".to_string(), rho.to_string());
    params.insert("a".to_string(), bits(a));
    params.insert("b".to_string(), bits(b));
    Ok(InstanceFile {
        graph,
        spec,
        generator: Some(GeneratorMeta { family: "lower-bound".into(), seed: None, params }),
    })
}

/// Size limits of a generated suite. Node and edge counts include the FPC
/// facility and its opening edges.
#[derive(Debug, Clone)]
pub struct SuiteParams {
    pub count: usize,
    pub seed: u64,
    pub min_n: usize,
    pub max_n: usize,
    pub max_m: usize,
    pub max_cost: u64,
}

/// `count` random instances cycling through all six variants.
pub fn gen_suite(s: &SuiteParams) -> Result<Vec<(String, InstanceFile)>, GenError> {
    if s.min_n < 4 || s.min_n > s.max_n || s.max_m < s.min_n {
        return Err(GenError::Params("suite needs 4 <= min_n <= max_n and max_m >= min_n".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(s.seed);
    let mut out = Vec::with_capacity(s.count);
    for i in 0..s.count {
        let variant = Variant::ALL[i % Variant::ALL.len()];
        // FPC adds one node and n edges on top of the physical graph
        let (lo, hi, budget) = if variant == Variant::Fpc {
            (s.min_n - 1, (s.max_n - 1).min(s.max_m.div_ceil(2)), s.max_m)
        } else {
            (s.min_n, s.max_n.min(s.max_m + 1), s.max_m)
        };
        let n = rng.gen_range(lo..=hi.max(lo));
        let reserved = if variant == Variant::Fpc { n } else { 0 };
        let m_hi = (n * (n - 1) / 2).min(budget - reserved).max(n - 1);
        let m = rng.gen_range(n - 1..=m_hi);
        let mut p = RandomParams::new(variant, n, m, rng.gen());
        p.max_cost = s.max_cost;
        out.push((format!("{variant}-{i:03}"), gen_random(&p)?));
    }
    Ok(out)
}

/// Parses a bitset written as a string of 0s and 1s.
pub fn parse_bits(s: &str) -> Result<Vec<bool>, String> {
    s.chars()
        .map(|c| match c {
            '0' => Ok(false),
            '1' => Ok(true),
            _ => Err(format!("bitset {s:?} may only contain 0 and 1")),
        })
        .collect()
}
