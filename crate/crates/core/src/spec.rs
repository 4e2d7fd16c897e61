use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{connected_components, EdgeId, GraphError, NodeId, Partition, WeightedGraph};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SpecError {
    #[error("problem data covers {got} nodes but the graph has {expected}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("node {0} is out of range")]
    NodeOutOfRange(NodeId),
    #[error("label {0} has a single member")]
    SingletonLabel(u32),
    #[error("label {label}: declared cardinality {declared}, actual {actual}")]
    CardinalityMismatch { label: u32, declared: usize, actual: usize },
    #[error("node {0} requests itself")]
    SelfRequest(NodeId),
    #[error("request {u} -> {v} has no reverse request")]
    AsymmetricRequest { u: NodeId, v: NodeId },
    #[error("node {0} is both a source and a target")]
    PpcOverlap(NodeId),
    #[error("{sources} sources but {targets} targets")]
    PpcUnbalanced { sources: usize, targets: usize },
    #[error("facility node {0} must be the last node and flagged virtual")]
    BadFacility(NodeId),
    #[error("node {0} has opening cost 0; scale zero weights first")]
    ZeroOpeningCost(NodeId),
    #[error("exactly one terminal; no proper function has t = 1")]
    SingleTerminal,
    #[error("subset is not contained in the node set (node {0})")]
    NotSubset(NodeId),
    #[error("exhaustive routine refused: n = {n} exceeds limit {limit}")]
    TooLarge { n: usize, limit: usize },
    #[error(transparent)]
    Graph(#[from] GraphError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Variant {
    #[serde(rename = "sf-ic")]
    SfIc,
    #[serde(rename = "sf-cic")]
    SfCic,
    #[serde(rename = "sf-cr")]
    SfCr,
    #[serde(rename = "sf-scr")]
    SfScr,
    #[serde(rename = "ppc")]
    Ppc,
    #[serde(rename = "fpc")]
    Fpc,
}

impl Variant {
    pub const ALL: [Variant; 6] =
        [Variant::SfIc, Variant::SfCic, Variant::SfCr, Variant::SfScr, Variant::Ppc, Variant::Fpc];

    pub fn name(self) -> &'static str {
        match self {
            Variant::SfIc => "sf-ic",
            Variant::SfCic => "sf-cic",
            Variant::SfCr => "sf-cr",
            Variant::SfScr => "sf-scr",
            Variant::Ppc => "ppc",
            Variant::Fpc => "fpc",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        Variant::ALL.into_iter().find(|v| v.name() == s).ok_or_else(|| format!("unknown variant {s:?}"))
    }
}

/// Requirements of one constrained forest instance.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum ProblemSpec {
    /// Steiner forest, each terminal knows its input component.
    SfIc { labels: Vec<Option<u32>> },
    /// Like `SfIc`, and each terminal also knows its component's size.
    SfCic { labels: Vec<Option<u32>>, cardinality: BTreeMap<u32, usize> },
    /// Connection requests `requests[u]`, not necessarily symmetric.
    SfCr { requests: Vec<BTreeSet<NodeId>> },
    /// Symmetric connection requests.
    SfScr { requests: Vec<BTreeSet<NodeId>> },
    /// Point-to-point connection with disjoint, equal-size source and target sets.
    Ppc { sources: BTreeSet<NodeId>, targets: BTreeSet<NodeId> },
    /// Facility placement on the augmented graph: `facility` is the virtual
    /// node, `opening[v]` the cost of edge {v, facility}.
    Fpc { opening: Vec<u64>, clients: BTreeSet<NodeId>, facility: NodeId },
}

impl ProblemSpec {
    pub fn variant(&self) -> Variant {
        match self {
            ProblemSpec::SfIc { .. } => Variant::SfIc,
            ProblemSpec::SfCic { .. } => Variant::SfCic,
            ProblemSpec::SfCr { .. } => Variant::SfCr,
            ProblemSpec::SfScr { .. } => Variant::SfScr,
            ProblemSpec::Ppc { .. } => Variant::Ppc,
            ProblemSpec::Fpc { .. } => Variant::Fpc,
        }
    }

    /// Builds CIC data from IC labels by counting.
    pub fn cic_from_labels(labels: Vec<Option<u32>>) -> Self {
        let mut cardinality = BTreeMap::new();
        for l in labels.iter().flatten() {
            *cardinality.entry(*l).or_insert(0) += 1;
        }
        ProblemSpec::SfCic { labels, cardinality }
    }

    /// Structural checks against a node count.
    pub fn validate(&self, n: usize) -> Result<(), SpecError> {
        let check_len = |got: usize| {
            if got == n {
                Ok(())
            } else {
                Err(SpecError::LengthMismatch { expected: n, got })
            }
        };
        let in_range = |v: NodeId| {
            if v < n {
                Ok(())
            } else {
                Err(SpecError::NodeOutOfRange(v))
            }
        };
        match self {
            ProblemSpec::SfIc { labels } => {
                check_len(labels.len())?;
                for (l, c) in label_counts(labels) {
                    if c < 2 {
                        return Err(SpecError::SingletonLabel(l));
                    }
                }
            }
            ProblemSpec::SfCic { labels, cardinality } => {
                check_len(labels.len())?;
                let counts = label_counts(labels);
                for (&l, &c) in &counts {
                    if c < 2 {
                        return Err(SpecError::SingletonLabel(l));
                    }
                    let declared = cardinality.get(&l).copied().unwrap_or(0);
                    if declared != c {
                        return Err(SpecError::CardinalityMismatch { label: l, declared, actual: c });
                    }
                }
                if let Some((&l, &d)) = cardinality.iter().find(|(l, _)| !counts.contains_key(l)) {
                    return Err(SpecError::CardinalityMismatch { label: l, declared: d, actual: 0 });
                }
            }
            ProblemSpec::SfCr { requests } | ProblemSpec::SfScr { requests } => {
                check_len(requests.len())?;
                for (u, rs) in requests.iter().enumerate() {
                    for &v in rs {
                        in_range(v)?;
                        if v == u {
                            return Err(SpecError::SelfRequest(u));
                        }
                        if self.variant() == Variant::SfScr && !requests[v].contains(&u) {
                            return Err(SpecError::AsymmetricRequest { u, v });
                        }
                    }
                }
            }
            ProblemSpec::Ppc { sources, targets } => {
                for &v in sources.iter().chain(targets) {
                    in_range(v)?;
                }
                if let Some(&v) = sources.intersection(targets).next() {
                    return Err(SpecError::PpcOverlap(v));
                }
                if sources.len() != targets.len() {
                    return Err(SpecError::PpcUnbalanced { sources: sources.len(), targets: targets.len() });
                }
            }
            ProblemSpec::Fpc { opening, clients, facility } => {
                if *facility + 1 != n {
                    return Err(SpecError::BadFacility(*facility));
                }
                check_len(opening.len() + 1)?;
                for &c in clients {
                    in_range(c)?;
                    if c == *facility {
                        return Err(SpecError::BadFacility(c));
                    }
                }
                if let Some(v) = opening.iter().position(|&o| o == 0) {
                    return Err(SpecError::ZeroOpeningCost(v));
                }
            }
        }
        if self.terminals(n).len() == 1 {
            return Err(SpecError::SingleTerminal);
        }
        Ok(())
    }

    /// [`ProblemSpec::validate`] plus the checks that need the graph itself.
    pub fn validate_on(&self, graph: &WeightedGraph) -> Result<(), SpecError> {
        self.validate(graph.n())?;
        if let ProblemSpec::Fpc { opening, facility, .. } = self {
            if !graph.is_virtual(*facility) {
                return Err(SpecError::BadFacility(*facility));
            }
            for (v, &o) in opening.iter().enumerate() {
                let ok = graph.find_edge(v, *facility).is_some_and(|e| graph.edge(e).cost == o);
                if !ok {
                    return Err(SpecError::BadFacility(*facility));
                }
            }
        }
        Ok(())
    }

    /// Node groups that must each end up inside one component. `None` for
    /// variants whose function is not of this form.
    pub fn groups(&self, n: usize) -> Option<Vec<Vec<NodeId>>> {
        match self {
            ProblemSpec::SfIc { labels } | ProblemSpec::SfCic { labels, .. } => {
                let mut g: BTreeMap<u32, Vec<NodeId>> = BTreeMap::new();
                for (v, l) in labels.iter().enumerate() {
                    if let Some(l) = l {
                        g.entry(*l).or_default().push(v);
                    }
                }
                Some(g.into_values().collect())
            }
            ProblemSpec::SfCr { requests } => {
                let p = connected_components(n, request_pairs(requests));
                let mut touched = vec![false; n];
                for (u, v) in request_pairs(requests) {
                    touched[u] = true;
                    touched[v] = true;
                }
                let groups = p.components().into_values().filter(|c| c.len() >= 2 && touched[c[0]]).collect();
                Some(groups)
            }
            ProblemSpec::Fpc { clients, facility, .. } => {
                if clients.is_empty() {
                    Some(Vec::new())
                } else {
                    let mut g: Vec<NodeId> = clients.iter().copied().collect();
                    g.push(*facility);
                    Some(vec![g])
                }
            }
            ProblemSpec::SfScr { .. } | ProblemSpec::Ppc { .. } => None,
        }
    }

    /// Nodes v with f({v}) = 1.
    pub fn terminals(&self, n: usize) -> Vec<NodeId> {
        (0..n).filter(|&v| self.f_subset(&[v], n).unwrap_or(false)).collect()
    }

    /// Reference subset semantics f(S).
    pub fn f_subset(&self, s: &[NodeId], n: usize) -> Result<bool, SpecError> {
        let mut inside = vec![false; n];
        for &v in s {
            if v >= n {
                return Err(SpecError::NotSubset(v));
            }
            inside[v] = true;
        }
        Ok(match self {
            ProblemSpec::SfScr { requests } => {
                (0..n.min(requests.len())).any(|u| inside[u] && requests[u].iter().any(|&v| v < n && !inside[v]))
            }
            ProblemSpec::Ppc { sources, targets } => {
                let x = sources.iter().filter(|&&v| v < n && inside[v]).count();
                let y = targets.iter().filter(|&&v| v < n && inside[v]).count();
                x != y
            }
            _ => self.groups(n).expect("group-form variant").iter().any(|g| {
                let k = g.iter().filter(|&&v| v < n && inside[v]).count();
                k > 0 && k < g.len()
            }),
        })
    }

    /// Activity of every component of `partition`, by counting.
    pub fn evaluate_components(&self, partition: &Partition) -> ActivityMap {
        let n = partition.n();
        let comp = |v: NodeId| partition.component_of(v);
        let mut active: BTreeMap<NodeId, bool> = partition.components().into_keys().map(|c| (c, false)).collect();
        match self {
            ProblemSpec::SfScr { requests } => {
                for (u, rs) in requests.iter().enumerate() {
                    if rs.iter().any(|&v| comp(v) != comp(u)) {
                        active.insert(comp(u), true);
                    }
                }
            }
            ProblemSpec::Ppc { sources, targets } => {
                let mut bal: BTreeMap<NodeId, i64> = BTreeMap::new();
                for &x in sources {
                    *bal.entry(comp(x)).or_default() += 1;
                }
                for &y in targets {
                    *bal.entry(comp(y)).or_default() -= 1;
                }
                for (c, b) in bal {
                    if b != 0 {
                        active.insert(c, true);
                    }
                }
            }
            _ => {
                for g in self.groups(n).expect("group-form variant") {
                    let comps: BTreeSet<NodeId> = g.iter().map(|&v| comp(v)).collect();
                    if comps.len() > 1 {
                        for c in comps {
                            active.insert(c, true);
                        }
                    }
                }
            }
        }
        ActivityMap { active }
    }
}

fn label_counts(labels: &[Option<u32>]) -> BTreeMap<u32, usize> {
    let mut counts = BTreeMap::new();
    for l in labels.iter().flatten() {
        *counts.entry(*l).or_insert(0) += 1;
    }
    counts
}

/// Every (u, v) with v ∈ requests[u].
pub fn request_pairs(requests: &[BTreeSet<NodeId>]) -> impl Iterator<Item = (NodeId, NodeId)> + '_ {
    requests.iter().enumerate().flat_map(|(u, rs)| rs.iter().map(move |&v| (u, v)))
}

/// f(C) per component id.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActivityMap {
    pub active: BTreeMap<NodeId, bool>,
}

impl ActivityMap {
    pub fn is_active(&self, comp: NodeId) -> bool {
        self.active.get(&comp).copied().unwrap_or(false)
    }

    pub fn active_ids(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.active.iter().filter(|(_, &a)| a).map(|(&c, _)| c)
    }

    pub fn all_inactive(&self) -> bool {
        self.active.values().all(|a| !a)
    }
}

/// Adds a virtual facility node joined to every node v at cost `opening[v]`.
pub fn augment_fpc(
    graph: &WeightedGraph,
    opening: &[u64],
    clients: &BTreeSet<NodeId>,
) -> Result<(WeightedGraph, ProblemSpec), SpecError> {
    let n = graph.n();
    if opening.len() != n {
        return Err(SpecError::LengthMismatch { expected: n, got: opening.len() });
    }
    if let Some(v) = opening.iter().position(|&o| o == 0) {
        return Err(SpecError::ZeroOpeningCost(v));
    }
    let s = n;
    let edges =
        graph.edges().iter().map(|e| (e.u, e.v, e.cost)).chain(opening.iter().enumerate().map(|(v, &o)| (v, s, o)));
    let aug = WeightedGraph::new(n + 1, edges)?.with_virtual(s)?;
    let spec = ProblemSpec::Fpc { opening: opening.to_vec(), clients: clients.clone(), facility: s };
    spec.validate_on(&aug)?;
    Ok((aug, spec))
}

/// Splits an FPC solution into opened facilities and physical connection edges.
pub fn fpc_split(
    graph: &WeightedGraph,
    facility: NodeId,
    forest: &BTreeSet<EdgeId>,
) -> (BTreeSet<NodeId>, BTreeSet<EdgeId>) {
    let mut opened = BTreeSet::new();
    let mut connect = BTreeSet::new();
    for &e in forest {
        let edge = graph.edge(e);
        if edge.touches(facility) {
            opened.insert(edge.other(facility));
        } else {
            connect.insert(e);
        }
    }
    (opened, connect)
}

pub const MASK_LIMIT: usize = 16;

/// Bitmask form of f for the exponential routines.
#[derive(Debug, Clone)]
pub enum MaskEvaluator {
    Groups(Vec<u64>),
    Directed(Vec<u64>),
    Balance { sources: u64, targets: u64 },
}

impl MaskEvaluator {
    pub fn compile(spec: &ProblemSpec, n: usize) -> Result<Self, SpecError> {
        if n > 63 {
            return Err(SpecError::TooLarge { n, limit: 63 });
        }
        let mask = |it: &mut dyn Iterator<Item = NodeId>| it.fold(0u64, |m, v| m | (1 << v));
        Ok(match spec {
            ProblemSpec::SfScr { requests } => {
                MaskEvaluator::Directed(requests.iter().map(|rs| mask(&mut rs.iter().copied())).collect())
            }
            ProblemSpec::Ppc { sources, targets } => MaskEvaluator::Balance {
                sources: mask(&mut sources.iter().copied()),
                targets: mask(&mut targets.iter().copied()),
            },
            _ => MaskEvaluator::Groups(
                spec.groups(n).expect("group-form variant").iter().map(|g| mask(&mut g.iter().copied())).collect(),
            ),
        })
    }

    pub fn f(&self, s: u64) -> bool {
        match self {
            MaskEvaluator::Groups(gs) => gs.iter().any(|&g| g & s != 0 && g & !s != 0),
            MaskEvaluator::Directed(out) => out.iter().enumerate().any(|(u, &r)| s >> u & 1 == 1 && r & !s != 0),
            MaskEvaluator::Balance { sources, targets } => (sources & s).count_ones() != (targets & s).count_ones(),
        }
    }
}

const REPORT_CAP: usize = 32;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ProperReport {
    pub n: usize,
    pub zero_holds: bool,
    pub symmetry_violations: usize,
    /// First few subsets S with f(S) ≠ f(V∖S), as bitmasks.
    pub symmetry_examples: Vec<u64>,
    pub disjointness_violations: usize,
    /// First few disjoint (A, B) with f(A) = f(B) = 0 but f(A∪B) = 1.
    pub disjointness_examples: Vec<(u64, u64)>,
    pub nontrivial: bool,
}

impl ProperReport {
    /// Zero, symmetry and disjointness; nontriviality is reported separately.
    pub fn is_proper(&self) -> bool {
        self.zero_holds && self.symmetry_violations == 0 && self.disjointness_violations == 0
    }
}

/// Exhaustive sweep of the proper-function axioms over all subsets of V.
pub fn check_proper(spec: &ProblemSpec, n: usize) -> Result<ProperReport, SpecError> {
    if n > MASK_LIMIT {
        return Err(SpecError::TooLarge { n, limit: MASK_LIMIT });
    }
    let eval = MaskEvaluator::compile(spec, n)?;
    let full: u64 = (1u64 << n) - 1;
    let table: Vec<bool> = (0..=full).map(|s| eval.f(s)).collect();
    let mut report = ProperReport {
        n,
        zero_holds: !table[full as usize],
        symmetry_violations: 0,
        symmetry_examples: Vec::new(),
        disjointness_violations: 0,
        disjointness_examples: Vec::new(),
        nontrivial: table.iter().any(|&b| b),
    };
    for s in 0..=full {
        if table[s as usize] != table[(full ^ s) as usize] {
            report.symmetry_violations += 1;
            if report.symmetry_examples.len() < REPORT_CAP {
                report.symmetry_examples.push(s);
            }
        }
    }
    for a in 1..=full {
        if table[a as usize] {
            continue;
        }
        let rest = full ^ a;
        // nonempty submasks b of the complement with b > a, so each pair is seen once
        let mut b = rest;
        while b > 0 {
            if b > a && !table[b as usize] && table[(a | b) as usize] {
                report.disjointness_violations += 1;
                if report.disjointness_examples.len() < REPORT_CAP {
                    report.disjointness_examples.push((a, b));
                }
            }
            b = (b - 1) & rest;
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sets(v: &[&[NodeId]]) -> Vec<BTreeSet<NodeId>> {
        v.iter().map(|s| s.iter().copied().collect()).collect()
    }

    #[test]
    fn ic_subset_values() {
        let s = ProblemSpec::SfIc { labels: vec![Some(1), None, Some(1)] };
        assert!(s.f_subset(&[0], 3).unwrap());
        assert!(!s.f_subset(&[1], 3).unwrap());
        assert!(s.f_subset(&[0, 1], 3).unwrap());
        assert!(!s.f_subset(&[0, 1, 2], 3).unwrap());
        assert_eq!(s.f_subset(&[7], 3), Err(SpecError::NotSubset(7)));
    }

    #[test]
    fn ppc_subset_values() {
        let s = ProblemSpec::Ppc { sources: [0].into(), targets: [1].into() };
        assert!(s.f_subset(&[0], 2).unwrap());
        assert!(!s.f_subset(&[0, 1], 2).unwrap());
    }

    #[test]
    fn fpc_subset_values() {
        let s = ProblemSpec::Fpc { opening: vec![1], clients: [0].into(), facility: 1 };
        assert!(s.f_subset(&[0], 2).unwrap());
        assert!(s.f_subset(&[1], 2).unwrap());
        assert!(!s.f_subset(&[0, 1], 2).unwrap());
    }

    #[test]
    fn evaluate_examples() {
        let ppc = ProblemSpec::Ppc { sources: [0, 1].into(), targets: [2, 3].into() };
        let p = connected_components(5, [(0, 1), (1, 2), (2, 3)]);
        assert!(!ppc.evaluate_components(&p).is_active(0));

        let scr = ProblemSpec::SfScr { requests: sets(&[&[1], &[0], &[3], &[2]]) };
        let p = connected_components(4, [(0, 1)]);
        let act = scr.evaluate_components(&p);
        assert!(!act.is_active(0));
        assert!(act.is_active(2) && act.is_active(3));

        let ic = ProblemSpec::SfIc { labels: vec![Some(0), Some(0), Some(0), None] };
        let p = connected_components(4, [(0, 1)]);
        let act = ic.evaluate_components(&p);
        assert!(act.is_active(0));
        assert_eq!(act.is_active(0), ic.f_subset(&[0, 1], 4).unwrap());
        assert!(!act.is_active(3));
    }

    #[test]
    fn validation_rules() {
        assert_eq!(ProblemSpec::SfIc { labels: vec![Some(1), None] }.validate(2), Err(SpecError::SingletonLabel(1)));
        assert_eq!(
            ProblemSpec::SfScr { requests: sets(&[&[1], &[]]) }.validate(2),
            Err(SpecError::AsymmetricRequest { u: 0, v: 1 })
        );
        assert!(ProblemSpec::SfCr { requests: sets(&[&[1], &[]]) }.validate(2).is_ok());
        assert_eq!(
            ProblemSpec::Ppc { sources: [0].into(), targets: [0].into() }.validate(2),
            Err(SpecError::PpcOverlap(0))
        );
        assert_eq!(
            ProblemSpec::Ppc { sources: [0, 1].into(), targets: [2].into() }.validate(3),
            Err(SpecError::PpcUnbalanced { sources: 2, targets: 1 })
        );
        let cic = ProblemSpec::SfCic { labels: vec![Some(1), Some(1)], cardinality: [(1, 3)].into() };
        assert!(matches!(cic.validate(2), Err(SpecError::CardinalityMismatch { .. })));
        assert!(ProblemSpec::cic_from_labels(vec![Some(1), Some(1)]).validate(2).is_ok());
    }

    #[test]
    fn augment_example() {
        let g = WeightedGraph::new(2, [(0, 1, 1)]).unwrap();
        let (aug, spec) = augment_fpc(&g, &[5, 1], &[0].into()).unwrap();
        assert_eq!(aug.n(), 3);
        assert_eq!(aug.m(), 3);
        assert!(aug.is_virtual(2));
        assert_eq!(spec.terminals(3), vec![0, 2]);
        let (_, empty) = augment_fpc(&g, &[5, 1], &BTreeSet::new()).unwrap();
        assert!(empty.terminals(3).is_empty());
        assert!(augment_fpc(&g, &[0, 1], &[0].into()).is_err());
    }

    #[test]
    fn proper_examples() {
        let ppc = ProblemSpec::Ppc { sources: [0, 1].into(), targets: [2].into() };
        let r = check_proper(&ppc, 4).unwrap();
        assert!(!r.zero_holds);

        let broken = ProblemSpec::SfScr { requests: sets(&[&[1], &[], &[]]) };
        let r = check_proper(&broken, 3).unwrap();
        assert!(r.symmetry_violations > 0);
        assert!(!r.is_proper());

        let ic = ProblemSpec::SfIc { labels: vec![Some(0), None, Some(0), Some(1), Some(1)] };
        let r = check_proper(&ic, 5).unwrap();
        assert!(r.is_proper() && r.nontrivial);

        assert!(matches!(check_proper(&ic, 17), Err(SpecError::TooLarge { .. })));
    }
}
