//! Distributed forest-function evaluation: every node learns whether its
//! current component is active.

use std::collections::{BTreeMap, BTreeSet};

use shellforest_core::{ActivityMap, NodeId, ProblemSpec, Variant};

use crate::network::{Framing, Message, SimError, SimNetwork, Tag, Widths};
use crate::parts::{component_aggregate, global_aggregate, ComponentView, Ctx};
use crate::prf::{kappa_for, label_residue, pair_coins};
use crate::tree::{downcast_items, merge_upcast, tree_aggregate};

/// Where a label has been seen so far during a convergecast.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Spread {
    Seen(NodeId),
    Split,
}

impl Message for Spread {
    fn bits(&self, w: &Widths) -> usize {
        match self {
            Spread::Seen(_) => 1 + w.id,
            Spread::Split => 1,
        }
    }
}

fn spread(a: &Spread, b: &Spread) -> Spread {
    match (a, b) {
        (Spread::Seen(x), Spread::Seen(y)) if x == y => *a,
        _ => Spread::Split,
    }
}

/// κ parity bits packed into words.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Parity {
    pub words: Vec<u64>,
    pub len: usize,
}

impl Parity {
    fn zero(len: usize) -> Self {
        Self { words: vec![0; len.div_ceil(64)], len }
    }

    fn xor(&self, other: &Parity) -> Parity {
        Parity { words: self.words.iter().zip(&other.words).map(|(a, b)| a ^ b).collect(), len: self.len }
    }

    pub fn is_zero(&self) -> bool {
        self.words.iter().all(|&w| w == 0)
    }
}

impl Message for Parity {
    fn bits(&self, _: &Widths) -> usize {
        self.len
    }
}

/// Residue sums, each entry `width` bits wide.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModSums {
    pub vals: Vec<u64>,
    pub width: usize,
}

impl Message for ModSums {
    fn bits(&self, _: &Widths) -> usize {
        self.vals.len() * self.width
    }
}

/// Facts learned once, before the first phase.
#[derive(Debug, Clone, Default)]
pub struct Knowledge {
    /// Node is the target of some request (request variants).
    pub requested: Vec<bool>,
    /// Some client exists, so the facility node is a terminal.
    pub has_clients: bool,
    pub seed: Option<u64>,
}

impl Knowledge {
    /// f({v}) = 1, decided from v's own data plus setup knowledge.
    pub fn is_terminal(&self, spec: &ProblemSpec, v: NodeId) -> bool {
        match spec {
            ProblemSpec::SfIc { labels } | ProblemSpec::SfCic { labels, .. } => {
                labels.get(v).is_some_and(|l| l.is_some())
            }
            ProblemSpec::SfCr { requests } => {
                requests.get(v).is_some_and(|r| !r.is_empty()) || self.requested.get(v).copied().unwrap_or(false)
            }
            ProblemSpec::SfScr { requests } => requests.get(v).is_some_and(|r| !r.is_empty()),
            ProblemSpec::Ppc { sources, targets } => sources.contains(&v) || targets.contains(&v),
            ProblemSpec::Fpc { clients, facility, .. } => clients.contains(&v) || (v == *facility && self.has_clients),
        }
    }
}

fn needs_seed(v: Variant) -> bool {
    matches!(v, Variant::SfScr | Variant::SfCic)
}

/// Seed broadcast plus per-variant discovery.
pub fn ffe_setup(
    net: &mut SimNetwork,
    cx: &Ctx,
    spec: &ProblemSpec,
    seed: Option<u64>,
    tag: Tag,
) -> Result<Knowledge, SimError> {
    let n = net.n();
    let root = cx.bfs.root;
    let mut know = Knowledge { requested: vec![false; n], ..Knowledge::default() };
    if needs_seed(spec.variant()) {
        let Some(seed) = seed else {
            return Err(SimError::Config(format!("{} needs a random seed", spec.variant())));
        };
        let vals = (0..n).map(|v| (v == root).then_some(seed)).collect();
        let (got, _) = tree_aggregate(net, &cx.bfs.forest, vals, |a, _| *a, tag, Framing::Pipelined)?;
        know.seed = got[root];
    }
    match spec {
        ProblemSpec::SfCr { requests } => {
            let local: Vec<BTreeMap<NodeId, ()>> = (0..n)
                .map(|v| requests.get(v).map(|r| r.iter().map(|&t| (t, ())).collect()).unwrap_or_default())
                .collect();
            let (at_root, _) = merge_upcast(net, &cx.bfs.forest, local, |_, _| (), tag)?;
            let items: Vec<Vec<NodeId>> = at_root.into_iter().map(|m| m.into_keys().collect()).collect();
            let (lists, _) = downcast_items(net, &cx.bfs.forest, items, tag)?;
            for v in net.physical_nodes() {
                know.requested[v] = lists[v].binary_search(&v).is_ok();
            }
        }
        ProblemSpec::Fpc { clients, .. } => {
            let vals = (0..n).map(|v| net.is_physical(v).then(|| clients.contains(&v))).collect();
            let (got, _) = global_aggregate(net, cx.bfs, vals, |a, b| *a || *b, tag)?;
            know.has_clients = got[root].unwrap_or(false);
        }
        _ => {}
    }
    Ok(know)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FfeOptions {
    /// κ = ⌈c · log₂ n⌉ parity tests unless `kappa` overrides it.
    pub kappa_c: usize,
    pub kappa: Option<usize>,
}

impl Default for FfeOptions {
    fn default() -> Self {
        Self { kappa_c: 3, kappa: None }
    }
}

impl FfeOptions {
    pub fn kappa(&self, n: usize) -> usize {
        self.kappa.unwrap_or_else(|| kappa_for(n, self.kappa_c))
    }
}

#[derive(Debug, Clone)]
pub struct FfeOutcome {
    /// Activity of each node's component; the virtual node's entry is the
    /// replicated flag of its component.
    pub active: Vec<bool>,
    pub activity: ActivityMap,
    pub rounds: u64,
}

/// Smallest x with x^k ≥ m.
fn ceil_root(m: u64, k: u32) -> u64 {
    let mut x = (m as f64).powf(1.0 / f64::from(k)).floor() as u64;
    while x.saturating_pow(k) < m {
        x += 1;
    }
    while x > 0 && (x - 1).saturating_pow(k) >= m {
        x -= 1;
    }
    x
}

/// Labels (of the given nodes plus the virtual node) that occur in more than
/// one component; the list ends up at every node.
fn split_labels(
    net: &mut SimNetwork,
    cx: &Ctx,
    view: &ComponentView,
    label: &[Option<u32>],
    virtual_label: Option<u32>,
    tag: Tag,
) -> Result<Vec<u32>, SimError> {
    let n = net.n();
    let root = cx.bfs.root;
    let mut local: Vec<BTreeMap<u32, Spread>> = (0..n)
        .map(|v| match label[v] {
            Some(l) if net.is_physical(v) => BTreeMap::from([(l, Spread::Seen(view.comp[v]))]),
            _ => BTreeMap::new(),
        })
        .collect();
    if let (Some(l), Some(s)) = (virtual_label, cx.virtual_node) {
        let item = Spread::Seen(view.comp[s]);
        let slot = local[root].entry(l).or_insert(item);
        *slot = spread(slot, &item);
    }
    let (at_root, _) = merge_upcast(net, &cx.bfs.forest, local, spread, tag)?;
    let items: Vec<Vec<u32>> = at_root
        .into_iter()
        .map(|m| m.into_iter().filter(|(_, s)| *s == Spread::Split).map(|(l, _)| l).collect())
        .collect();
    let (lists, _) = downcast_items(net, &cx.bfs.forest, items, tag)?;
    Ok(lists[root].clone())
}

fn component_or(
    net: &mut SimNetwork,
    cx: &Ctx,
    view: &ComponentView,
    flag: &[bool],
    tag: Tag,
) -> Result<Vec<bool>, SimError> {
    let n = net.n();
    let vals = (0..n).map(|v| net.is_physical(v).then_some(flag[v])).collect();
    let virt = cx.virtual_node.map(|s| flag[s]);
    let agg = component_aggregate(net, cx, view, vals, virt, vec![None; n], |a, b| *a || *b, tag)?;
    Ok(agg.per_node.into_iter().map(|x| x.unwrap_or(false)).collect())
}

/// Evaluates f on every component of `view`. Randomized variants draw their
/// coins from the broadcast seed, keyed by `phase`.
#[allow(clippy::too_many_arguments)]
pub fn ffe_distributed(
    net: &mut SimNetwork,
    cx: &Ctx,
    view: &ComponentView,
    spec: &ProblemSpec,
    know: &Knowledge,
    phase: u32,
    opts: &FfeOptions,
    tag: Tag,
) -> Result<FfeOutcome, SimError> {
    let before = net.rounds();
    let n = net.n();
    let seed = || know.seed.ok_or_else(|| SimError::Config(format!("{} needs a random seed", spec.variant())));
    let active: Vec<bool> = match spec {
        ProblemSpec::SfIc { labels } => {
            let label: Vec<Option<u32>> = (0..n).map(|v| labels.get(v).copied().flatten()).collect();
            let split = split_labels(net, cx, view, &label, None, tag)?;
            let flag: Vec<bool> = label.iter().map(|l| l.is_some_and(|l| split.contains(&l))).collect();
            component_or(net, cx, view, &flag, tag)?
        }
        ProblemSpec::Fpc { clients, facility, .. } => {
            let label: Vec<Option<u32>> = (0..n).map(|v| clients.contains(&v).then_some(0)).collect();
            let s_label = know.has_clients.then_some(0);
            let split = split_labels(net, cx, view, &label, s_label, tag)?;
            let mut flag: Vec<bool> = label.iter().map(|l| l.is_some_and(|l| split.contains(&l))).collect();
            flag[*facility] = s_label.is_some_and(|l| split.contains(&l));
            component_or(net, cx, view, &flag, tag)?
        }
        ProblemSpec::Ppc { sources, targets } => {
            let vals = (0..n)
                .map(|v| net.is_physical(v).then(|| i64::from(sources.contains(&v)) - i64::from(targets.contains(&v))))
                .collect();
            let agg = component_aggregate(net, cx, view, vals, None, vec![None; n], |a, b| a + b, tag)?;
            agg.per_node.into_iter().map(|x| x.is_some_and(|b| b != 0)).collect()
        }
        ProblemSpec::SfCr { requests } => cr(net, cx, view, requests, know, tag)?,
        ProblemSpec::SfScr { requests } => {
            let seed = seed()?;
            let kappa = opts.kappa(n);
            let vals = (0..n)
                .map(|u| {
                    net.is_physical(u).then(|| {
                        let mut p = Parity::zero(kappa);
                        for &v in requests.get(u).into_iter().flatten() {
                            let coins = Parity { words: pair_coins(seed, phase, u, v, kappa), len: kappa };
                            p = p.xor(&coins);
                        }
                        p
                    })
                })
                .collect();
            let agg = component_aggregate(net, cx, view, vals, None, vec![None; n], |a, b| a.xor(b), tag)?;
            agg.per_node.into_iter().map(|p| p.is_some_and(|p| !p.is_zero())).collect()
        }
        ProblemSpec::SfCic { labels, cardinality } => {
            cic(net, cx, view, labels, cardinality, seed()?, phase, opts.kappa(n), tag)?
        }
    };
    let map: BTreeMap<_, _> = view.comp.iter().copied().zip(active.iter().copied()).collect();
    Ok(FfeOutcome { active, activity: ActivityMap { active: map }, rounds: net.rounds() - before })
}

fn cr(
    net: &mut SimNetwork,
    cx: &Ctx,
    view: &ComponentView,
    requests: &[BTreeSet<NodeId>],
    know: &Knowledge,
    tag: Tag,
) -> Result<Vec<bool>, SimError> {
    let n = net.n();
    let root = cx.bfs.root;
    // every requested target reports its component; the full list is streamed down
    let local: Vec<BTreeMap<NodeId, u64>> = (0..n)
        .map(|v| if know.requested[v] { BTreeMap::from([(v, view.comp[v] as u64)]) } else { BTreeMap::new() })
        .collect();
    let (at_root, _) = merge_upcast(net, &cx.bfs.forest, local, |a, _| *a, tag)?;
    let items: Vec<Vec<(NodeId, u64)>> = at_root.into_iter().map(|m| m.into_iter().collect()).collect();
    let (lists, _) = downcast_items(net, &cx.bfs.forest, items, tag)?;

    let mut flag = vec![false; n];
    let mut wake: Vec<BTreeMap<u64, ()>> = vec![BTreeMap::new(); n];
    for u in net.physical_nodes() {
        let comp_of: BTreeMap<NodeId, u64> = lists[u].iter().copied().collect();
        for t in requests.get(u).into_iter().flatten() {
            let ct = comp_of[t];
            if ct != view.comp[u] as u64 {
                flag[u] = true;
                wake[u].insert(ct, ());
            }
        }
    }
    // components of unsatisfied targets are active too
    let (at_root, _) = merge_upcast(net, &cx.bfs.forest, wake, |_, _| (), tag)?;
    let items: Vec<Vec<u64>> = at_root.into_iter().map(|m| m.into_keys().collect()).collect();
    let (lists, _) = downcast_items(net, &cx.bfs.forest, items, tag)?;
    let woken: BTreeSet<u64> = lists[root].iter().copied().collect();
    for v in net.physical_nodes() {
        flag[v] |= woken.contains(&(view.comp[v] as u64));
    }
    component_or(net, cx, view, &flag, tag)
}

#[allow(clippy::too_many_arguments)]
fn cic(
    net: &mut SimNetwork,
    cx: &Ctx,
    view: &ComponentView,
    labels: &[Option<u32>],
    cardinality: &BTreeMap<u32, usize>,
    seed: u64,
    phase: u32,
    kappa: usize,
    tag: Tag,
) -> Result<Vec<bool>, SimError> {
    let n = net.n();
    let nn = n as u64;
    let hi = ceil_root(nn * nn, 3);
    let lo = ceil_root(nn, 3);
    let label = |v: NodeId| labels.get(v).copied().flatten();
    let card = |l: u32| cardinality[&l] as u64;

    let ones = (0..n).map(|v| net.is_physical(v).then_some(1u64)).collect();
    let size = component_aggregate(net, cx, view, ones, None, vec![None; n], |a, b| a + b, tag)?.per_node;
    let small = |v: NodeId| size[v].is_some_and(|s| s <= hi);
    let mut flag = vec![false; n];

    // small components: exact per-label counts at the part root
    let local: Vec<BTreeMap<u32, (u64, u64)>> = (0..n)
        .map(|v| match label(v) {
            Some(l) if small(v) => BTreeMap::from([(l, (1, card(l)))]),
            _ => BTreeMap::new(),
        })
        .collect();
    let (at_root, _) = merge_upcast(net, &view.parts.tree, local, |a, b| (a.0 + b.0, a.1), tag)?;
    for (v, counts) in at_root.iter().enumerate() {
        if counts.values().any(|&(k, c)| k < c) {
            flag[v] = true;
        }
    }

    // large components, small labels: residue tests per label size
    let moduli: Vec<u64> = (2..lo).flat_map(|s| std::iter::repeat_n(s, kappa)).collect();
    if !moduli.is_empty() {
        let width = crate::network::log2_ceil(lo as usize);
        let vals = (0..n)
            .map(|v| {
                if !net.is_physical(v) {
                    return None;
                }
                let mut sums = ModSums { vals: vec![0; moduli.len()], width };
                if let Some(l) = label(v).filter(|&l| !small(v) && card(l) < lo) {
                    let s = card(l);
                    let base = (s as usize - 2) * kappa;
                    for j in 0..kappa {
                        sums.vals[base + j] = label_residue(seed, phase, l, j, s);
                    }
                }
                Some(sums)
            })
            .collect();
        let m = &moduli;
        let add = move |a: &ModSums, b: &ModSums| ModSums {
            vals: a.vals.iter().zip(&b.vals).zip(m).map(|((x, y), s)| (x + y) % s).collect(),
            width: a.width,
        };
        let agg = component_aggregate(net, cx, view, vals, None, vec![None; n], add, tag)?.per_node;
        for v in net.physical_nodes() {
            if !small(v) && agg[v].as_ref().is_some_and(|s| s.vals.iter().any(|&x| x != 0)) {
                flag[v] = true;
            }
        }
    }

    // labels of size at least lo: split detection as for input components
    let big: Vec<Option<u32>> = (0..n).map(|v| label(v).filter(|&l| card(l) >= lo)).collect();
    let split = split_labels(net, cx, view, &big, None, tag)?;
    for v in net.physical_nodes() {
        flag[v] |= big[v].is_some_and(|l| split.contains(&l));
    }
    component_or(net, cx, view, &flag, tag)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn integer_roots() {
        assert_eq!(ceil_root(27, 3), 3);
        assert_eq!(ceil_root(28, 3), 4);
        assert_eq!(ceil_root(900, 3), 10);
        assert_eq!(ceil_root(1, 3), 1);
    }

    #[test]
    fn spread_combines() {
        assert_eq!(spread(&Spread::Seen(2), &Spread::Seen(2)), Spread::Seen(2));
        assert_eq!(spread(&Spread::Seen(2), &Spread::Seen(3)), Spread::Split);
    }
}
