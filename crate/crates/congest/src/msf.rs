//! Deterministic minimum spanning forest by Borůvka phases over partwise
//! aggregation. Fragments pick their lightest outgoing edge, the resulting
//! pseudo-forest is 3-coloured (Cole–Vishkin, then shift-down), and a
//! maximal matching decides which picked edges join this phase, so every
//! fragment with an outgoing edge merges with at least one other.

use std::collections::{BTreeMap, BTreeSet};

use shellforest_core::{EdgeId, NodeId, WeightedGraph};

use crate::network::{Message, SimError, SimNetwork, Tag};
use crate::parts::{build_component_view, component_aggregate, exchange, global_aggregate, ComponentView, Ctx};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MsfOutcome {
    pub forest: BTreeSet<EdgeId>,
    pub phases: u32,
    pub rounds: u64,
}

/// Per-node copy of a fragment-level value; index `s` is the virtual node's
/// fragment.
type PerNode<T> = Vec<Option<T>>;

struct Boruvka<'a, 'g> {
    cx: &'a Ctx<'a>,
    graph: &'g WeightedGraph,
    weights: &'a [Option<u64>],
    tag: Tag,
}

impl Boruvka<'_, '_> {
    fn in_set(&self, e: EdgeId) -> bool {
        self.weights[e].is_some()
    }

    fn is_virtual(&self, v: NodeId) -> bool {
        self.cx.virtual_node == Some(v)
    }

    /// Every node sends `val` of its fragment to its neighbours across the
    /// edge set. Returns what each node heard, by sender.
    fn broadcast_links<T: Message>(
        &self,
        net: &mut SimNetwork,
        val: &[T],
    ) -> Result<Vec<BTreeMap<NodeId, T>>, SimError> {
        let n = net.n();
        let out = (0..n)
            .map(|v| {
                if !net.is_physical(v) {
                    return Vec::new();
                }
                net.neighbors(v).iter().filter(|&&(_, e)| self.in_set(e)).map(|&(u, _)| (u, val[v].clone())).collect()
            })
            .collect();
        Ok(exchange(net, out, self.tag)?.into_iter().map(|got| got.into_iter().collect()).collect())
    }

    /// For each fragment with a `link` edge, the value `val` of the fragment
    /// at the far end of that edge.
    fn pull_across<T: Message + Ord>(
        &self,
        net: &mut SimNetwork,
        view: &ComponentView,
        val: &[T],
        link: &[Option<EdgeId>],
    ) -> Result<PerNode<T>, SimError> {
        let heard = self.broadcast_links(net, val)?;
        let n = net.n();
        let mut mine: PerNode<T> = vec![None; n];
        let mut to_virtual: PerNode<T> = vec![None; n];
        for v in net.physical_nodes() {
            if let Some(e) = link[v].filter(|&e| self.graph.edge(e).touches(v)) {
                let far = self.graph.edge(e).other(v);
                mine[v] = if self.is_virtual(far) { Some(val[far].clone()) } else { heard[v].get(&far).cloned() };
            }
            // only a link that is one of s's own edges reads from a
            // physical neighbour; any other link of s's fragment has a
            // physical endpoint inside the fragment and is handled above
            if let Some(s) = self.cx.virtual_node {
                let edge = |e: EdgeId| self.graph.edge(e);
                if link[s].is_some_and(|e| edge(e).touches(s) && edge(e).touches(v)) {
                    to_virtual[v] = Some(val[v].clone());
                }
            }
        }
        let agg = component_aggregate(net, self.cx, view, mine, None, to_virtual, |a, b| a.min(b).clone(), self.tag)?;
        Ok(agg.per_node)
    }

    fn view(&self, net: &mut SimNetwork, forest: &BTreeSet<EdgeId>) -> Result<ComponentView, SimError> {
        let n = net.n();
        let mut nbrs = vec![Vec::new(); n];
        let mut touches = vec![false; n];
        for &e in forest {
            let edge = self.graph.edge(e);
            match (self.is_virtual(edge.u), self.is_virtual(edge.v)) {
                (false, false) => {
                    nbrs[edge.u].push(edge.v);
                    nbrs[edge.v].push(edge.u);
                }
                (true, _) => touches[edge.v] = true,
                (_, true) => touches[edge.u] = true,
            }
        }
        build_component_view(net, self.cx, &nbrs, &touches, self.tag)
    }
}

fn bit_len(x: u64) -> u64 {
    u64::from((u64::BITS - x.leading_zeros()).max(1))
}

fn smallest_free(used: &[Option<u64>]) -> u64 {
    (0..3).find(|c| !used.contains(&Some(*c))).expect("three colours, two constraints")
}

/// Minimum spanning forest of the edges with `Some` weight, ties broken by
/// edge id. Edges to the virtual node are handled through global aggregation.
pub fn msf_partwise(
    net: &mut SimNetwork,
    cx: &Ctx,
    graph: &WeightedGraph,
    weights: &[Option<u64>],
    tag: Tag,
) -> Result<MsfOutcome, SimError> {
    let before = net.rounds();
    let n = net.n();
    let b = Boruvka { cx, graph, weights, tag };
    let mut forest: BTreeSet<EdgeId> = BTreeSet::new();
    let mut phases = 0u32;
    loop {
        let view = b.view(net, &forest)?;
        let frag: Vec<u64> = view.comp.iter().map(|&c| c as u64).collect();

        // lightest outgoing edge per fragment: (weight, edge, far fragment)
        let heard = b.broadcast_links(net, &frag)?;
        let mut offer: PerNode<(u64, u64, u64)> = vec![None; n];
        let mut to_virtual: PerNode<(u64, u64, u64)> = vec![None; n];
        for v in net.physical_nodes() {
            for &(u, e) in graph.neighbors(v) {
                let Some(w) = weights[e] else { continue };
                let far = if b.is_virtual(u) { frag[u] } else { heard[v][&u] };
                if far != frag[v] {
                    let cand = (w, e as u64, far);
                    if offer[v].is_none_or(|o| cand < o) {
                        offer[v] = Some(cand);
                    }
                    if b.is_virtual(u) {
                        to_virtual[v] = Some((w, e as u64, frag[v]));
                    }
                }
            }
        }
        let chosen = component_aggregate(net, cx, &view, offer, None, to_virtual, |a, c| *a.min(c), tag)?.per_node;

        let any: Vec<Option<bool>> = (0..n)
            .map(|v| {
                net.is_physical(v).then(|| chosen[v].is_some() || cx.virtual_node.is_some_and(|s| chosen[s].is_some()))
            })
            .collect();
        let (any, _) = global_aggregate(net, cx.bfs, any, |a, c| *a || *c, tag)?;
        if !any[cx.bfs.root].unwrap_or(false) {
            break;
        }
        phases += 1;

        // orient: a mutual pair keeps the smaller fragment as root
        let chosen_edge: Vec<Option<EdgeId>> = chosen.iter().map(|c| c.map(|c| c.1 as EdgeId)).collect();
        let chosen_id: Vec<u64> = chosen.iter().map(|c| c.map_or(u64::MAX, |c| c.1)).collect();
        let far_choice = b.pull_across(net, &view, &chosen_id, &chosen_edge)?;
        let link: Vec<Option<EdgeId>> = (0..n)
            .map(|v| {
                let (_, e, far) = chosen[v]?;
                let mutual = far_choice[v] == Some(e);
                (!(mutual && frag[v] < far)).then_some(e as EdgeId)
            })
            .collect();

        // Cole–Vishkin down to six colours
        let mut color = frag.clone();
        let mut bound = n as u64;
        while bound > 6 {
            let pc = b.pull_across(net, &view, &color, &link)?;
            for v in 0..n {
                color[v] = match pc[v] {
                    Some(p) => {
                        let i = u64::from((color[v] ^ p).trailing_zeros());
                        2 * i + ((color[v] >> i) & 1)
                    }
                    None => color[v] & 1,
                };
            }
            bound = 2 * bit_len(bound - 1);
        }
        // shift down and recolour 5, 4, 3
        for c in [5, 4, 3] {
            let old = color.clone();
            let pc = b.pull_across(net, &view, &old, &link)?;
            let shifted: Vec<u64> = (0..n).map(|v| pc[v].unwrap_or_else(|| smallest_free(&[Some(old[v])]))).collect();
            let pc = b.pull_across(net, &view, &shifted, &link)?;
            for v in 0..n {
                color[v] = if shifted[v] == c { smallest_free(&[pc[v], Some(old[v])]) } else { shifted[v] };
            }
        }

        // maximal matching, one colour class at a time
        let mut as_child = vec![false; n];
        let mut as_parent = vec![false; n];
        for k in 0..3u64 {
            let status: Vec<(Option<u64>, bool)> =
                (0..n).map(|v| (link[v].map(|e| e as u64), as_child[v] || as_parent[v])).collect();
            let heard = b.broadcast_links(net, &status)?;
            let mut want: PerNode<(u64, u64)> = vec![None; n];
            let mut to_virtual: PerNode<(u64, u64)> = vec![None; n];
            for v in net.physical_nodes() {
                for &(u, e) in graph.neighbors(v) {
                    if weights[e].is_none() {
                        continue;
                    }
                    let (their_link, their_matched) = if b.is_virtual(u) { status[u] } else { heard[v][&u] };
                    if their_link == Some(e as u64) && !their_matched {
                        let cand = (frag[u], e as u64);
                        if want[v].is_none_or(|w| cand < w) {
                            want[v] = Some(cand);
                        }
                    }
                    // v's own unmatched fragment hangs below the virtual one
                    if b.is_virtual(u) && link[v] == Some(e) && !(as_child[v] || as_parent[v]) {
                        to_virtual[v] = Some((frag[v], e as u64));
                    }
                }
            }
            let want = component_aggregate(net, cx, &view, want, None, to_virtual, |a, c| *a.min(c), tag)?.per_node;
            let pick: Vec<Option<EdgeId>> = (0..n)
                .map(|v| {
                    let free = !(as_child[v] || as_parent[v]);
                    (color[v] == k && free).then(|| want[v].map(|w| w.1 as EdgeId)).flatten()
                })
                .collect();

            // tell the picked child
            let notify = (0..n)
                .map(|v| match pick[v] {
                    Some(e) if net.is_physical(v) && graph.edge(e).touches(v) => {
                        let far = graph.edge(e).other(v);
                        if b.is_virtual(far) {
                            Vec::new()
                        } else {
                            vec![(far, e)]
                        }
                    }
                    _ => Vec::new(),
                })
                .collect();
            let told = exchange(net, notify, tag)?;
            let mut hit: PerNode<bool> = vec![None; n];
            let mut to_virtual: PerNode<bool> = vec![None; n];
            for v in net.physical_nodes() {
                if told[v].iter().any(|&(_, e)| link[v] == Some(e)) {
                    hit[v] = Some(true);
                }
                if let Some(s) = cx.virtual_node {
                    // the virtual fragment picked v's fragment
                    if pick[s].is_some_and(|e| graph.edge(e).touches(v) && link[v] == Some(e)) {
                        hit[v] = Some(true);
                    }
                    // v's fragment picked the virtual one
                    if pick[v].is_some_and(|e| graph.edge(e).touches(v) && graph.edge(e).touches(s)) {
                        to_virtual[v] = Some(true);
                    }
                }
            }
            let hit = component_aggregate(net, cx, &view, hit, None, to_virtual, |a, c| *a || *c, tag)?.per_node;
            for v in 0..n {
                as_child[v] |= hit[v].unwrap_or(false);
                as_parent[v] |= pick[v].is_some();
            }
        }

        // matched children bring the matching edge; unmatched fragments their own pick
        let mut added: BTreeSet<EdgeId> = BTreeSet::new();
        for v in 0..n {
            let Some(e) = chosen_edge[v] else { continue };
            if !(as_child[v] || !as_parent[v]) {
                continue;
            }
            let holder = net.is_physical(v) && graph.edge(e).touches(v);
            if holder || b.is_virtual(v) {
                added.insert(e);
            }
        }
        let notify = (0..n)
            .map(|v| {
                added
                    .iter()
                    .filter(|&&e| net.is_physical(v) && graph.edge(e).touches(v))
                    .map(|&e| graph.edge(e).other(v))
                    .filter(|&far| !b.is_virtual(far))
                    .map(|far| (far, ()))
                    .collect()
            })
            .collect();
        exchange(net, notify, tag)?;
        forest.extend(added);
    }
    Ok(MsfOutcome { forest, phases, rounds: net.rounds() - before })
}
