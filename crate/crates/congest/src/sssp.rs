//! Truncated set-source shortest paths by synchronous Bellman–Ford.
//!
//! Labels are the centralized [`Label`]s, so forest edges are glued exactly as
//! there; a node's parent is its minimum-id neighbour attaining its label,
//! which reproduces the centralized forest. Labels beyond the radius are never
//! sent.

use std::collections::BTreeMap;

use shellforest_core::{EdgeId, Label, NodeId, Rational, WeightedGraph};

use crate::network::{Framing, Message, NodeCtx, Outbox, Protocol, SimError, SimNetwork, Tag, Widths};
use crate::parts::{global_aggregate, Ctx};

impl Message for Label {
    fn bits(&self, w: &Widths) -> usize {
        self.dist.bits(w) + self.hops.bits(w) + 2 * w.id + self.inner.bits(w)
    }
}

#[derive(Debug, Clone)]
pub struct BfState {
    source: bool,
    radius: Rational,
    /// Live incident physical edges: (neighbour, edge, reduced cost, glued).
    links: Vec<(NodeId, EdgeId, Rational, bool)>,
    /// Live edge to the virtual node and what is known about it.
    virt: Option<(NodeId, EdgeId, Rational, bool, Option<Label>)>,
    nbr: BTreeMap<NodeId, Label>,
    label: Option<Label>,
    parent: Option<(NodeId, EdgeId)>,
    sent: Option<Label>,
}

impl BfState {
    fn recompute(&mut self, id: NodeId) {
        if self.source {
            self.label = Some(Label::source(id));
            self.parent = None;
            return;
        }
        let mut best: Option<(Label, NodeId, EdgeId)> = None;
        let known = self.links.iter().filter_map(|(u, e, c, g)| self.nbr.get(u).map(|a| (*u, *e, c, *g, a)));
        let virt = self.virt.iter().filter_map(|(s, e, c, g, a)| a.as_ref().map(|a| (*s, *e, c, *g, a)));
        for (u, e, c, g, a) in known.chain(virt) {
            let cand = a.extend(c, g, id);
            if best.as_ref().is_none_or(|b| (&cand, u) < (&b.0, b.1)) {
                best = Some((cand, u, e));
            }
        }
        if let Some((l, u, e)) = best {
            self.label = Some(l);
            self.parent = Some((u, e));
        }
    }

    fn announce(&mut self, out: &mut Outbox<Label>) {
        let Some(l) = &self.label else { return };
        if l.dist > self.radius || self.sent.as_ref() == Some(l) {
            return;
        }
        self.sent = Some(l.clone());
        out.send_all(self.links.iter().map(|(u, _, _, _)| *u), l);
    }
}

struct BellmanFord;

impl Protocol for BellmanFord {
    type State = BfState;
    type Msg = Label;

    fn name(&self) -> &'static str {
        "bellman-ford"
    }

    fn start(&self, ctx: &NodeCtx, st: &mut BfState, out: &mut Outbox<Label>) {
        st.recompute(ctx.id);
        st.announce(out);
    }

    fn receive(&self, ctx: &NodeCtx, st: &mut BfState, inbox: &[(NodeId, Label)], out: &mut Outbox<Label>) {
        for (from, a) in inbox {
            st.nbr.insert(*from, a.clone());
        }
        st.recompute(ctx.id);
        st.announce(out);
    }
}

/// Result of [`distributed_sssp`]; index `s` holds the replicated state of
/// the virtual node.
#[derive(Debug, Clone)]
pub struct DistSssp {
    pub dist: Vec<Option<Rational>>,
    pub root: Vec<Option<NodeId>>,
    pub parent: Vec<Option<EdgeId>>,
    /// Neighbour announcements each node holds at the end (within the radius).
    pub heard: Vec<BTreeMap<NodeId, Label>>,
    pub rounds: u64,
}

impl DistSssp {
    pub fn reached(&self, v: NodeId) -> bool {
        self.dist[v].is_some()
    }
}

/// Shortest-path forest from `sources` over edges with `Some` cost, truncated
/// to distance `radius`. Edges flagged in `glue` must cost zero.
#[allow(clippy::too_many_arguments)]
pub fn distributed_sssp(
    net: &mut SimNetwork,
    cx: &Ctx,
    graph: &WeightedGraph,
    costs: &[Option<Rational>],
    glue: &[bool],
    sources: &[bool],
    radius: &Rational,
    tag: Tag,
) -> Result<DistSssp, SimError> {
    let before = net.rounds();
    let n = net.n();
    let s = cx.virtual_node;
    let mut st: Vec<BfState> = (0..n)
        .map(|v| {
            let mut links = Vec::new();
            let mut virt = None;
            if net.is_physical(v) {
                for &(u, e) in graph.neighbors(v) {
                    let Some(c) = &costs[e] else { continue };
                    if Some(u) == s {
                        virt = Some((u, e, c.clone(), glue[e], None));
                    } else {
                        links.push((u, e, c.clone(), glue[e]));
                    }
                }
            }
            BfState {
                source: sources[v],
                radius: radius.clone(),
                links,
                virt,
                nbr: BTreeMap::new(),
                label: None,
                parent: None,
                sent: None,
            }
        })
        .collect();

    // replicated state of the virtual node: label plus the neighbour it came through
    let mut s_label: Option<(Label, NodeId)> = s.filter(|&s| sources[s]).map(|s| (Label::source(s), s));
    loop {
        let announce = s_label.as_ref().map(|l| &l.0).filter(|l| l.dist <= *radius);
        for state in st.iter_mut() {
            if let Some(vt) = &mut state.virt {
                vt.4 = announce.cloned();
            }
        }
        net.run(&BellmanFord, &mut st, tag, Framing::Pipelined)?;
        let Some(s) = s else { break };
        if sources[s] {
            break;
        }
        let offers: Vec<Option<(Label, NodeId)>> = (0..n)
            .map(|v| {
                let (_, _, c, g, _) = st[v].virt.as_ref()?;
                let l = st[v].label.as_ref().filter(|l| l.dist <= *radius)?;
                // a label obtained through s itself cannot improve s
                if st[v].parent.is_some_and(|(u, _)| u == s) {
                    return None;
                }
                let cand = l.extend(c, *g, s);
                (cand.dist <= *radius).then_some((cand, v))
            })
            .collect();
        let (best, _) = global_aggregate(net, cx.bfs, offers, |a, b| a.min(b).clone(), tag)?;
        let best = best[cx.bfs.root].clone();
        if best == s_label {
            break;
        }
        s_label = best;
    }

    let mut out = DistSssp {
        dist: vec![None; n],
        root: vec![None; n],
        parent: vec![None; n],
        heard: vec![BTreeMap::new(); n],
        rounds: 0,
    };
    for (v, state) in st.into_iter().enumerate() {
        if let Some(l) = state.label.filter(|l| l.dist <= *radius) {
            out.dist[v] = Some(l.dist);
            out.root[v] = Some(l.root);
            out.parent[v] = state.parent.map(|(_, e)| e);
        }
        out.heard[v] = state.nbr;
    }
    if let (Some(s), Some((l, via))) = (s, s_label) {
        out.dist[s] = Some(l.dist);
        out.root[s] = Some(l.root);
        out.parent[s] = (via != s).then(|| graph.find_edge(via, s)).flatten();
    }
    out.rounds = net.rounds() - before;
    Ok(out)
}
