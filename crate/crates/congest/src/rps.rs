//! Root-path selection on the shortest-path forest: a node keeps its parent
//! edge iff its subtree contains a marked node.

use std::collections::BTreeSet;

use shellforest_core::{EdgeId, NodeId, WeightedGraph};

use crate::network::{Framing, NodeCtx, Outbox, Protocol, SimError, SimNetwork, Tag};
use crate::parts::{global_aggregate, Ctx};
use crate::sssp::DistSssp;

#[derive(Debug, Clone)]
pub struct OrState {
    up: Option<NodeId>,
    waiting: usize,
    acc: bool,
    done: bool,
}

struct SubtreeOr;

impl SubtreeOr {
    fn flush(st: &mut OrState, out: &mut Outbox<bool>) {
        if st.waiting == 0 && !st.done {
            st.done = true;
            if let Some(p) = st.up {
                out.send(p, st.acc);
            }
        }
    }
}

impl Protocol for SubtreeOr {
    type State = OrState;
    type Msg = bool;

    fn name(&self) -> &'static str {
        "subtree-or"
    }

    fn start(&self, _: &NodeCtx, st: &mut OrState, out: &mut Outbox<bool>) {
        Self::flush(st, out);
    }

    fn receive(&self, _: &NodeCtx, st: &mut OrState, inbox: &[(NodeId, bool)], out: &mut Outbox<bool>) {
        for (_, b) in inbox {
            st.acc |= b;
            st.waiting -= 1;
        }
        Self::flush(st, out);
    }

    fn finished(&self, st: &OrState) -> bool {
        st.done
    }
}

fn convergecast(
    net: &mut SimNetwork,
    graph: &WeightedGraph,
    sssp: &DistSssp,
    children: &[Vec<NodeId>],
    marked: &[bool],
    tag: Tag,
) -> Result<Vec<bool>, SimError> {
    let n = net.n();
    let mut st: Vec<OrState> = (0..n)
        .map(|v| {
            let up = sssp.parent[v].map(|e| graph.edge(e).other(v)).filter(|&p| net.is_physical(p));
            OrState { up, waiting: children[v].len(), acc: marked[v], done: false }
        })
        .collect();
    net.run(&SubtreeOr, &mut st, tag, Framing::Strict)?;
    Ok(st.into_iter().map(|s| s.acc).collect())
}

/// Parent edges selected for the marked nodes. `children[v]` lists the
/// physical children of v (learned from parent notifications).
pub fn root_paths(
    net: &mut SimNetwork,
    cx: &Ctx,
    graph: &WeightedGraph,
    sssp: &DistSssp,
    children: &[Vec<NodeId>],
    marked: &[bool],
    tag: Tag,
) -> Result<BTreeSet<EdgeId>, SimError> {
    let mut marked = marked.to_vec();
    let mut sub = convergecast(net, graph, sssp, children, &marked, tag)?;
    if let Some(s) = cx.virtual_node.filter(|&s| sssp.reached(s)) {
        let n = net.n();
        // subtrees hanging below the virtual node report through the BFS tree
        let vals = (0..n)
            .map(|v| {
                let below = sssp.parent[v].is_some_and(|e| graph.edge(e).touches(s));
                net.is_physical(v).then_some(below && sub[v])
            })
            .collect();
        let (any, _) = global_aggregate(net, cx.bfs, vals, |a, b| *a || *b, tag)?;
        sub[s] = marked[s] || any[cx.bfs.root].unwrap_or(false);
        if let Some(e) = sssp.parent[s].filter(|_| sub[s]) {
            let p = graph.edge(e).other(s);
            if !marked[p] {
                marked[p] = true;
                let again = convergecast(net, graph, sssp, children, &marked, tag)?;
                for v in 0..n {
                    if v != s {
                        sub[v] = again[v];
                    }
                }
            }
        }
    }
    Ok((0..net.n()).filter(|&v| sub[v]).filter_map(|v| sssp.parent[v]).collect())
}
