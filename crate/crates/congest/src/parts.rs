//! Partwise aggregation over vertex-disjoint connected parts, and the
//! component views that add a replicated virtual node on top of it.

use std::collections::BTreeSet;
use std::marker::PhantomData;

use shellforest_core::NodeId;

use crate::network::{Framing, Message, NodeCtx, Outbox, Protocol, RunStats, SimError, SimNetwork, Tag, Widths};
use crate::tree::{tree_aggregate, BfsTree, RootedForest};

/// Spanning trees of the parts; part id = minimum member = tree root.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PartForest {
    pub tree: RootedForest,
    pub part: Vec<NodeId>,
}

impl PartForest {
    /// Deepest part tree; partwise aggregation costs about twice this.
    pub fn max_depth(&self) -> usize {
        self.tree.height()
    }
}

#[derive(Clone)]
pub enum FloodMsg {
    Label(NodeId),
    Adopt,
    Leave,
}

impl Message for FloodMsg {
    fn bits(&self, w: &Widths) -> usize {
        2 + match self {
            FloodMsg::Label(_) => w.id,
            _ => 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct FloodState {
    nbrs: Vec<NodeId>,
    label: NodeId,
    parent: Option<NodeId>,
    children: BTreeSet<NodeId>,
}

struct MinFlood;

impl Protocol for MinFlood {
    type State = FloodState;
    type Msg = FloodMsg;

    fn name(&self) -> &'static str {
        "part-flood"
    }

    fn start(&self, ctx: &NodeCtx, st: &mut FloodState, out: &mut Outbox<FloodMsg>) {
        st.label = ctx.id;
        out.send_all(st.nbrs.iter().copied(), &FloodMsg::Label(ctx.id));
    }

    fn receive(&self, _: &NodeCtx, st: &mut FloodState, inbox: &[(NodeId, FloodMsg)], out: &mut Outbox<FloodMsg>) {
        let mut best: Option<(NodeId, NodeId)> = None;
        for (from, m) in inbox {
            match m {
                FloodMsg::Adopt => {
                    st.children.insert(*from);
                }
                FloodMsg::Leave => {
                    st.children.remove(from);
                }
                FloodMsg::Label(l) => {
                    if best.is_none_or(|b| (*l, *from) < b) {
                        best = Some((*l, *from));
                    }
                }
            }
        }
        if let Some((l, from)) = best {
            if l < st.label {
                st.label = l;
                if let Some(old) = st.parent.replace(from) {
                    out.send(old, FloodMsg::Leave);
                }
                out.send(from, FloodMsg::Adopt);
                let others = st.nbrs.iter().copied().filter(|&u| u != from);
                out.send_all(others, &FloodMsg::Label(l));
            }
        }
    }
}

/// Builds part trees by minimum-id flooding over `part_nbrs` (for each
/// physical node, its physical neighbours in the same part).
pub fn build_part_forest(
    net: &mut SimNetwork,
    part_nbrs: &[Vec<NodeId>],
    tag: Tag,
) -> Result<(PartForest, RunStats), SimError> {
    let n = net.n();
    let mut st: Vec<FloodState> = (0..n)
        .map(|v| FloodState { nbrs: part_nbrs[v].clone(), label: v, parent: None, children: BTreeSet::new() })
        .collect();
    let stats = net.run(&MinFlood, &mut st, tag, Framing::Strict)?;
    let tree = RootedForest {
        parent: st.iter().map(|s| s.parent).collect(),
        children: st.iter().map(|s| s.children.iter().copied().collect()).collect(),
        member: (0..n).map(|v| net.is_physical(v)).collect(),
    };
    Ok((PartForest { tree, part: st.iter().map(|s| s.label).collect() }, stats))
}

/// Every node of part V_i learns the fold of `values` over V_i. Values must
/// fit in one message.
pub fn partwise_aggregate<T, F>(
    net: &mut SimNetwork,
    parts: &PartForest,
    values: Vec<T>,
    op: F,
    tag: Tag,
) -> Result<(Vec<Option<T>>, RunStats), SimError>
where
    T: Message,
    F: Fn(&T, &T) -> T + Sync,
{
    let out = tree_aggregate(net, &parts.tree, values.into_iter().map(Some).collect(), op, tag, Framing::Strict)?;
    net.note_pa(out.1.rounds);
    Ok(out)
}

/// Components of an edge set that may include edges to one virtual node.
///
/// Physical parts are spanned by part trees. Parts attached to the virtual
/// node form a single component together with it; aggregation over that
/// component adds one global convergecast and broadcast on the BFS tree.
#[derive(Debug, Clone)]
pub struct ComponentView {
    pub parts: PartForest,
    pub attached: Vec<bool>,
    pub comp: Vec<NodeId>,
    pub virtual_node: Option<NodeId>,
    /// Component id of the virtual node (replicated at every node).
    pub virtual_comp: Option<NodeId>,
}

pub struct Ctx<'a> {
    pub bfs: &'a BfsTree,
    pub virtual_node: Option<NodeId>,
}

/// Builds the view. `part_nbrs` lists physical neighbours across selected
/// edges; `touches_virtual[v]` says v has a selected edge to the virtual node.
pub fn build_component_view(
    net: &mut SimNetwork,
    cx: &Ctx,
    part_nbrs: &[Vec<NodeId>],
    touches_virtual: &[bool],
    tag: Tag,
) -> Result<ComponentView, SimError> {
    let (parts, _) = build_part_forest(net, part_nbrs, tag)?;
    let n = net.n();
    let Some(s) = cx.virtual_node else {
        return Ok(ComponentView {
            comp: parts.part.clone(),
            parts,
            attached: vec![false; n],
            virtual_node: None,
            virtual_comp: None,
        });
    };
    let touch: Vec<Option<bool>> = (0..n).map(|v| net.is_physical(v).then_some(touches_virtual[v])).collect();
    let (attached, _) = tree_aggregate(net, &parts.tree, touch, |a, b| *a || *b, tag, Framing::Strict)?;
    let attached: Vec<bool> = attached.into_iter().map(|a| a.unwrap_or(false)).collect();
    let roots: Vec<Option<NodeId>> =
        (0..n).map(|v| (net.is_physical(v) && attached[v] && parts.tree.is_root(v)).then_some(v)).collect();
    let (min_root, _) = global_aggregate(net, cx.bfs, roots, |a, b| *a.min(b), tag)?;
    let vcomp = min_root[cx.bfs.root].unwrap_or(s).min(s);
    let comp = (0..n).map(|v| if v == s || attached[v] { vcomp } else { parts.part[v] }).collect();
    Ok(ComponentView { parts, attached, comp, virtual_node: Some(s), virtual_comp: Some(vcomp) })
}

/// Convergecast and broadcast over the BFS tree.
pub fn global_aggregate<T, F>(
    net: &mut SimNetwork,
    bfs: &BfsTree,
    values: Vec<Option<T>>,
    op: F,
    tag: Tag,
) -> Result<(Vec<Option<T>>, RunStats), SimError>
where
    T: Message,
    F: Fn(&T, &T) -> T + Sync,
{
    tree_aggregate(net, &bfs.forest, values, op, tag, Framing::Pipelined)
}

/// Result of [`component_aggregate`]: per-node value for its own component
/// and the (replicated) value of the virtual node's component.
#[derive(Debug, Clone)]
pub struct CompAgg<T> {
    pub per_node: Vec<Option<T>>,
    pub virtual_value: Option<T>,
    pub rounds: u64,
}

/// Folds `values` within each component.
///
/// `virtual_value` is the virtual node's own contribution (known to all);
/// `to_virtual[v]` lets any node contribute to the virtual node's component
/// without belonging to it, which is how messages across a virtual edge are
/// simulated.
#[allow(clippy::too_many_arguments)]
pub fn component_aggregate<T, F>(
    net: &mut SimNetwork,
    cx: &Ctx,
    view: &ComponentView,
    values: Vec<Option<T>>,
    virtual_value: Option<T>,
    to_virtual: Vec<Option<T>>,
    op: F,
    tag: Tag,
) -> Result<CompAgg<T>, SimError>
where
    T: Message,
    F: Fn(&T, &T) -> T + Sync + Copy,
{
    let before = net.rounds();
    let (mut per_node, _) = tree_aggregate(net, &view.parts.tree, values, op, tag, Framing::Pipelined)?;
    let mut vval = None;
    if let Some(s) = cx.virtual_node {
        let join = |a: Option<T>, b: Option<T>| match (a, b) {
            (Some(x), Some(y)) => Some(op(&x, &y)),
            (x, None) => x,
            (None, y) => y,
        };
        let n = net.n();
        let mut contrib: Vec<Option<T>> = (0..n)
            .map(|v| {
                if !net.is_physical(v) {
                    return None;
                }
                let own = (view.attached[v] && view.parts.tree.is_root(v)).then(|| per_node[v].clone()).flatten();
                join(own, to_virtual[v].clone())
            })
            .collect();
        // the BFS root adds the replicated contribution of the virtual node itself
        let r = cx.bfs.root;
        contrib[r] = join(contrib[r].take(), virtual_value);
        let (global, _) = global_aggregate(net, cx.bfs, contrib, op, tag)?;
        vval = global[r].clone();
        for v in 0..n {
            if net.is_physical(v) && view.attached[v] {
                per_node[v] = global[v].clone();
            }
        }
        per_node[s] = vval.clone();
    }
    let rounds = net.rounds() - before;
    net.note_pa(rounds);
    Ok(CompAgg { per_node, virtual_value: vval, rounds })
}

struct Exchange<T>(PhantomData<T>);

type ExState<T> = (Vec<(NodeId, T)>, Vec<(NodeId, T)>);

impl<T: Message> Protocol for Exchange<T> {
    type State = ExState<T>;
    type Msg = T;

    fn name(&self) -> &'static str {
        "exchange"
    }

    fn start(&self, _: &NodeCtx, st: &mut ExState<T>, out: &mut Outbox<T>) {
        for (to, m) in st.0.drain(..) {
            out.send(to, m);
        }
    }

    fn receive(&self, _: &NodeCtx, st: &mut ExState<T>, inbox: &[(NodeId, T)], _: &mut Outbox<T>) {
        st.1.extend(inbox.iter().cloned());
    }
}

/// One round of neighbour-to-neighbour messages (several frames when wide).
/// `outgoing[v]` lists (neighbour, message); the result lists what each node
/// received, sorted by sender.
pub fn exchange<T: Message>(
    net: &mut SimNetwork,
    outgoing: Vec<Vec<(NodeId, T)>>,
    tag: Tag,
) -> Result<Vec<Vec<(NodeId, T)>>, SimError> {
    let mut st: Vec<ExState<T>> = outgoing.into_iter().map(|o| (o, Vec::new())).collect();
    net.run(&Exchange(PhantomData), &mut st, tag, Framing::Pipelined)?;
    Ok(st
        .into_iter()
        .map(|(_, mut got)| {
            got.sort_by_key(|(from, _)| *from);
            got
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::SimConfig;
    use crate::tree::build_bfs_tree;
    use shellforest_core::WeightedGraph;

    fn nbrs_of(n: usize, edges: &[(NodeId, NodeId)]) -> Vec<Vec<NodeId>> {
        let mut out = vec![Vec::new(); n];
        for &(u, v) in edges {
            out[u].push(v);
            out[v].push(u);
        }
        out
    }

    #[test]
    fn parts_sum_and_min() {
        let g = WeightedGraph::new(3, [(0, 1, 1), (1, 2, 1)]).unwrap();
        let mut net = SimNetwork::new(&g, SimConfig::default()).unwrap();
        let (pf, _) = build_part_forest(&mut net, &nbrs_of(3, &[(0, 1)]), Tag::Setup).unwrap();
        assert_eq!(pf.part, vec![0, 0, 2]);
        let (sum, _) = partwise_aggregate(&mut net, &pf, vec![1u64; 3], |a, b| a + b, Tag::Setup).unwrap();
        assert_eq!(sum, vec![Some(2), Some(2), Some(1)]);
        let ids: Vec<u64> = (0..3).collect();
        let (min, _) = partwise_aggregate(&mut net, &pf, ids, |a, b| *a.min(b), Tag::Setup).unwrap();
        assert_eq!(min, vec![Some(0), Some(0), Some(2)]);
    }

    #[test]
    fn flood_builds_trees_rooted_at_min() {
        // cycle 3-1-4-2-3 with part = whole cycle
        let g = WeightedGraph::new(5, [(3, 1, 1), (1, 4, 1), (4, 2, 1), (2, 3, 1), (0, 1, 1)]).unwrap();
        let mut net = SimNetwork::new(&g, SimConfig::default()).unwrap();
        let edges = [(3, 1), (1, 4), (4, 2), (2, 3)];
        let (pf, _) = build_part_forest(&mut net, &nbrs_of(5, &edges), Tag::Setup).unwrap();
        assert_eq!(pf.part, vec![0, 1, 1, 1, 1]);
        for v in 1..5 {
            assert_eq!(pf.tree.root_of(v), 1);
        }
        let kids: usize = pf.tree.children.iter().map(Vec::len).sum();
        assert_eq!(kids, 3);
    }

    #[test]
    fn strict_pa_rejects_wide_values() {
        let g = WeightedGraph::new(2, [(0, 1, 1)]).unwrap();
        let mut net = SimNetwork::new(&g, SimConfig::default()).unwrap();
        let (pf, _) = build_part_forest(&mut net, &nbrs_of(2, &[(0, 1)]), Tag::Setup).unwrap();
        let err = partwise_aggregate(&mut net, &pf, vec![u64::MAX; 2], |a, b| a ^ b, Tag::Setup).unwrap_err();
        assert!(matches!(err, SimError::Congestion { .. }));
    }

    #[test]
    fn virtual_component_spans_disconnected_parts() {
        // physical path 0-1-2-3; virtual 4 attached to 0 and 3 via selected edges
        let g = WeightedGraph::new(5, [(0, 1, 1), (1, 2, 1), (2, 3, 1), (0, 4, 1), (3, 4, 1)])
            .unwrap()
            .with_virtual(4)
            .unwrap();
        let mut net = SimNetwork::new(&g, SimConfig::default()).unwrap();
        let bfs = build_bfs_tree(&mut net, 0).unwrap();
        let cx = Ctx { bfs: &bfs, virtual_node: Some(4) };
        let touches = vec![true, false, false, true, false];
        let view = build_component_view(&mut net, &cx, &vec![Vec::new(); 5], &touches, Tag::Ffe).unwrap();
        assert_eq!(view.comp, vec![0, 1, 2, 0, 0]);
        let vals = (0..5).map(|v| net.is_physical(v).then_some(1u64)).collect();
        let agg =
            component_aggregate(&mut net, &cx, &view, vals, Some(1), vec![None; 5], |a, b| a + b, Tag::Ffe).unwrap();
        assert_eq!(agg.per_node, vec![Some(3), Some(1), Some(1), Some(3), Some(3)]);
        assert_eq!(agg.virtual_value, Some(3));
    }
}
