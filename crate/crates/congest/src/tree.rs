//! Rooted forests over the physical network and the programs that run on
//! them: BFS construction, convergecast/broadcast aggregation, pipelined
//! sorted upcast and item broadcast.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::marker::PhantomData;

use shellforest_core::NodeId;

use crate::network::{Framing, Message, NodeCtx, Outbox, Protocol, RunStats, SimError, SimNetwork, Tag, Widths};

/// Parent/children pointers; nodes outside the forest have `member = false`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RootedForest {
    pub parent: Vec<Option<NodeId>>,
    pub children: Vec<Vec<NodeId>>,
    pub member: Vec<bool>,
}

impl RootedForest {
    pub fn is_root(&self, v: NodeId) -> bool {
        self.member[v] && self.parent[v].is_none()
    }

    pub fn roots(&self) -> impl Iterator<Item = NodeId> + '_ {
        (0..self.parent.len()).filter(|&v| self.is_root(v))
    }

    /// Root of `v`'s tree, by walking parents (analysis helper).
    pub fn root_of(&self, mut v: NodeId) -> NodeId {
        while let Some(p) = self.parent[v] {
            v = p;
        }
        v
    }

    /// Largest number of edges on a root-to-leaf path (analysis helper).
    pub fn height(&self) -> usize {
        fn go(f: &RootedForest, v: NodeId) -> usize {
            f.children[v].iter().map(|&c| 1 + go(f, c)).max().unwrap_or(0)
        }
        self.roots().map(|r| go(self, r)).max().unwrap_or(0)
    }
}

#[derive(Debug, Clone)]
pub struct BfsTree {
    pub root: NodeId,
    pub forest: RootedForest,
    pub level: Vec<Option<u32>>,
    pub depth: u32,
}

#[derive(Clone)]
pub enum BfsMsg {
    Join(u32),
    Child,
}

impl Message for BfsMsg {
    fn bits(&self, w: &Widths) -> usize {
        1 + match self {
            BfsMsg::Join(_) => w.id,
            BfsMsg::Child => 0,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct BfsState {
    parent: Option<NodeId>,
    level: Option<u32>,
    children: Vec<NodeId>,
}

struct BfsBuild {
    root: NodeId,
}

impl Protocol for BfsBuild {
    type State = BfsState;
    type Msg = BfsMsg;

    fn name(&self) -> &'static str {
        "bfs"
    }

    fn start(&self, ctx: &NodeCtx, st: &mut BfsState, out: &mut Outbox<BfsMsg>) {
        if ctx.id == self.root {
            st.level = Some(0);
            out.send_all(ctx.neighbors.iter().map(|&(u, _)| u), &BfsMsg::Join(0));
        }
    }

    fn receive(&self, ctx: &NodeCtx, st: &mut BfsState, inbox: &[(NodeId, BfsMsg)], out: &mut Outbox<BfsMsg>) {
        for (from, m) in inbox {
            if let BfsMsg::Child = m {
                st.children.push(*from);
            }
        }
        if st.level.is_some() {
            return;
        }
        let best = inbox
            .iter()
            .filter_map(|(from, m)| match m {
                BfsMsg::Join(l) => Some((*from, *l)),
                BfsMsg::Child => None,
            })
            .min();
        if let Some((p, l)) = best {
            st.parent = Some(p);
            st.level = Some(l + 1);
            out.send(p, BfsMsg::Child);
            let others = ctx.neighbors.iter().map(|&(u, _)| u).filter(|&u| u != p);
            out.send_all(others, &BfsMsg::Join(l + 1));
        }
    }
}

/// Flooding BFS from `root`: `depth` flooding rounds plus one registration round.
pub fn build_bfs_tree(net: &mut SimNetwork, root: NodeId) -> Result<BfsTree, SimError> {
    let mut st = vec![BfsState::default(); net.n()];
    net.run(&BfsBuild { root }, &mut st, Tag::Bfs, Framing::Strict)?;
    if let Some(v) = net.physical_nodes().find(|&v| st[v].level.is_none()) {
        return Err(SimError::Disconnected(v));
    }
    let n = net.n();
    let forest = RootedForest {
        parent: st.iter().map(|s| s.parent).collect(),
        children: st
            .iter()
            .map(|s| {
                let mut c = s.children.clone();
                c.sort_unstable();
                c
            })
            .collect(),
        member: (0..n).map(|v| net.is_physical(v)).collect(),
    };
    let level: Vec<Option<u32>> = st.iter().map(|s| s.level).collect();
    let depth = level.iter().flatten().copied().max().unwrap_or(0);
    Ok(BfsTree { root, forest, level, depth })
}

#[derive(Clone)]
pub struct AggMsg<T> {
    down: bool,
    val: Option<T>,
}

impl<T: Message> Message for AggMsg<T> {
    fn bits(&self, w: &Widths) -> usize {
        1 + self.val.bits(w)
    }
}

#[derive(Debug, Clone)]
pub struct AggState<T> {
    acc: Option<T>,
    waiting: usize,
    result: Option<Option<T>>,
}

struct Aggregate<'a, T, F> {
    forest: &'a RootedForest,
    op: F,
    _t: PhantomData<fn() -> T>,
}

impl<T, F> Aggregate<'_, T, F>
where
    T: Message,
    F: Fn(&T, &T) -> T + Sync,
{
    fn fold(&self, a: &mut Option<T>, b: &Option<T>) {
        *a = match (a.take(), b) {
            (None, None) => None,
            (Some(x), None) => Some(x),
            (None, Some(y)) => Some(y.clone()),
            (Some(x), Some(y)) => Some((self.op)(&x, y)),
        };
    }

    fn complete(&self, v: NodeId, st: &mut AggState<T>, out: &mut Outbox<AggMsg<T>>) {
        match self.forest.parent[v] {
            Some(p) => out.send(p, AggMsg { down: false, val: st.acc.clone() }),
            None => {
                st.result = Some(st.acc.clone());
                let m = AggMsg { down: true, val: st.acc.clone() };
                out.send_all(self.forest.children[v].iter().copied(), &m);
            }
        }
    }
}

impl<T, F> Protocol for Aggregate<'_, T, F>
where
    T: Message,
    F: Fn(&T, &T) -> T + Sync,
{
    type State = AggState<T>;
    type Msg = AggMsg<T>;

    fn name(&self) -> &'static str {
        "aggregate"
    }

    fn start(&self, ctx: &NodeCtx, st: &mut AggState<T>, out: &mut Outbox<AggMsg<T>>) {
        if !self.forest.member[ctx.id] {
            st.result = Some(None);
            return;
        }
        st.waiting = self.forest.children[ctx.id].len();
        if st.waiting == 0 {
            self.complete(ctx.id, st, out);
        }
    }

    fn receive(&self, ctx: &NodeCtx, st: &mut AggState<T>, inbox: &[(NodeId, AggMsg<T>)], out: &mut Outbox<AggMsg<T>>) {
        for (_, m) in inbox {
            if m.down {
                st.result = Some(m.val.clone());
                out.send_all(self.forest.children[ctx.id].iter().copied(), m);
            } else {
                self.fold(&mut st.acc, &m.val);
                st.waiting -= 1;
                if st.waiting == 0 {
                    self.complete(ctx.id, st, out);
                }
            }
        }
    }

    fn finished(&self, st: &AggState<T>) -> bool {
        st.result.is_some()
    }
}

/// Convergecast to each root, then broadcast back: every member ends with the
/// fold of its tree's inputs. Non-members get `None`.
pub fn tree_aggregate<T, F>(
    net: &mut SimNetwork,
    forest: &RootedForest,
    values: Vec<Option<T>>,
    op: F,
    tag: Tag,
    framing: Framing,
) -> Result<(Vec<Option<T>>, RunStats), SimError>
where
    T: Message,
    F: Fn(&T, &T) -> T + Sync,
{
    let proto = Aggregate { forest, op, _t: PhantomData };
    let mut st: Vec<AggState<T>> = values.into_iter().map(|acc| AggState { acc, waiting: 0, result: None }).collect();
    let stats = net.run(&proto, &mut st, tag, framing)?;
    Ok((st.into_iter().map(|s| s.result.flatten()).collect(), stats))
}

#[derive(Clone)]
pub enum StreamMsg<K, V> {
    Item(K, V),
    End,
}

impl<K: Message, V: Message> Message for StreamMsg<K, V> {
    fn bits(&self, w: &Widths) -> usize {
        1 + match self {
            StreamMsg::Item(k, v) => k.bits(w) + v.bits(w),
            StreamMsg::End => 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct MergeState<K, V> {
    local: BTreeMap<K, V>,
    buffers: BTreeMap<NodeId, VecDeque<(K, V)>>,
    ended: BTreeSet<NodeId>,
    sent_end: bool,
    collected: BTreeMap<K, V>,
}

struct MergeUpcast<'a, K, V, F> {
    forest: &'a RootedForest,
    combine: F,
    _kv: PhantomData<fn() -> (K, V)>,
}

impl<K, V, F> MergeUpcast<'_, K, V, F>
where
    K: Message + Ord,
    V: Message,
    F: Fn(&V, &V) -> V + Sync,
{
    fn pump(&self, v: NodeId, st: &mut MergeState<K, V>, out: &mut Outbox<StreamMsg<K, V>>) {
        let kids = &self.forest.children[v];
        loop {
            let ready = kids.iter().all(|c| st.ended.contains(c) || !st.buffers[c].is_empty());
            if !ready || st.sent_end {
                return;
            }
            let heads = st.buffers.values().filter_map(|b| b.front().map(|x| &x.0));
            let key = heads.chain(st.local.keys().next()).min().cloned();
            let Some(key) = key else {
                st.sent_end = true;
                if let Some(p) = self.forest.parent[v] {
                    out.send(p, StreamMsg::End);
                }
                return;
            };
            let mut acc = st.local.remove(&key);
            for b in st.buffers.values_mut() {
                if let Some((_, val)) = b.pop_front_if(|x| x.0 == key) {
                    acc = Some(match acc {
                        Some(a) => (self.combine)(&a, &val),
                        None => val,
                    });
                }
            }
            let val = acc.expect("key came from some source");
            match self.forest.parent[v] {
                Some(p) => out.send(p, StreamMsg::Item(key, val)),
                None => {
                    st.collected.insert(key, val);
                }
            }
        }
    }
}

impl<K, V, F> Protocol for MergeUpcast<'_, K, V, F>
where
    K: Message + Ord,
    V: Message,
    F: Fn(&V, &V) -> V + Sync,
{
    type State = MergeState<K, V>;
    type Msg = StreamMsg<K, V>;

    fn name(&self) -> &'static str {
        "merge-upcast"
    }

    fn start(&self, ctx: &NodeCtx, st: &mut MergeState<K, V>, out: &mut Outbox<StreamMsg<K, V>>) {
        if !self.forest.member[ctx.id] {
            st.sent_end = true;
            return;
        }
        for &c in &self.forest.children[ctx.id] {
            st.buffers.insert(c, VecDeque::new());
        }
        self.pump(ctx.id, st, out);
    }

    fn receive(
        &self,
        ctx: &NodeCtx,
        st: &mut MergeState<K, V>,
        inbox: &[(NodeId, StreamMsg<K, V>)],
        out: &mut Outbox<StreamMsg<K, V>>,
    ) {
        for (from, m) in inbox {
            match m {
                StreamMsg::Item(k, v) => st.buffers.entry(*from).or_default().push_back((k.clone(), v.clone())),
                StreamMsg::End => {
                    st.ended.insert(*from);
                }
            }
        }
        self.pump(ctx.id, st, out);
    }

    fn finished(&self, st: &MergeState<K, V>) -> bool {
        st.sent_end
    }
}

/// Pipelined convergecast of sorted key/value streams. Each root ends with
/// the merge of its tree, values of equal keys folded by `combine`.
/// Rounds are O(height + number of distinct keys).
pub fn merge_upcast<K, V, F>(
    net: &mut SimNetwork,
    forest: &RootedForest,
    local: Vec<BTreeMap<K, V>>,
    combine: F,
    tag: Tag,
) -> Result<(Vec<BTreeMap<K, V>>, RunStats), SimError>
where
    K: Message + Ord,
    V: Message,
    F: Fn(&V, &V) -> V + Sync,
{
    let proto = MergeUpcast { forest, combine, _kv: PhantomData };
    let mut st: Vec<MergeState<K, V>> = local
        .into_iter()
        .map(|local| MergeState {
            local,
            buffers: BTreeMap::new(),
            ended: BTreeSet::new(),
            sent_end: false,
            collected: BTreeMap::new(),
        })
        .collect();
    let stats = net.run(&proto, &mut st, tag, Framing::Pipelined)?;
    Ok((st.into_iter().map(|s| s.collected).collect(), stats))
}

#[derive(Debug, Clone, Default)]
pub struct DownState<T> {
    items: Vec<T>,
    done: bool,
}

struct Downcast<'a, T> {
    forest: &'a RootedForest,
    _t: PhantomData<fn() -> T>,
}

impl<T: Message> Protocol for Downcast<'_, T> {
    type State = DownState<T>;
    type Msg = Option<T>;

    fn name(&self) -> &'static str {
        "downcast"
    }

    fn start(&self, ctx: &NodeCtx, st: &mut DownState<T>, out: &mut Outbox<Option<T>>) {
        if !self.forest.member[ctx.id] {
            st.done = true;
            return;
        }
        if self.forest.is_root(ctx.id) {
            let kids = &self.forest.children[ctx.id];
            for it in &st.items {
                out.send_all(kids.iter().copied(), &Some(it.clone()));
            }
            out.send_all(kids.iter().copied(), &None);
            st.done = true;
        }
    }

    fn receive(
        &self,
        ctx: &NodeCtx,
        st: &mut DownState<T>,
        inbox: &[(NodeId, Option<T>)],
        out: &mut Outbox<Option<T>>,
    ) {
        let kids = &self.forest.children[ctx.id];
        for (_, m) in inbox {
            out.send_all(kids.iter().copied(), m);
            match m {
                Some(it) => st.items.push(it.clone()),
                None => st.done = true,
            }
        }
    }

    fn finished(&self, st: &DownState<T>) -> bool {
        st.done
    }
}

/// Streams each root's item list to every node of its tree, one item per
/// link per round, followed by an end marker.
pub fn downcast_items<T: Message>(
    net: &mut SimNetwork,
    forest: &RootedForest,
    at_roots: Vec<Vec<T>>,
    tag: Tag,
) -> Result<(Vec<Vec<T>>, RunStats), SimError> {
    let proto = Downcast { forest, _t: PhantomData };
    let mut st: Vec<DownState<T>> = at_roots.into_iter().map(|items| DownState { items, done: false }).collect();
    let stats = net.run(&proto, &mut st, tag, Framing::Pipelined)?;
    Ok((st.into_iter().map(|s| s.items).collect(), stats))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::SimConfig;
    use shellforest_core::WeightedGraph;

    fn net(g: &WeightedGraph) -> SimNetwork {
        SimNetwork::new(g, SimConfig::default()).unwrap()
    }

    #[test]
    fn bfs_star_and_path() {
        let star = WeightedGraph::new(5, (1..5).map(|i| (0, i, 1))).unwrap();
        let mut n = net(&star);
        let t = build_bfs_tree(&mut n, 0).unwrap();
        assert_eq!(t.depth, 1);
        assert!(n.rounds() <= u64::from(t.depth) + 1);
        assert_eq!(t.forest.children[0], vec![1, 2, 3, 4]);

        let path = WeightedGraph::new(6, (0..5).map(|i| (i, i + 1, 1))).unwrap();
        let mut n = net(&path);
        let t = build_bfs_tree(&mut n, 0).unwrap();
        assert_eq!(t.depth, 5);
    }

    #[test]
    fn bfs_disconnected() {
        let g = WeightedGraph::new(3, [(0, 1, 1)]).unwrap();
        assert_eq!(build_bfs_tree(&mut net(&g), 0).unwrap_err(), SimError::Disconnected(2));
    }

    #[test]
    fn aggregate_sum_over_bfs() {
        let path = WeightedGraph::new(4, (0..3).map(|i| (i, i + 1, 1))).unwrap();
        let mut n = net(&path);
        let t = build_bfs_tree(&mut n, 0).unwrap();
        let vals = (0..4).map(|v| Some(v as u64)).collect();
        let (res, stats) = tree_aggregate(&mut n, &t.forest, vals, |a, b| a + b, Tag::Sync, Framing::Strict).unwrap();
        assert!(res.iter().all(|r| *r == Some(6)));
        assert_eq!(stats.rounds, 2 * u64::from(t.depth));
    }

    #[test]
    fn merge_upcast_counts() {
        let star = WeightedGraph::new(4, (1..4).map(|i| (0, i, 1))).unwrap();
        let mut n = net(&star);
        let t = build_bfs_tree(&mut n, 0).unwrap();
        let local: Vec<BTreeMap<u64, u64>> =
            vec![[(5, 1)].into(), [(1, 1), (5, 1)].into(), [(2, 1)].into(), BTreeMap::new()];
        let (res, _) = merge_upcast(&mut n, &t.forest, local, |a, b| a + b, Tag::Ffe).unwrap();
        assert_eq!(res[0], [(1, 1), (2, 1), (5, 2)].into());
        assert!(res[1].is_empty());
    }

    #[test]
    fn downcast_reaches_everyone() {
        let path = WeightedGraph::new(4, (0..3).map(|i| (i, i + 1, 1))).unwrap();
        let mut n = net(&path);
        let t = build_bfs_tree(&mut n, 0).unwrap();
        let mut at = vec![Vec::new(); 4];
        at[0] = vec![7u64, 8, 9];
        let (res, stats) = downcast_items(&mut n, &t.forest, at, Tag::Ffe).unwrap();
        assert_eq!(res[3], vec![7, 8, 9]);
        // depth 3, four messages per link
        assert_eq!(stats.rounds, 3 + 3);
    }
}
