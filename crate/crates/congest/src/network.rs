//! Synchronous message passing with per-link bandwidth.
//!
//! Every directed physical link carries at most one frame of `B` bits per
//! round. A message longer than `B` bits either occupies several consecutive
//! frames on its link ([`Framing::Pipelined`]) or is rejected
//! ([`Framing::Strict`]).

use std::collections::{BTreeMap, VecDeque};
use std::fmt;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use shellforest_core::{EdgeId, NodeId, WeightedGraph};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SimError {
    #[error("congestion: node {from} sent {bits} bits to {to} but B = {limit}")]
    Congestion { from: NodeId, to: NodeId, bits: usize, limit: usize },
    #[error("locality: node {from} addressed non-neighbour {to}")]
    NotNeighbor { from: NodeId, to: NodeId },
    #[error("physical graph is disconnected (node {0} unreachable)")]
    Disconnected(NodeId),
    #[error("protocol {0} went quiet before every node finished")]
    Deadlock(&'static str),
    #[error("configuration: {0}")]
    Config(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum Tag {
    Setup,
    Bfs,
    Sssp,
    Ecr,
    Cmi,
    Msf,
    Rps,
    Ffe,
    Sync,
}

impl Tag {
    pub fn name(self) -> &'static str {
        match self {
            Tag::Setup => "SETUP",
            Tag::Bfs => "BFS",
            Tag::Sssp => "SSSP",
            Tag::Ecr => "ECR",
            Tag::Cmi => "CMI",
            Tag::Msf => "MSF",
            Tag::Rps => "RPS",
            Tag::Ffe => "FFE",
            Tag::Sync => "SYNC",
        }
    }
}

impl fmt::Display for Tag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Framing {
    Strict,
    #[default]
    Pipelined,
}

#[derive(Debug, Clone)]
pub struct SimConfig {
    /// B = c_b · ⌈log₂ n⌉.
    pub c_b: usize,
    pub parallel: bool,
    /// Permutes each inbox before delivery; protocols must not depend on order.
    pub shuffle_seed: Option<u64>,
    pub audit: bool,
    pub trace: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self { c_b: 4, parallel: false, shuffle_seed: None, audit: true, trace: false }
    }
}

/// Bit widths used to size messages.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Widths {
    /// ⌈log₂ n⌉, at least 1.
    pub id: usize,
    pub b: usize,
}

pub fn log2_ceil(n: usize) -> usize {
    (usize::BITS - n.saturating_sub(1).leading_zeros()).max(1) as usize
}

pub trait Message: Clone + Send + Sync {
    fn bits(&self, w: &Widths) -> usize;
}

pub struct NodeCtx<'a> {
    pub id: NodeId,
    /// Physical neighbours and the connecting edge, sorted by neighbour id.
    pub neighbors: &'a [(NodeId, EdgeId)],
    pub widths: Widths,
}

pub struct Outbox<M> {
    pub(crate) msgs: Vec<(NodeId, M)>,
}

impl<M: Clone> Outbox<M> {
    fn new() -> Self {
        Self { msgs: Vec::new() }
    }

    pub fn send(&mut self, to: NodeId, msg: M) {
        self.msgs.push((to, msg));
    }

    pub fn send_all(&mut self, to: impl IntoIterator<Item = NodeId>, msg: &M) {
        for t in to {
            self.msgs.push((t, msg.clone()));
        }
    }
}

/// A node program. Handlers see only their own state and inbox.
pub trait Protocol: Sync {
    type State: Send;
    type Msg: Message;

    fn name(&self) -> &'static str;

    fn start(&self, ctx: &NodeCtx, st: &mut Self::State, out: &mut Outbox<Self::Msg>);

    /// Invoked in every round in which the node received something.
    fn receive(&self, ctx: &NodeCtx, st: &mut Self::State, inbox: &[(NodeId, Self::Msg)], out: &mut Outbox<Self::Msg>);

    fn finished(&self, _st: &Self::State) -> bool {
        true
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TraceRecord {
    pub round: u64,
    pub node: NodeId,
    pub bytes: usize,
    pub tag: Tag,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct RunStats {
    pub rounds: u64,
    pub messages: u64,
    pub bits: u64,
}

struct Pending<M> {
    msg: M,
    frames_left: usize,
    bits_left: usize,
}

/// Topology plus counters. Virtual nodes have no links.
pub struct SimNetwork {
    n: usize,
    adj: Vec<Vec<(NodeId, EdgeId)>>,
    physical: Vec<bool>,
    widths: Widths,
    cfg: SimConfig,
    rounds: u64,
    messages: u64,
    tally: BTreeMap<Tag, u64>,
    trace: Vec<TraceRecord>,
    max_pa: u64,
}

impl SimNetwork {
    pub fn new(graph: &WeightedGraph, cfg: SimConfig) -> Result<Self, SimError> {
        if cfg.c_b == 0 {
            return Err(SimError::Config("c_b must be at least 1".into()));
        }
        let n = graph.n();
        let physical: Vec<bool> = (0..n).map(|v| !graph.is_virtual(v)).collect();
        let adj = (0..n)
            .map(|v| {
                if !physical[v] {
                    return Vec::new();
                }
                graph.neighbors(v).iter().copied().filter(|&(u, _)| physical[u]).collect()
            })
            .collect();
        let id = log2_ceil(n);
        Ok(Self {
            n,
            adj,
            physical,
            widths: Widths { id, b: cfg.c_b * id },
            cfg,
            rounds: 0,
            messages: 0,
            tally: BTreeMap::new(),
            trace: Vec::new(),
            max_pa: 0,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn widths(&self) -> Widths {
        self.widths
    }

    pub fn bandwidth(&self) -> usize {
        self.widths.b
    }

    pub fn is_physical(&self, v: NodeId) -> bool {
        self.physical[v]
    }

    pub fn physical_nodes(&self) -> impl Iterator<Item = NodeId> + '_ {
        (0..self.n).filter(|&v| self.physical[v])
    }

    pub fn neighbors(&self, v: NodeId) -> &[(NodeId, EdgeId)] {
        &self.adj[v]
    }

    pub fn rounds(&self) -> u64 {
        self.rounds
    }

    pub fn messages(&self) -> u64 {
        self.messages
    }

    pub fn tally(&self) -> &BTreeMap<Tag, u64> {
        &self.tally
    }

    pub fn trace(&self) -> &[TraceRecord] {
        &self.trace
    }

    /// Records the cost of one partwise aggregation.
    pub fn note_pa(&mut self, rounds: u64) {
        self.max_pa = self.max_pa.max(rounds);
    }

    pub fn max_pa_rounds(&self) -> u64 {
        self.max_pa
    }

    /// Charges rounds that are accounted but not simulated (barriers).
    pub fn charge(&mut self, tag: Tag, rounds: u64) {
        self.rounds += rounds;
        *self.tally.entry(tag).or_default() += rounds;
    }

    fn ctx(&self, v: NodeId) -> NodeCtx<'_> {
        NodeCtx { id: v, neighbors: &self.adj[v], widths: self.widths }
    }

    fn link_index(&self, from: NodeId, to: NodeId) -> Option<usize> {
        self.adj[from].binary_search_by_key(&to, |&(w, _)| w).ok()
    }

    /// Runs `proto` until no message is in flight. `states` is indexed by node
    /// id; entries of virtual nodes are never touched.
    pub fn run<P: Protocol>(
        &mut self,
        proto: &P,
        states: &mut [P::State],
        tag: Tag,
        framing: Framing,
    ) -> Result<RunStats, SimError> {
        assert_eq!(states.len(), self.n, "one state per node");
        let mut queues: Vec<Vec<VecDeque<Pending<P::Msg>>>> =
            self.adj.iter().map(|a| a.iter().map(|_| VecDeque::new()).collect()).collect();
        let mut stats = RunStats::default();

        let mut outs: Vec<Outbox<P::Msg>> = (0..self.n).map(|_| Outbox::new()).collect();
        for v in 0..self.n {
            if self.physical[v] {
                proto.start(&self.ctx(v), &mut states[v], &mut outs[v]);
            }
        }
        let mut in_flight = self.enqueue(&mut queues, outs, framing)?;

        while in_flight > 0 {
            self.rounds += 1;
            stats.rounds += 1;
            let mut inboxes: Vec<Vec<(NodeId, P::Msg)>> = vec![Vec::new(); self.n];
            let mut sent_bits = vec![0usize; self.n];
            for from in 0..self.n {
                for (k, q) in queues[from].iter_mut().enumerate() {
                    let Some(head) = q.front_mut() else { continue };
                    let frame = head.bits_left.min(self.widths.b);
                    head.bits_left -= frame;
                    head.frames_left -= 1;
                    sent_bits[from] += frame;
                    stats.bits += frame as u64;
                    if head.frames_left == 0 {
                        let done = q.pop_front().expect("head exists");
                        in_flight -= 1;
                        inboxes[self.adj[from][k].0].push((from, done.msg));
                    }
                }
            }
            if self.cfg.trace {
                for (node, &bits) in sent_bits.iter().enumerate() {
                    if bits > 0 {
                        self.trace.push(TraceRecord { round: self.rounds, node, bytes: bits.div_ceil(8), tag });
                    }
                }
            }
            if let Some(seed) = self.cfg.shuffle_seed {
                for (v, inbox) in inboxes.iter_mut().enumerate() {
                    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (self.rounds << 20) ^ v as u64);
                    inbox.shuffle(&mut rng);
                }
            }
            let delivered: u64 = inboxes.iter().map(|i| i.len() as u64).sum();
            stats.messages += delivered;

            let outs = self.step_all(proto, states, &inboxes);
            in_flight += self.enqueue(&mut queues, outs, framing)?;
        }
        self.messages += stats.messages;
        *self.tally.entry(tag).or_default() += stats.rounds;
        if states.iter().zip(&self.physical).any(|(s, &p)| p && !proto.finished(s)) {
            return Err(SimError::Deadlock(proto.name()));
        }
        Ok(stats)
    }

    fn step_all<P: Protocol>(
        &self,
        proto: &P,
        states: &mut [P::State],
        inboxes: &[Vec<(NodeId, P::Msg)>],
    ) -> Vec<Outbox<P::Msg>> {
        let step = |(v, st): (usize, &mut P::State)| {
            let mut out = Outbox::new();
            if !inboxes[v].is_empty() {
                proto.receive(&self.ctx(v), st, &inboxes[v], &mut out);
            }
            out
        };
        if self.cfg.parallel {
            states.par_iter_mut().enumerate().map(step).collect()
        } else {
            states.iter_mut().enumerate().map(step).collect()
        }
    }

    fn enqueue<M: Message>(
        &self,
        queues: &mut [Vec<VecDeque<Pending<M>>>],
        outs: Vec<Outbox<M>>,
        framing: Framing,
    ) -> Result<usize, SimError> {
        let mut count = 0;
        for (from, out) in outs.into_iter().enumerate() {
            for (to, msg) in out.msgs {
                let Some(k) = self.link_index(from, to) else {
                    if self.cfg.audit {
                        return Err(SimError::NotNeighbor { from, to });
                    }
                    panic!("message from {from} to non-neighbour {to}");
                };
                let bits = msg.bits(&self.widths).max(1);
                if framing == Framing::Strict && bits > self.widths.b {
                    return Err(SimError::Congestion { from, to, bits, limit: self.widths.b });
                }
                let frames = bits.div_ceil(self.widths.b);
                queues[from][k].push_back(Pending { msg, frames_left: frames, bits_left: bits });
                count += 1;
            }
        }
        Ok(count)
    }
}

fn int_bits(x: u64) -> usize {
    (u64::BITS - x.leading_zeros()).max(1) as usize + 1
}

impl Message for bool {
    fn bits(&self, _: &Widths) -> usize {
        1
    }
}

impl Message for u64 {
    fn bits(&self, _: &Widths) -> usize {
        int_bits(*self)
    }
}

impl Message for usize {
    fn bits(&self, _: &Widths) -> usize {
        int_bits(*self as u64)
    }
}

impl Message for u32 {
    fn bits(&self, _: &Widths) -> usize {
        int_bits(u64::from(*self))
    }
}

impl Message for i64 {
    fn bits(&self, _: &Widths) -> usize {
        int_bits(self.unsigned_abs()) + 1
    }
}

impl Message for () {
    fn bits(&self, _: &Widths) -> usize {
        1
    }
}

impl Message for shellforest_core::Rational {
    fn bits(&self, _: &Widths) -> usize {
        shellforest_core::rational::bit_len(self)
    }
}

impl<T: Message> Message for Option<T> {
    fn bits(&self, w: &Widths) -> usize {
        1 + self.as_ref().map_or(0, |x| x.bits(w))
    }
}

impl<T: Message> Message for Vec<T> {
    fn bits(&self, w: &Widths) -> usize {
        int_bits(self.len() as u64) + self.iter().map(|x| x.bits(w)).sum::<usize>()
    }
}

impl<A: Message, B: Message> Message for (A, B) {
    fn bits(&self, w: &Widths) -> usize {
        self.0.bits(w) + self.1.bits(w)
    }
}

impl<A: Message, B: Message, C: Message> Message for (A, B, C) {
    fn bits(&self, w: &Widths) -> usize {
        self.0.bits(w) + self.1.bits(w) + self.2.bits(w)
    }
}

impl<A: Message, B: Message, C: Message, D: Message> Message for (A, B, C, D) {
    fn bits(&self, w: &Widths) -> usize {
        self.0.bits(w) + self.1.bits(w) + self.2.bits(w) + self.3.bits(w)
    }
}

/// Writes trace records as one JSON object per line.
pub fn write_trace_jsonl<W: std::io::Write>(records: &[TraceRecord], mut w: W) -> std::io::Result<()> {
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(Clone)]
    struct Blob(usize);
    impl Message for Blob {
        fn bits(&self, _: &Widths) -> usize {
            self.0
        }
    }

    /// Node 0 sends one message of the given size to node 1.
    struct OneShot(usize);
    impl Protocol for OneShot {
        type State = Option<usize>;
        type Msg = Blob;
        fn name(&self) -> &'static str {
            "one-shot"
        }
        fn start(&self, ctx: &NodeCtx, _: &mut Option<usize>, out: &mut Outbox<Blob>) {
            if ctx.id == 0 {
                out.send(1, Blob(self.0));
            }
        }
        fn receive(&self, _: &NodeCtx, st: &mut Option<usize>, inbox: &[(NodeId, Blob)], _: &mut Outbox<Blob>) {
            *st = Some(inbox[0].1 .0);
        }
    }

    fn pair() -> WeightedGraph {
        WeightedGraph::new(4, [(0, 1, 1), (1, 2, 1), (2, 3, 1)]).unwrap()
    }

    #[test]
    fn widths() {
        assert_eq!(log2_ceil(1), 1);
        assert_eq!(log2_ceil(2), 1);
        assert_eq!(log2_ceil(4), 2);
        assert_eq!(log2_ceil(5), 3);
        let net = SimNetwork::new(&pair(), SimConfig::default()).unwrap();
        assert_eq!(net.bandwidth(), 8);
    }

    #[test]
    fn pipelined_long_message_takes_several_rounds() {
        let mut net = SimNetwork::new(&pair(), SimConfig::default()).unwrap();
        let mut st = vec![None; 4];
        let s = net.run(&OneShot(20), &mut st, Tag::Setup, Framing::Pipelined).unwrap();
        assert_eq!(s.rounds, 3);
        assert_eq!(st[1], Some(20));
        assert_eq!(net.tally()[&Tag::Setup], 3);
    }

    #[test]
    fn strict_rejects_oversize() {
        let mut net = SimNetwork::new(&pair(), SimConfig::default()).unwrap();
        let mut st = vec![None; 4];
        let err = net.run(&OneShot(9), &mut st, Tag::Setup, Framing::Strict).unwrap_err();
        assert!(matches!(err, SimError::Congestion { bits: 9, limit: 8, .. }));
    }

    struct Stranger;
    impl Protocol for Stranger {
        type State = ();
        type Msg = Blob;
        fn name(&self) -> &'static str {
            "stranger"
        }
        fn start(&self, ctx: &NodeCtx, _: &mut (), out: &mut Outbox<Blob>) {
            if ctx.id == 0 {
                out.send(3, Blob(1));
            }
        }
        fn receive(&self, _: &NodeCtx, _: &mut (), _: &[(NodeId, Blob)], _: &mut Outbox<Blob>) {}
    }

    #[test]
    fn audit_catches_non_neighbor() {
        let mut net = SimNetwork::new(&pair(), SimConfig::default()).unwrap();
        let err = net.run(&Stranger, &mut [(); 4], Tag::Setup, Framing::Strict).unwrap_err();
        assert_eq!(err, SimError::NotNeighbor { from: 0, to: 3 });
    }

    #[test]
    fn virtual_nodes_have_no_links() {
        let g = WeightedGraph::new(3, [(0, 1, 1), (1, 2, 1)]).unwrap().with_virtual(2).unwrap();
        let net = SimNetwork::new(&g, SimConfig::default()).unwrap();
        assert!(net.neighbors(2).is_empty());
        assert_eq!(net.neighbors(1), &[(0, 0)]);
    }
}
