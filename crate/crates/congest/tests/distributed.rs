use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use shellforest_congest::parts::{build_part_forest, Ctx};
use shellforest_congest::{
    build_bfs_tree, msf_partwise, partwise_aggregate, run_distributed_cfp, DistConfig, SimConfig, SimNetwork, Tag,
};
use shellforest_core::graph::kruskal;
use shellforest_core::spec::augment_fpc;
use shellforest_core::{run_shell_decomposition, EngineConfig, NodeId, ProblemSpec, Variant, WeightedGraph};

fn connected(rng: &mut ChaCha8Rng, n: usize, extra: usize, max_cost: u64) -> WeightedGraph {
    let mut edges = BTreeMap::new();
    for v in 1..n {
        let u = rng.gen_range(0..v);
        edges.insert((u, v), rng.gen_range(1..=max_cost));
    }
    for _ in 0..extra * 4 {
        if edges.len() >= n - 1 + extra {
            break;
        }
        let u = rng.gen_range(0..n);
        let v = rng.gen_range(0..n);
        if u != v {
            edges.entry((u.min(v), u.max(v))).or_insert_with(|| rng.gen_range(1..=max_cost));
        }
    }
    WeightedGraph::new(n, edges.into_iter().map(|((u, v), c)| (u, v, c))).unwrap()
}

fn labels(rng: &mut ChaCha8Rng, n: usize) -> Vec<Option<u32>> {
    let mut nodes: Vec<NodeId> = (0..n).collect();
    nodes.shuffle(rng);
    let k = rng.gen_range(1..=(n / 3).max(1));
    let mut out = vec![None; n];
    let mut it = nodes.into_iter();
    for l in 0..k as u32 {
        let size = rng.gen_range(2..=3);
        for _ in 0..size {
            if let Some(v) = it.next() {
                out[v] = Some(l);
            }
        }
    }
    // a label left with one node would be invalid
    let mut counts = BTreeMap::new();
    for l in out.iter().flatten() {
        *counts.entry(*l).or_insert(0) += 1;
    }
    for x in out.iter_mut() {
        if x.is_some_and(|l| counts[&l] < 2) {
            *x = None;
        }
    }
    out
}

fn requests(rng: &mut ChaCha8Rng, n: usize, symmetric: bool) -> Vec<BTreeSet<NodeId>> {
    let mut r = vec![BTreeSet::new(); n];
    for _ in 0..rng.gen_range(1..=n / 2) {
        let u = rng.gen_range(0..n);
        let v = rng.gen_range(0..n);
        if u != v {
            r[u].insert(v);
            if symmetric {
                r[v].insert(u);
            }
        }
    }
    if r.iter().all(BTreeSet::is_empty) {
        r[0].insert(1);
        if symmetric {
            r[1].insert(0);
        }
    }
    r
}

fn instance(variant: Variant, seed: u64, n: usize) -> (WeightedGraph, ProblemSpec) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g = connected(&mut rng, n, n / 2, 8);
    match variant {
        Variant::SfIc => (g, ProblemSpec::SfIc { labels: labels(&mut rng, n) }),
        Variant::SfCic => (g, ProblemSpec::cic_from_labels(labels(&mut rng, n))),
        Variant::SfCr => (g, ProblemSpec::SfCr { requests: requests(&mut rng, n, false) }),
        Variant::SfScr => (g, ProblemSpec::SfScr { requests: requests(&mut rng, n, true) }),
        Variant::Ppc => {
            let mut nodes: Vec<NodeId> = (0..n).collect();
            nodes.shuffle(&mut rng);
            let k = rng.gen_range(1..=n / 2);
            let sources = nodes[..k].iter().copied().collect();
            let targets = nodes[k..2 * k].iter().copied().collect();
            (g, ProblemSpec::Ppc { sources, targets })
        }
        Variant::Fpc => {
            let opening: Vec<u64> = (0..n).map(|_| rng.gen_range(1..=8)).collect();
            let clients: BTreeSet<NodeId> = (0..n).filter(|_| rng.gen_bool(0.4)).chain([0]).collect();
            augment_fpc(&g, &opening, &clients).unwrap()
        }
    }
}

#[test]
fn forests_match_the_centralized_engine() {
    let cfg = EngineConfig::quarter();
    for (i, variant) in Variant::ALL.iter().copied().cycle().take(36).enumerate() {
        let n = 4 + i % 9;
        let (g, spec) = instance(variant, i as u64, n);
        let central = run_shell_decomposition(&g, &spec, &cfg).unwrap();
        let dist = run_distributed_cfp(&g, &spec, &cfg, &DistConfig::default(), Some(1000 + i as u64)).unwrap();
        assert_eq!(dist.forest, central.forest, "{variant} instance {i}");
        assert_eq!(dist.lb, central.lb, "{variant} instance {i}");
        assert_eq!(dist.report.phases, central.report.phases);
        let rounds = dist.report.rounds.as_ref().unwrap();
        assert_eq!(rounds.per_phase.len() as u32, dist.report.phases);
    }
}

#[test]
fn facility_node_carries_no_traffic() {
    let (g, spec) = instance(Variant::Fpc, 77, 6);
    let cfg = DistConfig { sim: SimConfig { trace: true, ..SimConfig::default() }, ..DistConfig::default() };
    let run = run_distributed_cfp(&g, &spec, &EngineConfig::quarter(), &cfg, None).unwrap();
    let s = g.n() - 1;
    assert!(!run.trace.is_empty());
    assert!(run.trace.iter().all(|r| r.node != s));
}

#[test]
fn randomized_variants_require_a_seed() {
    let (g, spec) = instance(Variant::SfScr, 3, 6);
    let err = run_distributed_cfp(&g, &spec, &EngineConfig::quarter(), &DistConfig::default(), None);
    assert!(err.is_err());
}

#[test]
fn msf_matches_kruskal_on_random_graphs() {
    for seed in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rng.gen_range(2..=64);
        let extra = rng.gen_range(0..=2 * n);
        let g = connected(&mut rng, n, extra, 20);
        let mut net = SimNetwork::new(&g, SimConfig::default()).unwrap();
        let bfs = build_bfs_tree(&mut net, 0).unwrap();
        let cx = Ctx { bfs: &bfs, virtual_node: None };
        let w: Vec<Option<u64>> = g.edges().iter().map(|e| Some(e.cost)).collect();
        let out = msf_partwise(&mut net, &cx, &g, &w, Tag::Msf).unwrap();
        let items = g.edges().iter().map(|e| ((e.cost, e.id), e.id, e.u, e.v)).collect();
        let expect: BTreeSet<_> = kruskal(n, items).into_iter().collect();
        assert_eq!(g.cost_of(&out.forest), g.cost_of(&expect));
        assert_eq!(out.forest, expect);
        assert!(out.phases as usize <= shellforest_congest::network::log2_ceil(n));
    }
}

#[test]
fn partwise_xor_matches_direct_fold() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let g = connected(&mut rng, 60, 40, 5);
    // 20 parts grown as random subtrees of a spanning forest
    let mut part_nbrs = vec![Vec::new(); 60];
    let mut owner: Vec<usize> = (0..60).collect();
    let mut parts = 60;
    let mut edges: Vec<_> = g.edges().to_vec();
    edges.shuffle(&mut rng);
    let mut dsu = shellforest_core::graph::Dsu::new(60);
    for e in edges {
        if parts == 20 {
            break;
        }
        if dsu.union(e.u, e.v) {
            part_nbrs[e.u].push(e.v);
            part_nbrs[e.v].push(e.u);
            parts -= 1;
        }
    }
    for (v, o) in owner.iter_mut().enumerate() {
        *o = dsu.find(v);
    }
    let vals: Vec<u64> = (0..60).map(|_| rng.gen_range(0..256)).collect();
    for shuffle in [None, Some(1), Some(2)] {
        let mut net = SimNetwork::new(&g, SimConfig { shuffle_seed: shuffle, ..SimConfig::default() }).unwrap();
        let (pf, _) = build_part_forest(&mut net, &part_nbrs, Tag::Setup).unwrap();
        let (got, _) = partwise_aggregate(&mut net, &pf, vals.clone(), |a, b| a ^ b, Tag::Setup).unwrap();
        for v in 0..60 {
            let expect = (0..60).filter(|&u| owner[u] == owner[v]).fold(0, |acc, u| acc ^ vals[u]);
            assert_eq!(got[v], Some(expect));
        }
    }
}

#[test]
fn parallel_stepping_gives_identical_traces() {
    let (g, spec) = instance(Variant::SfIc, 9, 12);
    let cfg = EngineConfig::quarter();
    let seq = DistConfig { sim: SimConfig { trace: true, ..SimConfig::default() }, ..DistConfig::default() };
    let par =
        DistConfig { sim: SimConfig { trace: true, parallel: true, ..SimConfig::default() }, ..DistConfig::default() };
    let a = run_distributed_cfp(&g, &spec, &cfg, &seq, None).unwrap();
    let b = run_distributed_cfp(&g, &spec, &cfg, &par, None).unwrap();
    assert_eq!(a.forest, b.forest);
    assert_eq!(a.trace, b.trace);
}
