use std::collections::{BTreeMap, BTreeSet};

use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use shellforest_core::graph::{partition_of, Dsu};
use shellforest_core::oracle::{brute_force_opt, certify_run, RatioKind};
use shellforest_core::rational::int;
use shellforest_core::spec::augment_fpc;
use shellforest_core::{
    minimum_spanning_forest, run_shell_decomposition, sssp_forest, sssp_forest_glued, EngineConfig, NodeId,
    ProblemSpec, Rational, SsspMode, Variant, WeightedGraph,
};

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
        let (u, v) = (rng.gen_range(0..n), rng.gen_range(0..n));
        if u != v {
            edges.entry((u.min(v), u.max(v))).or_insert_with(|| rng.gen_range(1..=max_cost));
        }
    }
    WeightedGraph::new(n, edges.into_iter().map(|((u, v), c)| (u, v, c))).unwrap()
}

fn instance(variant: Variant, seed: u64, n: usize) -> (WeightedGraph, ProblemSpec) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g = connected(&mut rng, n, n / 2, 6);
    let mut nodes: Vec<NodeId> = (0..n).collect();
    nodes.shuffle(&mut rng);
    match variant {
        Variant::SfIc | Variant::SfCic => {
            let mut labels = vec![None; n];
            for (i, &v) in nodes.iter().enumerate().take(n - n / 3) {
                labels[v] = Some((i / 2) as u32);
            }
            // drop a trailing singleton label
            let last = (n - n / 3 - 1) / 2;
            if labels.iter().filter(|l| **l == Some(last as u32)).count() < 2 {
                labels.iter_mut().filter(|l| **l == Some(last as u32)).for_each(|l| *l = None);
            }
            if variant == Variant::SfIc {
                (g, ProblemSpec::SfIc { labels })
            } else {
                (g, ProblemSpec::cic_from_labels(labels))
            }
        }
        Variant::SfCr | Variant::SfScr => {
            let mut requests = vec![BTreeSet::new(); n];
            for _ in 0..rng.gen_range(1..=n / 2) {
                let (u, v) = (rng.gen_range(0..n), rng.gen_range(0..n));
                if u != v {
                    requests[u].insert(v);
                    if variant == Variant::SfScr {
                        requests[v].insert(u);
                    }
                }
            }
            if variant == Variant::SfCr {
                (g, ProblemSpec::SfCr { requests })
            } else {
                (g, ProblemSpec::SfScr { requests })
            }
        }
        Variant::Ppc => {
            let k = rng.gen_range(1..=n / 2);
            let sources = nodes[..k].iter().copied().collect();
            let targets = nodes[k..2 * k].iter().copied().collect();
            (g, ProblemSpec::Ppc { sources, targets })
        }
        Variant::Fpc => {
            let opening: Vec<u64> = (0..n).map(|_| rng.gen_range(1..=6)).collect();
            let clients: BTreeSet<NodeId> = nodes[..rng.gen_range(1..=n)].iter().copied().collect();
            augment_fpc(&g, &opening, &clients).unwrap()
        }
    }
}

fn floyd_warshall(g: &WeightedGraph, costs: &[Option<Rational>]) -> Vec<Vec<Option<Rational>>> {
    let n = g.n();
    let mut d: Vec<Vec<Option<Rational>>> = vec![vec![None; n]; n];
    for (v, row) in d.iter_mut().enumerate() {
        row[v] = Some(int(0));
    }
    for e in g.edges() {
        if let Some(c) = &costs[e.id] {
            for (a, b) in [(e.u, e.v), (e.v, e.u)] {
                if d[a][b].as_ref().is_none_or(|x| c < x) {
                    d[a][b] = Some(c.clone());
                }
            }
        }
    }
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                if let (Some(a), Some(b)) = (&d[i][k], &d[k][j]) {
                    let s = a + b;
                    if d[i][j].as_ref().is_none_or(|x| s < *x) {
                        d[i][j] = Some(s);
                    }
                }
            }
        }
    }
    d
}

fn is_forest(g: &WeightedGraph, edges: &BTreeSet<usize>) -> bool {
    let mut dsu = Dsu::new(g.n());
    edges.iter().all(|&e| dsu.union(g.edge(e).u, g.edge(e).v))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(240))]

    #[test]
    fn engine_output_is_certified(seed in any::<u64>(), v in 0usize..6, n in 3usize..=8) {
        let variant = Variant::ALL[v];
        let (g, spec) = instance(variant, seed, n);
        let cfg = EngineConfig::quarter();
        let run = run_shell_decomposition(&g, &spec, &cfg).unwrap();
        prop_assert!(is_forest(&g, &run.forest));
        let opt = brute_force_opt(&g, &spec).unwrap();
        let cert = certify_run(&g, &spec, &run.forest, &run.lb, &RatioKind::Shell(cfg), Some(&opt));
        prop_assert!(cert.passed(), "{variant}: {:?}", cert.failures());
    }

    #[test]
    fn sssp_distances_match_floyd_warshall(seed in any::<u64>(), n in 2usize..=12, k in 1usize..=3) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = connected(&mut rng, n, n, 9);
        // some edges dead, some at zero
        let costs: Vec<Option<Rational>> = g
            .edges()
            .iter()
            .map(|e| match rng.gen_range(0..6) {
                0 => None,
                1 => Some(int(0)),
                _ => Some(Rational::new(e.cost.into(), 2u32.into())),
            })
            .collect();
        let sources: BTreeSet<NodeId> = (0..k).map(|_| rng.gen_range(0..n)).collect();
        let radius = Rational::new(rng.gen_range(0..30u32).into(), 4u32.into());
        let sp = sssp_forest(&g, &costs, &sources, &radius, &SsspMode::Exact).unwrap();
        let d = floyd_warshall(&g, &costs);
        for (w, got) in sp.dist.iter().enumerate() {
            let best = sources.iter().filter_map(|&s| d[s][w].clone()).min();
            let expect = best.filter(|b| *b <= radius);
            prop_assert_eq!(got, &expect, "node {}", w);
        }
        prop_assert!(is_forest(&g, &sp.edges));

        // gluing a forest of zero-cost edges, at most one source per
        // component, changes ties only
        let mut dsu = Dsu::new(n);
        let mut glue = BTreeSet::new();
        for e in g.edges() {
            if costs[e.id].as_ref().is_none_or(|c| *c != int(0)) {
                continue;
            }
            let (a, b) = (dsu.find(e.u), dsu.find(e.v));
            let has_src = |r: usize, dsu: &mut Dsu| sources.iter().any(|&s| dsu.find(s) == r);
            if a != b && !(has_src(a, &mut dsu) && has_src(b, &mut dsu)) {
                dsu.union(a, b);
                glue.insert(e.id);
            }
        }
        let glued = sssp_forest_glued(&g, &costs, &sources, &glue, &radius, &SsspMode::Exact).unwrap();
        prop_assert_eq!(&glued.dist, &sp.dist);
        prop_assert!(is_forest(&g, &glued.edges));
        for &e in &glue {
            let (u, v) = (g.edge(e).u, g.edge(e).v);
            prop_assert_eq!(glued.root[u], glued.root[v]);
            prop_assert_eq!(glued.edges.contains(&e), glued.reached(u));
        }
    }

    #[test]
    fn msf_weight_matches_exhaustive(seed in any::<u64>(), n in 2usize..=7) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = connected(&mut rng, n, n, 5);
        let w: Vec<u64> = g.edges().iter().map(|e| e.cost).collect();
        let got: BTreeSet<usize> = minimum_spanning_forest(&g, &w).into_iter().collect();
        prop_assert_eq!(got.len(), n - 1);
        prop_assert!(is_forest(&g, &got));
        let m = g.m();
        let best = (0u32..1 << m)
            .filter(|s| s.count_ones() as usize == n - 1)
            .map(|s| (0..m).filter(|e| s >> e & 1 == 1).collect::<BTreeSet<_>>())
            .filter(|s| is_forest(&g, s))
            .map(|s| g.cost_of(&s))
            .min()
            .unwrap();
        prop_assert_eq!(g.cost_of(&got), best);
    }

    #[test]
    fn component_activity_agrees_with_subset_semantics(seed in any::<u64>(), v in 0usize..5, n in 3usize..=9) {
        let (g, spec) = instance(Variant::ALL[v], seed, n);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
        let chosen: BTreeSet<usize> = (0..g.m()).filter(|_| rng.gen_bool(0.4)).collect();
        let parts = partition_of(&g, &chosen);
        let activity = spec.evaluate_components(&parts);
        for (c, members) in parts.components() {
            prop_assert_eq!(activity.is_active(c), spec.f_subset(&members, g.n()).unwrap());
        }
    }
}
