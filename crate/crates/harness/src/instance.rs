//! Instance files: a versioned TOML document holding the graph, the problem
//! data and optional generator metadata.
//!
//! ```toml
//! format = 1
//! n = 4
//! edges = [
//!   [0, 1, 3],
//!   [1, 2, 1],
//! ]
//!
//! [problem]
//! variant = "sf-ic"
//! labels = [[0, 7], [2, 7]]   # (node, label)
//! ```
//!
//! Request variants use `requests = [[u, v], ...]`, SF-CIC adds
//! `cardinality = [[label, size], ...]`, PPC has `sources`/`targets`, and FPC
//! stores the augmented graph with `virtual = [facility]` plus `opening`,
//! `clients` and `facility`.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::{self, Write as _};
use std::ops::Range;
use std::path::Path;

use serde::Deserialize;
use shellforest_core::{GraphError, NodeId, ProblemSpec, Variant, WeightedGraph};
use thiserror::Error;
use toml::Spanned;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub struct InstanceError {
    /// 1-based line the problem was found on, when known.
    pub line: Option<usize>,
    pub message: String,
}

impl fmt::Display for InstanceError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(l) => write!(f, "line {l}: {}", self.message),
            None => f.write_str(&self.message),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct GeneratorMeta {
    pub family: String,
    pub seed: Option<u64>,
    pub params: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InstanceFile {
    pub graph: WeightedGraph,
    pub spec: ProblemSpec,
    pub generator: Option<GeneratorMeta>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFile {
    format: Spanned<u32>,
    n: Spanned<usize>,
    #[serde(default, rename = "virtual")]
    virtual_nodes: Vec<Spanned<usize>>,
    edges: Vec<Spanned<(usize, usize, u64)>>,
    problem: Spanned<RawProblem>,
    generator: Option<RawGenerator>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawProblem {
    variant: Spanned<String>,
    labels: Option<Vec<Spanned<(usize, u32)>>>,
    cardinality: Option<Vec<Spanned<(u32, usize)>>>,
    requests: Option<Vec<Spanned<(usize, usize)>>>,
    sources: Option<Vec<Spanned<usize>>>,
    targets: Option<Vec<Spanned<usize>>>,
    opening: Option<Spanned<Vec<u64>>>,
    clients: Option<Vec<Spanned<usize>>>,
    facility: Option<Spanned<usize>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGenerator {
    family: String,
    seed: Option<u64>,
    #[serde(default)]
    params: BTreeMap<String, String>,
}

struct Lines<'a>(&'a str);

impl Lines<'_> {
    fn at(&self, span: Range<usize>) -> usize {
        let end = span.start.min(self.0.len());
        self.0[..end].bytes().filter(|&b| b == b'\n').count() + 1
    }

    fn err(&self, span: Range<usize>, message: impl Into<String>) -> InstanceError {
        InstanceError { line: Some(self.at(span)), message: message.into() }
    }
}

impl InstanceFile {
    pub fn parse(text: &str) -> Result<Self, InstanceError> {
        let lines = Lines(text);
        let raw: RawFile = toml::from_str(text).map_err(|e| InstanceError {
            line: e.span().map(|s| lines.at(s)),
            message: e.message().trim().to_string(),
        })?;
        if *raw.format.get_ref() != FORMAT_VERSION {
            return Err(lines.err(
                raw.format.span(),
                format!("unsupported format version {} (expected {FORMAT_VERSION})", raw.format.get_ref()),
            ));
        }
        let n = *raw.n.get_ref();
        let edges: Vec<(usize, usize, u64)> = raw.edges.iter().map(|e| *e.get_ref()).collect();
        let mut graph = WeightedGraph::new(n, edges).map_err(|e| {
            let idx = match e {
                GraphError::SelfLoop { edge, .. }
                | GraphError::DuplicateEdge { edge, .. }
                | GraphError::NodeOutOfRange { edge, .. }
                | GraphError::NonPositiveCost { edge, .. }
                | GraphError::NegativeCost { edge, .. } => Some(edge),
                _ => None,
            };
            match idx.and_then(|i| raw.edges.get(i)) {
                Some(s) => lines.err(s.span(), e.to_string()),
                None => lines.err(raw.n.span(), e.to_string()),
            }
        })?;
        for v in &raw.virtual_nodes {
            graph = graph.with_virtual(*v.get_ref()).map_err(|e| lines.err(v.span(), e.to_string()))?;
        }
        let spec = raw_spec(&lines, n, &raw.problem)?;
        spec.validate_on(&graph).map_err(|e| lines.err(raw.problem.span(), e.to_string()))?;
        let generator = raw.generator.map(|g| GeneratorMeta { family: g.family, seed: g.seed, params: g.params });
        Ok(Self { graph, spec, generator })
    }

    pub fn load(path: &Path) -> Result<Self, InstanceError> {
        let text = std::fs::read_to_string(path).map_err(|e| InstanceError { line: None, message: e.to_string() })?;
        Self::parse(&text)
    }

    pub fn save(&self, path: &Path) -> std::io::Result<()> {
        std::fs::write(path, self.to_toml())
    }

    pub fn to_toml(&self) -> String {
        let g = &self.graph;
        let mut s = String::new();
        let _ = writeln!(s, "format = {FORMAT_VERSION}");
        let _ = writeln!(s, "n = {}", g.n());
        let virt: Vec<NodeId> = g.virtual_nodes().collect();
        if !virt.is_empty() {
            let _ = writeln!(s, "virtual = {}", list(&virt));
        }
        s.push_str("edges = [\n");
        for e in g.edges() {
            let _ = writeln!(s, "  [{}, {}, {}],", e.u, e.v, e.cost);
        }
        s.push_str("]\n\n[problem]\n");
        let _ = writeln!(s, "variant = \"{}\"", self.spec.variant());
        match &self.spec {
            ProblemSpec::SfIc { labels } => {
                let _ = writeln!(s, "labels = {}", label_pairs(labels));
            }
            ProblemSpec::SfCic { labels, cardinality } => {
                let _ = writeln!(s, "labels = {}", label_pairs(labels));
                let pairs: Vec<String> = cardinality.iter().map(|(l, c)| format!("[{l}, {c}]")).collect();
                let _ = writeln!(s, "cardinality = [{}]", pairs.join(", "));
            }
            ProblemSpec::SfCr { requests } | ProblemSpec::SfScr { requests } => {
                let pairs: Vec<String> =
                    shellforest_core::spec::request_pairs(requests).map(|(u, v)| format!("[{u}, {v}]")).collect();
                let _ = writeln!(s, "requests = [{}]", pairs.join(", "));
            }
            ProblemSpec::Ppc { sources, targets } => {
                let _ = writeln!(s, "sources = {}", list(sources));
                let _ = writeln!(s, "targets = {}", list(targets));
            }
            ProblemSpec::Fpc { opening, clients, facility } => {
                let _ = writeln!(s, "opening = {}", list(opening));
                let _ = writeln!(s, "clients = {}", list(clients));
                let _ = writeln!(s, "facility = {facility}");
            }
        }
        if let Some(meta) = &self.generator {
            s.push_str("\n[generator]\n");
            let _ = writeln!(s, "family = {}", quote(&meta.family));
            if let Some(seed) = meta.seed {
                let _ = writeln!(s, "seed = {seed}");
            }
            if !meta.params.is_empty() {
                s.push_str("\n[generator.params]\n");
                for (k, v) in &meta.params {
                    let _ = writeln!(s, "{} = {}", quote(k), quote(v));
                }
            }
        }
        s
    }
}

fn list<T: fmt::Display>(items: impl IntoIterator<Item = T>) -> String {
    let parts: Vec<String> = items.into_iter().map(|x| x.to_string()).collect();
    format!("[{}]", parts.join(", "))
}

fn label_pairs(labels: &[Option<u32>]) -> String {
    let parts: Vec<String> = labels.iter().enumerate().filter_map(|(v, l)| l.map(|l| format!("[{v}, {l}]"))).collect();
    format!("[{}]", parts.join(", "))
}

fn quote(s: &str) -> String {
    toml::Value::String(s.to_string()).to_string()
}

fn raw_spec(lines: &Lines, n: usize, problem: &Spanned<RawProblem>) -> Result<ProblemSpec, InstanceError> {
    let p = problem.get_ref();
    let variant: Variant = p.variant.get_ref().parse().map_err(|e: String| lines.err(p.variant.span(), e))?;
    let missing = |field: &str| lines.err(problem.span(), format!("{variant} needs `{field}`"));
    let node = |v: &Spanned<usize>| -> Result<NodeId, InstanceError> {
        let x = *v.get_ref();
        if x < n {
            Ok(x)
        } else {
            Err(lines.err(v.span(), format!("node {x} is out of range (n = {n})")))
        }
    };
    let node_set = |items: &Option<Vec<Spanned<usize>>>, field: &str| -> Result<BTreeSet<NodeId>, InstanceError> {
        let items = items.as_ref().ok_or_else(|| missing(field))?;
        let mut out = BTreeSet::new();
        for v in items {
            if !out.insert(node(v)?) {
                return Err(lines.err(v.span(), format!("node {} listed twice", v.get_ref())));
            }
        }
        Ok(out)
    };
    let labels = || -> Result<Vec<Option<u32>>, InstanceError> {
        let mut out = vec![None; n];
        for item in p.labels.as_ref().ok_or_else(|| missing("labels"))? {
            let (v, l) = *item.get_ref();
            if v >= n {
                return Err(lines.err(item.span(), format!("node {v} is out of range (n = {n})")));
            }
            if out[v].replace(l).is_some() {
                return Err(lines.err(item.span(), format!("node {v} labelled twice")));
            }
        }
        Ok(out)
    };
    let requests = || -> Result<Vec<BTreeSet<NodeId>>, InstanceError> {
        let mut out = vec![BTreeSet::new(); n];
        for item in p.requests.as_ref().ok_or_else(|| missing("requests"))? {
            let (u, v) = *item.get_ref();
            if u >= n || v >= n {
                return Err(lines.err(item.span(), format!("request ({u}, {v}) is out of range (n = {n})")));
            }
            if !out[u].insert(v) {
                return Err(lines.err(item.span(), format!("request ({u}, {v}) listed twice")));
            }
        }
        Ok(out)
    };
    Ok(match variant {
        Variant::SfIc => ProblemSpec::SfIc { labels: labels()? },
        Variant::SfCic => {
            let mut cardinality = BTreeMap::new();
            for item in p.cardinality.as_ref().ok_or_else(|| missing("cardinality"))? {
                let (l, c) = *item.get_ref();
                if cardinality.insert(l, c).is_some() {
                    return Err(lines.err(item.span(), format!("label {l} has two cardinalities")));
                }
            }
            ProblemSpec::SfCic { labels: labels()?, cardinality }
        }
        Variant::SfCr => ProblemSpec::SfCr { requests: requests()? },
        Variant::SfScr => ProblemSpec::SfScr { requests: requests()? },
        Variant::Ppc => {
            ProblemSpec::Ppc { sources: node_set(&p.sources, "sources")?, targets: node_set(&p.targets, "targets")? }
        }
        Variant::Fpc => {
            let opening = p.opening.as_ref().ok_or_else(|| missing("opening"))?.get_ref().clone();
            let facility = node(p.facility.as_ref().ok_or_else(|| missing("facility"))?)?;
            ProblemSpec::Fpc { opening, clients: node_set(&p.clients, "clients")?, facility }
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const PATH: &str = "format = 1
n = 3
edges = [
  [0, 1, 1],
  [1, 2, 2],
]

[problem]
variant = \"sf-ic\"
labels = [[0, 0], [2, 0]]
";

    #[test]
    fn parses_and_round_trips() {
        let f = InstanceFile::parse(PATH).unwrap();
        assert_eq!(f.graph.m(), 2);
        assert_eq!(f.spec, ProblemSpec::SfIc { labels: vec![Some(0), None, Some(0)] });
        assert_eq!(f.to_toml(), PATH);
        assert_eq!(InstanceFile::parse(&f.to_toml()).unwrap(), f);
    }

    #[test]
    fn errors_carry_lines() {
        let bad_edge = PATH.replace("[1, 2, 2]", "[1, 1, 2]");
        let e = InstanceFile::parse(&bad_edge).unwrap_err();
        assert_eq!(e.line, Some(5), "{e}");
        assert!(e.message.contains("self-loop"));

        let bad_node = PATH.replace("[2, 0]]", "[9, 0]]");
        assert_eq!(InstanceFile::parse(&bad_node).unwrap_err().line, Some(10));

        let syntax = PATH.replace("n = 3", "n = ");
        assert_eq!(InstanceFile::parse(&syntax).unwrap_err().line, Some(2));

        let version = PATH.replace("format = 1", "format = 7");
        assert_eq!(InstanceFile::parse(&version).unwrap_err().line, Some(1));

        let unknown = PATH.replace("[problem]", "colour = 1\n[problem]");
        assert!(InstanceFile::parse(&unknown).unwrap_err().line.is_some());
    }

    #[test]
    fn semantic_errors_point_at_the_problem() {
        let single = PATH.replace("labels = [[0, 0], [2, 0]]", "labels = [[0, 0], [2, 1]]");
        let e = InstanceFile::parse(&single).unwrap_err();
        assert!(e.message.contains("single member"), "{e}");
        assert!(e.line.is_some_and(|l| l >= 8));
    }

    #[test]
    fn every_variant_round_trips() {
        let g = WeightedGraph::new(4, [(0, 1, 2), (1, 2, 3), (2, 3, 1)]).unwrap();
        let reqs = vec![[3].into(), BTreeSet::new(), BTreeSet::new(), [0].into()];
        let specs = [
            ProblemSpec::cic_from_labels(vec![Some(4), Some(4), Some(9), Some(9)]),
            ProblemSpec::SfCr { requests: vec![[3].into(), BTreeSet::new(), BTreeSet::new(), BTreeSet::new()] },
            ProblemSpec::SfScr { requests: reqs },
            ProblemSpec::Ppc { sources: [0].into(), targets: [2].into() },
        ];
        let meta = GeneratorMeta {
            family: "random".into(),
            seed: Some(7),
            params: [("k".to_string(), "2".to_string())].into(),
        };
        for spec in specs {
            let f = InstanceFile { graph: g.clone(), spec, generator: Some(meta.clone()) };
            assert_eq!(InstanceFile::parse(&f.to_toml()).unwrap(), f);
        }
        let (aug, spec) = shellforest_core::spec::augment_fpc(&g, &[3, 1, 4, 1], &[0, 2].into()).unwrap();
        let f = InstanceFile { graph: aug, spec, generator: None };
        let text = f.to_toml();
        assert!(text.contains("virtual = [4]"));
        assert_eq!(InstanceFile::parse(&text).unwrap(), f);
    }
}
