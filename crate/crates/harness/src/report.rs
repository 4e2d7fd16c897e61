//! Text and JSON rendering of experiment rows.

use std::fmt::Write;

use shellforest_core::rational::int;
use shellforest_core::Rational;

use crate::experiment::Row;

/// Four decimals, rounded; exact values stay in the JSON output.
pub fn decimal(r: &Rational) -> String {
    let scaled = (r * int(10_000)).round().to_integer();
    let (sign, digits) = match scaled.sign() {
        num_bigint::Sign::Minus => ("-", (-scaled).to_string()),
        _ => ("", scaled.to_string()),
    };
    let digits = format!("{digits:0>5}");
    let (whole, frac) = digits.split_at(digits.len() - 4);
    format!("{sign}{whole}.{frac}")
}

fn opt<T: ToString>(x: &Option<T>) -> String {
    x.as_ref().map_or_else(|| "-".to_string(), T::to_string)
}

/// One line per row, columns padded to the widest cell.
pub fn text_table(rows: &[Row]) -> String {
    let header =
        ["instance", "mode", "variant", "n", "m", "t", "cost", "lb", "ratio", "opt", "phases", "rounds", "status"];
    let mut cells: Vec<Vec<String>> = vec![header.iter().map(|h| h.to_string()).collect()];
    for r in rows {
        let status = match (&r.error, r.failures.is_empty(), r.matches_central) {
            (Some(e), _, _) => format!("error: {e}"),
            (None, false, _) => format!("FAIL {}", r.failures.join(", ")),
            (None, true, Some(false)) => "ok (differs from central)".to_string(),
            (None, true, _) => "ok".to_string(),
        };
        let phases = match (r.phases, r.phase_bound) {
            (Some(p), Some(b)) => format!("{p}/{b}"),
            _ => "-".to_string(),
        };
        cells.push(vec![
            r.name.clone(),
            r.mode.to_string(),
            r.variant.clone(),
            r.n.to_string(),
            r.m.to_string(),
            r.terminals.to_string(),
            opt(&r.cost),
            r.lb.as_ref().map_or_else(|| "-".into(), decimal),
            r.ratio_bound.as_ref().map_or_else(|| "-".into(), decimal),
            opt(&r.opt),
            phases,
            opt(&r.rounds.as_ref().map(|s| s.total)),
            status,
        ]);
    }
    let widths: Vec<usize> =
        (0..header.len()).map(|c| cells.iter().map(|row| row[c].chars().count()).max().unwrap_or(0)).collect();
    let mut out = String::new();
    for row in &cells {
        let last = row.len() - 1;
        for (c, cell) in row.iter().enumerate() {
            if c == last {
                out.push_str(cell);
            } else {
                let _ = write!(out, "{cell:<w$}  ", w = widths[c]);
            }
        }
        out.push('\n');
    }
    let failed = rows.iter().filter(|r| !r.certified()).count();
    let _ = writeln!(out, "{} instances, {} certified, {} failed", rows.len(), rows.len() - failed, failed);
    out
}

pub fn json(rows: &[Row]) -> String {
    serde_json::to_string_pretty(rows).expect("rows serialize")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiment::{run_one, ExperimentConfig, Mode};
    use crate::instance::InstanceFile;
    use shellforest_core::{ProblemSpec, WeightedGraph};

    fn rows() -> Vec<Row> {
        let graph = WeightedGraph::new(3, [(0, 1, 1), (1, 2, 2)]).unwrap();
        let spec = ProblemSpec::SfIc { labels: vec![Some(0), None, Some(0)] };
        let inst = InstanceFile { graph, spec, generator: None };
        vec![run_one("tiny", &inst, &ExperimentConfig::new(Mode::Central))]
    }

    #[test]
    fn table_has_a_header_a_row_and_a_summary() {
        let t = text_table(&rows());
        let lines: Vec<&str> = t.lines().collect();
        assert_eq!(lines.len(), 3);
        assert!(lines[0].starts_with("instance"));
        assert!(lines[1].starts_with("tiny"));
        assert!(lines[1].ends_with("ok"));
        assert_eq!(lines[2], "1 instances, 1 certified, 0 failed");
    }

    #[test]
    fn decimals_round_to_four_places() {
        use shellforest_core::rational::rat;
        assert_eq!(decimal(&rat(23, 2)), "11.5000");
        assert_eq!(decimal(&rat(1, 3)), "0.3333");
        assert_eq!(decimal(&rat(2, 3)), "0.6667");
        assert_eq!(decimal(&rat(-1, 8)), "-0.1250");
        assert_eq!(decimal(&rat(0, 1)), "0.0000");
    }

    #[test]
    fn json_keeps_rationals_exact() {
        let v: serde_json::Value = serde_json::from_str(&json(&rows())).unwrap();
        let lb = v[0]["lb"].as_str().unwrap();
        assert!(lb.contains('/') || lb.parse::<u64>().is_ok());
        assert_eq!(v[0]["cost"], 3);
        assert_eq!(v[0]["mode"], "central");
    }
}
