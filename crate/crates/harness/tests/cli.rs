use std::path::Path;
use std::process::{Command, Output};

fn shellforest(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_shellforest")).current_dir(dir).args(args).output().expect("binary runs")
}

#[test]
fn generate_run_and_verify() {
    let dir = tempfile::tempdir().unwrap();
    let out = shellforest(
        dir.path(),
        &["gen", "random", "--variant", "ppc", "--n", "7", "--m", "10", "--seed", "5", "-o", "p.toml"],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let out = shellforest(dir.path(), &["gen", "lower-bound", "--a", "0110", "--b", "0110", "-o", "lb.toml"]);
    assert!(out.status.success());

    let out = shellforest(dir.path(), &["verify", "p.toml", "lb.toml"]);
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(out.status.success(), "{text}");
    assert!(text.contains("lb.toml: sf-scr n=12 m=12, proper, opt=10"), "{text}");

    for mode in ["central", "gw-ref", "oracle"] {
        let out = shellforest(dir.path(), &["run", "p.toml", "lb.toml", "--mode", mode]);
        assert_eq!(out.status.code(), Some(0), "{mode}: {}", String::from_utf8_lossy(&out.stdout));
    }
    let out =
        shellforest(dir.path(), &["run", "lb.toml", "--mode", "distributed", "--seed", "1", "--json", "--trace", "tr"]);
    assert_eq!(out.status.code(), Some(0));
    let rows: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(rows[0]["cost"], 10);
    assert_eq!(rows[0]["matches_central"], true);
    assert!(rows[0]["rounds"]["per_block"]["FFE"].as_u64().unwrap() > 0);
    let trace = std::fs::read_to_string(dir.path().join("tr/lb_toml.trace.jsonl")).unwrap();
    assert!(trace.lines().count() > 10);
}

#[test]
fn failures_set_the_exit_code() {
    let dir = tempfile::tempdir().unwrap();
    shellforest(dir.path(), &["gen", "random", "--variant", "sf-ic", "--n", "6", "--m", "8", "-o", "a.toml"]);
    // the oracle refusing an instance counts as a failure
    let out = shellforest(dir.path(), &["run", "a.toml", "--mode", "oracle", "--max-oracle-edges", "3"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stdout).contains("1 failed"));
    // randomized evaluation without a seed
    shellforest(dir.path(), &["gen", "random", "--variant", "sf-scr", "--n", "6", "--m", "8", "-o", "s.toml"]);
    let out = shellforest(dir.path(), &["run", "s.toml", "--mode", "distributed"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn bad_input_is_reported_with_its_line() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("bad.toml"),
        "format = 1\nn = 3\nedges = [\n  [0, 1, 1],\n  [1, 7, 1],\n]\n\n[problem]\nvariant = \"sf-ic\"\nlabels = [[0, 0], [1, 0]]\n",
    )
    .unwrap();
    let out = shellforest(dir.path(), &["run", "bad.toml"]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("bad.toml: line 5"), "{err}");
    let out = shellforest(dir.path(), &["run", "bad.toml", "--eps-dprime", "1/0"]);
    assert_eq!(out.status.code(), Some(2));
}
