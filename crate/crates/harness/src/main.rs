use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use shellforest_core::oracle::brute_force_opt;
use shellforest_core::rational::parse_rational;
use shellforest_core::spec::{check_proper, MASK_LIMIT};
use shellforest_core::{EngineConfig, Rational, Variant};
use shellforest_harness::experiment::{run_experiment, ExperimentConfig, Mode, Row};
use shellforest_harness::generate::{
    gen_lower_bound, gen_random, gen_suite, parse_bits, Family, RandomParams, SuiteParams,
};
use shellforest_harness::instance::InstanceFile;
use shellforest_harness::report;

#[derive(Parser)]
#[command(name = "shellforest", version, about = "Constrained forest approximation with exact certificates")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Write a generated instance file.
    #[command(subcommand)]
    Gen(GenCmd),
    /// Solve instance files and certify each result.
    Run {
        #[arg(required = true)]
        files: Vec<PathBuf>,
        #[command(flatten)]
        opts: RunOpts,
    },
    /// Check that instance files parse, validate and describe proper functions.
    Verify {
        #[arg(required = true)]
        files: Vec<PathBuf>,
        /// Also solve each instance exactly when it has at most this many edges.
        #[arg(long, default_value_t = 20)]
        max_oracle_edges: usize,
    },
    /// Run a generated suite of random instances.
    Bench {
        #[arg(long, default_value_t = 60)]
        count: usize,
        #[arg(long, default_value_t = 4)]
        min_n: usize,
        #[arg(long, default_value_t = 12)]
        max_n: usize,
        #[arg(long, default_value_t = 16)]
        max_m: usize,
        #[arg(long, default_value_t = 8)]
        max_cost: u64,
        /// Seed of the suite generator.
        #[arg(long, default_value_t = 0)]
        suite_seed: u64,
        #[command(flatten)]
        opts: RunOpts,
    },
}

#[derive(Subcommand)]
enum GenCmd {
    Random {
        #[arg(long)]
        variant: Variant,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        m: usize,
        #[arg(long, default_value_t = 8)]
        max_cost: u64,
        /// Groups, requests, |X| or clients depending on the variant.
        #[arg(long)]
        k: Option<usize>,
        #[arg(long, default_value_t = Family::Random)]
        family: Family,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output file; stdout when absent.
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Double-star reduction graph for bitsets A and B.
    LowerBound {
        #[arg(long, default_value = "sf-scr")]
        variant: Variant,
        /// Bitset A as a string of 0s and 1s.
        #[arg(long)]
        a: String,
        #[arg(long)]
        b: String,
        #[arg(long, default_value_t = 3)]
        rho: u64,
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct RunOpts {
    #[arg(long, default_value = "central")]
    mode: Mode,
    #[arg(long, default_value = "1/4", value_parser = parse_rational)]
    eps_prime: Rational,
    #[arg(long, default_value = "1/4", value_parser = parse_rational)]
    eps_dprime: Rational,
    /// Randomness for the distributed SF-SCR and SF-CIC evaluations.
    #[arg(long)]
    seed: Option<u64>,
    /// Brute-force the optimum when m is at most this.
    #[arg(long, default_value_t = 20)]
    max_oracle_edges: usize,
    /// Override the number of parity tests in the distributed evaluations.
    #[arg(long)]
    kappa: Option<usize>,
    #[arg(long)]
    json: bool,
    /// Directory for per-instance round traces (distributed mode).
    #[arg(long)]
    trace: Option<PathBuf>,
}

impl RunOpts {
    fn config(&self) -> Result<ExperimentConfig> {
        let mut cfg = ExperimentConfig::new(self.mode);
        cfg.engine = EngineConfig::new(self.eps_prime.clone(), self.eps_dprime.clone())?;
        cfg.seed = self.seed;
        cfg.max_oracle_edges = self.max_oracle_edges;
        cfg.dist.ffe.kappa = self.kappa;
        cfg.dist.sim.trace = self.trace.is_some();
        Ok(cfg)
    }
}

fn emit(inst: &InstanceFile, out: Option<&Path>) -> Result<()> {
    match out {
        Some(p) => inst.save(p).with_context(|| format!("writing {}", p.display())),
        None => {
            print!("{}", inst.to_toml());
            Ok(())
        }
    }
}

fn write_traces(dir: &Path, rows: &[Row]) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    for row in rows.iter().filter(|r| !r.trace.is_empty()) {
        let path = dir.join(format!("{}.trace.jsonl", sanitize(&row.name)));
        let mut f = std::io::BufWriter::new(std::fs::File::create(&path)?);
        for r in &row.trace {
            writeln!(f, r#"{{"round":{},"node":{},"bytes":{},"tag":"{}"}}"#, r.round, r.node, r.bytes, r.tag.name())?;
        }
    }
    Ok(())
}

fn sanitize(name: &str) -> String {
    name.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' }).collect()
}

/// Prints the report and maps certification failures to the exit code.
fn finish(rows: Vec<Row>, opts: &RunOpts) -> Result<ExitCode> {
    if let Some(dir) = &opts.trace {
        write_traces(dir, &rows)?;
    }
    if opts.json {
        println!("{}", report::json(&rows));
    } else {
        print!("{}", report::text_table(&rows));
    }
    Ok(if rows.iter().all(Row::certified) { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}

fn load_all(files: &[PathBuf]) -> Result<Vec<(String, InstanceFile)>> {
    files
        .iter()
        .map(|p| {
            let inst = InstanceFile::load(p).with_context(|| format!("{}", p.display()))?;
            Ok((p.display().to_string(), inst))
        })
        .collect()
}

fn verify(files: &[PathBuf], max_oracle_edges: usize) -> Result<ExitCode> {
    let mut ok = true;
    for p in files {
        let name = p.display();
        let inst = match InstanceFile::load(p) {
            Ok(i) => i,
            Err(e) => {
                println!("{name}: {e}");
                ok = false;
                continue;
            }
        };
        let n = inst.graph.n();
        let mut notes = vec![format!("{} n={n} m={}", inst.spec.variant(), inst.graph.m())];
        if n <= MASK_LIMIT {
            let r = check_proper(&inst.spec, n)?;
            if r.is_proper() {
                notes.push("proper".into());
            } else {
                ok = false;
                notes.push(format!(
                    "NOT proper (zero: {}, symmetry violations: {}, disjointness violations: {})",
                    r.zero_holds, r.symmetry_violations, r.disjointness_violations
                ));
            }
        }
        if inst.graph.m() <= max_oracle_edges {
            match brute_force_opt(&inst.graph, &inst.spec) {
                Ok(o) => notes.push(format!("opt={}", o.cost)),
                Err(e) => {
                    ok = false;
                    notes.push(format!("oracle: {e}"));
                }
            }
        }
        println!("{name}: {}", notes.join(", "));
    }
    Ok(if ok { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}

fn main() -> ExitCode {
    match real_main() {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn real_main() -> Result<ExitCode> {
    match Cli::parse().cmd {
        Cmd::Gen(GenCmd::Random { variant, n, m, max_cost, k, family, seed, out }) => {
            let p = RandomParams { family, n, m, max_cost, variant, k, seed };
            emit(&gen_random(&p)?, out.as_deref())?;
            Ok(ExitCode::SUCCESS)
        }
        Cmd::Gen(GenCmd::LowerBound { variant, a, b, rho, out }) => {
            let (a, b) = (parse_bits(&a).map_err(anyhow::Error::msg)?, parse_bits(&b).map_err(anyhow::Error::msg)?);
            emit(&gen_lower_bound(&a, &b, rho, variant)?, out.as_deref())?;
            Ok(ExitCode::SUCCESS)
        }
        Cmd::Run { files, opts } => {
            let instances = load_all(&files)?;
            finish(run_experiment(&instances, &opts.config()?), &opts)
        }
        Cmd::Verify { files, max_oracle_edges } => verify(&files, max_oracle_edges),
        Cmd::Bench { count, min_n, max_n, max_m, max_cost, suite_seed, opts } => {
            if count == 0 {
                bail!("--count must be positive");
            }
            let suite = gen_suite(&SuiteParams { count, seed: suite_seed, min_n, max_n, max_m, max_cost })?;
            finish(run_experiment(&suite, &opts.config()?), &opts)
        }
    }
}
