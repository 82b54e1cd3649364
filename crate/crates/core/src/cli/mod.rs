//! Command-line front end: `validate-a`, `contract`, `sweep`, `dual-check`, `ot`.
//!
//! Exit codes: 0 pass, 2 assertion or inequality failure, 1 usage or
//! configuration error.

pub mod commands;
pub mod config;
mod output;

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

pub use commands::{
    resolve, run_contract, run_dual_check, run_sweep, run_validate_a, ContractReport, ContractRow, DualReport,
    Resolved, SweepEntry, SweepReport, ValidateReport,
};
pub use config::ExperimentConfig;
use output::Outputs;

use crate::error::{Error, Result};
use crate::measures::{Admissibility, EmpiricalMeasure, Space};
use crate::otsolver::{transport_cost, CostFunction};

pub const EXIT_PASS: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_FAIL: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "popcoupling", version, about = "Coupling experiments for structured population models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Check the truncation level against the model's admissibility condition.
    ValidateA(RunArgs),
    /// Run the coupled dynamics and compare with exact transport.
    Contract(RunArgs),
    /// Randomised sweep of the contraction inequalities.
    Sweep(RunArgs),
    /// Compare simulated renewal paths with the dual solver.
    DualCheck(RunArgs),
    /// Exact transport cost between two atom files.
    Ot(OtArgs),
}

#[derive(Debug, Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Overrides the configured seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Directory for CSV outputs and the JSON summary.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides the configured replica count.
    #[arg(long)]
    replicas: Option<usize>,
}

#[derive(Debug, Args)]
struct OtArgs {
    /// Atom CSV of the first measure: coordinates..., weight.
    mu: PathBuf,
    /// Atom CSV of the second measure.
    nu: PathBuf,
    /// age, age_state:I, age_position:DIM, time_pair, age_size or trait:DIM.
    #[arg(long, default_value = "age")]
    space: String,
    /// trunc_abs, trunc_abs_state, trunc_sum, trunc_weighted or power.
    #[arg(long, default_value = "trunc_abs")]
    cost: String,
    #[arg(long)]
    a: Option<f64>,
    #[arg(long)]
    p: Option<f64>,
    /// Write the optimal plan here (src_index, dst_index, mass).
    #[arg(long)]
    plan: Option<PathBuf>,
}

/// Parses `args` (program name first), runs the command and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_PASS };
        }
    };
    match dispatch(cli.command) {
        Ok(true) => EXIT_PASS,
        Ok(false) => EXIT_FAIL,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_USAGE
        }
    }
}

const CONTRACT_HEADER: [&str; 8] = [
    "time",
    "exact_ot",
    "mean_coupled_cost",
    "stderr",
    "subsample_coupled_cost",
    "n_pairs",
    "common_events",
    "solo_events",
];

fn load(args: &RunArgs) -> Result<(ExperimentConfig, Vec<u8>)> {
    let raw = fs::read(&args.config)?;
    let text = std::str::from_utf8(&raw).map_err(|e| Error::Config(format!("config is not UTF-8: {e}")))?;
    let mut cfg = ExperimentConfig::from_json(text)?;
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(r) = args.replicas {
        cfg.replicas = Some(r);
    }
    Ok((cfg, raw))
}

fn verdict(pass: bool) -> &'static str {
    if pass {
        "PASS"
    } else {
        "FAIL"
    }
}

fn finish<R: Serialize>(command: &str, args: &RunArgs, raw: &[u8], seed: u64, mut out: Outputs, report: &R) -> Result<()> {
    if let Some(dir) = &args.out {
        out.write_summary(dir, command, raw, seed, report)?;
    }
    Ok(())
}

fn dispatch(command: Command) -> Result<bool> {
    match command {
        Command::ValidateA(args) => {
            let (cfg, raw) = load(&args)?;
            let report = run_validate_a(&cfg)?;
            match (&report.a, &report.admissibility) {
                (Some(a), Some(Admissibility::Valid { worst_ratio, pairs_examined })) => {
                    let worst = worst_ratio.map_or("none".to_string(), |w| w.to_string());
                    println!("a = {a}: admissible ({pairs_examined} pairs examined, worst ratio {worst})");
                }
                (Some(a), Some(Admissibility::Violated(w))) => println!(
                    "a = {a}: violated at x = {}, y = {} (ratio {} < a)",
                    w.first, w.second, w.bound
                ),
                _ => println!("{}: untruncated cost, no truncation level to validate", report.model),
            }
            finish("validate-a", &args, &raw, cfg.seed, Outputs::new(args.out.as_deref())?, &report)?;
            Ok(report.passed)
        }
        Command::Contract(args) => {
            let (cfg, raw) = load(&args)?;
            let report = run_contract(&cfg)?;
            let mut out = Outputs::new(args.out.as_deref())?;
            let mut rows = Vec::with_capacity(report.rows.len());
            println!("{}", CONTRACT_HEADER.join(","));
            for (r, s) in report.rows.iter().zip(&report.summaries) {
                let line = vec![
                    r.time.to_string(),
                    r.exact_ot.to_string(),
                    r.mean_coupled_cost.to_string(),
                    r.stderr.to_string(),
                    r.subsample_coupled_cost.to_string(),
                    s.n_pairs.to_string(),
                    s.common_events.to_string(),
                    s.solo_events.to_string(),
                ];
                println!("{}", line.join(","));
                rows.push(line);
            }
            out.csv("contract.csv", &CONTRACT_HEADER, &rows)?;
            println!(
                "coupling bound {}, stepwise contraction {}, contraction from start {}, admissible {}",
                verdict(report.coupling_bound_ok),
                verdict(report.stepwise_contraction_ok),
                verdict(report.contraction_from_start_ok),
                verdict(report.admissible)
            );
            finish("contract", &args, &raw, cfg.seed, out, &report)?;
            Ok(report.passed)
        }
        Command::Sweep(args) => {
            let (cfg, raw) = load(&args)?;
            let report = run_sweep(&cfg)?;
            let mut out = Outputs::new(args.out.as_deref())?;
            let mut rows = Vec::new();
            for e in &report.entries {
                println!("{}: {} samples, worst margin {} [{}]", e.check, e.samples, e.worst_margin, verdict(e.passed));
                if !e.passed {
                    println!("  witness: {}", e.witness);
                }
                rows.push(vec![e.check.clone(), e.samples.to_string(), e.worst_margin.to_string(), e.passed.to_string()]);
            }
            out.csv("sweep.csv", &["check", "samples", "worst_margin", "passed"], &rows)?;
            finish("sweep", &args, &raw, cfg.seed, out, &report)?;
            Ok(report.passed)
        }
        Command::DualCheck(args) => {
            let (cfg, raw) = load(&args)?;
            let report = run_dual_check(&cfg)?;
            let c = &report.check;
            println!("lhs = {} (stderr {})", c.lhs, c.lhs_stderr);
            println!("rhs = {} (discretisation budget {})", c.rhs, c.discretisation_budget);
            println!("|lhs - rhs| = {} <= {}: {}", (c.lhs - c.rhs).abs(), c.tolerance, verdict(c.passed));
            let mut out = Outputs::new(args.out.as_deref())?;
            let rows: Vec<Vec<String>> =
                report.trace.iter().map(|(t, v)| vec![t.to_string(), v.to_string()]).collect();
            out.csv("psi0.csv", &["t", "psi0"], &rows)?;
            let summary = vec![vec![
                c.lhs.to_string(),
                c.lhs_stderr.to_string(),
                c.rhs.to_string(),
                c.discretisation_budget.to_string(),
                c.tolerance.to_string(),
                c.passed.to_string(),
            ]];
            out.csv("dual_check.csv", &["lhs", "lhs_stderr", "rhs", "discretisation_budget", "tolerance", "passed"], &summary)?;
            finish("dual-check", &args, &raw, cfg.seed, out, &report)?;
            Ok(c.passed)
        }
        Command::Ot(args) => {
            run_ot(&args)?;
            Ok(true)
        }
    }
}

/// Parses a space descriptor such as `age_state:3`.
pub fn parse_space(s: &str) -> Result<Space> {
    let (name, arg) = match s.split_once(':') {
        Some((n, a)) => (n, Some(a)),
        None => (s, None),
    };
    let num = |what: &str| -> Result<usize> {
        arg.ok_or_else(|| Error::Config(format!("space {name} needs :{what}")))?
            .parse::<usize>()
            .map_err(|e| Error::Config(format!("bad {what} in space {s}: {e}")))
    };
    Ok(match name {
        "age" => Space::Age,
        "age_state" => Space::AgeState { states: num("states")? as u32 },
        "age_position" => Space::AgePosition { dim: num("dim")? },
        "time_pair" => Space::TimePair,
        "age_size" => Space::AgeSize,
        "trait" => Space::Trait { dim: num("dim")? },
        _ => return Err(Error::Config(format!("unknown space {s}"))),
    })
}

/// Builds a cost from its name and the `a` / `p` flags.
pub fn parse_cost(name: &str, a: Option<f64>, p: Option<f64>) -> Result<CostFunction> {
    let need_a = || a.ok_or_else(|| Error::Config(format!("cost {name} needs --a")));
    let cost = match name {
        "trunc_abs" => CostFunction::TruncAbs { a: need_a()? },
        "trunc_abs_state" => CostFunction::TruncAbsState { a: need_a()? },
        "trunc_sum" => CostFunction::TruncSum { a: need_a()? },
        "trunc_weighted" => CostFunction::TruncWeighted { a: need_a()? },
        "power" => CostFunction::Power { p: p.ok_or_else(|| Error::Config("power cost needs --p".into()))? },
        _ => return Err(Error::Config(format!("unknown cost {name}"))),
    };
    cost.validate()?;
    Ok(cost)
}

/// Reads an atom CSV (coordinates..., weight); a non-numeric first row is a header.
pub fn read_atoms(path: &Path, space: Space) -> Result<EmpiricalMeasure> {
    let mut reader = csv::ReaderBuilder::new().has_headers(false).trim(csv::Trim::All).from_path(path)?;
    let mut atoms = Vec::new();
    let mut weights = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec?;
        let parsed: std::result::Result<Vec<f64>, _> = rec.iter().map(str::parse::<f64>).collect();
        let values = match parsed {
            Ok(v) => v,
            Err(_) if i == 0 => continue,
            Err(e) => return Err(Error::Config(format!("{}: row {}: {e}", path.display(), i + 1))),
        };
        let Some((w, coords)) = values.split_last() else { continue };
        atoms.push(space.point(coords)?);
        weights.push(*w);
    }
    EmpiricalMeasure::new(space, atoms, weights)
}

fn run_ot(args: &OtArgs) -> Result<()> {
    let space = parse_space(&args.space)?;
    let cost = parse_cost(&args.cost, args.a, args.p)?;
    let mu = read_atoms(&args.mu, space)?;
    let nu = read_atoms(&args.nu, space)?;
    let plan = transport_cost(&mu, &nu, cost)?;
    println!("{}", plan.cost);
    if let Some(path) = &args.plan {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["src_index", "dst_index", "mass"])?;
        for (i, j, m) in &plan.pairs {
            w.write_record([i.to_string(), j.to_string(), m.to_string()])?;
        }
        w.flush()?;
    }
    Ok(())
}
