//! `adambo-lab`: run experiments, sweeps, diagnostics and the parameter
//! schedule calculator from the command line.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use adambo_core::harness::config::parse_entries;
use adambo_core::harness::{diagnostics_csv, parse_config, run_diagnostics, run_experiment, run_sweep, Suite};
use adambo_core::{theorem_schedule, Error, ProblemConstants, Result, ScheduleInputs};
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "adambo-lab", version, about = "Adam-type bilevel optimization lab")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment config over its seeds.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Output directory (overrides `experiment.out`).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Run this single seed instead of `experiment.seeds`.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run a config at every point of a grid file.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        grid: PathBuf,
        #[arg(long, default_value = "sweep")]
        out: PathBuf,
    },
    /// Run a diagnostics suite and print its CSV; fails if any line fails.
    Check {
        /// lemmas, neumann, oracles, equivalence or all.
        #[arg(long)]
        suite: String,
    },
    /// Compute the theoretical step sizes, momentum and horizon.
    Schedule {
        #[arg(long)]
        epsilon: f64,
        #[arg(long)]
        delta: f64,
        /// `constants.*` and `schedule.*` entries in config syntax.
        #[arg(long)]
        constants: PathBuf,
    },
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn cmd_run(config: &Path, out: Option<PathBuf>, seed: Option<u64>) -> Result<bool> {
    let mut cfg = parse_config(&read(config)?)?;
    if let Some(out) = out {
        cfg.out_dir = out;
    }
    if let Some(seed) = seed {
        cfg.seeds = vec![seed];
    }
    let output = run_experiment(&cfg)?;
    for w in &output.warnings {
        eprintln!("warning: {w}");
    }
    let mut ok = true;
    for o in &output.outcomes {
        match &o.result {
            Ok(tr) => match &tr.aborted {
                Some(a) => println!("seed {}: aborted at t = {}: {}", o.seed, a.t, a.message),
                None => println!(
                    "seed {}: done, final {} = {}",
                    o.seed,
                    tr.grad_norm_column(),
                    tr.last()
                        .and_then(|r| r.grad_norm)
                        .map_or("n/a".to_string(), |g| format!("{g:.6e}"))
                ),
            },
            Err(e) => {
                ok = false;
                println!("seed {}: failed: {e}", o.seed);
            }
        }
    }
    println!("wrote {} files to {}", output.files.len(), cfg.out_dir.display());
    Ok(ok)
}

fn cmd_sweep(config: &Path, grid: &Path, out: &Path) -> Result<bool> {
    let res = run_sweep(&read(config)?, &read(grid)?, out)?;
    let fmt = |v: Option<f64>| v.map_or("n/a".to_string(), |v| format!("{v:.6e}"));
    for p in &res.points {
        let over: Vec<String> = p.overrides.iter().map(|(k, v)| format!("{k}={v}")).collect();
        println!(
            "point{} [{}]: final {} min {} ({}/{} seeds){}",
            p.index,
            over.join(" "),
            fmt(p.mean_final_grad_norm),
            fmt(p.mean_min_grad_norm),
            p.completed,
            p.runs,
            p.error.as_ref().map_or(String::new(), |e| format!(" error: {e}"))
        );
    }
    println!("summary: {}", res.summary.display());
    Ok(true)
}

fn cmd_check(suite: &str) -> Result<bool> {
    let suites = if suite == "all" {
        Suite::ALL.to_vec()
    } else {
        vec![suite.parse()?]
    };
    let mut lines = Vec::new();
    for s in suites {
        lines.extend(run_diagnostics(s)?);
    }
    print!("{}", diagnostics_csv(&lines));
    Ok(lines.iter().all(|l| l.passed))
}

/// Reads a schedule constants file: every `constants.*` field of
/// [`ProblemConstants`] plus `schedule.*` user inputs.
fn parse_schedule_inputs(text: &str) -> Result<(ProblemConstants, ScheduleInputs)> {
    let entries = parse_entries(text)?;
    let mut map: HashMap<&str, (usize, f64)> = HashMap::new();
    for e in &entries {
        let v = match e.value.as_str() {
            "inf" | "infinity" => f64::INFINITY,
            s => s.parse::<f64>().map_err(|_| Error::Config {
                line: e.line,
                message: format!("`{}` is not a number: `{s}`", e.key),
            })?,
        };
        map.insert(e.key.as_str(), (e.line, v));
    }
    const KNOWN: [&str; 21] = [
        "constants.mu", "constants.l_g1", "constants.l_g2", "constants.l_f0", "constants.sigma_f",
        "constants.sigma_g1", "constants.sigma_g2", "schedule.g", "schedule.delta1", "schedule.c1",
        "schedule.c2", "schedule.c3", "schedule.big_c2", "schedule.sigma_phi", "schedule.l0",
        "schedule.l1", "schedule.r", "schedule.lambda", "schedule.y0_dist", "schedule.beta_sq",
        "schedule.c_beta",
    ];
    if let Some(e) = entries.iter().find(|e| !KNOWN.contains(&e.key.as_str())) {
        return Err(Error::Config {
            line: e.line,
            message: format!("unknown key `{}`", e.key),
        });
    }
    let get = |k: &str, default: Option<f64>| -> Result<f64> {
        map.get(k).map(|&(_, v)| v).or(default).ok_or_else(|| Error::Config {
            line: 0,
            message: format!("missing required key `{k}`"),
        })
    };
    let consts = ProblemConstants {
        mu: get("constants.mu", None)?,
        l_g1: get("constants.l_g1", None)?,
        l_g2: get("constants.l_g2", Some(0.0))?,
        l_f0: get("constants.l_f0", None)?,
        sigma_f: get("constants.sigma_f", None)?,
        sigma_g1: get("constants.sigma_g1", None)?,
        sigma_g2: get("constants.sigma_g2", None)?,
    };
    let user = ScheduleInputs {
        g: get("schedule.g", None)?,
        delta1: get("schedule.delta1", None)?,
        c1: get("schedule.c1", None)?,
        c2: get("schedule.c2", None)?,
        c3: get("schedule.c3", None)?,
        big_c2: get("schedule.big_c2", None)?,
        sigma_phi: get("schedule.sigma_phi", None)?,
        l0: get("schedule.l0", None)?,
        l1: get("schedule.l1", Some(0.0))?,
        r: get("schedule.r", Some(f64::INFINITY))?,
        lambda: get("schedule.lambda", Some(1e-8))?,
        y0_dist: get("schedule.y0_dist", None)?,
        beta_sq: get("schedule.beta_sq", Some(0.001))?,
        c_beta: map.get("schedule.c_beta").map(|&(_, v)| v),
    };
    Ok((consts, user))
}

fn cmd_schedule(epsilon: f64, delta: f64, constants: &Path) -> Result<bool> {
    let (consts, user) = parse_schedule_inputs(&read(constants)?)?;
    let s = theorem_schedule(epsilon, delta, &consts, &user)?;
    let c = &s.config;
    println!("adambo.beta = {:e}", c.beta);
    println!("adambo.beta_sq = {:e}", c.beta_sq);
    println!("adambo.eta = {:e}", c.eta);
    println!("adambo.gamma = {:e}", c.gamma);
    println!("adambo.lambda = {:e}", c.lambda);
    println!("adambo.q = {}", c.q);
    println!("adambo.t0 = {}", c.t0);
    println!("adambo.iters = {}", c.iters);
    println!("# iota = {:e}", s.iota);
    println!("# c_beta = {:e}", s.c_beta);
    println!("# L = {:e}", s.big_l);
    println!("# T (unrounded) = {:e}", s.t_real);
    if s.t_real >= u64::MAX as f64 {
        println!("# T exceeds u64: iters saturated");
    }
    println!("# oracle calls = {:e}", s.oracle_calls);
    if s.degenerate_q {
        println!("# mu = l_g1: a single Neumann term is exact");
    }
    Ok(true)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = match cli.command {
        Command::Run { config, out, seed } => cmd_run(&config, out, seed),
        Command::Sweep { config, grid, out } => cmd_sweep(&config, &grid, &out),
        Command::Check { suite } => cmd_check(&suite),
        Command::Schedule {
            epsilon,
            delta,
            constants,
        } => cmd_schedule(epsilon, delta, &constants),
    };
    match res {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
