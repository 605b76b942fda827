//! Running configured experiments and sweeps and writing their outputs.

use std::fmt::Write as _;
use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use super::config::{
    apply_overrides, grid_points, parse_entries, parse_grid, Algo, AucProblem, ExperimentConfig,
    ProblemConfig,
};
use super::summary::summarize;
use crate::adambo::{gamma_warning, run_adambo};
use crate::baselines::{run_masoba_like, run_stocbio_like};
use crate::error::{Error, Result};
use crate::oracle::BilevelOracle;
use crate::problems::{
    generate_imbalanced_dataset_with, make_auc_bilevel, make_hyperrep_bilevel,
    make_quadratic_bilevel, AUCBilevelSpec, AUCDataset, QuadraticBilevelSpec,
};
use crate::sampling::RunStreams;
use crate::trace::{fmt_opt, MetricsConfig, Monitor, Trace};
use crate::vr_adambo::run_vr_adambo;

/// Environment variable capping run-level parallelism.
pub const THREADS_ENV: &str = "ADAMBO_LAB_THREADS";

fn auc_datasets(p: &AucProblem, seed: u64) -> Result<(AUCDataset, Option<AUCDataset>)> {
    let train = match &p.train_csv {
        Some(path) => AUCDataset::read_csv(path)?,
        None => generate_imbalanced_dataset_with(p.n_train, p.dim, p.p, p.separation, seed)?,
    };
    let test = match &p.test_csv {
        Some(path) => Some(AUCDataset::read_csv(path)?),
        None if p.n_test > 0 => Some(generate_imbalanced_dataset_with(
            p.n_test,
            p.dim,
            p.p,
            p.separation,
            seed ^ 0x7e57,
        )?),
        None => None,
    };
    Ok((train, test))
}

/// Instantiates the configured problem.
pub fn build_oracle(problem: &ProblemConfig, instance_seed: u64) -> Result<Box<dyn BilevelOracle>> {
    Ok(match problem {
        ProblemConfig::Quadratic(p) => {
            let spec = QuadraticBilevelSpec::random(p, instance_seed)?;
            Box::new(make_quadratic_bilevel(spec, instance_seed)?)
        }
        ProblemConfig::Auc(p) => {
            let (dataset, test) = auc_datasets(p, instance_seed)?;
            let spec = AUCBilevelSpec {
                dataset,
                test,
                batch: p.batch,
                cubic: p.cubic,
            };
            Box::new(make_auc_bilevel(spec, instance_seed)?)
        }
        ProblemConfig::HyperRep(spec) => Box::new(make_hyperrep_bilevel(spec.clone(), instance_seed)?),
    })
}

/// Non-fatal observations about a config paired with its problem.
pub fn config_warnings(cfg: &ExperimentConfig, oracle: &dyn BilevelOracle) -> Vec<String> {
    gamma_warning(cfg.gamma(), &oracle.constants())
        .into_iter()
        .collect()
}

/// One seed of the configured algorithm.
pub fn run_single(cfg: &ExperimentConfig, oracle: &dyn BilevelOracle, seed: u64) -> Result<Trace> {
    let (_, q) = cfg.iters_and_q();
    let metrics = MetricsConfig {
        every: cfg.metrics_every,
        bias_samples: cfg.bias_samples,
        q,
    };
    let name = cfg.algo.name();
    let monitor = Monitor::new(oracle, metrics, format!("{name}_seed{seed}"), name, seed);
    let mut streams = RunStreams::from_seed(seed);
    match cfg.algo {
        Algo::AdamBO => run_adambo(&cfg.adambo, oracle, &mut streams, monitor),
        Algo::VRAdamBO => run_vr_adambo(&cfg.vr_adambo, oracle, &mut streams, monitor),
        Algo::StocBioLike => run_stocbio_like(&cfg.baseline, oracle, &mut streams, monitor),
        Algo::MaSoBaLike => run_masoba_like(&cfg.baseline, oracle, &mut streams, monitor),
    }
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub seed: u64,
    pub result: std::result::Result<Trace, String>,
}

#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    /// Every file written, in a fixed order.
    pub files: Vec<PathBuf>,
    pub outcomes: Vec<RunOutcome>,
    pub warnings: Vec<String>,
}

impl ExperimentOutput {
    /// Traces that ran to completion.
    pub fn completed(&self) -> Vec<&Trace> {
        self.outcomes
            .iter()
            .filter_map(|o| o.result.as_ref().ok())
            .filter(|t| t.aborted.is_none())
            .collect()
    }
}

fn write(path: PathBuf, text: &str) -> Result<PathBuf> {
    fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

fn pool() -> Result<rayon::ThreadPool> {
    let threads = std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .unwrap_or(0);
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Domain(format!("cannot build thread pool: {e}")))
}

fn panic_message(payload: Box<dyn std::any::Any + Send>) -> String {
    payload
        .downcast_ref::<&str>()
        .map(|s| s.to_string())
        .or_else(|| payload.downcast_ref::<String>().cloned())
        .unwrap_or_else(|| "run panicked".to_string())
}

fn summary_csv(outcomes: &[RunOutcome]) -> String {
    let mut out = String::from(
        "run_id,seed,status,grad_norm_kind,last_t,final_grad_norm,min_grad_norm,final_phi,final_train_auc,final_test_auc,message\n",
    );
    for o in outcomes {
        match &o.result {
            Ok(tr) => {
                let last = tr.last();
                let (status, message) = match &tr.aborted {
                    None => ("ok", String::new()),
                    Some(a) => ("aborted", format!("t={}: {}", a.t, a.message)),
                };
                let _ = writeln!(
                    out,
                    "{},{},{},{},{},{},{},{},{},{},{}",
                    tr.run_id,
                    o.seed,
                    status,
                    if tr.grad_norm_proxy { "proxy" } else { "exact" },
                    last.map_or(String::new(), |r| r.t.to_string()),
                    fmt_opt(last.and_then(|r| r.grad_norm)),
                    fmt_opt(tr.min_grad_norm()),
                    fmt_opt(last.and_then(|r| r.phi)),
                    fmt_opt(last.and_then(|r| r.train_auc)),
                    fmt_opt(last.and_then(|r| r.test_auc)),
                    csv_field(&message)
                );
            }
            Err(e) => {
                let _ = writeln!(out, ",{},failed,,,,,,,,{}", o.seed, csv_field(e));
            }
        }
    }
    out
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\"").replace('\n', " "))
    } else {
        s.to_string()
    }
}

/// Runs every seed (concurrently, capped by [`THREADS_ENV`]) and writes
/// `trace_seed{N}.csv`, `timing_seed{N}.csv`, `summary.csv`,
/// `aggregate.csv` and the resolved `config.txt` under `cfg.out_dir`.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    let oracle = build_oracle(&cfg.problem, cfg.instance_seed)?;
    let warnings = config_warnings(cfg, oracle.as_ref());
    let dir = &cfg.out_dir;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let oracle = oracle.as_ref();
    let outcomes: Vec<RunOutcome> = pool()?.install(|| {
        cfg.seeds
            .par_iter()
            .map(|&seed| {
                let result = catch_unwind(AssertUnwindSafe(|| run_single(cfg, oracle, seed)))
                    .map_err(panic_message)
                    .and_then(|r| r.map_err(|e| e.to_string()));
                RunOutcome { seed, result }
            })
            .collect()
    });

    let mut files = vec![write(dir.join("config.txt"), &cfg.to_text())?];
    for o in &outcomes {
        if let Ok(tr) = &o.result {
            files.push(write(dir.join(format!("trace_seed{}.csv", o.seed)), &tr.to_csv())?);
            files.push(write(
                dir.join(format!("timing_seed{}.csv", o.seed)),
                &tr.timing_csv(),
            )?);
        }
    }
    files.push(write(dir.join("summary.csv"), &summary_csv(&outcomes))?);
    let done: Vec<Trace> = outcomes
        .iter()
        .filter_map(|o| o.result.as_ref().ok())
        .filter(|t| t.aborted.is_none())
        .cloned()
        .collect();
    if !done.is_empty() {
        files.push(write(dir.join("aggregate.csv"), &summarize(&done)?.to_csv())?);
    }
    Ok(ExperimentOutput {
        files,
        outcomes,
        warnings,
    })
}

#[derive(Debug, Clone)]
pub struct SweepPoint {
    pub index: usize,
    pub overrides: Vec<(String, String)>,
    /// Mean over completed seeds of the last recorded gradient norm.
    pub mean_final_grad_norm: Option<f64>,
    pub mean_min_grad_norm: Option<f64>,
    pub completed: usize,
    pub runs: usize,
    pub error: Option<String>,
}

#[derive(Debug, Clone)]
pub struct SweepOutput {
    /// Ranked by `mean_final_grad_norm`, failures last.
    pub points: Vec<SweepPoint>,
    pub summary: PathBuf,
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let v: Vec<f64> = values.collect();
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

/// Runs the base config at every grid point under `out/point{i}` and writes
/// a ranked `sweep_summary.csv`.
pub fn run_sweep(base_text: &str, grid_text: &str, out: &Path) -> Result<SweepOutput> {
    let base = parse_entries(base_text)?;
    let grid = parse_grid(grid_text)?;
    let points = grid_points(&grid);
    let configs: Vec<ExperimentConfig> = points
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let mut cfg = apply_overrides(&base, p)?;
            cfg.out_dir = out.join(format!("point{i}"));
            Ok(cfg)
        })
        .collect::<Result<_>>()?;
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let results: Vec<Result<ExperimentOutput>> =
        pool()?.install(|| configs.par_iter().map(run_experiment).collect());

    let mut ranked = Vec::with_capacity(points.len());
    for (index, (overrides, res)) in points.into_iter().zip(results).enumerate() {
        ranked.push(match res {
            Ok(out) => {
                let done = out.completed();
                SweepPoint {
                    index,
                    overrides,
                    mean_final_grad_norm: mean(
                        done.iter().filter_map(|t| t.last().and_then(|r| r.grad_norm)),
                    ),
                    mean_min_grad_norm: mean(done.iter().filter_map(|t| t.min_grad_norm())),
                    completed: done.len(),
                    runs: out.outcomes.len(),
                    error: None,
                }
            }
            Err(Error::Io { path, source }) => return Err(Error::Io { path, source }),
            Err(e) => SweepPoint {
                index,
                overrides,
                mean_final_grad_norm: None,
                mean_min_grad_norm: None,
                completed: 0,
                runs: 0,
                error: Some(e.to_string()),
            },
        });
    }
    ranked.sort_by(|a, b| {
        let key = |p: &SweepPoint| p.mean_final_grad_norm.filter(|v| v.is_finite());
        match (key(a), key(b)) {
            (Some(x), Some(y)) => x.total_cmp(&y),
            (Some(_), None) => std::cmp::Ordering::Less,
            (None, Some(_)) => std::cmp::Ordering::Greater,
            (None, None) => std::cmp::Ordering::Equal,
        }
        .then(a.index.cmp(&b.index))
    });
    let mut csv = String::from(
        "rank,point,overrides,mean_final_grad_norm,mean_min_grad_norm,completed,runs,error\n",
    );
    for (rank, p) in ranked.iter().enumerate() {
        let overrides: Vec<String> = p.overrides.iter().map(|(k, v)| format!("{k}={v}")).collect();
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{},{},{}",
            rank + 1,
            p.index,
            csv_field(&overrides.join(";")),
            fmt_opt(p.mean_final_grad_norm),
            fmt_opt(p.mean_min_grad_norm),
            p.completed,
            p.runs,
            csv_field(p.error.as_deref().unwrap_or(""))
        );
    }
    let summary = write(out.join("sweep_summary.csv"), &csv)?;
    Ok(SweepOutput {
        points: ranked,
        summary,
    })
}
