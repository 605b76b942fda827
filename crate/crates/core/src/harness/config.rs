//! Line-based experiment configuration.
//!
//! One `section.key = value` pair per line, `#` starts a comment. Every key
//! has a default; unknown or repeated keys are rejected with their line.

use std::fmt::Display;
use std::path::PathBuf;
use std::str::FromStr;

use crate::adambo::{AdamBOConfig, UpdateForm};
use crate::baselines::BaselineConfig;
use crate::error::{Error, Result};
use crate::problems::{HyperRepSpec, QuadraticParams, Representation, TaskLoss};
use crate::vr_adambo::VRAdamBOConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Algo {
    AdamBO,
    VRAdamBO,
    StocBioLike,
    MaSoBaLike,
}

impl Algo {
    pub fn name(self) -> &'static str {
        match self {
            Algo::AdamBO => "adambo",
            Algo::VRAdamBO => "vr_adambo",
            Algo::StocBioLike => "stocbio_like",
            Algo::MaSoBaLike => "masoba_like",
        }
    }
}

impl FromStr for Algo {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "adambo" => Ok(Algo::AdamBO),
            "vr_adambo" => Ok(Algo::VRAdamBO),
            "stocbio_like" => Ok(Algo::StocBioLike),
            "masoba_like" => Ok(Algo::MaSoBaLike),
            _ => Err(format!(
                "unknown algo `{s}` (expected adambo, vr_adambo, stocbio_like or masoba_like)"
            )),
        }
    }
}

/// Synthetic AUC instance, or CSV files when paths are given.
#[derive(Debug, Clone, PartialEq)]
pub struct AucProblem {
    pub n_train: usize,
    pub n_test: usize,
    pub dim: usize,
    pub p: f64,
    pub separation: f64,
    pub batch: usize,
    pub cubic: f64,
    pub train_csv: Option<PathBuf>,
    pub test_csv: Option<PathBuf>,
}

impl Default for AucProblem {
    fn default() -> Self {
        Self {
            n_train: 2000,
            n_test: 1000,
            dim: 20,
            p: 0.8,
            separation: 1.0,
            batch: 32,
            cubic: 0.0,
            train_csv: None,
            test_csv: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ProblemConfig {
    Quadratic(QuadraticParams),
    Auc(AucProblem),
    HyperRep(HyperRepSpec),
}

impl ProblemConfig {
    pub fn kind(&self) -> &'static str {
        match self {
            ProblemConfig::Quadratic(_) => "quadratic",
            ProblemConfig::Auc(_) => "auc",
            ProblemConfig::HyperRep(_) => "hyperrep",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub algo: Algo,
    pub problem: ProblemConfig,
    /// Seeds the problem instance; run seeds only drive sampling.
    pub instance_seed: u64,
    pub seeds: Vec<u64>,
    pub metrics_every: u64,
    pub bias_samples: usize,
    pub out_dir: PathBuf,
    pub adambo: AdamBOConfig,
    pub vr_adambo: VRAdamBOConfig,
    pub baseline: BaselineConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            algo: Algo::AdamBO,
            problem: ProblemConfig::Quadratic(QuadraticParams::default()),
            instance_seed: 0,
            seeds: vec![0],
            metrics_every: 1,
            bias_samples: 0,
            out_dir: PathBuf::from("out"),
            adambo: AdamBOConfig::default(),
            vr_adambo: VRAdamBOConfig::default(),
            baseline: BaselineConfig::default(),
        }
    }
}

/// One `key = value` line.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Entry {
    pub line: usize,
    pub key: String,
    pub value: String,
}

fn valid_key(key: &str) -> bool {
    !key.is_empty()
        && key
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '.')
}

/// Splits `text` into entries, rejecting malformed lines and repeated keys.
pub fn parse_entries(text: &str) -> Result<Vec<Entry>> {
    let mut out: Vec<Entry> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let (key, value) = content.split_once('=').ok_or_else(|| Error::Config {
            line,
            message: format!("expected `section.key = value`, got `{content}`"),
        })?;
        let (key, value) = (key.trim(), value.trim());
        if !valid_key(key) || !key.contains('.') {
            return Err(Error::Config {
                line,
                message: format!("malformed key `{key}`"),
            });
        }
        if value.is_empty() {
            return Err(Error::Config {
                line,
                message: format!("missing value for `{key}`"),
            });
        }
        if let Some(prev) = out.iter().find(|e| e.key == key) {
            return Err(Error::Config {
                line,
                message: format!("duplicate key `{key}` (first set at line {})", prev.line),
            });
        }
        out.push(Entry {
            line,
            key: key.to_string(),
            value: value.to_string(),
        });
    }
    Ok(out)
}

pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    config_from_entries(&parse_entries(text)?)
}

enum KeyError {
    Unknown,
    Bad(String),
}

type Set = std::result::Result<(), KeyError>;

fn num<T: FromStr>(value: &str) -> std::result::Result<T, KeyError> {
    value.parse().map_err(|_| {
        KeyError::Bad(format!(
            "cannot parse `{value}` as {}",
            std::any::type_name::<T>()
        ))
    })
}

fn flag(value: &str) -> std::result::Result<bool, KeyError> {
    match value {
        "true" | "1" => Ok(true),
        "false" | "0" => Ok(false),
        _ => Err(KeyError::Bad(format!("expected true or false, got `{value}`"))),
    }
}

fn opt_path(value: &str) -> Option<PathBuf> {
    (value != "none").then(|| PathBuf::from(value))
}

fn set_quadratic(p: &mut QuadraticParams, key: &str, v: &str) -> Set {
    match key {
        "d_x" => p.d_x = num(v)?,
        "d_y" => p.d_y = num(v)?,
        "mu" => p.mu = num(v)?,
        "l_g1" => p.l_g1 = num(v)?,
        "coupling" => p.coupling = num(v)?,
        "upper_y_weight" => p.upper_y_weight = num(v)?,
        "upper_eig_min" => p.upper_eig_min = num(v)?,
        "upper_eig_max" => p.upper_eig_max = num(v)?,
        "sigma_f" => p.sigma_f = num(v)?,
        "sigma_g1" => p.sigma_g1 = num(v)?,
        "sigma_g2" => p.sigma_g2 = num(v)?,
        "radius" => p.radius = num(v)?,
        "init_norm" => p.init_norm = num(v)?,
        _ => return Err(KeyError::Unknown),
    }
    Ok(())
}

fn set_auc(p: &mut AucProblem, key: &str, v: &str) -> Set {
    match key {
        "n_train" => p.n_train = num(v)?,
        "n_test" => p.n_test = num(v)?,
        "dim" => p.dim = num(v)?,
        "p" => p.p = num(v)?,
        "separation" => p.separation = num(v)?,
        "batch" => p.batch = num(v)?,
        "cubic" => p.cubic = num(v)?,
        "train_csv" => p.train_csv = opt_path(v),
        "test_csv" => p.test_csv = opt_path(v),
        _ => return Err(KeyError::Unknown),
    }
    Ok(())
}

fn set_hyperrep(p: &mut HyperRepSpec, key: &str, v: &str) -> Set {
    match key {
        "tasks" => p.k = num(v)?,
        "d" => p.d = num(v)?,
        "r" => p.r = num(v)?,
        "classes" => p.classes = num(v)?,
        "n_train" => p.n_train = num(v)?,
        "n_val" => p.n_val = num(v)?,
        "separation" => p.separation = num(v)?,
        "mu_reg" => p.mu_reg = num(v)?,
        "batch" => p.batch = num(v)?,
        "exact_metrics" => p.exact_metrics = flag(v)?,
        "representation" => {
            p.representation = match v {
                "tanh" => Representation::Tanh,
                "linear" => Representation::Linear,
                _ => return Err(KeyError::Bad(format!("unknown representation `{v}`"))),
            }
        }
        "loss" => {
            p.loss = match v {
                "logistic" => TaskLoss::Logistic,
                "squared" => TaskLoss::Squared,
                _ => return Err(KeyError::Bad(format!("unknown loss `{v}`"))),
            }
        }
        _ => return Err(KeyError::Unknown),
    }
    Ok(())
}

fn set_adambo(c: &mut AdamBOConfig, key: &str, v: &str) -> Set {
    match key {
        "beta" => c.beta = num(v)?,
        "beta_sq" => c.beta_sq = num(v)?,
        "eta" => c.eta = num(v)?,
        "gamma" => c.gamma = num(v)?,
        "lambda" => c.lambda = num(v)?,
        "t0" => c.t0 = num(v)?,
        "iters" => c.iters = num(v)?,
        "q" => c.q = num(v)?,
        "form" => {
            c.form = match v {
                "raw" => UpdateForm::Raw,
                "rescaled" => UpdateForm::Rescaled,
                _ => return Err(KeyError::Bad(format!("unknown form `{v}`"))),
            }
        }
        _ => return Err(KeyError::Unknown),
    }
    Ok(())
}

fn set_vr(c: &mut VRAdamBOConfig, key: &str, v: &str) -> Set {
    match key {
        "beta" => c.beta = num(v)?,
        "beta_sq" => c.beta_sq = num(v)?,
        "eta" => c.eta = num(v)?,
        "gamma" => c.gamma = num(v)?,
        "lambda" => c.lambda = num(v)?,
        "nu" => c.nu = num(v)?,
        "alpha_nes" => c.alpha_nes = num(v)?,
        "interval" => c.interval = num(v)?,
        "snag_steps" => c.snag_steps = num(v)?,
        "t0" => c.t0 = num(v)?,
        "s1" => c.s1 = num(v)?,
        "iters" => c.iters = num(v)?,
        "q" => c.q = num(v)?,
        "bias_correct_m" => c.bias_correct_m = flag(v)?,
        _ => return Err(KeyError::Unknown),
    }
    Ok(())
}

fn set_baseline(c: &mut BaselineConfig, key: &str, v: &str) -> Set {
    match key {
        "eta" => c.eta = num(v)?,
        "gamma" => c.gamma = num(v)?,
        "inner_steps" => c.inner_steps = num(v)?,
        "beta" => c.beta = num(v)?,
        "iters" => c.iters = num(v)?,
        "q" => c.q = num(v)?,
        "t0" => c.t0 = num(v)?,
        _ => return Err(KeyError::Unknown),
    }
    Ok(())
}

fn set_experiment(c: &mut ExperimentConfig, key: &str, v: &str) -> Set {
    match key {
        "algo" => c.algo = v.parse().map_err(KeyError::Bad)?,
        "instance_seed" => c.instance_seed = num(v)?,
        "seeds" => {
            c.seeds = v
                .split(',')
                .map(|s| num::<u64>(s.trim()))
                .collect::<std::result::Result<_, _>>()?;
        }
        "metrics_every" => c.metrics_every = num(v)?,
        "bias_samples" => c.bias_samples = num(v)?,
        "out_dir" => c.out_dir = PathBuf::from(v),
        _ => return Err(KeyError::Unknown),
    }
    Ok(())
}

pub fn config_from_entries(entries: &[Entry]) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::default();
    let kind = match entries.iter().find(|e| e.key == "problem.kind") {
        None => "quadratic",
        Some(e) => match e.value.as_str() {
            k @ ("quadratic" | "auc" | "hyperrep") => k,
            other => {
                return Err(Error::Config {
                    line: e.line,
                    message: format!("unknown problem kind `{other}`"),
                })
            }
        },
    };
    cfg.problem = match kind {
        "auc" => ProblemConfig::Auc(AucProblem::default()),
        "hyperrep" => ProblemConfig::HyperRep(HyperRepSpec::default()),
        _ => ProblemConfig::Quadratic(QuadraticParams::default()),
    };
    for e in entries {
        if e.key == "problem.kind" {
            continue;
        }
        let (section, key) = e.key.split_once('.').expect("keys contain a dot");
        let outcome = match (section, &mut cfg.problem) {
            ("experiment", _) => set_experiment(&mut cfg, key, &e.value),
            ("adambo", _) => set_adambo(&mut cfg.adambo, key, &e.value),
            ("vr_adambo", _) => set_vr(&mut cfg.vr_adambo, key, &e.value),
            ("baseline", _) => set_baseline(&mut cfg.baseline, key, &e.value),
            ("quadratic", ProblemConfig::Quadratic(p)) => set_quadratic(p, key, &e.value),
            ("auc", ProblemConfig::Auc(p)) => set_auc(p, key, &e.value),
            ("hyperrep", ProblemConfig::HyperRep(p)) => set_hyperrep(p, key, &e.value),
            ("quadratic" | "auc" | "hyperrep", _) => {
                return Err(Error::Config {
                    line: e.line,
                    message: format!(
                        "`{}` belongs to problem `{section}` but problem.kind is `{kind}`",
                        e.key
                    ),
                })
            }
            _ => Err(KeyError::Unknown),
        };
        match outcome {
            Ok(()) => {}
            Err(KeyError::Unknown) => {
                return Err(Error::Config {
                    line: e.line,
                    message: format!("unknown key `{}`", e.key),
                })
            }
            Err(KeyError::Bad(message)) => {
                return Err(Error::Config {
                    line: e.line,
                    message: format!("`{}`: {message}", e.key),
                })
            }
        }
    }
    if cfg.seeds.is_empty() {
        return Err(Error::Config {
            line: 0,
            message: "experiment.seeds is empty".into(),
        });
    }
    Ok(cfg)
}

fn push(out: &mut String, key: &str, v: impl Display) {
    out.push_str(key);
    out.push_str(" = ");
    out.push_str(&v.to_string());
    out.push('\n');
}

fn path_or_none(p: &Option<PathBuf>) -> String {
    p.as_ref()
        .map_or_else(|| "none".to_string(), |p| p.display().to_string())
}

impl ExperimentConfig {
    /// Serializes every field; [`parse_config`] reads it back unchanged.
    /// Floats use Rust's shortest round-trip formatting.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        push(&mut s, "experiment.algo", self.algo.name());
        push(&mut s, "experiment.instance_seed", self.instance_seed);
        let seeds: Vec<String> = self.seeds.iter().map(u64::to_string).collect();
        push(&mut s, "experiment.seeds", seeds.join(", "));
        push(&mut s, "experiment.metrics_every", self.metrics_every);
        push(&mut s, "experiment.bias_samples", self.bias_samples);
        push(&mut s, "experiment.out_dir", self.out_dir.display());
        push(&mut s, "problem.kind", self.problem.kind());
        match &self.problem {
            ProblemConfig::Quadratic(p) => {
                push(&mut s, "quadratic.d_x", p.d_x);
                push(&mut s, "quadratic.d_y", p.d_y);
                push(&mut s, "quadratic.mu", p.mu);
                push(&mut s, "quadratic.l_g1", p.l_g1);
                push(&mut s, "quadratic.coupling", p.coupling);
                push(&mut s, "quadratic.upper_y_weight", p.upper_y_weight);
                push(&mut s, "quadratic.upper_eig_min", p.upper_eig_min);
                push(&mut s, "quadratic.upper_eig_max", p.upper_eig_max);
                push(&mut s, "quadratic.sigma_f", p.sigma_f);
                push(&mut s, "quadratic.sigma_g1", p.sigma_g1);
                push(&mut s, "quadratic.sigma_g2", p.sigma_g2);
                push(&mut s, "quadratic.radius", p.radius);
                push(&mut s, "quadratic.init_norm", p.init_norm);
            }
            ProblemConfig::Auc(p) => {
                push(&mut s, "auc.n_train", p.n_train);
                push(&mut s, "auc.n_test", p.n_test);
                push(&mut s, "auc.dim", p.dim);
                push(&mut s, "auc.p", p.p);
                push(&mut s, "auc.separation", p.separation);
                push(&mut s, "auc.batch", p.batch);
                push(&mut s, "auc.cubic", p.cubic);
                push(&mut s, "auc.train_csv", path_or_none(&p.train_csv));
                push(&mut s, "auc.test_csv", path_or_none(&p.test_csv));
            }
            ProblemConfig::HyperRep(p) => {
                push(&mut s, "hyperrep.tasks", p.k);
                push(&mut s, "hyperrep.d", p.d);
                push(&mut s, "hyperrep.r", p.r);
                push(&mut s, "hyperrep.classes", p.classes);
                push(&mut s, "hyperrep.n_train", p.n_train);
                push(&mut s, "hyperrep.n_val", p.n_val);
                push(&mut s, "hyperrep.separation", p.separation);
                push(&mut s, "hyperrep.mu_reg", p.mu_reg);
                push(&mut s, "hyperrep.batch", p.batch);
                push(&mut s, "hyperrep.exact_metrics", p.exact_metrics);
                let rep = match p.representation {
                    Representation::Tanh => "tanh",
                    Representation::Linear => "linear",
                };
                push(&mut s, "hyperrep.representation", rep);
                let loss = match p.loss {
                    TaskLoss::Logistic => "logistic",
                    TaskLoss::Squared => "squared",
                };
                push(&mut s, "hyperrep.loss", loss);
            }
        }
        let a = &self.adambo;
        push(&mut s, "adambo.beta", a.beta);
        push(&mut s, "adambo.beta_sq", a.beta_sq);
        push(&mut s, "adambo.eta", a.eta);
        push(&mut s, "adambo.gamma", a.gamma);
        push(&mut s, "adambo.lambda", a.lambda);
        push(&mut s, "adambo.t0", a.t0);
        push(&mut s, "adambo.iters", a.iters);
        push(&mut s, "adambo.q", a.q);
        let form = match a.form {
            UpdateForm::Raw => "raw",
            UpdateForm::Rescaled => "rescaled",
        };
        push(&mut s, "adambo.form", form);
        let v = &self.vr_adambo;
        push(&mut s, "vr_adambo.beta", v.beta);
        push(&mut s, "vr_adambo.beta_sq", v.beta_sq);
        push(&mut s, "vr_adambo.eta", v.eta);
        push(&mut s, "vr_adambo.gamma", v.gamma);
        push(&mut s, "vr_adambo.lambda", v.lambda);
        push(&mut s, "vr_adambo.nu", v.nu);
        push(&mut s, "vr_adambo.alpha_nes", v.alpha_nes);
        push(&mut s, "vr_adambo.interval", v.interval);
        push(&mut s, "vr_adambo.snag_steps", v.snag_steps);
        push(&mut s, "vr_adambo.t0", v.t0);
        push(&mut s, "vr_adambo.s1", v.s1);
        push(&mut s, "vr_adambo.iters", v.iters);
        push(&mut s, "vr_adambo.q", v.q);
        push(&mut s, "vr_adambo.bias_correct_m", v.bias_correct_m);
        let b = &self.baseline;
        push(&mut s, "baseline.eta", b.eta);
        push(&mut s, "baseline.gamma", b.gamma);
        push(&mut s, "baseline.inner_steps", b.inner_steps);
        push(&mut s, "baseline.beta", b.beta);
        push(&mut s, "baseline.iters", b.iters);
        push(&mut s, "baseline.q", b.q);
        push(&mut s, "baseline.t0", b.t0);
        s
    }

    /// Iterations and Neumann order of the selected algorithm.
    pub fn iters_and_q(&self) -> (u64, usize) {
        match self.algo {
            Algo::AdamBO => (self.adambo.iters, self.adambo.q),
            Algo::VRAdamBO => (self.vr_adambo.iters, self.vr_adambo.q),
            Algo::StocBioLike | Algo::MaSoBaLike => (self.baseline.iters, self.baseline.q),
        }
    }

    pub fn gamma(&self) -> f64 {
        match self.algo {
            Algo::AdamBO => self.adambo.gamma,
            Algo::VRAdamBO => self.vr_adambo.gamma,
            Algo::StocBioLike | Algo::MaSoBaLike => self.baseline.gamma,
        }
    }
}

/// Parses a sweep grid: `section.key = v1, v2, ...` per line.
pub fn parse_grid(text: &str) -> Result<Vec<(String, Vec<String>)>> {
    parse_entries(text)?
        .into_iter()
        .map(|e| {
            let values: Vec<String> = e.value.split(',').map(|v| v.trim().to_string()).collect();
            if values.iter().any(String::is_empty) {
                return Err(Error::Config {
                    line: e.line,
                    message: format!("empty value in grid list for `{}`", e.key),
                });
            }
            Ok((e.key, values))
        })
        .collect()
}

/// Cartesian product of the grid, first axis varying slowest.
pub fn grid_points(grid: &[(String, Vec<String>)]) -> Vec<Vec<(String, String)>> {
    let mut points: Vec<Vec<(String, String)>> = vec![Vec::new()];
    for (key, values) in grid {
        points = points
            .into_iter()
            .flat_map(|p| {
                values.iter().map(move |v| {
                    let mut q = p.clone();
                    q.push((key.clone(), v.clone()));
                    q
                })
            })
            .collect();
    }
    points
}

/// Replaces (or appends) entries, then validates the result.
pub fn apply_overrides(base: &[Entry], overrides: &[(String, String)]) -> Result<ExperimentConfig> {
    let mut entries = base.to_vec();
    for (key, value) in overrides {
        match entries.iter_mut().find(|e| &e.key == key) {
            Some(e) => e.value = value.clone(),
            None => entries.push(Entry {
                line: 0,
                key: key.clone(),
                value: value.clone(),
            }),
        }
    }
    config_from_entries(&entries)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_text_gives_defaults() {
        let cfg = parse_config("").unwrap();
        assert_eq!(cfg, ExperimentConfig::default());
        assert_eq!(cfg.seeds, vec![0]);
        match cfg.problem {
            ProblemConfig::Quadratic(p) => assert_eq!((p.d_x, p.d_y), (10, 10)),
            _ => panic!("default problem should be quadratic"),
        }
    }

    #[test]
    fn parses_scientific_floats() {
        let cfg = parse_config("adambo.beta = 0.1\nadambo.lambda = 1e-8\n").unwrap();
        assert_eq!(cfg.adambo.beta, 0.1);
        assert_eq!(cfg.adambo.lambda, 1e-8);
    }

    #[test]
    fn typo_is_rejected_with_line() {
        let err = parse_config("adambo.bta = 0.1").unwrap_err();
        assert!(matches!(err, Error::Config { line: 1, .. }));
        assert!(err.to_string().contains("unknown key"));
        assert!(err.to_string().contains("line 1"));
    }

    #[test]
    fn comments_and_blank_lines() {
        let cfg = parse_config("# hi\n\nexperiment.seeds = 1, 2,3 # three seeds\n").unwrap();
        assert_eq!(cfg.seeds, vec![1, 2, 3]);
    }

    #[test]
    fn type_mismatch_and_duplicates() {
        assert!(matches!(
            parse_config("\nadambo.iters = many").unwrap_err(),
            Error::Config { line: 2, .. }
        ));
        assert!(matches!(
            parse_config("adambo.q = 2\nadambo.q = 3").unwrap_err(),
            Error::Config { line: 2, .. }
        ));
        assert!(parse_config("adambo.q 3").is_err());
        assert!(parse_config("adam bo.q = 3").is_err());
    }

    #[test]
    fn inactive_problem_section_is_an_error() {
        let err = parse_config("auc.p = 0.5").unwrap_err();
        assert!(matches!(err, Error::Config { line: 1, .. }));
        let cfg = parse_config("auc.p = 0.5\nproblem.kind = auc").unwrap();
        assert!(matches!(cfg.problem, ProblemConfig::Auc(ref a) if a.p == 0.5));
    }

    #[test]
    fn text_round_trip() {
        for kind in ["quadratic", "auc", "hyperrep"] {
            let src = format!(
                "problem.kind = {kind}\nexperiment.algo = vr_adambo\nexperiment.seeds = 4, 5\nadambo.eta = 3.3e-7\n"
            );
            let cfg = parse_config(&src).unwrap();
            assert_eq!(parse_config(&cfg.to_text()).unwrap(), cfg);
        }
    }

    #[test]
    fn grid_expands_cartesian() {
        let grid = parse_grid("adambo.eta = 1e-3, 1e-4\nadambo.gamma = 0.1, 0.2, 0.3").unwrap();
        let pts = grid_points(&grid);
        assert_eq!(pts.len(), 6);
        assert_eq!(pts[0][0].1, "1e-3");
        assert_eq!(pts[5][1].1, "0.3");
        let base = parse_entries("adambo.eta = 5").unwrap();
        let cfg = apply_overrides(&base, &pts[4]).unwrap();
        assert_eq!((cfg.adambo.eta, cfg.adambo.gamma), (1e-4, 0.2));
    }
}
