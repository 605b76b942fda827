//! Two control optimizers sharing the estimator and oracles of AdamBO, so
//! that paired runs differ only in the upper update rule.

use crate::adambo::{drive, positive, sgd_warm_start};
use crate::error::{Error, Result};
use crate::hypergradient::{estimate_hypergradient, HypergradSample, NeumannConfig};
use crate::linalg::{ensure_finite, Vector};
use crate::oracle::BilevelOracle;
use crate::sampling::RunStreams;
use crate::trace::{Monitor, Trace};

#[derive(Debug, Clone, PartialEq)]
pub struct BaselineConfig {
    pub eta: f64,
    pub gamma: f64,
    /// Lower SGD steps per outer iteration (double-loop control).
    pub inner_steps: u64,
    /// Moving-average rate (single-loop control).
    pub beta: f64,
    pub iters: u64,
    pub q: usize,
    pub t0: u64,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        Self {
            eta: 0.01,
            gamma: 5e-3,
            inner_steps: 3,
            beta: 0.1,
            iters: 5000,
            q: 3,
            t0: 3,
        }
    }
}

impl BaselineConfig {
    pub fn validate(&self) -> Result<()> {
        positive("eta", self.eta)?;
        positive("gamma", self.gamma)?;
        if !(self.beta > 0.0 && self.beta <= 1.0) {
            return Err(Error::Domain(format!("beta must lie in (0, 1], got {}", self.beta)));
        }
        if self.q == 0 {
            return Err(Error::Domain("q must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
struct Iterate {
    x: Vector,
    y: Vector,
    m: Vector,
}

/// Double loop: `inner_steps` lower SGD steps, then `x ← x − η ∇̂φ(x, y)`.
pub fn run_stocbio_like(
    cfg: &BaselineConfig,
    oracle: &dyn BilevelOracle,
    streams: &mut RunStreams,
    monitor: Monitor<'_>,
) -> Result<Trace> {
    cfg.validate()?;
    if cfg.inner_steps == 0 {
        return Err(Error::Domain("inner_steps must be at least 1".into()));
    }
    let nc = NeumannConfig::new(cfg.q, oracle.constants().l_g1)?;
    let (x1, y0) = oracle.initial_point();
    let fallback = (x1.clone(), y0.clone());
    let mut warm = streams.warm.clone();
    Ok(drive(
        monitor,
        fallback,
        cfg.iters,
        || {
            let y = sgd_warm_start(oracle, &x1, &y0, cfg.gamma, cfg.t0, &mut warm)?;
            Ok(Iterate {
                m: Vector::zeros(x1.len()),
                x: x1.clone(),
                y,
            })
        },
        |s: &Iterate| (&s.x, &s.y),
        |s| {
            let y = sgd_warm_start(oracle, &s.x, &s.y, cfg.gamma, cfg.inner_steps, &mut streams.lower)?;
            let sample = HypergradSample::draw(&mut streams.upper, cfg.q);
            let g = estimate_hypergradient(oracle, &s.x, &y, &nc, &sample)?;
            let x = &s.x - &g * cfg.eta;
            ensure_finite(&x, "stocbio_like upper update")?;
            Ok(Iterate { x, y, m: g })
        },
    ))
}

/// Single loop: one lower SGD step, `m ← (1−β) m + β ∇̂φ`, `x ← x − η m`.
pub fn run_masoba_like(
    cfg: &BaselineConfig,
    oracle: &dyn BilevelOracle,
    streams: &mut RunStreams,
    monitor: Monitor<'_>,
) -> Result<Trace> {
    cfg.validate()?;
    if !(cfg.beta > 0.0 && cfg.beta <= 1.0) {
        return Err(Error::Domain(format!("beta must lie in (0, 1], got {}", cfg.beta)));
    }
    let nc = NeumannConfig::new(cfg.q, oracle.constants().l_g1)?;
    let (x1, y0) = oracle.initial_point();
    let fallback = (x1.clone(), y0.clone());
    let mut warm = streams.warm.clone();
    Ok(drive(
        monitor,
        fallback,
        cfg.iters,
        || {
            let y = sgd_warm_start(oracle, &x1, &y0, cfg.gamma, cfg.t0, &mut warm)?;
            Ok(Iterate {
                m: Vector::zeros(x1.len()),
                x: x1.clone(),
                y,
            })
        },
        |s: &Iterate| (&s.x, &s.y),
        |s| {
            let gy = oracle.sample_grad_y_g(&s.x, &s.y, streams.lower.next_key());
            let y = &s.y - gy * cfg.gamma;
            ensure_finite(&y, "masoba_like lower update")?;
            let sample = HypergradSample::draw(&mut streams.upper, cfg.q);
            let g = estimate_hypergradient(oracle, &s.x, &s.y, &nc, &sample)?;
            let m = if cfg.beta == 1.0 {
                g
            } else {
                &s.m * (1.0 - cfg.beta) + g * cfg.beta
            };
            let x = &s.x - &m * cfg.eta;
            ensure_finite(&x, "masoba_like upper update")?;
            Ok(Iterate { x, y, m })
        },
    ))
}
