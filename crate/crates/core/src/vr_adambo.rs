//! VR-AdamBO: periodic SNAG refreshes of the lower iterate with exponential
//! averaging, STORM momentum for the hypergradient and Adam-type upper steps.

use crate::adambo::{bias_correction, drive, positive};
use crate::error::{Error, Result};
use crate::hypergradient::{estimate_hypergradient, HypergradSample, NeumannConfig};
use crate::linalg::{check_dim, ensure_finite, Vector};
use crate::oracle::BilevelOracle;
use crate::sampling::{KeyStream, RunStreams};
use crate::trace::{Monitor, Trace};

#[derive(Debug, Clone, PartialEq)]
pub struct VRAdamBOConfig {
    /// STORM rate.
    pub beta: f64,
    pub beta_sq: f64,
    pub eta: f64,
    pub gamma: f64,
    pub lambda: f64,
    /// Averaging weight `ν`.
    pub nu: f64,
    /// Nesterov momentum of SNAG.
    pub alpha_nes: f64,
    /// Refresh interval `I`.
    pub interval: u64,
    /// SNAG steps per refresh `N`.
    pub snag_steps: u64,
    pub t0: u64,
    /// Estimates averaged into the initial momentum.
    pub s1: usize,
    pub iters: u64,
    pub q: usize,
    /// Divide the momentum by `1 − (1−β)^t` in the upper step.
    pub bias_correct_m: bool,
}

impl Default for VRAdamBOConfig {
    fn default() -> Self {
        Self {
            beta: 0.1,
            beta_sq: 0.001,
            eta: 1e-4,
            gamma: 5e-3,
            lambda: 1e-8,
            nu: 0.1,
            alpha_nes: 0.1,
            interval: 2,
            snag_steps: 3,
            t0: 3,
            s1: 16,
            iters: 5000,
            q: 3,
            bias_correct_m: false,
        }
    }
}

impl VRAdamBOConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta > 0.0 && self.beta <= 1.0) {
            return Err(Error::Domain(format!("beta must lie in (0, 1], got {}", self.beta)));
        }
        if !(0.0..=1.0).contains(&self.beta_sq) {
            return Err(Error::Domain("beta_sq must lie in [0, 1]".into()));
        }
        if !(self.nu > 0.0 && self.nu <= 1.0) {
            return Err(Error::Domain(format!("nu must lie in (0, 1], got {}", self.nu)));
        }
        if !(0.0..1.0).contains(&self.alpha_nes) {
            return Err(Error::Domain(format!(
                "alpha_nes must lie in [0, 1), got {}",
                self.alpha_nes
            )));
        }
        positive("eta", self.eta)?;
        positive("gamma", self.gamma)?;
        positive("lambda", self.lambda)?;
        if self.interval == 0 || self.snag_steps == 0 || self.s1 == 0 || self.q == 0 {
            return Err(Error::Domain(
                "interval, snag_steps, s1 and q must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// `(ν, I) = (√β, ⌈1/√β⌉)`.
pub fn theorem_couplings(beta: f64) -> Result<(f64, u64)> {
    if !(beta > 0.0 && beta <= 1.0) {
        return Err(Error::Domain(format!("beta must lie in (0, 1], got {beta}")));
    }
    let nu = beta.sqrt();
    Ok((nu, (1.0 / nu).ceil() as u64))
}

#[derive(Debug, Clone, PartialEq)]
pub struct VRAdamBOState {
    pub t: u64,
    pub x: Vector,
    /// Raw lower iterate, refreshed every `I` iterations.
    pub y: Vector,
    /// Averaged lower iterate `ŷ_t`.
    pub y_avg: Vector,
    pub m: Vector,
    pub v: Vector,
    pub v_hat: Vector,
    pub prev_x: Vector,
    pub prev_y_avg: Vector,
}

/// `steps` iterations of stochastic Nesterov at fixed `x`:
/// `z_{k+1} = y_k − γ ∇_y G(x, y_k)`, `y_{k+1} = z_{k+1} + α (z_{k+1} − z_k)`.
pub fn snag_run(
    oracle: &dyn BilevelOracle,
    x: &Vector,
    y0: &Vector,
    gamma: f64,
    alpha_nes: f64,
    steps: u64,
    stream: &mut KeyStream,
) -> Result<Vector> {
    positive("gamma", gamma)?;
    let (dx, dy) = oracle.dims();
    check_dim(x, dx, "snag_run x")?;
    check_dim(y0, dy, "snag_run y0")?;
    let mut y = y0.clone();
    let mut z = y0.clone();
    for step in 0..steps {
        let g = oracle.sample_grad_y_g(x, &y, stream.next_key());
        let z_next = &y - g * gamma;
        y = &z_next + (&z_next - &z) * alpha_nes;
        z = z_next;
        ensure_finite(&y, &format!("snag_run step {step}"))?;
    }
    Ok(y)
}

/// `grad_now + (1 − β)(m_prev − grad_prev_same_sample)`.
pub fn storm_update(
    m_prev: &Vector,
    grad_now: &Vector,
    grad_prev_same_sample: &Vector,
    beta: f64,
) -> Result<Vector> {
    let d = grad_now.len();
    check_dim(m_prev, d, "storm_update m_prev")?;
    check_dim(grad_prev_same_sample, d, "storm_update grad_prev")?;
    if beta == 1.0 {
        return Ok(grad_now.clone());
    }
    Ok(grad_now + (m_prev - grad_prev_same_sample) * (1.0 - beta))
}

/// Warm start with `T0` SNAG steps, then seed the momentum with the mean of
/// `S1` estimates and `v` with the mean of their squares.
pub fn vr_init(
    oracle: &dyn BilevelOracle,
    cfg: &VRAdamBOConfig,
    x1: &Vector,
    y0: &Vector,
    streams: &mut RunStreams,
) -> Result<VRAdamBOState> {
    cfg.validate()?;
    let y1 = snag_run(oracle, x1, y0, cfg.gamma, cfg.alpha_nes, cfg.t0, &mut streams.warm)?;
    let nc = NeumannConfig::new(cfg.q, oracle.constants().l_g1)?;
    let d = x1.len();
    let mut m = Vector::zeros(d);
    let mut sq = Vector::zeros(d);
    for _ in 0..cfg.s1 {
        let sample = HypergradSample::draw(&mut streams.init, cfg.q);
        let g = estimate_hypergradient(oracle, x1, &y1, &nc, &sample)?;
        sq += g.map(|c| c * c);
        m += g;
    }
    let n = cfg.s1 as f64;
    m /= n;
    sq /= n;
    Ok(VRAdamBOState {
        t: 1,
        x: x1.clone(),
        y: y1.clone(),
        y_avg: y1.clone(),
        m,
        v: &sq * cfg.beta_sq,
        v_hat: sq,
        prev_x: x1.clone(),
        prev_y_avg: y1,
    })
}

/// Upper step with the current momentum, then refresh/average the lower
/// iterate and update the moments at the new point.
pub fn vr_adambo_step(
    state: &VRAdamBOState,
    oracle: &dyn BilevelOracle,
    cfg: &VRAdamBOConfig,
    streams: &mut RunStreams,
) -> Result<VRAdamBOState> {
    let t = state.t;
    let direction = if cfg.bias_correct_m {
        &state.m / bias_correction(cfg.beta, t)
    } else {
        state.m.clone()
    };
    let step = direction.zip_map(&state.v_hat, |m, v| cfg.eta * m / (v.sqrt() + cfg.lambda));
    let x = &state.x - step;
    ensure_finite(&x, "vr_adambo upper update")?;

    let t_next = t + 1;
    let y = if t_next % cfg.interval == 0 {
        snag_run(
            oracle,
            &x,
            &state.y,
            cfg.gamma,
            cfg.alpha_nes,
            cfg.snag_steps,
            &mut streams.lower,
        )?
    } else {
        state.y.clone()
    };
    let y_avg = if cfg.nu == 1.0 {
        y.clone()
    } else {
        &state.y_avg * (1.0 - cfg.nu) + &y * cfg.nu
    };

    let nc = NeumannConfig::new(cfg.q, oracle.constants().l_g1)?;
    let sample = HypergradSample::draw(&mut streams.upper, cfg.q);
    let g_now = estimate_hypergradient(oracle, &x, &y_avg, &nc, &sample)?;
    let g_prev = estimate_hypergradient(oracle, &state.x, &state.y_avg, &nc, &sample)?;
    let m = storm_update(&state.m, &g_now, &g_prev, cfg.beta)?;
    ensure_finite(&m, "vr_adambo momentum")?;

    let g2 = g_now.map(|c| c * c);
    let v = &state.v * (1.0 - cfg.beta_sq) + &g2 * cfg.beta_sq;
    let v_hat = if cfg.beta_sq == 0.0 {
        state.v_hat.clone()
    } else {
        &v / bias_correction(cfg.beta_sq, t_next)
    };

    Ok(VRAdamBOState {
        t: t_next,
        x,
        y,
        y_avg,
        m,
        v,
        v_hat,
        prev_x: state.x.clone(),
        prev_y_avg: state.y_avg.clone(),
    })
}

/// Initialize from the oracle's starting point and run `cfg.iters` steps.
/// Metrics are taken at the averaged lower iterate.
pub fn run_vr_adambo(
    cfg: &VRAdamBOConfig,
    oracle: &dyn BilevelOracle,
    streams: &mut RunStreams,
    monitor: Monitor<'_>,
) -> Result<Trace> {
    cfg.validate()?;
    let (x1, y0) = oracle.initial_point();
    let fallback = (x1.clone(), y0.clone());
    let mut init_streams = streams.clone();
    let trace = drive(
        monitor,
        fallback,
        cfg.iters,
        || vr_init(oracle, cfg, &x1, &y0, &mut init_streams),
        |s: &VRAdamBOState| (&s.x, &s.y_avg),
        |s| vr_adambo_step(s, oracle, cfg, streams),
    );
    Ok(trace)
}
