//! AdamBO: SGD warm start on the lower level, then joint single-loop updates
//! with an Adam-type upper step driven by Neumann hypergradient estimates.

mod schedule;
mod weights;

pub use schedule::{theorem_schedule, Schedule, ScheduleInputs};
pub use weights::{
    alpha_schedule, alpha_square_bound, alpha_square_ratio_max, bias_correction,
    decayed_alpha_max, discounted_alpha_bound, discounted_alpha_max, momentum_weight_sum,
    momentum_weights, neumaier_sum,
};

use crate::error::{Error, Result};
use crate::hypergradient::{estimate_hypergradient, HypergradSample, NeumannConfig};
use crate::linalg::{check_dim, ensure_finite, Vector};
use crate::oracle::{BilevelOracle, ProblemConstants};
use crate::sampling::{KeyStream, RunStreams};
use crate::trace::{Abort, Monitor, Trace};

/// Which of the two equivalent update forms [`run_adambo`] uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum UpdateForm {
    /// Raw moments with explicit bias correction.
    #[default]
    Raw,
    /// Bias-corrected moments updated with time-varying rates `α_t`.
    Rescaled,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamBOConfig {
    pub beta: f64,
    pub beta_sq: f64,
    pub eta: f64,
    pub gamma: f64,
    pub lambda: f64,
    pub t0: u64,
    pub iters: u64,
    pub q: usize,
    pub form: UpdateForm,
}

impl Default for AdamBOConfig {
    fn default() -> Self {
        Self {
            beta: 0.1,
            beta_sq: 0.001,
            eta: 1e-4,
            gamma: 5e-3,
            lambda: 1e-8,
            t0: 3,
            iters: 5000,
            q: 3,
            form: UpdateForm::Raw,
        }
    }
}

impl AdamBOConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta > 0.0 && self.beta <= 1.0) {
            return Err(Error::Domain(format!("beta must lie in (0, 1], got {}", self.beta)));
        }
        if !(0.0..=1.0).contains(&self.beta_sq) {
            return Err(Error::Domain(format!(
                "beta_sq must lie in [0, 1], got {}",
                self.beta_sq
            )));
        }
        positive("eta", self.eta)?;
        positive("gamma", self.gamma)?;
        positive("lambda", self.lambda)?;
        if self.q == 0 {
            return Err(Error::Domain("q must be at least 1".into()));
        }
        Ok(())
    }
}

pub(crate) fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!("{name} must be positive, got {v}")))
    }
}

/// Non-fatal warning when `γ > 1/(2 l_g1)`.
pub fn gamma_warning(gamma: f64, consts: &ProblemConstants) -> Option<String> {
    let cap = 1.0 / (2.0 * consts.l_g1);
    (gamma > cap).then(|| format!("gamma = {gamma} exceeds 1/(2 l_g1) = {cap}"))
}

/// Iterate of the raw form. Before step `t` it holds `x_t`, `y_t` and the
/// moments of step `t − 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamBOState {
    pub t: u64,
    pub x: Vector,
    pub y: Vector,
    pub m: Vector,
    pub v: Vector,
    pub m_hat: Vector,
    pub v_hat: Vector,
    /// Hypergradient estimate consumed by the last step.
    pub last_estimate: Vector,
}

impl AdamBOState {
    pub fn new(x: Vector, y: Vector) -> Self {
        let d = x.len();
        Self {
            t: 1,
            x,
            y,
            m: Vector::zeros(d),
            v: Vector::zeros(d),
            m_hat: Vector::zeros(d),
            v_hat: Vector::zeros(d),
            last_estimate: Vector::zeros(d),
        }
    }
}

/// Iterate of the rescaled form: only bias-corrected moments are kept.
#[derive(Debug, Clone, PartialEq)]
pub struct RescaledState {
    pub t: u64,
    pub x: Vector,
    pub y: Vector,
    pub m_hat: Vector,
    pub v_hat: Vector,
    pub last_estimate: Vector,
}

impl RescaledState {
    pub fn new(x: Vector, y: Vector) -> Self {
        let d = x.len();
        Self {
            t: 1,
            x,
            y,
            m_hat: Vector::zeros(d),
            v_hat: Vector::zeros(d),
            last_estimate: Vector::zeros(d),
        }
    }
}

/// `T0` steps of `y ← y − γ ∇_y G(x, y; π)` at fixed `x`.
pub fn sgd_warm_start(
    oracle: &dyn BilevelOracle,
    x: &Vector,
    y0: &Vector,
    gamma: f64,
    t0: u64,
    stream: &mut KeyStream,
) -> Result<Vector> {
    positive("gamma", gamma)?;
    let (dx, dy) = oracle.dims();
    check_dim(x, dx, "sgd_warm_start x")?;
    check_dim(y0, dy, "sgd_warm_start y0")?;
    let mut y = y0.clone();
    for step in 0..t0 {
        let g = oracle.sample_grad_y_g(x, &y, stream.next_key());
        y.axpy(-gamma, &g, 1.0);
        ensure_finite(&y, &format!("sgd_warm_start step {step}"))?;
    }
    Ok(y)
}

/// Lower step and hypergradient draw shared by both forms: `ζ_t` from the
/// lower stream, then `ξ̄_t` from the upper stream.
fn draw_step(
    oracle: &dyn BilevelOracle,
    x: &Vector,
    y: &Vector,
    cfg: &AdamBOConfig,
    streams: &mut RunStreams,
) -> Result<(Vector, Vector)> {
    let (dx, dy) = oracle.dims();
    check_dim(x, dx, "adambo x")?;
    check_dim(y, dy, "adambo y")?;
    let gy = oracle.sample_grad_y_g(x, y, streams.lower.next_key());
    let y_next = y - gy * cfg.gamma;
    ensure_finite(&y_next, "adambo lower update")?;
    let nc = NeumannConfig::new(cfg.q, oracle.constants().l_g1)?;
    let sample = HypergradSample::draw(&mut streams.upper, cfg.q);
    let g = estimate_hypergradient(oracle, x, y, &nc, &sample)?;
    Ok((y_next, g))
}

fn adam_move(x: &Vector, m_hat: &Vector, v_hat: &Vector, eta: f64, lambda: f64) -> Result<Vector> {
    let step = m_hat.zip_map(v_hat, |m, v| eta * m / (v.sqrt() + lambda));
    let out = x - step;
    ensure_finite(&out, "adambo upper update")?;
    Ok(out)
}

/// One iteration of the raw form.
pub fn adambo_step(
    state: &AdamBOState,
    oracle: &dyn BilevelOracle,
    cfg: &AdamBOConfig,
    streams: &mut RunStreams,
) -> Result<AdamBOState> {
    if state.t == 0 {
        return Err(Error::Domain("state.t must be at least 1".into()));
    }
    let t = state.t;
    let (y_next, g) = draw_step(oracle, &state.x, &state.y, cfg, streams)?;
    let g2 = g.map(|c| c * c);
    let (m, v, m_hat, v_hat) = if t == 1 {
        (&g * cfg.beta, &g2 * cfg.beta_sq, g.clone(), g2.clone())
    } else {
        let m = &state.m * (1.0 - cfg.beta) + &g * cfg.beta;
        let v = &state.v * (1.0 - cfg.beta_sq) + &g2 * cfg.beta_sq;
        let m_hat = &m / bias_correction(cfg.beta, t);
        let v_hat = if cfg.beta_sq == 0.0 {
            state.v_hat.clone()
        } else {
            &v / bias_correction(cfg.beta_sq, t)
        };
        (m, v, m_hat, v_hat)
    };
    let x_next = adam_move(&state.x, &m_hat, &v_hat, cfg.eta, cfg.lambda)?;
    Ok(AdamBOState {
        t: t + 1,
        x: x_next,
        y: y_next,
        m,
        v,
        m_hat,
        v_hat,
        last_estimate: g,
    })
}

/// One iteration of the rescaled form.
pub fn adambo_step_rescaled(
    state: &RescaledState,
    oracle: &dyn BilevelOracle,
    cfg: &AdamBOConfig,
    streams: &mut RunStreams,
) -> Result<RescaledState> {
    if state.t == 0 {
        return Err(Error::Domain("state.t must be at least 1".into()));
    }
    let t = state.t;
    let (y_next, g) = draw_step(oracle, &state.x, &state.y, cfg, streams)?;
    let a = weights::rate(cfg.beta, t);
    let a_sq = weights::rate(cfg.beta_sq, t);
    let m_hat = blend(&state.m_hat, &g, a);
    let v_hat = blend(&state.v_hat, &g.map(|c| c * c), a_sq);
    let x_next = adam_move(&state.x, &m_hat, &v_hat, cfg.eta, cfg.lambda)?;
    Ok(RescaledState {
        t: t + 1,
        x: x_next,
        y: y_next,
        m_hat,
        v_hat,
        last_estimate: g,
    })
}

/// `(1 − a) old + a new`, returning `new` untouched when `a = 1`.
fn blend(old: &Vector, new: &Vector, a: f64) -> Vector {
    if a == 1.0 {
        new.clone()
    } else {
        old * (1.0 - a) + new * a
    }
}

/// Runs `init`, records `t = 0`, then performs `iters` steps, recording when
/// the monitor asks. Failures end the run and are stored in the trace.
pub(crate) fn drive<S>(
    mut monitor: Monitor<'_>,
    fallback: (Vector, Vector),
    iters: u64,
    init: impl FnOnce() -> Result<S>,
    xy: impl Fn(&S) -> (&Vector, &Vector),
    mut step: impl FnMut(&S) -> Result<S>,
) -> Trace {
    let mut state = match init() {
        Ok(s) => s,
        Err(e) => {
            return monitor.finish(
                Some(Abort {
                    t: 0,
                    message: e.to_string(),
                }),
                fallback.0,
                fallback.1,
            )
        }
    };
    let mut abort = None;
    {
        let (x, y) = xy(&state);
        if let Err(e) = monitor.record(0, x, y) {
            abort = Some(Abort {
                t: 0,
                message: e.to_string(),
            });
        }
    }
    if abort.is_none() {
        for t in 1..=iters {
            let outcome = step(&state).and_then(|next| {
                state = next;
                if monitor.due(t, t == iters) {
                    let (x, y) = xy(&state);
                    monitor.record(t, x, y)
                } else {
                    Ok(())
                }
            });
            if let Err(e) = outcome {
                abort = Some(Abort {
                    t,
                    message: e.to_string(),
                });
                break;
            }
        }
    }
    let (x, y) = xy(&state);
    let (x, y) = (x.clone(), y.clone());
    monitor.finish(abort, x, y)
}

/// Warm start from the oracle's initial point, then `cfg.iters` steps.
pub fn run_adambo(
    cfg: &AdamBOConfig,
    oracle: &dyn BilevelOracle,
    streams: &mut RunStreams,
    monitor: Monitor<'_>,
) -> Result<Trace> {
    cfg.validate()?;
    let (x1, y0) = oracle.initial_point();
    let fallback = (x1.clone(), y0.clone());
    let mut warm = streams.warm.clone();
    let mut y1 = || sgd_warm_start(oracle, &x1, &y0, cfg.gamma, cfg.t0, &mut warm);
    let trace = match cfg.form {
        UpdateForm::Raw => drive(
            monitor,
            fallback,
            cfg.iters,
            || Ok(AdamBOState::new(x1.clone(), y1()?)),
            |s: &AdamBOState| (&s.x, &s.y),
            |s| adambo_step(s, oracle, cfg, streams),
        ),
        UpdateForm::Rescaled => drive(
            monitor,
            fallback,
            cfg.iters,
            || Ok(RescaledState::new(x1.clone(), y1()?)),
            |s: &RescaledState| (&s.x, &s.y),
            |s| adambo_step_rescaled(s, oracle, cfg, streams),
        ),
    };
    Ok(trace)
}
