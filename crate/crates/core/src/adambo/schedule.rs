//! Step sizes, Neumann order and horizons prescribed by the convergence
//! theorem for a target accuracy `ε` and failure probability `δ`.

use std::f64::consts::E;

use super::{AdamBOConfig, UpdateForm};
use crate::error::{Error, Result};
use crate::oracle::ProblemConstants;

/// Existence-level constants the theorem leaves to the user.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScheduleInputs {
    /// Gradient-norm bound `G`.
    pub g: f64,
    /// Initial suboptimality `Δ₁`.
    pub delta1: f64,
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub big_c2: f64,
    pub sigma_phi: f64,
    pub l0: f64,
    pub l1: f64,
    /// Radius of the relaxed-smoothness neighbourhood; may be infinite.
    pub r: f64,
    pub lambda: f64,
    /// `‖y₀ − y₀*‖`.
    pub y0_dist: f64,
    pub beta_sq: f64,
    /// Overrides the smallest admissible `C_β`.
    pub c_beta: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Schedule {
    pub config: AdamBOConfig,
    pub iota: f64,
    pub c_beta: f64,
    /// `L = L0 + L1 G`.
    pub big_l: f64,
    /// Unrounded `T`.
    pub t_real: f64,
    /// `μ = l_g1`: the series is exact at `Q = 1`.
    pub degenerate_q: bool,
    /// Stochastic oracle calls `T0 + Q·T`.
    pub oracle_calls: f64,
}

fn check_positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && !v.is_nan() {
        Ok(())
    } else {
        Err(Error::Domain(format!("{name} must be positive, got {v}")))
    }
}

/// The smallest admissible `C_β`.
fn c_beta_min(eps: f64, delta: f64, iota: f64, big_l: f64, u: &ScheduleInputs) -> f64 {
    let s4 = u.sigma_phi.powi(4);
    let g2 = u.g * u.g;
    let lam2 = u.lambda * u.lambda;
    let eps4 = eps.powi(4);
    let iota_max = 1.0f64.max(iota.sqrt()).max(iota);
    let inflate = 1.0 + u.sigma_phi * u.sigma_phi * u.g / (u.c1 * u.lambda * eps * eps);
    let common = u.big_c2 * E * u.delta1 * big_l * u.sigma_phi * u.g.powi(3)
        / (u.c1 * u.c2 * delta * lam2 * eps4)
        * inflate
        * iota_max;
    let a = 8.0 * E * s4 * g2 * 1.0f64.max(iota) / (u.c1 * u.c1 * delta * lam2 * eps4);
    let b = 8.0 * common;
    let c = (32.0 * E * s4 * g2 / (u.c1 * u.c1 * delta * lam2 * eps4)).powi(2);
    let d = (48.0 * common).powi(2);
    a.max(b).max(c).max(d)
}

pub fn theorem_schedule(
    epsilon: f64,
    delta: f64,
    consts: &ProblemConstants,
    u: &ScheduleInputs,
) -> Result<Schedule> {
    check_positive("epsilon", epsilon)?;
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::Domain(format!("delta must lie in (0, 1), got {delta}")));
    }
    consts.validate()?;
    for (name, v) in [
        ("G", u.g),
        ("Delta1", u.delta1),
        ("c1", u.c1),
        ("c2", u.c2),
        ("c3", u.c3),
        ("C2", u.big_c2),
        ("sigma_phi", u.sigma_phi),
        ("L0", u.l0),
        ("r", u.r),
        ("lambda", u.lambda),
    ] {
        check_positive(name, v)?;
    }
    if !(u.l1 >= 0.0) || !(u.y0_dist >= 0.0) || !(0.0..=1.0).contains(&u.beta_sq) {
        return Err(Error::Domain("L1, y0_dist must be >= 0 and beta_sq in [0, 1]".into()));
    }
    if consts.sigma_g1 <= 0.0 {
        return Err(Error::Domain(
            "sigma_g1 must be positive: the warm-start horizon is unbounded without lower noise"
                .into(),
        ));
    }

    let iota = (4.0 / delta).ln();
    let big_l = u.l0 + u.l1 * u.g;
    let c_beta = match u.c_beta {
        Some(c) => {
            check_positive("C_beta", c)?;
            c
        }
        None => c_beta_min(epsilon, delta, iota, big_l, u),
    };
    let ln_cb = c_beta.ln();

    let beta = 1.0f64.min(
        u.c1 * u.lambda * epsilon * epsilon
            / (u.sigma_phi * u.sigma_phi * u.g * 1.0f64.max(iota.sqrt()).max(ln_cb)),
    );
    let gamma = 2.0 * beta / consts.mu;

    let ln_inv_beta = (1.0 / beta).ln();
    let eta = u.c2
        * (u.r * u.lambda / u.g)
            .min(u.lambda / (6.0 * big_l))
            .min(
                u.sigma_phi * u.lambda * beta
                    / (big_l * u.g * 1.0f64.max(iota.sqrt()).max(ln_inv_beta).max(ln_cb)),
            )
            .min(u.lambda.powf(1.5) * beta / (big_l * u.g.sqrt()));

    let ratio = consts.mu / consts.l_g1;
    let degenerate_q = ratio >= 1.0;
    let q = if degenerate_q {
        1
    } else {
        let ln_base = (-ratio).ln_1p();
        let tail = u.c3 * u.lambda * consts.mu.powi(2) * epsilon * epsilon
            / (u.g * consts.l_g1.powi(2) * consts.l_f0.powi(2));
        let need = 0.5 * (beta.ln() / ln_base).max(tail.ln() / ln_base);
        need.ceil().max(1.0) as usize
    };

    let t0 = if beta >= 1.0 || u.y0_dist == 0.0 {
        0.0
    } else {
        let arg = consts.sigma_g1.powi(2) * beta / (consts.mu.powi(2) * u.y0_dist.powi(2));
        (arg.ln() / (-beta).ln_1p()).ceil().max(0.0)
    };

    let t_real = (1.0 / (beta * beta)).max(u.big_c2 * u.delta1 * u.g / (eta * epsilon * epsilon));
    let iters = to_count(t_real.ceil());
    let oracle_calls = t0 + q as f64 * t_real.ceil();

    Ok(Schedule {
        config: AdamBOConfig {
            beta,
            beta_sq: u.beta_sq,
            eta,
            gamma,
            lambda: u.lambda,
            t0: to_count(t0),
            iters,
            q,
            form: UpdateForm::Raw,
        },
        iota,
        c_beta,
        big_l,
        t_real,
        degenerate_q,
        oracle_calls,
    })
}

fn to_count(v: f64) -> u64 {
    if v >= u64::MAX as f64 {
        u64::MAX
    } else {
        v as u64
    }
}
