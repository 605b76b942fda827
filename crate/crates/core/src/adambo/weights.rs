//! Bias-correction rates and the scalar sequences built from them.

use crate::error::{Error, Result};

/// `1 − (1 − b)^t`, accurate for tiny `b` and huge `t`.
pub fn bias_correction(b: f64, t: u64) -> f64 {
    if b >= 1.0 {
        return 1.0;
    }
    -(t as f64 * (-b).ln_1p()).exp_m1()
}

/// `α_t = β / (1 − (1−β)^t)`.
pub fn alpha_schedule(beta: f64, t: u64) -> Result<f64> {
    if t == 0 {
        return Err(Error::Domain("alpha_schedule is defined for t >= 1".into()));
    }
    if !(beta > 0.0 && beta <= 1.0) {
        return Err(Error::Domain(format!("beta must lie in (0, 1], got {beta}")));
    }
    Ok(rate(beta, t))
}

/// Like [`alpha_schedule`] but total: `α_1 = 1` for every `b`, and `b = 0`
/// freezes the average after the first step.
pub(crate) fn rate(b: f64, t: u64) -> f64 {
    if t <= 1 {
        1.0
    } else if b == 0.0 {
        0.0
    } else {
        b / bias_correction(b, t)
    }
}

/// Weights `d_{t,j} = α_t (1−β)^{t−j}` for `j = 1..=t`, so that
/// `m̂_t = Σ_j d_{t,j} g_j`.
pub fn momentum_weights(beta: f64, t: u64) -> Result<Vec<f64>> {
    let a = alpha_schedule(beta, t)?;
    let mut w = Vec::with_capacity(t as usize);
    let mut decay = a;
    for _ in 0..t {
        w.push(decay);
        decay *= 1.0 - beta;
    }
    w.reverse();
    Ok(w)
}

/// Compensated (Neumaier) sum.
pub fn neumaier_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// `Σ_j d_{t,j}`, evaluated in closed form per term and summed with
/// compensation. Equals 1 up to rounding.
pub fn momentum_weight_sum(beta: f64, t: u64) -> Result<f64> {
    let a = alpha_schedule(beta, t)?;
    let ln_decay = (-beta).ln_1p();
    Ok(neumaier_sum(
        (0..t).map(|k| if beta >= 1.0 { if k == 0 { a } else { 0.0 } } else { a * (k as f64 * ln_decay).exp() }),
    ))
}

/// `max_{t ≤ t_max} t · α_t · (1−β)^{t−1}` (bounded by 1).
pub fn decayed_alpha_max(beta: f64, t_max: u64) -> Result<f64> {
    alpha_schedule(beta, 1)?;
    let ln_decay = if beta >= 1.0 { f64::NEG_INFINITY } else { (-beta).ln_1p() };
    let mut worst: f64 = 0.0;
    for t in 1..=t_max {
        let decay = if t == 1 { 1.0 } else { ((t - 1) as f64 * ln_decay).exp() };
        worst = worst.max(t as f64 * rate(beta, t) * decay);
    }
    Ok(worst)
}

/// `32 + 16 ln(1/β)`.
pub fn discounted_alpha_bound(beta: f64) -> f64 {
    32.0 + 16.0 * (1.0 / beta).ln()
}

/// `max_{t ≤ t_max} Σ_{i ≤ t} (1−β)^{t−i} α_i`, via `S_t = (1−β) S_{t−1} + α_t`.
pub fn discounted_alpha_max(beta: f64, t_max: u64) -> Result<f64> {
    alpha_schedule(beta, 1)?;
    let mut s = 0.0;
    let mut worst: f64 = 0.0;
    for t in 1..=t_max {
        s = (1.0 - beta) * s + rate(beta, t);
        worst = worst.max(s);
    }
    Ok(worst)
}

/// `3(1 + β² T)`.
pub fn alpha_square_bound(beta: f64, t: u64) -> f64 {
    3.0 * (1.0 + beta * beta * t as f64)
}

/// `max_{2 ≤ T ≤ t_max} Σ_{t=2}^T α_t² / (3(1 + β²T))`; at most 1.
pub fn alpha_square_ratio_max(beta: f64, t_max: u64) -> Result<f64> {
    alpha_schedule(beta, 1)?;
    let mut s = 0.0;
    let mut worst: f64 = 0.0;
    for t in 2..=t_max {
        let a = rate(beta, t);
        s += a * a;
        worst = worst.max(s / alpha_square_bound(beta, t));
    }
    Ok(worst)
}
