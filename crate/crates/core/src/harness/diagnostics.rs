//! Executable property suites with machine-readable margins.

use std::fmt::Write as _;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::adambo::{
    adambo_step, adambo_step_rescaled, alpha_schedule, alpha_square_ratio_max,
    decayed_alpha_max, discounted_alpha_bound, discounted_alpha_max, momentum_weight_sum,
    momentum_weights, sgd_warm_start, AdamBOConfig, AdamBOState, RescaledState,
};
use crate::error::{Error, Result};
use crate::hypergradient::{
    estimate_hypergradient, exact_neumann_expectation, neumann_apply, neumann_bias_bound,
    HypergradSample, NeumannConfig,
};
use crate::linalg::{
    gaussian_vector, linspace, max_abs_diff, spectral_norm, symmetric_with_spectrum, unit_sphere,
    Matrix, Vector,
};
use crate::oracle::{oracle_selfcheck, BilevelOracle};
use crate::problems::{
    generate_imbalanced_dataset, make_auc_bilevel, make_hyperrep_bilevel, make_quadratic_bilevel,
    AUCBilevelSpec, HyperRepSpec, QuadraticBilevel, QuadraticBilevelSpec, QuadraticParams,
};
use crate::sampling::{KeyStream, RunStreams};
use crate::trace::fmt_f64;
use crate::vr_adambo::{snag_run, vr_adambo_step, vr_init, VRAdamBOConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    Lemmas,
    Neumann,
    Oracles,
    Equivalence,
}

impl Suite {
    pub const ALL: [Suite; 4] = [Suite::Lemmas, Suite::Neumann, Suite::Oracles, Suite::Equivalence];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Lemmas => "lemmas",
            Suite::Neumann => "neumann",
            Suite::Oracles => "oracles",
            Suite::Equivalence => "equivalence",
        }
    }
}

impl FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Suite::ALL
            .into_iter()
            .find(|x| x.name() == s)
            .ok_or_else(|| {
                Error::Domain(format!(
                    "unknown suite `{s}` (expected lemmas, neumann, oracles or equivalence)"
                ))
            })
    }
}

/// One checked property: passes iff `measured ≤ bound`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagnosticLine {
    pub suite: &'static str,
    pub property: String,
    pub passed: bool,
    pub measured: f64,
    pub bound: f64,
}

fn line(suite: Suite, property: impl Into<String>, measured: f64, bound: f64) -> DiagnosticLine {
    DiagnosticLine {
        suite: suite.name(),
        property: property.into(),
        passed: measured <= bound,
        measured,
        bound,
    }
}

pub fn diagnostics_csv(lines: &[DiagnosticLine]) -> String {
    let mut out = String::from("suite,property,status,measured,bound\n");
    for l in lines {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            l.suite,
            l.property,
            if l.passed { "pass" } else { "fail" },
            fmt_f64(l.measured),
            fmt_f64(l.bound)
        );
    }
    out
}

pub fn run_diagnostics(suite: Suite) -> Result<Vec<DiagnosticLine>> {
    match suite {
        Suite::Lemmas => lemmas(),
        Suite::Neumann => neumann(),
        Suite::Oracles => oracles(),
        Suite::Equivalence => equivalence(),
    }
}

const BETAS: [f64; 4] = [0.5, 0.1, 0.01, 1e-4];
const T_MAX: u64 = 1_000_000;

fn lemmas() -> Result<Vec<DiagnosticLine>> {
    let s = Suite::Lemmas;
    let mut out = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for beta in BETAS {
        let mut sum_gap: f64 = 0.0;
        for t in [1, 2, 10, 100, 1_000, 10_000, 100_000, T_MAX] {
            sum_gap = sum_gap.max((momentum_weight_sum(beta, t)? - 1.0).abs());
        }
        out.push(line(s, format!("weights_sum_to_one beta={beta}"), sum_gap, 1e-12));

        // Recursive bias-corrected average against the explicit weighted sum.
        let horizon = 5_000u64;
        let g: Vec<f64> = (0..horizon).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut m_hat = 0.0;
        let mut gap: f64 = 0.0;
        for t in 1..=horizon {
            let a = alpha_schedule(beta, t)?;
            m_hat = (1.0 - a) * m_hat + a * g[t as usize - 1];
            if [1, 2, 3, 10, 100, 1_000, horizon].contains(&t) {
                let w = momentum_weights(beta, t)?;
                let direct: f64 = w.iter().zip(&g).map(|(w, g)| w * g).sum();
                gap = gap.max((direct - m_hat).abs());
            }
        }
        out.push(line(s, format!("weights_closed_form beta={beta}"), gap, 1e-12));

        out.push(line(
            s,
            format!("t_alpha_decay_le_1 beta={beta}"),
            decayed_alpha_max(beta, T_MAX)?,
            1.0 + 1e-12,
        ));
        out.push(line(
            s,
            format!("discounted_alpha_sum beta={beta}"),
            discounted_alpha_max(beta, T_MAX)?,
            discounted_alpha_bound(beta),
        ));
        out.push(line(
            s,
            format!("alpha_square_sum_ratio beta={beta}"),
            alpha_square_ratio_max(beta, T_MAX)?,
            1.0,
        ));
    }
    Ok(out)
}

/// The small hand-built instance: `H = 1.5`, `B = 1`, `f = ½‖(x, y)‖² + y`,
/// `μ = 1`, `l_g1 = 2`, so `‖∇_y f(0, y*(0))‖ = 1`.
pub fn neumann_test_instance() -> Result<QuadraticBilevel> {
    let spec = QuadraticBilevelSpec {
        h: Matrix::from_element(1, 1, 1.5),
        b: Matrix::from_element(1, 1, 1.0),
        c: Vector::zeros(1),
        a: Matrix::identity(2, 2),
        a_lin: Vector::from_vec(vec![0.0, 1.0]),
        mu: 1.0,
        l_g1: 2.0,
        sigma_f: 0.0,
        sigma_g1: 0.0,
        sigma_g2: 0.0,
        radius: 1.0,
        x_init: Vector::zeros(1),
        y_init: Vector::zeros(1),
    };
    make_quadratic_bilevel(spec, 0)
}

fn noiseless(mu: f64, l: f64, d_x: usize, d_y: usize, seed: u64) -> Result<QuadraticBilevel> {
    let p = QuadraticParams {
        d_x,
        d_y,
        mu,
        l_g1: l,
        sigma_f: 0.0,
        sigma_g1: 0.0,
        sigma_g2: 0.0,
        ..QuadraticParams::default()
    };
    make_quadratic_bilevel(QuadraticBilevelSpec::random(&p, seed)?, seed)
}

fn neumann() -> Result<Vec<DiagnosticLine>> {
    let s = Suite::Neumann;
    let mut out = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let (mut norm_excess, mut inv_excess): (f64, f64) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    for _ in 0..20 {
        let d = rng.random_range(2..=32);
        let mu = rng.random_range(0.1..1.0);
        let l = mu * rng.random_range(1.5..20.0);
        let h = symmetric_with_spectrum(&linspace(mu, l, d), &mut rng);
        let h_inv = h.clone().try_inverse().expect("spd");
        for q in 1..=10 {
            let p = exact_neumann_expectation(&h, q, l)?;
            norm_excess = norm_excess.max(spectral_norm(&p) - 1.0 / mu);
            let bound = (1.0 - mu / l).powi(q as i32) / mu;
            inv_excess = inv_excess.max(spectral_norm(&(p - &h_inv)) - bound);
        }
    }
    out.push(line(s, "expected_P_norm_le_inv_mu", norm_excess, 1e-9));
    out.push(line(s, "expected_P_inverse_gap", inv_excess, 1e-9));

    // Realization-wise norm bound on a noisy instance.
    let p = QuadraticParams {
        d_y: 16,
        sigma_g2: 0.2,
        ..QuadraticParams::default()
    };
    let o = make_quadratic_bilevel(QuadraticBilevelSpec::random(&p, 5)?, 5)?;
    let mut stream = KeyStream::new(0xface);
    let (x, _) = o.initial_point();
    let y = o.y_star(&x);
    let mut worst: f64 = 0.0;
    for i in 0..1000 {
        let q = 1 + i % 8;
        let nc = NeumannConfig::new(q, o.constants().l_g1)?;
        let v = unit_sphere(16, &mut ChaCha8Rng::seed_from_u64(i as u64));
        let sample = HypergradSample::draw(&mut stream, q);
        worst = worst.max(neumann_apply(&o, &x, &y, &v, &nc, &sample)?.norm() * o.constants().mu);
    }
    out.push(line(s, "realized_P_norm_times_mu", worst, 1.0 + 1e-12));

    // Bias at y* on noiseless instances.
    let mut excess: f64 = f64::NEG_INFINITY;
    for seed in 0..5 {
        let o = noiseless(1.0, 3.0, 6, 8, seed)?;
        let x = gaussian_vector(6, 1.0, &mut ChaCha8Rng::seed_from_u64(seed));
        let y = o.y_star(&x);
        let exact = o.exact_hypergradient(&x).expect("quadratic has closed form");
        let mut stream = KeyStream::new(seed);
        for q in 1..=10 {
            let nc = NeumannConfig::new(q, o.constants().l_g1)?;
            let est = estimate_hypergradient(&o, &x, &y, &nc, &HypergradSample::draw(&mut stream, q))?;
            excess = excess.max((est - &exact).norm() - neumann_bias_bound(&o.constants(), q));
        }
    }
    out.push(line(s, "bias_at_y_star_minus_bound", excess, 1e-9));

    let o = neumann_test_instance()?;
    let x = Vector::zeros(1);
    let y = o.y_star(&x);
    let nc = NeumannConfig::new(3, 2.0)?;
    let est = estimate_hypergradient(&o, &x, &y, &nc, &HypergradSample::draw(&mut KeyStream::new(1), 3))?;
    let bias = (est - o.exact_hypergradient(&x).expect("closed form")).norm();
    out.push(line(s, "bias_q3_mu1_l2_test_instance", bias, 0.25));
    Ok(out)
}

fn oracles() -> Result<Vec<DiagnosticLine>> {
    let s = Suite::Oracles;
    let mut out = Vec::new();
    let quad = make_quadratic_bilevel(QuadraticBilevelSpec::random(&QuadraticParams::default(), 1)?, 1)?;
    let auc = make_auc_bilevel(
        AUCBilevelSpec {
            dataset: generate_imbalanced_dataset(400, 5, 0.8, 2)?,
            test: None,
            batch: 16,
            cubic: 0.0,
        },
        2,
    )?;
    let hyper = make_hyperrep_bilevel(
        HyperRepSpec {
            exact_metrics: true,
            ..HyperRepSpec::default()
        },
        3,
    )?;
    let cases: [(&str, &dyn BilevelOracle); 3] = [("quadratic", &quad), ("auc", &auc), ("hyperrep", &hyper)];
    for (name, o) in cases {
        let (dx, dy) = o.dims();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = o.initial_point().0 + gaussian_vector(dx, 0.1, &mut rng);
        let y = gaussian_vector(dy, 0.5, &mut rng);
        let report = oracle_selfcheck(o, &x, &y, 2000, 5.0)?;
        for q in &report.quantities {
            let z = q.max_standard_errors.max(if q.passed { 0.0 } else { f64::INFINITY });
            out.push(line(s, format!("{name}_{}_unbiased_z", q.name), z, 5.0));
        }
        out.push(line(
            s,
            format!("{name}_hvp_symmetry"),
            report.symmetry_residual.max(if report.symmetry_passed { 0.0 } else { f64::INFINITY }),
            1e-10,
        ));
        // Exact hypergradient against central differences of Φ.
        if let Some(g) = o.exact_hypergradient(&x) {
            let fd = crate::oracle::finite_difference_gradient(
                |p| o.objective_phi(p).unwrap_or(f64::NAN),
                &x,
                1e-5,
            )?;
            out.push(line(
                s,
                format!("{name}_hypergradient_vs_fd"),
                max_abs_diff(&g, &fd),
                1e-5 * (1.0 + g.amax()),
            ));
        }
    }
    // y* is (l_g1/μ)-Lipschitz.
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let c = quad.constants();
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let a = gaussian_vector(10, 2.0, &mut rng);
        let b = gaussian_vector(10, 2.0, &mut rng);
        let ratio = (quad.y_star(&a) - quad.y_star(&b)).norm() / (a - b).norm();
        worst = worst.max(ratio);
    }
    out.push(line(s, "quadratic_y_star_lipschitz", worst, c.l_g1 / c.mu));
    Ok(out)
}

fn equivalence() -> Result<Vec<DiagnosticLine>> {
    let s = Suite::Equivalence;
    let mut out = Vec::new();
    let mut gap: f64 = 0.0;
    for inst in 0..10u64 {
        let p = QuadraticParams::default();
        let o = make_quadratic_bilevel(QuadraticBilevelSpec::random(&p, 100 + inst)?, 100 + inst)?;
        let cfg = AdamBOConfig {
            eta: 1e-2,
            gamma: 0.1,
            ..AdamBOConfig::default()
        };
        for seed in 0..3 {
            gap = gap.max(raw_vs_rescaled_gap(&o, &cfg, seed, 100)?);
        }
    }
    out.push(line(s, "raw_vs_rescaled_max_gap", gap, 1e-12));

    // Averaging unrolls exactly.
    let o = make_quadratic_bilevel(QuadraticBilevelSpec::random(&QuadraticParams::default(), 7)?, 7)?;
    let cfg = VRAdamBOConfig {
        eta: 1e-2,
        gamma: 0.1,
        ..VRAdamBOConfig::default()
    };
    let (x1, y0) = o.initial_point();
    let mut streams = RunStreams::from_seed(3);
    let mut st = vr_init(&o, &cfg, &x1, &y0, &mut streams)?;
    let y_avg1 = st.y_avg.clone();
    let mut ys = Vec::new();
    for _ in 0..99 {
        st = vr_adambo_step(&st, &o, &cfg, &mut streams)?;
        ys.push(st.y.clone());
    }
    let nu = cfg.nu;
    let steps = ys.len() as i32;
    let mut unrolled = &y_avg1 * (1.0 - nu).powi(steps);
    for (i, y) in ys.iter().enumerate() {
        unrolled += y * (nu * (1.0 - nu).powi(steps - 1 - i as i32));
    }
    out.push(line(s, "averaging_unrolled_gap", max_abs_diff(&unrolled, &st.y_avg), 1e-12));

    let (snag, gd) = snag_vs_gd_steps()?;
    out.push(line(s, "snag_steps_over_gd_steps_kappa100", snag as f64 / gd as f64, 1.0 - 1e-12));
    Ok(out)
}

/// Largest coordinate gap between the raw and rescaled forms on shared keys.
pub fn raw_vs_rescaled_gap(o: &dyn BilevelOracle, cfg: &AdamBOConfig, seed: u64, steps: u64) -> Result<f64> {
    let (x1, y0) = o.initial_point();
    let mut sa = RunStreams::from_seed(seed);
    let mut sb = sa.clone();
    let y1 = sgd_warm_start(o, &x1, &y0, cfg.gamma, cfg.t0, &mut sa.warm.clone())?;
    let mut a = AdamBOState::new(x1.clone(), y1.clone());
    let mut b = RescaledState::new(x1, y1);
    let mut gap: f64 = 0.0;
    for _ in 0..steps {
        a = adambo_step(&a, o, cfg, &mut sa)?;
        b = adambo_step_rescaled(&b, o, cfg, &mut sb)?;
        gap = gap.max(max_abs_diff(&a.x, &b.x)).max(max_abs_diff(&a.y, &b.y));
    }
    Ok(gap)
}

/// Steps needed by SNAG and by plain gradient descent (same `γ`) to reach
/// `‖y − y*‖ ≤ 1e-6` on a noiseless lower problem with `κ = 100`.
pub fn snag_vs_gd_steps() -> Result<(u64, u64)> {
    let o = noiseless(0.04, 4.0, 4, 20, 31)?;
    let gamma = 1.0 / 8.0;
    let root = (o.constants().mu * gamma).sqrt();
    let alpha = (1.0 - root) / (1.0 + root);
    let x = Vector::zeros(4);
    let y_star = o.y_star(&x);
    let y0 = Vector::zeros(20);
    let mut stream = KeyStream::new(1);
    let mut snag = None;
    for k in 1..20_000 {
        let y = snag_run(&o, &x, &y0, gamma, alpha, k, &mut stream)?;
        if (y - &y_star).norm() <= 1e-6 {
            snag = Some(k);
            break;
        }
    }
    let mut y = y0;
    let mut gd = None;
    for k in 1..200_000 {
        y = sgd_warm_start(&o, &x, &y, gamma, 1, &mut stream)?;
        if (&y - &y_star).norm() <= 1e-6 {
            gd = Some(k);
            break;
        }
    }
    match (snag, gd) {
        (Some(a), Some(b)) => Ok((a, b)),
        _ => Err(Error::Domain("lower solver did not reach 1e-6".into())),
    }
}
