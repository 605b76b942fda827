mod common;

use adambo_core::adambo::bias_correction;
use adambo_core::linalg::gaussian_vector;
use adambo_core::problems::{QuadraticBilevel, QuadraticParams};
use adambo_core::vr_adambo::theorem_couplings;
use adambo_core::{
    estimate_hypergradient, exact_neumann_expectation, run_vr_adambo, sgd_warm_start, snag_run,
    storm_update, vr_adambo_step, vr_init, BilevelOracle, Error, HypergradSample, KeyStream,
    MetricsConfig, Monitor, NeumannConfig, RunStreams, VRAdamBOConfig, Vector,
};
use common::{noiseless_params, quadratic};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn vr(eta: f64, gamma: f64) -> VRAdamBOConfig {
    VRAdamBOConfig {
        eta,
        gamma,
        ..VRAdamBOConfig::default()
    }
}

/// `E[∇̂φ(x, y)]` on a quadratic instance, from the dense series.
fn expected_estimate(o: &QuadraticBilevel, x: &Vector, y: &Vector, q: usize) -> Vector {
    let p = exact_neumann_expectation(&o.spec().h, q, o.constants().l_g1).unwrap();
    o.grad_x_f(x, y) + o.spec().b.transpose() * (p * o.grad_y_f(x, y))
}

#[test]
fn snag_zero_steps_is_identity() {
    let o = quadratic(&QuadraticParams::default(), 1);
    let (x, y0) = o.initial_point();
    assert_eq!(snag_run(&o, &x, &y0, 0.1, 0.5, 0, &mut KeyStream::new(0)).unwrap(), y0);
}

#[test]
fn snag_without_momentum_is_sgd_on_same_keys() {
    let o = quadratic(&QuadraticParams::default(), 2);
    let (x, y0) = o.initial_point();
    let a = snag_run(&o, &x, &y0, 0.1, 0.0, 40, &mut KeyStream::new(5)).unwrap();
    let b = sgd_warm_start(&o, &x, &y0, 0.1, 40, &mut KeyStream::new(5)).unwrap();
    assert_eq!(a, b);
}

#[test]
fn snag_reaches_predicted_accuracy() {
    let o = quadratic(&noiseless_params(1.0, 4.0, 5, 12), 3);
    let (mu, gamma) = (1.0, 1.0 / 8.0);
    let x = Vector::from_element(5, 0.3);
    let y0 = gaussian_vector(12, 1.0, &mut ChaCha8Rng::seed_from_u64(3));
    let ys = o.y_star(&x);
    let d0 = (&y0 - &ys).norm_squared();
    let rate = 1.0 - (mu * gamma as f64).sqrt() / 4.0;
    let steps = ((1e-6 / (3.0 / (mu * gamma) * d0)).ln() / rate.ln()).ceil() as u64;
    let y = snag_run(&o, &x, &y0, gamma, 0.5, steps, &mut KeyStream::new(0)).unwrap();
    assert!((y - ys).norm_squared() <= 1e-6);
}

fn first_hit(mut dist_after: impl FnMut(u64) -> f64, cap: u64) -> Option<u64> {
    (1..cap).find(|&k| dist_after(k) <= 1e-6)
}

#[test]
fn snag_beats_gradient_descent_when_ill_conditioned() {
    let o = quadratic(&noiseless_params(0.04, 4.0, 3, 16), 4);
    let gamma = 1.0 / 8.0;
    let root = (0.04 * gamma as f64).sqrt();
    let alpha = (1.0 - root) / (1.0 + root);
    let x = Vector::zeros(3);
    let ys = o.y_star(&x);
    let y0 = Vector::zeros(16);
    let snag = first_hit(
        |k| (snag_run(&o, &x, &y0, gamma, alpha, k, &mut KeyStream::new(0)).unwrap() - &ys).norm(),
        5_000,
    )
    .expect("SNAG converges");
    let mut y = y0.clone();
    let gd = first_hit(
        |_| {
            y = sgd_warm_start(&o, &x, &y, gamma, 1, &mut KeyStream::new(0)).unwrap();
            (&y - &ys).norm()
        },
        100_000,
    )
    .expect("GD converges");
    assert!(snag < gd, "snag {snag} vs gd {gd}");
}

#[test]
fn storm_examples() {
    let m = Vector::from_vec(vec![1.0, 2.0]);
    let now = Vector::from_vec(vec![0.5, -1.0]);
    let prev = Vector::from_vec(vec![3.0, 3.0]);
    assert_eq!(storm_update(&m, &now, &prev, 1.0).unwrap(), now);
    let out = storm_update(&m, &now, &prev, 0.25).unwrap();
    assert_eq!(out, Vector::from_vec(vec![0.5 + 0.75 * -2.0, -1.0 + 0.75 * -1.0]));
    // Stationary point with m = grad_now is a fixed point.
    assert_eq!(storm_update(&now, &now, &now, 0.3).unwrap(), now);
    assert!(matches!(
        storm_update(&Vector::zeros(3), &now, &prev, 0.5),
        Err(Error::Dim { .. })
    ));
}

#[test]
fn theorem_coupling_helper() {
    assert_eq!(theorem_couplings(0.01).unwrap(), (0.1, 10));
    assert_eq!(theorem_couplings(1.0).unwrap(), (1.0, 1));
    assert!(theorem_couplings(0.0).is_err());
}

#[test]
fn deterministic_momentum_error_contracts_geometrically() {
    let o = quadratic(&noiseless_params(1.0, 2.0, 6, 6), 5);
    let c = vr(1e-2, 0.25);
    let (x, y0) = o.initial_point();
    let mut streams = RunStreams::from_seed(5);
    let mut s = vr_init(&o, &c, &x, &y0, &mut streams).unwrap();
    let offset = Vector::from_element(6, 1.0);
    s.m += &offset;
    let e1 = offset.norm();
    for k in 1..=500 {
        s = vr_adambo_step(&s, &o, &c, &mut streams).unwrap();
        let err = (&s.m - expected_estimate(&o, &s.x, &s.y_avg, c.q)).norm();
        let predicted = e1 * (1.0 - c.beta).powi(k);
        assert!((err - predicted).abs() <= 1e-9 * e1.max(1.0), "step {k}: {err} vs {predicted}");
    }
}

#[test]
fn storm_error_decomposition_holds_exactly() {
    let o = quadratic(&QuadraticParams::default(), 6);
    let c = vr(1e-2, 0.25);
    let (x, y0) = o.initial_point();
    let mut streams = RunStreams::from_seed(6);
    let mut s = vr_init(&o, &c, &x, &y0, &mut streams).unwrap();
    let nc = NeumannConfig::new(c.q, 2.0).unwrap();
    for _ in 0..100 {
        let eps_prev = &s.m - expected_estimate(&o, &s.x, &s.y_avg, c.q);
        let mut replay = streams.clone();
        let next = vr_adambo_step(&s, &o, &c, &mut streams).unwrap();
        // Reconstruct the shared sample from the replayed stream.
        if (next.t) % c.interval == 0 {
            for _ in 0..c.snag_steps {
                replay.lower.next_key();
            }
        }
        let sample = HypergradSample::draw(&mut replay.upper, c.q);
        let now = estimate_hypergradient(&o, &next.x, &next.y_avg, &nc, &sample).unwrap();
        let prev = estimate_hypergradient(&o, &s.x, &s.y_avg, &nc, &sample).unwrap();
        let w = (&now - expected_estimate(&o, &next.x, &next.y_avg, c.q))
            - (&prev - expected_estimate(&o, &s.x, &s.y_avg, c.q)) * (1.0 - c.beta);
        let eps = &next.m - expected_estimate(&o, &next.x, &next.y_avg, c.q);
        let resid = (&eps - (eps_prev * (1.0 - c.beta) + w)).amax();
        assert!(resid <= 1e-12 * eps.amax().max(1.0), "{resid}");
        s = next;
    }
}

/// With every variance-reduction feature off, the method reduces to a
/// memoryless Adam step followed by one lower SGD step at the new point.
#[test]
fn degenerate_configuration_is_plain_single_sample_adam() {
    let o = quadratic(&QuadraticParams::default(), 7);
    let c = VRAdamBOConfig {
        interval: 1,
        snag_steps: 1,
        alpha_nes: 0.0,
        nu: 1.0,
        beta: 1.0,
        s1: 1,
        ..vr(1e-2, 0.2)
    };
    let nc = NeumannConfig::new(c.q, o.constants().l_g1).unwrap();
    let (x1, y0) = o.initial_point();
    let mut a_streams = RunStreams::from_seed(7);
    let mut s = vr_init(&o, &c, &x1, &y0, &mut a_streams).unwrap();

    let mut streams = RunStreams::from_seed(7);
    let mut y = sgd_warm_start(&o, &x1, &y0, c.gamma, c.t0, &mut streams.warm).unwrap();
    let mut x = x1.clone();
    let mut g = estimate_hypergradient(&o, &x, &y, &nc, &HypergradSample::draw(&mut streams.init, c.q)).unwrap();
    let mut v = g.map(|e| e * e) * c.beta_sq;
    let mut v_hat = g.map(|e| e * e);
    for t in 1..=200u64 {
        x -= g.zip_map(&v_hat, |m, vh| c.eta * m / (vh.sqrt() + c.lambda));
        let gy = o.sample_grad_y_g(&x, &y, streams.lower.next_key());
        y -= gy * c.gamma;
        g = estimate_hypergradient(&o, &x, &y, &nc, &HypergradSample::draw(&mut streams.upper, c.q)).unwrap();
        v = v * (1.0 - c.beta_sq) + g.map(|e| e * e) * c.beta_sq;
        v_hat = &v / bias_correction(c.beta_sq, t + 1);

        s = vr_adambo_step(&s, &o, &c, &mut a_streams).unwrap();
        assert!((&s.x - &x).amax() <= 1e-12, "t = {t}");
        assert_eq!(s.y, y);
        assert!((&s.m - &g).amax() <= 1e-12);
    }
}

#[test]
fn noiseless_seed_ignores_batch_size() {
    let o = quadratic(&noiseless_params(1.0, 2.0, 5, 5), 8);
    let (x, y0) = o.initial_point();
    let seed_m = |s1| {
        let c = VRAdamBOConfig { s1, ..vr(1e-3, 0.25) };
        vr_init(&o, &c, &x, &y0, &mut RunStreams::from_seed(8)).unwrap().m
    };
    let one = seed_m(1);
    for s1 in [2, 16, 64] {
        assert!((seed_m(s1) - &one).amax() <= 1e-13);
    }
}

#[test]
fn seed_variance_scales_inversely_with_batch() {
    let p = QuadraticParams {
        sigma_f: 0.1,
        ..QuadraticParams::default()
    };
    let o = quadratic(&p, 9);
    let (x, y0) = o.initial_point();
    let mut scaled = Vec::new();
    for s1 in [1usize, 16, 256] {
        let c = VRAdamBOConfig { s1, t0: 0, ..vr(1e-3, 0.25) };
        let draws: Vec<Vector> = (0..200)
            .map(|rep| vr_init(&o, &c, &x, &y0, &mut RunStreams::from_seed(1000 + rep)).unwrap().m)
            .collect();
        let mean = draws.iter().fold(Vector::zeros(10), |a, d| a + d) / 200.0;
        let var = draws.iter().map(|d| (d - &mean).norm_squared()).sum::<f64>() / 199.0;
        scaled.push(var * s1 as f64);
    }
    let lo = scaled.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = scaled.iter().cloned().fold(0.0, f64::max);
    assert!(hi / lo <= 1.5, "{scaled:?}");
}

#[test]
fn averaging_telescopes_and_invariants_hold() {
    let o = quadratic(&QuadraticParams::default(), 10);
    let c = vr(1e-2, 0.25);
    let (x, y0) = o.initial_point();
    let mut streams = RunStreams::from_seed(10);
    let mut s = vr_init(&o, &c, &x, &y0, &mut streams).unwrap();
    let y_avg1 = s.y_avg.clone();
    let mut raw = Vec::new();
    for t in 2..=101u64 {
        let next = vr_adambo_step(&s, &o, &c, &mut streams).unwrap();
        assert_eq!(next.t, t);
        if t % c.interval != 0 {
            assert_eq!(next.y, s.y);
        }
        assert!(next.v.iter().all(|&v| v >= 0.0));
        assert!((&next.x - &s.x).norm() <= c.eta / c.lambda * s.m.norm());
        assert_eq!(next.prev_x, s.x);
        raw.push(next.y.clone());
        let mut unrolled = &y_avg1 * (1.0 - c.nu).powi(t as i32 - 1);
        for (i, yi) in raw.iter().enumerate() {
            unrolled += yi * (c.nu * (1.0 - c.nu).powi((t as usize - 2 - i) as i32));
        }
        assert!((unrolled - &next.y_avg).amax() <= 1e-12 * next.y_avg.amax().max(1.0));
        s = next;
    }
}

#[test]
fn quadratic_running_minimum_drops_tenfold() {
    let o = quadratic(&QuadraticParams::default(), 11);
    let c = VRAdamBOConfig {
        iters: 5000,
        ..vr(3e-3, 0.1)
    };
    let m = Monitor::new(&o, MetricsConfig { every: 50, ..MetricsConfig::default() }, "r", "vr_adambo", 11);
    let trace = run_vr_adambo(&c, &o, &mut RunStreams::from_seed(11), m).unwrap();
    let g0 = trace.records[0].grad_norm.unwrap();
    let best = trace.min_grad_norm().unwrap();
    assert!(g0 / best >= 10.0, "{g0} -> {best}");
}

#[test]
fn invalid_configs_are_rejected() {
    let o = quadratic(&QuadraticParams::default(), 12);
    let (x, y0) = o.initial_point();
    for bad in [
        VRAdamBOConfig { s1: 0, ..VRAdamBOConfig::default() },
        VRAdamBOConfig { nu: 0.0, ..VRAdamBOConfig::default() },
        VRAdamBOConfig { alpha_nes: 1.0, ..VRAdamBOConfig::default() },
        VRAdamBOConfig { interval: 0, ..VRAdamBOConfig::default() },
    ] {
        assert!(vr_init(&o, &bad, &x, &y0, &mut RunStreams::from_seed(0)).is_err());
    }
}
