use adambo_core::problems::{make_quadratic_bilevel, QuadraticBilevelSpec, QuadraticParams};
use adambo_core::{
    adambo_step, estimate_hypergradient, vr_adambo_step, vr_init, AdamBOConfig, AdamBOState,
    BilevelOracle, HypergradSample, KeyStream, NeumannConfig, RunStreams, VRAdamBOConfig,
};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

fn instance(d: usize) -> impl BilevelOracle {
    let p = QuadraticParams {
        d_x: d,
        d_y: d,
        ..QuadraticParams::default()
    };
    make_quadratic_bilevel(QuadraticBilevelSpec::random(&p, 1).unwrap(), 1).unwrap()
}

fn hypergradient(c: &mut Criterion) {
    let mut group = c.benchmark_group("hypergradient");
    for d in [10, 100] {
        let o = instance(d);
        let (x, y) = o.initial_point();
        for q in [3, 10] {
            let cfg = NeumannConfig::new(q, o.constants().l_g1).unwrap();
            let mut stream = KeyStream::new(0);
            group.bench_with_input(BenchmarkId::new(format!("d{d}"), q), &q, |b, &q| {
                b.iter(|| {
                    let s = HypergradSample::draw(&mut stream, q);
                    black_box(estimate_hypergradient(&o, &x, &y, &cfg, &s).unwrap())
                })
            });
        }
    }
    group.finish();
}

fn steps(c: &mut Criterion) {
    let o = instance(10);
    let (x, y) = o.initial_point();

    let cfg = AdamBOConfig::default();
    let mut streams = RunStreams::from_seed(0);
    let mut s = AdamBOState::new(x.clone(), y.clone());
    c.bench_function("adambo_step/d10", |b| {
        b.iter(|| {
            s = adambo_step(&s, &o, &cfg, &mut streams).unwrap();
        })
    });

    let cfg = VRAdamBOConfig::default();
    let mut streams = RunStreams::from_seed(0);
    let mut s = vr_init(&o, &cfg, &x, &y, &mut streams).unwrap();
    c.bench_function("vr_adambo_step/d10", |b| {
        b.iter(|| {
            s = vr_adambo_step(&s, &o, &cfg, &mut streams).unwrap();
        })
    });
}

criterion_group!(benches, hypergradient, steps);
criterion_main!(benches);
