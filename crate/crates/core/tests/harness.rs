use std::fs;
use std::path::Path;

use adambo_core::harness::summary::RUNNING_MIN;
use adambo_core::harness::{
    emit_plot_data, parse_config, run_diagnostics, run_experiment, run_sweep, summarize, Algo,
    ProblemConfig, Suite, XAxis, THREADS_ENV,
};
use adambo_core::{Error, MetricsConfig, Monitor, Trace, TraceRecord, Vector};
use sha2::{Digest, Sha256};

fn digest(path: &Path) -> Vec<u8> {
    Sha256::digest(fs::read(path).unwrap()).to_vec()
}

fn config(text: &str, out: &Path) -> adambo_core::harness::ExperimentConfig {
    let mut cfg = parse_config(text).unwrap();
    cfg.out_dir = out.to_path_buf();
    cfg
}

#[test]
fn defaults_and_parsing_examples() {
    let cfg = parse_config("").unwrap();
    assert_eq!(cfg.algo, Algo::AdamBO);
    assert_eq!(cfg.seeds, vec![0]);
    match &cfg.problem {
        ProblemConfig::Quadratic(p) => assert_eq!((p.d_x, p.d_y), (10, 10)),
        other => panic!("unexpected default problem {other:?}"),
    }
    let cfg = parse_config("adambo.beta = 0.1\nadambo.lambda = 1e-8\n").unwrap();
    assert_eq!(cfg.adambo.beta, 0.1);
    assert_eq!(cfg.adambo.lambda, 1e-8);
    let err = parse_config("adambo.bta = 0.1").unwrap_err();
    assert!(matches!(err, Error::Config { line: 1, .. }));
    assert!(err.to_string().contains("unknown key"));
    assert!(matches!(parse_config("# c\nadambo.eta = fast").unwrap_err(), Error::Config { line: 2, .. }));
}

#[test]
fn config_text_round_trips() {
    let text = "problem.kind = auc\nauc.n_train = 300\nauc.p = 0.9\nexperiment.algo = vr_adambo\nexperiment.seeds = 3, 4\nvr_adambo.nu = 0.2\n";
    let cfg = parse_config(text).unwrap();
    assert_eq!(parse_config(&cfg.to_text()).unwrap(), cfg);
}

#[test]
fn ten_steps_give_eleven_rows() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config("adambo.iters = 10\nexperiment.seeds = 0\n", dir.path());
    let out = run_experiment(&cfg).unwrap();
    let trace = fs::read_to_string(dir.path().join("trace_seed0.csv")).unwrap();
    let lines: Vec<&str> = trace.lines().collect();
    assert_eq!(lines.len(), 1 + 11);
    assert!(lines[0].starts_with("run_id,algo,t,"));
    assert!(out.files.iter().any(|f| f.ends_with("summary.csv")));
    assert!(dir.path().join("aggregate.csv").exists());
    assert!(dir.path().join("config.txt").exists());
    assert!(!trace.contains('\r'));
}

#[test]
fn reruns_are_byte_identical() {
    let text = "adambo.iters = 200\nexperiment.seeds = 0, 1, 2\nexperiment.metrics_every = 10\n";
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    run_experiment(&config(text, a.path())).unwrap();
    run_experiment(&config(text, b.path())).unwrap();
    for s in 0..3 {
        let name = format!("trace_seed{s}.csv");
        assert_eq!(digest(&a.path().join(&name)), digest(&b.path().join(&name)));
    }
    assert_ne!(
        digest(&a.path().join("trace_seed0.csv")),
        digest(&a.path().join("trace_seed1.csv"))
    );
}

#[test]
fn thread_cap_does_not_change_outputs() {
    let text = "experiment.algo = vr_adambo\nvr_adambo.iters = 50\nexperiment.seeds = 0, 1, 2, 3\n";
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    run_experiment(&config(text, a.path())).unwrap();
    std::env::set_var(THREADS_ENV, "1");
    let res = run_experiment(&config(text, b.path()));
    std::env::remove_var(THREADS_ENV);
    res.unwrap();
    for s in 0..4 {
        let name = format!("trace_seed{s}.csv");
        assert_eq!(digest(&a.path().join(&name)), digest(&b.path().join(&name)));
    }
}

#[test]
fn sweep_ranks_sixteen_points() {
    let dir = tempfile::tempdir().unwrap();
    let base = "adambo.iters = 40\nexperiment.metrics_every = 40\n";
    let grid = "adambo.eta = 1e-4, 1e-3, 1e-2, 3e-2\nadambo.gamma = 1e-3, 1e-2, 0.1, 0.2\n";
    let out = run_sweep(base, grid, dir.path()).unwrap();
    assert_eq!(out.points.len(), 16);
    let finals: Vec<f64> = out.points.iter().map(|p| p.mean_final_grad_norm.unwrap()).collect();
    assert!(finals.windows(2).all(|w| w[0] <= w[1]), "{finals:?}");
    let csv = fs::read_to_string(&out.summary).unwrap();
    assert_eq!(csv.lines().count(), 17);
    let mut indices: Vec<usize> = out.points.iter().map(|p| p.index).collect();
    indices.sort_unstable();
    assert_eq!(indices, (0..16).collect::<Vec<_>>());
    assert!(dir.path().join("point15").join("trace_seed0.csv").exists());
}

#[test]
fn diverging_runs_are_reported_not_fatal() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(
        "experiment.algo = masoba_like\nbaseline.eta = 1e200\nbaseline.iters = 20\nexperiment.seeds = 0, 1\n",
        dir.path(),
    );
    let out = run_experiment(&cfg).unwrap();
    assert!(out.completed().is_empty());
    let summary = fs::read_to_string(dir.path().join("summary.csv")).unwrap();
    assert_eq!(summary.matches(",aborted,").count(), 2, "{summary}");
    assert!(!dir.path().join("aggregate.csv").exists());
}

#[test]
fn gamma_above_cap_is_a_warning() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config("adambo.gamma = 0.9\nadambo.iters = 5\n", dir.path());
    let out = run_experiment(&cfg).unwrap();
    assert!(out.warnings.iter().any(|w| w.contains("gamma")));
    assert_eq!(out.completed().len(), 1);
}

#[test]
fn running_minimum_mean_is_monotone_over_seeds() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(
        "adambo.iters = 500\nadambo.eta = 3e-3\nadambo.gamma = 0.1\nexperiment.metrics_every = 25\nexperiment.seeds = 0, 1, 2, 3, 4\n",
        dir.path(),
    );
    let out = run_experiment(&cfg).unwrap();
    let traces: Vec<Trace> = out.completed().into_iter().cloned().collect();
    assert_eq!(traces.len(), 5);
    let table = summarize(&traces).unwrap();
    let means: Vec<f64> = table.metric(RUNNING_MIN).map(|r| r.mean).collect();
    assert_eq!(means.len(), 21);
    assert!(means.windows(2).all(|w| w[1] <= w[0]));
    assert!(table.metric("grad_norm").all(|r| r.n == 5));
}

fn record(t: u64, g: f64, elapsed_ms: u64) -> TraceRecord {
    TraceRecord {
        run_id: "r".into(),
        algo: "adambo".into(),
        t,
        phi: None,
        grad_norm: Some(g),
        lower_err: None,
        hypergrad_bias: None,
        train_auc: None,
        test_auc: None,
        elapsed_ms,
    }
}

fn synthetic(id: &str, values: &[(u64, f64)]) -> Trace {
    Trace {
        run_id: id.into(),
        algo: "adambo".into(),
        grad_norm_proxy: false,
        records: values.iter().map(|&(t, g)| TraceRecord { run_id: id.into(), ..record(t, g, t) }).collect(),
        aborted: None,
        final_x: Vector::zeros(1),
        final_y: Vector::zeros(1),
    }
}

#[test]
fn summary_statistics_examples() {
    let single = summarize(&[synthetic("a", &[(0, 5.0), (100, 1.0)])]).unwrap();
    assert!(single.rows.iter().all(|r| r.std == 0.0));
    let two = summarize(&[synthetic("a", &[(100, 1.0)]), synthetic("b", &[(100, 3.0)])]).unwrap();
    let row = two.get("grad_norm", 100).unwrap();
    assert_eq!((row.mean, row.min, row.max, row.n), (2.0, 1.0, 3.0, 2));
    assert!((row.std - 2f64.sqrt()).abs() < 1e-15);
    assert!(matches!(
        summarize(&[synthetic("a", &[(100, 1.0)]), synthetic("b", &[(50, 3.0)])]),
        Err(Error::Schema(_))
    ));
    assert!(matches!(summarize(&[]), Err(Error::Schema(_))));
}

#[test]
fn plot_data_columns_and_axes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config("adambo.iters = 30\nexperiment.seeds = 0, 1\n", dir.path());
    let out = run_experiment(&cfg).unwrap();
    let traces: Vec<Trace> = out.completed().into_iter().cloned().collect();
    let csv = emit_plot_data(&traces, "grad_norm", XAxis::Iteration).unwrap();
    assert_eq!(csv.lines().next().unwrap(), "run_id,t,grad_norm");
    assert_eq!(csv.lines().count(), 1 + 2 * 31);
    assert!(matches!(emit_plot_data(&traces, "test_auc", XAxis::Iteration), Err(Error::Schema(_))));
    assert!(matches!(emit_plot_data(&traces, "nonsense", XAxis::Iteration), Err(Error::Schema(_))));
    let timed = emit_plot_data(&traces, "grad_norm", XAxis::ElapsedMs).unwrap();
    assert_eq!(timed.lines().next().unwrap(), "run_id,elapsed_ms,grad_norm");
    for tr in &traces {
        let xs: Vec<u64> = timed
            .lines()
            .skip(1)
            .filter(|l| l.starts_with(&format!("{},", tr.run_id)))
            .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
            .collect();
        assert_eq!(xs.len(), 31);
        assert!(xs.windows(2).all(|w| w[0] <= w[1]));
    }
}

#[test]
fn proxy_column_on_problems_without_closed_form() {
    let o = adambo_core::problems::make_hyperrep_bilevel(Default::default(), 1).unwrap();
    let m = Monitor::new(&o, MetricsConfig::default(), "h", "adambo", 0);
    let (x, y) = adambo_core::BilevelOracle::initial_point(&o);
    let mut m = m;
    m.record(0, &x, &y).unwrap();
    let tr = m.finish(None, x, y);
    assert!(tr.grad_norm_proxy);
    assert!(tr.to_csv().lines().next().unwrap().contains("grad_norm_proxy"));
}

#[test]
fn diagnostics_suites_all_pass() {
    for suite in Suite::ALL {
        let lines = run_diagnostics(suite).unwrap();
        assert!(!lines.is_empty());
        for l in lines {
            assert!(l.passed, "{}: {} > {}", l.property, l.measured, l.bound);
        }
    }
}
