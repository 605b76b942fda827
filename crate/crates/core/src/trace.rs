//! Per-iteration metrics and the traces optimizers return.

use std::fmt::Write as _;
use std::time::Instant;

use crate::error::Result;
use crate::hypergradient::{averaged_hypergradient, NeumannConfig};
use crate::linalg::Vector;
use crate::oracle::BilevelOracle;
use crate::sampling::{stream_id, KeyStream, StreamRole};

/// Samples in the averaged estimator used when no exact hypergradient exists.
pub const PROXY_SAMPLES: usize = 256;

/// One logged iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub run_id: String,
    pub algo: String,
    pub t: u64,
    pub phi: Option<f64>,
    pub grad_norm: Option<f64>,
    pub lower_err: Option<f64>,
    pub hypergrad_bias: Option<f64>,
    pub train_auc: Option<f64>,
    pub test_auc: Option<f64>,
    pub elapsed_ms: u64,
}

/// Metric names in column order.
pub const METRICS: [&str; 6] = [
    "phi",
    "grad_norm",
    "lower_err",
    "hypergrad_bias",
    "train_auc",
    "test_auc",
];

impl TraceRecord {
    pub fn metric(&self, name: &str) -> Option<f64> {
        match name {
            "phi" => self.phi,
            "grad_norm" | "grad_norm_proxy" => self.grad_norm,
            "lower_err" => self.lower_err,
            "hypergrad_bias" => self.hypergrad_bias,
            "train_auc" => self.train_auc,
            "test_auc" => self.test_auc,
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Abort {
    /// Iteration at which the failure happened.
    pub t: u64,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub run_id: String,
    pub algo: String,
    /// `grad_norm` is an averaged-estimator proxy rather than exact.
    pub grad_norm_proxy: bool,
    pub records: Vec<TraceRecord>,
    pub aborted: Option<Abort>,
    pub final_x: Vector,
    pub final_y: Vector,
}

impl Trace {
    pub fn grad_norm_column(&self) -> &'static str {
        if self.grad_norm_proxy {
            "grad_norm_proxy"
        } else {
            "grad_norm"
        }
    }

    pub fn last(&self) -> Option<&TraceRecord> {
        self.records.last()
    }

    /// Smallest recorded gradient norm.
    pub fn min_grad_norm(&self) -> Option<f64> {
        self.records
            .iter()
            .filter_map(|r| r.grad_norm)
            .reduce(f64::min)
    }

    /// Whether any record carries `metric`.
    pub fn has_metric(&self, metric: &str) -> bool {
        self.records.iter().any(|r| r.metric(metric).is_some())
    }

    /// Deterministic CSV: everything except wall-clock time.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        out.push_str("run_id,algo,t,phi,");
        out.push_str(self.grad_norm_column());
        out.push_str(",lower_err,hypergrad_bias,train_auc,test_auc\n");
        for r in &self.records {
            let _ = write!(out, "{},{},{}", r.run_id, r.algo, r.t);
            for v in [
                r.phi,
                r.grad_norm,
                r.lower_err,
                r.hypergrad_bias,
                r.train_auc,
                r.test_auc,
            ] {
                out.push(',');
                out.push_str(&fmt_opt(v));
            }
            out.push('\n');
        }
        out
    }

    pub fn timing_csv(&self) -> String {
        let mut out = String::from("run_id,t,elapsed_ms\n");
        for r in &self.records {
            let _ = writeln!(out, "{},{},{}", r.run_id, r.t, r.elapsed_ms);
        }
        out
    }
}

/// 17 significant digits, enough to round-trip an `f64`.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricsConfig {
    /// Record every `every` iterations (and always the last one).
    pub every: u64,
    /// Estimates averaged for `hypergrad_bias`; 0 disables the column.
    pub bias_samples: usize,
    /// Neumann order of the optimizer; the proxy uses twice this.
    pub q: usize,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        Self {
            every: 1,
            bias_samples: 0,
            q: 3,
        }
    }
}

/// Turns iterates into [`TraceRecord`]s and assembles the [`Trace`].
pub struct Monitor<'a> {
    oracle: &'a dyn BilevelOracle,
    cfg: MetricsConfig,
    run_id: String,
    algo: String,
    start: Instant,
    stream: KeyStream,
    records: Vec<TraceRecord>,
    hook: Option<Box<dyn FnMut(&TraceRecord) + 'a>>,
    proxy: bool,
}

impl<'a> Monitor<'a> {
    pub fn new(
        oracle: &'a dyn BilevelOracle,
        cfg: MetricsConfig,
        run_id: impl Into<String>,
        algo: impl Into<String>,
        seed: u64,
    ) -> Self {
        let (dx, _) = oracle.dims();
        let proxy = oracle.exact_hypergradient(&Vector::zeros(dx)).is_none();
        Self {
            oracle,
            cfg: MetricsConfig {
                every: cfg.every.max(1),
                ..cfg
            },
            run_id: run_id.into(),
            algo: algo.into(),
            start: Instant::now(),
            stream: KeyStream::new(stream_id(seed, StreamRole::Metrics)),
            records: Vec::new(),
            hook: None,
            proxy,
        }
    }

    /// Called with every record as soon as it is produced.
    pub fn with_hook(mut self, hook: impl FnMut(&TraceRecord) + 'a) -> Self {
        self.hook = Some(Box::new(hook));
        self
    }

    pub fn due(&self, t: u64, last: bool) -> bool {
        last || t % self.cfg.every == 0
    }

    pub fn record(&mut self, t: u64, x: &Vector, y: &Vector) -> Result<()> {
        let o = self.oracle;
        let exact = o.exact_hypergradient(x);
        let proxy_cfg = NeumannConfig::new(2 * self.cfg.q.max(1), o.constants().l_g1)?;
        let grad_norm = match &exact {
            Some(g) => g.norm(),
            None => {
                let y_ref = o.exact_lower_solution(x).unwrap_or_else(|| y.clone());
                averaged_hypergradient(o, x, &y_ref, &proxy_cfg, PROXY_SAMPLES, &mut self.stream)?
                    .norm()
            }
        };
        let hypergrad_bias = match (&exact, self.cfg.bias_samples) {
            (Some(g), n) if n > 0 => {
                let nc = NeumannConfig::new(self.cfg.q, o.constants().l_g1)?;
                let mean = averaged_hypergradient(o, x, y, &nc, n, &mut self.stream)?;
                Some((mean - g).norm())
            }
            _ => None,
        };
        let auc = o.auc_scores(x);
        let rec = TraceRecord {
            run_id: self.run_id.clone(),
            algo: self.algo.clone(),
            t,
            phi: o.objective_phi(x).filter(|v| v.is_finite()),
            grad_norm: Some(grad_norm).filter(|v| v.is_finite()),
            lower_err: o.exact_lower_solution(x).map(|ys| (y - ys).norm()),
            hypergrad_bias,
            train_auc: auc.map(|a| a.train),
            test_auc: auc.and_then(|a| a.test),
            elapsed_ms: self.start.elapsed().as_millis() as u64,
        };
        if let Some(h) = self.hook.as_mut() {
            h(&rec);
        }
        self.records.push(rec);
        Ok(())
    }

    pub fn finish(self, aborted: Option<Abort>, final_x: Vector, final_y: Vector) -> Trace {
        Trace {
            run_id: self.run_id,
            algo: self.algo,
            grad_norm_proxy: self.proxy,
            records: self.records,
            aborted,
            final_x,
            final_y,
        }
    }
}
