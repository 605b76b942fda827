//! Cross-seed aggregation and long-format plot data.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::trace::{fmt_f64, Trace, METRICS};

/// Running minimum of `grad_norm`, derived per trace.
pub const RUNNING_MIN: &str = "grad_norm_min";

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub metric: String,
    pub t: u64,
    /// Traces contributing a value at this checkpoint.
    pub n: usize,
    pub mean: f64,
    /// Sample standard deviation (divisor `n − 1`); 0 for a single value.
    pub std: f64,
    pub min: f64,
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SummaryTable {
    pub rows: Vec<SummaryRow>,
}

impl SummaryTable {
    pub fn get(&self, metric: &str, t: u64) -> Option<&SummaryRow> {
        self.rows.iter().find(|r| r.metric == metric && r.t == t)
    }

    pub fn metric(&self, metric: &str) -> impl Iterator<Item = &SummaryRow> {
        let metric = metric.to_string();
        self.rows.iter().filter(move |r| r.metric == metric)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("metric,t,n,mean,std,min,max\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{}",
                r.metric,
                r.t,
                r.n,
                fmt_f64(r.mean),
                fmt_f64(r.std),
                fmt_f64(r.min),
                fmt_f64(r.max)
            );
        }
        out
    }
}

fn stats(values: &[f64]) -> (f64, f64, f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let std = if values.len() > 1 {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    (mean, std, min, max)
}

fn running_min(trace: &Trace) -> Vec<Option<f64>> {
    let mut best: Option<f64> = None;
    trace
        .records
        .iter()
        .map(|r| {
            if let Some(g) = r.grad_norm {
                best = Some(best.map_or(g, |b| b.min(g)));
            }
            best
        })
        .collect()
}

/// Per-metric, per-checkpoint mean, std, min and max across traces.
pub fn summarize(traces: &[Trace]) -> Result<SummaryTable> {
    let first = traces
        .first()
        .ok_or_else(|| Error::Schema("nothing to summarize".into()))?;
    let checkpoints: Vec<u64> = first.records.iter().map(|r| r.t).collect();
    for tr in &traces[1..] {
        let ts: Vec<u64> = tr.records.iter().map(|r| r.t).collect();
        if ts != checkpoints {
            return Err(Error::Schema(format!(
                "checkpoints of {} differ from those of {}",
                tr.run_id, first.run_id
            )));
        }
        if tr.grad_norm_proxy != first.grad_norm_proxy {
            return Err(Error::Schema(
                "cannot mix exact and proxy gradient norms".into(),
            ));
        }
    }
    let mut columns: Vec<(String, Vec<Vec<Option<f64>>>)> = METRICS
        .iter()
        .map(|&m| {
            let name = if m == "grad_norm" {
                first.grad_norm_column().to_string()
            } else {
                m.to_string()
            };
            let vals = traces
                .iter()
                .map(|tr| tr.records.iter().map(|r| r.metric(m)).collect())
                .collect();
            (name, vals)
        })
        .collect();
    columns.push((RUNNING_MIN.to_string(), traces.iter().map(running_min).collect()));

    let mut rows = Vec::new();
    for (name, per_trace) in columns {
        for (k, &t) in checkpoints.iter().enumerate() {
            let values: Vec<f64> = per_trace.iter().filter_map(|v| v[k]).collect();
            if values.is_empty() {
                continue;
            }
            let (mean, std, min, max) = stats(&values);
            rows.push(SummaryRow {
                metric: name.clone(),
                t,
                n: values.len(),
                mean,
                std,
                min,
                max,
            });
        }
    }
    Ok(SummaryTable { rows })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum XAxis {
    Iteration,
    ElapsedMs,
}

impl std::str::FromStr for XAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "iteration" | "t" => Ok(XAxis::Iteration),
            "elapsed_ms" => Ok(XAxis::ElapsedMs),
            _ => Err(Error::Schema(format!("unknown x axis `{s}`"))),
        }
    }
}

/// Long-format CSV `(run_id, x, value)` for one metric.
pub fn emit_plot_data(traces: &[Trace], metric: &str, x_axis: XAxis) -> Result<String> {
    let base = match metric {
        "grad_norm_proxy" => "grad_norm",
        m if METRICS.contains(&m) || m == RUNNING_MIN => m,
        m => return Err(Error::Schema(format!("unknown metric `{m}`"))),
    };
    let first = traces
        .first()
        .ok_or_else(|| Error::Schema("no traces to plot".into()))?;
    if traces.iter().any(|t| t.grad_norm_proxy != first.grad_norm_proxy) {
        return Err(Error::Schema("cannot mix exact and proxy gradient norms".into()));
    }
    let lookup = if base == RUNNING_MIN { "grad_norm" } else { base };
    for tr in traces {
        if !tr.has_metric(lookup) {
            return Err(Error::Schema(format!(
                "metric `{metric}` is absent from run {}",
                tr.run_id
            )));
        }
    }
    let column = match base {
        "grad_norm" => first.grad_norm_column().to_string(),
        m => m.to_string(),
    };
    let x_name = match x_axis {
        XAxis::Iteration => "t",
        XAxis::ElapsedMs => "elapsed_ms",
    };
    let mut out = format!("run_id,{x_name},{column}\n");
    for tr in traces {
        let values: Vec<Option<f64>> = if base == RUNNING_MIN {
            running_min(tr)
        } else {
            tr.records.iter().map(|r| r.metric(base)).collect()
        };
        for (r, v) in tr.records.iter().zip(values) {
            if let Some(v) = v {
                let x = match x_axis {
                    XAxis::Iteration => r.t,
                    XAxis::ElapsedMs => r.elapsed_ms,
                };
                let _ = writeln!(out, "{},{},{}", tr.run_id, x, fmt_f64(v));
            }
        }
    }
    Ok(out)
}
