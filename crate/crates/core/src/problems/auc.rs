//! AUC maximization as a bilevel problem.
//!
//! Upper variable `x = (w, a, b)`, lower variable the scalar `α`. With
//! `h = h(w; z)` and `p` the positive fraction,
//!
//! `F = (1−p)(h−a)² 𝟙₊ + p(h−b)² 𝟙₋ + 2(1+α)(p h 𝟙₋ − (1−p) h 𝟙₊) − p(1−p)α²`
//!
//! and `G = −F`, a one-dimensional quadratic in `α` with curvature `2p(1−p)`.

use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::Vector;
use crate::oracle::{AucScores, BilevelOracle, ProblemConstants};
use crate::problems::dataset::{auc_metric, AUCDataset};
use crate::sampling::SampleKey;

#[derive(Debug, Clone, PartialEq)]
pub struct AUCBilevelSpec {
    pub dataset: AUCDataset,
    pub test: Option<AUCDataset>,
    /// Minibatch size of stochastic queries; 0 means full batch.
    pub batch: usize,
    /// `h = u + cubic·u³` with `u = wᵀz`; 0 gives the linear scorer.
    pub cubic: f64,
}

#[derive(Debug, Clone)]
pub struct AUCBilevel {
    spec: AUCBilevelSpec,
    consts: ProblemConstants,
    salt: u64,
}

/// Per-example derivative pieces at one point.
struct Terms {
    grad_x: Vector,
    grad_alpha: f64,
    /// `∂²F/∂x∂α`, the `w` block only is nonzero.
    cross: Vector,
}

pub fn make_auc_bilevel(spec: AUCBilevelSpec, seed: u64) -> Result<AUCBilevel> {
    let ds = &spec.dataset;
    if ds.is_empty() {
        return Err(Error::Domain("AUC dataset is empty".into()));
    }
    if !(ds.p > 0.0 && ds.p < 1.0) {
        return Err(Error::Domain(format!("positive fraction {} outside (0, 1)", ds.p)));
    }
    if let Some(t) = &spec.test {
        if t.dim() != ds.dim() {
            return Err(Error::dim("AUC test features", ds.dim(), t.dim()));
        }
    }
    if !(spec.cubic >= 0.0) {
        return Err(Error::Domain("cubic coefficient must be nonnegative".into()));
    }
    let curv = 2.0 * ds.p * (1.0 - ds.p);
    let mut oracle = AUCBilevel {
        spec,
        consts: ProblemConstants {
            mu: curv,
            l_g1: curv,
            l_g2: 0.0,
            l_f0: 0.0,
            sigma_f: 0.0,
            sigma_g1: 0.0,
            sigma_g2: 0.0,
        },
        salt: seed,
    };
    oracle.consts.sigma_f = oracle.nominal_sigma_f();
    Ok(oracle)
}

impl AUCBilevel {
    pub fn spec(&self) -> &AUCBilevelSpec {
        &self.spec
    }

    pub fn p(&self) -> f64 {
        self.spec.dataset.p
    }

    fn d(&self) -> usize {
        self.spec.dataset.dim()
    }

    /// `(h, ∂h/∂u)` for example `i` of `ds`.
    fn score(&self, ds: &AUCDataset, w: &[f64], i: usize) -> (f64, f64) {
        let row = ds.features.row(i);
        let u: f64 = row.iter().zip(w).map(|(a, b)| a * b).sum();
        let c = self.spec.cubic;
        (u + c * u * u * u, 1.0 + 3.0 * c * u * u)
    }

    pub fn scores(&self, x: &Vector, ds: &AUCDataset) -> Vec<f64> {
        let w = &x.as_slice()[..self.d()];
        (0..ds.len()).map(|i| self.score(ds, w, i).0).collect()
    }

    /// Closed-form `α*(x)` on the training distribution.
    pub fn alpha_star(&self, x: &Vector) -> f64 {
        let ds = &self.spec.dataset;
        let p = ds.p;
        let w = &x.as_slice()[..self.d()];
        let (mut neg, mut pos) = (0.0, 0.0);
        for i in 0..ds.len() {
            let h = self.score(ds, w, i).0;
            if ds.labels[i] > 0 {
                pos += h;
            } else {
                neg += h;
            }
        }
        let n = ds.len() as f64;
        (p * neg / n - (1.0 - p) * pos / n) / (p * (1.0 - p))
    }

    /// Mean of `F` over the training set.
    pub fn objective(&self, x: &Vector, alpha: f64) -> f64 {
        let ds = &self.spec.dataset;
        let p = ds.p;
        let d = self.d();
        let w = &x.as_slice()[..d];
        let (a, b) = (x[d], x[d + 1]);
        let mut total = 0.0;
        for i in 0..ds.len() {
            let h = self.score(ds, w, i).0;
            total += if ds.labels[i] > 0 {
                (1.0 - p) * (h - a).powi(2) - 2.0 * (1.0 + alpha) * (1.0 - p) * h
            } else {
                p * (h - b).powi(2) + 2.0 * (1.0 + alpha) * p * h
            };
        }
        total / ds.len() as f64 - p * (1.0 - p) * alpha * alpha
    }

    fn terms(&self, x: &Vector, alpha: f64, idx: &[usize]) -> Terms {
        let ds = &self.spec.dataset;
        let p = ds.p;
        let d = self.d();
        let w = &x.as_slice()[..d];
        let (a, b) = (x[d], x[d + 1]);
        let mut grad_x = Vector::zeros(d + 2);
        let mut cross = Vector::zeros(d + 2);
        let mut grad_alpha = 0.0;
        for &i in idx {
            let (h, dh) = self.score(ds, w, i);
            let row = ds.features.row(i);
            let (coef_h, coef_cross) = if ds.labels[i] > 0 {
                grad_x[d] -= 2.0 * (1.0 - p) * (h - a);
                grad_alpha -= 2.0 * (1.0 - p) * h;
                (
                    2.0 * (1.0 - p) * (h - a) - 2.0 * (1.0 + alpha) * (1.0 - p),
                    -2.0 * (1.0 - p),
                )
            } else {
                grad_x[d + 1] -= 2.0 * p * (h - b);
                grad_alpha += 2.0 * p * h;
                (2.0 * p * (h - b) + 2.0 * (1.0 + alpha) * p, 2.0 * p)
            };
            for j in 0..d {
                grad_x[j] += coef_h * dh * row[j];
                cross[j] += coef_cross * dh * row[j];
            }
        }
        let n = idx.len() as f64;
        grad_x /= n;
        cross /= n;
        Terms {
            grad_x,
            grad_alpha: grad_alpha / n - 2.0 * p * (1.0 - p) * alpha,
            cross,
        }
    }

    fn batch(&self, key: SampleKey) -> Vec<usize> {
        let n = self.spec.dataset.len();
        if self.spec.batch == 0 {
            return (0..n).collect();
        }
        let mut rng = key.rng(self.salt.wrapping_mul(8).wrapping_add(1));
        (0..self.spec.batch).map(|_| rng.random_range(0..n)).collect()
    }

    fn full(&self) -> Vec<usize> {
        (0..self.spec.dataset.len()).collect()
    }

    /// Per-example spread of `∇_x F` at the initial point, scaled by the
    /// batch size. Informational only.
    fn nominal_sigma_f(&self) -> f64 {
        let (x, y) = self.initial_point();
        let all = self.full();
        let mean = self.terms(&x, y[0], &all).grad_x;
        let worst = all
            .iter()
            .map(|&i| (self.terms(&x, y[0], &[i]).grad_x - &mean).norm())
            .fold(0.0, f64::max);
        match self.spec.batch {
            0 => 0.0,
            b => worst / (b as f64).sqrt(),
        }
    }
}

impl BilevelOracle for AUCBilevel {
    fn dims(&self) -> (usize, usize) {
        (self.d() + 2, 1)
    }

    fn constants(&self) -> ProblemConstants {
        self.consts
    }

    fn sample_grad_x_f(&self, x: &Vector, y: &Vector, key: SampleKey) -> Vector {
        self.terms(x, y[0], &self.batch(key)).grad_x
    }

    fn sample_grad_y_f(&self, x: &Vector, y: &Vector, key: SampleKey) -> Vector {
        Vector::from_element(1, self.terms(x, y[0], &self.batch(key)).grad_alpha)
    }

    fn sample_grad_y_g(&self, x: &Vector, y: &Vector, key: SampleKey) -> Vector {
        Vector::from_element(1, -self.terms(x, y[0], &self.batch(key)).grad_alpha)
    }

    fn sample_hvp_yy_g(&self, x: &Vector, y: &Vector, _key: SampleKey, v: &Vector) -> Vector {
        self.hvp_yy_g(x, y, v)
    }

    fn sample_jvp_xy_g(&self, x: &Vector, y: &Vector, key: SampleKey, v: &Vector) -> Vector {
        -(self.terms(x, y[0], &self.batch(key)).cross * v[0])
    }

    fn grad_x_f(&self, x: &Vector, y: &Vector) -> Vector {
        self.terms(x, y[0], &self.full()).grad_x
    }

    fn grad_y_f(&self, x: &Vector, y: &Vector) -> Vector {
        Vector::from_element(1, self.terms(x, y[0], &self.full()).grad_alpha)
    }

    fn grad_y_g(&self, x: &Vector, y: &Vector) -> Vector {
        -self.grad_y_f(x, y)
    }

    fn hvp_yy_g(&self, _x: &Vector, _y: &Vector, v: &Vector) -> Vector {
        v * self.consts.mu
    }

    fn jvp_xy_g(&self, x: &Vector, y: &Vector, v: &Vector) -> Vector {
        -(self.terms(x, y[0], &self.full()).cross * v[0])
    }

    fn exact_lower_solution(&self, x: &Vector) -> Option<Vector> {
        Some(Vector::from_element(1, self.alpha_star(x)))
    }

    /// `∇_α f` vanishes at `α*`, so the hypergradient is `∇_x f(x, α*)`.
    fn exact_hypergradient(&self, x: &Vector) -> Option<Vector> {
        let alpha = self.alpha_star(x);
        Some(self.terms(x, alpha, &self.full()).grad_x)
    }

    fn objective_phi(&self, x: &Vector) -> Option<f64> {
        Some(self.objective(x, self.alpha_star(x)))
    }

    fn upper_value(&self, x: &Vector, y: &Vector) -> Option<f64> {
        Some(self.objective(x, y[0]))
    }

    fn auc_scores(&self, x: &Vector) -> Option<AucScores> {
        let ds = &self.spec.dataset;
        let train = auc_metric(&self.scores(x, ds), &ds.labels).ok()?;
        let test = self
            .spec
            .test
            .as_ref()
            .and_then(|t| auc_metric(&self.scores(x, t), &t.labels).ok());
        Some(AucScores { train, test })
    }
}
