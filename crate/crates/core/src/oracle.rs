//! The bilevel oracle contract, problem constants and numerical self-checks.

use crate::error::{Error, Result};
use crate::linalg::{ensure_finite, unit_sphere, Vector};
use crate::sampling::{stream_id, KeyStream, SampleKey, StreamRole};

/// Regularity and noise constants of a bilevel instance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProblemConstants {
    /// Strong convexity of `g` in `y`.
    pub mu: f64,
    /// Smoothness of `g`; also the Neumann scaling constant.
    pub l_g1: f64,
    /// Lipschitz constant of the second derivatives of `g`.
    pub l_g2: f64,
    /// Bound on `‖∇_y f(x, y*(x))‖`.
    pub l_f0: f64,
    pub sigma_f: f64,
    pub sigma_g1: f64,
    pub sigma_g2: f64,
}

impl ProblemConstants {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.mu,
            self.l_g1,
            self.l_g2,
            self.l_f0,
            self.sigma_f,
            self.sigma_g1,
            self.sigma_g2,
        ];
        if all.iter().any(|c| !c.is_finite() || *c < 0.0) {
            return Err(Error::Contract(format!(
                "problem constants must be finite and nonnegative: {self:?}"
            )));
        }
        if self.mu <= 0.0 {
            return Err(Error::Contract("mu must be positive".into()));
        }
        if self.mu > self.l_g1 {
            return Err(Error::Contract(format!(
                "mu = {} exceeds l_g1 = {}",
                self.mu, self.l_g1
            )));
        }
        Ok(())
    }

    /// Condition number `l_g1 / mu`, also the Lipschitz constant of `y*`.
    pub fn kappa(&self) -> f64 {
        self.l_g1 / self.mu
    }
}

/// Relaxed-smoothness constants of the upper function `f`: the gradient
/// blocks satisfy `‖∇_x f(z) − ∇_x f(z')‖ ≤ (L_x0 + L_x1‖∇_x f(z)‖)‖z − z'‖`
/// and likewise in `y`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UpperSmoothness {
    pub lx0: f64,
    pub lx1: f64,
    pub ly0: f64,
    pub ly1: f64,
}

/// `(L0, L1)` relaxed smoothness of `Φ`, valid for `‖x − x'‖ ≤ r`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhiSmoothness {
    pub l0: f64,
    pub l1: f64,
    /// Infinite when `L_x1 = L_y1 = 0`.
    pub r: f64,
}

impl PhiSmoothness {
    pub fn at(&self, grad_norm: f64) -> f64 {
        self.l0 + self.l1 * grad_norm
    }
}

pub fn phi_smoothness(c: &ProblemConstants, u: &UpperSmoothness) -> PhiSmoothness {
    let kappa = c.kappa();
    let s = (1.0 + kappa * kappa).sqrt();
    let l0 = s
        * (u.lx0
            + u.lx1 * c.l_g1 * c.l_f0 / c.mu
            + kappa * (u.ly0 + u.ly1 * c.l_f0)
            + c.l_f0 * (c.l_g1 * c.l_g2 + c.mu * c.l_g2) / (c.mu * c.mu));
    let l1 = s * u.lx1;
    let denom = ((1.0 + kappa * kappa) * (u.lx1 * u.lx1 + u.ly1 * u.ly1)).sqrt();
    let r = if denom > 0.0 { 1.0 / denom } else { f64::INFINITY };
    PhiSmoothness { l0, l1, r }
}

/// Training/test AUC of the scorer encoded in an upper-level point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AucScores {
    pub train: f64,
    pub test: Option<f64>,
}

/// Stochastic first- and second-order access to a bilevel problem
/// `min_x f(x, y*(x))` with `y*(x) = argmin_y g(x, y)`.
///
/// `sample_*` methods evaluate the stochastic functions `F(·;ξ)` and `G(·;ζ)`
/// on the draw identified by `key`; the plain methods return population
/// quantities. Implementations must be pure: identical arguments give
/// identical bits.
pub trait BilevelOracle: Send + Sync {
    /// `(d_x, d_y)`.
    fn dims(&self) -> (usize, usize);

    fn constants(&self) -> ProblemConstants;

    fn sample_grad_x_f(&self, x: &Vector, y: &Vector, key: SampleKey) -> Vector;
    fn sample_grad_y_f(&self, x: &Vector, y: &Vector, key: SampleKey) -> Vector;
    fn sample_grad_y_g(&self, x: &Vector, y: &Vector, key: SampleKey) -> Vector;
    /// `∇²_yy G(x, y; ζ) v`.
    fn sample_hvp_yy_g(&self, x: &Vector, y: &Vector, key: SampleKey, v: &Vector) -> Vector;
    /// `∇²_xy G(x, y; ζ) v`, a `d_x` vector.
    fn sample_jvp_xy_g(&self, x: &Vector, y: &Vector, key: SampleKey, v: &Vector) -> Vector;

    fn grad_x_f(&self, x: &Vector, y: &Vector) -> Vector;
    fn grad_y_f(&self, x: &Vector, y: &Vector) -> Vector;
    fn grad_y_g(&self, x: &Vector, y: &Vector) -> Vector;
    fn hvp_yy_g(&self, x: &Vector, y: &Vector, v: &Vector) -> Vector;
    fn jvp_xy_g(&self, x: &Vector, y: &Vector, v: &Vector) -> Vector;

    /// Starting point `(x_1, y_0)`.
    fn initial_point(&self) -> (Vector, Vector) {
        let (dx, dy) = self.dims();
        (Vector::zeros(dx), Vector::zeros(dy))
    }

    fn exact_lower_solution(&self, _x: &Vector) -> Option<Vector> {
        None
    }

    fn exact_hypergradient(&self, _x: &Vector) -> Option<Vector> {
        None
    }

    fn objective_phi(&self, _x: &Vector) -> Option<f64> {
        None
    }

    /// Upper-level value `f(x, y)` when the problem exposes it.
    fn upper_value(&self, _x: &Vector, _y: &Vector) -> Option<f64> {
        None
    }

    fn auc_scores(&self, _x: &Vector) -> Option<AucScores> {
        None
    }
}

/// Central differences: coordinate `i` is `(f(p + h eᵢ) − f(p − h eᵢ)) / 2h`.
pub fn finite_difference_gradient<F>(f: F, point: &Vector, h: f64) -> Result<Vector>
where
    F: Fn(&Vector) -> f64,
{
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::Domain(format!("step h must be positive, got {h}")));
    }
    let mut grad = Vector::zeros(point.len());
    let mut probe = point.clone();
    for i in 0..point.len() {
        let base = probe[i];
        probe[i] = base + h;
        let up = f(&probe);
        probe[i] = base - h;
        let down = f(&probe);
        probe[i] = base;
        if !up.is_finite() || !down.is_finite() {
            return Err(Error::numerical("finite_difference_gradient", i));
        }
        grad[i] = (up - down) / (2.0 * h);
    }
    Ok(grad)
}

/// Unbiasedness check of one stochastic quantity.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantityCheck {
    pub name: &'static str,
    /// `max_i |mean_i − exact_i|`.
    pub max_abs_deviation: f64,
    /// `max_i |mean_i − exact_i| / se_i`, with `se_i` the empirical standard
    /// error of coordinate `i`; zero-variance coordinates contribute 0 here.
    pub max_standard_errors: f64,
    /// Largest deviation among zero-variance coordinates.
    pub noiseless_deviation: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckReport {
    pub n_samples: usize,
    pub tol: f64,
    pub quantities: Vec<QuantityCheck>,
    /// `max |vᵀ(H u) − uᵀ(H v)|` over probed keys.
    pub symmetry_residual: f64,
    pub symmetry_passed: bool,
    pub passed: bool,
}

impl CheckReport {
    pub fn max_abs_deviation(&self) -> f64 {
        self.quantities
            .iter()
            .map(|q| q.max_abs_deviation)
            .fold(0.0, f64::max)
    }
}

const NOISELESS_RTOL: f64 = 1e-10;
const SYMMETRY_RTOL: f64 = 1e-12;

/// Monte-Carlo check of the oracle contract at `(x, y)`: sample means of every
/// stochastic query against the population value, plus HVP symmetry under a
/// shared key. `tol` is measured in empirical standard errors.
pub fn oracle_selfcheck(
    oracle: &dyn BilevelOracle,
    x: &Vector,
    y: &Vector,
    n_samples: usize,
    tol: f64,
) -> Result<CheckReport> {
    if n_samples == 0 {
        return Err(Error::Domain("n_samples must be at least 1".into()));
    }
    let (dx, dy) = oracle.dims();
    crate::linalg::check_dim(x, dx, "oracle_selfcheck x")?;
    crate::linalg::check_dim(y, dy, "oracle_selfcheck y")?;

    let mut probe = KeyStream::new(stream_id(u64::MAX >> 8, StreamRole::Probe));
    let mut probe_rng = probe.next_key().rng(0);
    let u = unit_sphere(dy, &mut probe_rng);
    let v = unit_sphere(dy, &mut probe_rng);

    type Query<'a> = Box<dyn Fn(SampleKey) -> Vector + 'a>;
    let cases: Vec<(&'static str, Query, Vector)> = vec![
        (
            "grad_x_f",
            Box::new(|k| oracle.sample_grad_x_f(x, y, k)),
            oracle.grad_x_f(x, y),
        ),
        (
            "grad_y_f",
            Box::new(|k| oracle.sample_grad_y_f(x, y, k)),
            oracle.grad_y_f(x, y),
        ),
        (
            "grad_y_g",
            Box::new(|k| oracle.sample_grad_y_g(x, y, k)),
            oracle.grad_y_g(x, y),
        ),
        (
            "hvp_yy_g",
            Box::new(|k| oracle.sample_hvp_yy_g(x, y, k, &u)),
            oracle.hvp_yy_g(x, y, &u),
        ),
        (
            "jvp_xy_g",
            Box::new(|k| oracle.sample_jvp_xy_g(x, y, k, &u)),
            oracle.jvp_xy_g(x, y, &u),
        ),
    ];

    let mut quantities = Vec::with_capacity(cases.len());
    for (name, query, exact) in cases {
        ensure_finite(&exact, name)?;
        let dim = exact.len();
        // Welford accumulation per coordinate.
        let mut mean = Vector::zeros(dim);
        let mut m2 = Vector::zeros(dim);
        for n in 0..n_samples {
            let s = query(probe.next_key());
            ensure_finite(&s, name)?;
            let k = (n + 1) as f64;
            for i in 0..dim {
                let delta = s[i] - mean[i];
                mean[i] += delta / k;
                m2[i] += delta * (s[i] - mean[i]);
            }
        }
        let mut max_abs: f64 = 0.0;
        let mut max_se: f64 = 0.0;
        let mut noiseless: f64 = 0.0;
        let mut passed = true;
        for i in 0..dim {
            let dev = (mean[i] - exact[i]).abs();
            max_abs = max_abs.max(dev);
            let var = if n_samples > 1 {
                m2[i] / (n_samples - 1) as f64
            } else {
                0.0
            };
            let se = (var / n_samples as f64).sqrt();
            let floor = NOISELESS_RTOL * (1.0 + exact[i].abs());
            if se > floor {
                let z = dev / se;
                max_se = max_se.max(z);
                passed &= z <= tol;
            } else {
                noiseless = noiseless.max(dev);
                passed &= dev <= floor;
            }
        }
        quantities.push(QuantityCheck {
            name,
            max_abs_deviation: max_abs,
            max_standard_errors: max_se,
            noiseless_deviation: noiseless,
            passed,
        });
    }

    let mut symmetry_residual: f64 = 0.0;
    let mut symmetry_passed = true;
    for _ in 0..n_samples.min(32) {
        let key = probe.next_key();
        let hu = oracle.sample_hvp_yy_g(x, y, key, &u);
        let hv = oracle.sample_hvp_yy_g(x, y, key, &v);
        let a = v.dot(&hu);
        let b = u.dot(&hv);
        let r = (a - b).abs();
        symmetry_residual = symmetry_residual.max(r);
        symmetry_passed &= r <= SYMMETRY_RTOL * (1.0 + a.abs().max(b.abs()));
    }

    let passed = symmetry_passed && quantities.iter().all(|q| q.passed);
    Ok(CheckReport {
        n_samples,
        tol,
        quantities,
        symmetry_residual,
        symmetry_passed,
        passed,
    })
}
