//! Stochastic Neumann-series hypergradient estimator and its dense
//! counterparts.

use std::collections::HashSet;

use crate::error::{Error, Result};
use crate::linalg::{check_dim, ensure_finite, symmetric_eigenvalues, symmetry_defect, Matrix, Vector};
use crate::oracle::{BilevelOracle, ProblemConstants};
use crate::sampling::{KeyStream, SampleKey};

/// Truncation order and scaling of the Neumann series.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NeumannConfig {
    pub q: usize,
    pub l_g1: f64,
}

impl NeumannConfig {
    pub fn new(q: usize, l_g1: f64) -> Result<Self> {
        let cfg = Self { q, l_g1 };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.q == 0 {
            return Err(Error::Domain("Neumann order Q must be at least 1".into()));
        }
        if !(self.l_g1 > 0.0 && self.l_g1.is_finite()) {
            return Err(Error::Domain(format!("l_g1 must be positive, got {}", self.l_g1)));
        }
        Ok(())
    }

    /// Hessian-vector products consumed by one estimate: `Q(Q−1)/2`.
    pub fn hvp_count(&self) -> usize {
        self.q * (self.q - 1) / 2
    }

    /// Keys consumed by one estimate.
    pub fn key_count(&self) -> usize {
        2 + self.hvp_count()
    }
}

/// All randomness of one hypergradient estimate.
///
/// `xi` drives both upper-level gradients, `zeta0` the cross term, and row `q`
/// of `zeta_grid` (holding `q` keys) the `q`-th product of the series. Row 0
/// is empty.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HypergradSample {
    pub xi: SampleKey,
    pub zeta0: SampleKey,
    pub zeta_grid: Vec<Vec<SampleKey>>,
}

impl HypergradSample {
    /// Draws `xi`, `zeta0`, then the grid row by row.
    pub fn draw(stream: &mut KeyStream, q: usize) -> Self {
        let xi = stream.next_key();
        let zeta0 = stream.next_key();
        let zeta_grid = (0..q)
            .map(|row| (0..row).map(|_| stream.next_key()).collect())
            .collect();
        Self { xi, zeta0, zeta_grid }
    }

    pub fn order(&self) -> usize {
        self.zeta_grid.len()
    }

    /// Checks the grid shape for order `q` and that all keys are distinct.
    pub fn validate(&self, q: usize) -> Result<()> {
        if self.zeta_grid.len() != q {
            return Err(Error::dim("HypergradSample rows", q, self.zeta_grid.len()));
        }
        let mut seen = HashSet::with_capacity(2 + q * q / 2);
        seen.insert(self.xi);
        if !seen.insert(self.zeta0) {
            return Err(Error::Contract("zeta0 repeats xi".into()));
        }
        for (row, keys) in self.zeta_grid.iter().enumerate() {
            if keys.len() != row {
                return Err(Error::dim(format!("HypergradSample row {row}"), row, keys.len()));
            }
            for k in keys {
                if !seen.insert(*k) {
                    return Err(Error::Contract(format!("repeated key {k:?} in row {row}")));
                }
            }
        }
        Ok(())
    }
}

/// `P v` with `P = (1/l) Σ_{q<Q} Π_{j≤q} (I − H(ζ^{(q,j)})/l)`.
pub fn neumann_apply(
    oracle: &dyn BilevelOracle,
    x: &Vector,
    y: &Vector,
    v: &Vector,
    cfg: &NeumannConfig,
    sample: &HypergradSample,
) -> Result<Vector> {
    cfg.validate()?;
    let (dx, dy) = oracle.dims();
    check_dim(x, dx, "neumann_apply x")?;
    check_dim(y, dy, "neumann_apply y")?;
    check_dim(v, dy, "neumann_apply v")?;
    sample.validate(cfg.q)?;
    let inv_l = 1.0 / cfg.l_g1;
    let mut sum = v.clone();
    for row in sample.zeta_grid.iter().skip(1) {
        let mut w = v.clone();
        for key in row {
            let hw = oracle.sample_hvp_yy_g(x, y, *key, &w);
            check_dim(&hw, dy, "hvp_yy_G output")?;
            w.axpy(-inv_l, &hw, 1.0);
        }
        sum += &w;
    }
    sum *= inv_l;
    ensure_finite(&sum, "neumann_apply")?;
    Ok(sum)
}

/// `∇_x F(ξ) − ∇²_xy G(ζ⁰) · P · ∇_y F(ξ)`.
pub fn estimate_hypergradient(
    oracle: &dyn BilevelOracle,
    x: &Vector,
    y: &Vector,
    cfg: &NeumannConfig,
    sample: &HypergradSample,
) -> Result<Vector> {
    let (dx, dy) = oracle.dims();
    let gx = oracle.sample_grad_x_f(x, y, sample.xi);
    let gy = oracle.sample_grad_y_f(x, y, sample.xi);
    check_dim(&gx, dx, "grad_x_F output")?;
    check_dim(&gy, dy, "grad_y_F output")?;
    let p = neumann_apply(oracle, x, y, &gy, cfg, sample)?;
    let cross = oracle.sample_jvp_xy_g(x, y, sample.zeta0, &p);
    check_dim(&cross, dx, "jvp_xy_G output")?;
    let out = gx - cross;
    ensure_finite(&out, "estimate_hypergradient")?;
    Ok(out)
}

/// Mean of `n` independent estimates drawn from `stream`.
pub fn averaged_hypergradient(
    oracle: &dyn BilevelOracle,
    x: &Vector,
    y: &Vector,
    cfg: &NeumannConfig,
    n: usize,
    stream: &mut KeyStream,
) -> Result<Vector> {
    if n == 0 {
        return Err(Error::Domain("need at least one sample".into()));
    }
    let mut acc = Vector::zeros(x.len());
    for _ in 0..n {
        let sample = HypergradSample::draw(stream, cfg.q);
        acc += estimate_hypergradient(oracle, x, y, cfg, &sample)?;
    }
    Ok(acc / n as f64)
}

/// `(1/l) Σ_{q<Q} (I − H/l)^q` by explicit power accumulation.
pub fn exact_neumann_expectation(h: &Matrix, q: usize, l_g1: f64) -> Result<Matrix> {
    NeumannConfig::new(q, l_g1)?;
    let d = h.nrows();
    if h.ncols() != d {
        return Err(Error::dim("Hessian columns", d, h.ncols()));
    }
    let scale = h.amax().max(1.0);
    if symmetry_defect(h) > 1e-12 * scale {
        return Err(Error::Contract("Hessian is not symmetric".into()));
    }
    let eig = symmetric_eigenvalues(h);
    if let (Some(&lo), Some(&hi)) = (eig.first(), eig.last()) {
        let tol = 1e-12 * l_g1;
        if lo <= tol || hi > l_g1 + tol {
            return Err(Error::Contract(format!(
                "Hessian spectrum [{lo}, {hi}] outside (0, {l_g1}]: ‖I − H/l‖ ≥ 1 or l too small"
            )));
        }
    }
    let m = Matrix::identity(d, d) - h / l_g1;
    let mut power = Matrix::identity(d, d);
    let mut sum = Matrix::identity(d, d);
    for _ in 1..q {
        power = &power * &m;
        sum += &power;
    }
    Ok(sum / l_g1)
}

/// `(l_g1 · l_f0 / μ) · (1 − μ/l_g1)^Q`.
pub fn neumann_bias_bound(consts: &ProblemConstants, q: usize) -> f64 {
    let base = (1.0 - consts.mu / consts.l_g1).max(0.0);
    consts.l_g1 * consts.l_f0 / consts.mu * base.powi(q as i32)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sample_shape_and_distinct_keys() {
        let mut s = KeyStream::new(7);
        let sample = HypergradSample::draw(&mut s, 5);
        assert_eq!(sample.order(), 5);
        assert_eq!(s.position() as usize, NeumannConfig { q: 5, l_g1: 1.0 }.key_count());
        for (row, keys) in sample.zeta_grid.iter().enumerate() {
            assert_eq!(keys.len(), row);
        }
        sample.validate(5).unwrap();
        assert!(sample.validate(4).is_err());
    }

    #[test]
    fn duplicate_keys_rejected() {
        let mut s = KeyStream::new(7);
        let mut sample = HypergradSample::draw(&mut s, 3);
        sample.zeta_grid[2][1] = sample.zeta0;
        assert!(matches!(sample.validate(3), Err(Error::Contract(_))));
    }

    #[test]
    fn expectation_order_one_is_scaled_identity() {
        let h = Matrix::from_diagonal(&Vector::from_vec(vec![1.0, 3.0]));
        let p = exact_neumann_expectation(&h, 1, 4.0).unwrap();
        assert_eq!(p, Matrix::identity(2, 2) / 4.0);
    }

    #[test]
    fn expectation_diagonal_geometric_sum() {
        let h = Matrix::from_diagonal(&Vector::from_vec(vec![1.0, 2.0]));
        let p = exact_neumann_expectation(&h, 2, 2.0).unwrap();
        assert!((p[(0, 0)] - 0.75).abs() < 1e-15);
        assert!((p[(1, 1)] - 0.5).abs() < 1e-15);
        assert_eq!(p[(0, 1)], 0.0);
    }

    #[test]
    fn expectation_rejects_bad_spectrum() {
        let singular = Matrix::from_diagonal(&Vector::from_vec(vec![0.0, 1.0]));
        assert!(matches!(
            exact_neumann_expectation(&singular, 3, 1.0),
            Err(Error::Contract(_))
        ));
        let too_big = Matrix::from_diagonal(&Vector::from_vec(vec![1.0, 5.0]));
        assert!(exact_neumann_expectation(&too_big, 3, 2.0).is_err());
        let asym = Matrix::from_row_slice(2, 2, &[1.0, 0.1, 0.0, 1.0]);
        assert!(exact_neumann_expectation(&asym, 3, 2.0).is_err());
    }

    fn consts(mu: f64, l: f64, lf0: f64) -> ProblemConstants {
        ProblemConstants {
            mu,
            l_g1: l,
            l_g2: 0.0,
            l_f0: lf0,
            sigma_f: 0.0,
            sigma_g1: 0.0,
            sigma_g2: 0.0,
        }
    }

    #[test]
    fn bias_bound_values() {
        assert!((neumann_bias_bound(&consts(1.0, 2.0, 1.0), 3) - 0.25).abs() < 1e-15);
        assert_eq!(neumann_bias_bound(&consts(2.0, 2.0, 5.0), 1), 0.0);
        let mut p = 1.0;
        for _ in 0..20 {
            p *= 0.9;
        }
        let b = neumann_bias_bound(&consts(1.0, 10.0, 2.0), 20);
        assert!((b - 20.0 * p).abs() < 1e-12);
        assert!((b - 2.4315).abs() < 1e-4);
    }

    #[test]
    fn config_rejects_zero_order() {
        assert!(NeumannConfig::new(0, 1.0).is_err());
        assert!(NeumannConfig::new(1, 0.0).is_err());
        assert_eq!(NeumannConfig::new(4, 1.0).unwrap().hvp_count(), 6);
    }
}
