//! Quadratic bilevel instances with closed-form lower solution and
//! hypergradient.
//!
//! Lower level: `g(x, y) = ½ yᵀHy − yᵀ(c + Bx)`. Upper level:
//! `f(x, y) = ½ zᵀAz + aᵀz` with `z = (x, y)` and `A` positive definite, so
//! `Φ` is a strongly convex quadratic with a unique stationary point.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::linalg::{
    check_dim, gaussian_matrix, gaussian_vector, linspace, spectral_norm, symmetric_eigenvalues,
    symmetric_with_spectrum, symmetry_defect, uniform_ball, unit_sphere, Matrix, Vector,
};
use crate::oracle::{
    phi_smoothness, BilevelOracle, PhiSmoothness, ProblemConstants, UpperSmoothness,
};
use crate::sampling::SampleKey;

/// Knobs for [`QuadraticBilevelSpec::random`].
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticParams {
    pub d_x: usize,
    pub d_y: usize,
    pub mu: f64,
    pub l_g1: f64,
    /// `‖B‖ = coupling · l_g1`; must lie in `[0, 1]`.
    pub coupling: f64,
    /// Scales the `y` rows and columns of the upper Hessian.
    pub upper_y_weight: f64,
    /// Spectrum of the upper Hessian before `y` scaling.
    pub upper_eig_min: f64,
    pub upper_eig_max: f64,
    pub sigma_f: f64,
    pub sigma_g1: f64,
    pub sigma_g2: f64,
    /// Radius of the `x` region over which `l_f0` is certified.
    pub radius: f64,
    /// Norm of the starting upper point.
    pub init_norm: f64,
}

impl Default for QuadraticParams {
    fn default() -> Self {
        Self {
            d_x: 10,
            d_y: 10,
            mu: 1.0,
            l_g1: 2.0,
            coupling: 0.5,
            upper_y_weight: 1.0,
            upper_eig_min: 0.5,
            upper_eig_max: 2.0,
            sigma_f: 0.1,
            sigma_g1: 0.1,
            sigma_g2: 0.05,
            radius: 10.0,
            init_norm: 3.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticBilevelSpec {
    /// Lower Hessian, `d_y × d_y`.
    pub h: Matrix,
    /// Cross term, `d_y × d_x`.
    pub b: Matrix,
    pub c: Vector,
    /// Upper Hessian, `(d_x + d_y)²`.
    pub a: Matrix,
    pub a_lin: Vector,
    pub mu: f64,
    pub l_g1: f64,
    pub sigma_f: f64,
    pub sigma_g1: f64,
    pub sigma_g2: f64,
    pub radius: f64,
    pub x_init: Vector,
    pub y_init: Vector,
}

impl QuadraticBilevelSpec {
    pub fn d_x(&self) -> usize {
        self.b.ncols()
    }

    pub fn d_y(&self) -> usize {
        self.h.nrows()
    }

    /// Random instance whose lower Hessian spectrum spans
    /// `[μ + σ_g2, l_g1 − σ_g2]`, so every sampled Hessian stays in `[μ, l_g1]`.
    pub fn random(p: &QuadraticParams, seed: u64) -> Result<Self> {
        if p.d_x == 0 || p.d_y == 0 {
            return Err(Error::Domain("dimensions must be positive".into()));
        }
        if !(0.0..=1.0).contains(&p.coupling) {
            return Err(Error::Domain(format!("coupling {} outside [0, 1]", p.coupling)));
        }
        if !(p.upper_eig_min > 0.0 && p.upper_eig_max >= p.upper_eig_min && p.upper_y_weight > 0.0)
        {
            return Err(Error::Domain("upper spectrum must be positive".into()));
        }
        let lo = p.mu + p.sigma_g2;
        let hi = p.l_g1 - p.sigma_g2;
        if !(p.mu > 0.0 && lo <= hi) {
            return Err(Error::Contract(format!(
                "no room for the lower spectrum: [{lo}, {hi}] with mu = {}",
                p.mu
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let h = symmetric_with_spectrum(&linspace(lo, hi, p.d_y), &mut rng);
        let mut b = gaussian_matrix(p.d_y, p.d_x, &mut rng);
        let bn = spectral_norm(&b);
        b *= if bn > 0.0 { p.coupling * p.l_g1 / bn } else { 0.0 };
        let c = gaussian_vector(p.d_y, 1.0, &mut rng);
        let n = p.d_x + p.d_y;
        let mut a = symmetric_with_spectrum(&linspace(p.upper_eig_min, p.upper_eig_max, n), &mut rng);
        for i in 0..n {
            for j in 0..n {
                let wi = if i >= p.d_x { p.upper_y_weight } else { 1.0 };
                let wj = if j >= p.d_x { p.upper_y_weight } else { 1.0 };
                a[(i, j)] *= wi * wj;
            }
        }
        let a_lin = gaussian_vector(n, 1.0, &mut rng);
        let x_init = unit_sphere(p.d_x, &mut rng) * p.init_norm.min(p.radius);
        Ok(Self {
            h,
            b,
            c,
            a,
            a_lin,
            mu: p.mu,
            l_g1: p.l_g1,
            sigma_f: p.sigma_f,
            sigma_g1: p.sigma_g1,
            sigma_g2: p.sigma_g2,
            radius: p.radius,
            x_init,
            y_init: Vector::zeros(p.d_y),
        })
    }

    fn validate(&self) -> Result<()> {
        let (dx, dy) = (self.d_x(), self.d_y());
        let n = dx + dy;
        if self.h.ncols() != dy || self.b.nrows() != dy {
            return Err(Error::dim("quadratic H/B rows", dy, self.b.nrows()));
        }
        check_dim(&self.c, dy, "quadratic c")?;
        if self.a.nrows() != n || self.a.ncols() != n {
            return Err(Error::dim("quadratic upper Hessian", n, self.a.nrows()));
        }
        check_dim(&self.a_lin, n, "quadratic upper linear term")?;
        check_dim(&self.x_init, dx, "quadratic x_init")?;
        check_dim(&self.y_init, dy, "quadratic y_init")?;
        for (m, name) in [(&self.h, "lower Hessian"), (&self.a, "upper Hessian")] {
            if symmetry_defect(m) > 1e-12 * m.amax().max(1.0) {
                return Err(Error::Contract(format!("{name} is not symmetric")));
            }
        }
        if [self.sigma_f, self.sigma_g1, self.sigma_g2].iter().any(|s| !(*s >= 0.0)) {
            return Err(Error::Contract("noise levels must be nonnegative".into()));
        }
        let eig = symmetric_eigenvalues(&self.h);
        let (lo, hi) = (eig[0], eig[dy - 1]);
        let tol = 1e-10 * self.l_g1;
        if !(self.mu > 0.0) || lo < self.mu + self.sigma_g2 - tol || hi > self.l_g1 - self.sigma_g2 + tol
        {
            return Err(Error::Contract(format!(
                "lower Hessian spectrum [{lo}, {hi}] not inside [mu + sigma_g2, l_g1 - sigma_g2] = [{}, {}]",
                self.mu + self.sigma_g2,
                self.l_g1 - self.sigma_g2
            )));
        }
        if spectral_norm(&self.b) > self.l_g1 * (1.0 + 1e-12) {
            return Err(Error::Contract("‖B‖ exceeds l_g1".into()));
        }
        if symmetric_eigenvalues(&self.a)[0] <= 0.0 {
            return Err(Error::Contract("upper Hessian must be positive definite".into()));
        }
        Ok(())
    }
}

/// Dense closed form `∇_x f + Bᵀ H⁻¹ ∇_y f` at `y*(x) = H⁻¹(c + Bx)`.
pub fn quadratic_exact_hypergradient(spec: &QuadraticBilevelSpec, x: &Vector) -> Result<Vector> {
    let (dx, dy) = (spec.d_x(), spec.d_y());
    check_dim(x, dx, "quadratic_exact_hypergradient x")?;
    let h_inv = spec
        .h
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Contract("lower Hessian is singular".into()))?;
    let y = &h_inv * (&spec.c + &spec.b * x);
    let mut z = Vector::zeros(dx + dy);
    z.rows_mut(0, dx).copy_from(x);
    z.rows_mut(dx, dy).copy_from(&y);
    let grad = &spec.a * z + &spec.a_lin;
    let gx = grad.rows(0, dx).into_owned();
    let gy = grad.rows(dx, dy).into_owned();
    Ok(gx + spec.b.transpose() * (h_inv * gy))
}

/// Oracle for a [`QuadraticBilevelSpec`] with additive, assumption-compliant
/// noise.
#[derive(Debug, Clone)]
pub struct QuadraticBilevel {
    spec: QuadraticBilevelSpec,
    h_inv: Matrix,
    /// `dy*/dx = H⁻¹B`.
    jac: Matrix,
    y_offset: Vector,
    phi_hess: Matrix,
    phi_lin: Vector,
    consts: ProblemConstants,
    salt: u64,
}

pub fn make_quadratic_bilevel(spec: QuadraticBilevelSpec, seed: u64) -> Result<QuadraticBilevel> {
    spec.validate()?;
    let (dx, dy) = (spec.d_x(), spec.d_y());
    let h_inv = spec
        .h
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Contract("lower Hessian is singular".into()))?;
    let h_inv = (&h_inv + h_inv.transpose()) * 0.5;
    let jac = &h_inv * &spec.b;
    let y_offset = &h_inv * &spec.c;

    let axx = spec.a.view((0, 0), (dx, dx));
    let axy = spec.a.view((0, dx), (dx, dy));
    let ayx = spec.a.view((dx, 0), (dy, dx));
    let ayy = spec.a.view((dx, dx), (dy, dy));
    let ax = spec.a_lin.rows(0, dx);
    let ay = spec.a_lin.rows(dx, dy);

    let phi_hess = axx + axy * &jac + jac.transpose() * ayx + jac.transpose() * ayy * &jac;
    let phi_hess = (&phi_hess + phi_hess.transpose()) * 0.5;
    let phi_lin = axy * &y_offset + ax + jac.transpose() * (ayy * &y_offset + ay);

    // ∇_y f(x, y*(x)) = (A_yx + A_yy J) x + A_yy y₀ + a_y on the ball ‖x‖ ≤ R.
    let slope = ayx + ayy * &jac;
    let intercept = ayy * &y_offset + ay;
    let l_f0 = spectral_norm(&slope) * spec.radius + intercept.norm();

    let consts = ProblemConstants {
        mu: spec.mu,
        l_g1: spec.l_g1,
        l_g2: 0.0,
        l_f0,
        sigma_f: spec.sigma_f,
        sigma_g1: spec.sigma_g1,
        sigma_g2: spec.sigma_g2,
    };
    consts.validate()?;
    Ok(QuadraticBilevel {
        spec,
        h_inv,
        jac,
        y_offset,
        phi_hess,
        phi_lin,
        consts,
        salt: seed,
    })
}

const CH_UPPER: u64 = 1;
const CH_LOWER_GRAD: u64 = 2;
const CH_HESS: u64 = 3;
const CH_CROSS: u64 = 4;

impl QuadraticBilevel {
    pub fn spec(&self) -> &QuadraticBilevelSpec {
        &self.spec
    }

    pub fn y_star(&self, x: &Vector) -> Vector {
        &self.jac * x + &self.y_offset
    }

    /// Hessian of `Φ`; constant for a quadratic instance.
    pub fn phi_hessian(&self) -> &Matrix {
        &self.phi_hess
    }

    /// The unique minimizer of `Φ`.
    pub fn stationary_point(&self) -> Vector {
        let chol = self
            .phi_hess
            .clone()
            .cholesky()
            .expect("Φ Hessian is positive definite by construction");
        -chol.solve(&self.phi_lin)
    }

    pub fn hessian_inverse(&self) -> &Matrix {
        &self.h_inv
    }

    pub fn smoothness(&self) -> PhiSmoothness {
        let an = spectral_norm(&self.spec.a);
        phi_smoothness(
            &self.consts,
            &UpperSmoothness {
                lx0: an,
                lx1: 0.0,
                ly0: an,
                ly1: 0.0,
            },
        )
    }

    fn channel(&self, c: u64) -> u64 {
        self.salt.wrapping_mul(8).wrapping_add(c)
    }

    fn upper_grad(&self, x: &Vector, y: &Vector) -> Vector {
        let dx = self.spec.d_x();
        let dy = self.spec.d_y();
        let mut z = Vector::zeros(dx + dy);
        z.rows_mut(0, dx).copy_from(x);
        z.rows_mut(dx, dy).copy_from(y);
        &self.spec.a * z + &self.spec.a_lin
    }

    fn upper_noise(&self, key: SampleKey) -> Option<Vector> {
        if self.spec.sigma_f == 0.0 {
            return None;
        }
        let n = self.spec.d_x() + self.spec.d_y();
        let mut rng = key.rng(self.channel(CH_UPPER));
        Some(uniform_ball(n, self.spec.sigma_f, &mut rng))
    }
}

impl BilevelOracle for QuadraticBilevel {
    fn dims(&self) -> (usize, usize) {
        (self.spec.d_x(), self.spec.d_y())
    }

    fn constants(&self) -> ProblemConstants {
        self.consts
    }

    fn sample_grad_x_f(&self, x: &Vector, y: &Vector, key: SampleKey) -> Vector {
        let mut g = self.grad_x_f(x, y);
        if let Some(e) = self.upper_noise(key) {
            g += e.rows(0, self.spec.d_x());
        }
        g
    }

    fn sample_grad_y_f(&self, x: &Vector, y: &Vector, key: SampleKey) -> Vector {
        let mut g = self.grad_y_f(x, y);
        if let Some(e) = self.upper_noise(key) {
            g += e.rows(self.spec.d_x(), self.spec.d_y());
        }
        g
    }

    fn sample_grad_y_g(&self, x: &Vector, y: &Vector, key: SampleKey) -> Vector {
        let mut g = self.grad_y_g(x, y);
        if self.spec.sigma_g1 > 0.0 {
            let dy = self.spec.d_y();
            let mut rng = key.rng(self.channel(CH_LOWER_GRAD));
            let std = self.spec.sigma_g1 / (2.0 * (dy as f64).sqrt());
            g += gaussian_vector(dy, std, &mut rng);
        }
        g
    }

    fn sample_hvp_yy_g(&self, x: &Vector, y: &Vector, key: SampleKey, v: &Vector) -> Vector {
        let mut hv = self.hvp_yy_g(x, y, v);
        if self.spec.sigma_g2 > 0.0 {
            // σ (uuᵀ − I/d) v: zero mean, symmetric, norm at most σ.
            let dy = self.spec.d_y();
            let mut rng = key.rng(self.channel(CH_HESS));
            let u = unit_sphere(dy, &mut rng);
            let s = self.spec.sigma_g2;
            hv.axpy(s * u.dot(v), &u, 1.0);
            hv.axpy(-s / dy as f64, v, 1.0);
        }
        hv
    }

    fn sample_jvp_xy_g(&self, x: &Vector, y: &Vector, key: SampleKey, v: &Vector) -> Vector {
        let mut out = self.jvp_xy_g(x, y, v);
        if self.spec.sigma_g2 > 0.0 {
            let mut rng = key.rng(self.channel(CH_CROSS));
            let sign = if rand::Rng::random::<bool>(&mut rng) { 1.0 } else { -1.0 };
            let a = unit_sphere(self.spec.d_x(), &mut rng);
            let b = unit_sphere(self.spec.d_y(), &mut rng);
            out.axpy(sign * self.spec.sigma_g2 * b.dot(v), &a, 1.0);
        }
        out
    }

    fn grad_x_f(&self, x: &Vector, y: &Vector) -> Vector {
        self.upper_grad(x, y).rows(0, self.spec.d_x()).into_owned()
    }

    fn grad_y_f(&self, x: &Vector, y: &Vector) -> Vector {
        self.upper_grad(x, y)
            .rows(self.spec.d_x(), self.spec.d_y())
            .into_owned()
    }

    fn grad_y_g(&self, x: &Vector, y: &Vector) -> Vector {
        &self.spec.h * y - &self.spec.c - &self.spec.b * x
    }

    fn hvp_yy_g(&self, _x: &Vector, _y: &Vector, v: &Vector) -> Vector {
        &self.spec.h * v
    }

    fn jvp_xy_g(&self, _x: &Vector, _y: &Vector, v: &Vector) -> Vector {
        -(self.spec.b.transpose() * v)
    }

    fn initial_point(&self) -> (Vector, Vector) {
        (self.spec.x_init.clone(), self.spec.y_init.clone())
    }

    fn exact_lower_solution(&self, x: &Vector) -> Option<Vector> {
        Some(self.y_star(x))
    }

    fn exact_hypergradient(&self, x: &Vector) -> Option<Vector> {
        Some(&self.phi_hess * x + &self.phi_lin)
    }

    fn objective_phi(&self, x: &Vector) -> Option<f64> {
        self.upper_value(x, &self.y_star(x))
    }

    fn upper_value(&self, x: &Vector, y: &Vector) -> Option<f64> {
        let dx = self.spec.d_x();
        let dy = self.spec.d_y();
        let mut z = Vector::zeros(dx + dy);
        z.rows_mut(0, dx).copy_from(x);
        z.rows_mut(dx, dy).copy_from(y);
        Some(0.5 * z.dot(&(&self.spec.a * &z)) + self.spec.a_lin.dot(&z))
    }
}
