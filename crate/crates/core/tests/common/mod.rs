#![allow(dead_code)]

use adambo_core::problems::{make_quadratic_bilevel, QuadraticBilevel, QuadraticBilevelSpec, QuadraticParams};
use adambo_core::{BilevelOracle, Matrix, ProblemConstants, SampleKey, Vector};

pub fn quadratic(params: &QuadraticParams, seed: u64) -> QuadraticBilevel {
    make_quadratic_bilevel(QuadraticBilevelSpec::random(params, seed).unwrap(), seed).unwrap()
}

pub fn noiseless_params(mu: f64, l_g1: f64, d_x: usize, d_y: usize) -> QuadraticParams {
    QuadraticParams {
        d_x,
        d_y,
        mu,
        l_g1,
        sigma_f: 0.0,
        sigma_g1: 0.0,
        sigma_g2: 0.0,
        ..QuadraticParams::default()
    }
}

/// Scalar instance `g = ½ h y² − y (c + b x)`, `f = ½ (x² + y²)`.
pub fn scalar_instance(h: f64, b: f64, c: f64, mu: f64, l_g1: f64, x_init: f64) -> QuadraticBilevel {
    let spec = QuadraticBilevelSpec {
        h: Matrix::from_element(1, 1, h),
        b: Matrix::from_element(1, 1, b),
        c: Vector::from_element(1, c),
        a: Matrix::identity(2, 2),
        a_lin: Vector::zeros(2),
        mu,
        l_g1,
        sigma_f: 0.0,
        sigma_g1: 0.0,
        sigma_g2: 0.0,
        radius: 10.0,
        x_init: Vector::from_element(1, x_init),
        y_init: Vector::zeros(1),
    };
    make_quadratic_bilevel(spec, 0).unwrap()
}

/// `f = cᵀx`, `g = ½‖y‖²`: every hypergradient estimate equals `c`.
pub struct ConstantHypergrad {
    pub c: Vector,
    pub d_y: usize,
}

impl BilevelOracle for ConstantHypergrad {
    fn dims(&self) -> (usize, usize) {
        (self.c.len(), self.d_y)
    }
    fn constants(&self) -> ProblemConstants {
        ProblemConstants {
            mu: 1.0,
            l_g1: 1.0,
            l_g2: 0.0,
            l_f0: 0.0,
            sigma_f: 0.0,
            sigma_g1: 0.0,
            sigma_g2: 0.0,
        }
    }
    fn sample_grad_x_f(&self, x: &Vector, y: &Vector, _: SampleKey) -> Vector {
        self.grad_x_f(x, y)
    }
    fn sample_grad_y_f(&self, x: &Vector, y: &Vector, _: SampleKey) -> Vector {
        self.grad_y_f(x, y)
    }
    fn sample_grad_y_g(&self, x: &Vector, y: &Vector, _: SampleKey) -> Vector {
        self.grad_y_g(x, y)
    }
    fn sample_hvp_yy_g(&self, x: &Vector, y: &Vector, _: SampleKey, v: &Vector) -> Vector {
        self.hvp_yy_g(x, y, v)
    }
    fn sample_jvp_xy_g(&self, x: &Vector, y: &Vector, _: SampleKey, v: &Vector) -> Vector {
        self.jvp_xy_g(x, y, v)
    }
    fn grad_x_f(&self, _: &Vector, _: &Vector) -> Vector {
        self.c.clone()
    }
    fn grad_y_f(&self, _: &Vector, _: &Vector) -> Vector {
        Vector::zeros(self.d_y)
    }
    fn grad_y_g(&self, _: &Vector, y: &Vector) -> Vector {
        y.clone()
    }
    fn hvp_yy_g(&self, _: &Vector, _: &Vector, v: &Vector) -> Vector {
        v.clone()
    }
    fn jvp_xy_g(&self, _: &Vector, _: &Vector, _: &Vector) -> Vector {
        Vector::zeros(self.c.len())
    }
    fn exact_lower_solution(&self, _: &Vector) -> Option<Vector> {
        Some(Vector::zeros(self.d_y))
    }
    fn exact_hypergradient(&self, _: &Vector) -> Option<Vector> {
        Some(self.c.clone())
    }
}

/// Wraps an oracle and adds a non-symmetric term to every sampled HVP.
pub struct SkewedHvp<O>(pub O);

impl<O: BilevelOracle> BilevelOracle for SkewedHvp<O> {
    fn dims(&self) -> (usize, usize) {
        self.0.dims()
    }
    fn constants(&self) -> ProblemConstants {
        self.0.constants()
    }
    fn sample_grad_x_f(&self, x: &Vector, y: &Vector, k: SampleKey) -> Vector {
        self.0.sample_grad_x_f(x, y, k)
    }
    fn sample_grad_y_f(&self, x: &Vector, y: &Vector, k: SampleKey) -> Vector {
        self.0.sample_grad_y_f(x, y, k)
    }
    fn sample_grad_y_g(&self, x: &Vector, y: &Vector, k: SampleKey) -> Vector {
        self.0.sample_grad_y_g(x, y, k)
    }
    fn sample_hvp_yy_g(&self, x: &Vector, y: &Vector, k: SampleKey, v: &Vector) -> Vector {
        let mut out = self.0.sample_hvp_yy_g(x, y, k, v);
        // Strictly upper-triangular shift: not symmetric.
        for i in 0..out.len() - 1 {
            out[i] += 0.3 * v[i + 1];
        }
        out
    }
    fn sample_jvp_xy_g(&self, x: &Vector, y: &Vector, k: SampleKey, v: &Vector) -> Vector {
        self.0.sample_jvp_xy_g(x, y, k, v)
    }
    fn grad_x_f(&self, x: &Vector, y: &Vector) -> Vector {
        self.0.grad_x_f(x, y)
    }
    fn grad_y_f(&self, x: &Vector, y: &Vector) -> Vector {
        self.0.grad_y_f(x, y)
    }
    fn grad_y_g(&self, x: &Vector, y: &Vector) -> Vector {
        self.0.grad_y_g(x, y)
    }
    fn hvp_yy_g(&self, x: &Vector, y: &Vector, v: &Vector) -> Vector {
        let mut out = self.0.hvp_yy_g(x, y, v);
        for i in 0..out.len() - 1 {
            out[i] += 0.3 * v[i + 1];
        }
        out
    }
    fn jvp_xy_g(&self, x: &Vector, y: &Vector, v: &Vector) -> Vector {
        self.0.jvp_xy_g(x, y, v)
    }
}
