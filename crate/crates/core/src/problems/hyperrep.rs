//! Toy hyper-representation learning: a shared representation `φ = act(Wz)`
//! is the upper variable and every task fits its own linear adapter `y_i`
//! with a ridge penalty at the lower level.
//!
//! `g(W, y) = (1/K) Σ_i [ mean_train ℓ(c · y_iᵀφ) + (μ_reg/2)‖y_i‖² ]`,
//! `f(W, y) = (1/K) Σ_i mean_val ℓ(c · y_iᵀφ)`.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::linalg::{gaussian_matrix, gaussian_vector, Matrix, Vector};
use crate::oracle::{BilevelOracle, ProblemConstants};
use crate::sampling::SampleKey;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Representation {
    Tanh,
    Linear,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TaskLoss {
    /// `log(1 + exp(−c s))`.
    Logistic,
    /// `½ (s − c)²`.
    Squared,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HyperRepSpec {
    /// Number of tasks `K`.
    pub k: usize,
    /// Input dimension.
    pub d: usize,
    /// Representation width.
    pub r: usize,
    /// Number of class centres tasks draw their label pairs from.
    pub classes: usize,
    pub n_train: usize,
    pub n_val: usize,
    pub separation: f64,
    pub mu_reg: f64,
    pub representation: Representation,
    pub loss: TaskLoss,
    /// Examples per task in stochastic queries; 0 means full batch.
    pub batch: usize,
    /// Solve the lower level exactly (Newton) for metrics and expose the
    /// exact hypergradient.
    pub exact_metrics: bool,
}

impl Default for HyperRepSpec {
    fn default() -> Self {
        Self {
            k: 4,
            d: 8,
            r: 4,
            classes: 6,
            n_train: 64,
            n_val: 64,
            separation: 3.0,
            mu_reg: 1.0,
            representation: Representation::Tanh,
            loss: TaskLoss::Logistic,
            batch: 16,
            exact_metrics: false,
        }
    }
}

#[derive(Debug, Clone)]
struct Split {
    z: Matrix,
    c: Vec<f64>,
}

#[derive(Debug, Clone)]
struct Task {
    train: Split,
    val: Split,
}

#[derive(Debug, Clone)]
pub struct HyperRepBilevel {
    spec: HyperRepSpec,
    tasks: Vec<Task>,
    w0: Vector,
    consts: ProblemConstants,
    salt: u64,
}

fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

impl TaskLoss {
    fn value(self, s: f64, c: f64) -> f64 {
        match self {
            TaskLoss::Logistic => {
                let m = -c * s;
                m.max(0.0) + (-m.abs()).exp().ln_1p()
            }
            TaskLoss::Squared => 0.5 * (s - c).powi(2),
        }
    }

    /// `(ℓ', ℓ'')` in `s`.
    fn derivs(self, s: f64, c: f64) -> (f64, f64) {
        match self {
            TaskLoss::Logistic => {
                let q = sigmoid(-c * s);
                (-c * q, q * (1.0 - q))
            }
            TaskLoss::Squared => (s - c, 1.0),
        }
    }

    fn curvature_max(self) -> f64 {
        match self {
            TaskLoss::Logistic => 0.25,
            TaskLoss::Squared => 1.0,
        }
    }
}

pub fn make_hyperrep_bilevel(spec: HyperRepSpec, seed: u64) -> Result<HyperRepBilevel> {
    if spec.k == 0 {
        return Err(Error::Domain("hyper-representation needs K >= 1 tasks".into()));
    }
    if !(spec.mu_reg > 0.0) {
        return Err(Error::Domain(format!("mu_reg must be positive, got {}", spec.mu_reg)));
    }
    if spec.d == 0 || spec.r == 0 || spec.n_train < 2 || spec.n_val < 2 {
        return Err(Error::Domain("dimensions and split sizes too small".into()));
    }
    if spec.classes < 2 {
        return Err(Error::Domain("need at least two classes".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let centres = gaussian_matrix(spec.classes, spec.d, &mut rng) * (spec.separation / (spec.d as f64).sqrt());
    let mut tasks = Vec::with_capacity(spec.k);
    for _ in 0..spec.k {
        let pair = sample(&mut rng, spec.classes, 2);
        let (pos, neg) = (pair.index(0), pair.index(1));
        let mut split = |n: usize| {
            let mut z = Matrix::zeros(n, spec.d);
            let mut c = Vec::with_capacity(n);
            for i in 0..n {
                let label = if i % 2 == 0 { 1.0 } else { -1.0 };
                let centre = centres.row(if label > 0.0 { pos } else { neg });
                let noise = gaussian_vector(spec.d, 1.0, &mut rng);
                for j in 0..spec.d {
                    z[(i, j)] = centre[j] + noise[j];
                }
                c.push(label);
            }
            Split { z, c }
        };
        let train = split(spec.n_train);
        let val = split(spec.n_val);
        tasks.push(Task { train, val });
    }
    let w0 = gaussian_vector(spec.r * spec.d, 1.0 / (spec.d as f64).sqrt(), &mut rng);
    let salt: u64 = rng.random();
    let mut out = HyperRepBilevel {
        spec,
        tasks,
        w0,
        consts: ProblemConstants {
            mu: 1.0,
            l_g1: 1.0,
            l_g2: 0.0,
            l_f0: 0.0,
            sigma_f: 0.0,
            sigma_g1: 0.0,
            sigma_g2: 0.0,
        },
        salt,
    };
    out.consts = out.derive_constants()?;
    Ok(out)
}

impl HyperRepBilevel {
    pub fn spec(&self) -> &HyperRepSpec {
        &self.spec
    }

    fn w(&self, x: &Vector) -> Matrix {
        Matrix::from_row_slice(self.spec.r, self.spec.d, x.as_slice())
    }

    /// `(φ, act')` for input row `i` of `z`.
    fn features(&self, w: &Matrix, z: &Matrix, i: usize) -> (Vector, Vector) {
        let pre = w * z.row(i).transpose();
        match self.spec.representation {
            Representation::Tanh => {
                let phi = pre.map(f64::tanh);
                let dphi = phi.map(|p| 1.0 - p * p);
                (phi, dphi)
            }
            Representation::Linear => {
                let n = pre.len();
                (pre, Vector::from_element(n, 1.0))
            }
        }
    }

    fn block<'a>(&self, y: &'a Vector, i: usize) -> nalgebra::DVectorView<'a, f64> {
        y.rows(i * self.spec.r, self.spec.r)
    }

    fn indices(&self, key: Option<SampleKey>, task: usize, n: usize, upper: bool) -> Vec<usize> {
        match key {
            Some(key) if self.spec.batch > 0 => {
                let channel = self.salt.wrapping_mul(4).wrapping_add(if upper { 1 } else { 2 });
                let mut rng = key.rng(channel);
                // Task streams are consumed in order, so skip ahead per task.
                for _ in 0..task * self.spec.batch {
                    let _: u64 = rng.random();
                }
                (0..self.spec.batch).map(|_| rng.random_range(0..n)).collect()
            }
            _ => (0..n).collect(),
        }
    }

    /// `∇_y` of the task-averaged loss on the chosen split (no ridge term).
    fn loss_grad_y(&self, x: &Vector, y: &Vector, key: Option<SampleKey>, upper: bool) -> Vector {
        let w = self.w(x);
        let r = self.spec.r;
        let kf = self.spec.k as f64;
        let mut out = Vector::zeros(self.spec.k * r);
        for (t, task) in self.tasks.iter().enumerate() {
            let split = if upper { &task.val } else { &task.train };
            let idx = self.indices(key, t, split.c.len(), upper);
            let yi = self.block(y, t);
            let mut acc = Vector::zeros(r);
            for &i in &idx {
                let (phi, _) = self.features(&w, &split.z, i);
                let (l1, _) = self.spec.loss.derivs(yi.dot(&phi), split.c[i]);
                acc.axpy(l1, &phi, 1.0);
            }
            out.rows_mut(t * r, r)
                .copy_from(&(acc / (idx.len() as f64 * kf)));
        }
        out
    }

    /// `∇_W` of the task-averaged loss on the chosen split, flattened.
    fn loss_grad_x(&self, x: &Vector, y: &Vector, key: Option<SampleKey>, upper: bool) -> Vector {
        let w = self.w(x);
        let (r, d) = (self.spec.r, self.spec.d);
        let kf = self.spec.k as f64;
        let mut g = Matrix::zeros(r, d);
        for (t, task) in self.tasks.iter().enumerate() {
            let split = if upper { &task.val } else { &task.train };
            let idx = self.indices(key, t, split.c.len(), upper);
            let yi = self.block(y, t).into_owned();
            let scale = 1.0 / (idx.len() as f64 * kf);
            for &i in &idx {
                let (phi, dphi) = self.features(&w, &split.z, i);
                let (l1, _) = self.spec.loss.derivs(yi.dot(&phi), split.c[i]);
                let coef = yi.component_mul(&dphi) * (l1 * scale);
                g.ger(1.0, &coef, &split.z.row(i).transpose(), 1.0);
            }
        }
        Vector::from_row_slice(g.transpose().as_slice())
    }

    fn hvp(&self, x: &Vector, y: &Vector, key: Option<SampleKey>, v: &Vector) -> Vector {
        let w = self.w(x);
        let r = self.spec.r;
        let kf = self.spec.k as f64;
        let mut out = Vector::zeros(self.spec.k * r);
        for (t, task) in self.tasks.iter().enumerate() {
            let idx = self.indices(key, t, task.train.c.len(), false);
            let yi = self.block(y, t);
            let vi = self.block(v, t);
            let mut acc = Vector::zeros(r);
            for &i in &idx {
                let (phi, _) = self.features(&w, &task.train.z, i);
                let (_, l2) = self.spec.loss.derivs(yi.dot(&phi), task.train.c[i]);
                acc.axpy(l2 * phi.dot(&vi), &phi, 1.0);
            }
            let block = acc / idx.len() as f64 + vi * self.spec.mu_reg;
            out.rows_mut(t * r, r).copy_from(&(block / kf));
        }
        out
    }

    fn jvp(&self, x: &Vector, y: &Vector, key: Option<SampleKey>, v: &Vector) -> Vector {
        let w = self.w(x);
        let (r, d) = (self.spec.r, self.spec.d);
        let kf = self.spec.k as f64;
        let mut g = Matrix::zeros(r, d);
        for (t, task) in self.tasks.iter().enumerate() {
            let idx = self.indices(key, t, task.train.c.len(), false);
            let yi = self.block(y, t).into_owned();
            let vi = self.block(v, t).into_owned();
            let scale = 1.0 / (idx.len() as f64 * kf);
            for &i in &idx {
                let (phi, dphi) = self.features(&w, &task.train.z, i);
                let (l1, l2) = self.spec.loss.derivs(yi.dot(&phi), task.train.c[i]);
                let coef = (yi.component_mul(&dphi) * (l2 * phi.dot(&vi))
                    + vi.component_mul(&dphi) * l1)
                    * scale;
                g.ger(1.0, &coef, &task.train.z.row(i).transpose(), 1.0);
            }
        }
        Vector::from_row_slice(g.transpose().as_slice())
    }

    /// Per-task lower Hessian `mean ℓ'' φφᵀ + μ_reg I` (without the `1/K`).
    fn task_hessian(&self, w: &Matrix, task: &Task, yi: &Vector) -> Matrix {
        let r = self.spec.r;
        let mut h = Matrix::identity(r, r) * self.spec.mu_reg;
        let n = task.train.c.len() as f64;
        for i in 0..task.train.c.len() {
            let (phi, _) = self.features(w, &task.train.z, i);
            let (_, l2) = self.spec.loss.derivs(yi.dot(&phi), task.train.c[i]);
            h.ger(l2 / n, &phi, &phi, 1.0);
        }
        h
    }

    /// Exact lower solution by per-task Newton iterations.
    pub fn solve_lower(&self, x: &Vector) -> Result<Vector> {
        let w = self.w(x);
        let r = self.spec.r;
        let kf = self.spec.k as f64;
        let mut y = Vector::zeros(self.spec.k * r);
        for _ in 0..60 {
            let grad = (self.loss_grad_y(x, &y, None, false) + &y * (self.spec.mu_reg / kf)) * kf;
            if grad.amax() < 1e-14 {
                break;
            }
            for (t, task) in self.tasks.iter().enumerate() {
                let yi = self.block(&y, t).into_owned();
                let h = self.task_hessian(&w, task, &yi);
                let step = h
                    .cholesky()
                    .ok_or_else(|| Error::Contract("task Hessian not positive definite".into()))?
                    .solve(&grad.rows(t * r, r).into_owned());
                let updated = yi - step;
                y.rows_mut(t * r, r).copy_from(&updated);
            }
        }
        Ok(y)
    }

    /// Exact hypergradient through the Newton solution, no Neumann bias.
    pub fn hypergradient_via_solve(&self, x: &Vector) -> Result<Vector> {
        let y = self.solve_lower(x)?;
        let w = self.w(x);
        let r = self.spec.r;
        let kf = self.spec.k as f64;
        let fy = self.loss_grad_y(x, &y, None, true);
        let mut v = Vector::zeros(self.spec.k * r);
        for (t, task) in self.tasks.iter().enumerate() {
            let h = self.task_hessian(&w, task, &self.block(&y, t).into_owned()) / kf;
            let vi = h
                .cholesky()
                .ok_or_else(|| Error::Contract("task Hessian not positive definite".into()))?
                .solve(&fy.rows(t * r, r).into_owned());
            v.rows_mut(t * r, r).copy_from(&vi);
        }
        Ok(self.loss_grad_x(x, &y, None, true) - self.jvp(x, &y, None, &v))
    }

    /// Mean validation loss.
    pub fn upper_loss(&self, x: &Vector, y: &Vector) -> f64 {
        let w = self.w(x);
        let mut total = 0.0;
        for (t, task) in self.tasks.iter().enumerate() {
            let yi = self.block(y, t);
            let n = task.val.c.len();
            let s: f64 = (0..n)
                .map(|i| {
                    let (phi, _) = self.features(&w, &task.val.z, i);
                    self.spec.loss.value(yi.dot(&phi), task.val.c[i])
                })
                .sum();
            total += s / n as f64;
        }
        total / self.spec.k as f64
    }

    fn derive_constants(&self) -> Result<ProblemConstants> {
        let s = &self.spec;
        let kf = s.k as f64;
        let phi_sq = match s.representation {
            Representation::Tanh => s.r as f64,
            Representation::Linear => {
                // Nominal: four times the largest squared feature norm at W₀.
                let w = self.w(&self.w0);
                let mut worst: f64 = 0.0;
                for task in &self.tasks {
                    for i in 0..task.train.c.len() {
                        worst = worst.max(self.features(&w, &task.train.z, i).0.norm_squared());
                    }
                }
                4.0 * worst
            }
        };
        let curv = s.loss.curvature_max();
        let mu = s.mu_reg / kf;
        let l_g1 = (curv * phi_sq + s.mu_reg) / kf;
        let l_f0 = match (s.representation, s.loss) {
            (Representation::Tanh, TaskLoss::Logistic) => (s.r as f64 / kf).sqrt(),
            _ => {
                let y = self.solve_lower(&self.w0)?;
                2.0 * self.loss_grad_y(&self.w0, &y, None, true).norm()
            }
        };
        let l_g2 = match s.loss {
            TaskLoss::Logistic => phi_sq.powf(1.5) / (6.0 * 3f64.sqrt()) / kf,
            TaskLoss::Squared => 0.0,
        };
        let root_b = if s.batch == 0 { f64::INFINITY } else { (s.batch as f64).sqrt() };
        let consts = ProblemConstants {
            mu,
            l_g1,
            l_g2,
            l_f0,
            sigma_f: 2.0 * l_f0 / root_b,
            sigma_g1: 2.0 * (curv * phi_sq).sqrt() / kf.sqrt() / root_b,
            sigma_g2: 2.0 * curv * phi_sq / kf / root_b,
        };
        consts.validate()?;
        Ok(consts)
    }
}

impl BilevelOracle for HyperRepBilevel {
    fn dims(&self) -> (usize, usize) {
        (self.spec.r * self.spec.d, self.spec.k * self.spec.r)
    }

    fn constants(&self) -> ProblemConstants {
        self.consts
    }

    fn sample_grad_x_f(&self, x: &Vector, y: &Vector, key: SampleKey) -> Vector {
        self.loss_grad_x(x, y, Some(key), true)
    }

    fn sample_grad_y_f(&self, x: &Vector, y: &Vector, key: SampleKey) -> Vector {
        self.loss_grad_y(x, y, Some(key), true)
    }

    fn sample_grad_y_g(&self, x: &Vector, y: &Vector, key: SampleKey) -> Vector {
        self.loss_grad_y(x, y, Some(key), false) + y * (self.spec.mu_reg / self.spec.k as f64)
    }

    fn sample_hvp_yy_g(&self, x: &Vector, y: &Vector, key: SampleKey, v: &Vector) -> Vector {
        self.hvp(x, y, Some(key), v)
    }

    fn sample_jvp_xy_g(&self, x: &Vector, y: &Vector, key: SampleKey, v: &Vector) -> Vector {
        self.jvp(x, y, Some(key), v)
    }

    fn grad_x_f(&self, x: &Vector, y: &Vector) -> Vector {
        self.loss_grad_x(x, y, None, true)
    }

    fn grad_y_f(&self, x: &Vector, y: &Vector) -> Vector {
        self.loss_grad_y(x, y, None, true)
    }

    fn grad_y_g(&self, x: &Vector, y: &Vector) -> Vector {
        self.loss_grad_y(x, y, None, false) + y * (self.spec.mu_reg / self.spec.k as f64)
    }

    fn hvp_yy_g(&self, x: &Vector, y: &Vector, v: &Vector) -> Vector {
        self.hvp(x, y, None, v)
    }

    fn jvp_xy_g(&self, x: &Vector, y: &Vector, v: &Vector) -> Vector {
        self.jvp(x, y, None, v)
    }

    fn initial_point(&self) -> (Vector, Vector) {
        (self.w0.clone(), Vector::zeros(self.spec.k * self.spec.r))
    }

    fn exact_lower_solution(&self, x: &Vector) -> Option<Vector> {
        if self.spec.exact_metrics {
            self.solve_lower(x).ok()
        } else {
            None
        }
    }

    fn exact_hypergradient(&self, x: &Vector) -> Option<Vector> {
        if self.spec.exact_metrics {
            self.hypergradient_via_solve(x).ok()
        } else {
            None
        }
    }

    fn objective_phi(&self, x: &Vector) -> Option<f64> {
        let y = self.exact_lower_solution(x)?;
        Some(self.upper_loss(x, &y))
    }

    fn upper_value(&self, x: &Vector, y: &Vector) -> Option<f64> {
        Some(self.upper_loss(x, y))
    }
}
