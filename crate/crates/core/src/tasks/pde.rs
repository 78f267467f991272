//! Poisson problem on `[-1, 1]^2` with zero Dirichlet data and a
//! finite-difference residual loss.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{KanError, Result};
use crate::exec::Execution;
use crate::matrix::Matrix;
use crate::network::{Gradients, KanNetwork};
use crate::train::{assemble_report, regularization, LossReport, Objective, RegWeights};

/// `u = sin(pi x) sin(pi y^2)`.
pub fn pde_true_solution(x: f64, y: f64) -> f64 {
    (PI * x).sin() * (PI * y * y).sin()
}

/// Laplacian of the true solution.
pub fn pde_source(x: f64, y: f64) -> f64 {
    let sx = (PI * x).sin();
    -PI * PI * (1.0 + 4.0 * y * y) * sx * (PI * y * y).sin() + 2.0 * PI * sx * (PI * y * y).cos()
}

#[derive(Debug, Clone, PartialEq)]
pub struct PdeProblem {
    pub interior: Matrix,
    pub boundary: Matrix,
    /// Source at each interior point.
    pub source: Vec<f64>,
    pub alpha: f64,
}

impl PdeProblem {
    pub fn true_solution(&self, x: f64, y: f64) -> f64 {
        pde_true_solution(x, y)
    }
}

/// Interior points uniform in the open square, boundary points uniform on
/// its four edges.
pub fn gen_pde(n_i: usize, n_b: usize, alpha: f64, seed: u64) -> Result<PdeProblem> {
    if n_i == 0 || n_b == 0 {
        return Err(KanError::Config("PDE needs interior and boundary points".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut interior = Vec::with_capacity(2 * n_i);
    while interior.len() < 2 * n_i {
        let x: f64 = rng.random_range(-1.0..1.0);
        let y: f64 = rng.random_range(-1.0..1.0);
        if x > -1.0 && y > -1.0 {
            interior.push(x);
            interior.push(y);
        }
    }
    let mut boundary = Vec::with_capacity(2 * n_b);
    for _ in 0..n_b {
        let side = rng.random_range(0..4u8);
        let t: f64 = rng.random_range(-1.0..=1.0);
        let (x, y) = match side {
            0 => (-1.0, t),
            1 => (1.0, t),
            2 => (t, -1.0),
            _ => (t, 1.0),
        };
        boundary.push(x);
        boundary.push(y);
    }
    let source = interior.chunks(2).map(|p| pde_source(p[0], p[1])).collect();
    Ok(PdeProblem {
        interior: Matrix::new(n_i, 2, interior)?,
        boundary: Matrix::new(n_b, 2, boundary)?,
        source,
        alpha,
    })
}

/// Five-point stencils for every interior point, then the boundary points.
/// Stencil rows are centre, x+h, x-h, y+h, y-h.
pub fn stencil_inputs(problem: &PdeProblem, h: f64) -> Matrix {
    let n_i = problem.interior.rows();
    let mut data = Vec::with_capacity(2 * (5 * n_i + problem.boundary.rows()));
    for r in 0..n_i {
        let (x, y) = (problem.interior.get(r, 0), problem.interior.get(r, 1));
        for (dx, dy) in [(0.0, 0.0), (h, 0.0), (-h, 0.0), (0.0, h), (0.0, -h)] {
            data.push(x + dx);
            data.push(y + dy);
        }
    }
    data.extend_from_slice(problem.boundary.data());
    Matrix::new(data.len() / 2, 2, data).expect("stencil shape")
}

/// Residuals of the discrete Laplacian and boundary values from stacked
/// network outputs.
pub fn residuals<'a>(problem: &PdeProblem, u: &'a [f64], h: f64) -> (Vec<f64>, &'a [f64]) {
    let n_i = problem.interior.rows();
    let h2 = h * h;
    let res = (0..n_i)
        .map(|r| {
            let s = &u[5 * r..5 * r + 5];
            (s[1] + s[2] + s[3] + s[4] - 4.0 * s[0]) / h2 - problem.source[r]
        })
        .collect();
    (res, &u[5 * n_i..])
}

fn pde_value(problem: &PdeProblem, u: &[f64], h: f64) -> Result<(f64, Vec<f64>, Matrix)> {
    let n_i = problem.interior.rows();
    let n_b = problem.boundary.rows();
    let (res, ub) = residuals(problem, u, h);
    if res.iter().chain(ub).any(|v| !v.is_finite()) {
        return Err(KanError::NonFinite("PDE residual".into()));
    }
    let li = res.iter().map(|r| r * r).sum::<f64>() / n_i as f64;
    let lb = ub.iter().map(|v| v * v).sum::<f64>() / n_b as f64;
    let loss = problem.alpha * li + lb;
    let mut dy = Matrix::zeros(u.len(), 1);
    let h2 = h * h;
    let d = dy.data_mut();
    for (r, &rr) in res.iter().enumerate() {
        let g = problem.alpha * 2.0 * rr / n_i as f64 / h2;
        d[5 * r] = -4.0 * g;
        for q in 1..5 {
            d[5 * r + q] = g;
        }
    }
    for (b, &v) in ub.iter().enumerate() {
        d[5 * n_i + b] = 2.0 * v / n_b as f64;
    }
    Ok((loss, res, dy))
}

/// `alpha * mean(residual^2) + mean(u_boundary^2)` and its gradients.
pub fn pde_loss(net: &KanNetwork, problem: &PdeProblem, h: f64, exec: Execution) -> Result<(f64, Gradients)> {
    check_net(net)?;
    let inputs = stencil_inputs(problem, h);
    let (u, trace) = net.forward(&inputs, exec)?;
    let (loss, _, dy) = pde_value(problem, u.data(), h)?;
    let grads = net.backward(&trace, &dy, None, exec)?;
    Ok((loss, grads))
}

fn check_net(net: &KanNetwork) -> Result<()> {
    if net.n_inputs() != 2 || net.n_outputs() != 1 {
        return Err(KanError::InvalidShape("PDE networks map 2 inputs to 1 output".into()));
    }
    Ok(())
}

/// Side of the square evaluation grid for the L2 error.
pub const PDE_EVAL_SIDE: usize = 50;

/// The PDE as a training objective.
#[derive(Debug, Clone)]
pub struct PdeObjective {
    pub problem: PdeProblem,
    pub h: f64,
    inputs: Matrix,
    eval_points: Matrix,
    eval_truth: Vec<f64>,
}

impl PdeObjective {
    pub fn new(problem: PdeProblem, h: f64) -> Self {
        let inputs = stencil_inputs(&problem, h);
        let side = PDE_EVAL_SIDE;
        let lin: Vec<f64> = (0..side).map(|q| -1.0 + 2.0 * q as f64 / (side - 1) as f64).collect();
        let mut pts = Vec::with_capacity(2 * side * side);
        let mut truth = Vec::with_capacity(side * side);
        for &x in &lin {
            for &y in &lin {
                pts.push(x);
                pts.push(y);
                truth.push(pde_true_solution(x, y));
            }
        }
        Self {
            problem,
            h,
            inputs,
            eval_points: Matrix::new(side * side, 2, pts).expect("grid shape"),
            eval_truth: truth,
        }
    }

    /// RMS error against the true solution on the evaluation grid.
    pub fn l2_error(&self, net: &KanNetwork, exec: Execution) -> Result<f64> {
        let u = net.predict(&self.eval_points, exec)?;
        let n = self.eval_truth.len() as f64;
        Ok((u.data()
            .iter()
            .zip(&self.eval_truth)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            / n)
            .sqrt())
    }
}

impl Objective for PdeObjective {
    fn evaluate(&self, net: &KanNetwork, reg: RegWeights, exec: Execution) -> Result<(LossReport, Gradients)> {
        check_net(net)?;
        let (u, trace) = net.forward(&self.inputs, exec)?;
        let (loss, _, dy) = pde_value(&self.problem, u.data(), self.h)?;
        let (l1, entropy, extra) = regularization(net, &trace, reg);
        let grads = net.backward(&trace, &dy, extra.as_ref(), exec)?;
        Ok((assemble_report(loss, l1, entropy, reg), grads))
    }

    fn grid_inputs(&self) -> &Matrix {
        &self.inputs
    }

    /// `(rms interior residual, L2 error)`.
    fn metrics(&self, net: &KanNetwork, exec: Execution) -> Result<(f64, f64)> {
        let u = net.predict(&self.inputs, exec)?;
        let (res, _) = residuals(&self.problem, u.data(), self.h);
        let rms = (res.iter().map(|r| r * r).sum::<f64>() / res.len() as f64).sqrt();
        Ok((rms, self.l2_error(net, exec)?))
    }
}
