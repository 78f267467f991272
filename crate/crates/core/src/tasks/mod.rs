//! Dataset generators for the experiments.

mod pde;

pub use pde::{
    gen_pde, pde_loss, pde_source, pde_true_solution, residuals, stencil_inputs, PdeObjective, PdeProblem, PDE_EVAL_SIDE,
};

use std::f64::consts::PI;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dataset::Dataset;
use crate::error::{KanError, Result};
use crate::matrix::Matrix;

/// Function-fitting toys.
pub const TOY_NAMES: [&str; 5] = ["bessel_1d", "exp_sine_2d", "product_2d", "sine_100d", "composed_4d"];

/// Feynman equations, in dimensionless form.
pub const FEYNMAN_IDS: [&str; 8] = [
    "I.6.2", "I.12.11", "I.16.6", "I.26.2", "I.27.6", "I.40.1", "II.2.42", "III.10.19",
];

/// Structure-discovery toys.
pub const INTERPRETABLE_NAMES: [&str; 6] = ["multiply", "divide", "categorical", "special", "phase", "compose"];

/// Every name accepted by [`gen_task`].
pub fn task_names() -> Vec<&'static str> {
    TOY_NAMES
        .iter()
        .chain(&INTERPRETABLE_NAMES)
        .chain(&FEYNMAN_IDS)
        .copied()
        .chain(["unsupervised_6d"])
        .collect()
}

/// Dispatch on any task name.
pub fn gen_task(name: &str, n_train: usize, n_test: usize, seed: u64) -> Result<Dataset> {
    if TOY_NAMES.contains(&name) {
        gen_toy(name, n_train, n_test, seed)
    } else if INTERPRETABLE_NAMES.contains(&name) {
        gen_interpretable(name, n_train, n_test, seed)
    } else if FEYNMAN_IDS.contains(&name) {
        gen_feynman(name, n_train, n_test, seed)
    } else if name == "unsupervised_6d" {
        unsupervised_dataset(n_train, n_test, seed)
    } else {
        Err(KanError::UnknownTask(name.to_string()))
    }
}

/// J0 of the first kind, order zero.
///
/// Power series below 12, Hankel asymptotic expansion above.
pub fn bessel_j0(x: f64) -> f64 {
    let x = x.abs();
    if x < 12.0 {
        let q = -(x * x) / 4.0;
        let mut term = 1.0;
        let mut sum = 1.0;
        for m in 1..200 {
            term *= q / (m * m) as f64;
            sum += term;
            if term.abs() < 1e-17 * sum.abs().max(1e-300) && m > 5 {
                break;
            }
        }
        sum
    } else {
        let chi = x - PI / 4.0;
        let (mut p, mut q) = (0.0, 0.0);
        let mut a = 1.0;
        let mut prev = f64::INFINITY;
        for k in 0..60 {
            if k > 0 {
                let odd = (2 * k - 1) as f64;
                a *= odd * odd / (k as f64 * 8.0 * x);
            }
            if a > prev {
                break;
            }
            prev = a;
            let sign = if (k / 2) % 2 == 0 { 1.0 } else { -1.0 };
            if k % 2 == 0 {
                p += sign * a;
            } else {
                q -= sign * a;
            }
            if a < 1e-17 {
                break;
            }
        }
        (2.0 / (PI * x)).sqrt() * (p * chi.cos() - q * chi.sin())
    }
}

/// Target of a function-fitting toy at one input.
pub fn toy_target(name: &str, x: &[f64]) -> Result<f64> {
    Ok(match name {
        "bessel_1d" => bessel_j0(20.0 * x[0]),
        "exp_sine_2d" => ((PI * x[0]).sin() + x[1] * x[1]).exp(),
        "product_2d" => x[0] * x[1],
        "sine_100d" => (x.iter().map(|v| (PI * v / 2.0).sin().powi(2)).sum::<f64>() / 100.0).exp(),
        "composed_4d" => {
            let a = (PI * (x[0] * x[0] + x[1] * x[1])).sin();
            let b = (PI * (x[2] * x[2] + x[3] * x[3])).sin();
            (0.5 * (a + b)).exp()
        }
        other => return Err(KanError::UnknownTask(other.to_string())),
    })
}

fn toy_dim(name: &str) -> Result<usize> {
    Ok(match name {
        "bessel_1d" => 1,
        "exp_sine_2d" | "product_2d" => 2,
        "sine_100d" => 100,
        "composed_4d" => 4,
        other => return Err(KanError::UnknownTask(other.to_string())),
    })
}

/// Sample `n` rows uniformly from a box.
fn sample_box(rng: &mut ChaCha8Rng, n: usize, domain: &[(f64, f64)]) -> Matrix {
    let mut data = Vec::with_capacity(n * domain.len());
    for _ in 0..n {
        for &(lo, hi) in domain {
            data.push(rng.random_range(lo..=hi));
        }
    }
    Matrix::new(n, domain.len(), data).expect("box sample shape")
}

fn labelled(
    name: &str,
    domain: Vec<(f64, f64)>,
    n_train: usize,
    n_test: usize,
    seed: u64,
    m: usize,
    f: impl Fn(&[f64], &mut [f64]),
) -> Result<Dataset> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = n_train + n_test;
    let inputs = sample_box(&mut rng, n, &domain);
    let mut targets = Matrix::zeros(n, m);
    for r in 0..n {
        f(inputs.row(r), targets.row_mut(r));
    }
    Dataset::split_at(name, inputs, targets, n_train, domain)
}

/// One of the five function-fitting toys, inputs uniform on `[-1, 1]^d`.
pub fn gen_toy(name: &str, n_train: usize, n_test: usize, seed: u64) -> Result<Dataset> {
    let d = toy_dim(name)?;
    labelled(name, vec![(-1.0, 1.0); d], n_train, n_test, seed, 1, |x, y| {
        y[0] = toy_target(name, x).expect("known toy");
    })
}

fn feynman_domain(id: &str) -> Result<Vec<(f64, f64)>> {
    Ok(match id {
        "I.6.2" => vec![(-1.0, 1.0), (0.5, 2.0)],
        "I.27.6" => vec![(0.1, 1.0), (0.1, 1.0)],
        "I.40.1" => vec![(0.1, 2.0), (-1.0, 1.0)],
        "I.12.11" | "I.16.6" | "I.26.2" | "II.2.42" | "III.10.19" => vec![(-1.0, 1.0); 2],
        other => return Err(KanError::UnknownTask(other.to_string())),
    })
}

/// Dimensionless Feynman target.
pub fn feynman_target(id: &str, x: &[f64]) -> Result<f64> {
    let (a, b) = (x[0], x[1]);
    Ok(match id {
        "I.6.2" => (-a * a / (2.0 * b * b)).exp() / (2.0 * PI * b * b).sqrt(),
        "I.12.11" => 1.0 + a * b.sin(),
        "I.16.6" => (a + b) / (1.0 + a * b),
        "I.26.2" => (a * b.sin()).asin(),
        "I.27.6" => 1.0 / (1.0 + a * b),
        "I.40.1" => a * (-b).exp(),
        "II.2.42" => (a - 1.0) * b,
        "III.10.19" => (1.0 + a * a + b * b).sqrt(),
        other => return Err(KanError::UnknownTask(other.to_string())),
    })
}

fn feynman_variables(id: &str) -> Vec<String> {
    let names: [&str; 2] = match id {
        "I.6.2" => ["theta", "sigma"],
        "I.12.11" => ["a", "theta"],
        "I.26.2" => ["n", "theta2"],
        "I.40.1" => ["n0", "a"],
        _ => ["a", "b"],
    };
    names.iter().map(|s| s.to_string()).collect()
}

pub fn gen_feynman(id: &str, n_train: usize, n_test: usize, seed: u64) -> Result<Dataset> {
    let domain = feynman_domain(id)?;
    labelled(id, domain, n_train, n_test, seed, 1, |x, y| {
        y[0] = feynman_target(id, x).expect("known id");
    })?
    .with_variables(feynman_variables(id))
}

/// Structure-discovery toys: `multiply` xy, `divide` x/y on positive inputs,
/// `categorical` first decimal digit as a one-hot row, `special`
/// exp(J0(20x)+y^2), `phase` tanh(5(x1^4+x2^4+x3^4-1)), `compose`
/// sqrt((x1-x2)^2+(x3-x4)^2).
pub fn gen_interpretable(name: &str, n_train: usize, n_test: usize, seed: u64) -> Result<Dataset> {
    match name {
        "multiply" => labelled(name, vec![(-1.0, 1.0); 2], n_train, n_test, seed, 1, |x, y| y[0] = x[0] * x[1]),
        "divide" => labelled(name, vec![(0.5, 2.0); 2], n_train, n_test, seed, 1, |x, y| y[0] = x[0] / x[1]),
        "categorical" => labelled(name, vec![(0.0, 1.0)], n_train, n_test, seed, 10, |x, y| {
            let digit = ((x[0] * 10.0).floor() as usize).min(9);
            y[digit] = 1.0;
        }),
        "special" => labelled(name, vec![(-1.0, 1.0); 2], n_train, n_test, seed, 1, |x, y| {
            y[0] = (bessel_j0(20.0 * x[0]) + x[1] * x[1]).exp()
        }),
        "phase" => labelled(name, vec![(-1.0, 1.0); 3], n_train, n_test, seed, 1, |x, y| {
            y[0] = (5.0 * (x.iter().map(|v| v.powi(4)).sum::<f64>() - 1.0)).tanh()
        }),
        "compose" => labelled(name, vec![(-1.0, 1.0); 4], n_train, n_test, seed, 1, |x, y| {
            y[0] = ((x[0] - x[1]).powi(2) + (x[2] - x[3]).powi(2)).sqrt()
        }),
        other => Err(KanError::UnknownTask(other.to_string())),
    }
}

/// Peak centres of the continual-learning target.
pub const CONTINUAL_CENTERS: [f64; 5] = [-0.8, -0.4, 0.0, 0.4, 0.8];
pub const CONTINUAL_WIDTH: f64 = 0.07;
pub const CONTINUAL_WINDOW: f64 = 0.2;
pub const CONTINUAL_PHASE_SAMPLES: usize = 200;

/// Sum of the five Gaussian peaks.
pub fn continual_target(x: f64) -> f64 {
    CONTINUAL_CENTERS
        .iter()
        .map(|c| (-(x - c) * (x - c) / (2.0 * CONTINUAL_WIDTH * CONTINUAL_WIDTH)).exp())
        .sum()
}

/// Phases presented one after another, plus a dense evaluation grid.
#[derive(Debug, Clone)]
pub struct ContinualTask {
    pub phases: Vec<Dataset>,
    /// `(lo, hi)` of each phase's window.
    pub windows: Vec<(f64, f64)>,
    pub grid: Matrix,
    pub grid_targets: Matrix,
}

impl ContinualTask {
    /// Rows of the evaluation grid inside window `j`.
    pub fn window_rows(&self, j: usize) -> Vec<usize> {
        let (lo, hi) = self.windows[j];
        (0..self.grid.rows())
            .filter(|&r| {
                let x = self.grid.get(r, 0);
                x >= lo && x <= hi
            })
            .collect()
    }
}

pub fn gen_continual(seed: u64) -> Result<ContinualTask> {
    let mut phases = Vec::new();
    let mut windows = Vec::new();
    for (j, &c) in CONTINUAL_CENTERS.iter().enumerate() {
        let window = (c - CONTINUAL_WINDOW, c + CONTINUAL_WINDOW);
        let ds = labelled(
            &format!("continual_phase_{}", j + 1),
            vec![window],
            CONTINUAL_PHASE_SAMPLES,
            0,
            seed.wrapping_add(j as u64),
            1,
            |x, y| y[0] = continual_target(x[0]),
        )?;
        phases.push(ds);
        windows.push(window);
    }
    let n = 1001;
    let xs: Vec<f64> = (0..n).map(|q| -1.0 + 2.0 * q as f64 / (n - 1) as f64).collect();
    let ys: Vec<f64> = xs.iter().map(|&x| continual_target(x)).collect();
    Ok(ContinualTask {
        phases,
        windows,
        grid: Matrix::new(n, 1, xs)?,
        grid_targets: Matrix::new(n, 1, ys)?,
    })
}

/// Six features with x3 = exp(sin(x1) + x2^2) and x5 = x4^3.
pub fn unsupervised_positive(x1: f64, x2: f64, x4: f64, x6: f64) -> [f64; 6] {
    [x1, x2, (x1.sin() + x2 * x2).exp(), x4, x4 * x4 * x4, x6]
}

/// Positive rows and their column-permuted negatives.
pub fn gen_unsupervised6(n: usize, seed: u64) -> (Matrix, Matrix) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pos = Matrix::zeros(n, 6);
    for r in 0..n {
        let v: [f64; 4] = std::array::from_fn(|_| rng.random_range(-1.0..=1.0));
        pos.row_mut(r).copy_from_slice(&unsupervised_positive(v[0], v[1], v[2], v[3]));
    }
    let mut neg = Matrix::zeros(n, 6);
    for c in 0..6 {
        let mut col = pos.column(c);
        col.shuffle(&mut rng);
        for (r, v) in col.into_iter().enumerate() {
            neg.row_mut(r)[c] = v;
        }
    }
    (pos, neg)
}

/// Domain box of the six features.
pub fn unsupervised_domain() -> Vec<(f64, f64)> {
    let s1 = 1f64.sin();
    vec![
        (-1.0, 1.0),
        (-1.0, 1.0),
        ((-s1).exp(), (s1 + 1.0).exp()),
        (-1.0, 1.0),
        (-1.0, 1.0),
        (-1.0, 1.0),
    ]
}

/// Labelled contrastive dataset: `n_train` positives and as many negatives for
/// training, likewise for testing. Positives are labelled 1.
pub fn unsupervised_dataset(n_train: usize, n_test: usize, seed: u64) -> Result<Dataset> {
    let (tp, tn) = gen_unsupervised6(n_train, seed);
    let (sp, sn) = gen_unsupervised6(n_test, seed.wrapping_add(0x5eed));
    let inputs = tp.vstack(&tn)?.vstack(&sp)?.vstack(&sn)?;
    let mut labels = Vec::with_capacity(inputs.rows());
    labels.extend(std::iter::repeat_n(1.0, n_train));
    labels.extend(std::iter::repeat_n(0.0, n_train));
    labels.extend(std::iter::repeat_n(1.0, n_test));
    labels.extend(std::iter::repeat_n(0.0, n_test));
    let n = inputs.rows();
    let targets = Matrix::new(n, 1, labels)?;
    Dataset::split_at("unsupervised_6d", inputs, targets, 2 * n_train, unsupervised_domain())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bessel_branches_meet() {
        let below = bessel_j0(12.0 - 1e-12);
        let above = bessel_j0(12.0);
        assert!((below - above).abs() < 1e-11);
    }

    #[test]
    fn unknown_names() {
        assert!(matches!(gen_toy("nope", 1, 1, 0), Err(KanError::UnknownTask(_))));
        assert!(matches!(gen_feynman("I.1.1", 1, 1, 0), Err(KanError::UnknownTask(_))));
        assert!(matches!(gen_task("x", 1, 1, 0), Err(KanError::UnknownTask(_))));
    }

    #[test]
    fn categorical_is_one_hot() {
        let ds = gen_interpretable("categorical", 50, 0, 1).unwrap();
        for r in 0..50 {
            assert_eq!(ds.targets.row(r).iter().sum::<f64>(), 1.0);
        }
    }
}
