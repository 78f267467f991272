//! LBFGS with a strong Wolfe line search, and Adam.
//!
//! Objectives map a parameter vector to `(value, gradient)`. A non-finite
//! value is treated as `+inf` by the line search.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LbfgsConfig {
    pub memory: usize,
    pub wolfe_c1: f64,
    pub wolfe_c2: f64,
    pub max_linesearch: usize,
    /// Stop once `max |g_i|` falls below this.
    pub tolerance_grad: f64,
}

impl Default for LbfgsConfig {
    fn default() -> Self {
        Self {
            memory: 10,
            wolfe_c1: 1e-4,
            wolfe_c2: 0.9,
            max_linesearch: 25,
            tolerance_grad: 1e-14,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-2,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum OptimizerConfig {
    Lbfgs(LbfgsConfig),
    Adam(AdamConfig),
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self::Lbfgs(LbfgsConfig::default())
    }
}

/// What one optimizer step did.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepInfo {
    pub value: f64,
    pub evaluations: usize,
    /// The Wolfe search failed and a backtracking gradient step was taken.
    pub fallback: bool,
    /// No further progress is possible.
    pub converged: bool,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn axpy(x: &[f64], alpha: f64, d: &[f64]) -> Vec<f64> {
    x.iter().zip(d).map(|(x, d)| x + alpha * d).collect()
}

fn finite_or_inf(f: f64) -> f64 {
    if f.is_finite() {
        f
    } else {
        f64::INFINITY
    }
}

/// Limited-memory BFGS state.
#[derive(Debug, Clone)]
pub struct Lbfgs {
    config: LbfgsConfig,
    x: Vec<f64>,
    f: f64,
    g: Vec<f64>,
    s: VecDeque<Vec<f64>>,
    y: VecDeque<Vec<f64>>,
    converged: bool,
    fallbacks: usize,
}

struct Trial {
    alpha: f64,
    f: f64,
    g: Vec<f64>,
    dg: f64,
}

impl Lbfgs {
    /// Start from `x0`, evaluating the objective once.
    pub fn new<F>(config: LbfgsConfig, x0: Vec<f64>, objective: &mut F) -> Self
    where
        F: FnMut(&[f64]) -> (f64, Vec<f64>),
    {
        let (f, g) = objective(&x0);
        let converged = g.iter().all(|v| v.abs() <= config.tolerance_grad);
        Self {
            config,
            x: x0,
            f: finite_or_inf(f),
            g,
            s: VecDeque::new(),
            y: VecDeque::new(),
            converged,
            fallbacks: 0,
        }
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    pub fn value(&self) -> f64 {
        self.f
    }

    pub fn gradient(&self) -> &[f64] {
        &self.g
    }

    pub fn converged(&self) -> bool {
        self.converged
    }

    pub fn fallbacks(&self) -> usize {
        self.fallbacks
    }

    fn direction(&self) -> Vec<f64> {
        let mut q: Vec<f64> = self.g.iter().map(|v| -v).collect();
        let m = self.s.len();
        let mut alphas = vec![0.0; m];
        for k in (0..m).rev() {
            let rho = 1.0 / dot(&self.y[k], &self.s[k]);
            alphas[k] = rho * dot(&self.s[k], &q);
            for (qi, yi) in q.iter_mut().zip(&self.y[k]) {
                *qi -= alphas[k] * yi;
            }
        }
        if m > 0 {
            let gamma = dot(&self.s[m - 1], &self.y[m - 1]) / dot(&self.y[m - 1], &self.y[m - 1]);
            q.iter_mut().for_each(|v| *v *= gamma);
        }
        for k in 0..m {
            let rho = 1.0 / dot(&self.y[k], &self.s[k]);
            let beta = rho * dot(&self.y[k], &q);
            for (qi, si) in q.iter_mut().zip(&self.s[k]) {
                *qi += (alphas[k] - beta) * si;
            }
        }
        q
    }

    /// One quasi-Newton iteration. Values never increase.
    pub fn step<F>(&mut self, objective: &mut F) -> StepInfo
    where
        F: FnMut(&[f64]) -> (f64, Vec<f64>),
    {
        if self.converged || !self.f.is_finite() {
            self.converged = true;
            return StepInfo {
                value: self.f,
                evaluations: 0,
                fallback: false,
                converged: true,
            };
        }
        let mut d = self.direction();
        let mut gd = dot(&self.g, &d);
        if !(gd < 0.0) || !gd.is_finite() {
            self.s.clear();
            self.y.clear();
            d = self.g.iter().map(|v| -v).collect();
            gd = -dot(&self.g, &self.g);
        }
        let alpha0 = if self.s.is_empty() {
            let l1: f64 = self.g.iter().map(|v| v.abs()).sum();
            (1.0 / l1).min(1.0)
        } else {
            1.0
        };
        let mut evaluations = 0;
        match self.line_search(objective, &d, gd, alpha0, &mut evaluations) {
            Some(t) => {
                let x_new = axpy(&self.x, t.alpha, &d);
                let s: Vec<f64> = x_new.iter().zip(&self.x).map(|(a, b)| a - b).collect();
                let y: Vec<f64> = t.g.iter().zip(&self.g).map(|(a, b)| a - b).collect();
                let sy = dot(&s, &y);
                if sy > 1e-12 * dot(&y, &y).max(f64::MIN_POSITIVE) && sy.is_finite() {
                    if self.s.len() == self.config.memory {
                        self.s.pop_front();
                        self.y.pop_front();
                    }
                    self.s.push_back(s);
                    self.y.push_back(y);
                }
                self.x = x_new;
                self.f = t.f;
                self.g = t.g;
                self.converged = self.g.iter().all(|v| v.abs() <= self.config.tolerance_grad);
                StepInfo {
                    value: self.f,
                    evaluations,
                    fallback: false,
                    converged: self.converged,
                }
            }
            None => {
                self.fallbacks += 1;
                self.s.clear();
                self.y.clear();
                let moved = self.backtrack(objective, &mut evaluations);
                if !moved {
                    self.converged = true;
                }
                StepInfo {
                    value: self.f,
                    evaluations,
                    fallback: true,
                    converged: self.converged,
                }
            }
        }
    }

    /// Steepest descent with Armijo backtracking.
    fn backtrack<F>(&mut self, objective: &mut F, evaluations: &mut usize) -> bool
    where
        F: FnMut(&[f64]) -> (f64, Vec<f64>),
    {
        let gg = dot(&self.g, &self.g);
        if !(gg > 0.0) {
            return false;
        }
        let d: Vec<f64> = self.g.iter().map(|v| -v).collect();
        let mut alpha = 1.0 / gg.sqrt().max(1.0);
        for _ in 0..60 {
            let x = axpy(&self.x, alpha, &d);
            let (f, g) = objective(&x);
            *evaluations += 1;
            let f = finite_or_inf(f);
            if f < self.f && f <= self.f - self.config.wolfe_c1 * alpha * gg {
                self.x = x;
                self.f = f;
                self.g = g;
                return true;
            }
            alpha *= 0.5;
        }
        false
    }

    fn line_search<F>(
        &self,
        objective: &mut F,
        d: &[f64],
        gd0: f64,
        alpha0: f64,
        evaluations: &mut usize,
    ) -> Option<Trial>
    where
        F: FnMut(&[f64]) -> (f64, Vec<f64>),
    {
        let (c1, c2) = (self.config.wolfe_c1, self.config.wolfe_c2);
        let f0 = self.f;
        let max = self.config.max_linesearch.max(1);
        let mut eval = |alpha: f64, evaluations: &mut usize| {
            let (f, g) = objective(&axpy(&self.x, alpha, d));
            *evaluations += 1;
            let dg = dot(&g, d);
            Trial {
                alpha,
                f: finite_or_inf(f),
                g,
                dg,
            }
        };
        let mut prev = Trial {
            alpha: 0.0,
            f: f0,
            g: self.g.clone(),
            dg: gd0,
        };
        let mut alpha = alpha0;
        let mut first = true;
        while *evaluations < max {
            let t = eval(alpha, evaluations);
            if t.f > f0 + c1 * alpha * gd0 || (!first && t.f >= prev.f) {
                return zoom(&mut eval, prev, t, f0, gd0, c1, c2, max, evaluations);
            }
            if t.dg.abs() <= -c2 * gd0 {
                return Some(t);
            }
            if t.dg >= 0.0 {
                return zoom(&mut eval, t, prev, f0, gd0, c1, c2, max, evaluations);
            }
            first = false;
            let next = (alpha * 2.0).max(alpha + 1e-12);
            prev = t;
            alpha = next.min(alpha * 10.0);
        }
        None
    }
}

/// Minimizer of the cubic through two points with slopes, clamped to the
/// safeguarded interior of `[lo, hi]`; bisects when the cubic is unusable.
fn cubic_step(a: &Trial, b: &Trial) -> f64 {
    let (lo, hi) = if a.alpha < b.alpha { (a.alpha, b.alpha) } else { (b.alpha, a.alpha) };
    let mid = 0.5 * (lo + hi);
    if !(a.f.is_finite() && b.f.is_finite() && a.dg.is_finite() && b.dg.is_finite()) {
        return mid;
    }
    let d1 = a.dg + b.dg - 3.0 * (a.f - b.f) / (a.alpha - b.alpha);
    let disc = d1 * d1 - a.dg * b.dg;
    if !(disc >= 0.0) {
        return mid;
    }
    let d2 = disc.sqrt() * (b.alpha - a.alpha).signum();
    let t = b.alpha - (b.alpha - a.alpha) * (b.dg + d2 - d1) / (b.dg - a.dg + 2.0 * d2);
    let margin = 0.1 * (hi - lo);
    if !t.is_finite() {
        return mid;
    }
    t.clamp(lo + margin, hi - margin)
}

#[allow(clippy::too_many_arguments)]
fn zoom<E>(
    eval: &mut E,
    mut lo: Trial,
    mut hi: Trial,
    f0: f64,
    gd0: f64,
    c1: f64,
    c2: f64,
    max: usize,
    evaluations: &mut usize,
) -> Option<Trial>
where
    E: FnMut(f64, &mut usize) -> Trial,
{
    while *evaluations < max {
        if (hi.alpha - lo.alpha).abs() < 1e-16 * lo.alpha.abs().max(1e-300) {
            break;
        }
        let alpha = cubic_step(&lo, &hi);
        let t = eval(alpha, evaluations);
        if t.f > f0 + c1 * alpha * gd0 || t.f >= lo.f {
            hi = t;
        } else {
            if t.dg.abs() <= -c2 * gd0 {
                return Some(t);
            }
            if t.dg * (hi.alpha - lo.alpha) >= 0.0 {
                hi = std::mem::replace(&mut lo, t);
            } else {
                lo = t;
            }
        }
    }
    None
}

/// Result of [`lbfgs_minimize`].
#[derive(Debug, Clone, PartialEq)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub fallbacks: usize,
    pub converged: bool,
    /// Objective value after each iteration.
    pub trajectory: Vec<f64>,
}

/// Run up to `max_iter` LBFGS iterations from `x0`.
pub fn lbfgs_minimize<F>(mut objective: F, x0: Vec<f64>, config: LbfgsConfig, max_iter: usize) -> Minimum
where
    F: FnMut(&[f64]) -> (f64, Vec<f64>),
{
    let mut opt = Lbfgs::new(config, x0, &mut objective);
    let mut trajectory = vec![opt.value()];
    let mut iterations = 0;
    while iterations < max_iter && !opt.converged() {
        let info = opt.step(&mut objective);
        iterations += 1;
        trajectory.push(info.value);
    }
    Minimum {
        x: opt.x.clone(),
        value: opt.f,
        iterations,
        fallbacks: opt.fallbacks,
        converged: opt.converged,
        trajectory,
    }
}

/// Adam with bias correction.
#[derive(Debug, Clone)]
pub struct Adam {
    config: AdamConfig,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    pub fn new(config: AdamConfig, n: usize) -> Self {
        Self {
            config,
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    pub fn step(&mut self, x: &mut [f64], g: &[f64]) {
        let c = self.config;
        self.t += 1;
        let bc1 = 1.0 - c.beta1.powi(self.t);
        let bc2 = 1.0 - c.beta2.powi(self.t);
        for i in 0..x.len() {
            self.m[i] = c.beta1 * self.m[i] + (1.0 - c.beta1) * g[i];
            self.v[i] = c.beta2 * self.v[i] + (1.0 - c.beta2) * g[i] * g[i];
            let mh = self.m[i] / bc1;
            let vh = self.v[i] / bc2;
            x[i] -= c.lr * mh / (vh.sqrt() + c.eps);
        }
    }
}
