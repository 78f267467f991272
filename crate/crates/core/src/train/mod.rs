//! Losses, sparsity regularization, optimizers and the grid-extension
//! training schedule.

mod history;
pub mod mlp;
pub mod optim;

pub use history::{History, HistoryRow};
pub use mlp::{Mlp, MlpActivation};
pub use optim::{
    lbfgs_minimize, Adam, AdamConfig, Lbfgs, LbfgsConfig, Minimum, OptimizerConfig, StepInfo,
};

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{KanError, Result};
use crate::exec::Execution;
use crate::matrix::Matrix;
use crate::network::{ForwardTrace, Gradients, KanNetwork, ParamMask, PostCotangents};
use crate::spline::{extend_grid, Grid, GridAdaptation};

/// Below this probability the log in binary cross-entropy continues as its
/// tangent line.
pub const BCE_CLAMP: f64 = 1e-7;

/// `ln q`, extended linearly below [`BCE_CLAMP`]; returns value and slope.
fn log_ext(q: f64) -> (f64, f64) {
    if q >= BCE_CLAMP {
        (q.ln(), 1.0 / q)
    } else {
        (BCE_CLAMP.ln() + (q - BCE_CLAMP) / BCE_CLAMP, 1.0 / BCE_CLAMP)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    #[default]
    Rmse,
    Mse,
    /// Outputs are probabilities; targets are 0 or 1.
    BinaryCrossEntropy,
    /// Outputs are logits; targets are one-hot rows.
    SoftmaxCrossEntropy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub lambda: f64,
    pub mu1: f64,
    pub mu2: f64,
    pub steps_per_stage: usize,
    pub grid_schedule: Vec<usize>,
    pub optimizer: OptimizerConfig,
    pub seed: u64,
    pub lock_affine_trainable: bool,
    pub loss: LossKind,
    /// Regularizer cotangents reach only the edges they measure.
    pub stop_gradient_reg: bool,
    pub train_base: bool,
    pub train_spline_scale: bool,
    /// Re-place grids on the traced activations at every stage. When off,
    /// grids keep their bounds and are only refined to the stage size.
    pub grid_update: bool,
    pub adapt: GridAdaptation,
    /// Re-place grids on the current activations every this many steps
    /// early in each stage; 0 disables.
    pub grid_update_every: usize,
    /// Steps into each stage after which grids stay put.
    pub grid_update_until: usize,
    pub execution: Execution,
    /// Fill the `seconds` history column; off keeps runs byte-identical.
    pub record_wall_clock: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lambda: 0.0,
            mu1: 1.0,
            mu2: 1.0,
            steps_per_stage: 200,
            grid_schedule: vec![3],
            optimizer: OptimizerConfig::default(),
            seed: 0,
            lock_affine_trainable: false,
            loss: LossKind::Rmse,
            stop_gradient_reg: false,
            train_base: true,
            train_spline_scale: true,
            grid_update: true,
            adapt: GridAdaptation::default(),
            grid_update_every: 5,
            grid_update_until: 50,
            execution: Execution::default(),
            record_wall_clock: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(KanError::Config(format!("lambda must be ≥ 0, got {}", self.lambda)));
        }
        if !(self.mu1.is_finite() && self.mu2.is_finite()) {
            return Err(KanError::Config("mu1 and mu2 must be finite".into()));
        }
        if self.grid_schedule.is_empty() {
            return Err(KanError::Config("grid schedule is empty".into()));
        }
        if self.grid_schedule.contains(&0) {
            return Err(KanError::Config("grid sizes must be ≥ 1".into()));
        }
        if self.grid_schedule.windows(2).any(|w| w[1] <= w[0]) {
            return Err(KanError::Config("grid schedule must be strictly increasing".into()));
        }
        Ok(())
    }

    pub fn mask(&self) -> ParamMask {
        ParamMask {
            base_weights: self.train_base,
            spline_weights: self.train_spline_scale,
            coeffs: true,
            lock_affine: self.lock_affine_trainable,
        }
    }
}

/// Regularization weights, split from [`TrainConfig`] for objectives.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RegWeights {
    pub lambda: f64,
    pub mu1: f64,
    pub mu2: f64,
    pub stop_gradient: bool,
}

impl From<&TrainConfig> for RegWeights {
    fn from(c: &TrainConfig) -> Self {
        Self {
            lambda: c.lambda,
            mu1: c.mu1,
            mu2: c.mu2,
            stop_gradient: c.stop_gradient_reg,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub pred_loss: f64,
    pub reg_loss: f64,
    /// `|Phi_l|_1` per layer.
    pub l1: Vec<f64>,
    /// `S(Phi_l)` per layer.
    pub entropy: Vec<f64>,
    pub total: f64,
}

impl LossReport {
    pub fn l1_sum(&self) -> f64 {
        self.l1.iter().sum()
    }

    pub fn entropy_sum(&self) -> f64 {
        self.entropy.iter().sum()
    }
}

/// Mean absolute post-activation of edge `(l, i, j)`.
pub fn activation_l1(trace: &ForwardTrace, l: usize, j: usize, i: usize) -> f64 {
    let n = trace.batch();
    if n == 0 {
        return 0.0;
    }
    let m = trace.shape()[l] * trace.shape()[l + 1];
    let e = j * trace.shape()[l] + i;
    let post = trace.post_layer(l);
    (0..n).map(|s| post[s * m + e].abs()).sum::<f64>() / n as f64
}

/// `|phi|_1` for every edge of layer `l`, in edge storage order.
pub fn layer_l1(trace: &ForwardTrace, l: usize) -> Vec<f64> {
    let n = trace.batch();
    let m = trace.shape()[l] * trace.shape()[l + 1];
    let post = trace.post_layer(l);
    let mut acc = vec![0.0; m];
    for s in 0..n {
        for (a, v) in acc.iter_mut().zip(&post[s * m..(s + 1) * m]) {
            *a += v.abs();
        }
    }
    if n > 0 {
        acc.iter_mut().for_each(|a| *a /= n as f64);
    }
    acc
}

/// Entropy of the normalized magnitudes; 0 when every entry is 0.
pub fn layer_entropy(l1: &[f64]) -> f64 {
    let total: f64 = l1.iter().sum();
    if !(total > 0.0) {
        return 0.0;
    }
    l1.iter()
        .filter(|&&a| a > 0.0)
        .map(|&a| {
            let p = a / total;
            -p * p.ln()
        })
        .sum()
}

/// Regularizer value terms and the post-activation cotangents they induce.
pub fn regularization(
    net: &KanNetwork,
    trace: &ForwardTrace,
    w: RegWeights,
) -> (Vec<f64>, Vec<f64>, Option<PostCotangents>) {
    let n = trace.batch();
    let mut l1s = Vec::with_capacity(net.depth());
    let mut ents = Vec::with_capacity(net.depth());
    let mut cot = Vec::with_capacity(net.depth());
    let active = w.lambda != 0.0 && n > 0;
    for (l, layer) in net.layers().iter().enumerate() {
        let mut a = layer_l1(trace, l);
        for (e, edge) in layer.edges().iter().enumerate() {
            if edge.is_locked() {
                a[e] = 0.0;
            }
        }
        let total: f64 = a.iter().sum();
        let s = layer_entropy(&a);
        l1s.push(total);
        ents.push(s);
        if !active {
            continue;
        }
        let m = a.len();
        let coef: Vec<f64> = a
            .iter()
            .zip(layer.edges())
            .map(|(&ae, edge)| {
                if edge.is_locked() {
                    return 0.0;
                }
                let mut c = w.mu1;
                if total > 0.0 && ae > 0.0 {
                    c += w.mu2 * (-(ae / total).ln() - s) / total;
                }
                w.lambda * c / n as f64
            })
            .collect();
        let post = trace.post_layer(l);
        let mut buf = vec![0.0; n * m];
        for s in 0..n {
            for e in 0..m {
                let v = post[s * m + e];
                let sign = if v > 0.0 {
                    1.0
                } else if v < 0.0 {
                    -1.0
                } else {
                    0.0
                };
                buf[s * m + e] = coef[e] * sign;
            }
        }
        cot.push(buf);
    }
    let extra = active.then(|| PostCotangents {
        layers: cot,
        propagate: !w.stop_gradient,
    });
    (l1s, ents, extra)
}

/// Prediction loss and its output cotangent.
pub fn prediction_loss(kind: LossKind, y: &Matrix, t: &Matrix) -> Result<(f64, Matrix)> {
    if y.rows() != t.rows() || y.cols() != t.cols() {
        return Err(KanError::Dimension {
            expected: y.rows() * y.cols(),
            got: t.rows() * t.cols(),
        });
    }
    if y.rows() == 0 {
        return Err(KanError::EmptySamples);
    }
    let count = (y.rows() * y.cols()) as f64;
    let mut dy = Matrix::zeros(y.rows(), y.cols());
    let loss = match kind {
        LossKind::Rmse | LossKind::Mse => {
            let mut sse = 0.0;
            for (r, (a, b)) in y.data().iter().zip(t.data()).enumerate() {
                let d = a - b;
                sse += d * d;
                dy.data_mut()[r] = d;
            }
            let mse = sse / count;
            if kind == LossKind::Mse {
                dy.data_mut().iter_mut().for_each(|v| *v *= 2.0 / count);
                mse
            } else {
                let rmse = mse.sqrt();
                let scale = if rmse > 0.0 { 1.0 / (count * rmse) } else { 0.0 };
                dy.data_mut().iter_mut().for_each(|v| *v *= scale);
                rmse
            }
        }
        LossKind::BinaryCrossEntropy => {
            let mut total = 0.0;
            for (r, (&p, &t)) in y.data().iter().zip(t.data()).enumerate() {
                let (lp, dp) = log_ext(p);
                let (lq, dq) = log_ext(1.0 - p);
                total -= t * lp + (1.0 - t) * lq;
                dy.data_mut()[r] = ((1.0 - t) * dq - t * dp) / count;
            }
            total / count
        }
        LossKind::SoftmaxCrossEntropy => {
            let n = y.rows() as f64;
            let mut total = 0.0;
            for r in 0..y.rows() {
                let row = y.row(r);
                let mx = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let z: f64 = row.iter().map(|v| (v - mx).exp()).sum();
                let lz = z.ln() + mx;
                for c in 0..y.cols() {
                    let tc = t.get(r, c);
                    total -= tc * (row[c] - lz);
                    let p = (row[c] - lz).exp();
                    dy.row_mut(r)[c] = (p - tc) / n;
                }
            }
            total / n
        }
    };
    Ok((loss, dy))
}

/// RMSE between two equally shaped matrices.
pub fn rmse(y: &Matrix, t: &Matrix) -> f64 {
    let n = y.data().len().max(1) as f64;
    (y.data()
        .iter()
        .zip(t.data())
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / n)
        .sqrt()
}

/// Prediction loss plus regularization on one batch, with gradients.
pub fn total_loss(
    net: &KanNetwork,
    inputs: &Matrix,
    targets: &Matrix,
    kind: LossKind,
    reg: RegWeights,
    exec: Execution,
) -> Result<(LossReport, Gradients)> {
    if inputs.rows() == 0 {
        return Err(KanError::EmptySamples);
    }
    let (y, trace) = net.forward(inputs, exec)?;
    let (pred, dy) = prediction_loss(kind, &y, targets)?;
    let (l1, entropy, extra) = regularization(net, &trace, reg);
    let grads = net.backward(&trace, &dy, extra.as_ref(), exec)?;
    Ok((assemble_report(pred, l1, entropy, reg), grads))
}

pub fn assemble_report(pred: f64, l1: Vec<f64>, entropy: Vec<f64>, reg: RegWeights) -> LossReport {
    let reg_loss = reg.lambda * (reg.mu1 * l1.iter().sum::<f64>() + reg.mu2 * entropy.iter().sum::<f64>());
    LossReport {
        pred_loss: pred,
        reg_loss,
        total: pred + reg_loss,
        l1,
        entropy,
    }
}

/// A trainable loss over a network.
pub trait Objective: Sync {
    /// Loss and gradients at the current state.
    fn evaluate(&self, net: &KanNetwork, reg: RegWeights, exec: Execution) -> Result<(LossReport, Gradients)>;

    /// Inputs whose activations place the grids.
    fn grid_inputs(&self) -> &Matrix;

    /// `(train_rmse, test_rmse)` for the history.
    fn metrics(&self, net: &KanNetwork, exec: Execution) -> Result<(f64, f64)>;
}

/// Regression or classification against a dataset split.
#[derive(Debug, Clone)]
pub struct Supervised {
    pub train_x: Matrix,
    pub train_y: Matrix,
    pub test_x: Matrix,
    pub test_y: Matrix,
    pub loss: LossKind,
}

impl Supervised {
    pub fn new(data: &Dataset, loss: LossKind) -> Self {
        Self {
            train_x: data.train_inputs(),
            train_y: data.train_targets(),
            test_x: data.test_inputs(),
            test_y: data.test_targets(),
            loss,
        }
    }
}

impl Objective for Supervised {
    fn evaluate(&self, net: &KanNetwork, reg: RegWeights, exec: Execution) -> Result<(LossReport, Gradients)> {
        total_loss(net, &self.train_x, &self.train_y, self.loss, reg, exec)
    }

    fn grid_inputs(&self) -> &Matrix {
        &self.train_x
    }

    fn metrics(&self, net: &KanNetwork, exec: Execution) -> Result<(f64, f64)> {
        let train = rmse(&net.predict(&self.train_x, exec)?, &self.train_y);
        let test = if self.test_x.rows() > 0 {
            rmse(&net.predict(&self.test_x, exec)?, &self.test_y)
        } else {
            f64::NAN
        };
        Ok((train, test))
    }
}

/// Result of a training run.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub network: KanNetwork,
    pub history: History,
    pub final_loss: Option<LossReport>,
    /// Stages cut short by a non-finite loss, as `(G, step)`.
    pub diverged: Vec<(usize, usize)>,
    pub fallback_steps: usize,
}

/// Refine every unlocked edge to `intervals` uniform intervals on its current bounds.
pub fn refine_grids_fixed(net: &KanNetwork, intervals: usize, samples: usize) -> Result<KanNetwork> {
    let mut out = net.clone();
    for l in 0..net.depth() {
        let layer = net.layer(l);
        for i in 0..layer.n_in() {
            for j in 0..layer.n_out() {
                let edge = layer.edge(i, j);
                if edge.is_locked() || edge.curve.grid().intervals() == intervals {
                    continue;
                }
                let g = edge.curve.grid();
                let new_grid = Grid::uniform(g.a(), g.b(), intervals, g.order())?;
                let n = samples.max(2 * (intervals + g.order()));
                let xs: Vec<f64> = (0..n)
                    .map(|q| g.a() + (g.b() - g.a()) * q as f64 / (n - 1) as f64)
                    .collect();
                let curve = extend_grid(&edge.curve, &new_grid, &xs)?;
                out.edge_mut(l, i, j)?.curve = curve;
            }
        }
    }
    out.bump_version();
    Ok(out)
}

/// Train on a dataset.
pub fn train(net: &KanNetwork, data: &Dataset, cfg: &TrainConfig) -> Result<TrainOutcome> {
    let obj = Supervised::new(data, cfg.loss);
    train_objective(net, &obj, cfg)
}

/// Evaluates an objective at flattened parameters, remembering the last report.
struct Evaluator<'a, O: Objective> {
    obj: &'a O,
    work: KanNetwork,
    mask: ParamMask,
    reg: RegWeights,
    exec: Execution,
    last: Option<(Vec<f64>, LossReport)>,
}

impl<O: Objective> Evaluator<'_, O> {
    fn eval(&mut self, p: &[f64]) -> (f64, Vec<f64>) {
        if self.work.set_params(p, self.mask).is_err() {
            return (f64::NAN, vec![0.0; p.len()]);
        }
        match self.obj.evaluate(&self.work, self.reg, self.exec) {
            Ok((report, grads)) => {
                let g = grads.flatten(&self.work, self.mask);
                let v = report.total;
                self.last = Some((p.to_vec(), report));
                (v, g)
            }
            Err(_) => (f64::NAN, vec![0.0; p.len()]),
        }
    }

    fn report_at(&mut self, p: &[f64]) -> Result<LossReport> {
        if let Some((q, r)) = &self.last {
            if q.as_slice() == p {
                return Ok(r.clone());
            }
        }
        self.work.set_params(p, self.mask)?;
        let (report, _) = self.obj.evaluate(&self.work, self.reg, self.exec)?;
        self.last = Some((p.to_vec(), report.clone()));
        Ok(report)
    }
}

/// The staircase schedule: for each grid size, place grids on the traced
/// activations, then run `steps_per_stage` optimizer steps.
pub fn train_objective<O: Objective>(net: &KanNetwork, obj: &O, cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    let exec = cfg.execution;
    let mask = cfg.mask();
    let start = Instant::now();
    let mut net = net.clone();
    let mut history = History::default();
    let mut diverged = Vec::new();
    let mut fallback_steps = 0;
    let mut final_loss = None;
    let mut step_index = 0;
    let record = |net: &KanNetwork, report: &LossReport, step: usize, g: usize, history: &mut History| -> Result<()> {
        let (train_rmse, test_rmse) = obj.metrics(net, exec)?;
        history.push(HistoryRow {
            step,
            grid: g,
            train_rmse,
            test_rmse,
            l1: report.l1_sum(),
            entropy: report.entropy_sum(),
            seconds: if cfg.record_wall_clock {
                start.elapsed().as_secs_f64()
            } else {
                0.0
            },
        });
        Ok(())
    };
    for &g in &cfg.grid_schedule {
        net = if cfg.grid_update {
            let (_, trace) = net.forward(obj.grid_inputs(), exec)?;
            net.extend_all_grids(&trace, g, cfg.adapt, exec)?
        } else {
            refine_grids_fixed(&net, g, 1000)?
        };
        let mut ev = Evaluator {
            obj,
            work: net.clone(),
            mask,
            reg: RegWeights::from(cfg),
            exec,
            last: None,
        };
        let x0 = net.params(mask);
        let any_spline = !net.all_locked();
        let refresh = |k: usize| any_spline && cfg.grid_update && cfg.grid_update_every > 0 && k > 0 && k < cfg.grid_update_until && k % cfg.grid_update_every == 0;
        match cfg.optimizer {
            OptimizerConfig::Lbfgs(lc) => {
                let mut opt = Lbfgs::new(lc, x0, &mut |p: &[f64]| ev.eval(p));
                if !opt.value().is_finite() {
                    diverged.push((g, step_index));
                    continue;
                }
                let mut report = ev.report_at(opt.x())?;
                for k in 0..cfg.steps_per_stage {
                    if refresh(k) {
                        net.set_params(opt.x(), mask)?;
                        let (_, trace) = net.forward(obj.grid_inputs(), exec)?;
                        net = net.extend_all_grids(&trace, g, cfg.adapt, exec)?;
                        ev.work = net.clone();
                        ev.last = None;
                        opt = Lbfgs::new(lc, net.params(mask), &mut |p: &[f64]| ev.eval(p));
                        report = ev.report_at(opt.x())?;
                    }
                    step_index += 1;
                    if !opt.converged() {
                        let info = opt.step(&mut |p: &[f64]| ev.eval(p));
                        if info.fallback {
                            fallback_steps += 1;
                        }
                        if !info.value.is_finite() {
                            diverged.push((g, step_index));
                            break;
                        }
                        report = ev.report_at(opt.x())?;
                    }
                    net.set_params(opt.x(), mask)?;
                    record(&net, &report, step_index, g, &mut history)?;
                }
                net.set_params(opt.x(), mask)?;
                final_loss = Some(report);
            }
            OptimizerConfig::Adam(ac) => {
                let mut x = x0;
                let mut adam = Adam::new(ac, x.len());
                for k in 0..cfg.steps_per_stage {
                    if refresh(k) {
                        net.set_params(&x, mask)?;
                        let (_, trace) = net.forward(obj.grid_inputs(), exec)?;
                        net = net.extend_all_grids(&trace, g, cfg.adapt, exec)?;
                        ev.work = net.clone();
                        ev.last = None;
                        x = net.params(mask);
                    }
                    step_index += 1;
                    let (v, grad) = ev.eval(&x);
                    if !v.is_finite() {
                        diverged.push((g, step_index));
                        break;
                    }
                    let prev = x.clone();
                    adam.step(&mut x, &grad);
                    let report = match ev.report_at(&x) {
                        Ok(r) if r.total.is_finite() => r,
                        _ => {
                            x = prev;
                            diverged.push((g, step_index));
                            break;
                        }
                    };
                    net.set_params(&x, mask)?;
                    record(&net, &report, step_index, g, &mut history)?;
                    final_loss = Some(report);
                }
                net.set_params(&x, mask)?;
            }
        }
    }
    Ok(TrainOutcome {
        network: net,
        history,
        final_loss,
        diverged,
        fallback_steps,
    })
}
