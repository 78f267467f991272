//! Drivers for the standard experiments: staircase training, scaling sweeps,
//! continual learning, unsupervised relation discovery and the Poisson PDE.

use serde::{Deserialize, Serialize};

use crate::error::{KanError, Result};
use crate::exec::Execution;
use crate::matrix::Matrix;
use crate::network::{init_network, KanNetwork, SymbolicLock, DEFAULT_NOISE_SCALE};
use crate::symbolic::SymbolicFn;
use crate::tasks::{gen_continual, gen_pde, gen_task, unsupervised_dataset, PdeObjective};
use crate::train::mlp::{Mlp, MlpActivation};
use crate::train::optim::OptimizerConfig;
use crate::train::{layer_l1, rmse, train, train_objective, History, LossKind, TrainConfig};

/// Least-squares slope of `ln y` against `ln x`. Needs two distinct positive `x`.
pub fn loglog_slope(xs: &[f64], ys: &[f64]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = xs
        .iter()
        .zip(ys)
        .filter(|(x, y)| **x > 0.0 && **y > 0.0 && y.is_finite())
        .map(|(x, y)| (x.ln(), y.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx <= 0.0 {
        return None;
    }
    Some(pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>() / sxx)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StageSummary {
    pub grid: usize,
    pub params: usize,
    pub train_rmse: f64,
    pub test_rmse: f64,
}

/// End-of-stage rows of a staircase history.
pub fn stage_summaries(history: &History, net: &KanNetwork, grids: &[usize]) -> Vec<StageSummary> {
    grids
        .iter()
        .filter_map(|&g| {
            history.stage(g).last().map(|r| StageSummary {
                grid: g,
                params: param_count_at(net, g),
                train_rmse: r.train_rmse,
                test_rmse: r.test_rmse,
            })
        })
        .collect()
}

/// Parameter count of `net`'s shape at grid size `g`.
fn param_count_at(net: &KanNetwork, g: usize) -> usize {
    net.layers()
        .iter()
        .flat_map(|l| l.edges())
        .map(|e| match e.lock {
            Some(_) => e.num_parameters(),
            None => g + e.curve.grid().order() + 2,
        })
        .sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StaircaseConfig {
    pub task: String,
    pub shape: Vec<usize>,
    pub n_train: usize,
    pub n_test: usize,
    pub order: usize,
    pub seed: u64,
    pub train: TrainConfig,
}

impl Default for StaircaseConfig {
    fn default() -> Self {
        Self {
            task: "exp_sine_2d".into(),
            shape: vec![2, 1, 1],
            n_train: 1000,
            n_test: 1000,
            order: 3,
            seed: 0,
            train: TrainConfig {
                grid_schedule: vec![3, 5, 10, 20, 50],
                steps_per_stage: 200,
                ..TrainConfig::default()
            },
        }
    }
}

#[derive(Debug, Clone)]
pub struct StaircaseReport {
    pub stages: Vec<StageSummary>,
    /// Log-log slope of end-of-stage test RMSE against G.
    pub slope: Option<f64>,
    pub network: KanNetwork,
    pub history: History,
}

impl StaircaseReport {
    /// Train RMSE at the end of every stage is below the one before.
    pub fn monotone(&self) -> bool {
        self.stages.windows(2).all(|w| w[1].train_rmse < w[0].train_rmse)
    }
}

pub fn run_staircase(cfg: &StaircaseConfig) -> Result<StaircaseReport> {
    let data = gen_task(&cfg.task, cfg.n_train, cfg.n_test, cfg.seed)?;
    let first = *cfg
        .train
        .grid_schedule
        .first()
        .ok_or_else(|| KanError::Config("grid schedule is empty".into()))?;
    let net = init_network(&cfg.shape, first, cfg.order, cfg.seed, DEFAULT_NOISE_SCALE)?;
    let out = train(&net, &data, &cfg.train)?;
    let stages = stage_summaries(&out.history, &out.network, &cfg.train.grid_schedule);
    let gs: Vec<f64> = stages.iter().map(|s| s.grid as f64).collect();
    let ys: Vec<f64> = stages.iter().map(|s| s.test_rmse).collect();
    Ok(StaircaseReport {
        slope: loglog_slope(&gs, &ys),
        stages,
        network: out.network,
        history: out.history,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScalingConfig {
    pub task: String,
    pub kan_shapes: Vec<Vec<usize>>,
    pub grids: Vec<usize>,
    pub mlp_depths: Vec<usize>,
    pub mlp_widths: Vec<usize>,
    pub steps: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub seed: u64,
    pub execution: Execution,
}

impl Default for ScalingConfig {
    fn default() -> Self {
        Self {
            task: "exp_sine_2d".into(),
            kan_shapes: vec![vec![2, 1, 1]],
            grids: vec![3, 5, 10, 20, 50],
            mlp_depths: vec![2, 3],
            mlp_widths: vec![8, 16, 32, 64],
            steps: 200,
            n_train: 1000,
            n_test: 1000,
            seed: 0,
            execution: Execution::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScalingRow {
    /// `kan-2-1-1` or `mlp-depth3`.
    pub family: String,
    pub shape: Vec<usize>,
    pub grid: Option<usize>,
    pub params: usize,
    pub test_rmse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScalingReport {
    pub rows: Vec<ScalingRow>,
    /// Log-log slope of test RMSE against parameter count, per family.
    pub slopes: Vec<(String, Option<f64>)>,
}

impl ScalingReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("family,shape,G,params,test_rmse\n");
        for r in &self.rows {
            let shape: Vec<String> = r.shape.iter().map(|s| s.to_string()).collect();
            out.push_str(&format!(
                "{},{},{},{},{:e}\n",
                r.family,
                shape.join("-"),
                r.grid.map(|g| g.to_string()).unwrap_or_default(),
                r.params,
                r.test_rmse
            ));
        }
        out
    }

    pub fn slope(&self, family: &str) -> Option<f64> {
        self.slopes.iter().find(|(f, _)| f == family).and_then(|(_, s)| *s)
    }
}

pub fn kan_family(shape: &[usize]) -> String {
    let s: Vec<String> = shape.iter().map(|v| v.to_string()).collect();
    format!("kan-{}", s.join("-"))
}

pub fn run_scaling(cfg: &ScalingConfig) -> Result<ScalingReport> {
    let data = gen_task(&cfg.task, cfg.n_train, cfg.n_test, cfg.seed)?;
    let mut rows = Vec::new();
    let mut families = Vec::new();
    for shape in &cfg.kan_shapes {
        let sc = StaircaseConfig {
            task: cfg.task.clone(),
            shape: shape.clone(),
            n_train: cfg.n_train,
            n_test: cfg.n_test,
            order: 3,
            seed: cfg.seed,
            train: TrainConfig {
                grid_schedule: cfg.grids.clone(),
                steps_per_stage: cfg.steps,
                execution: cfg.execution,
                ..TrainConfig::default()
            },
        };
        let report = run_staircase(&sc)?;
        let family = kan_family(shape);
        for s in &report.stages {
            rows.push(ScalingRow {
                family: family.clone(),
                shape: shape.clone(),
                grid: Some(s.grid),
                params: s.params,
                test_rmse: s.test_rmse,
            });
        }
        families.push(family);
    }
    let (xt, yt) = (data.test_inputs(), data.test_targets());
    for &depth in &cfg.mlp_depths {
        let family = format!("mlp-depth{depth}");
        for &width in &cfg.mlp_widths {
            let mut mlp = Mlp::with_width(data.d(), data.m(), width, depth, MlpActivation::Tanh, cfg.seed)?;
            mlp.fit(
                &data.train_inputs(),
                &data.train_targets(),
                LossKind::Rmse,
                OptimizerConfig::default(),
                cfg.steps,
                cfg.execution,
            )?;
            rows.push(ScalingRow {
                family: family.clone(),
                shape: mlp.sizes().to_vec(),
                grid: None,
                params: mlp.num_parameters(),
                test_rmse: rmse(&mlp.predict(&xt, cfg.execution)?, &yt),
            });
        }
        families.push(family);
    }
    let slopes = families
        .into_iter()
        .map(|f| {
            let (xs, ys): (Vec<f64>, Vec<f64>) = rows
                .iter()
                .filter(|r| r.family == f)
                .map(|r| (r.params as f64, r.test_rmse))
                .unzip();
            let s = loglog_slope(&xs, &ys);
            (f, s)
        })
        .collect();
    Ok(ScalingReport { rows, slopes })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ContinualConfig {
    pub grid: usize,
    pub steps: usize,
    pub mlp_width: usize,
    pub mlp_depth: usize,
    pub seed: u64,
    pub execution: Execution,
}

impl Default for ContinualConfig {
    fn default() -> Self {
        Self {
            grid: 200,
            steps: 200,
            mlp_width: 64,
            mlp_depth: 3,
            seed: 0,
            execution: Execution::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ContinualReport {
    /// `kan[j][i]`: RMSE on window `i` after phase `j`, for `i <= j`.
    pub kan: Vec<Vec<f64>>,
    pub mlp: Vec<Vec<f64>>,
}

fn max_drift(table: &[Vec<f64>]) -> f64 {
    let mut worst = f64::NEG_INFINITY;
    for (j, row) in table.iter().enumerate().skip(1) {
        for i in 0..j {
            worst = worst.max(row[i] - table[i][i]);
        }
    }
    worst
}

impl ContinualReport {
    /// Largest RMSE increase on an earlier window relative to the end of its own phase.
    pub fn kan_drift(&self) -> f64 {
        max_drift(&self.kan)
    }

    pub fn mlp_drift(&self) -> f64 {
        max_drift(&self.mlp)
    }
}

fn window_rmse(pred: &Matrix, truth: &Matrix, rows: &[usize]) -> f64 {
    let sse: f64 = rows.iter().map(|&r| (pred.get(r, 0) - truth.get(r, 0)).powi(2)).sum();
    (sse / rows.len().max(1) as f64).sqrt()
}

pub fn run_continual(cfg: &ContinualConfig) -> Result<ContinualReport> {
    let task = gen_continual(cfg.seed)?;
    let exec = cfg.execution;
    let mut net = init_network(&[1, 1], cfg.grid, 3, cfg.seed, DEFAULT_NOISE_SCALE)?;
    let mut mlp = Mlp::with_width(1, 1, cfg.mlp_width, cfg.mlp_depth, MlpActivation::Tanh, cfg.seed)?;
    let train_cfg = TrainConfig {
        grid_schedule: vec![cfg.grid],
        steps_per_stage: cfg.steps,
        train_base: false,
        train_spline_scale: false,
        grid_update: false,
        execution: exec,
        ..TrainConfig::default()
    };
    let windows: Vec<Vec<usize>> = (0..task.phases.len()).map(|i| task.window_rows(i)).collect();
    let mut report = ContinualReport { kan: Vec::new(), mlp: Vec::new() };
    for (j, phase) in task.phases.iter().enumerate() {
        net = train(&net, phase, &train_cfg)?.network;
        mlp.fit(
            &phase.train_inputs(),
            &phase.train_targets(),
            LossKind::Rmse,
            OptimizerConfig::default(),
            cfg.steps,
            exec,
        )?;
        let pk = net.predict(&task.grid, exec)?;
        let pm = mlp.predict(&task.grid, exec)?;
        report.kan.push(windows[..=j].iter().map(|w| window_rmse(&pk, &task.grid_targets, w)).collect());
        report.mlp.push(windows[..=j].iter().map(|w| window_rmse(&pm, &task.grid_targets, w)).collect());
    }
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct UnsupervisedConfig {
    pub grid: usize,
    pub steps: usize,
    pub lambda: f64,
    /// Entropy weight inside the regularizer.
    pub mu2: f64,
    pub seed: u64,
    pub n_train: usize,
    pub n_test: usize,
    /// Initial width of the Gaussian on the output edge.
    pub width: f64,
    /// An input counts as active when its edge's mean |φ| reaches this
    /// fraction of the largest one.
    pub active_fraction: f64,
    pub execution: Execution,
}

impl Default for UnsupervisedConfig {
    fn default() -> Self {
        Self {
            grid: 3,
            steps: 400,
            lambda: 1e-2,
            mu2: 2.0,
            seed: 0,
            n_train: 1000,
            n_test: 1000,
            width: 1.0,
            active_fraction: 0.1,
            execution: Execution::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct UnsupervisedReport {
    pub accuracy: f64,
    /// Mean |φ| of each input's edge into the hidden node.
    pub l1: Vec<f64>,
    /// Active inputs, 1-based.
    pub active: Vec<usize>,
    pub network: KanNetwork,
    pub history: History,
}

pub fn binary_accuracy(pred: &Matrix, targets: &Matrix) -> f64 {
    let hits = pred
        .data()
        .iter()
        .zip(targets.data())
        .filter(|(p, t)| (**p > 0.5) == (**t > 0.5))
        .count();
    hits as f64 / pred.data().len().max(1) as f64
}

pub fn run_unsupervised(cfg: &UnsupervisedConfig) -> Result<UnsupervisedReport> {
    if !(cfg.width > 0.0) {
        return Err(KanError::Config(format!("gaussian width must be > 0, got {}", cfg.width)));
    }
    let exec = cfg.execution;
    let data = unsupervised_dataset(cfg.n_train, cfg.n_test, cfg.seed)?;
    let d = data.d();
    let mut net = init_network(&[d, 1, 1], cfg.grid, 3, cfg.seed, DEFAULT_NOISE_SCALE)?;
    // exp(-(a x)^2) = exp(-x^2 / (2 w^2))
    let a = 1.0 / (std::f64::consts::SQRT_2 * cfg.width);
    net.edge_mut(1, 0, 0)?.lock = Some(SymbolicLock::new(SymbolicFn::Gaussian, a, 0.0, 1.0, 0.0));
    let out = train(
        &net,
        &data,
        &TrainConfig {
            grid_schedule: vec![cfg.grid],
            steps_per_stage: cfg.steps,
            lambda: cfg.lambda,
            mu2: cfg.mu2,
            loss: LossKind::BinaryCrossEntropy,
            lock_affine_trainable: true,
            seed: cfg.seed,
            execution: exec,
            ..TrainConfig::default()
        },
    )?;
    let accuracy = binary_accuracy(&out.network.predict(&data.test_inputs(), exec)?, &data.test_targets());
    let (_, trace) = out.network.forward(&data.train_inputs(), exec)?;
    let l1 = layer_l1(&trace, 0);
    let top = l1.iter().copied().fold(0.0, f64::max);
    let active = (0..d).filter(|&i| top > 0.0 && l1[i] >= cfg.active_fraction * top).map(|i| i + 1).collect();
    Ok(UnsupervisedReport {
        accuracy,
        l1,
        active,
        network: out.network,
        history: out.history,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PdeConfig {
    pub shape: Vec<usize>,
    pub n_interior: usize,
    pub n_boundary: usize,
    pub alpha: f64,
    /// Finite-difference step.
    pub h: f64,
    pub seed: u64,
    pub train: TrainConfig,
}

impl Default for PdeConfig {
    fn default() -> Self {
        Self {
            shape: vec![2, 10, 1],
            n_interior: 2500,
            n_boundary: 400,
            alpha: 0.01,
            h: 1e-3,
            seed: 0,
            train: TrainConfig {
                grid_schedule: vec![3, 5, 10, 20],
                steps_per_stage: 400,
                ..TrainConfig::default()
            },
        }
    }
}

#[derive(Debug, Clone)]
pub struct PdeReport {
    /// `(G, L2 error)` at the end of each stage.
    pub stages: Vec<(usize, f64)>,
    pub l2: f64,
    pub network: KanNetwork,
    /// `train_rmse` holds the RMS interior residual, `test_rmse` the L2 error.
    pub history: History,
}

impl PdeReport {
    pub fn monotone(&self) -> bool {
        self.stages.windows(2).all(|w| w[1].1 < w[0].1)
    }
}

pub fn run_pde(cfg: &PdeConfig) -> Result<PdeReport> {
    let problem = gen_pde(cfg.n_interior, cfg.n_boundary, cfg.alpha, cfg.seed)?;
    let obj = PdeObjective::new(problem, cfg.h);
    let first = *cfg
        .train
        .grid_schedule
        .first()
        .ok_or_else(|| KanError::Config("grid schedule is empty".into()))?;
    let net = init_network(&cfg.shape, first, 3, cfg.seed, DEFAULT_NOISE_SCALE)?;
    let out = train_objective(&net, &obj, &cfg.train)?;
    let stages = cfg
        .train
        .grid_schedule
        .iter()
        .filter_map(|&g| out.history.stage(g).last().map(|r| (g, r.test_rmse)))
        .collect();
    Ok(PdeReport {
        stages,
        l2: obj.l2_error(&out.network, cfg.train.execution)?,
        network: out.network,
        history: out.history,
    })
}
