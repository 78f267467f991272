//! Train with sparsification, prune, snap to symbols, retrain affine
//! parameters, read off the formula.

use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{KanError, Result};
use crate::network::{init_network, KanNetwork, DEFAULT_NOISE_SCALE};
use crate::simplify::{
    auto_symbolic, prune, symbolic_formula, AutoReport, Expression, PruneReport, DEFAULT_R2_THRESHOLD,
    DEFAULT_THETA,
};
use crate::symbolic::SymbolicLibrary;
use crate::train::{train, History, LossKind, TrainConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub shape: Vec<usize>,
    pub grid: usize,
    pub order: usize,
    pub seed: u64,
    /// Sparsification stage. Its grid schedule is replaced by `[grid]`.
    pub sparsify: TrainConfig,
    pub theta: f64,
    /// Unregularized steps after pruning.
    pub refit_steps: usize,
    pub r2_threshold: f64,
    /// Library names; empty means the standard library.
    pub library: Vec<String>,
    /// Affine-only steps after locking.
    pub retrain_steps: usize,
    pub decimals: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            shape: vec![2, 5, 1],
            grid: 5,
            order: 3,
            seed: 0,
            sparsify: TrainConfig {
                lambda: 1e-2,
                steps_per_stage: 2000,
                loss: LossKind::Mse,
                ..TrainConfig::default()
            },
            theta: DEFAULT_THETA,
            refit_steps: 300,
            r2_threshold: DEFAULT_R2_THRESHOLD,
            library: Vec::new(),
            retrain_steps: 500,
            decimals: 2,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PipelineReport {
    pub trained_shape: Vec<usize>,
    pub pruned_shape: Vec<usize>,
    pub prune: Option<PruneReport>,
    /// Set when pruning was refused; the unpruned network is kept.
    pub prune_error: Option<String>,
    /// No hidden node was removed.
    pub dense: bool,
    pub auto: AutoReport,
    /// Present when every edge ended up locked.
    pub formula: Option<Vec<Expression>>,
    pub rendered: Option<Vec<String>>,
    pub train_rmse: f64,
    pub test_rmse: f64,
    pub network: KanNetwork,
    pub history: History,
}

pub fn run_pipeline(data: &Dataset, cfg: &PipelineConfig) -> Result<PipelineReport> {
    let exec = cfg.sparsify.execution;
    let library = if cfg.library.is_empty() {
        SymbolicLibrary::standard()
    } else {
        SymbolicLibrary::from_names(&cfg.library)?
    };
    if cfg.shape.first() != Some(&data.d()) || cfg.shape.last() != Some(&data.m()) {
        return Err(KanError::InvalidShape(format!(
            "shape {:?} does not match a task with {} inputs and {} outputs",
            cfg.shape,
            data.d(),
            data.m()
        )));
    }
    let net = init_network(&cfg.shape, cfg.grid, cfg.order, cfg.seed, DEFAULT_NOISE_SCALE)?;
    let sparsify = TrainConfig {
        grid_schedule: vec![cfg.grid],
        ..cfg.sparsify.clone()
    };
    let stage = |steps: usize, lock_affine: bool| TrainConfig {
        lambda: 0.0,
        steps_per_stage: steps,
        grid_schedule: vec![cfg.grid],
        lock_affine_trainable: lock_affine,
        optimizer: sparsify.optimizer,
        execution: exec,
        ..TrainConfig::default()
    };

    let trained = train(&net, data, &sparsify)?;
    let mut history = trained.history;
    let (_, trace) = trained.network.forward(&data.train_inputs(), exec)?;
    let (net, prune_report, prune_error) = match prune(&trained.network, &trace, cfg.theta) {
        Ok((pruned, report)) => (pruned, Some(report), None),
        Err(e @ KanError::DegeneratePrune(_)) => (trained.network.clone(), None, Some(e.to_string())),
        Err(e) => return Err(e),
    };
    let dense = prune_report.as_ref().is_none_or(|r| r.removed == 0);
    let pruned_shape = net.shape().to_vec();

    let refit = train(&net, data, &stage(cfg.refit_steps, false))?;
    history.append(&refit.history);
    let mut net = refit.network;
    let (_, trace) = net.forward(&data.train_inputs(), exec)?;
    let auto = auto_symbolic(&mut net, &trace, cfg.r2_threshold, &library, exec)?;

    let retrain = train(&net, data, &stage(cfg.retrain_steps, true))?;
    history.append(&retrain.history);
    let net = retrain.network;
    let formula = symbolic_formula(&net).ok();
    let rendered = formula
        .as_ref()
        .map(|f| f.iter().map(|e| e.render(cfg.decimals)).collect::<Result<Vec<_>>>())
        .transpose()?;
    let last = history.last().copied();
    Ok(PipelineReport {
        trained_shape: cfg.shape.clone(),
        pruned_shape,
        prune: prune_report,
        prune_error,
        dense,
        auto,
        formula,
        rendered,
        train_rmse: last.map_or(f64::NAN, |r| r.train_rmse),
        test_rmse: last.map_or(f64::NAN, |r| r.test_rmse),
        network: net,
        history,
    })
}
