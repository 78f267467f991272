//! Session snapshots and the core operations applied to them.

use std::sync::{Arc, RwLock};

use kanlab_core::network::{DEFAULT_NOISE_SCALE, ModelDocument};
use kanlab_core::simplify::{
    fix_symbolic, fix_symbolic_with, node_scores, prune, suggest_symbolic, symbolic_formula, transparency,
    AffineFit, Expression, NodeScores, DEFAULT_BETA, DEFAULT_THETA,
};
use kanlab_core::tasks::gen_task;
use kanlab_core::train::{activation_l1, rmse, total_loss, History, HistoryRow, RegWeights, TrainConfig};
use kanlab_core::{init_network, Dataset, ForwardTrace, KanError, KanNetwork, SymbolicFn, SymbolicLibrary, SymbolicLock};
use serde::{Deserialize, Serialize};
use tokio::sync::{Mutex, OwnedMutexGuard};

use crate::error::ApiError;

/// Most optimizer steps a single train call runs.
pub const MAX_TRAIN_STEPS: usize = 200;
/// Points per edge sparkline.
pub const SPARKLINE_POINTS: usize = 64;

/// What a session was created from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SessionSpec {
    pub task: String,
    pub shape: Vec<usize>,
    pub grid: usize,
    pub order: usize,
    pub seed: u64,
    pub n_train: usize,
    pub n_test: usize,
    pub config: TrainConfig,
}

impl Default for SessionSpec {
    fn default() -> Self {
        Self {
            task: String::new(),
            shape: Vec::new(),
            grid: 3,
            order: 3,
            seed: 0,
            n_train: 1000,
            n_test: 1000,
            config: TrainConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Losses {
    pub train_rmse: f64,
    pub test_rmse: f64,
    pub pred_loss: f64,
    pub reg_loss: f64,
    pub l1: f64,
    pub entropy: f64,
    pub total: f64,
}

/// Quantities read off one forward pass over the training inputs.
#[derive(Debug, Clone)]
pub struct Summary {
    pub losses: Losses,
    /// `|phi|_1` in `iter_edges` order.
    pub edge_l1: Vec<f64>,
    pub nodes: NodeScores,
}

/// One committed state of a session.
#[derive(Debug, Clone)]
pub struct Snapshot {
    pub version: u64,
    pub spec: SessionSpec,
    pub network: KanNetwork,
    pub data: Arc<Dataset>,
    pub history: History,
    pub grid: usize,
    /// The next train call starts a stage and may re-place grids.
    pub fresh_stage: bool,
    pub summary: Summary,
}

fn summarize(net: &KanNetwork, data: &Dataset, cfg: &TrainConfig) -> Result<Summary, KanError> {
    let exec = cfg.execution;
    let (x, t) = (data.train_inputs(), data.train_targets());
    let (report, _) = total_loss(net, &x, &t, cfg.loss, RegWeights::from(cfg), exec)?;
    let (y, trace) = net.forward(&x, exec)?;
    let test = net.predict(&data.test_inputs(), exec)?;
    let edge_l1 = net.iter_edges().map(|((l, i, j), _)| activation_l1(&trace, l, j, i)).collect();
    Ok(Summary {
        losses: Losses {
            train_rmse: rmse(&y, &t),
            test_rmse: rmse(&test, &data.test_targets()),
            pred_loss: report.pred_loss,
            reg_loss: report.reg_loss,
            l1: report.l1_sum(),
            entropy: report.entropy_sum(),
            total: report.total,
        },
        edge_l1,
        nodes: node_scores(net, &trace)?,
    })
}

impl Snapshot {
    pub fn create(spec: SessionSpec) -> Result<Self, KanError> {
        spec.config.validate()?;
        let data = gen_task(&spec.task, spec.n_train, spec.n_test, spec.seed)?;
        let network = init_network(&spec.shape, spec.grid, spec.order, spec.seed, DEFAULT_NOISE_SCALE)?;
        if network.n_inputs() != data.d() || network.n_outputs() != data.m() {
            return Err(KanError::InvalidShape(format!(
                "shape {:?} does not fit task {} with {} inputs and {} outputs",
                spec.shape,
                spec.task,
                data.d(),
                data.m()
            )));
        }
        let summary = summarize(&network, &data, &spec.config)?;
        Ok(Self {
            version: 0,
            grid: spec.grid,
            spec,
            network,
            data: Arc::new(data),
            history: History::default(),
            fresh_stage: true,
            summary,
        })
    }

    fn trace(&self) -> Result<ForwardTrace, KanError> {
        Ok(self.network.forward(&self.data.train_inputs(), self.spec.config.execution)?.1)
    }

    /// Successor with a new network; summary recomputed.
    fn next(&self, network: KanNetwork) -> Result<Self, KanError> {
        let summary = summarize(&network, &self.data, &self.spec.config)?;
        Ok(Self {
            version: self.version + 1,
            network,
            summary,
            ..self.clone()
        })
    }

    pub fn train(&self, req: &TrainRequest) -> Result<(Self, TrainReport), KanError> {
        let steps = req.steps.min(MAX_TRAIN_STEPS);
        if steps == 0 {
            let next = Self {
                version: self.version + 1,
                ..self.clone()
            };
            return Ok((next, TrainReport { steps: 0, diverged: false }));
        }
        let base = &self.spec.config;
        let cfg = TrainConfig {
            grid_schedule: vec![self.grid],
            steps_per_stage: steps,
            grid_update: base.grid_update && self.fresh_stage,
            lambda: req.lambda.unwrap_or(base.lambda),
            lock_affine_trainable: req.lock_affine_trainable.unwrap_or(base.lock_affine_trainable),
            ..base.clone()
        };
        let out = kanlab_core::train::train(&self.network, &self.data, &cfg)?;
        let mut next = self.next(out.network)?;
        next.history.append(&out.history);
        next.fresh_stage = false;
        Ok((
            next,
            TrainReport {
                steps,
                diverged: !out.diverged.is_empty(),
            },
        ))
    }

    pub fn extend(&self, grid: usize) -> Result<Self, KanError> {
        let trace = self.trace()?;
        let cfg = &self.spec.config;
        let network = self.network.extend_all_grids(&trace, grid, cfg.adapt, cfg.execution)?;
        let mut next = self.next(network)?;
        next.grid = grid;
        next.fresh_stage = true;
        Ok(next)
    }

    pub fn prune(&self, theta: f64) -> Result<(Self, PruneSummary), KanError> {
        let (network, report) = prune(&self.network, &self.trace()?, theta)?;
        let next = self.next(network)?;
        let shape = next.network.shape().to_vec();
        Ok((
            next,
            PruneSummary {
                kept: report.kept,
                removed: report.removed,
                shape,
            },
        ))
    }

    pub fn fix(&self, req: &FixRequest) -> Result<(Self, AffineFit), KanError> {
        let f = SymbolicFn::from_name(&req.name)?;
        let id = (req.l, req.i, req.j);
        let mut network = self.network.clone();
        let fit = match req.params {
            Some([a, b, c, d]) => {
                fix_symbolic_with(&mut network, id, SymbolicLock::new(f, a, b, c, d))?;
                AffineFit { function: f, a, b, c, d, r2: f64::NAN }
            }
            None => fix_symbolic(&mut network, &self.trace()?, id, f)?,
        };
        Ok((self.next(network)?, fit))
    }

    pub fn suggest(&self, id: (usize, usize, usize), top: Option<usize>) -> Result<Vec<AffineFit>, KanError> {
        let exec = self.spec.config.execution;
        let mut ranked = suggest_symbolic(&self.network, &self.trace()?, id, &SymbolicLibrary::standard(), exec)?;
        if let Some(n) = top {
            ranked.truncate(n);
        }
        Ok(ranked)
    }

    pub fn formula(&self, decimals: usize) -> Result<FormulaDocument, KanError> {
        let expressions = symbolic_formula(&self.network)?;
        let rendered = expressions.iter().map(|e| e.render(decimals)).collect::<Result<_, _>>()?;
        Ok(FormulaDocument { rendered, expressions })
    }

    pub fn state(&self, id: &str) -> StateDocument {
        let edges = self
            .network
            .iter_edges()
            .zip(&self.summary.edge_l1)
            .map(|(((l, i, j), e), &l1)| {
                let g = e.curve.grid();
                let (a, b) = (g.a(), g.b());
                let sparkline = (0..SPARKLINE_POINTS)
                    .map(|q| {
                        let x = a + (b - a) * q as f64 / (SPARKLINE_POINTS - 1) as f64;
                        [x, e.eval(x)]
                    })
                    .collect();
                EdgeState {
                    l,
                    i,
                    j,
                    l1,
                    opacity: transparency(l1, DEFAULT_BETA),
                    lock: e.lock.map(LockState::from),
                    domain: [a, b],
                    sparkline,
                }
            })
            .collect();
        StateDocument {
            id: id.to_string(),
            version: self.version,
            task: self.spec.task.clone(),
            shape: self.network.shape().to_vec(),
            grid: self.grid,
            losses: self.summary.losses,
            edges,
            nodes: self.summary.nodes.clone(),
            steps: self.history.last().map_or(0, |r| r.step),
        }
    }

    pub fn save(&self) -> SavedSession {
        SavedSession {
            spec: self.spec.clone(),
            version: self.version,
            grid: self.grid,
            fresh_stage: self.fresh_stage,
            model: ModelDocument::from(&self.network),
            history: self.history.rows.clone(),
        }
    }

    pub fn load(saved: SavedSession) -> Result<Self, KanError> {
        let data = gen_task(&saved.spec.task, saved.spec.n_train, saved.spec.n_test, saved.spec.seed)?;
        let network = KanNetwork::try_from(&saved.model)?;
        if network.n_inputs() != data.d() || network.n_outputs() != data.m() {
            return Err(KanError::InvalidShape("model does not fit the saved task".into()));
        }
        let mut history = History::default();
        for row in saved.history {
            history.push(row);
        }
        let summary = summarize(&network, &data, &saved.spec.config)?;
        Ok(Self {
            version: saved.version,
            spec: saved.spec,
            network,
            data: Arc::new(data),
            history,
            grid: saved.grid,
            fresh_stage: saved.fresh_stage,
            summary,
        })
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainRequest {
    pub steps: usize,
    pub lambda: Option<f64>,
    pub lock_affine_trainable: Option<bool>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainReport {
    pub steps: usize,
    pub diverged: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExtendRequest {
    pub grid: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PruneRequest {
    #[serde(default = "default_theta")]
    pub theta: f64,
}

fn default_theta() -> f64 {
    DEFAULT_THETA
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PruneSummary {
    pub kept: Vec<Vec<usize>>,
    pub removed: usize,
    pub shape: Vec<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FixRequest {
    pub l: usize,
    pub i: usize,
    pub j: usize,
    pub name: String,
    /// Explicit `[a, b, c, d]`; fitted on the current trace when absent.
    #[serde(default)]
    pub params: Option<[f64; 4]>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FormulaDocument {
    pub rendered: Vec<String>,
    pub expressions: Vec<Expression>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LockState {
    pub name: String,
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
}

impl From<SymbolicLock> for LockState {
    fn from(lock: SymbolicLock) -> Self {
        Self {
            name: lock.function.name().to_string(),
            a: lock.a,
            b: lock.b,
            c: lock.c,
            d: lock.d,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EdgeState {
    pub l: usize,
    pub i: usize,
    pub j: usize,
    pub l1: f64,
    pub opacity: f64,
    pub lock: Option<LockState>,
    pub domain: [f64; 2],
    /// `(x, phi(x))` pairs across the grid domain.
    pub sparkline: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StateDocument {
    pub id: String,
    pub version: u64,
    pub task: String,
    pub shape: Vec<usize>,
    pub grid: usize,
    pub losses: Losses,
    pub edges: Vec<EdgeState>,
    pub nodes: NodeScores,
    pub steps: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SavedSession {
    pub spec: SessionSpec,
    pub version: u64,
    pub grid: usize,
    pub fresh_stage: bool,
    pub model: ModelDocument,
    pub history: Vec<HistoryRow>,
}

/// A session: the committed snapshot plus a single-writer gate.
#[derive(Debug)]
pub struct Session {
    committed: RwLock<Arc<Snapshot>>,
    writer: Arc<Mutex<()>>,
}

impl Session {
    pub fn new(snapshot: Snapshot) -> Self {
        Self {
            committed: RwLock::new(Arc::new(snapshot)),
            writer: Arc::new(Mutex::new(())),
        }
    }

    pub fn snapshot(&self) -> Arc<Snapshot> {
        self.committed.read().expect("snapshot lock poisoned").clone()
    }

    /// Claim the writer slot, or fail with 409 if a mutation is in flight.
    pub fn begin_mutation(&self) -> Result<OwnedMutexGuard<()>, ApiError> {
        self.writer.clone().try_lock_owned().map_err(|_| ApiError::busy())
    }

    pub fn commit(&self, next: Snapshot) {
        *self.committed.write().expect("snapshot lock poisoned") = Arc::new(next);
    }
}
