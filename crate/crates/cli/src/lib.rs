//! The `kanlab` command line: experiment runs, artifacts on disk, and the
//! session service.

pub mod diagram;

use std::fs;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use kanlab_core::experiments::{
    run_continual, run_pde, run_scaling, run_unsupervised, stage_summaries, ContinualConfig, PdeConfig, ScalingConfig,
    UnsupervisedConfig,
};
use kanlab_core::network::{to_json, DEFAULT_NOISE_SCALE};
use kanlab_core::pipeline::{run_pipeline, PipelineConfig};
use kanlab_core::simplify::DEFAULT_BETA;
use kanlab_core::tasks::gen_task;
use kanlab_core::train::{train, AdamConfig, History, LossKind, OptimizerConfig, TrainConfig};
use kanlab_core::{init_network, Dataset, Execution, KanError, KanNetwork};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use diagram::render_diagram;

/// Seed used when neither a flag nor the config file sets one.
pub const SEED_ENV: &str = "KANLAB_SEED";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] KanError),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
}

impl CliError {
    /// 2 for bad invocations, 3 for failures while running.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Core(KanError::UnknownTask(_) | KanError::InvalidShape(_) | KanError::Config(_)) => 2,
            CliError::Core(KanError::UnknownFunction(_)) => 2,
            _ => 3,
        }
    }
}

type Result<T> = std::result::Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(name = "kanlab", version, about = "Kolmogorov-Arnold network experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a KAN on a task over a grid schedule.
    Train(RunArgs),
    /// Sparsify, prune, snap to symbols and print the formula.
    Pipeline(PipelineArgs),
    /// Test RMSE against parameter count for KANs and MLPs.
    BenchScaling(ScalingArgs),
    /// Sequential 1D peaks, KAN against MLP.
    Continual(ContinualArgs),
    /// Recover dependent variable groups from positive samples.
    Unsupervised(UnsupervisedArgs),
    /// Poisson equation on the unit square.
    Pde(PdeArgs),
    /// Run the session HTTP service.
    Serve(ServeArgs),
}

fn parse_loss(s: &str) -> std::result::Result<LossKind, String> {
    serde_json::from_value(serde_json::Value::String(s.to_string())).map_err(|_| {
        format!("unknown loss {s:?}; expected rmse, mse, binary_cross_entropy or softmax_cross_entropy")
    })
}

/// Run description shared by `train` and `pipeline`. Every field is also
/// a flag; flags override the JSON config file.
#[derive(Debug, Clone, Default, PartialEq, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSpec {
    #[arg(long)]
    pub task: Option<String>,
    #[arg(long, value_delimiter = ',')]
    pub shape: Option<Vec<usize>>,
    /// Grid schedule, one stage per entry.
    #[arg(long, value_delimiter = ',')]
    pub grids: Option<Vec<usize>>,
    /// Optimizer steps per stage.
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub order: Option<usize>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub mu1: Option<f64>,
    #[arg(long)]
    pub mu2: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub n_train: Option<usize>,
    #[arg(long)]
    pub n_test: Option<usize>,
    #[arg(long, value_parser = parse_loss)]
    pub loss: Option<LossKind>,
    /// `lbfgs` or `adam`.
    #[arg(long)]
    pub optimizer: Option<String>,
    /// Adam learning rate.
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub lock_affine_trainable: Option<bool>,
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub sequential: Option<bool>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Write diagram.svg.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub diagram: Option<bool>,
    /// Diagram transparency sharpness.
    #[arg(long)]
    pub beta: Option<f64>,
}

macro_rules! overlay {
    ($top:expr, $base:expr, $($f:ident),*) => {
        RunSpec { $($f: $top.$f.or($base.$f)),* }
    };
}

impl RunSpec {
    /// Fields of `self` where set, else those of `base`.
    pub fn over(self, base: RunSpec) -> RunSpec {
        overlay!(
            self, base, task, shape, grids, steps, order, lambda, mu1, mu2, seed, n_train, n_test, loss, optimizer,
            lr, lock_affine_trainable, sequential, out, diagram, beta
        )
    }

    fn task(&self) -> Result<&str> {
        self.task.as_deref().ok_or_else(|| CliError::Usage("a task is required (--task)".into()))
    }

    fn execution(&self) -> Execution {
        if self.sequential.unwrap_or(false) {
            Execution::Sequential
        } else {
            Execution::Parallel
        }
    }

    fn optimizer(&self) -> Result<OptimizerConfig> {
        match self.optimizer.as_deref() {
            None | Some("lbfgs") => Ok(OptimizerConfig::default()),
            Some("adam") => Ok(OptimizerConfig::Adam(AdamConfig {
                lr: self.lr.unwrap_or(AdamConfig::default().lr),
                ..AdamConfig::default()
            })),
            Some(other) => Err(CliError::Usage(format!("unknown optimizer {other:?}; expected lbfgs or adam"))),
        }
    }

    /// `base` with every field this spec sets.
    fn train_config(&self, base: TrainConfig, seed: u64) -> Result<TrainConfig> {
        let cfg = TrainConfig {
            lambda: self.lambda.unwrap_or(base.lambda),
            mu1: self.mu1.unwrap_or(base.mu1),
            mu2: self.mu2.unwrap_or(base.mu2),
            steps_per_stage: self.steps.unwrap_or(base.steps_per_stage),
            grid_schedule: self.grids.clone().unwrap_or(base.grid_schedule.clone()),
            optimizer: if self.optimizer.is_some() { self.optimizer()? } else { base.optimizer },
            seed,
            lock_affine_trainable: self.lock_affine_trainable.unwrap_or(base.lock_affine_trainable),
            loss: self.loss.unwrap_or(base.loss),
            execution: self.execution(),
            ..base
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn out(&self) -> PathBuf {
        self.out.clone().unwrap_or_else(|| PathBuf::from("."))
    }
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    /// JSON file with any of the run fields; flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub spec: RunSpec,
}

#[derive(Debug, Clone, Args)]
pub struct PipelineArgs {
    #[command(flatten)]
    pub run: RunArgs,
    /// Pruning threshold.
    #[arg(long)]
    pub theta: Option<f64>,
    /// Minimum R² for automatic locking.
    #[arg(long)]
    pub r2_threshold: Option<f64>,
    #[arg(long)]
    pub refit_steps: Option<usize>,
    #[arg(long)]
    pub retrain_steps: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    pub library: Option<Vec<String>>,
    #[arg(long)]
    pub decimals: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct ScalingArgs {
    /// JSON scaling config; flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub task: Option<String>,
    /// KAN shape, repeatable.
    #[arg(long = "kan-shape", value_parser = parse_shape)]
    pub kan_shapes: Vec<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    pub grids: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    pub mlp_depths: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    pub mlp_widths: Option<Vec<usize>>,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub n_train: Option<usize>,
    #[arg(long)]
    pub n_test: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub sequential: bool,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

fn parse_shape(s: &str) -> std::result::Result<Vec<usize>, String> {
    s.split(',')
        .map(|p| p.trim().parse::<usize>().map_err(|e| format!("bad shape {s:?}: {e}")))
        .collect()
}

#[derive(Debug, Clone, Args)]
pub struct ContinualArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub grid: Option<usize>,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub mlp_width: Option<usize>,
    #[arg(long)]
    pub mlp_depth: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub sequential: bool,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct UnsupervisedArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub grid: Option<usize>,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub n_train: Option<usize>,
    #[arg(long)]
    pub n_test: Option<usize>,
    /// Width of the Gaussian output activation.
    #[arg(long)]
    pub width: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub sequential: bool,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct PdeArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    pub shape: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    pub grids: Option<Vec<usize>>,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub n_interior: Option<usize>,
    #[arg(long)]
    pub n_boundary: Option<usize>,
    /// Boundary loss weight.
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Finite-difference step.
    #[arg(long)]
    pub h: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub sequential: bool,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct ServeArgs {
    #[arg(long, default_value = "127.0.0.1:8080")]
    pub addr: SocketAddr,
}

fn read_json<T: DeserializeOwned + Default>(path: Option<&Path>) -> Result<T> {
    let Some(path) = path else {
        return Ok(T::default());
    };
    let text = fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

/// `flag`, then `file`, then `KANLAB_SEED`, then 0.
pub fn resolve_seed(flag: Option<u64>, file: Option<u64>) -> Result<u64> {
    if let Some(s) = flag.or(file) {
        return Ok(s);
    }
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| CliError::Usage(format!("{SEED_ENV} must be an unsigned integer, got {v:?}"))),
        Err(_) => Ok(0),
    }
}

fn set<T>(slot: &mut T, v: Option<T>) {
    if let Some(v) = v {
        *slot = v;
    }
}

fn write(dir: &Path, name: &str, contents: &str) -> Result<()> {
    let path = dir.join(name);
    fs::write(&path, contents).map_err(|source| CliError::Io { path, source })
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|source| CliError::Io {
        path: dir.to_path_buf(),
        source,
    })
}

fn to_pretty<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("report serializes") + "\n"
}

/// model.json, history.csv and optionally diagram.svg.
fn write_model(dir: &Path, net: &KanNetwork, history: &History, data: Option<&Dataset>, beta: Option<f64>) -> Result<()> {
    write(dir, "model.json", &to_json(net)?)?;
    write(dir, "history.csv", &history.to_csv())?;
    if let (Some(data), Some(beta)) = (data, beta) {
        let (_, trace) = net.forward(&data.train_inputs(), Execution::Parallel)?;
        write(dir, "diagram.svg", &render_diagram(net, &trace, beta))?;
    }
    Ok(())
}

fn load_run(args: &RunArgs) -> Result<RunSpec> {
    let file: RunSpec = read_json(args.config.as_deref())?;
    let mut spec = args.spec.clone().over(file.clone());
    spec.seed = Some(resolve_seed(args.spec.seed, file.seed)?);
    Ok(spec)
}

pub fn cmd_train(args: &RunArgs) -> Result<()> {
    let spec = load_run(args)?;
    let seed = spec.seed.unwrap_or(0);
    let task = spec.task()?;
    let shape = spec.shape.clone().ok_or_else(|| CliError::Usage("a shape is required (--shape)".into()))?;
    let cfg = spec.train_config(TrainConfig::default(), seed)?;
    let data = gen_task(task, spec.n_train.unwrap_or(1000), spec.n_test.unwrap_or(1000), seed)?;
    if shape.first() != Some(&data.d()) || shape.last() != Some(&data.m()) {
        return Err(CliError::Usage(format!(
            "shape {shape:?} does not fit task {task:?} with {} inputs and {} outputs",
            data.d(),
            data.m()
        )));
    }
    let net = init_network(&shape, cfg.grid_schedule[0], spec.order.unwrap_or(3), seed, DEFAULT_NOISE_SCALE)?;
    let out = train(&net, &data, &cfg)?;
    let dir = spec.out();
    ensure_dir(&dir)?;
    let beta = spec.diagram.unwrap_or(true).then(|| spec.beta.unwrap_or(DEFAULT_BETA));
    write_model(&dir, &out.network, &out.history, Some(&data), beta)?;
    println!("G\tparams\ttrain_rmse\ttest_rmse");
    for s in stage_summaries(&out.history, &out.network, &cfg.grid_schedule) {
        println!("{}\t{}\t{:.3e}\t{:.3e}", s.grid, s.params, s.train_rmse, s.test_rmse);
    }
    for (g, step) in &out.diverged {
        eprintln!("stage G={g} stopped at step {step}: loss became non-finite");
    }
    Ok(())
}

#[derive(Debug, Serialize)]
struct PipelineSummary<'a> {
    pruned_shape: &'a [usize],
    dense: bool,
    prune_error: &'a Option<String>,
    locked: Vec<(String, String, f64)>,
    skipped: Vec<String>,
    formula: &'a Option<Vec<String>>,
    train_rmse: f64,
    test_rmse: f64,
}

pub fn cmd_pipeline(args: &PipelineArgs) -> Result<()> {
    let spec = load_run(&args.run)?;
    let seed = spec.seed.unwrap_or(0);
    let defaults = PipelineConfig::default();
    let sparsify = spec.train_config(defaults.sparsify.clone(), seed)?;
    let grid = spec.grids.as_ref().and_then(|g| g.first().copied()).unwrap_or(defaults.grid);
    let mut cfg = PipelineConfig {
        shape: spec.shape.clone().unwrap_or(defaults.shape.clone()),
        grid,
        order: spec.order.unwrap_or(defaults.order),
        seed,
        sparsify,
        ..defaults
    };
    set(&mut cfg.theta, args.theta);
    set(&mut cfg.r2_threshold, args.r2_threshold);
    set(&mut cfg.refit_steps, args.refit_steps);
    set(&mut cfg.retrain_steps, args.retrain_steps);
    set(&mut cfg.library, args.library.clone());
    set(&mut cfg.decimals, args.decimals);
    let data = gen_task(spec.task()?, spec.n_train.unwrap_or(1000), spec.n_test.unwrap_or(1000), seed)?;
    let report = run_pipeline(&data, &cfg)?;

    let dir = spec.out();
    ensure_dir(&dir)?;
    let beta = spec.diagram.unwrap_or(true).then(|| spec.beta.unwrap_or(DEFAULT_BETA));
    write_model(&dir, &report.network, &report.history, Some(&data), beta)?;
    let summary = PipelineSummary {
        pruned_shape: &report.pruned_shape,
        dense: report.dense,
        prune_error: &report.prune_error,
        locked: report
            .auto
            .locked
            .iter()
            .map(|((l, i, j), fit)| (format!("{l},{i},{j}"), fit.function.name().to_string(), fit.r2))
            .collect(),
        skipped: report.auto.skipped.iter().map(|((l, i, j), _)| format!("{l},{i},{j}")).collect(),
        formula: &report.rendered,
        train_rmse: report.train_rmse,
        test_rmse: report.test_rmse,
    };
    write(&dir, "report.json", &to_pretty(&summary))?;

    println!("pruned shape: {:?}", report.pruned_shape);
    if let Some(e) = &report.prune_error {
        println!("pruning skipped: {e}");
    }
    if report.dense {
        println!("dense network: no hidden node was pruned; symbolic suggestions may be poor (try a larger lambda)");
    }
    for (edge, name, r2) in &summary.locked {
        println!("locked ({edge}) -> {name}  r2={r2:.6}");
    }
    if !summary.skipped.is_empty() {
        println!("left unlocked: {}", summary.skipped.join(" "));
    }
    match &report.rendered {
        Some(formulas) => {
            for (k, f) in formulas.iter().enumerate() {
                println!("y{} = {f}", k + 1);
            }
        }
        None => println!("formula: unavailable, some edges are not symbolic"),
    }
    println!("train RMSE {:.3e}  test RMSE {:.3e}", report.train_rmse, report.test_rmse);
    Ok(())
}

pub fn cmd_bench_scaling(args: &ScalingArgs) -> Result<()> {
    let mut cfg: ScalingConfig = read_json(args.config.as_deref())?;
    let file_seed = args.config.as_ref().map(|_| cfg.seed);
    set(&mut cfg.task, args.task.clone());
    if !args.kan_shapes.is_empty() {
        cfg.kan_shapes = args.kan_shapes.clone();
    }
    set(&mut cfg.grids, args.grids.clone());
    set(&mut cfg.mlp_depths, args.mlp_depths.clone());
    set(&mut cfg.mlp_widths, args.mlp_widths.clone());
    set(&mut cfg.steps, args.steps);
    set(&mut cfg.n_train, args.n_train);
    set(&mut cfg.n_test, args.n_test);
    cfg.seed = resolve_seed(args.seed, file_seed)?;
    if args.sequential {
        cfg.execution = Execution::Sequential;
    }
    let report = run_scaling(&cfg)?;
    ensure_dir(&args.out)?;
    write(&args.out, "scaling.csv", &report.to_csv())?;
    let mut slopes = String::from("family,slope\n");
    for (family, s) in &report.slopes {
        slopes.push_str(&format!("{family},{}\n", s.map(|v| format!("{v:.4}")).unwrap_or_default()));
        println!("{family}\tslope {}", s.map(|v| format!("{v:.3}")).unwrap_or_else(|| "n/a".into()));
    }
    write(&args.out, "slopes.csv", &slopes)?;
    Ok(())
}

#[derive(Debug, Serialize)]
struct ContinualSummary<'a> {
    kan: &'a [Vec<f64>],
    mlp: &'a [Vec<f64>],
    kan_drift: f64,
    mlp_drift: f64,
}

pub fn cmd_continual(args: &ContinualArgs) -> Result<()> {
    let mut cfg: ContinualConfig = read_json(args.config.as_deref())?;
    let file_seed = args.config.as_ref().map(|_| cfg.seed);
    set(&mut cfg.grid, args.grid);
    set(&mut cfg.steps, args.steps);
    set(&mut cfg.mlp_width, args.mlp_width);
    set(&mut cfg.mlp_depth, args.mlp_depth);
    cfg.seed = resolve_seed(args.seed, file_seed)?;
    if args.sequential {
        cfg.execution = Execution::Sequential;
    }
    let report = run_continual(&cfg)?;
    let summary = ContinualSummary {
        kan: &report.kan,
        mlp: &report.mlp,
        kan_drift: report.kan_drift(),
        mlp_drift: report.mlp_drift(),
    };
    ensure_dir(&args.out)?;
    write(&args.out, "continual.json", &to_pretty(&summary))?;
    println!("phase\tKAN window RMSE\tMLP window RMSE");
    for (j, (k, m)) in report.kan.iter().zip(&report.mlp).enumerate() {
        let fmt = |row: &[f64]| row.iter().map(|v| format!("{v:.2e}")).collect::<Vec<_>>().join(" ");
        println!("{}\t{}\t{}", j + 1, fmt(k), fmt(m));
    }
    println!("max drift on earlier windows: KAN {:.3e}  MLP {:.3e}", summary.kan_drift, summary.mlp_drift);
    Ok(())
}

#[derive(Debug, Serialize)]
struct UnsupervisedSummary<'a> {
    accuracy: f64,
    l1: &'a [f64],
    active: &'a [usize],
}

pub fn cmd_unsupervised(args: &UnsupervisedArgs) -> Result<()> {
    let mut cfg: UnsupervisedConfig = read_json(args.config.as_deref())?;
    let file_seed = args.config.as_ref().map(|_| cfg.seed);
    set(&mut cfg.grid, args.grid);
    set(&mut cfg.steps, args.steps);
    set(&mut cfg.lambda, args.lambda);
    set(&mut cfg.n_train, args.n_train);
    set(&mut cfg.n_test, args.n_test);
    set(&mut cfg.width, args.width);
    cfg.seed = resolve_seed(args.seed, file_seed)?;
    if args.sequential {
        cfg.execution = Execution::Sequential;
    }
    let report = run_unsupervised(&cfg)?;
    ensure_dir(&args.out)?;
    write_model(&args.out, &report.network, &report.history, None, None)?;
    let summary = UnsupervisedSummary {
        accuracy: report.accuracy,
        l1: &report.l1,
        active: &report.active,
    };
    write(&args.out, "report.json", &to_pretty(&summary))?;
    println!("test accuracy {:.4}", report.accuracy);
    println!("first-layer |phi|: {}", report.l1.iter().map(|v| format!("{v:.3e}")).collect::<Vec<_>>().join(" "));
    println!("active inputs: {:?}", report.active);
    Ok(())
}

#[derive(Debug, Serialize)]
struct PdeSummary<'a> {
    stages: &'a [(usize, f64)],
    l2: f64,
}

pub fn cmd_pde(args: &PdeArgs) -> Result<()> {
    let mut cfg: PdeConfig = read_json(args.config.as_deref())?;
    let file_seed = args.config.as_ref().map(|_| cfg.seed);
    set(&mut cfg.shape, args.shape.clone());
    set(&mut cfg.train.grid_schedule, args.grids.clone());
    set(&mut cfg.train.steps_per_stage, args.steps);
    set(&mut cfg.n_interior, args.n_interior);
    set(&mut cfg.n_boundary, args.n_boundary);
    set(&mut cfg.alpha, args.alpha);
    set(&mut cfg.h, args.h);
    cfg.seed = resolve_seed(args.seed, file_seed)?;
    cfg.train.seed = cfg.seed;
    if args.sequential {
        cfg.train.execution = Execution::Sequential;
    }
    cfg.train.validate()?;
    let report = run_pde(&cfg)?;
    ensure_dir(&args.out)?;
    write_model(&args.out, &report.network, &report.history, None, None)?;
    write(
        &args.out,
        "report.json",
        &to_pretty(&PdeSummary {
            stages: &report.stages,
            l2: report.l2,
        }),
    )?;
    for (g, l2) in &report.stages {
        println!("G={g}\tL2 {l2:.3e}");
    }
    println!("final L2 error {:.3e}", report.l2);
    Ok(())
}

pub fn cmd_serve(args: &ServeArgs) -> Result<()> {
    let runtime = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(|source| CliError::Io {
            path: PathBuf::from("tokio runtime"),
            source,
        })?;
    eprintln!("listening on http://{}", args.addr);
    runtime
        .block_on(kanlab_service::serve(args.addr, kanlab_service::AppState::new()))
        .map_err(|source| CliError::Io {
            path: PathBuf::from(args.addr.to_string()),
            source,
        })
}

pub fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Train(a) => cmd_train(a),
        Command::Pipeline(a) => cmd_pipeline(a),
        Command::BenchScaling(a) => cmd_bench_scaling(a),
        Command::Continual(a) => cmd_continual(a),
        Command::Unsupervised(a) => cmd_unsupervised(a),
        Command::Pde(a) => cmd_pde(a),
        Command::Serve(a) => cmd_serve(a),
    }
}
