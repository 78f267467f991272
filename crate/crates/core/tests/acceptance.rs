mod common;

use std::time::Instant;

use kanlab_core::experiments::{
    run_continual, run_pde, run_staircase, run_unsupervised, ContinualConfig, PdeConfig, StaircaseConfig,
    UnsupervisedConfig,
};
use kanlab_core::network::{from_json, to_json};
use kanlab_core::pipeline::{run_pipeline, PipelineConfig};
use kanlab_core::simplify::Expression;
use kanlab_core::spline::{extend_grid, fit_least_squares, Grid, SplineCurve, DEFAULT_RIDGE};
use kanlab_core::train::{train, TrainConfig};
use kanlab_core::{init_network, tasks, Execution, SymbolicFn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const PARTITION_TOL: f64 = 1e-12;
const POLY_TOL: f64 = 1e-8;
const NESTED_TOL: f64 = 1e-10;
const DERIV_TOL: f64 = 1e-4;
const SPLINE_CASES: usize = 500;

const GRAD_NETWORKS: usize = 100;
const GRAD_PRED_TOL: f64 = 1e-5;
const GRAD_REG_TOL: f64 = 1e-4;

const STAIRCASE_TEST_RMSE: f64 = 1e-3;
const STAIRCASE_SLOPE: f64 = -2.5;

const SEEDS: u64 = 10;
const PIPELINE_MIN_HITS: usize = 7;
const PIPELINE_TEST_RMSE: f64 = 1e-6;
const COEFF_TOL: f64 = 0.02;
const PRODUCT_MIN_HITS: usize = 6;

const KAN_DRIFT: f64 = 1e-2;
const MLP_DRIFT: f64 = 5e-2;

const UNSUPERVISED_ACCURACY: f64 = 0.9;

const PDE_L2: f64 = 1e-3;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn spline_suite() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let (mut pou, mut poly, mut nested, mut deriv) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for _ in 0..SPLINE_CASES {
        let a = rng.random_range(-3.0..1.0);
        let b = a + rng.random_range(1.0..3.0);
        let g = rng.random_range(1..30);
        let k = rng.random_range(0..=5);
        let grid = Grid::uniform(a, b, g, k).unwrap();

        let x = rng.random_range(a..=b);
        let s: f64 = (0..grid.num_basis()).map(|i| grid.basis_eval(i, x, 0).unwrap()).sum();
        pou = pou.max((s - 1.0).abs());

        let n = 2 * (g + k);
        let xs: Vec<f64> = (0..n).map(|q| a + (q as f64 + rng.random_range(0.05..0.95)) / n as f64 * (b - a)).collect();
        let coef: Vec<f64> = (0..=k).map(|_| rng.random_range(-1.0..1.0)).collect();
        let (c, r) = (0.5 * (a + b), 0.5 * (b - a));
        let p = |x: f64| coef.iter().rev().fold(0.0, |acc, q| acc * (x - c) / r + q);
        let ys: Vec<f64> = xs.iter().map(|&x| p(x)).collect();
        let curve = fit_least_squares(&grid, &xs, &ys, DEFAULT_RIDGE).unwrap();
        poly = xs.iter().map(|&x| (curve.value(x) - p(x)).abs()).fold(poly, f64::max);

        let coeffs: Vec<f64> = (0..grid.num_basis()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let curve = SplineCurve::new(grid.clone(), coeffs).unwrap();
        let fine = Grid::uniform(a, b, 2 * g, k).unwrap();
        let n = 4 * (2 * g + k);
        let xs: Vec<f64> = (0..n).map(|q| a + (q as f64 + rng.random_range(0.05..0.95)) / n as f64 * (b - a)).collect();
        let moved = extend_grid(&curve, &fine, &xs).unwrap();
        nested = xs.iter().map(|&x| (moved.value(x) - curve.value(x)).abs()).fold(nested, f64::max);

        if k >= 2 {
            let x = a + rng.random_range(0.01..0.99) * (b - a);
            let h = 1e-5;
            let fd = (curve.value(x + h) - curve.value(x - h)) / (2.0 * h);
            let d = curve.eval(x, 1).unwrap();
            deriv = deriv.max((fd - d).abs() / d.abs().max(1.0));
        }
    }
    outcome(
        pou <= PARTITION_TOL && poly <= POLY_TOL && nested <= NESTED_TOL && deriv <= DERIV_TOL,
        format!(
            "{SPLINE_CASES} cases: partition {pou:.1e}, polynomial {poly:.1e}, nested {nested:.1e}, derivative {deriv:.1e}"
        ),
    )
}

fn gradient_oracle() -> Outcome {
    let (pred, reg) = common::gradient_oracle(GRAD_NETWORKS, 99);
    let mlp = common::mlp_gradient_error(99);
    outcome(
        pred <= GRAD_PRED_TOL && reg <= GRAD_REG_TOL,
        format!("{GRAD_NETWORKS} networks: prediction {pred:.1e}, regularized {reg:.1e} (mlp {mlp:.1e})"),
    )
}

fn staircase() -> Outcome {
    let r = run_staircase(&StaircaseConfig::default()).unwrap();
    let last = r.stages.last().unwrap();
    let slope = r.slope.unwrap_or(f64::NAN);
    let trail: Vec<String> = r.stages.iter().map(|s| format!("G{}:{:.1e}", s.grid, s.test_rmse)).collect();
    outcome(
        r.monotone() && last.test_rmse <= STAIRCASE_TEST_RMSE && slope <= STAIRCASE_SLOPE,
        format!("monotone {}, test RMSE {}, slope {slope:.2}", r.monotone(), trail.join(" ")),
    )
}

fn near(v: f64, want: f64) -> bool {
    (v - want).abs() <= COEFF_TOL
}

/// `lin` node with one child per weight.
fn lin_parts(e: &Expression) -> Option<(&[f64], f64, &[Expression])> {
    (e.op == "lin").then(|| {
        let (k, c) = e.params.split_at(e.params.len() - 1);
        (k, c[0], e.children.as_slice())
    })
}

/// `1.0·exp(1.0·sin(3.14·x₁) + 1.0·x₂²)` up to the coefficient tolerance.
fn matches_exp_sine(e: &Expression) -> bool {
    let unit_of_var = |e: &Expression, var: usize, scale: f64| match lin_parts(e) {
        Some(([k], c, [v])) => near(*k, scale) && c.abs() <= COEFF_TOL && v.op == "var" && v.params[0] as usize == var,
        _ => false,
    };
    let Some(([k], c, [exp])) = lin_parts(e) else {
        return false;
    };
    if !(near(*k, 1.0) && c.abs() <= COEFF_TOL && exp.op == SymbolicFn::Exp.name()) {
        return false;
    }
    let Some((ks, c, terms)) = exp.children.first().and_then(lin_parts) else {
        return false;
    };
    if ks.len() != 2 || c.abs() > COEFF_TOL || !ks.iter().all(|&k| near(k, 1.0)) {
        return false;
    }
    let sin = terms.iter().find(|t| t.op == SymbolicFn::Sin.name());
    let sq = terms.iter().find(|t| t.op == SymbolicFn::Square.name());
    match (sin, sq) {
        (Some(s), Some(q)) => unit_of_var(&s.children[0], 0, 3.14) && unit_of_var(&q.children[0], 1, 1.0),
        _ => false,
    }
}

fn symbolic_pipeline() -> Outcome {
    let mut pruned = 0;
    let mut full = 0;
    let mut notes = Vec::new();
    for seed in 0..SEEDS {
        let data = tasks::gen_task("exp_sine_2d", 1000, 1000, seed).unwrap();
        let r = run_pipeline(&data, &PipelineConfig { seed, ..Default::default() }).unwrap();
        if r.pruned_shape != [2, 1, 1] {
            notes.push(format!("seed {seed}: {:?}", r.pruned_shape));
            continue;
        }
        pruned += 1;
        let mut locks: Vec<&str> = r.auto.locked.iter().map(|(_, f)| f.function.name()).collect();
        locks.sort();
        let formula = r.formula.as_ref().and_then(|f| f[0].canonical(2).ok());
        let shape_ok = formula.as_ref().is_some_and(matches_exp_sine);
        let mut want = [SymbolicFn::Exp.name(), SymbolicFn::Sin.name(), SymbolicFn::Square.name()];
        want.sort();
        let ok = locks == want && r.test_rmse <= PIPELINE_TEST_RMSE && shape_ok;
        if ok {
            full += 1;
        } else {
            notes.push(format!("seed {seed}: locks {locks:?} test {:.1e} formula {:?}", r.test_rmse, r.rendered));
        }
    }
    let rendered = notes.join("; ");
    outcome(
        pruned >= PIPELINE_MIN_HITS && full == pruned,
        format!("pruned to [2,1,1] in {pruned}/{SEEDS}, of which {full} lock sin/x²/exp, reach ≤{PIPELINE_TEST_RMSE:.0e} and render exp(sin(3.14x₁)+x₂²) [{rendered}]"),
    )
}

fn multiplication() -> Outcome {
    let mut hits = 0;
    let mut shapes = Vec::new();
    for seed in 0..SEEDS {
        let data = tasks::gen_task("product_2d", 1000, 1000, seed).unwrap();
        let r = run_pipeline(&data, &PipelineConfig { seed, ..Default::default() }).unwrap();
        if r.pruned_shape == [2, 2, 1] {
            hits += 1;
        }
        shapes.push(format!("{:?}", r.pruned_shape));
    }
    outcome(hits >= PRODUCT_MIN_HITS, format!("[2,2,1] in {hits}/{SEEDS} ({})", shapes.join(" ")))
}

fn continual() -> Outcome {
    let r = run_continual(&ContinualConfig::default()).unwrap();
    let (k, m) = (r.kan_drift(), r.mlp_drift());
    outcome(k <= KAN_DRIFT && m >= MLP_DRIFT, format!("KAN drift {k:.1e}, MLP drift {m:.2}"))
}

fn unsupervised() -> Outcome {
    let mut majority = true;
    let (mut first, mut second) = (false, false);
    let mut total_above = 0;
    let mut parts = Vec::new();
    for lambda in [1e-2, 1e-3] {
        let mut above = 0;
        for seed in 0..SEEDS {
            let r = run_unsupervised(&UnsupervisedConfig { lambda, seed, ..Default::default() }).unwrap();
            if r.accuracy > UNSUPERVISED_ACCURACY {
                above += 1;
                first |= r.active == [1, 2, 3];
                second |= r.active == [4, 5];
            }
        }
        total_above += above;
        majority &= 2 * above > SEEDS as usize;
        parts.push(format!("λ={lambda:.0e}: {above}/{SEEDS} above {UNSUPERVISED_ACCURACY}"));
    }
    outcome(
        majority && first && second,
        format!(
            "{} ({total_above}/{} overall); {{x₁,x₂,x₃}} found {first}, {{x₄,x₅}} found {second}",
            parts.join(", "),
            2 * SEEDS
        ),
    )
}

fn pde() -> Outcome {
    let r = run_pde(&PdeConfig::default()).unwrap();
    let trail: Vec<String> = r.stages.iter().map(|(g, e)| format!("G{g}:{e:.2e}")).collect();
    outcome(r.l2 <= PDE_L2 && r.monotone(), format!("L2 {}, monotone {}", trail.join(" "), r.monotone()))
}

fn determinism() -> Outcome {
    let data = tasks::gen_task("exp_sine_2d", 500, 500, 3).unwrap();
    let net = init_network(&[2, 3, 1], 3, 3, 3, 0.1).unwrap();
    let run = |exec| {
        let cfg = TrainConfig {
            grid_schedule: vec![3, 5],
            steps_per_stage: 30,
            lambda: 1e-3,
            execution: exec,
            ..TrainConfig::default()
        };
        let out = train(&net, &data, &cfg).unwrap();
        (out.history.to_csv(), to_json(&out.network).unwrap(), out.network)
    };
    let a = run(Execution::Sequential);
    let b = run(Execution::Sequential);
    let c = run(Execution::Parallel);
    let repeat = a.0 == b.0 && a.1 == b.1 && a.0 == c.0 && a.1 == c.1;
    let back = from_json(&a.1).unwrap();
    let x = data.test_inputs();
    let y0 = a.2.predict(&x, Execution::Sequential).unwrap();
    let y1 = back.predict(&x, Execution::Sequential).unwrap();
    let bits = y0.data().iter().zip(y1.data()).all(|(p, q)| p.to_bits() == q.to_bits());
    let redoc = to_json(&back).unwrap() == a.1;
    outcome(
        repeat && bits && redoc,
        format!("byte-identical reruns {repeat}, round-trip outputs bit-exact {bits}, document stable {redoc}"),
    )
}

type Check = (&'static str, fn() -> Outcome);

fn main() {
    let checks: [Check; 9] = [
        ("spline correctness", spline_suite),
        ("gradient oracle", gradient_oracle),
        ("staircase and scaling", staircase),
        ("symbolic pipeline", symbolic_pipeline),
        ("multiplication structure", multiplication),
        ("continual learning", continual),
        ("unsupervised 6D", unsupervised),
        ("PDE", pde),
        ("determinism and serialization", determinism),
    ];
    let filters: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (name, check) in checks {
        if !filters.is_empty() && !filters.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let t = Instant::now();
        let o = check();
        let verdict = if o.pass { "PASS" } else { "FAIL" };
        println!("{verdict} {name} ({:.1}s): {}", t.elapsed().as_secs_f64(), o.detail);
        failed += usize::from(!o.pass);
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
