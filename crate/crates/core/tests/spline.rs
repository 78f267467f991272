use kanlab_core::spline::{adapt_grid, extend_grid, fit_least_squares, Grid, GridAdaptation, SplineCurve, DEFAULT_RIDGE};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Textbook Cox-de Boor recursion on the augmented knots, half-open intervals.
fn cox_de_boor(t: &[f64], i: usize, k: usize, x: f64) -> f64 {
    if k == 0 {
        return if t[i] <= x && x < t[i + 1] { 1.0 } else { 0.0 };
    }
    let mut v = 0.0;
    let l = t[i + k] - t[i];
    if l > 0.0 {
        v += (x - t[i]) / l * cox_de_boor(t, i, k - 1, x);
    }
    let r = t[i + k + 1] - t[i + 1];
    if r > 0.0 {
        v += (t[i + k + 1] - x) / r * cox_de_boor(t, i + 1, k - 1, x);
    }
    v
}

fn design(grid: &Grid, xs: &[f64]) -> DMatrix<f64> {
    let n = grid.num_basis();
    DMatrix::from_fn(xs.len(), n, |r, c| cox_de_boor(grid.knots(), c, grid.order(), xs[r]))
}

/// Minimum-norm least-squares coefficients via SVD.
fn lsq_oracle(grid: &Grid, xs: &[f64], ys: &[f64]) -> DVector<f64> {
    let a = design(grid, xs);
    let svd = a.svd(true, true);
    svd.solve(&DVector::from_column_slice(ys), 1e-12).unwrap()
}

fn samples(rng: &mut ChaCha8Rng, n: usize, a: f64, b: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(a..b)).collect()
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

#[test]
fn basis_matches_recursion_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for k in 0..=5 {
        let grid = Grid::uniform(-1.3, 0.7, 7, k).unwrap();
        for x in samples(&mut rng, 50, -1.3, 0.7) {
            for i in 0..grid.num_basis() {
                let got = grid.basis_eval(i, x, 0).unwrap();
                let want = cox_de_boor(grid.knots(), i, k, x);
                assert!((got - want).abs() < 1e-13, "k={k} i={i} x={x}: {got} vs {want}");
            }
        }
    }
}

#[test]
fn sine_fit_matches_normal_equations_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let grid = Grid::uniform(0.0, 1.0, 10, 3).unwrap();
    let xs = samples(&mut rng, 200, 0.0, 1.0);
    let ys: Vec<f64> = xs.iter().map(|x| (2.0 * std::f64::consts::PI * x).sin()).collect();
    let curve = fit_least_squares(&grid, &xs, &ys, DEFAULT_RIDGE).unwrap();
    let a = design(&grid, &xs);
    let ata = a.transpose() * &a;
    let aty = a.transpose() * DVector::from_column_slice(&ys);
    let oracle = ata.cholesky().unwrap().solve(&aty);
    assert!(max_abs_diff(curve.coeffs(), oracle.as_slice()) < 1e-6);
}

#[test]
fn fitted_line_value_and_slope() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let grid = Grid::uniform(0.0, 1.0, 5, 3).unwrap();
    let xs = samples(&mut rng, 100, 0.0, 1.0);
    let curve = fit_least_squares(&grid, &xs, &xs, DEFAULT_RIDGE).unwrap();
    assert!((curve.eval(0.3, 0).unwrap() - 0.3).abs() < 1e-8);
    assert!((curve.eval(0.3, 1).unwrap() - 1.0).abs() < 1e-6);
}

#[test]
fn extension_matches_oracle_between_unrelated_grids() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let coarse = Grid::uniform(-1.0, 1.0, 5, 3).unwrap();
    let coeffs: Vec<f64> = (0..coarse.num_basis()).map(|_| rng.random_range(-1.0..1.0)).collect();
    let curve = SplineCurve::new(coarse, coeffs).unwrap();
    let fine = Grid::uniform(-1.0, 1.0, 7, 3).unwrap();
    let xs = samples(&mut rng, 300, -1.0, 1.0);
    let ys: Vec<f64> = xs.iter().map(|&x| curve.value(x)).collect();
    let moved = extend_grid(&curve, &fine, &xs).unwrap();
    let oracle = lsq_oracle(&fine, &xs, &ys);
    assert!(max_abs_diff(moved.coeffs(), oracle.as_slice()) < 1e-8);
}

#[test]
fn square_survives_nested_extension() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let coarse = Grid::uniform(-1.0, 1.0, 5, 3).unwrap();
    let xs = samples(&mut rng, 200, -1.0, 1.0);
    let ys: Vec<f64> = xs.iter().map(|x| x * x).collect();
    let curve = fit_least_squares(&coarse, &xs, &ys, DEFAULT_RIDGE).unwrap();
    let fine = Grid::uniform(-1.0, 1.0, 10, 3).unwrap();
    let moved = extend_grid(&curve, &fine, &xs).unwrap();
    let worst = xs.iter().map(|&x| (moved.value(x) - curve.value(x)).abs()).fold(0.0, f64::max);
    assert!(worst <= 1e-10, "{worst:e}");
}

#[test]
fn adapted_knots_follow_gaussian_quantiles() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let acts: Vec<f64> = (0..500)
        .map(|_| {
            let (u, v): (f64, f64) = (rng.random_range(1e-12..1.0), rng.random_range(0.0..1.0));
            0.4 * (-2.0 * u.ln()).sqrt() * (2.0 * std::f64::consts::PI * v).cos()
        })
        .collect();
    let old = SplineCurve::new(
        Grid::uniform(-1.0, 1.0, 5, 3).unwrap(),
        (0..8).map(|q| (q as f64 * 0.7).sin()).collect(),
    )
    .unwrap();
    let g_new = 8;
    let adapt = GridAdaptation::default();
    let moved = adapt_grid(&old, &acts, g_new, adapt).unwrap();

    let mut sorted = acts.clone();
    sorted.sort_by(f64::total_cmp);
    let (lo, hi) = (sorted[0], sorted[sorted.len() - 1]);
    let span = hi - lo;
    let (a, b) = (lo - adapt.margin * span, hi + adapt.margin * span);
    let pts = moved.grid().points();
    assert!((pts[0] - a).abs() < 1e-12 && (pts[g_new] - b).abs() < 1e-12);
    for (q, &p) in pts.iter().enumerate().take(g_new).skip(1) {
        let frac = q as f64 / g_new as f64;
        let pos = frac * (sorted.len() - 1) as f64;
        let (f, w) = (pos.floor() as usize, pos - pos.floor());
        let quant = sorted[f] * (1.0 - w) + sorted[f + 1] * w;
        let want = adapt.blend * (a + frac * (b - a)) + (1.0 - adapt.blend) * quant;
        assert!((p - want).abs() < 1e-12, "knot {q}: {p} vs {want}");
    }
    let ys: Vec<f64> = acts.iter().map(|&x| old.value(x)).collect();
    let oracle = lsq_oracle(moved.grid(), &acts, &ys);
    assert!(max_abs_diff(moved.coeffs(), oracle.as_slice()) < 1e-8);
}

fn grid_strategy() -> impl Strategy<Value = (f64, f64, usize, usize)> {
    (-3.0..1.0f64, 0.1..3.0f64, 1usize..30, 0usize..=5).prop_map(|(a, w, g, k)| (a, a + w, g, k))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn partition_of_unity((a, b, g, k) in grid_strategy(), t in 0.0..=1.0f64) {
        let grid = Grid::uniform(a, b, g, k).unwrap();
        let x = a + t * (b - a);
        let s: f64 = (0..grid.num_basis()).map(|i| grid.basis_eval(i, x, 0).unwrap()).sum();
        prop_assert!((s - 1.0).abs() <= 1e-12, "sum {}", s);
    }

    #[test]
    fn local_support((a, b, g, k) in grid_strategy(), t in -0.5..1.5f64, pick in 0usize..1000) {
        let grid = Grid::uniform(a, b, g, k).unwrap();
        let i = pick % grid.num_basis();
        let x = a + t * (b - a);
        let kn = grid.knots();
        if x < kn[i] || x > kn[i + k + 1] {
            prop_assert_eq!(grid.basis_eval(i, x, 0).unwrap(), 0.0);
        }
    }

    #[test]
    fn polynomial_reproduction((a, b, g, k) in grid_strategy(), seed in 0u64..1000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let grid = Grid::uniform(a, b, g, k).unwrap();
        let n = 2 * (g + k);
        // one sample per stratum keeps every interval covered
        let xs: Vec<f64> = (0..n).map(|q| a + (q as f64 + rng.random_range(0.05..0.95)) / n as f64 * (b - a)).collect();
        let poly: Vec<f64> = (0..=k).map(|_| rng.random_range(-1.0..1.0)).collect();
        let (c, r) = (0.5 * (a + b), 0.5 * (b - a));
        let p = |x: f64| poly.iter().rev().fold(0.0, |acc, q| acc * (x - c) / r + q);
        let ys: Vec<f64> = xs.iter().map(|&x| p(x)).collect();
        let curve = fit_least_squares(&grid, &xs, &ys, DEFAULT_RIDGE).unwrap();
        for &x in &xs {
            prop_assert!((curve.value(x) - p(x)).abs() <= 1e-8, "x={} err={:e}", x, (curve.value(x) - p(x)).abs());
        }
    }

    #[test]
    fn nested_extension_is_exact((a, b, g, k) in grid_strategy(), seed in 0u64..1000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let coarse = Grid::uniform(a, b, g, k).unwrap();
        let coeffs: Vec<f64> = (0..coarse.num_basis()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let curve = SplineCurve::new(coarse, coeffs).unwrap();
        let fine = Grid::uniform(a, b, 2 * g, k).unwrap();
        let n = 4 * (2 * g + k);
        let xs: Vec<f64> = (0..n).map(|q| a + (q as f64 + rng.random_range(0.05..0.95)) / n as f64 * (b - a)).collect();
        let moved = extend_grid(&curve, &fine, &xs).unwrap();
        for &x in &xs {
            prop_assert!((moved.value(x) - curve.value(x)).abs() <= 1e-10);
        }
    }

    #[test]
    fn derivative_matches_central_differences(
        a in -3.0..1.0f64, w in 1.0..3.0f64, g in 1usize..30, k in 2usize..=5, t in 0.01..0.99f64, seed in 0u64..1000,
    ) {
        let b = a + w;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let grid = Grid::uniform(a, b, g, k).unwrap();
        let coeffs: Vec<f64> = (0..grid.num_basis()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let curve = SplineCurve::new(grid, coeffs).unwrap();
        let x = a + t * (b - a);
        let h = 1e-5;
        let fd = (curve.value(x + h) - curve.value(x - h)) / (2.0 * h);
        let d = curve.eval(x, 1).unwrap();
        prop_assert!((fd - d).abs() <= 1e-4 * d.abs().max(1.0), "fd {} vs {}", fd, d);
    }
}
