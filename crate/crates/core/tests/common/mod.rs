#![allow(dead_code)]

use kanlab_core::train::{total_loss, LossKind, Mlp, MlpActivation, RegWeights};
use kanlab_core::{init_network, Execution, KanNetwork, Matrix, ParamMask, SymbolicFn, SymbolicLock};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SMOOTH: [SymbolicFn; 6] = [
    SymbolicFn::Identity,
    SymbolicFn::Square,
    SymbolicFn::Sin,
    SymbolicFn::Tanh,
    SymbolicFn::Exp,
    SymbolicFn::Gaussian,
];

pub fn batch(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Matrix {
    Matrix::new(n, d, (0..n * d).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

fn central_differences(p0: &[f64], mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    (0..p0.len())
        .map(|q| {
            let h = 1e-6 * p0[q].abs().max(1.0);
            let mut p = p0.to_vec();
            p[q] += h;
            let up = f(&p);
            p[q] -= 2.0 * h;
            (up - f(&p)) / (2.0 * h)
        })
        .collect()
}

/// Max |numeric - analytic| over max |analytic|.
fn relative(numeric: &[f64], analytic: &[f64]) -> f64 {
    let scale = analytic.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-8);
    numeric.iter().zip(analytic).map(|(n, a)| (n - a).abs() / scale).fold(0.0, f64::max)
}

pub fn worst_relative_error(net: &KanNetwork, x: &Matrix, t: &Matrix, kind: LossKind, reg: RegWeights) -> f64 {
    let mask = ParamMask::all();
    let (_, g) = total_loss(net, x, t, kind, reg, Execution::Sequential).unwrap();
    let analytic = g.flatten(net, mask);
    let mut work = net.clone();
    let numeric = central_differences(&net.params(mask), |p| {
        work.set_params(p, mask).unwrap();
        total_loss(&work, x, t, kind, reg, Execution::Sequential).unwrap().0.total
    });
    relative(&numeric, &analytic)
}

/// Random network no larger than [4,4,4,1], up to 10 intervals, roughly a quarter of edges locked.
pub fn random_network(rng: &mut ChaCha8Rng) -> KanNetwork {
    let depth = rng.random_range(2..=4);
    let mut shape: Vec<usize> = (0..depth - 1).map(|_| rng.random_range(1..=4)).collect();
    shape.push(1);
    let g = rng.random_range(1..=10);
    let mut net = init_network(&shape, g, 3, rng.random(), 0.3).unwrap();
    let edges: Vec<_> = net.iter_edges().map(|(id, _)| id).collect();
    for (l, i, j) in edges {
        let e = net.edge_mut(l, i, j).unwrap();
        e.w_b = rng.random_range(-1.0..1.0);
        e.w_s = rng.random_range(0.5..1.5);
        if rng.random_bool(0.25) {
            let f = SMOOTH[rng.random_range(0..SMOOTH.len())];
            let p: [f64; 4] = std::array::from_fn(|_| rng.random_range(-1.0..1.0));
            e.lock = Some(SymbolicLock::new(f, p[0], p[1], p[2], p[3]));
        }
    }
    net
}

/// Worst prediction-loss and regularized-loss errors over `count` random networks.
pub fn gradient_oracle(count: usize, seed: u64) -> (f64, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let reg = RegWeights {
        lambda: 1e-2,
        mu1: 1.0,
        mu2: 1.0,
        stop_gradient: false,
    };
    let (mut pred, mut regd) = (0.0f64, 0.0f64);
    let mut done = 0;
    while done < count {
        let net = random_network(&mut rng);
        let d = net.shape()[0];
        let x = batch(&mut rng, 16, d);
        let t = batch(&mut rng, 16, 1);
        // |.| has a kink at 0; skip draws that sit on it
        let (_, trace) = net.forward(&x, Execution::Sequential).unwrap();
        let near_kink = net
            .iter_edges()
            .any(|((l, i, j), _)| trace.post_activations(l, i, j).iter().any(|v| v.abs() < 1e-4));
        if near_kink {
            continue;
        }
        pred = pred.max(worst_relative_error(&net, &x, &t, LossKind::Mse, RegWeights::default()));
        regd = regd.max(worst_relative_error(&net, &x, &t, LossKind::Rmse, reg));
        done += 1;
    }
    (pred, regd)
}

pub fn mlp_gradient_error(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mlp = Mlp::new(&[3, 8, 8, 2], MlpActivation::Tanh, seed).unwrap();
    let x = batch(&mut rng, 20, 3);
    let t = batch(&mut rng, 20, 2);
    let (_, analytic) = mlp.loss_and_grad(&x, &t, LossKind::Mse, Execution::Sequential).unwrap();
    let mut work = mlp.clone();
    let numeric = central_differences(&mlp.params(), |p| {
        work.set_params(p).unwrap();
        work.loss_and_grad(&x, &t, LossKind::Mse, Execution::Sequential).unwrap().0
    });
    relative(&numeric, &analytic)
}
