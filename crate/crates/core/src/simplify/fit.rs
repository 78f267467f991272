use serde::{Deserialize, Serialize};

use crate::error::{KanError, Result};
use crate::exec::{map_items, Execution};
use crate::network::{ForwardTrace, KanNetwork, SymbolicLock};
use crate::symbolic::{SymbolicFn, SymbolicLibrary};

/// Search box for `a` and `b` in the first round.
pub const AFFINE_RANGE: f64 = 10.0;
/// Points per axis in each round.
pub const AFFINE_GRID: usize = 21;
pub const AFFINE_ROUNDS: usize = 2;
/// Box shrink factor between rounds.
pub const AFFINE_ZOOM: f64 = 0.2;
/// Clearance from domain boundaries for `a x + b`.
pub const DOMAIN_MARGIN: f64 = 1e-6;
/// Total variance at or below this counts as a constant target.
pub const R2_FLOOR: f64 = 1e-12;
/// Fits whose unexplained fraction is within
/// `R2_TIE_FACTOR * (1 - best) + R2_TIE_ABS` count as tied with the best.
pub const R2_TIE_FACTOR: f64 = 2.0;
pub const R2_TIE_ABS: f64 = 1e-4;
pub const DEFAULT_R2_THRESHOLD: f64 = 0.95;
/// Damped Gauss-Newton iterations applied after the grid search.
pub const POLISH_ITERS: usize = 40;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AffineFit {
    pub function: SymbolicFn,
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
    pub r2: f64,
}

impl AffineFit {
    pub fn lock(&self) -> SymbolicLock {
        SymbolicLock::new(self.function, self.a, self.b, self.c, self.d)
    }
}

/// Best `c, d` for fixed `a, b` by least squares, with its R^2.
fn regress(f: SymbolicFn, a: f64, b: f64, xs: &[f64], ys: &[f64], y_mean: f64, ss_tot: f64) -> Option<(f64, f64, f64)> {
    let domain = f.domain();
    let mut fu = Vec::with_capacity(xs.len());
    for &x in xs {
        let u = a * x + b;
        if !domain.contains(u, DOMAIN_MARGIN) {
            return None;
        }
        let v = f.eval(u);
        if !v.is_finite() {
            return None;
        }
        fu.push(v);
    }
    let n = xs.len() as f64;
    let f_mean = fu.iter().sum::<f64>() / n;
    let (mut sff, mut sfy) = (0.0, 0.0);
    for (v, y) in fu.iter().zip(ys) {
        let df = v - f_mean;
        sff += df * df;
        sfy += df * (y - y_mean);
    }
    let c = if sff > 0.0 { sfy / sff } else { 0.0 };
    let d = y_mean - c * f_mean;
    let ss_res: f64 = fu.iter().zip(ys).map(|(v, y)| (y - c * v - d).powi(2)).sum();
    let r2 = if ss_tot <= R2_FLOOR { 1.0 } else { 1.0 - ss_res / ss_tot };
    r2.is_finite().then_some((c, d, r2))
}

/// Fit `y ~ c f(a x + b) + d`: grid search over `(a, b)` with a zoomed
/// second round, closed-form `c, d` at every grid point.
pub fn fit_affine(f: SymbolicFn, xs: &[f64], ys: &[f64]) -> Result<AffineFit> {
    if xs.is_empty() {
        return Err(KanError::EmptySamples);
    }
    if xs.len() != ys.len() {
        return Err(KanError::SampleMismatch {
            xs: xs.len(),
            ys: ys.len(),
        });
    }
    let n = ys.len() as f64;
    let y_mean = ys.iter().sum::<f64>() / n;
    let ss_tot: f64 = ys.iter().map(|y| (y - y_mean).powi(2)).sum();
    if f == SymbolicFn::Zero {
        let r2 = if ss_tot <= R2_FLOOR { 1.0 } else { 0.0 };
        return Ok(AffineFit {
            function: f,
            a: 1.0,
            b: 0.0,
            c: 0.0,
            d: y_mean,
            r2,
        });
    }
    let mut best: Option<AffineFit> = None;
    let (mut ca, mut cb, mut half) = (0.0, 0.0, AFFINE_RANGE);
    for _ in 0..AFFINE_ROUNDS {
        let step = 2.0 * half / (AFFINE_GRID - 1) as f64;
        for qa in 0..AFFINE_GRID {
            let a = ca - half + step * qa as f64;
            for qb in 0..AFFINE_GRID {
                let b = cb - half + step * qb as f64;
                if let Some((c, d, r2)) = regress(f, a, b, xs, ys, y_mean, ss_tot) {
                    if best.is_none_or(|bf| r2 > bf.r2) {
                        best = Some(AffineFit { function: f, a, b, c, d, r2 });
                    }
                }
            }
        }
        let Some(bf) = best else {
            return Err(KanError::Unfittable(f.name().to_string()));
        };
        (ca, cb, half) = (bf.a, bf.b, half * AFFINE_ZOOM);
    }
    let best = best.expect("at least one round");
    Ok(polish(best, xs, ys, y_mean, ss_tot))
}

fn sum_sq(f: SymbolicFn, p: [f64; 4], xs: &[f64], ys: &[f64]) -> Option<f64> {
    let domain = f.domain();
    let mut acc = 0.0;
    for (&x, &y) in xs.iter().zip(ys) {
        let u = p[0] * x + p[1];
        if !domain.contains(u, DOMAIN_MARGIN) {
            return None;
        }
        acc += (y - p[2] * f.eval(u) - p[3]).powi(2);
    }
    acc.is_finite().then_some(acc)
}

/// Levenberg-Marquardt refinement of all four parameters, then a final
/// closed-form `c, d`. Never returns a worse fit than `start`.
fn polish(start: AffineFit, xs: &[f64], ys: &[f64], y_mean: f64, ss_tot: f64) -> AffineFit {
    let f = start.function;
    let mut p = [start.a, start.b, start.c, start.d];
    let Some(mut ss) = sum_sq(f, p, xs, ys) else {
        return start;
    };
    let mut damping = 1e-3;
    for _ in 0..POLISH_ITERS {
        let mut jtj = [0.0; 16];
        let mut jtr = [0.0; 4];
        for (&x, &y) in xs.iter().zip(ys) {
            let u = p[0] * x + p[1];
            let (v, dv) = (f.eval(u), f.deriv(u));
            let row = [p[2] * dv * x, p[2] * dv, v, 1.0];
            let r = y - p[2] * v - p[3];
            for i in 0..4 {
                jtr[i] += row[i] * r;
                for j in 0..4 {
                    jtj[i * 4 + j] += row[i] * row[j];
                }
            }
        }
        let mut improved = false;
        for _ in 0..8 {
            let mut m = jtj;
            for i in 0..4 {
                m[i * 5] += damping * jtj[i * 5].max(1e-12);
            }
            let Ok(step) = crate::linalg::solve_spd(4, &m, &jtr) else {
                damping *= 10.0;
                continue;
            };
            let trial = [p[0] + step[0], p[1] + step[1], p[2] + step[2], p[3] + step[3]];
            match sum_sq(f, trial, xs, ys) {
                Some(t) if t < ss => {
                    improved = ss - t > 1e-15 * ss.max(1e-300);
                    (p, ss) = (trial, t);
                    damping = (damping / 3.0).max(1e-12);
                    break;
                }
                _ => damping *= 10.0,
            }
        }
        if !improved {
            break;
        }
    }
    match regress(f, p[0], p[1], xs, ys, y_mean, ss_tot) {
        Some((c, d, r2)) if r2 >= start.r2 => AffineFit {
            function: f,
            a: p[0],
            b: p[1],
            c,
            d,
            r2,
        },
        _ => start,
    }
}

/// One ranked candidate for an edge.
pub type Suggestion = AffineFit;

/// Order fits best first. Near-equal fits are ordered by complexity, then
/// by library position.
fn rank(mut fits: Vec<(usize, AffineFit)>) -> Vec<AffineFit> {
    let Some(best) = fits.iter().map(|(_, f)| f.r2).reduce(f64::max) else {
        return Vec::new();
    };
    let cut = R2_TIE_FACTOR * (1.0 - best) + R2_TIE_ABS;
    let tied = |f: &AffineFit| 1.0 - f.r2 <= cut;
    fits.sort_by(|(ia, a), (ib, b)| match (tied(a), tied(b)) {
        (true, true) => (a.function.complexity(), ia).cmp(&(b.function.complexity(), ib)),
        (true, false) => std::cmp::Ordering::Less,
        (false, true) => std::cmp::Ordering::Greater,
        (false, false) => b.r2.total_cmp(&a.r2).then(ia.cmp(ib)),
    });
    fits.into_iter().map(|(_, f)| f).collect()
}

fn edge_samples(net: &KanNetwork, trace: &ForwardTrace, l: usize, i: usize, j: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    net.edge(l, i, j)?;
    if trace.version() != net.version() {
        return Err(KanError::StaleTrace {
            trace: trace.version(),
            network: net.version(),
        });
    }
    Ok((trace.pre_activations(l, i), trace.post_activations(l, i, j)))
}

/// Library functions ranked by how well they match edge `(l, i, j)` on the
/// traced samples. Functions whose domain cannot hold the samples are left
/// out.
pub fn suggest_symbolic(
    net: &KanNetwork,
    trace: &ForwardTrace,
    (l, i, j): (usize, usize, usize),
    library: &SymbolicLibrary,
    exec: Execution,
) -> Result<Vec<Suggestion>> {
    let (xs, ys) = edge_samples(net, trace, l, i, j)?;
    let items: Vec<(usize, SymbolicFn)> = library.entries().iter().copied().enumerate().collect();
    let fits = map_items(items, exec, |(q, f)| fit_affine(f, &xs, &ys).ok().map(|fit| (q, fit)));
    Ok(rank(fits.into_iter().flatten().collect()))
}

/// Lock edge `(l, i, j)` to `f` with affine parameters fitted on the trace.
pub fn fix_symbolic(
    net: &mut KanNetwork,
    trace: &ForwardTrace,
    (l, i, j): (usize, usize, usize),
    f: SymbolicFn,
) -> Result<AffineFit> {
    let (xs, ys) = edge_samples(net, trace, l, i, j)?;
    let fit = fit_affine(f, &xs, &ys)?;
    net.edge_mut(l, i, j)?.lock = Some(fit.lock());
    Ok(fit)
}

/// Lock edge `(l, i, j)` with given parameters.
pub fn fix_symbolic_with(net: &mut KanNetwork, (l, i, j): (usize, usize, usize), lock: SymbolicLock) -> Result<()> {
    net.edge_mut(l, i, j)?.lock = Some(lock);
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AutoReport {
    pub locked: Vec<((usize, usize, usize), AffineFit)>,
    /// Edges whose best fit fell below the threshold, with that fit if any.
    pub skipped: Vec<((usize, usize, usize), Option<AffineFit>)>,
}

/// Lock every unlocked edge whose top suggestion reaches `threshold`.
/// All suggestions come from the same trace.
pub fn auto_symbolic(
    net: &mut KanNetwork,
    trace: &ForwardTrace,
    threshold: f64,
    library: &SymbolicLibrary,
    exec: Execution,
) -> Result<AutoReport> {
    let edges: Vec<(usize, usize, usize)> =
        net.iter_edges().filter(|(_, e)| !e.is_locked()).map(|(id, _)| id).collect();
    let mut picks = Vec::with_capacity(edges.len());
    for id in edges {
        let top = suggest_symbolic(net, trace, id, library, exec)?.into_iter().next();
        picks.push((id, top));
    }
    let mut report = AutoReport {
        locked: Vec::new(),
        skipped: Vec::new(),
    };
    for (id, top) in picks {
        match top {
            Some(fit) if fit.r2 >= threshold => {
                fix_symbolic_with(net, id, fit.lock())?;
                report.locked.push((id, fit));
            }
            other => report.skipped.push((id, other)),
        }
    }
    Ok(report)
}
