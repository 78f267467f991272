//! B-spline bases and curves on augmented knot grids.
//!
//! A [`Grid`] of `G` intervals and order `k` over `[a, b]` carries the knots
//! `t_{-k}, ..., t_{G+k}`. Knot `t_p` lives at array position `p + k`, and
//! basis function `i` (for `0 <= i < G + k`) is supported on
//! `knots[i] ..= knots[i + k + 1]`. Inside `[a, b]` the bases form a partition
//! of unity; outside they are evaluated as defined on the augmented knots and
//! vanish beyond the outermost knots.

use serde::{Deserialize, Serialize};

use crate::error::{KanError, Result};
use crate::linalg::BandedSpd;

/// Largest supported spline order.
pub const MAX_ORDER: usize = 7;

/// Ridge weight used by every least-squares solve unless overridden.
pub const DEFAULT_RIDGE: f64 = 1e-8;

/// Residual refinement passes always run after the initial ridge solve.
pub const REFINEMENT_PASSES: usize = 3;

/// Cap on refinement passes for poorly sampled bases.
pub const MAX_REFINEMENT_PASSES: usize = 500;

/// Knot grid: `G` intervals on `[a, b]`, extended by `k` knots on each side.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    a: f64,
    b: f64,
    intervals: usize,
    order: usize,
    knots: Vec<f64>,
}

impl Grid {
    /// Uniform grid on `[a, b]`.
    pub fn uniform(a: f64, b: f64, intervals: usize, order: usize) -> Result<Self> {
        check_params(a, b, intervals, order)?;
        let h = (b - a) / intervals as f64;
        let points = (0..=intervals)
            .map(|q| if q == intervals { b } else { a + q as f64 * h })
            .collect();
        Self::from_points(points, order)
    }

    /// Grid through the given breakpoints `t_0 = a, ..., t_G = b`.
    ///
    /// The augmentation knots continue the boundary spacing uniformly.
    pub fn from_points(points: Vec<f64>, order: usize) -> Result<Self> {
        if points.len() < 2 {
            return Err(KanError::InvalidGrid("need at least two breakpoints".into()));
        }
        let intervals = points.len() - 1;
        let (a, b) = (points[0], points[intervals]);
        check_params(a, b, intervals, order)?;
        if points.windows(2).any(|w| !(w[1] >= w[0])) {
            return Err(KanError::InvalidGrid("breakpoints must be non-decreasing".into()));
        }
        let left = points[1] - points[0];
        let right = points[intervals] - points[intervals - 1];
        if !(left > 0.0 && right > 0.0) {
            return Err(KanError::InvalidGrid("boundary intervals must have positive width".into()));
        }
        let mut knots = Vec::with_capacity(intervals + 2 * order + 1);
        for p in (1..=order).rev() {
            knots.push(a - p as f64 * left);
        }
        knots.extend_from_slice(&points);
        for p in 1..=order {
            knots.push(b + p as f64 * right);
        }
        Ok(Self {
            a,
            b,
            intervals,
            order,
            knots,
        })
    }

    /// Rebuild a grid from a full augmented knot vector.
    pub fn from_knots(knots: Vec<f64>, intervals: usize, order: usize) -> Result<Self> {
        if knots.len() != intervals + 2 * order + 1 {
            return Err(KanError::InvalidGrid(format!(
                "expected {} knots for G={intervals}, k={order}, got {}",
                intervals + 2 * order + 1,
                knots.len()
            )));
        }
        if knots.windows(2).any(|w| !(w[1] >= w[0])) {
            return Err(KanError::InvalidGrid("knots must be non-decreasing".into()));
        }
        let (a, b) = (knots[order], knots[order + intervals]);
        check_params(a, b, intervals, order)?;
        Ok(Self {
            a,
            b,
            intervals,
            order,
            knots,
        })
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    pub fn intervals(&self) -> usize {
        self.intervals
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    /// Interior breakpoints `t_0..=t_G`.
    pub fn points(&self) -> &[f64] {
        &self.knots[self.order..=self.order + self.intervals]
    }

    /// Number of basis functions, `G + k`.
    pub fn num_basis(&self) -> usize {
        self.intervals + self.order
    }

    /// True when the breakpoints are equally spaced (up to rounding).
    pub fn is_uniform(&self) -> bool {
        match Grid::uniform(self.a, self.b, self.intervals, self.order) {
            Ok(u) => u.knots == self.knots,
            Err(_) => false,
        }
    }

    /// Knot interval `j` with `knots[j] <= x < knots[j + 1]`; `x = b` belongs to
    /// the last interval inside `[a, b]`.
    fn span(&self, x: f64) -> Option<usize> {
        let t = &self.knots;
        if x == self.b {
            return Some(self.order + self.intervals - 1);
        }
        if !(x >= t[0] && x < t[t.len() - 1]) {
            return None;
        }
        Some(t.partition_point(|&v| v <= x) - 1)
    }

    /// Values (and first derivatives) of the basis functions that are nonzero at `x`.
    pub fn local_basis(&self, x: f64) -> LocalBasis {
        let k = self.order;
        let t = &self.knots;
        let last = t.len() - 1;
        let mut out = LocalBasis::default();
        let Some(j) = self.span(x) else {
            return out;
        };
        // n[r] holds N_{j-p+r, p}; prev keeps order k-1 for the derivative.
        let mut n = [0.0; MAX_ORDER + 2];
        let mut prev = [0.0; MAX_ORDER + 2];
        n[0] = 1.0;
        for p in 1..=k {
            if p == k {
                prev = n;
            }
            let mut next = [0.0; MAX_ORDER + 2];
            for (r, slot) in next.iter_mut().enumerate().take(p + 1) {
                let i = j as isize - p as isize + r as isize;
                if i < 0 || i as usize + p + 1 > last {
                    continue;
                }
                let i = i as usize;
                let mut v = 0.0;
                if r >= 1 {
                    let d = t[i + p] - t[i];
                    if d > 0.0 {
                        v += (x - t[i]) / d * n[r - 1];
                    }
                }
                if r < p {
                    let d = t[i + p + 1] - t[i + 1];
                    if d > 0.0 {
                        v += (t[i + p + 1] - x) / d * n[r];
                    }
                }
                *slot = v;
            }
            n = next;
        }
        let count = self.num_basis() as isize;
        let first = j as isize - k as isize;
        for r in 0..=k {
            let i = first + r as isize;
            if i < 0 || i >= count {
                continue;
            }
            let iu = i as usize;
            let deriv = if k == 0 {
                0.0
            } else {
                let mut d = 0.0;
                if r >= 1 {
                    let den = t[iu + k] - t[iu];
                    if den > 0.0 {
                        d += prev[r - 1] / den;
                    }
                }
                if r < k {
                    let den = t[iu + k + 1] - t[iu + 1];
                    if den > 0.0 {
                        d -= prev[r] / den;
                    }
                }
                k as f64 * d
            };
            if out.len == 0 {
                out.start = iu;
            }
            out.values[out.len] = n[r];
            out.derivs[out.len] = deriv;
            out.len += 1;
        }
        out
    }

    /// `m`-th derivative of basis function `i` at `x`, by the Cox-de Boor
    /// recursion on the single basis function.
    pub fn basis_eval(&self, i: usize, x: f64, m: usize) -> Result<f64> {
        if i >= self.num_basis() {
            return Err(KanError::BasisIndex {
                index: i,
                count: self.num_basis(),
            });
        }
        if m > self.order {
            return Err(KanError::DerivativeOrder {
                order: m,
                k: self.order,
            });
        }
        Ok(match self.span(x) {
            Some(span) => self.basis_rec(i, self.order, x, m, span),
            None => 0.0,
        })
    }

    fn basis_rec(&self, i: usize, p: usize, x: f64, m: usize, span: usize) -> f64 {
        let t = &self.knots;
        if p == 0 {
            return if m == 0 && i == span { 1.0 } else { 0.0 };
        }
        let d1 = t[i + p] - t[i];
        let d2 = t[i + p + 1] - t[i + 1];
        if m == 0 {
            let mut v = 0.0;
            if d1 > 0.0 {
                v += (x - t[i]) / d1 * self.basis_rec(i, p - 1, x, 0, span);
            }
            if d2 > 0.0 {
                v += (t[i + p + 1] - x) / d2 * self.basis_rec(i + 1, p - 1, x, 0, span);
            }
            v
        } else {
            let mut v = 0.0;
            if d1 > 0.0 {
                v += self.basis_rec(i, p - 1, x, m - 1, span) / d1;
            }
            if d2 > 0.0 {
                v -= self.basis_rec(i + 1, p - 1, x, m - 1, span) / d2;
            }
            p as f64 * v
        }
    }
}

fn check_params(a: f64, b: f64, intervals: usize, order: usize) -> Result<()> {
    if !(a.is_finite() && b.is_finite() && a < b) {
        return Err(KanError::InvalidGrid(format!("need finite a < b, got [{a}, {b}]")));
    }
    if intervals == 0 {
        return Err(KanError::InvalidGrid("G must be at least 1".into()));
    }
    if order > MAX_ORDER {
        return Err(KanError::InvalidGrid(format!(
            "spline order {order} exceeds the supported maximum {MAX_ORDER}"
        )));
    }
    Ok(())
}

/// Nonzero basis functions at one point: indices `start .. start + len`.
#[derive(Debug, Clone, Copy, Default)]
pub struct LocalBasis {
    pub start: usize,
    pub len: usize,
    pub values: [f64; MAX_ORDER + 1],
    pub derivs: [f64; MAX_ORDER + 1],
}

impl LocalBasis {
    #[inline]
    pub fn dot(&self, coeffs: &[f64]) -> f64 {
        let mut s = 0.0;
        for r in 0..self.len {
            s += coeffs[self.start + r] * self.values[r];
        }
        s
    }

    #[inline]
    pub fn dot_deriv(&self, coeffs: &[f64]) -> f64 {
        let mut s = 0.0;
        for r in 0..self.len {
            s += coeffs[self.start + r] * self.derivs[r];
        }
        s
    }
}

/// Linear combination of the basis functions of a grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplineCurve {
    grid: Grid,
    coeffs: Vec<f64>,
}

impl SplineCurve {
    pub fn new(grid: Grid, coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.len() != grid.num_basis() {
            return Err(KanError::Dimension {
                expected: grid.num_basis(),
                got: coeffs.len(),
            });
        }
        Ok(Self { grid, coeffs })
    }

    pub fn zeros(grid: Grid) -> Self {
        let coeffs = vec![0.0; grid.num_basis()];
        Self { grid, coeffs }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [f64] {
        &mut self.coeffs
    }

    /// Value of the curve at `x`.
    #[inline]
    pub fn value(&self, x: f64) -> f64 {
        self.grid.local_basis(x).dot(&self.coeffs)
    }

    /// `m`-th derivative of the curve at `x`.
    pub fn eval(&self, x: f64, m: usize) -> Result<f64> {
        let k = self.grid.order;
        if m > k {
            return Err(KanError::DerivativeOrder { order: m, k });
        }
        let local = self.grid.local_basis(x);
        match m {
            0 => Ok(local.dot(&self.coeffs)),
            1 => Ok(local.dot_deriv(&self.coeffs)),
            _ => {
                // Only bases k+1 positions around the span can be nonzero.
                let Some(span) = self.grid.span(x) else {
                    return Ok(0.0);
                };
                let lo = span.saturating_sub(k);
                let hi = span.min(self.grid.num_basis() - 1);
                let mut s = 0.0;
                for i in lo..=hi {
                    s += self.coeffs[i] * self.grid.basis_rec(i, k, x, m, span);
                }
                Ok(s)
            }
        }
    }
}

/// Least-squares spline fit of `ys` at `xs`.
///
/// The normal equations are regularized by `ridge * I`, which settles rank
/// deficiency from clustered or sparse samples; residual refinement then
/// removes most of the ridge bias so polynomials in the spline space are
/// reproduced to rounding level.
pub fn fit_least_squares(grid: &Grid, xs: &[f64], ys: &[f64], ridge: f64) -> Result<SplineCurve> {
    if xs.is_empty() {
        return Err(KanError::EmptySamples);
    }
    if xs.len() != ys.len() {
        return Err(KanError::SampleMismatch {
            xs: xs.len(),
            ys: ys.len(),
        });
    }
    let n = grid.num_basis();
    let rows: Vec<LocalBasis> = xs.iter().map(|&x| grid.local_basis(x)).collect();
    let mut normal = BandedSpd::zeros(n, grid.order);
    for local in &rows {
        for r in 0..local.len {
            for q in 0..=r {
                normal.add(local.start + r, local.start + q, local.values[r] * local.values[q]);
            }
        }
    }
    for i in 0..n {
        normal.add(i, i, ridge);
    }
    let chol = normal.factor()?;
    // Iterated Tikhonov: each pass solves the ridge system for the current
    // residual, shrinking the ridge bias on well-determined directions while
    // directions with no data support stay at zero.
    let mut coeffs = vec![0.0; n];
    for pass in 0..=MAX_REFINEMENT_PASSES {
        let mut rhs = vec![0.0; n];
        for (local, &y) in rows.iter().zip(ys) {
            let resid = y - local.dot(&coeffs);
            for r in 0..local.len {
                rhs[local.start + r] += local.values[r] * resid;
            }
        }
        let step = chol.solve(&rhs);
        let moved = step.iter().fold(0.0f64, |m, d| m.max(d.abs()));
        for (c, d) in coeffs.iter_mut().zip(step) {
            *c += d;
        }
        let size = coeffs.iter().fold(1.0f64, |m, c| m.max(c.abs()));
        if pass >= REFINEMENT_PASSES && moved <= 1e-15 * size {
            break;
        }
    }
    SplineCurve::new(grid.clone(), coeffs)
}

/// Transfer a curve onto `new_grid` by least squares on the sample points `xs`.
pub fn extend_grid(curve: &SplineCurve, new_grid: &Grid, xs: &[f64]) -> Result<SplineCurve> {
    if xs.is_empty() {
        return Err(KanError::EmptySamples);
    }
    let ys: Vec<f64> = xs.iter().map(|&x| curve.value(x)).collect();
    fit_least_squares(new_grid, xs, &ys, DEFAULT_RIDGE)
}

/// How grids follow their input activations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridAdaptation {
    /// Weight of uniform knots versus empirical-quantile knots.
    pub blend: f64,
    /// Fraction of the activation span added beyond each end.
    pub margin: f64,
}

impl Default for GridAdaptation {
    fn default() -> Self {
        Self {
            blend: 0.02,
            margin: 0.01,
        }
    }
}

/// Grid of `intervals` intervals placed over `activations`.
pub fn adapted_grid(
    activations: &[f64],
    intervals: usize,
    order: usize,
    adapt: GridAdaptation,
) -> Result<Grid> {
    if activations.is_empty() {
        return Err(KanError::EmptySamples);
    }
    if !(0.0..=1.0).contains(&adapt.blend) {
        return Err(KanError::Config(format!("blend must lie in [0, 1], got {}", adapt.blend)));
    }
    let mut sorted: Vec<f64> = activations.to_vec();
    if sorted.iter().any(|v| !v.is_finite()) {
        return Err(KanError::NonFinite("activation".into()));
    }
    sorted.sort_by(f64::total_cmp);
    let (mut lo, mut hi) = (sorted[0], sorted[sorted.len() - 1]);
    let mut span = hi - lo;
    let degenerate = !(span > 1e-12 * lo.abs().max(1.0));
    if degenerate {
        let centre = 0.5 * (lo + hi);
        span = 1.0;
        lo = centre - 0.5;
        hi = centre + 0.5;
    }
    let a = lo - adapt.margin * span;
    let b = hi + adapt.margin * span;
    let n = sorted.len();
    let mut points = Vec::with_capacity(intervals + 1);
    for q in 0..=intervals {
        let frac = q as f64 / intervals as f64;
        let uniform = a + frac * (b - a);
        let quantile = if q == 0 {
            a
        } else if q == intervals {
            b
        } else if degenerate {
            uniform
        } else {
            let pos = frac * (n - 1) as f64;
            let lo_i = pos.floor() as usize;
            let hi_i = (lo_i + 1).min(n - 1);
            let w = pos - lo_i as f64;
            sorted[lo_i] * (1.0 - w) + sorted[hi_i] * w
        };
        points.push(adapt.blend * uniform + (1.0 - adapt.blend) * quantile);
    }
    points[0] = a;
    points[intervals] = b;
    Grid::from_points(points, order)
}

/// Move a curve onto a grid of `intervals` intervals fitted to `activations`,
/// transferring its values by least squares at those activations.
pub fn adapt_grid(
    curve: &SplineCurve,
    activations: &[f64],
    intervals: usize,
    adapt: GridAdaptation,
) -> Result<SplineCurve> {
    let grid = adapted_grid(activations, intervals, curve.grid.order, adapt)?;
    extend_grid(curve, &grid, activations)
}
