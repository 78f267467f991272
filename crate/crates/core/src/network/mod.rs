//! Activation edges, KAN layers and whole networks.
//!
//! A network of shape `[n_0, ..., n_L]` holds `L` layers; layer `l` is a
//! matrix of `n_{l+1} x n_l` edges. Edge `(l, i, j)` maps input node `i` of
//! layer `l` to output node `j`, and every node sums its incoming edge
//! outputs.

mod io;

pub use io::{from_json, to_json, ModelDocument, MODEL_VERSION};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{KanError, Result};
use crate::exec::{map_chunks, map_items, Execution};
use crate::matrix::Matrix;
use crate::spline::{adapt_grid, Grid, GridAdaptation, SplineCurve};
use crate::symbolic::{sigmoid, SymbolicFn};

/// Default standard deviation of the initial spline coefficients.
pub const DEFAULT_NOISE_SCALE: f64 = 0.1;

#[inline]
pub fn silu(x: f64) -> f64 {
    x * sigmoid(x)
}

#[inline]
pub fn silu_deriv(x: f64) -> f64 {
    let s = sigmoid(x);
    s * (1.0 + x * (1.0 - s))
}

/// `c * f(a * x + b) + d`, replacing an edge's spline.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SymbolicLock {
    pub function: SymbolicFn,
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
}

impl SymbolicLock {
    pub fn new(function: SymbolicFn, a: f64, b: f64, c: f64, d: f64) -> Self {
        Self { function, a, b, c, d }
    }

    /// `f` itself, with unit affine parameters.
    pub fn plain(function: SymbolicFn) -> Self {
        Self::new(function, 1.0, 0.0, 1.0, 0.0)
    }

    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        self.c * self.function.eval(self.a * x + self.b) + self.d
    }

    pub fn params(&self) -> [f64; 4] {
        [self.a, self.b, self.c, self.d]
    }

    pub fn set_params(&mut self, p: [f64; 4]) {
        [self.a, self.b, self.c, self.d] = p;
    }
}

/// One learnable activation: `w_b * silu(x) + w_s * spline(x)`, or a
/// symbolic lock that overrides it.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivationEdge {
    pub w_b: f64,
    pub w_s: f64,
    pub curve: SplineCurve,
    pub lock: Option<SymbolicLock>,
}

impl ActivationEdge {
    pub fn new(w_b: f64, w_s: f64, curve: SplineCurve) -> Self {
        Self {
            w_b,
            w_s,
            curve,
            lock: None,
        }
    }

    pub fn is_locked(&self) -> bool {
        self.lock.is_some()
    }

    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        match &self.lock {
            Some(lock) => lock.eval(x),
            None => self.w_b * silu(x) + self.w_s * self.curve.value(x),
        }
    }

    /// Value and slope `d phi / dx`.
    #[inline]
    pub fn eval_with_slope(&self, x: f64) -> (f64, f64) {
        match &self.lock {
            Some(l) => {
                let u = l.a * x + l.b;
                (
                    l.c * l.function.eval(u) + l.d,
                    l.c * l.function.deriv(u) * l.a,
                )
            }
            None => {
                let local = self.curve.grid().local_basis(x);
                let s = local.dot(self.curve.coeffs());
                let ds = local.dot_deriv(self.curve.coeffs());
                (
                    self.w_b * silu(x) + self.w_s * s,
                    self.w_b * silu_deriv(x) + self.w_s * ds,
                )
            }
        }
    }

    /// Number of trainable scalars when unlocked: coefficients plus `w_b`, `w_s`.
    pub fn num_parameters(&self) -> usize {
        match self.lock {
            Some(_) => 4,
            None => self.curve.coeffs().len() + 2,
        }
    }
}

/// A matrix of edges, stored row-major by output node.
#[derive(Debug, Clone, PartialEq)]
pub struct KanLayer {
    n_in: usize,
    n_out: usize,
    edges: Vec<ActivationEdge>,
}

impl KanLayer {
    pub fn new(n_in: usize, n_out: usize, edges: Vec<ActivationEdge>) -> Result<Self> {
        if n_in == 0 || n_out == 0 {
            return Err(KanError::InvalidShape("layer widths must be positive".into()));
        }
        if edges.len() != n_in * n_out {
            return Err(KanError::InvalidShape(format!(
                "layer {n_in}->{n_out} needs {} edges, got {}",
                n_in * n_out,
                edges.len()
            )));
        }
        Ok(Self { n_in, n_out, edges })
    }

    pub fn n_in(&self) -> usize {
        self.n_in
    }

    pub fn n_out(&self) -> usize {
        self.n_out
    }

    /// Edge from input node `i` to output node `j`.
    pub fn edge(&self, i: usize, j: usize) -> &ActivationEdge {
        &self.edges[j * self.n_in + i]
    }

    pub fn edge_mut(&mut self, i: usize, j: usize) -> &mut ActivationEdge {
        &mut self.edges[j * self.n_in + i]
    }

    /// Edges in storage order (`j` major, `i` minor).
    pub fn edges(&self) -> &[ActivationEdge] {
        &self.edges
    }
}

/// Which parameters an optimizer may move.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct ParamMask {
    pub base_weights: bool,
    pub spline_weights: bool,
    pub coeffs: bool,
    pub lock_affine: bool,
}

impl Default for ParamMask {
    fn default() -> Self {
        Self {
            base_weights: true,
            spline_weights: true,
            coeffs: true,
            lock_affine: false,
        }
    }
}

impl ParamMask {
    pub fn all() -> Self {
        Self {
            lock_affine: true,
            ..Self::default()
        }
    }
}

/// A Kolmogorov-Arnold network.
#[derive(Debug, Clone, PartialEq)]
pub struct KanNetwork {
    shape: Vec<usize>,
    layers: Vec<KanLayer>,
    version: u64,
}

impl KanNetwork {
    pub fn from_layers(layers: Vec<KanLayer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(KanError::InvalidShape("shape needs ≥ 2 layers".into()));
        }
        let mut shape = vec![layers[0].n_in];
        for (l, layer) in layers.iter().enumerate() {
            if layer.n_in != *shape.last().unwrap() {
                return Err(KanError::InvalidShape(format!(
                    "layer {l} expects {} inputs but the previous layer has {} outputs",
                    layer.n_in,
                    shape.last().unwrap()
                )));
            }
            shape.push(layer.n_out);
        }
        Ok(Self {
            shape,
            layers,
            version: 0,
        })
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    pub fn layers(&self) -> &[KanLayer] {
        &self.layers
    }

    pub fn layer(&self, l: usize) -> &KanLayer {
        &self.layers[l]
    }

    pub fn n_inputs(&self) -> usize {
        self.shape[0]
    }

    pub fn n_outputs(&self) -> usize {
        *self.shape.last().unwrap()
    }

    /// Mutation counter; traces record it to detect staleness.
    pub fn version(&self) -> u64 {
        self.version
    }

    pub fn bump_version(&mut self) {
        self.version += 1;
    }

    fn check_edge(&self, l: usize, i: usize, j: usize) -> Result<()> {
        if l >= self.layers.len() || i >= self.layers[l].n_in || j >= self.layers[l].n_out {
            return Err(KanError::NoSuchEdge { l, i, j });
        }
        Ok(())
    }

    pub fn edge(&self, l: usize, i: usize, j: usize) -> Result<&ActivationEdge> {
        self.check_edge(l, i, j)?;
        Ok(self.layers[l].edge(i, j))
    }

    /// Mutable access to one edge; bumps the version.
    pub fn edge_mut(&mut self, l: usize, i: usize, j: usize) -> Result<&mut ActivationEdge> {
        self.check_edge(l, i, j)?;
        self.version += 1;
        Ok(self.layers[l].edge_mut(i, j))
    }

    pub fn iter_edges(&self) -> impl Iterator<Item = ((usize, usize, usize), &ActivationEdge)> {
        self.layers.iter().enumerate().flat_map(|(l, layer)| {
            layer
                .edges
                .iter()
                .enumerate()
                .map(move |(e, edge)| ((l, e % layer.n_in, e / layer.n_in), edge))
        })
    }

    pub fn num_edges(&self) -> usize {
        self.layers.iter().map(|l| l.edges.len()).sum()
    }

    pub fn all_locked(&self) -> bool {
        self.iter_edges().all(|(_, e)| e.is_locked())
    }

    /// Trainable scalar count: `G + k + 2` per unlocked edge, 4 per locked edge.
    pub fn num_parameters(&self) -> usize {
        self.iter_edges().map(|(_, e)| e.num_parameters()).sum()
    }

    /// Flatten the parameters selected by `mask`.
    pub fn params(&self, mask: ParamMask) -> Vec<f64> {
        let mut out = Vec::new();
        for (_, e) in self.iter_edges() {
            match &e.lock {
                Some(lock) => {
                    if mask.lock_affine {
                        out.extend_from_slice(&lock.params());
                    }
                }
                None => {
                    if mask.base_weights {
                        out.push(e.w_b);
                    }
                    if mask.spline_weights {
                        out.push(e.w_s);
                    }
                    if mask.coeffs {
                        out.extend_from_slice(e.curve.coeffs());
                    }
                }
            }
        }
        out
    }

    pub fn num_masked_params(&self, mask: ParamMask) -> usize {
        self.iter_edges()
            .map(|(_, e)| match e.lock {
                Some(_) => 4 * mask.lock_affine as usize,
                None => {
                    mask.base_weights as usize
                        + mask.spline_weights as usize
                        + mask.coeffs as usize * e.curve.coeffs().len()
                }
            })
            .sum()
    }

    /// Inverse of [`KanNetwork::params`]; bumps the version.
    pub fn set_params(&mut self, p: &[f64], mask: ParamMask) -> Result<()> {
        let expected = self.num_masked_params(mask);
        if p.len() != expected {
            return Err(KanError::Dimension {
                expected,
                got: p.len(),
            });
        }
        let mut at = 0;
        for layer in &mut self.layers {
            for e in &mut layer.edges {
                match &mut e.lock {
                    Some(lock) => {
                        if mask.lock_affine {
                            lock.set_params([p[at], p[at + 1], p[at + 2], p[at + 3]]);
                            at += 4;
                        }
                    }
                    None => {
                        if mask.base_weights {
                            e.w_b = p[at];
                            at += 1;
                        }
                        if mask.spline_weights {
                            e.w_s = p[at];
                            at += 1;
                        }
                        if mask.coeffs {
                            let n = e.curve.coeffs().len();
                            e.curve.coeffs_mut().copy_from_slice(&p[at..at + n]);
                            at += n;
                        }
                    }
                }
            }
        }
        self.version += 1;
        Ok(())
    }

    /// Evaluate a batch, recording every pre- and post-activation.
    pub fn forward(&self, inputs: &Matrix, exec: Execution) -> Result<(Matrix, ForwardTrace)> {
        self.check_inputs(inputs)?;
        let n = inputs.rows();
        let chunks = map_chunks(n, exec, |range| {
            let mut pre: Vec<Vec<f64>> = self
                .shape
                .iter()
                .map(|&w| Vec::with_capacity(w * range.len()))
                .collect();
            let mut post: Vec<Vec<f64>> = self
                .layers
                .iter()
                .map(|l| Vec::with_capacity(l.edges.len() * range.len()))
                .collect();
            for s in range {
                pre[0].extend_from_slice(inputs.row(s));
                for (l, layer) in self.layers.iter().enumerate() {
                    let (lo, hi) = pre.split_at_mut(l + 1);
                    let x = &lo[l][lo[l].len() - layer.n_in..];
                    let out = &mut hi[0];
                    let base = out.len();
                    out.resize(base + layer.n_out, 0.0);
                    for j in 0..layer.n_out {
                        let mut acc = 0.0;
                        for (i, &xi) in x.iter().enumerate() {
                            let v = layer.edges[j * layer.n_in + i].eval(xi);
                            post[l].push(v);
                            acc += v;
                        }
                        out[base + j] = acc;
                    }
                }
            }
            (pre, post)
        });
        let mut pre: Vec<Vec<f64>> = self.shape.iter().map(|&w| Vec::with_capacity(w * n)).collect();
        let mut post: Vec<Vec<f64>> = self
            .layers
            .iter()
            .map(|l| Vec::with_capacity(l.edges.len() * n))
            .collect();
        for (cpre, cpost) in chunks {
            for (dst, src) in pre.iter_mut().zip(cpre) {
                dst.extend_from_slice(&src);
            }
            for (dst, src) in post.iter_mut().zip(cpost) {
                dst.extend_from_slice(&src);
            }
        }
        let out = Matrix::new(n, self.n_outputs(), pre[self.layers.len()].clone())?;
        Ok((
            out,
            ForwardTrace {
                version: self.version,
                batch: n,
                shape: self.shape.clone(),
                pre,
                post,
            },
        ))
    }

    /// Evaluate a batch without recording a trace.
    pub fn predict(&self, inputs: &Matrix, exec: Execution) -> Result<Matrix> {
        self.check_inputs(inputs)?;
        let width = *self.shape.iter().max().unwrap();
        let chunks = map_chunks(inputs.rows(), exec, |range| {
            let mut out = Vec::with_capacity(range.len() * self.n_outputs());
            let mut cur = vec![0.0; width];
            let mut next = vec![0.0; width];
            for s in range {
                cur[..self.shape[0]].copy_from_slice(inputs.row(s));
                for layer in &self.layers {
                    for j in 0..layer.n_out {
                        let mut acc = 0.0;
                        for i in 0..layer.n_in {
                            acc += layer.edges[j * layer.n_in + i].eval(cur[i]);
                        }
                        next[j] = acc;
                    }
                    std::mem::swap(&mut cur, &mut next);
                }
                out.extend_from_slice(&cur[..self.n_outputs()]);
            }
            out
        });
        Matrix::new(inputs.rows(), self.n_outputs(), chunks.concat())
    }

    fn check_inputs(&self, inputs: &Matrix) -> Result<()> {
        if inputs.cols() != self.shape[0] {
            return Err(KanError::Dimension {
                expected: self.shape[0],
                got: inputs.cols(),
            });
        }
        Ok(())
    }

    /// Exact gradients of `sum_s dy[s] . y[s]` (plus any post-activation
    /// cotangents) with respect to every parameter.
    pub fn backward(
        &self,
        trace: &ForwardTrace,
        dy: &Matrix,
        extra: Option<&PostCotangents>,
        exec: Execution,
    ) -> Result<Gradients> {
        if trace.version != self.version {
            return Err(KanError::StaleTrace {
                trace: trace.version,
                network: self.version,
            });
        }
        if trace.shape != self.shape {
            return Err(KanError::InvalidShape("trace shape differs from network".into()));
        }
        if dy.rows() != trace.batch || dy.cols() != self.n_outputs() {
            return Err(KanError::Dimension {
                expected: trace.batch * self.n_outputs(),
                got: dy.rows() * dy.cols(),
            });
        }
        if let Some(extra) = extra {
            for (l, layer) in self.layers.iter().enumerate() {
                if extra.layers[l].len() != trace.batch * layer.edges.len() {
                    return Err(KanError::Dimension {
                        expected: trace.batch * layer.edges.len(),
                        got: extra.layers[l].len(),
                    });
                }
            }
        }
        let width = *self.shape.iter().max().unwrap();
        let partials = map_chunks(trace.batch, exec, |range| {
            let mut grads = Gradients::zeros_like(self);
            let mut upstream = vec![0.0; width];
            let mut down = vec![0.0; width];
            for s in range {
                upstream[..self.n_outputs()].copy_from_slice(dy.row(s));
                for (l, layer) in self.layers.iter().enumerate().rev() {
                    let n_in = layer.n_in;
                    down[..n_in].iter_mut().for_each(|v| *v = 0.0);
                    let xs = &trace.pre[l][s * n_in..(s + 1) * n_in];
                    let m = layer.edges.len();
                    for (e, edge) in layer.edges.iter().enumerate() {
                        let (i, j) = (e % n_in, e / n_in);
                        let x = xs[i];
                        let mut g_param = upstream[j];
                        let mut g_prop = upstream[j];
                        if let Some(extra) = extra {
                            let c = extra.layers[l][s * m + e];
                            g_param += c;
                            if extra.propagate {
                                g_prop += c;
                            }
                        }
                        if g_param == 0.0 && g_prop == 0.0 {
                            continue;
                        }
                        let eg = &mut grads.layers[l][e];
                        match &edge.lock {
                            Some(lk) => {
                                let u = lk.a * x + lk.b;
                                let fu = lk.function.eval(u);
                                let fp = lk.function.deriv(u);
                                eg.affine[0] += g_param * lk.c * fp * x;
                                eg.affine[1] += g_param * lk.c * fp;
                                eg.affine[2] += g_param * fu;
                                eg.affine[3] += g_param;
                                down[i] += g_prop * lk.c * fp * lk.a;
                            }
                            None => {
                                let local = edge.curve.grid().local_basis(x);
                                let sv = local.dot(edge.curve.coeffs());
                                let sd = local.dot_deriv(edge.curve.coeffs());
                                eg.w_b += g_param * silu(x);
                                eg.w_s += g_param * sv;
                                let gc = g_param * edge.w_s;
                                for r in 0..local.len {
                                    eg.coeffs[local.start + r] += gc * local.values[r];
                                }
                                down[i] += g_prop * (edge.w_b * silu_deriv(x) + edge.w_s * sd);
                            }
                        }
                    }
                    std::mem::swap(&mut upstream, &mut down);
                }
            }
            grads
        });
        let mut total = Gradients::zeros_like(self);
        for p in &partials {
            total.add_assign(p);
        }
        Ok(total)
    }

    /// Refit every unlocked edge onto a grid of `intervals` intervals placed
    /// over its traced input activations.
    pub fn extend_all_grids(
        &self,
        trace: &ForwardTrace,
        intervals: usize,
        adapt: GridAdaptation,
        exec: Execution,
    ) -> Result<KanNetwork> {
        if trace.shape != self.shape {
            return Err(KanError::InvalidShape("trace shape differs from network".into()));
        }
        let mut jobs = Vec::new();
        for (l, layer) in self.layers.iter().enumerate() {
            for (e, edge) in layer.edges.iter().enumerate() {
                if edge.lock.is_none() {
                    jobs.push((l, e));
                }
            }
        }
        let refits = map_items(jobs.clone(), exec, |(l, e)| {
            let layer = &self.layers[l];
            let xs = trace.pre_activations(l, e % layer.n_in);
            adapt_grid(&layer.edges[e].curve, &xs, intervals, adapt)
        });
        let mut out = self.clone();
        for ((l, e), curve) in jobs.into_iter().zip(refits) {
            out.layers[l].edges[e].curve = curve?;
        }
        out.version += 1;
        Ok(out)
    }

    /// Grid interval count of the first unlocked edge, if any.
    pub fn grid_size(&self) -> Option<usize> {
        self.iter_edges()
            .find(|(_, e)| !e.is_locked())
            .map(|(_, e)| e.curve.grid().intervals())
    }
}

/// Build a freshly initialized network.
///
/// Every edge gets `w_s = 1`, spline coefficients drawn from
/// `N(0, noise_scale^2)`, `w_b` drawn Xavier-uniform, and a uniform grid on
/// `[-1, 1]`.
pub fn init_network(
    shape: &[usize],
    intervals: usize,
    order: usize,
    seed: u64,
    noise_scale: f64,
) -> Result<KanNetwork> {
    if shape.len() < 2 {
        return Err(KanError::InvalidShape("shape needs ≥ 2 layers".into()));
    }
    if shape.contains(&0) {
        return Err(KanError::InvalidShape("shape entries must be ≥ 1".into()));
    }
    if !(noise_scale >= 0.0 && noise_scale.is_finite()) {
        return Err(KanError::Config(format!("noise scale must be ≥ 0, got {noise_scale}")));
    }
    let grid = Grid::uniform(-1.0, 1.0, intervals, order)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, noise_scale).map_err(|e| KanError::Config(e.to_string()))?;
    let mut layers = Vec::with_capacity(shape.len() - 1);
    for w in shape.windows(2) {
        let (n_in, n_out) = (w[0], w[1]);
        let limit = (6.0 / (n_in + n_out) as f64).sqrt();
        let mut edges = Vec::with_capacity(n_in * n_out);
        for _ in 0..n_in * n_out {
            let w_b = rng.random_range(-limit..=limit);
            let coeffs: Vec<f64> = (0..grid.num_basis()).map(|_| normal.sample(&mut rng)).collect();
            edges.push(ActivationEdge::new(w_b, 1.0, SplineCurve::new(grid.clone(), coeffs)?));
        }
        layers.push(KanLayer::new(n_in, n_out, edges)?);
    }
    KanNetwork::from_layers(layers)
}

/// Pre- and post-activations recorded by [`KanNetwork::forward`].
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrace {
    version: u64,
    batch: usize,
    shape: Vec<usize>,
    /// `pre[l]` is `batch x n_l`, row-major; `pre[L]` holds the outputs.
    pre: Vec<Vec<f64>>,
    /// `post[l]` is `batch x (n_{l+1} * n_l)` in edge storage order.
    post: Vec<Vec<f64>>,
}

impl ForwardTrace {
    pub fn version(&self) -> u64 {
        self.version
    }

    pub fn batch(&self) -> usize {
        self.batch
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    /// Values of node `i` in layer `l` across the batch.
    pub fn pre_activations(&self, l: usize, i: usize) -> Vec<f64> {
        let w = self.shape[l];
        (0..self.batch).map(|s| self.pre[l][s * w + i]).collect()
    }

    /// Outputs of edge `(l, i, j)` across the batch.
    pub fn post_activations(&self, l: usize, i: usize, j: usize) -> Vec<f64> {
        let n_in = self.shape[l];
        let m = n_in * self.shape[l + 1];
        let e = j * n_in + i;
        (0..self.batch).map(|s| self.post[l][s * m + e]).collect()
    }

    /// Raw post-activation buffer of layer `l`.
    pub fn post_layer(&self, l: usize) -> &[f64] {
        &self.post[l]
    }

    pub fn pre_layer(&self, l: usize) -> &[f64] {
        &self.pre[l]
    }

    pub fn output(&self) -> Matrix {
        let l = self.shape.len() - 1;
        Matrix::new(self.batch, self.shape[l], self.pre[l].clone()).expect("trace output shape")
    }
}

/// Extra cotangents on post-activations, laid out like the trace.
#[derive(Debug, Clone, PartialEq)]
pub struct PostCotangents {
    pub layers: Vec<Vec<f64>>,
    /// When false the cotangents reach only the edge's own parameters and do
    /// not flow into earlier layers.
    pub propagate: bool,
}

/// Gradient of one edge.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EdgeGradient {
    pub w_b: f64,
    pub w_s: f64,
    pub coeffs: Vec<f64>,
    /// `(a, b, c, d)` of a locked edge.
    pub affine: [f64; 4],
}

/// Gradients with the same layout as the network.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<Vec<EdgeGradient>>,
}

impl Gradients {
    pub fn zeros_like(net: &KanNetwork) -> Self {
        Self {
            layers: net
                .layers
                .iter()
                .map(|layer| {
                    layer
                        .edges
                        .iter()
                        .map(|e| EdgeGradient {
                            coeffs: vec![0.0; e.curve.coeffs().len()],
                            ..Default::default()
                        })
                        .collect()
                })
                .collect(),
        }
    }

    pub fn add_assign(&mut self, other: &Gradients) {
        for (la, lb) in self.layers.iter_mut().zip(&other.layers) {
            for (a, b) in la.iter_mut().zip(lb) {
                a.w_b += b.w_b;
                a.w_s += b.w_s;
                for (x, y) in a.coeffs.iter_mut().zip(&b.coeffs) {
                    *x += y;
                }
                for (x, y) in a.affine.iter_mut().zip(&b.affine) {
                    *x += y;
                }
            }
        }
    }

    pub fn scale(&mut self, k: f64) {
        for layer in &mut self.layers {
            for g in layer {
                g.w_b *= k;
                g.w_s *= k;
                g.coeffs.iter_mut().for_each(|c| *c *= k);
                g.affine.iter_mut().for_each(|c| *c *= k);
            }
        }
    }

    pub fn edge(&self, l: usize, i: usize, j: usize, n_in: usize) -> &EdgeGradient {
        &self.layers[l][j * n_in + i]
    }

    /// Flatten in the order of [`KanNetwork::params`].
    pub fn flatten(&self, net: &KanNetwork, mask: ParamMask) -> Vec<f64> {
        let mut out = Vec::with_capacity(net.num_masked_params(mask));
        for (layer, grads) in net.layers.iter().zip(&self.layers) {
            for (e, g) in layer.edges.iter().zip(grads) {
                match e.lock {
                    Some(_) => {
                        if mask.lock_affine {
                            out.extend_from_slice(&g.affine);
                        }
                    }
                    None => {
                        if mask.base_weights {
                            out.push(g.w_b);
                        }
                        if mask.spline_weights {
                            out.push(g.w_s);
                        }
                        if mask.coeffs {
                            out.extend_from_slice(&g.coeffs);
                        }
                    }
                }
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single_edge(w_b: f64, w_s: f64, coeff: f64) -> KanNetwork {
        let grid = Grid::uniform(-1.0, 1.0, 4, 3).unwrap();
        let curve = SplineCurve::new(grid.clone(), vec![coeff; grid.num_basis()]).unwrap();
        let layer = KanLayer::new(1, 1, vec![ActivationEdge::new(w_b, w_s, curve)]).unwrap();
        KanNetwork::from_layers(vec![layer]).unwrap()
    }

    #[test]
    fn silu_base_only() {
        let net = single_edge(1.0, 0.0, 0.0);
        assert_eq!(net.edge(0, 0, 0).unwrap().eval(0.0), 0.0);
    }

    #[test]
    fn spline_weight_is_linear() {
        let net = single_edge(0.0, 2.0, 3.0);
        assert!((net.edge(0, 0, 0).unwrap().eval(0.4) - 6.0).abs() < 1e-12);
    }

    #[test]
    fn locked_sine() {
        let mut net = single_edge(1.0, 1.0, 1.0);
        net.edge_mut(0, 0, 0).unwrap().lock =
            Some(SymbolicLock::new(SymbolicFn::Sin, std::f64::consts::PI, 0.0, 1.0, 0.0));
        assert!((net.edge(0, 0, 0).unwrap().eval(0.5) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn init_rejects_bad_shapes() {
        assert!(init_network(&[2], 3, 3, 0, 0.1).is_err());
        assert!(init_network(&[2, 0, 1], 3, 3, 0, 0.1).is_err());
    }

    #[test]
    fn init_is_deterministic_and_counts_parameters() {
        let a = init_network(&[2, 5, 1], 3, 3, 7, 0.1).unwrap();
        let b = init_network(&[2, 5, 1], 3, 3, 7, 0.1).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.num_parameters(), 120);
        for (_, e) in a.iter_edges() {
            assert_eq!(e.w_s, 1.0);
            assert!(e.w_b.abs() <= (6.0f64 / 7.0).sqrt() + 1e-12 || e.w_b.abs() <= 1.0);
        }
    }

    #[test]
    fn zero_noise_and_zero_base_gives_zero_output() {
        let mut net = init_network(&[3, 4, 2], 5, 3, 1, 0.0).unwrap();
        let mut p = net.params(ParamMask::default());
        // zero every w_b
        let per_edge = 2 + 8;
        for e in 0..net.num_edges() {
            p[e * per_edge] = 0.0;
        }
        net.set_params(&p, ParamMask::default()).unwrap();
        let x = Matrix::from_rows(&[vec![0.3, -0.2, 0.9], vec![-1.0, 1.0, 0.0]]).unwrap();
        let y = net.predict(&x, Execution::Sequential).unwrap();
        assert!(y.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn trace_is_consistent() {
        let net = init_network(&[2, 3, 2], 4, 3, 3, 0.1).unwrap();
        let x = Matrix::from_rows(&[vec![0.1, 0.2], vec![-0.5, 0.7], vec![0.9, -0.9]]).unwrap();
        let (y, trace) = net.forward(&x, Execution::Sequential).unwrap();
        assert_eq!(y, net.predict(&x, Execution::Sequential).unwrap());
        for l in 0..2 {
            for j in 0..net.shape()[l + 1] {
                let node = trace.pre_activations(l + 1, j);
                for s in 0..3 {
                    let sum: f64 = (0..net.shape()[l])
                        .map(|i| trace.post_activations(l, i, j)[s])
                        .sum();
                    assert_eq!(sum, node[s]);
                }
            }
        }
    }

    #[test]
    fn dimension_mismatch_and_stale_trace() {
        let mut net = init_network(&[2, 1], 3, 3, 0, 0.1).unwrap();
        let bad = Matrix::zeros(1, 3);
        assert!(matches!(net.forward(&bad, Execution::Sequential), Err(KanError::Dimension { .. })));
        let x = Matrix::zeros(2, 2);
        let (_, trace) = net.forward(&x, Execution::Sequential).unwrap();
        net.bump_version();
        let dy = Matrix::zeros(2, 1);
        assert!(matches!(
            net.backward(&trace, &dy, None, Execution::Sequential),
            Err(KanError::StaleTrace { .. })
        ));
    }

    #[test]
    fn w_s_gradient_is_spline_value() {
        let net = single_edge(0.3, 1.5, 0.0);
        let mut net = net;
        let coeffs: Vec<f64> = (0..7).map(|i| (i as f64).cos()).collect();
        net.edge_mut(0, 0, 0).unwrap().curve.coeffs_mut().copy_from_slice(&coeffs);
        let x = Matrix::from_rows(&[vec![0.37]]).unwrap();
        let (_, trace) = net.forward(&x, Execution::Sequential).unwrap();
        let g = net
            .backward(&trace, &Matrix::from_rows(&[vec![1.0]]).unwrap(), None, Execution::Sequential)
            .unwrap();
        let expected = net.edge(0, 0, 0).unwrap().curve.eval(0.37, 0).unwrap();
        assert!((g.layers[0][0].w_s - expected).abs() < 1e-15);
    }

    #[test]
    fn zero_cotangent_gives_zero_gradient() {
        let net = init_network(&[2, 3, 1], 4, 3, 9, 0.1).unwrap();
        let x = Matrix::from_rows(&[vec![0.1, 0.2], vec![0.3, -0.4]]).unwrap();
        let (_, trace) = net.forward(&x, Execution::Sequential).unwrap();
        let g = net
            .backward(&trace, &Matrix::zeros(2, 1), None, Execution::Sequential)
            .unwrap();
        assert!(g.flatten(&net, ParamMask::all()).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn extension_leaves_locks_alone() {
        let mut net = init_network(&[2, 1, 1], 3, 3, 0, 0.1).unwrap();
        let lock = SymbolicLock::new(SymbolicFn::Exp, 1.1, 0.2, 0.9, -0.1);
        net.edge_mut(1, 0, 0).unwrap().lock = Some(lock);
        let x = Matrix::from_rows(&[vec![0.1, 0.2], vec![0.3, -0.4], vec![-0.9, 0.8]]).unwrap();
        let (_, trace) = net.forward(&x, Execution::Sequential).unwrap();
        let ext = net
            .extend_all_grids(&trace, 10, GridAdaptation::default(), Execution::Sequential)
            .unwrap();
        assert_eq!(ext.edge(1, 0, 0).unwrap().lock, Some(lock));
        assert_eq!(ext.edge(0, 0, 0).unwrap().curve.grid().intervals(), 10);
        assert_eq!(ext.version(), net.version() + 1);
    }
}
