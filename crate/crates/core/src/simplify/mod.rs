//! Pruning, visual transparency, symbolic snapping and formula extraction.

mod expr;
mod fit;

pub use expr::{symbolic_formula, Expression};
pub use fit::{
    auto_symbolic, fit_affine, fix_symbolic, fix_symbolic_with, suggest_symbolic, AffineFit, AutoReport,
    Suggestion, AFFINE_GRID, AFFINE_RANGE, AFFINE_ROUNDS, AFFINE_ZOOM, DEFAULT_R2_THRESHOLD, DOMAIN_MARGIN,
    R2_TIE_ABS, R2_TIE_FACTOR,
};

use serde::{Deserialize, Serialize};

use crate::error::{KanError, Result};
use crate::network::{ForwardTrace, KanLayer, KanNetwork};
use crate::train::layer_l1;

/// Default pruning threshold.
pub const DEFAULT_THETA: f64 = 1e-2;
/// Default transparency sharpness.
pub const DEFAULT_BETA: f64 = 3.0;

/// Opacity of an activation with magnitude `a`.
pub fn transparency(a: f64, beta: f64) -> f64 {
    (beta * a.max(0.0)).tanh()
}

/// Incoming and outgoing scores of every node. Entries for input and
/// output layers are empty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeScores {
    pub incoming: Vec<Vec<f64>>,
    pub outgoing: Vec<Vec<f64>>,
}

pub fn node_scores(net: &KanNetwork, trace: &ForwardTrace) -> Result<NodeScores> {
    if trace.shape() != net.shape() {
        return Err(KanError::InvalidShape("trace shape differs from network".into()));
    }
    let shape = net.shape();
    let depth = net.depth();
    let l1: Vec<Vec<f64>> = (0..depth).map(|l| layer_l1(trace, l)).collect();
    let mut incoming = vec![Vec::new(); depth + 1];
    let mut outgoing = vec![Vec::new(); depth + 1];
    for l in 1..depth {
        let n = shape[l];
        let (n_prev, n_next) = (shape[l - 1], shape[l + 1]);
        incoming[l] = (0..n)
            .map(|i| (0..n_prev).map(|k| l1[l - 1][i * n_prev + k]).fold(0.0, f64::max))
            .collect();
        outgoing[l] = (0..n)
            .map(|i| (0..n_next).map(|j| l1[l][j * n + i]).fold(0.0, f64::max))
            .collect();
    }
    Ok(NodeScores { incoming, outgoing })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PruneReport {
    /// Surviving node indices of every layer, in the old numbering.
    pub kept: Vec<Vec<usize>>,
    pub removed: usize,
    pub scores: NodeScores,
}

/// Remove hidden nodes whose incoming or outgoing score is below `theta`.
pub fn prune(net: &KanNetwork, trace: &ForwardTrace, theta: f64) -> Result<(KanNetwork, PruneReport)> {
    if !(theta > 0.0) {
        return Err(KanError::Config(format!("theta must be > 0, got {theta}")));
    }
    let scores = node_scores(net, trace)?;
    let shape = net.shape();
    let depth = net.depth();
    let mut kept: Vec<Vec<usize>> = Vec::with_capacity(depth + 1);
    let mut removed = 0;
    for (l, &n) in shape.iter().enumerate() {
        if l == 0 || l == depth {
            kept.push((0..n).collect());
            continue;
        }
        let keep: Vec<usize> = (0..n)
            .filter(|&i| scores.incoming[l][i] >= theta && scores.outgoing[l][i] >= theta)
            .collect();
        if keep.is_empty() {
            return Err(KanError::DegeneratePrune(l));
        }
        removed += n - keep.len();
        kept.push(keep);
    }
    let pruned = restrict(net, &kept)?;
    Ok((
        pruned,
        PruneReport {
            kept,
            removed,
            scores,
        },
    ))
}

/// Sub-network on the given node subsets; edges are copied verbatim.
pub fn restrict(net: &KanNetwork, kept: &[Vec<usize>]) -> Result<KanNetwork> {
    if kept.len() != net.shape().len() {
        return Err(KanError::InvalidShape("one node list per layer required".into()));
    }
    let mut layers = Vec::with_capacity(net.depth());
    for (l, layer) in net.layers().iter().enumerate() {
        let (ins, outs) = (&kept[l], &kept[l + 1]);
        let mut edges = Vec::with_capacity(ins.len() * outs.len());
        for &j in outs {
            for &i in ins {
                if i >= layer.n_in() || j >= layer.n_out() {
                    return Err(KanError::NoSuchEdge { l, i, j });
                }
                edges.push(layer.edge(i, j).clone());
            }
        }
        layers.push(KanLayer::new(ins.len(), outs.len(), edges)?);
    }
    let mut out = KanNetwork::from_layers(layers)?;
    for _ in 0..=net.version() {
        out.bump_version();
    }
    Ok(out)
}
