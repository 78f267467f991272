//! Fully connected reference network.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::optim::{Adam, Lbfgs, OptimizerConfig};
use super::{prediction_loss, LossKind};
use crate::error::{KanError, Result};
use crate::exec::{map_chunks, Execution};
use crate::matrix::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MlpActivation {
    Tanh,
    Relu,
    Silu,
}

impl MlpActivation {
    fn eval(self, x: f64) -> f64 {
        match self {
            Self::Tanh => x.tanh(),
            Self::Relu => x.max(0.0),
            Self::Silu => crate::network::silu(x),
        }
    }

    fn deriv(self, x: f64) -> f64 {
        match self {
            Self::Tanh => 1.0 - x.tanh().powi(2),
            Self::Relu => (x > 0.0) as u8 as f64,
            Self::Silu => crate::network::silu_deriv(x),
        }
    }
}

/// `sizes[0] -> ... -> sizes[L]` with the activation on hidden layers and a
/// linear output.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    sizes: Vec<usize>,
    activation: MlpActivation,
    /// `weights[l]` is `sizes[l+1] x sizes[l]`.
    weights: Vec<Matrix>,
    biases: Vec<Vec<f64>>,
}

impl Mlp {
    /// Xavier-uniform weights, zero biases.
    pub fn new(sizes: &[usize], activation: MlpActivation, seed: u64) -> Result<Self> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(KanError::InvalidShape(format!("bad MLP sizes {sizes:?}")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for w in sizes.windows(2) {
            let limit = (6.0 / (w[0] + w[1]) as f64).sqrt();
            let data = (0..w[0] * w[1]).map(|_| rng.random_range(-limit..=limit)).collect();
            weights.push(Matrix::new(w[1], w[0], data)?);
            biases.push(vec![0.0; w[1]]);
        }
        Ok(Self {
            sizes: sizes.to_vec(),
            activation,
            weights,
            biases,
        })
    }

    /// Width-`width`, `depth`-layer network.
    pub fn with_width(d: usize, m: usize, width: usize, depth: usize, activation: MlpActivation, seed: u64) -> Result<Self> {
        let mut sizes = vec![d];
        sizes.extend(std::iter::repeat_n(width, depth.saturating_sub(1)));
        sizes.push(m);
        Self::new(&sizes, activation, seed)
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn num_parameters(&self) -> usize {
        self.sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }

    pub fn params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_parameters());
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.extend_from_slice(w.data());
            out.extend_from_slice(b);
        }
        out
    }

    pub fn set_params(&mut self, p: &[f64]) -> Result<()> {
        if p.len() != self.num_parameters() {
            return Err(KanError::Dimension {
                expected: self.num_parameters(),
                got: p.len(),
            });
        }
        let mut at = 0;
        for (w, b) in self.weights.iter_mut().zip(&mut self.biases) {
            let n = w.data().len();
            w.data_mut().copy_from_slice(&p[at..at + n]);
            at += n;
            let m = b.len();
            b.copy_from_slice(&p[at..at + m]);
            at += m;
        }
        Ok(())
    }

    /// Pre-activations of every layer for one sample.
    fn forward_sample(&self, x: &[f64]) -> Vec<Vec<f64>> {
        let mut zs: Vec<Vec<f64>> = Vec::with_capacity(self.weights.len());
        let mut h = x.to_vec();
        for (l, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let z: Vec<f64> = (0..w.rows())
                .map(|r| b[r] + w.row(r).iter().zip(&h).map(|(a, v)| a * v).sum::<f64>())
                .collect();
            h = if l + 1 < self.weights.len() {
                z.iter().map(|&v| self.activation.eval(v)).collect()
            } else {
                z.clone()
            };
            zs.push(z);
        }
        zs
    }

    pub fn predict(&self, x: &Matrix, exec: Execution) -> Result<Matrix> {
        if x.cols() != self.sizes[0] {
            return Err(KanError::Dimension {
                expected: self.sizes[0],
                got: x.cols(),
            });
        }
        let parts = map_chunks(x.rows(), exec, |range| {
            range
                .flat_map(|s| self.forward_sample(x.row(s)).pop().unwrap())
                .collect::<Vec<f64>>()
        });
        Matrix::new(x.rows(), *self.sizes.last().unwrap(), parts.concat())
    }

    /// Loss and flattened gradient.
    pub fn loss_and_grad(&self, x: &Matrix, t: &Matrix, kind: LossKind, exec: Execution) -> Result<(f64, Vec<f64>)> {
        let y = self.predict(x, exec)?;
        let (loss, dy) = prediction_loss(kind, &y, t)?;
        let parts = map_chunks(x.rows(), exec, |range| {
            let mut g = vec![0.0; self.num_parameters()];
            for s in range {
                let zs = self.forward_sample(x.row(s));
                let mut delta = dy.row(s).to_vec();
                let mut offsets = Vec::with_capacity(self.weights.len());
                let mut at = 0;
                for w in &self.weights {
                    offsets.push(at);
                    at += w.data().len() + w.rows();
                }
                for l in (0..self.weights.len()).rev() {
                    let w = &self.weights[l];
                    let input: Vec<f64> = if l == 0 {
                        x.row(s).to_vec()
                    } else {
                        zs[l - 1].iter().map(|&v| self.activation.eval(v)).collect()
                    };
                    let off = offsets[l];
                    for r in 0..w.rows() {
                        for c in 0..w.cols() {
                            g[off + r * w.cols() + c] += delta[r] * input[c];
                        }
                        g[off + w.data().len() + r] += delta[r];
                    }
                    if l > 0 {
                        delta = (0..w.cols())
                            .map(|c| {
                                let back: f64 = (0..w.rows()).map(|r| w.get(r, c) * delta[r]).sum();
                                back * self.activation.deriv(zs[l - 1][c])
                            })
                            .collect();
                    }
                }
            }
            g
        });
        let mut total = vec![0.0; self.num_parameters()];
        for p in parts {
            for (a, b) in total.iter_mut().zip(p) {
                *a += b;
            }
        }
        Ok((loss, total))
    }

    /// Full-batch training; returns the loss after each step.
    pub fn fit(
        &mut self,
        x: &Matrix,
        t: &Matrix,
        kind: LossKind,
        optimizer: OptimizerConfig,
        steps: usize,
        exec: Execution,
    ) -> Result<Vec<f64>> {
        let mut work = self.clone();
        let mut f = |p: &[f64]| -> (f64, Vec<f64>) {
            if work.set_params(p).is_err() {
                return (f64::NAN, vec![0.0; p.len()]);
            }
            work.loss_and_grad(x, t, kind, exec)
                .unwrap_or_else(|_| (f64::NAN, vec![0.0; p.len()]))
        };
        let mut curve = Vec::with_capacity(steps);
        match optimizer {
            OptimizerConfig::Lbfgs(c) => {
                let mut opt = Lbfgs::new(c, self.params(), &mut f);
                for _ in 0..steps {
                    let info = opt.step(&mut f);
                    curve.push(info.value);
                }
                self.set_params(opt.x())?;
            }
            OptimizerConfig::Adam(c) => {
                let mut p = self.params();
                let mut adam = Adam::new(c, p.len());
                for _ in 0..steps {
                    let (v, g) = f(&p);
                    adam.step(&mut p, &g);
                    curve.push(v);
                }
                self.set_params(&p)?;
            }
        }
        Ok(curve)
    }
}
