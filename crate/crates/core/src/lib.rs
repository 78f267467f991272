//! Kolmogorov-Arnold networks: learnable B-spline activations on edges,
//! grid extension, sparsity regularization, pruning and symbolic snapping.

pub mod dataset;
pub mod error;
pub mod exec;
pub mod experiments;
pub mod linalg;
pub mod matrix;
pub mod network;
pub mod pipeline;
pub mod simplify;
pub mod spline;
pub mod symbolic;
pub mod tasks;
pub mod train;

pub use dataset::Dataset;
pub use error::{KanError, Result};
pub use exec::Execution;
pub use matrix::Matrix;
pub use network::{init_network, ActivationEdge, ForwardTrace, Gradients, KanLayer, KanNetwork, ParamMask, SymbolicLock};
pub use symbolic::{SymbolicFn, SymbolicLibrary};
