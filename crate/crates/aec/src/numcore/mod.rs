//! Dense tensors with reverse-mode automatic differentiation.
//!
//! A [`Graph`] is a flat tape: every operation runs eagerly, stores its
//! result (plus whatever intermediate state its backward pass needs), and
//! appends one node. [`Graph::backward`] walks the tape in reverse and
//! accumulates gradients for every tensor, seeded with 1 at a scalar loss.
//!
//! The op set is deliberately small and fused around this crate's workloads:
//! pointwise affine maps, GRU sequences, causal unfolds, softmax, and a few
//! elementwise/reduction helpers. Model- and loss-specific ops plug in via
//! the crate-internal [`GraphOp`] trait.

mod adam;
mod graph;
pub mod gru;
mod kernels;
mod ops;
mod params;
mod tensor;

pub use adam::{adam_step, clip_global_norm, AdamConfig, AdamState};
pub use graph::{Graph, TensorId};
pub use gru::{gru_step, GruWeights};
pub use params::{ParamEntry, ParamSet};
pub use tensor::Tensor;

pub(crate) use graph::{BackwardCtx, GraphOp};
pub(crate) use gru::gru_row_step;
pub(crate) use kernels::{affine_row, affine_rows, matmul_abt, sigmoid_scalar, softmax_row};
pub(crate) use ops::mean_rows;
pub use ops::GruIds;
