//! Differentiable layers and the ten forecasting architectures, with
//! hand-written backward passes.

mod attention;
mod checkpoint;
mod dense;
mod fusion;
mod lstm;
mod model;
mod params;
mod tensor;

#[cfg(test)]
mod tests;

pub use attention::{scaled_dot_attention, BatchedAttention};
pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use dense::{dropout, DenseLayer, Mode};
pub use fusion::{gated_fuse, residual_fuse, GateLayer};
pub use lstm::{lstm_cell, LstmLayer, SeqBatch};
pub use model::{
    lstm_forward, Batch, ForwardCache, InputDims, Model, ModelSpec, OptimizerKind, Variant, ADAM_RATE, RMSPROP_RATE,
};
pub use params::{ParamId, Params};
pub use tensor::Tensor;

#[derive(Debug, thiserror::Error)]
pub enum NeuralError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("illegal model spec: {0}")]
    IllegalSpec(String),
    #[error("non-finite model output")]
    NonFinite,
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
