//! Differentiable fusion network with explicit reverse-mode gradients.
//!
//! Toy two-layer dense encoders stand in for the image backbones; every
//! mechanism downstream of the embedding interface — prototype-predictor
//! heads, attention fusion, missing-modality surrogacy, and the combined
//! loss — is the real thing, trained by backpropagation through a small
//! recording tape.

mod layers;
mod model;
mod tape;
mod train;

pub use layers::{softmax_cross_entropy, AttentionBlock, DenseStack};
pub use model::{Availability, Batch, Forward, FusionModel, ModelConfig, ProtoSource};
pub use tape::{Gradients, NodeId, Tape};
pub use train::{
    total_loss, train_step, LossComponents, LossRecord, LossWeights, Optimizer, OptimizerKind,
    TrainConfig,
};

use crate::numkit::DenseMatrix;

/// A named parameter with its gradient accumulator.
#[derive(Debug, Clone)]
pub struct ParamTensor {
    pub name: String,
    pub value: DenseMatrix,
    pub grad: DenseMatrix,
}

impl ParamTensor {
    pub fn new(name: String, value: DenseMatrix) -> Self {
        let grad = DenseMatrix::zeros(value.rows(), value.cols());
        Self { name, value, grad }
    }
}
