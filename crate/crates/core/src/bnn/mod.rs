//! Binary network core: sign/STE, binary layers, batch norm, Adam,
//! bit-packed inference, threshold fusion, and checkpoints.

mod adam;
mod batchnorm;
pub mod binarize;
pub mod bits;
mod checkpoint;
mod data;
mod fusion;
pub mod layers;
mod model;

pub use adam::{AdamConfig, AdamState};
pub use batchnorm::{BatchNorm, BnCache, BN_EPS, BN_MOMENTUM};
pub use binarize::{clip, sign, sign_forward, ste_backward};
pub use bits::{pack_bits, pack_signs, xnor_popcount_dot, PackedBits};
pub use checkpoint::{load_checkpoint, save_checkpoint, CHECKPOINT_VERSION};
pub use data::Dataset;
pub use fusion::{fold_batchnorm, fuse_sign_threshold, verify_fusion, FusedThreshold, FusionCheck, FUSION_BOUND};
pub use layers::{BinarizeMode, BinaryKind, BinaryLayer, ConvGeometry, Param};
pub use model::{
    evaluate, softmax_cross_entropy, train_epoch, EpochStats, Layer, LayerCache, LayerSpec, Model,
    ModelSpec,
};

use thiserror::Error;

use crate::expr::ExprError;
use crate::tensor::ShapeError;

#[derive(Debug, Error)]
pub enum BnnError {
    #[error("value {value} at index {index} is not ±1")]
    NotBinary { index: usize, value: f32 },
    #[error("packed operands hold {left} and {right} bits; cannot take a {n}-bit dot product")]
    PackedLength { left: usize, right: usize, n: usize },
    #[error("{0}")]
    Geometry(String),
    #[error("invalid model spec: {0}")]
    Spec(String),
    #[error("batch norm needs at least 2 values per channel in train mode, got {0}")]
    DegenerateBatch(usize),
    #[error("non-finite {0}")]
    NonFinite(&'static str),
    #[error("training diverged: loss is {0}")]
    Diverged(f64),
    #[error("label {label} out of range for {classes} classes")]
    Label { label: u8, classes: usize },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Expr(#[from] ExprError),
    #[error(transparent)]
    Shape(#[from] ShapeError),
}
