//! Genome encoding, operator tables, and decoded activation expressions.

mod canonical;
mod catalog;
mod genome;
mod graph;
pub mod ops;

pub use canonical::{canonicalize, CanonicalForm};
pub use catalog::{
    catalog_af, catalog_genome, ActivationFn, CatalogName, RPReLU, RSign, CATALOG_GENES,
};
pub use genome::{search_space_size, search_space_size_with, EncodingType, Genome, SlotKind};
pub use graph::{
    apply, backward, eval_binary, eval_unary, forward, ActivationExpr, ChannelActivation,
    ParamOwner, Tape, Term,
};
pub use ops::{BinaryOp, OperatorDescriptor, OperatorTable, UnaryOp};

use thiserror::Error;

use crate::tensor::ShapeError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExprError {
    #[error("{encoding} genome needs {expected} genes, got {actual}")]
    GenomeLength {
        encoding: EncodingType,
        expected: usize,
        actual: usize,
    },
    #[error("gene {gene} at position {position} is out of range (limit {limit})")]
    GeneOutOfRange {
        position: usize,
        gene: usize,
        limit: usize,
    },
    #[error("cannot parse `{token}`; expected {expected}")]
    Parse {
        token: String,
        expected: &'static str,
    },
    #[error("unknown activation `{0}` (expected AF1..AF15, RSign or RPReLU)")]
    UnknownCatalogName(String),
    #[error("channel count must be positive")]
    ZeroChannels,
    #[error("expected {expected} channels, got {actual}")]
    ChannelMismatch { expected: usize, actual: usize },
    #[error("operator parameters must be {}", if *.required { "supplied" } else { "absent" })]
    ParamPresence { required: bool },
    #[error("tape was recorded by a different activation")]
    TapeMismatch,
    #[error("expression exceeds {limit} nodes")]
    TooDeep { limit: usize },
    #[error(transparent)]
    Shape(#[from] ShapeError),
}
