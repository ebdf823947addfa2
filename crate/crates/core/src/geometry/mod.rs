//! Vectors and norms of the ambient plane or space.

mod norm;
mod vector;

pub use norm::{Norm, NormKind, NormSpec, NormTable};
pub use vector::Vector;

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("the norm is not differentiable at the origin")]
    ZeroVector,
    #[error("unsupported dimension {0} (only 2 and 3 are supported)")]
    UnsupportedDimension(usize),
    #[error("non-finite coordinate")]
    NonFinite,
    #[error("invalid norm: {0}")]
    InvalidNorm(String),
}
