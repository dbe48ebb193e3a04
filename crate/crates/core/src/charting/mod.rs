//! Geodesic distances, local polar charts and the sparse patch operator.

mod chart;
mod fmm;
mod patch;

use thiserror::Error;

use crate::sparse::SparseError;

pub use chart::{all_charts, local_chart, ChartEntry, LocalChart};
pub use fmm::{fast_marching, DistanceField};
pub use patch::{circular_distance, patch_operator, PatchOperator, PatchParams, WEIGHT_DROP};

#[derive(Debug, Error, PartialEq)]
pub enum ChartError {
    #[error("vertex {vertex} out of range for a mesh with {count} vertices")]
    VertexOutOfRange { vertex: usize, count: usize },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error(transparent)]
    Sparse(#[from] SparseError),
}
