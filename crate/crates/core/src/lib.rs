//! Determinant-preserving sparsification of weighted graphs, with the
//! determinant estimator and spanning-tree samplers built on top of it.

pub mod cli;
pub mod det;
pub mod error;
pub mod graph;
pub mod harness;
pub mod linalg;
pub mod logweight;
pub mod oracles;
pub mod resistance;
pub mod rng;
pub mod schur;
pub mod sparsify;
pub mod trees;

pub use error::{Error, Result};
pub use graph::{EdgeRecord, GraphBuilder, Origin, VertexPartition, WeightedMultiGraph};
pub use logweight::LogWeight;
