//! Out-of-distribution detection for vertices of attributed graphs.

pub mod autodiff;
pub mod config;
pub mod error;
pub mod good;
pub mod graph;
pub mod harness;
pub mod io;
pub mod models;
pub mod scalar;
pub mod scores;
pub mod seed;
pub mod tensor;
pub mod thresholds;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// Double-precision instantiations used by the command-line tool.
pub type Matrix = tensor::DenseMatrix<f64>;
pub type Sparse = tensor::SparseMatrix<f64>;
pub type Graph64 = graph::Graph<f64>;
pub type Model64 = models::ModelState<f64>;
pub type Scores64 = scores::ScoreVector<f64>;
pub type Task64 = harness::Task<f64>;
pub type Stream64 = harness::TaskStream<f64>;
