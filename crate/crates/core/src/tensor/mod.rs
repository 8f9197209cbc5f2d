//! Dense and compressed-sparse-row matrices.

mod dense;
mod sparse;

pub use dense::DenseMatrix;
pub use sparse::{spmm, spmm_transposed, CsrPattern, SparseMatrix};
