use std::sync::Arc;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::DenseMatrix;

/// Structure of a compressed sparse row matrix, shared between matrices
/// that differ only in their stored values.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CsrPattern {
    rows: usize,
    cols: usize,
    offsets: Vec<usize>,
    indices: Vec<usize>,
}

impl CsrPattern {
    pub fn new(rows: usize, cols: usize, offsets: Vec<usize>, indices: Vec<usize>) -> Result<Self> {
        if offsets.len() != rows + 1 || offsets[0] != 0 {
            return Err(Error::shape(
                "csr",
                format!("{} offsets for {rows} rows", offsets.len()),
            ));
        }
        if offsets.windows(2).any(|w| w[0] > w[1]) || offsets[rows] != indices.len() {
            return Err(Error::shape("csr", "offsets not monotone or wrong total"));
        }
        if let Some(&bad) = indices.iter().find(|&&j| j >= cols) {
            return Err(Error::shape(
                "csr",
                format!("column {bad} out of range {cols}"),
            ));
        }
        Ok(Self {
            rows,
            cols,
            offsets,
            indices,
        })
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    #[inline]
    pub fn offsets(&self) -> &[usize] {
        &self.offsets
    }

    #[inline]
    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    /// Column indices of row `i`.
    #[inline]
    pub fn row(&self, i: usize) -> &[usize] {
        &self.indices[self.offsets[i]..self.offsets[i + 1]]
    }

    #[inline]
    pub fn row_range(&self, i: usize) -> std::ops::Range<usize> {
        self.offsets[i]..self.offsets[i + 1]
    }

    /// Position of entry `(i, j)` in the value array, if stored.
    /// Requires sorted column indices within each row.
    pub fn find(&self, i: usize, j: usize) -> Option<usize> {
        let range = self.row_range(i);
        self.indices[range.clone()]
            .binary_search(&j)
            .ok()
            .map(|k| range.start + k)
    }

    pub fn contains(&self, i: usize, j: usize) -> bool {
        self.find(i, j).is_some()
    }

    /// For each stored entry `(i, j)`, the position of `(j, i)`.
    /// Fails when the pattern is not structurally symmetric.
    pub fn transpose_positions(&self) -> Result<Vec<usize>> {
        let mut out = Vec::with_capacity(self.nnz());
        for i in 0..self.rows {
            for &j in self.row(i) {
                let pos = self
                    .find(j, i)
                    .ok_or_else(|| Error::shape("csr", format!("entry ({i},{j}) has no mirror")))?;
                out.push(pos);
            }
        }
        Ok(out)
    }
}

/// CSR matrix: a shared pattern plus one value per stored entry.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseMatrix<T> {
    pattern: Arc<CsrPattern>,
    values: Vec<T>,
}

impl<T: Scalar> SparseMatrix<T> {
    pub fn new(pattern: Arc<CsrPattern>, values: Vec<T>) -> Result<Self> {
        if values.len() != pattern.nnz() {
            return Err(Error::shape(
                "sparse",
                format!("{} values for {} stored entries", values.len(), pattern.nnz()),
            ));
        }
        Ok(Self { pattern, values })
    }

    pub fn pattern(&self) -> &Arc<CsrPattern> {
        &self.pattern
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [T] {
        &mut self.values
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        self.pattern
            .find(i, j)
            .map_or(T::zero(), |k| self.values[k])
    }

    pub fn to_dense(&self) -> DenseMatrix<T> {
        let mut out = DenseMatrix::zeros(self.pattern.rows(), self.pattern.cols());
        for i in 0..self.pattern.rows() {
            for k in self.pattern.row_range(i) {
                out[(i, self.pattern.indices()[k])] += self.values[k];
            }
        }
        out
    }

    /// `self · dense`, accumulating each output row sequentially in stored order.
    pub fn spmm(&self, dense: &DenseMatrix<T>) -> Result<DenseMatrix<T>> {
        spmm(&self.pattern, &self.values, dense)
    }
}

/// Sparse times dense with the sparse values passed separately.
pub fn spmm<T: Scalar>(
    pattern: &CsrPattern,
    values: &[T],
    dense: &DenseMatrix<T>,
) -> Result<DenseMatrix<T>> {
    if pattern.cols() != dense.rows() || values.len() != pattern.nnz() {
        return Err(Error::shape(
            "spmm",
            format!(
                "{}x{} sparse ({} values) times {}x{}",
                pattern.rows(),
                pattern.cols(),
                values.len(),
                dense.rows(),
                dense.cols()
            ),
        ));
    }
    let n = dense.cols();
    let mut out = DenseMatrix::zeros(pattern.rows(), n);
    for i in 0..pattern.rows() {
        let out_row = out.row_mut(i);
        for k in pattern.row_range(i) {
            let w = values[k];
            let src = dense.row(pattern.indices()[k]);
            for (o, &x) in out_row.iter_mut().zip(src) {
                *o += w * x;
            }
        }
    }
    Ok(out)
}

/// `sparseᵀ · dense`.
pub fn spmm_transposed<T: Scalar>(
    pattern: &CsrPattern,
    values: &[T],
    dense: &DenseMatrix<T>,
) -> Result<DenseMatrix<T>> {
    if pattern.rows() != dense.rows() {
        return Err(Error::shape("spmm_transposed", "row count mismatch"));
    }
    let n = dense.cols();
    let mut out = DenseMatrix::zeros(pattern.cols(), n);
    for i in 0..pattern.rows() {
        let src = dense.row(i);
        for k in pattern.row_range(i) {
            let w = values[k];
            let out_row = out.row_mut(pattern.indices()[k]);
            for (o, &x) in out_row.iter_mut().zip(src) {
                *o += w * x;
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> SparseMatrix<f64> {
        // [[1, 0, 2], [0, 0, 0], [0, 3, 0]]
        let p = CsrPattern::new(3, 3, vec![0, 2, 2, 3], vec![0, 2, 1]).unwrap();
        SparseMatrix::new(Arc::new(p), vec![1.0, 2.0, 3.0]).unwrap()
    }

    #[test]
    fn spmm_matches_dense() {
        let s = sample();
        let x = DenseMatrix::from_rows(&[vec![1.0, -1.0], vec![0.5, 2.0], vec![3.0, 0.0]]).unwrap();
        let dense = s.to_dense().matmul(&x).unwrap();
        assert_eq!(s.spmm(&x).unwrap(), dense);
        let dt = s.to_dense().transpose().matmul(&x).unwrap();
        assert_eq!(spmm_transposed(s.pattern(), s.values(), &x).unwrap(), dt);
    }

    #[test]
    fn rejects_bad_patterns() {
        assert!(CsrPattern::new(2, 2, vec![0, 1], vec![0]).is_err());
        assert!(CsrPattern::new(1, 2, vec![0, 1], vec![5]).is_err());
        assert!(CsrPattern::new(2, 2, vec![0, 2, 1], vec![0, 1]).is_err());
    }

    #[test]
    fn lookup() {
        let s = sample();
        assert_eq!(s.get(0, 2), 2.0);
        assert_eq!(s.get(1, 1), 0.0);
        assert!(s.pattern().transpose_positions().is_err());
    }
}
