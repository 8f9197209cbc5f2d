//! Matrix-valued reverse-mode automatic differentiation.
//!
//! Every primitive appends a node to the [`Tape`] holding its forward value
//! and the ids of its inputs. [`Tape::backward`] walks the nodes in exact
//! reverse order of recording, so gradient accumulation order (and therefore
//! every bit of the result) is fixed by the forward program.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::{spmm, spmm_transposed, CsrPattern, DenseMatrix};

/// Handle to a node recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Guard used by layer normalization of constant rows.
pub const LAYER_NORM_EPS: f64 = 1e-5;
/// Guard used by L2 normalization of (near) zero rows.
pub const L2_NORM_EPS: f64 = 1e-12;

#[derive(Debug)]
enum Op<T> {
    Leaf,
    MatMul(Var, Var),
    SpMM {
        pattern: Arc<CsrPattern>,
        weights: Var,
        x: Var,
    },
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, T),
    AddScalar(Var),
    BiasAdd(Var, Var),
    ScaleBy(Var, Var),
    Relu(Var),
    Sigmoid(Var),
    LogSigmoid(Var),
    Exp(Var),
    Log(Var),
    Abs(Var),
    RowSoftmax(Var),
    RowLogSoftmax(Var),
    Dropout { x: Var, mask: Vec<T> },
    LayerNorm { x: Var, inv_std: Vec<T> },
    RowL2Normalize { x: Var, norms: Vec<T>, clamped: Vec<bool> },
    Transpose(Var),
    ConcatCols(Var, Var),
    SelectRows { x: Var, idx: Vec<usize> },
    Sum(Var),
    Mean(Var),
    RowSum(Var),
    PairwiseDistance(Var, Var),
}

#[derive(Debug)]
struct Node<T> {
    value: DenseMatrix<T>,
    op: Op<T>,
    needs_grad: bool,
}

/// Append-only record of a forward computation.
#[derive(Debug, Default)]
pub struct Tape<T> {
    nodes: Vec<Node<T>>,
}

/// Gradients produced by [`Tape::backward`], indexed by [`Var`].
#[derive(Debug)]
pub struct Gradients<T> {
    grads: Vec<Option<DenseMatrix<T>>>,
}

impl<T: Scalar> Gradients<T> {
    pub fn get(&self, v: Var) -> Option<&DenseMatrix<T>> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    pub fn take(&mut self, v: Var) -> Option<DenseMatrix<T>> {
        self.grads.get_mut(v.0).and_then(Option::take)
    }
}

fn shape_str<T: Scalar>(m: &DenseMatrix<T>) -> String {
    format!("{}x{}", m.rows(), m.cols())
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Differentiable input (parameter or data we want gradients for).
    pub fn param(&mut self, value: DenseMatrix<T>) -> Var {
        self.push_raw(value, Op::Leaf, true)
    }

    /// Input that never receives a gradient.
    pub fn constant(&mut self, value: DenseMatrix<T>) -> Var {
        self.push_raw(value, Op::Leaf, false)
    }

    pub fn value(&self, v: Var) -> &DenseMatrix<T> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.nodes[v.0].value.shape()
    }

    fn push_raw(&mut self, value: DenseMatrix<T>, op: Op<T>, needs_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    fn push(&mut self, name: &'static str, value: DenseMatrix<T>, op: Op<T>, inputs: &[Var]) -> Result<Var> {
        if !value.is_finite() {
            return Err(Error::NonFinite(name));
        }
        let needs_grad = inputs.iter().any(|&v| self.needs(v));
        Ok(self.push_raw(value, op, needs_grad))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).matmul(self.value(b))?;
        self.push("matmul", value, Op::MatMul(a, b), &[a, b])
    }

    /// Sparse times dense where the sparse values are the 1×nnz node `weights`.
    pub fn spmm(&mut self, pattern: &Arc<CsrPattern>, weights: Var, x: Var) -> Result<Var> {
        let w = self.value(weights);
        if w.rows() != 1 || w.cols() != pattern.nnz() {
            return Err(Error::shape(
                "spmm",
                format!("weights {} for {} stored entries", shape_str(w), pattern.nnz()),
            ));
        }
        let value = spmm(pattern, w.as_slice(), self.value(x))?;
        self.push(
            "spmm",
            value,
            Op::SpMM {
                pattern: Arc::clone(pattern),
                weights,
                x,
            },
            &[weights, x],
        )
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).zip_map(self.value(b), |x, y| x + y)?;
        self.push("add", value, Op::Add(a, b), &[a, b])
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).zip_map(self.value(b), |x, y| x - y)?;
        self.push("sub", value, Op::Sub(a, b), &[a, b])
    }

    /// Elementwise (Hadamard) product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).zip_map(self.value(b), |x, y| x * y)?;
        self.push("mul", value, Op::Mul(a, b), &[a, b])
    }

    pub fn scale(&mut self, a: Var, s: T) -> Result<Var> {
        let value = self.value(a).map(|x| x * s);
        self.push("scale", value, Op::Scale(a, s), &[a])
    }

    pub fn add_scalar(&mut self, a: Var, s: T) -> Result<Var> {
        let value = self.value(a).map(|x| x + s);
        self.push("add_scalar", value, Op::AddScalar(a), &[a])
    }

    /// Adds the 1×d row `bias` to every row of `x`.
    pub fn bias_add(&mut self, x: Var, bias: Var) -> Result<Var> {
        let (xv, bv) = (self.value(x), self.value(bias));
        if bv.rows() != 1 || bv.cols() != xv.cols() {
            return Err(Error::shape(
                "bias_add",
                format!("bias {} for input {}", shape_str(bv), shape_str(xv)),
            ));
        }
        let mut value = xv.clone();
        let b = bv.as_slice();
        for i in 0..value.rows() {
            for (o, &bb) in value.row_mut(i).iter_mut().zip(b) {
                *o += bb;
            }
        }
        self.push("bias_add", value, Op::BiasAdd(x, bias), &[x, bias])
    }

    /// Multiplies every entry of `x` by the 1×1 node `s`.
    pub fn scale_by(&mut self, x: Var, s: Var) -> Result<Var> {
        let sv = self.value(s).item()?;
        let value = self.value(x).map(|v| v * sv);
        self.push("scale_by", value, Op::ScaleBy(x, s), &[x, s])
    }

    pub fn relu(&mut self, x: Var) -> Result<Var> {
        let value = self.value(x).map(|v| v.max(T::zero()));
        self.push("relu", value, Op::Relu(x), &[x])
    }

    pub fn sigmoid(&mut self, x: Var) -> Result<Var> {
        let value = self.value(x).map(sigmoid);
        self.push("sigmoid", value, Op::Sigmoid(x), &[x])
    }

    /// `log σ(x)` evaluated without overflow.
    pub fn log_sigmoid(&mut self, x: Var) -> Result<Var> {
        let value = self.value(x).map(log_sigmoid);
        self.push("log_sigmoid", value, Op::LogSigmoid(x), &[x])
    }

    pub fn exp(&mut self, x: Var) -> Result<Var> {
        let value = self.value(x).map(T::exp);
        self.push("exp", value, Op::Exp(x), &[x])
    }

    pub fn log(&mut self, x: Var) -> Result<Var> {
        let value = self.value(x).map(T::ln);
        self.push("log", value, Op::Log(x), &[x])
    }

    pub fn abs(&mut self, x: Var) -> Result<Var> {
        let value = self.value(x).map(T::abs);
        self.push("abs", value, Op::Abs(x), &[x])
    }

    pub fn row_softmax(&mut self, x: Var) -> Result<Var> {
        let value = row_softmax(self.value(x));
        self.push("row_softmax", value, Op::RowSoftmax(x), &[x])
    }

    pub fn row_log_softmax(&mut self, x: Var) -> Result<Var> {
        let value = row_log_softmax(self.value(x));
        self.push("row_log_softmax", value, Op::RowLogSoftmax(x), &[x])
    }

    /// Inverted dropout: kept entries are scaled by `1/(1-rate)`. The mask is
    /// a pure function of `seed`. A rate of zero records nothing.
    pub fn dropout(&mut self, x: Var, rate: T, seed: u64) -> Result<Var> {
        if rate < T::zero() || rate >= T::one() {
            return Err(Error::InvalidConfig(format!(
                "dropout rate {rate} outside [0, 1)"
            )));
        }
        if rate == T::zero() {
            return Ok(x);
        }
        let keep_scale = T::one() / (T::one() - rate);
        let threshold = rate.to_f64_lossy();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let len = self.value(x).len();
        let mask: Vec<T> = (0..len)
            .map(|_| {
                if rng.gen::<f64>() < threshold {
                    T::zero()
                } else {
                    keep_scale
                }
            })
            .collect();
        let xv = self.value(x);
        let data = xv.as_slice().iter().zip(&mask).map(|(&a, &m)| a * m).collect();
        let value = DenseMatrix::from_vec(xv.rows(), xv.cols(), data)?;
        self.push("dropout", value, Op::Dropout { x, mask }, &[x])
    }

    /// Row-wise layer normalization without affine parameters. A constant
    /// row (including the all-zero row) maps to zeros.
    pub fn layer_norm(&mut self, x: Var) -> Result<Var> {
        let xv = self.value(x);
        let (rows, cols) = xv.shape();
        let eps = T::lit(LAYER_NORM_EPS);
        let d = T::from_usize_lossy(cols.max(1));
        let mut value = DenseMatrix::zeros(rows, cols);
        let mut inv_std = Vec::with_capacity(rows);
        for i in 0..rows {
            let row = xv.row(i);
            let mean = row.iter().copied().sum::<T>() / d;
            let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / d;
            let s = T::one() / (var + eps).sqrt();
            for (o, &v) in value.row_mut(i).iter_mut().zip(row) {
                *o = (v - mean) * s;
            }
            inv_std.push(s);
        }
        self.push("layer_norm", value, Op::LayerNorm { x, inv_std }, &[x])
    }

    /// Scales each row to unit Euclidean length; norms below
    /// [`L2_NORM_EPS`] are clamped to it.
    pub fn row_l2_normalize(&mut self, x: Var) -> Result<Var> {
        let xv = self.value(x);
        let eps = T::lit(L2_NORM_EPS);
        let mut value = xv.clone();
        let mut norms = Vec::with_capacity(xv.rows());
        let mut clamped = Vec::with_capacity(xv.rows());
        for i in 0..xv.rows() {
            let raw = xv.row(i).iter().map(|&v| v * v).sum::<T>().sqrt();
            let n = raw.max(eps);
            for o in value.row_mut(i) {
                *o = *o / n;
            }
            norms.push(n);
            clamped.push(raw <= eps);
        }
        self.push(
            "row_l2_normalize",
            value,
            Op::RowL2Normalize { x, norms, clamped },
            &[x],
        )
    }

    pub fn transpose(&mut self, x: Var) -> Result<Var> {
        let value = self.value(x).transpose();
        self.push("transpose", value, Op::Transpose(x), &[x])
    }

    pub fn concat_cols(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).hconcat(self.value(b))?;
        self.push("concat_cols", value, Op::ConcatCols(a, b), &[a, b])
    }

    pub fn select_rows(&mut self, x: Var, idx: &[usize]) -> Result<Var> {
        let rows = self.value(x).rows();
        if let Some(&bad) = idx.iter().find(|&&i| i >= rows) {
            return Err(Error::shape("select_rows", format!("row {bad} of {rows}")));
        }
        let value = self.value(x).select_rows(idx);
        self.push(
            "select_rows",
            value,
            Op::SelectRows {
                x,
                idx: idx.to_vec(),
            },
            &[x],
        )
    }

    pub fn sum(&mut self, x: Var) -> Result<Var> {
        let value = DenseMatrix::scalar(self.value(x).sum());
        self.push("sum", value, Op::Sum(x), &[x])
    }

    pub fn mean(&mut self, x: Var) -> Result<Var> {
        let xv = self.value(x);
        if xv.is_empty() {
            return Err(Error::shape("mean", "empty input"));
        }
        let value = DenseMatrix::scalar(xv.sum() / T::from_usize_lossy(xv.len()));
        self.push("mean", value, Op::Mean(x), &[x])
    }

    /// n×d → n×1 row sums.
    pub fn row_sum(&mut self, x: Var) -> Result<Var> {
        let xv = self.value(x);
        let sums = (0..xv.rows())
            .map(|i| xv.row(i).iter().copied().sum::<T>())
            .collect();
        let value = DenseMatrix::column_vector(sums);
        self.push("row_sum", value, Op::RowSum(x), &[x])
    }

    /// Euclidean distance between every row of `a` (n×d) and every row of
    /// `b` (k×d), giving n×k.
    pub fn pairwise_distance(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.cols() != bv.cols() {
            return Err(Error::shape(
                "pairwise_distance",
                format!("{} vs {}", shape_str(av), shape_str(bv)),
            ));
        }
        let mut value = DenseMatrix::zeros(av.rows(), bv.rows());
        for i in 0..av.rows() {
            for j in 0..bv.rows() {
                let d2: T = av
                    .row(i)
                    .iter()
                    .zip(bv.row(j))
                    .map(|(&x, &y)| (x - y) * (x - y))
                    .sum();
                value[(i, j)] = d2.sqrt();
            }
        }
        self.push("pairwise_distance", value, Op::PairwiseDistance(a, b), &[a, b])
    }

    /// Cosine similarity between all pairs of rows of `x`.
    pub fn cosine_similarity(&mut self, x: Var) -> Result<Var> {
        let n = self.row_l2_normalize(x)?;
        let nt = self.transpose(n)?;
        self.matmul(n, nt)
    }

    /// Reverse sweep from the scalar node `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients<T>> {
        let shape = self.shape(loss);
        if shape != (1, 1) {
            return Err(Error::shape(
                "backward",
                format!("loss must be 1x1, got {}x{}", shape.0, shape.1),
            ));
        }
        let mut grads: Vec<Option<DenseMatrix<T>>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(DenseMatrix::scalar(T::one()));
        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else {
                continue;
            };
            let node = &self.nodes[idx];
            self.propagate(node, &g, &mut grads)?;
            grads[idx] = Some(g);
        }
        Ok(Gradients { grads })
    }

    fn accumulate(&self, grads: &mut [Option<DenseMatrix<T>>], v: Var, g: DenseMatrix<T>) -> Result<()> {
        if !self.needs(v) {
            return Ok(());
        }
        match &mut grads[v.0] {
            Some(existing) => existing.axpy(T::one(), &g),
            slot => {
                *slot = Some(g);
                Ok(())
            }
        }
    }

    fn propagate(&self, node: &Node<T>, g: &DenseMatrix<T>, grads: &mut [Option<DenseMatrix<T>>]) -> Result<()> {
        let y = &node.value;
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                if self.needs(*a) {
                    let da = g.matmul_t(self.value(*b))?;
                    self.accumulate(grads, *a, da)?;
                }
                if self.needs(*b) {
                    let db = self.value(*a).t_matmul(g)?;
                    self.accumulate(grads, *b, db)?;
                }
            }
            Op::SpMM {
                pattern,
                weights,
                x,
            } => {
                let w = self.value(*weights);
                if self.needs(*x) {
                    let dx = spmm_transposed(pattern, w.as_slice(), g)?;
                    self.accumulate(grads, *x, dx)?;
                }
                if self.needs(*weights) {
                    let xv = self.value(*x);
                    let mut dw = Vec::with_capacity(pattern.nnz());
                    for i in 0..pattern.rows() {
                        let gi = g.row(i);
                        for k in pattern.row_range(i) {
                            let xj = xv.row(pattern.indices()[k]);
                            dw.push(gi.iter().zip(xj).map(|(&p, &q)| p * q).sum::<T>());
                        }
                    }
                    self.accumulate(grads, *weights, DenseMatrix::row_vector(dw))?;
                }
            }
            Op::Add(a, b) => {
                self.accumulate(grads, *a, g.clone())?;
                self.accumulate(grads, *b, g.clone())?;
            }
            Op::Sub(a, b) => {
                self.accumulate(grads, *a, g.clone())?;
                self.accumulate(grads, *b, g.map(|v| -v))?;
            }
            Op::Mul(a, b) => {
                if self.needs(*a) {
                    let da = g.zip_map(self.value(*b), |p, q| p * q)?;
                    self.accumulate(grads, *a, da)?;
                }
                if self.needs(*b) {
                    let db = g.zip_map(self.value(*a), |p, q| p * q)?;
                    self.accumulate(grads, *b, db)?;
                }
            }
            Op::Scale(a, s) => {
                let s = *s;
                self.accumulate(grads, *a, g.map(|v| v * s))?;
            }
            Op::AddScalar(a) => self.accumulate(grads, *a, g.clone())?,
            Op::BiasAdd(x, b) => {
                self.accumulate(grads, *x, g.clone())?;
                if self.needs(*b) {
                    let mut db = vec![T::zero(); g.cols()];
                    for i in 0..g.rows() {
                        for (d, &v) in db.iter_mut().zip(g.row(i)) {
                            *d += v;
                        }
                    }
                    self.accumulate(grads, *b, DenseMatrix::row_vector(db))?;
                }
            }
            Op::ScaleBy(x, s) => {
                let sv = self.value(*s).item()?;
                if self.needs(*x) {
                    self.accumulate(grads, *x, g.map(|v| v * sv))?;
                }
                if self.needs(*s) {
                    let ds: T = g
                        .as_slice()
                        .iter()
                        .zip(self.value(*x).as_slice())
                        .map(|(&p, &q)| p * q)
                        .sum();
                    self.accumulate(grads, *s, DenseMatrix::scalar(ds))?;
                }
            }
            Op::Relu(x) => {
                let dx = g.zip_map(self.value(*x), |p, q| if q > T::zero() { p } else { T::zero() })?;
                self.accumulate(grads, *x, dx)?;
            }
            Op::Sigmoid(x) => {
                let dx = g.zip_map(y, |p, s| p * s * (T::one() - s))?;
                self.accumulate(grads, *x, dx)?;
            }
            Op::LogSigmoid(x) => {
                let dx = g.zip_map(self.value(*x), |p, q| p * sigmoid(-q))?;
                self.accumulate(grads, *x, dx)?;
            }
            Op::Exp(x) => {
                let dx = g.zip_map(y, |p, e| p * e)?;
                self.accumulate(grads, *x, dx)?;
            }
            Op::Log(x) => {
                let dx = g.zip_map(self.value(*x), |p, q| p / q)?;
                self.accumulate(grads, *x, dx)?;
            }
            Op::Abs(x) => {
                let dx = g.zip_map(self.value(*x), |p, q| {
                    if q > T::zero() {
                        p
                    } else if q < T::zero() {
                        -p
                    } else {
                        T::zero()
                    }
                })?;
                self.accumulate(grads, *x, dx)?;
            }
            Op::RowSoftmax(x) => {
                let mut dx = DenseMatrix::zeros(y.rows(), y.cols());
                for i in 0..y.rows() {
                    let (yi, gi) = (y.row(i), g.row(i));
                    let dot: T = yi.iter().zip(gi).map(|(&a, &b)| a * b).sum();
                    for ((o, &a), &b) in dx.row_mut(i).iter_mut().zip(yi).zip(gi) {
                        *o = a * (b - dot);
                    }
                }
                self.accumulate(grads, *x, dx)?;
            }
            Op::RowLogSoftmax(x) => {
                let mut dx = DenseMatrix::zeros(y.rows(), y.cols());
                for i in 0..y.rows() {
                    let (yi, gi) = (y.row(i), g.row(i));
                    let total: T = gi.iter().copied().sum();
                    for ((o, &a), &b) in dx.row_mut(i).iter_mut().zip(yi).zip(gi) {
                        *o = b - a.exp() * total;
                    }
                }
                self.accumulate(grads, *x, dx)?;
            }
            Op::Dropout { x, mask } => {
                let data = g.as_slice().iter().zip(mask).map(|(&p, &m)| p * m).collect();
                let dx = DenseMatrix::from_vec(g.rows(), g.cols(), data)?;
                self.accumulate(grads, *x, dx)?;
            }
            Op::LayerNorm { x, inv_std } => {
                let d = T::from_usize_lossy(y.cols().max(1));
                let mut dx = DenseMatrix::zeros(y.rows(), y.cols());
                for i in 0..y.rows() {
                    let (yi, gi) = (y.row(i), g.row(i));
                    let mean_g = gi.iter().copied().sum::<T>() / d;
                    let mean_gy = gi.iter().zip(yi).map(|(&a, &b)| a * b).sum::<T>() / d;
                    for ((o, &a), &b) in dx.row_mut(i).iter_mut().zip(gi).zip(yi) {
                        *o = inv_std[i] * (a - mean_g - b * mean_gy);
                    }
                }
                self.accumulate(grads, *x, dx)?;
            }
            Op::RowL2Normalize { x, norms, clamped } => {
                let mut dx = DenseMatrix::zeros(y.rows(), y.cols());
                for i in 0..y.rows() {
                    let (yi, gi) = (y.row(i), g.row(i));
                    let dot: T = if clamped[i] {
                        T::zero()
                    } else {
                        yi.iter().zip(gi).map(|(&a, &b)| a * b).sum()
                    };
                    for ((o, &a), &b) in dx.row_mut(i).iter_mut().zip(yi).zip(gi) {
                        *o = (b - a * dot) / norms[i];
                    }
                }
                self.accumulate(grads, *x, dx)?;
            }
            Op::Transpose(x) => self.accumulate(grads, *x, g.transpose())?,
            Op::ConcatCols(a, b) => {
                let ca = self.value(*a).cols();
                let cb = self.value(*b).cols();
                let mut da = DenseMatrix::zeros(g.rows(), ca);
                let mut db = DenseMatrix::zeros(g.rows(), cb);
                for i in 0..g.rows() {
                    let gi = g.row(i);
                    da.row_mut(i).copy_from_slice(&gi[..ca]);
                    db.row_mut(i).copy_from_slice(&gi[ca..]);
                }
                self.accumulate(grads, *a, da)?;
                self.accumulate(grads, *b, db)?;
            }
            Op::SelectRows { x, idx } => {
                let xv = self.value(*x);
                let mut dx = DenseMatrix::zeros(xv.rows(), xv.cols());
                for (r, &i) in idx.iter().enumerate() {
                    for (o, &v) in dx.row_mut(i).iter_mut().zip(g.row(r)) {
                        *o += v;
                    }
                }
                self.accumulate(grads, *x, dx)?;
            }
            Op::Sum(x) => {
                let (r, c) = self.shape(*x);
                self.accumulate(grads, *x, DenseMatrix::filled(r, c, g.item()?))?;
            }
            Op::Mean(x) => {
                let (r, c) = self.shape(*x);
                let v = g.item()? / T::from_usize_lossy(r * c);
                self.accumulate(grads, *x, DenseMatrix::filled(r, c, v))?;
            }
            Op::RowSum(x) => {
                let (r, c) = self.shape(*x);
                let mut dx = DenseMatrix::zeros(r, c);
                for i in 0..r {
                    let gi = g[(i, 0)];
                    dx.row_mut(i).iter_mut().for_each(|o| *o = gi);
                }
                self.accumulate(grads, *x, dx)?;
            }
            Op::PairwiseDistance(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                let mut da = DenseMatrix::zeros(av.rows(), av.cols());
                let mut db = DenseMatrix::zeros(bv.rows(), bv.cols());
                for i in 0..av.rows() {
                    for j in 0..bv.rows() {
                        let dist = y[(i, j)];
                        if dist <= T::zero() {
                            continue;
                        }
                        let coef = g[(i, j)] / dist;
                        for c in 0..av.cols() {
                            let diff = coef * (av[(i, c)] - bv[(j, c)]);
                            da[(i, c)] += diff;
                            db[(j, c)] -= diff;
                        }
                    }
                }
                self.accumulate(grads, *a, da)?;
                self.accumulate(grads, *b, db)?;
            }
        }
        Ok(())
    }
}

pub fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

pub fn log_sigmoid<T: Scalar>(x: T) -> T {
    // log σ(x) = min(x, 0) - log(1 + e^{-|x|})
    x.min(T::zero()) - (-x.abs()).exp().ln_1p()
}

/// Numerically stable softmax of each row.
pub fn row_softmax<T: Scalar>(x: &DenseMatrix<T>) -> DenseMatrix<T> {
    let mut out = x.clone();
    for i in 0..out.rows() {
        let row = out.row_mut(i);
        let max = row.iter().fold(T::neg_infinity(), |m, &v| m.max(v));
        let mut total = T::zero();
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            total += *v;
        }
        for v in row.iter_mut() {
            *v = *v / total;
        }
    }
    out
}

pub fn row_log_softmax<T: Scalar>(x: &DenseMatrix<T>) -> DenseMatrix<T> {
    let mut out = x.clone();
    for i in 0..out.rows() {
        let row = out.row_mut(i);
        let max = row.iter().fold(T::neg_infinity(), |m, &v| m.max(v));
        let lse = max + row.iter().map(|&v| (v - max).exp()).sum::<T>().ln();
        for v in row.iter_mut() {
            *v = *v - lse;
        }
    }
    out
}
