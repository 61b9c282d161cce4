//! Dense and compressed-sparse storage, the products the factorization code
//! needs, and the two evaluation metrics (relative error and sparsity).
//!
//! Factors are always dense `Array2<f64>`; only the data matrix may be sparse.

use ndarray::{Array1, Array2, ArrayBase, ArrayView1, ArrayView2, Axis, Data, Ix2, Zip};

use crate::error::{Error, Result};
use crate::opcount;

/// Compressed sparse row matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    rows: usize,
    cols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Builds a CSR matrix from raw arrays, checking that column indices are
    /// strictly increasing within each row and in range.
    pub fn new(
        rows: usize,
        cols: usize,
        indptr: Vec<usize>,
        indices: Vec<usize>,
        values: Vec<f64>,
    ) -> Result<Self> {
        if indptr.len() != rows + 1 || indptr[0] != 0 {
            return Err(Error::InvalidMatrix("row pointer length or origin".into()));
        }
        if indices.len() != values.len() || *indptr.last().unwrap() != indices.len() {
            return Err(Error::InvalidMatrix("index/value length mismatch".into()));
        }
        for i in 0..rows {
            let (lo, hi) = (indptr[i], indptr[i + 1]);
            if lo > hi {
                return Err(Error::InvalidMatrix(format!("row pointer decreases at row {i}")));
            }
            let row = &indices[lo..hi];
            if row.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::InvalidMatrix(format!(
                    "column indices not strictly increasing in row {i}"
                )));
            }
            if row.last().is_some_and(|&j| j >= cols) {
                return Err(Error::InvalidMatrix(format!("column index out of range in row {i}")));
            }
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidMatrix("non-finite value".into()));
        }
        Ok(CsrMatrix {
            rows,
            cols,
            indptr,
            indices,
            values,
        })
    }

    /// Assembles from `(row, col, value)` triplets in any order. Duplicate
    /// coordinates are summed.
    pub fn from_triplets(rows: usize, cols: usize, triplets: &[(usize, usize, f64)]) -> Result<Self> {
        let mut sorted: Vec<(usize, usize, f64)> = triplets.to_vec();
        for &(i, j, _) in &sorted {
            if i >= rows || j >= cols {
                return Err(Error::InvalidMatrix(format!(
                    "entry ({i}, {j}) outside {rows}x{cols}"
                )));
            }
        }
        sorted.sort_by_key(|t| (t.0, t.1));
        let mut indptr = vec![0usize; rows + 1];
        let mut indices = Vec::with_capacity(sorted.len());
        let mut values: Vec<f64> = Vec::with_capacity(sorted.len());
        let mut last: Option<(usize, usize)> = None;
        for (i, j, v) in sorted {
            if last == Some((i, j)) {
                *values.last_mut().unwrap() += v;
                continue;
            }
            indptr[i + 1] += 1;
            indices.push(j);
            values.push(v);
            last = Some((i, j));
        }
        for i in 0..rows {
            indptr[i + 1] += indptr[i];
        }
        CsrMatrix::new(rows, cols, indptr, indices, values)
    }

    /// Keeps every nonzero of a dense matrix.
    pub fn from_dense<S: Data<Elem = f64>>(a: &ArrayBase<S, Ix2>) -> Result<Self> {
        let mut triplets = Vec::new();
        for ((i, j), &v) in a.indexed_iter() {
            if v != 0.0 {
                triplets.push((i, j, v));
            }
        }
        CsrMatrix::from_triplets(a.nrows(), a.ncols(), &triplets)
    }

    pub fn nrows(&self) -> usize {
        self.rows
    }

    pub fn ncols(&self) -> usize {
        self.cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn indptr(&self) -> &[usize] {
        &self.indptr
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Column indices and values of row `i`.
    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let (lo, hi) = (self.indptr[i], self.indptr[i + 1]);
        (&self.indices[lo..hi], &self.values[lo..hi])
    }

    /// Iterates stored entries in row-major order.
    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.rows).flat_map(move |i| {
            let (idx, val) = self.row(i);
            idx.iter().zip(val).map(move |(&j, &v)| (i, j, v))
        })
    }

    pub fn to_dense(&self) -> Array2<f64> {
        let mut out = Array2::zeros((self.rows, self.cols));
        for (i, j, v) in self.triplets() {
            out[[i, j]] = v;
        }
        out
    }
}

/// The factorization target: dense row-major or CSR.
#[derive(Debug, Clone, PartialEq)]
pub enum DataMatrix {
    Dense(Array2<f64>),
    Sparse(CsrMatrix),
}

impl From<CsrMatrix> for DataMatrix {
    fn from(c: CsrMatrix) -> Self {
        DataMatrix::Sparse(c)
    }
}

impl DataMatrix {
    /// Wraps a dense array after checking every entry is finite.
    pub fn dense(a: Array2<f64>) -> Result<Self> {
        if a.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidMatrix("non-finite value".into()));
        }
        Ok(DataMatrix::Dense(a.as_standard_layout().into_owned()))
    }

    /// Checks the NMF precondition `X >= 0`.
    pub fn ensure_nonnegative(&self) -> Result<()> {
        let bad = match self {
            DataMatrix::Dense(a) => a.iter().any(|&v| v < 0.0),
            DataMatrix::Sparse(c) => c.values.iter().any(|&v| v < 0.0),
        };
        if bad {
            Err(Error::InvalidMatrix("negative entry in NMF input".into()))
        } else {
            Ok(())
        }
    }

    pub fn nrows(&self) -> usize {
        match self {
            DataMatrix::Dense(a) => a.nrows(),
            DataMatrix::Sparse(c) => c.rows,
        }
    }

    pub fn ncols(&self) -> usize {
        match self {
            DataMatrix::Dense(a) => a.ncols(),
            DataMatrix::Sparse(c) => c.cols,
        }
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.nrows(), self.ncols())
    }

    /// Stored entries: `m*n` when dense.
    pub fn nnz(&self) -> usize {
        match self {
            DataMatrix::Dense(a) => a.len(),
            DataMatrix::Sparse(c) => c.nnz(),
        }
    }

    pub fn is_sparse(&self) -> bool {
        matches!(self, DataMatrix::Sparse(_))
    }

    pub fn to_dense(&self) -> Array2<f64> {
        match self {
            DataMatrix::Dense(a) => a.clone(),
            DataMatrix::Sparse(c) => c.to_dense(),
        }
    }

    pub fn frobenius_norm(&self) -> f64 {
        match self {
            DataMatrix::Dense(a) => frobenius_norm(a),
            DataMatrix::Sparse(c) => c.values.iter().map(|v| v * v).sum::<f64>().sqrt(),
        }
    }

    /// `out = X v`.
    pub fn matvec(&self, v: ArrayView1<f64>) -> Array1<f64> {
        debug_assert_eq!(v.len(), self.ncols());
        match self {
            DataMatrix::Dense(a) => a.dot(&v),
            DataMatrix::Sparse(c) => {
                let v = v.as_standard_layout();
                let v = v.as_slice().unwrap();
                (0..c.rows)
                    .map(|i| {
                        let (idx, val) = c.row(i);
                        idx.iter().zip(val).map(|(&j, &x)| x * v[j]).sum()
                    })
                    .collect()
            }
        }
    }

    /// `out = X^T u`.
    pub fn rmatvec(&self, u: ArrayView1<f64>) -> Array1<f64> {
        debug_assert_eq!(u.len(), self.nrows());
        match self {
            DataMatrix::Dense(a) => {
                // Row-wise axpy keeps the access pattern contiguous.
                let mut out = Array1::zeros(a.ncols());
                for (row, &ui) in a.rows().into_iter().zip(u.iter()) {
                    if ui != 0.0 {
                        out.scaled_add(ui, &row);
                    }
                }
                out
            }
            DataMatrix::Sparse(c) => {
                let mut out = vec![0.0; c.cols];
                for (i, &ui) in u.iter().enumerate() {
                    if ui == 0.0 {
                        continue;
                    }
                    let (idx, val) = c.row(i);
                    for (&j, &x) in idx.iter().zip(val) {
                        out[j] += x * ui;
                    }
                }
                Array1::from(out)
            }
        }
    }

    /// `X D` for a dense `n x k` matrix `D`.
    pub fn mul_dense(&self, d: ArrayView2<f64>) -> Result<Array2<f64>> {
        if d.nrows() != self.ncols() {
            return Err(Error::mismatch("X*D", self.shape(), d.dim()));
        }
        Ok(match self {
            DataMatrix::Dense(a) => a.dot(&d),
            DataMatrix::Sparse(c) => {
                let d = d.as_standard_layout();
                let mut out = Array2::zeros((c.rows, d.ncols()));
                for (i, mut orow) in out.axis_iter_mut(Axis(0)).enumerate() {
                    let (idx, val) = c.row(i);
                    for (&j, &x) in idx.iter().zip(val) {
                        orow.scaled_add(x, &d.row(j));
                    }
                }
                out
            }
        })
    }

    /// `X^T D` for a dense `m x k` matrix `D`.
    pub fn t_mul_dense(&self, d: ArrayView2<f64>) -> Result<Array2<f64>> {
        if d.nrows() != self.nrows() {
            return Err(Error::mismatch("X^T*D", self.shape(), d.dim()));
        }
        Ok(match self {
            DataMatrix::Dense(a) => a.t().dot(&d),
            DataMatrix::Sparse(c) => {
                let d = d.as_standard_layout();
                let mut out = Array2::zeros((c.cols, d.ncols()));
                for i in 0..c.rows {
                    let (idx, val) = c.row(i);
                    let drow = d.row(i);
                    for (&j, &x) in idx.iter().zip(val) {
                        out.row_mut(j).scaled_add(x, &drow);
                    }
                }
                out
            }
        })
    }

    /// `D X` for a dense `k x m` matrix `D`.
    pub fn left_mul_dense(&self, d: ArrayView2<f64>) -> Result<Array2<f64>> {
        if d.ncols() != self.nrows() {
            return Err(Error::mismatch("D*X", d.dim(), self.shape()));
        }
        Ok(match self {
            DataMatrix::Dense(a) => d.dot(a),
            DataMatrix::Sparse(_) => self.t_mul_dense(d.t())?.reversed_axes(),
        })
    }

    /// `<X, W H>` without forming `W H` when `X` is sparse.
    pub(crate) fn inner_with_product(&self, w: ArrayView2<f64>, h: ArrayView2<f64>) -> f64 {
        match self {
            DataMatrix::Dense(a) => {
                let mut acc = 0.0;
                for (i, xrow) in a.axis_iter(Axis(0)).enumerate() {
                    let whrow = w.row(i).dot(&h);
                    acc += xrow.dot(&whrow);
                }
                acc
            }
            DataMatrix::Sparse(c) => {
                let ht = h.t().as_standard_layout().into_owned();
                let mut acc = 0.0;
                for i in 0..c.rows {
                    let (idx, val) = c.row(i);
                    let wrow = w.row(i);
                    for (&j, &x) in idx.iter().zip(val) {
                        acc += x * wrow.dot(&ht.row(j));
                    }
                }
                acc
            }
        }
    }
}

/// Nonnegative NMF candidate `(W, H)` with `W: m x r` and `H: r x n`.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorPair {
    w: Array2<f64>,
    h: Array2<f64>,
}

impl FactorPair {
    pub fn new(w: Array2<f64>, h: Array2<f64>) -> Result<Self> {
        if w.ncols() != h.nrows() {
            return Err(Error::mismatch("FactorPair", w.dim(), h.dim()));
        }
        let r = w.ncols();
        if r == 0 || r > w.nrows().min(h.ncols()) {
            return Err(Error::RankTooLarge {
                rank: r,
                max: w.nrows().min(h.ncols()),
            });
        }
        if w.iter().chain(h.iter()).any(|&v| !(v >= 0.0 && v.is_finite())) {
            return Err(Error::InvalidMatrix("factor entries must be finite and >= 0".into()));
        }
        Ok(FactorPair { w, h })
    }

    pub(crate) fn from_parts(w: Array2<f64>, h: Array2<f64>) -> Self {
        debug_assert_eq!(w.ncols(), h.nrows());
        FactorPair { w, h }
    }

    pub fn w(&self) -> &Array2<f64> {
        &self.w
    }

    pub fn h(&self) -> &Array2<f64> {
        &self.h
    }

    pub fn rank(&self) -> usize {
        self.w.ncols()
    }

    pub fn into_parts(self) -> (Array2<f64>, Array2<f64>) {
        (self.w, self.h)
    }

    /// Materializes `W H`.
    pub fn product(&self) -> Array2<f64> {
        self.w.dot(&self.h)
    }

    /// Proportion of exact zeros over all entries of `W` and `H` together.
    pub fn sparsity(&self) -> f64 {
        let zeros = count_zeros(&self.w) + count_zeros(&self.h);
        zeros as f64 / (self.w.len() + self.h.len()) as f64
    }
}

/// An `m x n` matrix held as `Y Z` with `Y: m x p` and `Z: p x n`.
#[derive(Debug, Clone, PartialEq)]
pub struct LowRankMatrix {
    y: Array2<f64>,
    z: Array2<f64>,
}

impl LowRankMatrix {
    pub fn new(y: Array2<f64>, z: Array2<f64>) -> Result<Self> {
        if y.ncols() != z.nrows() {
            return Err(Error::mismatch("LowRankMatrix", y.dim(), z.dim()));
        }
        if y.iter().chain(z.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidMatrix("non-finite low-rank factor".into()));
        }
        Ok(LowRankMatrix { y, z })
    }

    pub fn y(&self) -> &Array2<f64> {
        &self.y
    }

    pub fn z(&self) -> &Array2<f64> {
        &self.z
    }

    pub fn rank(&self) -> usize {
        self.y.ncols()
    }

    pub fn nrows(&self) -> usize {
        self.y.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.z.ncols()
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.nrows(), self.ncols())
    }

    /// `||Y Z||_F^2 = <Y^T Y, Z Z^T>`.
    pub fn squared_norm(&self) -> f64 {
        let (m, n, p) = (self.nrows(), self.ncols(), self.rank());
        opcount::add((m + n) * p * p);
        inner(&gram(&self.y), &mat_mat_t(&self.z, &self.z))
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.squared_norm().max(0.0).sqrt()
    }

    /// Materializes `Y Z`; meant for tests and small inputs.
    pub fn to_dense(&self) -> Array2<f64> {
        self.y.dot(&self.z)
    }

    /// `(Y Z) D` computed as `Y (Z D)`.
    pub fn mul_dense(&self, d: ArrayView2<f64>) -> Result<Array2<f64>> {
        if d.nrows() != self.ncols() {
            return Err(Error::mismatch("L*D", self.shape(), d.dim()));
        }
        let (m, n, p) = (self.nrows(), self.ncols(), self.rank());
        opcount::add((n + m) * p * d.ncols());
        Ok(self.y.dot(&self.z.dot(&d)))
    }

    /// `D (Y Z)` computed as `(D Y) Z`.
    pub fn left_mul_dense(&self, d: ArrayView2<f64>) -> Result<Array2<f64>> {
        if d.ncols() != self.nrows() {
            return Err(Error::mismatch("D*L", d.dim(), self.shape()));
        }
        let (m, n, p) = (self.nrows(), self.ncols(), self.rank());
        opcount::add((m + n) * p * d.nrows());
        Ok(d.dot(&self.y).dot(&self.z))
    }
}

/// `sqrt(sum M_ij^2)`, summed in row-major order.
pub fn frobenius_norm<S: Data<Elem = f64>>(m: &ArrayBase<S, Ix2>) -> f64 {
    m.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Frobenius inner product `sum A_ij B_ij`.
pub fn inner<S1, S2>(a: &ArrayBase<S1, Ix2>, b: &ArrayBase<S2, Ix2>) -> f64
where
    S1: Data<Elem = f64>,
    S2: Data<Elem = f64>,
{
    debug_assert_eq!(a.dim(), b.dim());
    Zip::from(a).and(b).fold(0.0, |acc, &x, &y| acc + x * y)
}

/// `||X - W H||_F / ||X||_F`.
///
/// Dense inputs are evaluated row by row without forming `W H`. Sparse
/// inputs use `||X||^2 - 2<X, WH> + <W^T W, H H^T>`, falling back to the
/// row-wise residual when the result is small enough for cancellation to
/// matter.
pub fn relative_error(x: &DataMatrix, f: &FactorPair) -> Result<f64> {
    let (m, n) = x.shape();
    if f.w.nrows() != m || f.h.ncols() != n {
        return Err(Error::mismatch("relative_error", x.shape(), (f.w.nrows(), f.h.ncols())));
    }
    let xnorm = x.frobenius_norm();
    if xnorm == 0.0 {
        return Err(Error::ZeroInputNorm);
    }
    Ok(residual_norm(x, f.w.view(), f.h.view()) / xnorm)
}

/// `||X - W H||_F` with the same evaluation strategy as [`relative_error`].
pub(crate) fn residual_norm(x: &DataMatrix, w: ArrayView2<f64>, h: ArrayView2<f64>) -> f64 {
    match x {
        DataMatrix::Dense(a) => dense_residual(a.view(), w, h),
        DataMatrix::Sparse(c) => {
            let xx: f64 = c.values.iter().map(|v| v * v).sum();
            let cross = x.inner_with_product(w, h);
            let wh = inner(&gram(&w), &mat_mat_t(&h, &h));
            let sq = xx - 2.0 * cross + wh;
            if sq > 1e-6 * xx {
                sq.sqrt()
            } else {
                sparse_residual(c, w, h)
            }
        }
    }
}

fn dense_residual(a: ArrayView2<f64>, w: ArrayView2<f64>, h: ArrayView2<f64>) -> f64 {
    let mut acc = 0.0;
    for (i, xrow) in a.axis_iter(Axis(0)).enumerate() {
        let whrow = w.row(i).dot(&h);
        for (&x, &y) in xrow.iter().zip(&whrow) {
            acc += (x - y) * (x - y);
        }
    }
    acc.sqrt()
}

fn sparse_residual(c: &CsrMatrix, w: ArrayView2<f64>, h: ArrayView2<f64>) -> f64 {
    let mut acc = 0.0;
    for i in 0..c.rows {
        let mut row = w.row(i).dot(&h);
        let (idx, val) = c.row(i);
        for (&j, &x) in idx.iter().zip(val) {
            row[j] -= x;
        }
        acc += row.iter().map(|v| v * v).sum::<f64>();
    }
    acc.sqrt()
}

fn count_zeros<S: Data<Elem = f64>>(m: &ArrayBase<S, Ix2>) -> usize {
    // -0.0 == 0.0 under IEEE comparison
    m.iter().filter(|&&v| v == 0.0).count()
}

/// Proportion of entries exactly equal to zero.
pub fn sparsity<S: Data<Elem = f64>>(m: &ArrayBase<S, Ix2>) -> Result<f64> {
    if m.is_empty() {
        return Err(Error::EmptyMatrix);
    }
    Ok(count_zeros(m) as f64 / m.len() as f64)
}

/// Splits `v` into `(max(0, v), max(0, -v))`.
pub fn split_parts<S: Data<Elem = f64>>(
    v: &ArrayBase<S, ndarray::Ix1>,
) -> (Array1<f64>, Array1<f64>) {
    let pos = v.mapv(|x| if x > 0.0 { x } else { 0.0 });
    let neg = v.mapv(|x| if x < 0.0 { -x } else { 0.0 });
    (pos, neg)
}

/// `M^T M`.
pub fn gram<S: Data<Elem = f64>>(m: &ArrayBase<S, Ix2>) -> Array2<f64> {
    m.t().dot(m)
}

/// `A B` with a dimension check.
pub fn matmul<S1, S2>(a: &ArrayBase<S1, Ix2>, b: &ArrayBase<S2, Ix2>) -> Result<Array2<f64>>
where
    S1: Data<Elem = f64>,
    S2: Data<Elem = f64>,
{
    if a.ncols() != b.nrows() {
        return Err(Error::mismatch("A*B", a.dim(), b.dim()));
    }
    Ok(a.dot(b))
}

/// `A^T B` with a dimension check.
pub fn mat_t_mat<S1, S2>(a: &ArrayBase<S1, Ix2>, b: &ArrayBase<S2, Ix2>) -> Result<Array2<f64>>
where
    S1: Data<Elem = f64>,
    S2: Data<Elem = f64>,
{
    if a.nrows() != b.nrows() {
        return Err(Error::mismatch("A^T*B", a.dim(), b.dim()));
    }
    Ok(a.t().dot(b))
}

/// `A B^T`. Panics on mismatched inner dimension; see [`matmul`] for the
/// checked form.
pub fn mat_mat_t<S1, S2>(a: &ArrayBase<S1, Ix2>, b: &ArrayBase<S2, Ix2>) -> Array2<f64>
where
    S1: Data<Elem = f64>,
    S2: Data<Elem = f64>,
{
    a.dot(&b.t())
}
