//! Compressed sparse-row matrices and the kernels every other module builds on.
//!
//! Invariants maintained by every constructor and every operation:
//! column indices are strictly increasing within a row, all indices are in
//! bounds, and no explicitly stored zeros survive (so nnz-based complexity
//! metrics count real entries). Kernels use fixed per-row summation order
//! and are deterministic.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dense::DenseMatrix;
use crate::error::Error;
use crate::Result;

/// Largest dimension for which dense-mode norms (full SVD) are permitted.
pub const DENSE_NORM_CAP: usize = 2000;

const POWER_TOL: f64 = 1e-8;
const POWER_MAX_ITERS: usize = 1000;
const POWER_SEED: u64 = 0x5eed_0001;

/// Sorted, duplicate-free set of row or column indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IndexSet {
    indices: Vec<usize>,
    bound: usize,
}

impl IndexSet {
    /// Builds an index set, rejecting unsorted, duplicate, or out-of-range entries.
    pub fn new(indices: Vec<usize>, bound: usize) -> Result<Self> {
        for pair in indices.windows(2) {
            if pair[1] <= pair[0] {
                return Err(Error::InvalidParameter {
                    name: "indices",
                    details: format!("not strictly increasing at {} -> {}", pair[0], pair[1]),
                });
            }
        }
        if let Some(&last) = indices.last() {
            if last >= bound {
                return Err(Error::IndexOutOfRange { index: last, bound });
            }
        }
        Ok(Self { indices, bound })
    }

    /// The full set `0..n`.
    pub fn all(n: usize) -> Self {
        Self { indices: (0..n).collect(), bound: n }
    }

    /// The empty set over a dimension of size `bound`.
    pub fn empty(bound: usize) -> Self {
        Self { indices: Vec::new(), bound }
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn bound(&self) -> usize {
        self.bound
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.indices
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.indices.iter().copied()
    }

    /// Indices of `0..bound` not present in this set.
    pub fn complement(&self) -> Self {
        let mut mask = vec![false; self.bound];
        for &i in &self.indices {
            mask[i] = true;
        }
        let indices = (0..self.bound).filter(|&i| !mask[i]).collect();
        Self { indices, bound: self.bound }
    }

    /// Dense map from global index to local position, `usize::MAX` if absent.
    pub fn position_map(&self) -> Vec<usize> {
        let mut map = vec![usize::MAX; self.bound];
        for (local, &global) in self.indices.iter().enumerate() {
            map[global] = local;
        }
        map
    }
}

/// CSR sparse matrix with 64-bit real entries.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    nrows: usize,
    ncols: usize,
    row_offsets: Vec<usize>,
    col_indices: Vec<usize>,
    values: Vec<f64>,
}

impl SparseMatrix {
    /// Builds a matrix from raw CSR arrays, validating structure and
    /// dropping any explicitly stored zeros.
    pub fn new(
        nrows: usize,
        ncols: usize,
        row_offsets: Vec<usize>,
        col_indices: Vec<usize>,
        values: Vec<f64>,
    ) -> Result<Self> {
        if row_offsets.len() != nrows + 1 {
            return Err(Error::InvalidStructure(format!(
                "row_offsets has length {}, expected {}",
                row_offsets.len(),
                nrows + 1
            )));
        }
        if row_offsets[0] != 0 {
            return Err(Error::InvalidStructure("row_offsets[0] != 0".into()));
        }
        if col_indices.len() != values.len() {
            return Err(Error::InvalidStructure(format!(
                "col_indices ({}) and values ({}) differ in length",
                col_indices.len(),
                values.len()
            )));
        }
        if row_offsets[nrows] != col_indices.len() {
            return Err(Error::InvalidStructure(
                "row_offsets[nrows] does not match nnz".into(),
            ));
        }
        for row in 0..nrows {
            let (lo, hi) = (row_offsets[row], row_offsets[row + 1]);
            if lo > hi {
                return Err(Error::InvalidStructure(format!(
                    "row_offsets decreasing at row {row}"
                )));
            }
            let cols = &col_indices[lo..hi];
            for pair in cols.windows(2) {
                if pair[1] <= pair[0] {
                    return Err(Error::InvalidStructure(format!(
                        "columns not strictly increasing in row {row}"
                    )));
                }
            }
            if let Some(&last) = cols.last() {
                if last >= ncols {
                    return Err(Error::IndexOutOfRange { index: last, bound: ncols });
                }
            }
        }
        let mut m = Self { nrows, ncols, row_offsets, col_indices, values };
        m.drop_zeros();
        Ok(m)
    }

    /// Builds from (row, col, value) triplets; duplicates are summed and
    /// entries that cancel to zero are dropped.
    pub fn from_triplets(nrows: usize, ncols: usize, triplets: &[(usize, usize, f64)]) -> Result<Self> {
        for &(i, j, _) in triplets {
            if i >= nrows {
                return Err(Error::IndexOutOfRange { index: i, bound: nrows });
            }
            if j >= ncols {
                return Err(Error::IndexOutOfRange { index: j, bound: ncols });
            }
        }
        let mut sorted: Vec<(usize, usize, f64)> = triplets.to_vec();
        sorted.sort_by_key(|&(i, j, _)| (i, j));

        let mut row_offsets = vec![0usize; nrows + 1];
        let mut col_indices = Vec::with_capacity(sorted.len());
        let mut values = Vec::with_capacity(sorted.len());
        let mut iter = sorted.into_iter().peekable();
        while let Some((i, j, mut v)) = iter.next() {
            while let Some(&(ni, nj, nv)) = iter.peek() {
                if ni == i && nj == j {
                    v += nv;
                    iter.next();
                } else {
                    break;
                }
            }
            if v != 0.0 {
                row_offsets[i + 1] += 1;
                col_indices.push(j);
                values.push(v);
            }
        }
        for i in 0..nrows {
            row_offsets[i + 1] += row_offsets[i];
        }
        Ok(Self { nrows, ncols, row_offsets, col_indices, values })
    }

    /// The n-by-n identity.
    pub fn identity(n: usize) -> Self {
        Self {
            nrows: n,
            ncols: n,
            row_offsets: (0..=n).collect(),
            col_indices: (0..n).collect(),
            values: vec![1.0; n],
        }
    }

    /// All-zero matrix (empty pattern).
    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        Self {
            nrows,
            ncols,
            row_offsets: vec![0; nrows + 1],
            col_indices: Vec::new(),
            values: Vec::new(),
        }
    }

    /// Sparsifies a dense matrix, keeping exact nonzeros.
    pub fn from_dense(dense: &DenseMatrix) -> Self {
        let mut row_offsets = vec![0usize; dense.nrows() + 1];
        let mut col_indices = Vec::new();
        let mut values = Vec::new();
        for i in 0..dense.nrows() {
            for j in 0..dense.ncols() {
                let v = dense.get(i, j);
                if v != 0.0 {
                    col_indices.push(j);
                    values.push(v);
                    row_offsets[i + 1] += 1;
                }
            }
        }
        for i in 0..dense.nrows() {
            row_offsets[i + 1] += row_offsets[i];
        }
        Self {
            nrows: dense.nrows(),
            ncols: dense.ncols(),
            row_offsets,
            col_indices,
            values,
        }
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.col_indices.len()
    }

    pub fn row_offsets(&self) -> &[usize] {
        &self.row_offsets
    }

    pub fn col_indices(&self) -> &[usize] {
        &self.col_indices
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Column indices and values of row `i`.
    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let (lo, hi) = (self.row_offsets[i], self.row_offsets[i + 1]);
        (&self.col_indices[lo..hi], &self.values[lo..hi])
    }

    /// Entry (i, j), zero if not stored.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (cols, vals) = self.row(i);
        match cols.binary_search(&j) {
            Ok(pos) => vals[pos],
            Err(_) => 0.0,
        }
    }

    /// Diagonal entries, zero where absent. Rectangular matrices read up to
    /// the shorter dimension.
    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.nrows.min(self.ncols)).map(|i| self.get(i, i)).collect()
    }

    fn drop_zeros(&mut self) {
        if self.values.iter().all(|&v| v != 0.0) {
            return;
        }
        let mut row_offsets = vec![0usize; self.nrows + 1];
        let mut col_indices = Vec::with_capacity(self.col_indices.len());
        let mut values = Vec::with_capacity(self.values.len());
        for i in 0..self.nrows {
            let (cols, vals) = self.row(i);
            for (&c, &v) in cols.iter().zip(vals) {
                if v != 0.0 {
                    col_indices.push(c);
                    values.push(v);
                }
            }
            row_offsets[i + 1] = col_indices.len();
        }
        self.row_offsets = row_offsets;
        self.col_indices = col_indices;
        self.values = values;
    }

    /// Matrix-vector product `A x` with per-row left-to-right summation.
    pub fn spmv(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.ncols {
            return Err(Error::DimensionMismatch {
                op: "spmv",
                details: format!("A is {}x{}, x has length {}", self.nrows, self.ncols, x.len()),
            });
        }
        let mut y = vec![0.0; self.nrows];
        for i in 0..self.nrows {
            let (cols, vals) = self.row(i);
            let mut acc = 0.0;
            for (&c, &v) in cols.iter().zip(vals) {
                acc += v * x[c];
            }
            y[i] = acc;
        }
        Ok(y)
    }

    /// Transposed matrix-vector product `A^T x`.
    pub fn spmv_transpose(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.nrows {
            return Err(Error::DimensionMismatch {
                op: "spmv_transpose",
                details: format!("A is {}x{}, x has length {}", self.nrows, self.ncols, x.len()),
            });
        }
        let mut y = vec![0.0; self.ncols];
        for i in 0..self.nrows {
            let (cols, vals) = self.row(i);
            for (&c, &v) in cols.iter().zip(vals) {
                y[c] += v * x[i];
            }
        }
        Ok(y)
    }

    /// Sparse product `A B`, with entries that are exactly zero dropped.
    ///
    /// Row-at-a-time accumulation into a dense scratch row; output columns
    /// are sorted, so the result is deterministic.
    pub fn matmul(&self, other: &SparseMatrix) -> Result<SparseMatrix> {
        if self.ncols != other.nrows {
            return Err(Error::DimensionMismatch {
                op: "matmul",
                details: format!(
                    "left is {}x{}, right is {}x{}",
                    self.nrows, self.ncols, other.nrows, other.ncols
                ),
            });
        }
        let mut scratch = vec![0.0f64; other.ncols];
        let mut marker = vec![usize::MAX; other.ncols];
        let mut marked: Vec<usize> = Vec::new();
        let mut row_offsets = vec![0usize; self.nrows + 1];
        let mut col_indices = Vec::new();
        let mut values = Vec::new();

        for i in 0..self.nrows {
            let (cols, vals) = self.row(i);
            for (&k, &a_ik) in cols.iter().zip(vals) {
                let (bcols, bvals) = other.row(k);
                for (&j, &b_kj) in bcols.iter().zip(bvals) {
                    if marker[j] != i {
                        marker[j] = i;
                        scratch[j] = 0.0;
                        marked.push(j);
                    }
                    scratch[j] += a_ik * b_kj;
                }
            }
            marked.sort_unstable();
            for &j in &marked {
                let v = scratch[j];
                if v != 0.0 {
                    col_indices.push(j);
                    values.push(v);
                }
            }
            marked.clear();
            row_offsets[i + 1] = col_indices.len();
        }
        Ok(SparseMatrix {
            nrows: self.nrows,
            ncols: other.ncols,
            row_offsets,
            col_indices,
            values,
        })
    }

    /// Exact transpose.
    pub fn transpose(&self) -> SparseMatrix {
        let mut counts = vec![0usize; self.ncols + 1];
        for &c in &self.col_indices {
            counts[c + 1] += 1;
        }
        for j in 0..self.ncols {
            counts[j + 1] += counts[j];
        }
        let row_offsets = counts.clone();
        let mut col_indices = vec![0usize; self.nnz()];
        let mut values = vec![0.0f64; self.nnz()];
        let mut cursor = counts;
        for i in 0..self.nrows {
            let (cols, vals) = self.row(i);
            for (&c, &v) in cols.iter().zip(vals) {
                let dst = cursor[c];
                col_indices[dst] = i;
                values[dst] = v;
                cursor[c] += 1;
            }
        }
        SparseMatrix {
            nrows: self.ncols,
            ncols: self.nrows,
            row_offsets,
            col_indices,
            values,
        }
    }

    /// `self + alpha * other`, entries that cancel exactly are dropped.
    pub fn add_scaled(&self, alpha: f64, other: &SparseMatrix) -> Result<SparseMatrix> {
        if self.nrows != other.nrows || self.ncols != other.ncols {
            return Err(Error::DimensionMismatch {
                op: "add_scaled",
                details: format!(
                    "left is {}x{}, right is {}x{}",
                    self.nrows, self.ncols, other.nrows, other.ncols
                ),
            });
        }
        let mut row_offsets = vec![0usize; self.nrows + 1];
        let mut col_indices = Vec::new();
        let mut values = Vec::new();
        for i in 0..self.nrows {
            let (ac, av) = self.row(i);
            let (bc, bv) = other.row(i);
            let (mut p, mut q) = (0usize, 0usize);
            while p < ac.len() || q < bc.len() {
                let (col, v) = if q >= bc.len() || (p < ac.len() && ac[p] < bc[q]) {
                    let out = (ac[p], av[p]);
                    p += 1;
                    out
                } else if p >= ac.len() || bc[q] < ac[p] {
                    let out = (bc[q], alpha * bv[q]);
                    q += 1;
                    out
                } else {
                    let out = (ac[p], av[p] + alpha * bv[q]);
                    p += 1;
                    q += 1;
                    out
                };
                if v != 0.0 {
                    col_indices.push(col);
                    values.push(v);
                }
            }
            row_offsets[i + 1] = col_indices.len();
        }
        Ok(SparseMatrix {
            nrows: self.nrows,
            ncols: self.ncols,
            row_offsets,
            col_indices,
            values,
        })
    }

    /// Scalar multiple of the matrix.
    pub fn scaled(&self, alpha: f64) -> SparseMatrix {
        let mut out = self.clone();
        for v in &mut out.values {
            *v *= alpha;
        }
        out.drop_zeros();
        out
    }

    /// Submatrix in the induced local ordering of the given index sets.
    pub fn extract_submatrix(&self, rows: &IndexSet, cols: &IndexSet) -> Result<SparseMatrix> {
        if rows.bound() != self.nrows {
            return Err(Error::DimensionMismatch {
                op: "extract_submatrix",
                details: format!("row set bound {} != nrows {}", rows.bound(), self.nrows),
            });
        }
        if cols.bound() != self.ncols {
            return Err(Error::DimensionMismatch {
                op: "extract_submatrix",
                details: format!("column set bound {} != ncols {}", cols.bound(), self.ncols),
            });
        }
        let col_map = cols.position_map();
        let mut row_offsets = vec![0usize; rows.len() + 1];
        let mut col_indices = Vec::new();
        let mut values = Vec::new();
        for (local_row, global_row) in rows.iter().enumerate() {
            let (rcols, rvals) = self.row(global_row);
            for (&c, &v) in rcols.iter().zip(rvals) {
                let local = col_map[c];
                if local != usize::MAX {
                    col_indices.push(local);
                    values.push(v);
                }
            }
            row_offsets[local_row + 1] = col_indices.len();
        }
        Ok(SparseMatrix {
            nrows: rows.len(),
            ncols: cols.len(),
            row_offsets,
            col_indices,
            values,
        })
    }

    /// Scales rows by the inverse diagonal, returning `(D^{-1} A, diag)`.
    ///
    /// The caller is responsible for scaling right-hand sides by the same
    /// diagonal. Fails with the offending row on a zero or missing diagonal.
    pub fn diag_scale(&self) -> Result<(SparseMatrix, Vec<f64>)> {
        if self.nrows != self.ncols {
            return Err(Error::DimensionMismatch {
                op: "diag_scale",
                details: format!("matrix is {}x{}", self.nrows, self.ncols),
            });
        }
        let mut out = self.clone();
        let mut diag = vec![0.0; self.nrows];
        for i in 0..self.nrows {
            let d = self.get(i, i);
            if d == 0.0 {
                return Err(Error::BadDiagonal { row: i });
            }
            diag[i] = d;
            let (lo, hi) = (out.row_offsets[i], out.row_offsets[i + 1]);
            for v in &mut out.values[lo..hi] {
                *v /= d;
            }
        }
        Ok((out, diag))
    }

    /// Symmetric permutation `P A P^T` where `perm[new] = old`.
    pub fn permute_symmetric(&self, perm: &[usize]) -> Result<SparseMatrix> {
        if perm.len() != self.nrows || self.nrows != self.ncols {
            return Err(Error::DimensionMismatch {
                op: "permute_symmetric",
                details: format!(
                    "matrix is {}x{}, permutation has length {}",
                    self.nrows,
                    self.ncols,
                    perm.len()
                ),
            });
        }
        let mut inverse = vec![usize::MAX; self.nrows];
        for (new, &old) in perm.iter().enumerate() {
            if old >= self.nrows || inverse[old] != usize::MAX {
                return Err(Error::InvalidParameter {
                    name: "perm",
                    details: "not a permutation".into(),
                });
            }
            inverse[old] = new;
        }
        let mut triplets = Vec::with_capacity(self.nnz());
        for new_row in 0..self.nrows {
            let (cols, vals) = self.row(perm[new_row]);
            for (&c, &v) in cols.iter().zip(vals) {
                triplets.push((new_row, inverse[c], v));
            }
        }
        SparseMatrix::from_triplets(self.nrows, self.ncols, &triplets)
    }

    /// True if every stored entry satisfies `col <= row`.
    pub fn is_lower_triangular_pattern(&self) -> bool {
        (0..self.nrows).all(|i| self.row(i).0.iter().all(|&c| c <= i))
    }

    /// Dense copy.
    pub fn to_dense(&self) -> DenseMatrix {
        let mut out = DenseMatrix::zeros(self.nrows, self.ncols);
        for i in 0..self.nrows {
            let (cols, vals) = self.row(i);
            for (&c, &v) in cols.iter().zip(vals) {
                out.set(i, c, v);
            }
        }
        out
    }

    /// Spectral norm estimate.
    ///
    /// `Dense` mode computes the full SVD (max dimension [`DENSE_NORM_CAP`]);
    /// `Power` mode runs power iteration on `A^T A` with relative tolerance
    /// 1e-8, at most 1000 iterations, and a fixed seeded start vector.
    pub fn two_norm(&self, mode: NormMode) -> Result<f64> {
        if self.nnz() == 0 {
            return Ok(0.0);
        }
        match mode {
            NormMode::Dense => {
                let n = self.nrows.max(self.ncols);
                if n > DENSE_NORM_CAP {
                    return Err(Error::DenseCapExceeded { n, cap: DENSE_NORM_CAP });
                }
                Ok(self.to_dense().two_norm())
            }
            NormMode::Power => {
                let mut rng = ChaCha8Rng::seed_from_u64(POWER_SEED);
                let mut x: Vec<f64> = (0..self.ncols).map(|_| rng.gen_range(-1.0..1.0)).collect();
                normalize(&mut x);
                let mut sigma = 0.0f64;
                for _ in 0..POWER_MAX_ITERS {
                    let w = self.spmv(&x)?;
                    let new_sigma = norm2(&w);
                    if new_sigma == 0.0 {
                        return Ok(0.0);
                    }
                    let mut z = self.spmv_transpose(&w)?;
                    normalize(&mut z);
                    x = z;
                    if (new_sigma - sigma).abs() <= POWER_TOL * new_sigma {
                        return Ok(new_sigma);
                    }
                    sigma = new_sigma;
                }
                Err(Error::PowerIterationDiverged { iters: POWER_MAX_ITERS, estimate: sigma })
            }
        }
    }

    /// Spectral norm with dense mode when it fits under the cap.
    pub fn two_norm_auto(&self) -> Result<f64> {
        if self.nrows.max(self.ncols) <= DENSE_NORM_CAP {
            self.two_norm(NormMode::Dense)
        } else {
            self.two_norm(NormMode::Power)
        }
    }
}

/// Mode selector for [`SparseMatrix::two_norm`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NormMode {
    Dense,
    Power,
}

/// Euclidean norm.
pub fn norm2(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn normalize(x: &mut [f64]) {
    let n = norm2(x);
    if n > 0.0 {
        for v in x.iter_mut() {
            *v /= n;
        }
    }
}
