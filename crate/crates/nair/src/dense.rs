//! Small dense matrices: oracles, coarsest-level factorization, and the
//! dense side of the diagnostics layer.

use crate::error::Error;
use crate::Result;

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    nrows: usize,
    ncols: usize,
    values: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        Self { nrows, ncols, values: vec![0.0; nrows * ncols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut out = Self::zeros(n, n);
        for i in 0..n {
            out.set(i, i, 1.0);
        }
        out
    }

    pub fn from_fn(nrows: usize, ncols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut values = Vec::with_capacity(nrows * ncols);
        for i in 0..nrows {
            for j in 0..ncols {
                values.push(f(i, j));
            }
        }
        Self { nrows, ncols, values }
    }

    /// Builds from a row-major value slice.
    pub fn from_row_major(nrows: usize, ncols: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != nrows * ncols {
            return Err(Error::DimensionMismatch {
                op: "from_row_major",
                details: format!("{} values for a {}x{} matrix", values.len(), nrows, ncols),
            });
        }
        Ok(Self { nrows, ncols, values })
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.ncols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.values[i * self.ncols + j] = v;
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.ncols, "matvec dimension mismatch");
        let mut y = vec![0.0; self.nrows];
        for i in 0..self.nrows {
            let row = &self.values[i * self.ncols..(i + 1) * self.ncols];
            let mut acc = 0.0;
            for (v, xv) in row.iter().zip(x) {
                acc += v * xv;
            }
            y[i] = acc;
        }
        y
    }

    pub fn matmul(&self, other: &DenseMatrix) -> DenseMatrix {
        assert_eq!(self.ncols, other.nrows, "matmul dimension mismatch");
        let mut out = DenseMatrix::zeros(self.nrows, other.ncols);
        for i in 0..self.nrows {
            for k in 0..self.ncols {
                let a_ik = self.get(i, k);
                if a_ik == 0.0 {
                    continue;
                }
                let brow = &other.values[k * other.ncols..(k + 1) * other.ncols];
                let orow = &mut out.values[i * other.ncols..(i + 1) * other.ncols];
                for (o, b) in orow.iter_mut().zip(brow) {
                    *o += a_ik * b;
                }
            }
        }
        out
    }

    /// `self + alpha * other`.
    pub fn add_scaled(&self, alpha: f64, other: &DenseMatrix) -> DenseMatrix {
        assert_eq!((self.nrows, self.ncols), (other.nrows, other.ncols));
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a + alpha * b)
            .collect();
        DenseMatrix { nrows: self.nrows, ncols: self.ncols, values }
    }

    pub fn scaled(&self, alpha: f64) -> DenseMatrix {
        DenseMatrix {
            nrows: self.nrows,
            ncols: self.ncols,
            values: self.values.iter().map(|v| alpha * v).collect(),
        }
    }

    pub fn transpose(&self) -> DenseMatrix {
        DenseMatrix::from_fn(self.ncols, self.nrows, |i, j| self.get(j, i))
    }

    /// Horizontal concatenation `[self | right]`.
    pub fn hcat(&self, right: &DenseMatrix) -> DenseMatrix {
        assert_eq!(self.nrows, right.nrows, "hcat row mismatch");
        DenseMatrix::from_fn(self.nrows, self.ncols + right.ncols, |i, j| {
            if j < self.ncols {
                self.get(i, j)
            } else {
                right.get(i, j - self.ncols)
            }
        })
    }

    /// Vertical concatenation `[self; below]`.
    pub fn vcat(&self, below: &DenseMatrix) -> DenseMatrix {
        assert_eq!(self.ncols, below.ncols, "vcat column mismatch");
        DenseMatrix::from_fn(self.nrows + below.nrows, self.ncols, |i, j| {
            if i < self.nrows {
                self.get(i, j)
            } else {
                below.get(i - self.nrows, j)
            }
        })
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    /// Spectral norm via full singular value decomposition.
    pub fn two_norm(&self) -> f64 {
        if self.nrows == 0 || self.ncols == 0 {
            return 0.0;
        }
        let m = nalgebra::DMatrix::from_row_slice(self.nrows, self.ncols, &self.values);
        m.singular_values()[0]
    }

    /// `self^k` by binary powering; `k = 0` yields the identity.
    pub fn power(&self, k: usize) -> DenseMatrix {
        assert_eq!(self.nrows, self.ncols, "power of a non-square matrix");
        let mut result = DenseMatrix::identity(self.nrows);
        let mut base = self.clone();
        let mut exp = k;
        while exp > 0 {
            if exp & 1 == 1 {
                result = result.matmul(&base);
            }
            exp >>= 1;
            if exp > 0 {
                base = base.matmul(&base);
            }
        }
        result
    }

    /// LU factorization with partial pivoting; fails on an exactly zero pivot.
    pub fn lu(&self) -> Result<LuFactors> {
        if self.nrows != self.ncols {
            return Err(Error::DimensionMismatch {
                op: "lu",
                details: format!("matrix is {}x{}", self.nrows, self.ncols),
            });
        }
        let n = self.nrows;
        let mut lu = self.values.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        for k in 0..n {
            let mut pivot_row = k;
            let mut pivot_mag = lu[k * n + k].abs();
            for i in k + 1..n {
                let mag = lu[i * n + k].abs();
                if mag > pivot_mag {
                    pivot_mag = mag;
                    pivot_row = i;
                }
            }
            if pivot_mag == 0.0 {
                return Err(Error::Singular { step: k });
            }
            if pivot_row != k {
                for j in 0..n {
                    lu.swap(k * n + j, pivot_row * n + j);
                }
                perm.swap(k, pivot_row);
            }
            let pivot = lu[k * n + k];
            for i in k + 1..n {
                let factor = lu[i * n + k] / pivot;
                lu[i * n + k] = factor;
                if factor != 0.0 {
                    for j in k + 1..n {
                        lu[i * n + j] -= factor * lu[k * n + j];
                    }
                }
            }
        }
        Ok(LuFactors { n, lu, perm })
    }

    /// Dense inverse through the LU factorization.
    pub fn inverse(&self) -> Result<DenseMatrix> {
        let factors = self.lu()?;
        let n = self.nrows;
        let mut out = DenseMatrix::zeros(n, n);
        let mut e = vec![0.0; n];
        for j in 0..n {
            e[j] = 1.0;
            let col = factors.solve(&e);
            e[j] = 0.0;
            for i in 0..n {
                out.set(i, j, col[i]);
            }
        }
        Ok(out)
    }
}

/// LU factorization with a row permutation, ready for repeated solves.
#[derive(Debug, Clone)]
pub struct LuFactors {
    n: usize,
    lu: Vec<f64>,
    perm: Vec<usize>,
}

impl LuFactors {
    pub fn n(&self) -> usize {
        self.n
    }

    /// Solves `A x = b` using the stored factorization.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        assert_eq!(b.len(), self.n, "solve dimension mismatch");
        let n = self.n;
        let mut x: Vec<f64> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 1..n {
            let mut acc = x[i];
            for j in 0..i {
                acc -= self.lu[i * n + j] * x[j];
            }
            x[i] = acc;
        }
        for i in (0..n).rev() {
            let mut acc = x[i];
            for j in i + 1..n {
                acc -= self.lu[i * n + j] * x[j];
            }
            x[i] = acc / self.lu[i * n + i];
        }
        x
    }
}

/// One-shot dense solve `A x = b` with partial pivoting.
pub fn dense_lu_solve(a: &DenseMatrix, b: &[f64]) -> Result<Vec<f64>> {
    if b.len() != a.nrows() {
        return Err(Error::DimensionMismatch {
            op: "dense_lu_solve",
            details: format!("A is {}x{}, b has length {}", a.nrows(), a.ncols(), b.len()),
        });
    }
    Ok(a.lu()?.solve(b))
}
