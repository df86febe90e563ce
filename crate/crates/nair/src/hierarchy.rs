//! Multilevel setup: per-level diagonal scaling, strength, CF-splitting,
//! transfer operators, the Petrov-Galerkin coarse operator, filtering, and
//! the coarsest-level dense factorization.

use std::time::Instant;

use serde::Serialize;

use crate::dense::{DenseMatrix, LuFactors};
use crate::error::Error;
use crate::graph::{rs_split, strength, CfSplitting};
use crate::sparse::SparseMatrix;
use crate::transfer::{build_nair_restriction, build_onepoint_interp, NeumannOptions, TransferPair};
use crate::Result;

/// Cycle flavor executed by the solver.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum CycleType {
    V,
    F,
}

/// Solver and setup parameters.
///
/// `f_relax_sweeps` defaults to one more sweep than the Neumann degree when
/// left unset.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct SolverOptions {
    /// Neumann truncation degree `k` for the restriction.
    pub neumann_degree: usize,
    /// Strength drop tolerance used when building the restriction.
    pub restrict_strength: f64,
    /// Strength threshold for the CF-splitting.
    pub split_strength: f64,
    /// Coarse-operator filtering tolerance (relative to the row diagonal).
    pub filter_tol: f64,
    /// Coarsest-level size: systems at or below this are solved directly.
    pub max_coarse: usize,
    /// Maximum number of levels, counting the coarsest direct solve.
    pub max_levels: usize,
    /// Jacobi F-relaxation sweeps per cycle; `None` means `neumann_degree + 1`.
    pub f_relax_sweeps: Option<usize>,
    pub cycle: CycleType,
    /// Optional Jacobi C-relaxation after F-relaxation.
    pub enable_c_relax: bool,
    /// C-relaxation sweeps when enabled.
    pub c_relax_sweeps: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            neumann_degree: 1,
            restrict_strength: 0.025,
            split_strength: 0.25,
            filter_tol: 1e-3,
            max_coarse: 40,
            max_levels: 30,
            f_relax_sweeps: None,
            cycle: CycleType::V,
            enable_c_relax: false,
            c_relax_sweeps: 1,
        }
    }
}

impl SolverOptions {
    /// Effective F-relaxation sweep count.
    pub fn sweeps(&self) -> usize {
        self.f_relax_sweeps.unwrap_or(self.neumann_degree + 1)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.restrict_strength) {
            return Err(Error::InvalidParameter {
                name: "restrict_strength",
                details: format!("{} not in [0, 1)", self.restrict_strength),
            });
        }
        if !(0.0..1.0).contains(&self.split_strength) {
            return Err(Error::InvalidParameter {
                name: "split_strength",
                details: format!("{} not in [0, 1)", self.split_strength),
            });
        }
        if self.filter_tol < 0.0 {
            return Err(Error::InvalidParameter {
                name: "filter_tol",
                details: format!("{} < 0", self.filter_tol),
            });
        }
        if self.max_coarse < 1 {
            return Err(Error::InvalidParameter { name: "max_coarse", details: "must be >= 1".into() });
        }
        if self.max_levels < 1 {
            return Err(Error::InvalidParameter { name: "max_levels", details: "must be >= 1".into() });
        }
        Ok(())
    }
}

/// One level of the hierarchy.
#[derive(Debug, Clone)]
pub struct Level {
    /// Row-scaled operator with unit diagonal.
    pub a_scaled: SparseMatrix,
    /// Original diagonal of this level's operator.
    pub diag: Vec<f64>,
    pub split: CfSplitting,
    pub transfer: TransferPair,
    pub a_ff: SparseMatrix,
    pub a_fc: SparseMatrix,
    pub a_cf: SparseMatrix,
    pub a_cc: SparseMatrix,
    /// Filtered coarse operator (the next level's matrix before its own scaling).
    pub k_filtered: SparseMatrix,
    /// F-rows that had no C-neighbor for interpolation.
    pub c_starved: Vec<usize>,
}

impl Level {
    pub fn n(&self) -> usize {
        self.a_scaled.nrows()
    }

    pub fn n_c(&self) -> usize {
        self.split.n_c()
    }
}

/// Coarsest-level direct solver.
#[derive(Debug, Clone)]
pub struct CoarseSolve {
    matrix: DenseMatrix,
    lu: LuFactors,
    nnz: usize,
}

impl CoarseSolve {
    pub fn n(&self) -> usize {
        self.lu.n()
    }

    pub fn nnz(&self) -> usize {
        self.nnz
    }

    pub fn matrix(&self) -> &DenseMatrix {
        &self.matrix
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        self.lu.solve(b)
    }
}

/// The assembled multilevel hierarchy.
#[derive(Debug, Clone)]
pub struct Hierarchy {
    pub levels: Vec<Level>,
    pub coarsest: CoarseSolve,
    pub options: SolverOptions,
    /// Set when a level coarsened to `n_c = n` and setup fell back to a
    /// direct solve at that size.
    pub stalled: bool,
    pub setup_seconds: f64,
}

impl Hierarchy {
    /// Total number of levels including the coarsest direct solve.
    pub fn num_levels(&self) -> usize {
        self.levels.len() + 1
    }

    /// nnz of the finest operator.
    pub fn fine_nnz(&self) -> usize {
        self.levels
            .first()
            .map(|l| l.a_scaled.nnz())
            .unwrap_or_else(|| self.coarsest.nnz())
    }

    pub fn fine_n(&self) -> usize {
        self.levels.first().map(Level::n).unwrap_or_else(|| self.coarsest.n())
    }
}

/// Builds the hierarchy: per level, scale to unit diagonal, mark strong
/// connections, split, build the Neumann restriction and one-point
/// interpolation, form `K = R A P`, filter it, and recurse; the coarsest
/// operator is factorized densely.
pub fn setup(a: &SparseMatrix, opts: SolverOptions) -> Result<Hierarchy> {
    opts.validate()?;
    if a.nrows() != a.ncols() {
        return Err(Error::DimensionMismatch {
            op: "setup",
            details: format!("matrix is {}x{}", a.nrows(), a.ncols()),
        });
    }
    let start = Instant::now();
    let neumann = NeumannOptions {
        degree: opts.neumann_degree,
        strength_threshold: opts.restrict_strength,
    };

    let mut levels: Vec<Level> = Vec::new();
    let mut current = a.clone();
    let mut stalled = false;

    loop {
        let n = current.nrows();
        if n <= opts.max_coarse || levels.len() + 1 >= opts.max_levels {
            break;
        }
        let (a_scaled, diag) = current.diag_scale()?;
        let s = strength(&a_scaled, opts.split_strength)?;
        let split = rs_split(&s);
        if split.n_c() == 0 {
            // nothing to coarsen to (e.g. a diagonal matrix): solve directly
            break;
        }
        if split.n_c() == n {
            stalled = true;
            break;
        }
        let restriction = build_nair_restriction(&a_scaled, &split, &neumann)?;
        let interp = build_onepoint_interp(&a_scaled, &s, &split)?;
        let transfer = TransferPair {
            r: restriction.r,
            p: interp.p,
            z: restriction.z,
            w: interp.w,
            delta: restriction.delta,
        };
        let coarse = transfer.r.matmul(&a_scaled.matmul(&transfer.p)?)?;
        let k_filtered = filter(&coarse, opts.filter_tol)?;

        let f = split.f_points();
        let c = split.c_points();
        let level = Level {
            a_ff: a_scaled.extract_submatrix(&f, &f)?,
            a_fc: a_scaled.extract_submatrix(&f, &c)?,
            a_cf: a_scaled.extract_submatrix(&c, &f)?,
            a_cc: a_scaled.extract_submatrix(&c, &c)?,
            a_scaled,
            diag,
            split,
            transfer,
            k_filtered: k_filtered.clone(),
            c_starved: interp.c_starved,
        };
        levels.push(level);
        current = k_filtered;
    }

    let coarsest_dense = current.to_dense();
    let coarsest = CoarseSolve {
        lu: coarsest_dense.lu()?,
        matrix: coarsest_dense,
        nnz: current.nnz(),
    };
    Ok(Hierarchy {
        levels,
        coarsest,
        options: opts,
        stalled,
        setup_seconds: start.elapsed().as_secs_f64(),
    })
}

/// Drops off-diagonal entries with `|a_ij| <= tol * |a_ii|`. The diagonal is
/// never dropped and kept entries are unchanged (no lumping).
pub fn filter(a: &SparseMatrix, tol: f64) -> Result<SparseMatrix> {
    if tol < 0.0 {
        return Err(Error::InvalidParameter { name: "tol", details: format!("{tol} < 0") });
    }
    let n = a.nrows();
    let mut triplets = Vec::with_capacity(a.nnz());
    for i in 0..n {
        let d = a.get(i, i);
        if d == 0.0 {
            return Err(Error::BadDiagonal { row: i });
        }
        let cut = tol * d.abs();
        let (cols, vals) = a.row(i);
        for (&c, &v) in cols.iter().zip(vals) {
            if c == i || v.abs() > cut {
                triplets.push((i, c, v));
            }
        }
    }
    SparseMatrix::from_triplets(n, a.ncols(), &triplets)
}

/// Work accounting for one cycle visit of a level, in matrix entries touched.
fn level_visit_work(level: &Level, opts: &SolverOptions) -> usize {
    let relax = opts.sweeps() * (level.a_ff.nnz() + level.a_fc.nnz());
    let c_relax = if opts.enable_c_relax {
        opts.c_relax_sweeps * (level.a_cf.nnz() + level.a_cc.nnz())
    } else {
        0
    };
    relax + c_relax + level.a_scaled.nnz() + level.transfer.r.nnz() + level.transfer.p.nnz()
}

/// Operator complexity and cycle complexity in work units.
///
/// OC sums `nnz(A_l) / nnz(A_0)` over all levels including the coarsest.
/// CC counts the operations of one cycle: per level visit, the F-relaxation
/// sweeps (`nnz(A_ff) + nnz(A_fc)` each), the residual (`nnz(A_l)`),
/// restriction and interpolation (`nnz(R)`, `nnz(P)`), divided by
/// `nnz(A_0)`; an F-cycle counts its extra visits of coarse levels. The
/// coarsest direct solve is not charged.
pub fn complexity(h: &Hierarchy) -> (f64, f64) {
    let fine_nnz = h.fine_nnz() as f64;
    if fine_nnz == 0.0 {
        return (1.0, 0.0);
    }
    let mut oc = 0.0;
    for level in &h.levels {
        oc += level.a_scaled.nnz() as f64;
    }
    oc += h.coarsest.nnz() as f64;
    oc /= fine_nnz;

    let mut cc = 0.0;
    for (idx, level) in h.levels.iter().enumerate() {
        let visits = match h.options.cycle {
            CycleType::V => 1,
            CycleType::F => idx + 1,
        };
        cc += (visits * level_visit_work(level, &h.options)) as f64;
    }
    cc /= fine_nnz;
    (oc, cc)
}

/// Scaling by the inverse of the uniform block diagonal.
#[derive(Debug, Clone)]
pub struct BlockScaling {
    block: usize,
    /// Inverse diagonal blocks, row-major, concatenated.
    inv: Vec<f64>,
}

impl BlockScaling {
    pub fn block(&self) -> usize {
        self.block
    }

    /// Applies the inverse block diagonal to a vector.
    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        let b = self.block;
        let mut out = vec![0.0; v.len()];
        for (blk, chunk) in v.chunks(b).enumerate() {
            let inv = &self.inv[blk * b * b..(blk + 1) * b * b];
            for r in 0..b {
                let mut acc = 0.0;
                for (s, &x) in chunk.iter().enumerate() {
                    acc += inv[r * b + s] * x;
                }
                out[blk * b + r] = acc;
            }
        }
        out
    }
}

/// Pre-scales a system by the inverse of its `block x block` diagonal
/// blocks, so the scalar pipeline can run on block-structured matrices.
/// Right-hand sides must be scaled with the returned [`BlockScaling`].
pub fn block_diag_scale(a: &SparseMatrix, block: usize) -> Result<(SparseMatrix, BlockScaling)> {
    let n = a.nrows();
    if block == 0 || n % block != 0 || a.ncols() != n {
        return Err(Error::InvalidParameter {
            name: "block",
            details: format!("block {block} does not evenly divide {n}"),
        });
    }
    let nblocks = n / block;
    let mut inv = Vec::with_capacity(n * block);
    for blk in 0..nblocks {
        let base = blk * block;
        let d = DenseMatrix::from_fn(block, block, |r, c| a.get(base + r, base + c));
        let d_inv = d.inverse().map_err(|e| match e {
            Error::Singular { step } => Error::Singular { step: base + step },
            other => other,
        })?;
        inv.extend_from_slice(d_inv.values());
    }
    let scaling = BlockScaling { block, inv };

    // B^{-1} A: each output row is a linear combination of the rows in its block.
    let mut triplets = Vec::with_capacity(a.nnz());
    let mut scratch = vec![0.0f64; n];
    let mut marker = vec![usize::MAX; n];
    let mut marked: Vec<usize> = Vec::new();
    for i in 0..n {
        let blk = i / block;
        let base = blk * block;
        let r = i - base;
        for s in 0..block {
            let coeff = scaling.inv[blk * block * block + r * block + s];
            if coeff == 0.0 {
                continue;
            }
            let (cols, vals) = a.row(base + s);
            for (&c, &v) in cols.iter().zip(vals) {
                if marker[c] != i {
                    marker[c] = i;
                    scratch[c] = 0.0;
                    marked.push(c);
                }
                scratch[c] += coeff * v;
            }
        }
        marked.sort_unstable();
        for &c in &marked {
            if scratch[c] != 0.0 {
                triplets.push((i, c, scratch[c]));
            }
        }
        marked.clear();
    }
    let scaled = SparseMatrix::from_triplets(n, n, &triplets)?;
    Ok((scaled, scaling))
}
