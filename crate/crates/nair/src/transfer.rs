//! Construction of the transfer operators: Neumann approximate ideal
//! restriction, one-point interpolation, effective interpolation, and the
//! dense ideal-operator oracles.
//!
//! All builders work on the diagonally scaled matrix (unit diagonal) and on
//! a fixed CF-splitting. Block layout follows `R = [Z  I]`, `P = [W; I]` in
//! the F-then-C local orderings induced by the splitting; the assembled `R`
//! and `P` live in the global index space.

use crate::dense::DenseMatrix;
use crate::error::Error;
use crate::graph::{CfSplitting, StrengthGraph};
use crate::sparse::SparseMatrix;
use crate::Result;

/// Degree and strength threshold of the truncated Neumann expansion.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NeumannOptions {
    /// Truncation degree `k >= 0`.
    pub degree: usize,
    /// Connection drop tolerance in `[0, 1)`; the expansion is performed on
    /// entries with `|a_ij| >= threshold * max_{l != i} |a_il|` only.
    pub strength_threshold: f64,
}

impl Default for NeumannOptions {
    fn default() -> Self {
        Self { degree: 1, strength_threshold: 0.025 }
    }
}

impl NeumannOptions {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.strength_threshold) {
            return Err(Error::InvalidParameter {
                name: "strength_threshold",
                details: format!("{} not in [0, 1)", self.strength_threshold),
            });
        }
        Ok(())
    }
}

/// Restriction and interpolation for one level, with their off-identity
/// blocks and the approximate inverse used to build the restriction.
#[derive(Debug, Clone)]
pub struct TransferPair {
    /// Restriction `[Z  I]` in global ordering, `n_c x n`.
    pub r: SparseMatrix,
    /// Interpolation `[W; I]` in global ordering, `n x n_c`.
    pub p: SparseMatrix,
    /// Restriction F-block, `n_c x n_f`.
    pub z: SparseMatrix,
    /// Interpolation F-block, `n_f x n_c`.
    pub w: SparseMatrix,
    /// Approximate `A_ff^{-1}` (the truncated Neumann sum), `n_f x n_f`.
    pub delta: SparseMatrix,
}

impl TransferPair {
    /// Assembles global `R` and `P` from the off-identity blocks.
    pub fn new(split: &CfSplitting, z: SparseMatrix, w: SparseMatrix, delta: SparseMatrix) -> Result<Self> {
        let r = assemble_restriction(&z, split)?;
        let p = assemble_interp(&w, split)?;
        Ok(Self { r, p, z, w, delta })
    }
}

/// Lifts `Z` (`n_c x n_f`, local orderings) to the global restriction
/// `R = [Z  I]` (`n_c x n`).
pub fn assemble_restriction(z: &SparseMatrix, split: &CfSplitting) -> Result<SparseMatrix> {
    if z.nrows() != split.n_c() || z.ncols() != split.n_f() {
        return Err(Error::DimensionMismatch {
            op: "assemble_restriction",
            details: format!(
                "Z is {}x{}, splitting has n_c={} n_f={}",
                z.nrows(),
                z.ncols(),
                split.n_c(),
                split.n_f()
            ),
        });
    }
    let f_points = split.f_points();
    let f_global = f_points.as_slice();
    let c_points = split.c_points();
    let c_global = c_points.as_slice();
    let mut triplets = Vec::with_capacity(z.nnz() + split.n_c());
    for c in 0..split.n_c() {
        let (cols, vals) = z.row(c);
        for (&f_local, &v) in cols.iter().zip(vals) {
            triplets.push((c, f_global[f_local], v));
        }
        triplets.push((c, c_global[c], 1.0));
    }
    SparseMatrix::from_triplets(split.n_c(), split.n(), &triplets)
}

/// Lifts `W` (`n_f x n_c`, local orderings) to the global interpolation
/// `P = [W; I]` (`n x n_c`).
pub fn assemble_interp(w: &SparseMatrix, split: &CfSplitting) -> Result<SparseMatrix> {
    if w.nrows() != split.n_f() || w.ncols() != split.n_c() {
        return Err(Error::DimensionMismatch {
            op: "assemble_interp",
            details: format!(
                "W is {}x{}, splitting has n_f={} n_c={}",
                w.nrows(),
                w.ncols(),
                split.n_f(),
                split.n_c()
            ),
        });
    }
    let mut triplets = Vec::with_capacity(w.nnz() + split.n_c());
    for i in 0..split.n() {
        if split.is_c(i) {
            triplets.push((i, split.c_index(i), 1.0));
        } else {
            let (cols, vals) = w.row(split.f_index(i));
            for (&c, &v) in cols.iter().zip(vals) {
                triplets.push((i, c, v));
            }
        }
    }
    SparseMatrix::from_triplets(split.n(), split.n_c(), &triplets)
}

/// Checks that every diagonal entry equals one to within 1e-14.
fn require_unit_diagonal(a: &SparseMatrix) -> Result<()> {
    for i in 0..a.nrows().min(a.ncols()) {
        let d = a.get(i, i);
        if (d - 1.0).abs() > 1e-14 {
            return Err(Error::NonUnitDiagonal { row: i, value: d });
        }
    }
    Ok(())
}

/// Strength-filtered copy of `a`: keeps the diagonal and off-diagonal
/// entries with `|a_ij| >= phi * max_{l != i} |a_il|`.
fn strength_filter(a: &SparseMatrix, phi: f64) -> Result<SparseMatrix> {
    if phi == 0.0 {
        return Ok(a.clone());
    }
    let n = a.nrows();
    let mut triplets = Vec::with_capacity(a.nnz());
    for i in 0..n {
        let (cols, vals) = a.row(i);
        let max_off = cols
            .iter()
            .zip(vals)
            .filter(|(&c, _)| c != i)
            .fold(0.0f64, |m, (_, &v)| m.max(v.abs()));
        let cut = phi * max_off;
        for (&c, &v) in cols.iter().zip(vals) {
            if c == i || v.abs() >= cut {
                triplets.push((i, c, v));
            }
        }
    }
    SparseMatrix::from_triplets(n, n, &triplets)
}

/// Truncated Neumann approximation to `A_ff^{-1}`.
///
/// Returns `Delta^(k) = sum_{i=0..k} N^i` where `N = I - A~_ff` and `A~_ff`
/// is `A_ff` with off-diagonal entries failing the strength test dropped.
/// With `phi = 0` and triangular `A_ff` of nilpotency degree `d_f`, the
/// result at `k = d_f` is the exact inverse. Requires a unit diagonal.
pub fn neumann_approx_inverse(a_ff: &SparseMatrix, opts: &NeumannOptions) -> Result<SparseMatrix> {
    opts.validate()?;
    if a_ff.nrows() != a_ff.ncols() {
        return Err(Error::DimensionMismatch {
            op: "neumann_approx_inverse",
            details: format!("matrix is {}x{}", a_ff.nrows(), a_ff.ncols()),
        });
    }
    require_unit_diagonal(a_ff)?;
    let n = a_ff.nrows();
    let filtered = strength_filter(a_ff, opts.strength_threshold)?;
    let base = SparseMatrix::identity(n).add_scaled(-1.0, &filtered)?;

    // Horner form: Delta <- I + N * Delta, repeated `degree` times.
    let identity = SparseMatrix::identity(n);
    let mut delta = SparseMatrix::identity(n);
    for _ in 0..opts.degree {
        delta = identity.add_scaled(1.0, &base.matmul(&delta)?)?;
    }
    Ok(delta)
}

/// Output of [`build_nair_restriction`].
#[derive(Debug, Clone)]
pub struct RestrictionBuild {
    /// `Z = -A_cf * Delta^(k)`, `n_c x n_f`.
    pub z: SparseMatrix,
    /// Global `R = [Z  I]`, `n_c x n`.
    pub r: SparseMatrix,
    /// The truncated Neumann sum used for `Z`.
    pub delta: SparseMatrix,
}

/// Builds the Neumann approximate ideal restriction `R = [-A_cf Delta^(k)  I]`
/// from the scaled matrix and a splitting.
pub fn build_nair_restriction(
    a: &SparseMatrix,
    split: &CfSplitting,
    opts: &NeumannOptions,
) -> Result<RestrictionBuild> {
    let f = split.f_points();
    let c = split.c_points();
    let a_ff = a.extract_submatrix(&f, &f)?;
    let a_cf = a.extract_submatrix(&c, &f)?;
    let delta = neumann_approx_inverse(&a_ff, opts)?;
    let z = a_cf.matmul(&delta)?.scaled(-1.0);
    let r = assemble_restriction(&z, split)?;
    Ok(RestrictionBuild { z, r, delta })
}

/// Output of [`build_onepoint_interp`].
#[derive(Debug, Clone)]
pub struct InterpBuild {
    /// `W`, `n_f x n_c`, one unit entry per interpolated F-row.
    pub w: SparseMatrix,
    /// Global `P = [W; I]`, `n x n_c`.
    pub p: SparseMatrix,
    /// F-rows with no C-neighbor at all; their `W` rows are empty.
    pub c_starved: Vec<usize>,
}

/// One-point interpolation: each F-point takes the value of the C-point `j`
/// maximizing `|a_ij|` among its strong C-neighbors (ties toward the lowest
/// column index). F-rows with no strong C-neighbor fall back to the
/// largest-magnitude C-neighbor in `A`; F-rows with no C-neighbor at all are
/// left empty and reported.
pub fn build_onepoint_interp(
    a: &SparseMatrix,
    s: &StrengthGraph,
    split: &CfSplitting,
) -> Result<InterpBuild> {
    let n = split.n();
    let mut triplets = Vec::with_capacity(split.n_f());
    let mut c_starved = Vec::new();
    for i in 0..n {
        if split.is_c(i) {
            continue;
        }
        let pick_max = |cols: &[usize]| -> Option<usize> {
            let mut best: Option<(usize, f64)> = None;
            for &j in cols {
                if !split.is_c(j) || j == i {
                    continue;
                }
                let mag = a.get(i, j).abs();
                // strictly greater keeps the lowest index on ties
                if mag > 0.0 && best.map_or(true, |(_, bm)| mag > bm) {
                    best = Some((j, mag));
                }
            }
            best.map(|(j, _)| j)
        };
        let choice = pick_max(s.row(i)).or_else(|| pick_max(a.row(i).0));
        match choice {
            Some(j) => triplets.push((split.f_index(i), split.c_index(j), 1.0)),
            None => c_starved.push(i),
        }
    }
    let w = SparseMatrix::from_triplets(split.n_f(), split.n_c(), &triplets)?;
    let p = assemble_interp(&w, split)?;
    Ok(InterpBuild { w, p, c_starved })
}

/// Dense ideal operators and the Schur complement, in global ordering.
#[derive(Debug, Clone)]
pub struct IdealOperators {
    /// `R_ideal = [-A_cf A_ff^{-1}  I]`, `n_c x n`.
    pub r_ideal: DenseMatrix,
    /// `P_ideal = [-A_ff^{-1} A_fc; I]`, `n x n_c`.
    pub p_ideal: DenseMatrix,
    /// Schur complement `K_A = A_cc - A_cf A_ff^{-1} A_fc`, `n_c x n_c`.
    pub schur: DenseMatrix,
}

/// Size cap for the dense ideal-operator oracle.
pub const IDEAL_CAP: usize = 2000;

/// Computes the exact ideal restriction, ideal interpolation, and Schur
/// complement through a dense factorization of `A_ff`.
pub fn ideal_operators(a: &SparseMatrix, split: &CfSplitting) -> Result<IdealOperators> {
    let n = a.nrows();
    if n > IDEAL_CAP {
        return Err(Error::DenseCapExceeded { n, cap: IDEAL_CAP });
    }
    let f = split.f_points();
    let c = split.c_points();
    let a_ff = a.extract_submatrix(&f, &f)?.to_dense();
    let a_fc = a.extract_submatrix(&f, &c)?.to_dense();
    let a_cf = a.extract_submatrix(&c, &f)?.to_dense();
    let a_cc = a.extract_submatrix(&c, &c)?.to_dense();
    let a_ff_inv = a_ff.inverse()?;

    let minus_acf_affinv = a_cf.matmul(&a_ff_inv).scaled(-1.0);
    let minus_affinv_afc = a_ff_inv.matmul(&a_fc).scaled(-1.0);
    let schur = a_cc.add_scaled(1.0, &a_cf.matmul(&minus_affinv_afc));

    let f_global = f.as_slice();
    let c_global = c.as_slice();
    let mut r_ideal = DenseMatrix::zeros(split.n_c(), n);
    let mut p_ideal = DenseMatrix::zeros(n, split.n_c());
    for ci in 0..split.n_c() {
        for (fj, &fg) in f_global.iter().enumerate() {
            r_ideal.set(ci, fg, minus_acf_affinv.get(ci, fj));
            p_ideal.set(fg, ci, minus_affinv_afc.get(fj, ci));
        }
        r_ideal.set(ci, c_global[ci], 1.0);
        p_ideal.set(c_global[ci], ci, 1.0);
    }
    Ok(IdealOperators { r_ideal, p_ideal, schur })
}

/// Effective interpolation `W^ = (I - Delta_F A_ff) W - Delta_F A_fc`.
///
/// With `Delta_F = A_ff^{-1}` this is the ideal interpolation F-block.
pub fn effective_interp(
    w: &SparseMatrix,
    delta_f: &SparseMatrix,
    a_ff: &SparseMatrix,
    a_fc: &SparseMatrix,
) -> Result<SparseMatrix> {
    let n_f = a_ff.nrows();
    let i_minus = SparseMatrix::identity(n_f).add_scaled(-1.0, &delta_f.matmul(a_ff)?)?;
    i_minus.matmul(w)?.add_scaled(-1.0, &delta_f.matmul(a_fc)?)
}

/// Nilpotency degree of the strictly lower-triangular part: the longest
/// dependency path in the sub-diagonal digraph. `N^(d+1) = 0` for the
/// returned `d`.
pub fn nilpotency_degree(lower_triangular: &SparseMatrix) -> usize {
    let n = lower_triangular.nrows();
    let mut longest = vec![0usize; n];
    let mut d = 0;
    for i in 0..n {
        let (cols, _) = lower_triangular.row(i);
        for &j in cols {
            if j < i {
                longest[i] = longest[i].max(longest[j] + 1);
            }
        }
        d = d.max(longest[i]);
    }
    d
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{rs_split, strength, Mark};
    use crate::problems::{gen_random_triangular, gen_transport, TransportSpec};
    use crate::sparse::{IndexSet, NormMode};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn split_from_marks(marks: Vec<Mark>) -> CfSplitting {
        CfSplitting::from_marks(marks)
    }

    fn default_pipeline(a: &SparseMatrix) -> (CfSplitting, StrengthGraph) {
        let s = strength(a, 0.25).unwrap();
        (rs_split(&s), s)
    }

    #[test]
    fn neumann_2x2_triangular_exact_at_degree_one() {
        let a_ff = SparseMatrix::from_triplets(2, 2, &[(0, 0, 1.0), (1, 0, -0.5), (1, 1, 1.0)]).unwrap();
        let opts = NeumannOptions { degree: 1, strength_threshold: 0.0 };
        let delta = neumann_approx_inverse(&a_ff, &opts).unwrap();
        assert_eq!(delta.get(0, 0), 1.0);
        assert_eq!(delta.get(1, 0), 0.5);
        assert_eq!(delta.get(1, 1), 1.0);
        assert_eq!(delta.nnz(), 3);
    }

    #[test]
    fn neumann_degree_zero_is_identity() {
        let a_ff = SparseMatrix::from_triplets(3, 3, &[(0, 0, 1.0), (1, 1, 1.0), (2, 2, 1.0), (2, 0, -0.7)])
            .unwrap();
        let opts = NeumannOptions { degree: 0, strength_threshold: 0.0 };
        assert_eq!(neumann_approx_inverse(&a_ff, &opts).unwrap(), SparseMatrix::identity(3));
    }

    #[test]
    fn neumann_rejects_non_unit_diagonal() {
        let a_ff = SparseMatrix::from_triplets(2, 2, &[(0, 0, 2.0), (1, 1, 1.0)]).unwrap();
        let opts = NeumannOptions::default();
        assert!(matches!(
            neumann_approx_inverse(&a_ff, &opts),
            Err(Error::NonUnitDiagonal { row: 0, .. })
        ));
    }

    #[test]
    fn neumann_matches_dense_inverse_at_full_degree() {
        let p = gen_random_triangular(30, 0.4, 0.3, 11).unwrap();
        let d_f = nilpotency_degree(&p.a);
        let opts = NeumannOptions { degree: d_f, strength_threshold: 0.0 };
        let delta = neumann_approx_inverse(&p.a, &opts).unwrap();
        let oracle = p.a.to_dense().inverse().unwrap();
        let err = delta.to_dense().add_scaled(-1.0, &oracle).max_abs();
        assert!(err <= 1e-10, "max entry error {err}");
    }

    #[test]
    fn neumann_error_identity() {
        // I - Delta^(k) A_ff = N^(k+1) entrywise, for k below the nilpotency degree
        let p = gen_random_triangular(25, 0.5, 0.2, 3).unwrap();
        let n = 25;
        let base = SparseMatrix::identity(n).add_scaled(-1.0, &p.a).unwrap();
        for k in 0..4usize {
            let opts = NeumannOptions { degree: k, strength_threshold: 0.0 };
            let delta = neumann_approx_inverse(&p.a, &opts).unwrap();
            let lhs = SparseMatrix::identity(n)
                .add_scaled(-1.0, &delta.matmul(&p.a).unwrap())
                .unwrap();
            let mut rhs = SparseMatrix::identity(n);
            for _ in 0..k + 1 {
                rhs = base.matmul(&rhs).unwrap();
            }
            let err = lhs.to_dense().add_scaled(-1.0, &rhs.to_dense()).max_abs();
            assert!(err <= 1e-12, "k = {k}: entrywise error {err}");
        }
    }

    #[test]
    fn nair_restriction_zero_and_degree_zero_blocks() {
        // A with A_cf = 0: Z = 0 and R = [0 | I]
        let a = SparseMatrix::from_triplets(
            3,
            3,
            &[(0, 0, 1.0), (1, 1, 1.0), (2, 2, 1.0), (0, 2, -0.4)],
        )
        .unwrap();
        // F = {0, 1}, C = {2}; row 2 (the C row) has no F entries
        let split = split_from_marks(vec![Mark::F, Mark::F, Mark::C]);
        let opts = NeumannOptions { degree: 1, strength_threshold: 0.0 };
        let built = build_nair_restriction(&a, &split, &opts).unwrap();
        assert_eq!(built.z.nnz(), 0);
        assert_eq!(built.r.nnz(), 1);
        assert_eq!(built.r.get(0, 2), 1.0);

        // degree 0: Z = -A_cf
        let a2 = SparseMatrix::from_triplets(
            3,
            3,
            &[(0, 0, 1.0), (1, 1, 1.0), (2, 2, 1.0), (2, 0, -0.4), (2, 1, 0.2)],
        )
        .unwrap();
        let split2 = split_from_marks(vec![Mark::F, Mark::F, Mark::C]);
        let opts0 = NeumannOptions { degree: 0, strength_threshold: 0.0 };
        let built = build_nair_restriction(&a2, &split2, &opts0).unwrap();
        assert_eq!(built.z.get(0, 0), 0.4);
        assert_eq!(built.z.get(0, 1), -0.2);
    }

    fn delta_r_norm(a: &SparseMatrix, split: &CfSplitting, k: usize) -> f64 {
        let f = split.f_points();
        let c = split.c_points();
        let a_ff = a.extract_submatrix(&f, &f).unwrap();
        let a_cf = a.extract_submatrix(&c, &f).unwrap();
        let opts = NeumannOptions { degree: k, strength_threshold: 0.0 };
        let built = build_nair_restriction(a, split, &opts).unwrap();
        built
            .z
            .matmul(&a_ff)
            .unwrap()
            .add_scaled(1.0, &a_cf)
            .unwrap()
            .two_norm(NormMode::Dense)
            .unwrap()
    }

    #[test]
    fn nair_restriction_accuracy_improves_with_degree() {
        // Random triangular instances have F-F couplings after the first-pass
        // splitting, so the Neumann degree genuinely matters.
        let p = gen_random_triangular(300, 0.03, 0.2, 1).unwrap();
        let (split, _) = default_pipeline(&p.a);
        let norms: Vec<f64> = (0..3).map(|k| delta_r_norm(&p.a, &split, k)).collect();
        assert!(
            norms[1] < norms[0] && norms[2] < norms[1],
            "delta_R must shrink with k: {norms:?}"
        );

        // On the 2D upwind transport problem the first-pass splitting
        // isolates F-points completely (A_ff = I), so delta_R is already
        // exact; the invariant is nonincrease.
        let t = gen_transport(&TransportSpec::inset_2d(16, 3.0 * std::f64::consts::PI / 16.0)).unwrap();
        let (scaled, _) = t.a.diag_scale().unwrap();
        let (tsplit, _) = default_pipeline(&scaled);
        let tnorms: Vec<f64> = (0..3).map(|k| delta_r_norm(&scaled, &tsplit, k)).collect();
        for pair in tnorms.windows(2) {
            assert!(pair[1] <= pair[0] + 1e-14, "nonincreasing violated: {tnorms:?}");
        }
    }

    #[test]
    fn onepoint_interp_picks_strongest_c_neighbor() {
        // F-row 0 with C-neighbors of values -0.3 (col 1) and -0.1 (col 2)
        let a = SparseMatrix::from_triplets(
            3,
            3,
            &[(0, 0, 1.0), (0, 1, -0.3), (0, 2, -0.1), (1, 1, 1.0), (2, 2, 1.0)],
        )
        .unwrap();
        let split = split_from_marks(vec![Mark::F, Mark::C, Mark::C]);
        let s = strength(&a, 0.0).unwrap();
        let built = build_onepoint_interp(&a, &s, &split).unwrap();
        assert_eq!(built.w.nnz(), 1);
        assert_eq!(built.w.get(0, 0), 1.0); // coarse index 0 = global column 1
        assert!(built.c_starved.is_empty());
    }

    #[test]
    fn onepoint_interp_single_c_column_of_ones() {
        let a = SparseMatrix::from_triplets(
            3,
            3,
            &[(0, 0, 1.0), (1, 1, 1.0), (2, 2, 1.0), (1, 0, -0.5), (2, 0, -0.5)],
        )
        .unwrap();
        let split = split_from_marks(vec![Mark::C, Mark::F, Mark::F]);
        let s = strength(&a, 0.25).unwrap();
        let built = build_onepoint_interp(&a, &s, &split).unwrap();
        assert_eq!(built.w.get(0, 0), 1.0);
        assert_eq!(built.w.get(1, 0), 1.0);
        assert_eq!(built.p.get(0, 0), 1.0); // identity block at the C row
    }

    #[test]
    fn onepoint_interp_tie_breaks_to_lower_index() {
        let a = SparseMatrix::from_triplets(
            4,
            4,
            &[(0, 0, 1.0), (0, 1, -0.3), (0, 3, 0.3), (1, 1, 1.0), (2, 2, 1.0), (3, 3, 1.0)],
        )
        .unwrap();
        let split = split_from_marks(vec![Mark::F, Mark::C, Mark::C, Mark::C]);
        let s = strength(&a, 0.0).unwrap();
        let built = build_onepoint_interp(&a, &s, &split).unwrap();
        assert_eq!(built.w.get(0, 0), 1.0, "tie must resolve to global column 1");
        assert_eq!(built.w.nnz(), 1);
    }

    #[test]
    fn onepoint_interp_falls_back_to_weak_c_neighbor() {
        // F-row 0: strong neighbor is the F-point 1; its only C-neighbors
        // (columns 2 and 3) are weak, so the fallback picks the larger one.
        let a = SparseMatrix::from_triplets(
            4,
            4,
            &[
                (0, 0, 1.0),
                (0, 1, -0.9),
                (0, 2, -0.01),
                (0, 3, -0.02),
                (1, 1, 1.0),
                (1, 2, -0.5),
                (2, 2, 1.0),
                (3, 3, 1.0),
            ],
        )
        .unwrap();
        let split = split_from_marks(vec![Mark::F, Mark::F, Mark::C, Mark::C]);
        let s = strength(&a, 0.25).unwrap();
        assert_eq!(s.row(0), &[1], "only the F-F connection is strong");
        let built = build_onepoint_interp(&a, &s, &split).unwrap();
        assert!(built.c_starved.is_empty());
        assert_eq!(built.w.get(0, 1), 1.0, "must pick the weak C column 3 (|a| = 0.02)");
        assert_eq!(built.w.get(1, 0), 1.0);
        assert_eq!(built.w.nnz(), 2);
    }

    #[test]
    fn onepoint_interp_records_starved_rows() {
        // F-row 1 has no C-neighbor at all
        let a = SparseMatrix::from_triplets(
            3,
            3,
            &[(0, 0, 1.0), (1, 1, 1.0), (2, 2, 1.0), (0, 2, -0.5)],
        )
        .unwrap();
        let split = split_from_marks(vec![Mark::F, Mark::F, Mark::C]);
        let s = strength(&a, 0.25).unwrap();
        let built = build_onepoint_interp(&a, &s, &split).unwrap();
        assert_eq!(built.c_starved, vec![1]);
        assert_eq!(built.w.row(1).0.len(), 0);
    }

    #[test]
    fn ideal_operators_trivial_blocks() {
        // A_ff = I: R_ideal F-block is -A_cf
        let a = SparseMatrix::from_triplets(
            3,
            3,
            &[(0, 0, 1.0), (1, 1, 1.0), (2, 2, 1.0), (2, 0, 0.7), (2, 1, -0.2)],
        )
        .unwrap();
        let split = split_from_marks(vec![Mark::F, Mark::F, Mark::C]);
        let ops = ideal_operators(&a, &split).unwrap();
        assert_eq!(ops.r_ideal.get(0, 0), -0.7);
        assert_eq!(ops.r_ideal.get(0, 1), 0.2);
        assert_eq!(ops.r_ideal.get(0, 2), 1.0);

        // block-diagonal A: K_A = A_cc
        let a = SparseMatrix::from_triplets(
            4,
            4,
            &[(0, 0, 1.0), (1, 1, 1.0), (2, 2, 2.0), (2, 3, 0.5), (3, 3, 3.0)],
        )
        .unwrap();
        let split = split_from_marks(vec![Mark::F, Mark::F, Mark::C, Mark::C]);
        let ops = ideal_operators(&a, &split).unwrap();
        assert_eq!(ops.schur.get(0, 0), 2.0);
        assert_eq!(ops.schur.get(0, 1), 0.5);
        assert_eq!(ops.schur.get(1, 1), 3.0);
    }

    #[test]
    fn rap_with_ideal_restriction_equals_schur_for_any_w() {
        let mut rng = ChaCha8Rng::seed_from_u64(40);
        let n = 40;
        let mut triplets = Vec::new();
        for i in 0..n {
            triplets.push((i, i, 4.0));
            for j in 0..n {
                if i != j && rng.gen::<f64>() < 0.2 {
                    triplets.push((i, j, rng.gen_range(-1.0..1.0)));
                }
            }
        }
        let a = SparseMatrix::from_triplets(n, n, &triplets).unwrap();
        let marks: Vec<Mark> = (0..n).map(|i| if i % 3 == 0 { Mark::C } else { Mark::F }).collect();
        let split = split_from_marks(marks);
        let ops = ideal_operators(&a, &split).unwrap();

        // arbitrary dense W lifted into a global P
        let w = DenseMatrix::from_fn(split.n_f(), split.n_c(), |i, j| {
            ((i * 31 + j * 7) % 5) as f64 * 0.21 - 0.4
        });
        let w_sparse = SparseMatrix::from_dense(&w);
        let p = assemble_interp(&w_sparse, &split).unwrap();
        let rap = ops.r_ideal.matmul(&a.to_dense()).matmul(&p.to_dense());
        let err = rap.add_scaled(-1.0, &ops.schur).max_abs();
        assert!(err <= 1e-10, "RAP vs Schur complement max error {err}");
    }

    #[test]
    fn effective_interp_cases() {
        let p = gen_random_triangular(20, 0.4, 0.4, 9).unwrap();
        let (split, s) = default_pipeline(&p.a);
        let f = split.f_points();
        let c = split.c_points();
        let a_ff = p.a.extract_submatrix(&f, &f).unwrap();
        let a_fc = p.a.extract_submatrix(&f, &c).unwrap();
        let w = build_onepoint_interp(&p.a, &s, &split).unwrap().w;

        // Delta_F = A_ff^{-1} (dense oracle): effective interpolation is ideal
        let a_ff_inv = SparseMatrix::from_dense(&a_ff.to_dense().inverse().unwrap());
        let what = effective_interp(&w, &a_ff_inv, &a_ff, &a_fc).unwrap();
        let ideal = a_ff_inv.matmul(&a_fc).unwrap().scaled(-1.0);
        let err = what.to_dense().add_scaled(-1.0, &ideal.to_dense()).max_abs();
        assert!(err <= 1e-10, "effective vs ideal error {err}");

        // W = 0: reduces to -Delta_F A_fc
        let zero_w = SparseMatrix::zeros(split.n_f(), split.n_c());
        let what = effective_interp(&zero_w, &a_ff_inv, &a_ff, &a_fc).unwrap();
        let err = what.to_dense().add_scaled(-1.0, &ideal.to_dense()).max_abs();
        assert!(err <= 1e-10);

        // Delta_F = 0: reduces to W
        let zero_d = SparseMatrix::zeros(split.n_f(), split.n_f());
        let what = effective_interp(&w, &zero_d, &a_ff, &a_fc).unwrap();
        assert_eq!(what, w);
    }

    #[test]
    fn ideal_restriction_zeroes_c_point_error() {
        // Lemma check: with R_ideal and arbitrary W, coarse-grid correction
        // leaves zero error at C-points.
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        for trial in 0..5 {
            let p = gen_random_triangular(60, 0.3, 0.3, 100 + trial).unwrap();
            let (split, s) = default_pipeline(&p.a);
            if split.n_c() == 0 {
                continue;
            }
            let ops = ideal_operators(&p.a, &split).unwrap();
            let w = build_onepoint_interp(&p.a, &s, &split).unwrap();
            let a_dense = p.a.to_dense();
            let p_dense = w.p.to_dense();
            let k = ops.r_ideal.matmul(&a_dense).matmul(&p_dense);
            let k_inv = k.inverse().unwrap();

            let e: Vec<f64> = (0..60).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let ra_e = ops.r_ideal.matmul(&a_dense).matvec(&e);
            let corr = p_dense.matvec(&k_inv.matvec(&ra_e));
            let new_e: Vec<f64> = e.iter().zip(&corr).map(|(a, b)| a - b).collect();
            let c_norm: f64 = split
                .c_points()
                .iter()
                .map(|i| new_e[i] * new_e[i])
                .sum::<f64>()
                .sqrt();
            assert!(c_norm <= 1e-10, "trial {trial}: C-point error {c_norm}");
        }
    }

    #[test]
    fn ideal_interpolation_after_exact_f_solve_is_exact() {
        // Corollary check: exact F-solve then correction with P_ideal kills
        // the whole error, for any Z.
        let mut rng = ChaCha8Rng::seed_from_u64(78);
        let p = gen_random_triangular(50, 0.35, 0.3, 55).unwrap();
        let (split, _) = default_pipeline(&p.a);
        assert!(split.n_c() > 0);
        let ops = ideal_operators(&p.a, &split).unwrap();
        let f = split.f_points();
        let c = split.c_points();
        let a_dense = p.a.to_dense();

        // arbitrary Z lifted into a global R
        let z = DenseMatrix::from_fn(split.n_c(), split.n_f(), |i, j| {
            (((i * 13 + j * 3) % 7) as f64 - 3.0) * 0.1
        });
        let r = assemble_restriction(&SparseMatrix::from_dense(&z), &split)
            .unwrap()
            .to_dense();

        // error with zero residual at F-rows: e_f = -A_ff^{-1} A_fc e_c
        let e_c: Vec<f64> = (0..split.n_c()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let a_ff = p.a.extract_submatrix(&f, &f).unwrap().to_dense();
        let a_fc = p.a.extract_submatrix(&f, &c).unwrap().to_dense();
        let e_f = a_ff.inverse().unwrap().matmul(&a_fc).scaled(-1.0).matvec(&e_c);
        let mut e = vec![0.0; 50];
        for (local, global) in f.iter().enumerate() {
            e[global] = e_f[local];
        }
        for (local, global) in c.iter().enumerate() {
            e[global] = e_c[local];
        }

        let k = r.matmul(&a_dense).matmul(&ops.p_ideal);
        let corr = ops
            .p_ideal
            .matmul(&k.inverse().unwrap())
            .matmul(&r)
            .matmul(&a_dense)
            .matvec(&e);
        let new_e: Vec<f64> = e.iter().zip(&corr).map(|(a, b)| a - b).collect();
        let norm = crate::sparse::norm2(&new_e);
        assert!(norm <= 1e-10, "two-grid error after ideal P correction: {norm}");
    }

    #[test]
    fn index_set_round_trip_through_assembly() {
        let split = split_from_marks(vec![Mark::C, Mark::F, Mark::F, Mark::C, Mark::F]);
        assert_eq!(split.c_points().as_slice(), &[0, 3]);
        assert_eq!(split.f_points().as_slice(), &[1, 2, 4]);
        assert_eq!(split.c_index(3), 1);
        assert_eq!(split.f_index(4), 2);
        let all = IndexSet::all(5);
        assert_eq!(all.complement().len(), 0);
    }
}
