//! Cycle execution (V and F), Jacobi F/C-relaxation, the stationary
//! iteration driver, and restarted GMRES with a V-cycle right
//! preconditioner.
//!
//! Cycles run in the row-scaled space of each level: descending scales the
//! restricted residual by the child level's diagonal; the coarsest level is
//! solved directly on its raw operator. There is no pre-relaxation; each
//! level applies coarse-grid correction first and F-relaxation after, so
//! two-grid error propagation is `E_F (I - Pi)`.

use std::time::Instant;

use serde::Serialize;

use crate::error::Error;
use crate::hierarchy::{complexity, CycleType, Hierarchy, Level};
use crate::sparse::{norm2, SparseMatrix};
use crate::Result;

/// Outcome of a solve: residual history, convergence factor, and cost
/// metrics.
#[derive(Debug, Clone, Serialize)]
pub struct ConvergenceReport {
    /// 2-norms of the iteration residuals, starting with the initial one.
    pub residual_history: Vec<f64>,
    /// Asymptotic convergence factor: geometric mean of the last
    /// `min(5, iterations - 1)` residual ratios.
    pub rho: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Operator complexity.
    pub oc: f64,
    /// Cycle complexity in work units per iteration.
    pub cc: f64,
    /// Work units per digit of accuracy, `-cc / log10(rho)`; absent when
    /// `rho` lies outside `(0, 1)`.
    pub wpd: Option<f64>,
    pub setup_seconds: f64,
    pub solve_seconds: f64,
}

/// `-cc / log10(rho)`, defined for `0 < rho < 1` and `cc > 0`.
pub fn wpd(rho: f64, cc: f64) -> Option<f64> {
    if rho > 0.0 && rho < 1.0 && cc > 0.0 {
        Some(-cc / rho.log10())
    } else {
        None
    }
}

/// Jacobi relaxation restricted to F-rows with C-values frozen; on the
/// unit-diagonal scaled level each sweep is `x_f += b_f - (A x)_f`.
pub fn f_relax(level: &Level, x: &mut [f64], b: &[f64], sweeps: usize) {
    jacobi_rows(level, x, b, sweeps, false);
}

/// Jacobi relaxation restricted to C-rows with F-values frozen.
pub fn c_relax(level: &Level, x: &mut [f64], b: &[f64], sweeps: usize) {
    jacobi_rows(level, x, b, sweeps, true);
}

fn jacobi_rows(level: &Level, x: &mut [f64], b: &[f64], sweeps: usize, c_rows: bool) {
    let n = level.n();
    debug_assert_eq!(x.len(), n);
    debug_assert_eq!(b.len(), n);
    let mut updates: Vec<(usize, f64)> = Vec::with_capacity(if c_rows {
        level.split.n_c()
    } else {
        level.split.n_f()
    });
    for _ in 0..sweeps {
        updates.clear();
        for i in 0..n {
            if level.split.is_c(i) != c_rows {
                continue;
            }
            let (cols, vals) = level.a_scaled.row(i);
            let mut acc = b[i];
            for (&c, &v) in cols.iter().zip(vals) {
                acc -= v * x[c];
            }
            updates.push((i, acc));
        }
        for &(i, r) in &updates {
            x[i] += r;
        }
    }
}

/// Work counter: matrix entries touched by cycle operations, used to
/// cross-check the cycle-complexity formula.
pub type WorkCounter = u64;

fn cycle_counted(
    h: &Hierarchy,
    cycle: CycleType,
    level: usize,
    x: &mut [f64],
    b: &[f64],
    work: &mut WorkCounter,
) {
    if level == h.levels.len() {
        let solution = h.coarsest.solve(b);
        x.copy_from_slice(&solution);
        return;
    }
    let lvl = &h.levels[level];

    // residual and restriction
    let ax = lvl.a_scaled.spmv(x).expect("level dimensions are consistent");
    *work += lvl.a_scaled.nnz() as u64;
    let r: Vec<f64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
    let mut b_coarse = lvl.transfer.r.spmv(&r).expect("restriction dimensions");
    *work += lvl.transfer.r.nnz() as u64;

    // the child level solves its own row-scaled system
    if level + 1 < h.levels.len() {
        let child_diag = &h.levels[level + 1].diag;
        for (v, d) in b_coarse.iter_mut().zip(child_diag) {
            *v /= d;
        }
    }

    let mut x_coarse = vec![0.0; lvl.split.n_c()];
    match cycle {
        CycleType::V => {
            cycle_counted(h, CycleType::V, level + 1, &mut x_coarse, &b_coarse, work);
        }
        CycleType::F => {
            cycle_counted(h, CycleType::F, level + 1, &mut x_coarse, &b_coarse, work);
            cycle_counted(h, CycleType::V, level + 1, &mut x_coarse, &b_coarse, work);
        }
    }

    let correction = lvl.transfer.p.spmv(&x_coarse).expect("interpolation dimensions");
    *work += lvl.transfer.p.nnz() as u64;
    for (xi, ci) in x.iter_mut().zip(&correction) {
        *xi += ci;
    }

    let sweeps = h.options.sweeps();
    f_relax(lvl, x, b, sweeps);
    *work += (sweeps * (lvl.a_ff.nnz() + lvl.a_fc.nnz())) as u64;
    if h.options.enable_c_relax {
        c_relax(lvl, x, b, h.options.c_relax_sweeps);
        *work += (h.options.c_relax_sweeps * (lvl.a_cf.nnz() + lvl.a_cc.nnz())) as u64;
    }
}

/// One V-cycle starting at `level`, in that level's scaled space.
pub fn v_cycle(h: &Hierarchy, level: usize, x: &mut [f64], b: &[f64]) {
    let mut work = 0;
    cycle_counted(h, CycleType::V, level, x, b, &mut work);
}

/// One F-cycle starting at `level`: each coarse problem is visited once by
/// the F-cycle recursion and once more by a V-cycle.
pub fn f_mg_cycle(h: &Hierarchy, level: usize, x: &mut [f64], b: &[f64]) {
    let mut work = 0;
    cycle_counted(h, CycleType::F, level, x, b, &mut work);
}

/// One cycle of the configured type, reporting entries touched.
pub fn cycle_with_work(h: &Hierarchy, x: &mut [f64], b: &[f64]) -> WorkCounter {
    let mut work = 0;
    cycle_counted(h, h.options.cycle, 0, x, b, &mut work);
    work
}

/// Geometric mean of the last `min(5, iterations - 1)` residual ratios;
/// zero when fewer than two ratios exist.
fn geometric_rho(history: &[f64]) -> f64 {
    let iterations = history.len().saturating_sub(1);
    let window = iterations.saturating_sub(1).min(5);
    if window == 0 {
        return 0.0;
    }
    let last = history[history.len() - 1];
    let base = history[history.len() - 1 - window];
    if base == 0.0 {
        return 0.0;
    }
    (last / base).powf(1.0 / window as f64)
}

/// Stationary iteration with the configured cycle until
/// `|r_k| / |r_0| <= tol` or `max_iters` cycles.
///
/// Residuals are those of the row-scaled system the cycles act on; since
/// scaling acts on rows only, the returned solution solves the original
/// system directly.
pub fn solve(
    h: &Hierarchy,
    b: &[f64],
    x0: Option<&[f64]>,
    tol: f64,
    max_iters: usize,
) -> Result<(Vec<f64>, ConvergenceReport)> {
    if tol <= 0.0 {
        return Err(Error::InvalidParameter { name: "tol", details: format!("{tol} <= 0") });
    }
    let n = h.fine_n();
    if b.len() != n {
        return Err(Error::DimensionMismatch {
            op: "solve",
            details: format!("system has {n} unknowns, b has length {}", b.len()),
        });
    }
    let start = Instant::now();
    let mut x = match x0 {
        Some(x0) => {
            if x0.len() != n {
                return Err(Error::DimensionMismatch {
                    op: "solve",
                    details: format!("system has {n} unknowns, x0 has length {}", x0.len()),
                });
            }
            x0.to_vec()
        }
        None => vec![0.0; n],
    };

    // single-level hierarchies solve directly on the raw operator
    let (b_scaled, residual): (Vec<f64>, Box<dyn Fn(&[f64]) -> Vec<f64>>) =
        if let Some(level) = h.levels.first() {
            let bs: Vec<f64> = b.iter().zip(&level.diag).map(|(v, d)| v / d).collect();
            let a = &level.a_scaled;
            let bs_clone = bs.clone();
            (
                bs,
                Box::new(move |x: &[f64]| {
                    let ax = a.spmv(x).expect("dimensions fixed");
                    bs_clone.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect()
                }),
            )
        } else {
            let m = h.coarsest.matrix();
            let bs = b.to_vec();
            let bs_clone = bs.clone();
            (
                bs,
                Box::new(move |x: &[f64]| {
                    let ax = m.matvec(x);
                    bs_clone.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect()
                }),
            )
        };

    // an initial residual at the rounding floor of b counts as converged
    // (covers exact initial guesses, whose residual cannot shrink further)
    let floor = 16.0 * f64::EPSILON * norm2(&b_scaled);
    let r0 = norm2(&residual(&x));
    let mut history = vec![r0];
    let mut converged = r0 <= floor;
    let mut iterations = 0;

    if !converged {
        for iter in 1..=max_iters {
            let mut work = 0;
            cycle_counted(h, h.options.cycle, 0, &mut x, &b_scaled, &mut work);
            let rnorm = norm2(&residual(&x));
            if !rnorm.is_finite() {
                return Err(Error::NonFiniteResidual { iteration: iter });
            }
            history.push(rnorm);
            iterations = iter;
            if rnorm / r0 <= tol {
                converged = true;
                break;
            }
        }
    }

    let rho = geometric_rho(&history);
    let (oc, cc) = complexity(h);
    let report = ConvergenceReport {
        rho,
        iterations,
        converged,
        oc,
        cc,
        wpd: wpd(rho, cc),
        setup_seconds: h.setup_seconds,
        solve_seconds: start.elapsed().as_secs_f64(),
        residual_history: history,
    };
    Ok((x, report))
}

/// Applies one V-cycle with zero initial guess as an approximate inverse of
/// the hierarchy's fine operator (raw space in, raw space out).
pub fn apply_vcycle_preconditioner(h: &Hierarchy, v: &[f64]) -> Vec<f64> {
    let mut x = vec![0.0; v.len()];
    if let Some(level) = h.levels.first() {
        let scaled: Vec<f64> = v.iter().zip(&level.diag).map(|(vi, d)| vi / d).collect();
        v_cycle(h, 0, &mut x, &scaled);
    } else {
        v_cycle(h, 0, &mut x, v);
    }
    x
}

/// Restarted GMRES with right preconditioning by one V-cycle.
///
/// Right preconditioning keeps the reported residuals true residuals of the
/// original system; modified Gram-Schmidt orthogonalization; the true
/// residual is recomputed at every restart. `precond: None` runs plain
/// GMRES.
pub fn gmres(
    a: &SparseMatrix,
    b: &[f64],
    x0: Option<&[f64]>,
    precond: Option<&Hierarchy>,
    restart: usize,
    tol: f64,
    max_iters: usize,
) -> Result<(Vec<f64>, ConvergenceReport)> {
    match precond {
        Some(h) => {
            let apply = |v: &[f64]| apply_vcycle_preconditioner(h, v);
            let (oc, cc) = complexity(h);
            gmres_with(a, b, x0, Some(&apply), restart, tol, max_iters, oc, cc + 1.0, h.setup_seconds)
        }
        None => gmres_with(a, b, x0, None, restart, tol, max_iters, 1.0, 1.0, 0.0),
    }
}

/// GMRES over an arbitrary right preconditioner given as a function
/// `v -> M^{-1} v`. Cost metrics are passed through to the report.
#[allow(clippy::too_many_arguments)]
pub fn gmres_with(
    a: &SparseMatrix,
    b: &[f64],
    x0: Option<&[f64]>,
    precond: Option<&dyn Fn(&[f64]) -> Vec<f64>>,
    restart: usize,
    tol: f64,
    max_iters: usize,
    oc: f64,
    cc: f64,
    setup_seconds: f64,
) -> Result<(Vec<f64>, ConvergenceReport)> {
    if restart < 1 {
        return Err(Error::InvalidParameter { name: "restart", details: "must be >= 1".into() });
    }
    if tol <= 0.0 {
        return Err(Error::InvalidParameter { name: "tol", details: format!("{tol} <= 0") });
    }
    let n = a.nrows();
    if a.ncols() != n || b.len() != n {
        return Err(Error::DimensionMismatch {
            op: "gmres",
            details: format!("A is {}x{}, b has length {}", a.nrows(), a.ncols(), b.len()),
        });
    }
    let start = Instant::now();
    let mut x = match x0 {
        Some(x0) => x0.to_vec(),
        None => vec![0.0; n],
    };
    let apply_m = |v: &[f64]| -> Vec<f64> {
        match precond {
            Some(f) => f(v),
            None => v.to_vec(),
        }
    };

    let r0_vec: Vec<f64> = {
        let ax = a.spmv(&x)?;
        b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect()
    };
    let r0 = norm2(&r0_vec);
    let mut history = vec![r0];
    let mut total_iters = 0usize;
    let mut converged = r0 == 0.0;

    'outer: while !converged && total_iters < max_iters {
        // start of a restart segment: true residual
        let r_vec: Vec<f64> = {
            let ax = a.spmv(&x)?;
            b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect()
        };
        let beta = norm2(&r_vec);
        if !beta.is_finite() {
            return Err(Error::NonFiniteResidual { iteration: total_iters });
        }
        if beta / r0 <= tol {
            converged = true;
            break;
        }
        let m = restart;
        let mut basis: Vec<Vec<f64>> = Vec::with_capacity(m + 1);
        basis.push(r_vec.iter().map(|v| v / beta).collect());
        // Hessenberg columns after Givens rotations; g is the rotated rhs
        let mut r_cols: Vec<Vec<f64>> = Vec::with_capacity(m);
        let mut givens: Vec<(f64, f64)> = Vec::with_capacity(m);
        let mut g = vec![0.0; m + 1];
        g[0] = beta;

        let mut inner_count = 0usize;
        for j in 0..m {
            if total_iters >= max_iters {
                break;
            }
            let z = apply_m(&basis[j]);
            let mut w = a.spmv(&z)?;
            // modified Gram-Schmidt
            let mut h_col = vec![0.0; j + 2];
            for (i, v) in basis.iter().enumerate() {
                let hij: f64 = v.iter().zip(&w).map(|(vi, wi)| vi * wi).sum();
                h_col[i] = hij;
                for (wk, vk) in w.iter_mut().zip(v) {
                    *wk -= hij * vk;
                }
            }
            let h_next = norm2(&w);
            h_col[j + 1] = h_next;

            // apply accumulated rotations, then a new one to zero h_col[j+1]
            for (i, &(c, s)) in givens.iter().enumerate() {
                let t = c * h_col[i] + s * h_col[i + 1];
                h_col[i + 1] = -s * h_col[i] + c * h_col[i + 1];
                h_col[i] = t;
            }
            let denom = (h_col[j] * h_col[j] + h_next * h_next).sqrt();
            if denom == 0.0 {
                return Err(Error::SingularLeastSquares { step: total_iters + 1 });
            }
            let (c, s) = (h_col[j] / denom, h_next / denom);
            givens.push((c, s));
            h_col[j] = denom;
            h_col[j + 1] = 0.0;
            let gt = c * g[j];
            g[j + 1] = -s * g[j];
            g[j] = gt;
            r_cols.push(h_col);

            total_iters += 1;
            inner_count = j + 1;
            let estimate = g[j + 1].abs();
            if !estimate.is_finite() {
                return Err(Error::NonFiniteResidual { iteration: total_iters });
            }
            history.push(estimate);

            let lucky = h_next <= f64::EPSILON * beta;
            if estimate / r0 <= tol || lucky {
                update_solution(&mut x, &basis, &r_cols, &g, inner_count, &apply_m);
                let ax = a.spmv(&x)?;
                let true_res = norm2(
                    &b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect::<Vec<f64>>(),
                );
                *history.last_mut().expect("nonempty") = true_res;
                if true_res / r0 <= tol || lucky {
                    converged = true;
                }
                continue 'outer;
            }
            if h_next > f64::EPSILON * beta {
                let inv = 1.0 / h_next;
                basis.push(w.iter().map(|v| v * inv).collect());
            } else {
                // exact subspace but estimate not yet small: restart
                update_solution(&mut x, &basis, &r_cols, &g, inner_count, &apply_m);
                continue 'outer;
            }
        }
        update_solution(&mut x, &basis, &r_cols, &g, inner_count, &apply_m);
        // loop continues; the next segment recomputes the true residual
        let ax = a.spmv(&x)?;
        let true_res = norm2(&b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect::<Vec<f64>>());
        if let Some(last) = history.last_mut() {
            *last = true_res;
        }
    }

    let rho = geometric_rho(&history);
    let report = ConvergenceReport {
        rho,
        iterations: total_iters,
        converged,
        oc,
        cc,
        wpd: wpd(rho, cc),
        setup_seconds,
        solve_seconds: start.elapsed().as_secs_f64(),
        residual_history: history,
    };
    Ok((x, report))
}

/// Solves the triangular least-squares system and applies the (possibly
/// preconditioned) correction `x += M^{-1} (V y)`.
fn update_solution(
    x: &mut [f64],
    basis: &[Vec<f64>],
    r_cols: &[Vec<f64>],
    g: &[f64],
    k: usize,
    apply_m: &dyn Fn(&[f64]) -> Vec<f64>,
) {
    if k == 0 {
        return;
    }
    let mut y = vec![0.0; k];
    for i in (0..k).rev() {
        let mut acc = g[i];
        for j in i + 1..k {
            acc -= r_cols[j][i] * y[j];
        }
        y[i] = acc / r_cols[i][i];
    }
    let n = x.len();
    let mut z = vec![0.0; n];
    for (j, yj) in y.iter().enumerate() {
        for (zi, vi) in z.iter_mut().zip(&basis[j]) {
            *zi += yj * vi;
        }
    }
    let correction = apply_m(&z);
    for (xi, ci) in x.iter_mut().zip(&correction) {
        *xi += ci;
    }
}
