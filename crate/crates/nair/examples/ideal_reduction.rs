//! The reduction viewpoint: the ideal restriction `[-A_cf A_ff^{-1}  I]`
//! gives an exact coarse-grid correction at C-points independent of the
//! interpolation, and an exact F-solve afterwards finishes the job. The
//! coarse operator under either ideal transfer operator is the Schur
//! complement.
//!
//!     cargo run --release --example ideal_reduction

use nair::graph::{rs_split, strength};
use nair::problems::gen_random_triangular;
use nair::sparse::norm2;
use nair::transfer::{build_onepoint_interp, ideal_operators};

fn main() -> Result<(), nair::Error> {
    let problem = gen_random_triangular(120, 0.15, 0.3, 42)?;
    println!("problem: {}", problem.description);
    let s = strength(&problem.a, 0.25)?;
    let split = rs_split(&s);
    println!("splitting: n_c = {}, n_f = {}", split.n_c(), split.n_f());

    let ops = ideal_operators(&problem.a, &split)?;
    let interp = build_onepoint_interp(&problem.a, &s, &split)?;
    let a = problem.a.to_dense();
    let p = interp.p.to_dense();

    // K = R_ideal A P equals the Schur complement for ANY interpolation
    let k = ops.r_ideal.matmul(&a).matmul(&p);
    let gap = k.add_scaled(-1.0, &ops.schur).max_abs();
    println!("|R_ideal A P - Schur|_max = {gap:.2e} (one-point P)");

    // coarse-grid correction with R_ideal zeroes the C-point error
    let n = problem.a.nrows();
    let e: Vec<f64> = (0..n).map(|i| ((i * 37 % 100) as f64 - 50.0) / 50.0).collect();
    let k_inv = k.inverse()?;
    let correction = p.matvec(&k_inv.matvec(&ops.r_ideal.matmul(&a).matvec(&e)));
    let corrected: Vec<f64> = e.iter().zip(&correction).map(|(a, b)| a - b).collect();
    let c_norm: f64 = split
        .c_points()
        .iter()
        .map(|i| corrected[i] * corrected[i])
        .sum::<f64>()
        .sqrt();
    println!("C-point error after correction: {c_norm:.2e} (was {:.2e})", norm2(&e));

    // exact F-solve afterwards removes the rest
    let f = split.f_points();
    let c = split.c_points();
    let a_ff = problem.a.extract_submatrix(&f, &f)?.to_dense();
    let a_fc = problem.a.extract_submatrix(&f, &c)?.to_dense();
    let e_c: Vec<f64> = c.iter().map(|i| corrected[i]).collect();
    let e_f = a_ff.inverse()?.matmul(&a_fc).scaled(-1.0).matvec(&e_c);
    let mut after = vec![0.0; n];
    for (local, global) in f.iter().enumerate() {
        after[global] = e_f[local];
    }
    for (local, global) in c.iter().enumerate() {
        after[global] = e_c[local];
    }
    println!("full error after exact F-solve:  {:.2e}", norm2(&after));
    Ok(())
}
