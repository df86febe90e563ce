//! How the truncated Neumann expansion approaches the ideal restriction:
//! |delta_R| as a function of the expansion degree k, and |delta_F| as a
//! function of Jacobi F-relaxation sweeps.
//!
//! A random triangular matrix keeps F-F couplings after the first-pass
//! splitting, so the decay is visible; on structured upwind grids the
//! splitting is already exact and every delta is zero.
//!
//!     cargo run --release --example neumann_accuracy

use nair::diagnostics::delta_constants;
use nair::graph::{rs_split, strength};
use nair::problems::gen_random_triangular;
use nair::transfer::{build_nair_restriction, build_onepoint_interp, NeumannOptions, TransferPair};

fn main() -> Result<(), nair::Error> {
    let problem = gen_random_triangular(400, 0.03, 0.2, 1)?;
    println!("problem: {}", problem.description);
    let s = strength(&problem.a, 0.25)?;
    let split = rs_split(&s);
    println!("splitting: n_c = {}, n_f = {}", split.n_c(), split.n_f());

    println!("\n k  sweeps   |delta_F|      |delta_R|      |delta_P|");
    for k in 0..4usize {
        let opts = NeumannOptions { degree: k, strength_threshold: 0.025 };
        let rb = build_nair_restriction(&problem.a, &split, &opts)?;
        let ib = build_onepoint_interp(&problem.a, &s, &split)?;
        let transfer = TransferPair { r: rb.r, p: ib.p, z: rb.z, w: ib.w, delta: rb.delta };
        for sweeps in [k + 1] {
            let report = delta_constants(&problem.a, &split, &transfer, sweeps, &opts)?;
            println!(
                " {k}  {sweeps}       {:.6e}   {:.6e}   {:.6e}",
                report.delta_f_norm, report.delta_r_norm, report.delta_p_norm
            );
        }
    }

    println!("\nsweep refinement at fixed k = 1:");
    let opts = NeumannOptions { degree: 1, strength_threshold: 0.025 };
    let rb = build_nair_restriction(&problem.a, &split, &opts)?;
    let ib = build_onepoint_interp(&problem.a, &s, &split)?;
    let transfer = TransferPair { r: rb.r, p: ib.p, z: rb.z, w: ib.w, delta: rb.delta };
    println!(" sweeps   |delta_F|");
    for sweeps in 1..=5usize {
        let report = delta_constants(&problem.a, &split, &transfer, sweeps, &opts)?;
        println!(" {sweeps}        {:.6e}", report.delta_f_norm);
    }
    Ok(())
}
