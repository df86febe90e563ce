//! Block-structured systems: scale by the inverse of the uniform block
//! diagonal, then run the scalar pipeline on the pre-scaled system.
//!
//!     cargo run --release --example block_scaling

use nair::hierarchy::{block_diag_scale, setup, SolverOptions};
use nair::sparse::{norm2, SparseMatrix};

fn main() -> Result<(), nair::Error> {
    // block lower-triangular system: 3x3 diagonal blocks along a chain
    let block = 3;
    let nblocks = 60;
    let n = block * nblocks;
    let mut triplets = Vec::new();
    for blk in 0..nblocks {
        let base = blk * block;
        for r in 0..block {
            for c in 0..block {
                let v = if r == c { 2.0 } else { 0.3 * ((r + 2 * c) % 3) as f64 };
                if v != 0.0 {
                    triplets.push((base + r, base + c, v));
                }
            }
            if blk > 0 {
                // coupling to the upwind block
                triplets.push((base + r, base - block + r, -1.0));
            }
        }
    }
    let a = SparseMatrix::from_triplets(n, n, &triplets)?;
    let x_exact = vec![1.0; n];
    let b = a.spmv(&x_exact)?;

    let (scaled, scaling) = block_diag_scale(&a, block)?;
    let b_scaled = scaling.apply(&b);
    println!("block size {block}, {nblocks} blocks: pre-scaled system has unit diagonal blocks");

    let hierarchy = setup(&scaled, SolverOptions::default())?;
    let (x, report) = nair::solvers::solve(&hierarchy, &b_scaled, None, 1e-12, 100)?;
    println!(
        "solve: converged = {} in {} iterations over {} levels",
        report.converged,
        report.iterations,
        hierarchy.num_levels()
    );
    let err: Vec<f64> = x.iter().zip(&x_exact).map(|(a, b)| a - b).collect();
    println!("error vs manufactured solution: {:.2e}", norm2(&err));
    Ok(())
}
