//! Generate a 2D upwind transport system on the inset domain, build the
//! multilevel hierarchy, and run the stationary V-cycle solver.
//!
//!     cargo run --release --example solve_transport

use nair::hierarchy::{complexity, setup, SolverOptions};
use nair::problems::{gen_transport, TransportSpec};
use nair::solvers::solve;

fn main() -> Result<(), nair::Error> {
    let theta = 3.0 * std::f64::consts::PI / 16.0;
    let spec = TransportSpec::inset_2d(64, theta);
    let problem = gen_transport(&spec)?;
    println!("problem: {}", problem.description);

    let options = SolverOptions::default();
    let hierarchy = setup(&problem.a, options)?;
    let (oc, cc) = complexity(&hierarchy);
    println!(
        "hierarchy: {} levels, coarsest n = {}, OC = {oc:.3}, CC = {cc:.3}",
        hierarchy.num_levels(),
        hierarchy.coarsest.n()
    );
    for (idx, level) in hierarchy.levels.iter().enumerate() {
        println!(
            "  level {idx}: n = {}, n_c = {}, nnz = {}, R nnz = {}, P nnz = {}",
            level.n(),
            level.n_c(),
            level.a_scaled.nnz(),
            level.transfer.r.nnz(),
            level.transfer.p.nnz()
        );
    }

    let (x, report) = solve(&hierarchy, &problem.b, None, 1e-12, 100)?;
    println!(
        "solve: converged = {}, iterations = {}, rho = {:.3e}, WPD = {:?}",
        report.converged, report.iterations, report.rho, report.wpd
    );
    println!("residual history:");
    for (i, r) in report.residual_history.iter().enumerate() {
        println!("  iter {i:2}: {r:.6e}");
    }
    println!("solution sample: x[0..4] = {:?}", &x[..4]);
    Ok(())
}
