//! Near-triangular systems: a small diffusive perturbation breaks the
//! triangular structure, stationary cycles alone are no longer exact, and
//! one V-cycle as a right preconditioner for restarted GMRES restores fast
//! convergence. Plain GMRES stalls on the same system.
//!
//!     cargo run --release --example gmres_preconditioning

use nair::hierarchy::{setup, SolverOptions};
use nair::problems::{gen_near_triangular, TransportSpec};
use nair::solvers::gmres;

fn main() -> Result<(), nair::Error> {
    let cells = 96;
    let theta = 3.0 * std::f64::consts::PI / 16.0;
    let spec = TransportSpec::inset_2d(cells, theta);
    let epsilon = 1e-3 / cells as f64;
    let problem = gen_near_triangular(&spec, epsilon)?;
    println!("problem: {}", problem.description);

    let hierarchy = setup(&problem.a, SolverOptions::default())?;
    println!("hierarchy: {} levels", hierarchy.num_levels());

    let (_, with_precond) = gmres(&problem.a, &problem.b, None, Some(&hierarchy), 50, 1e-10, 100)?;
    println!(
        "V-cycle preconditioned GMRES: converged = {} in {} iterations",
        with_precond.converged, with_precond.iterations
    );

    let (_, plain) = gmres(&problem.a, &problem.b, None, None, 50, 1e-10, 100)?;
    let initial = plain.residual_history[0];
    let last = plain.residual_history.last().copied().unwrap_or(initial);
    println!(
        "plain GMRES(50):              converged = {} after {} iterations (relative residual {:.3e})",
        plain.converged,
        plain.iterations,
        last / initial
    );
    Ok(())
}
