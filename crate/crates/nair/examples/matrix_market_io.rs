//! Persist a generated system to Matrix Market, read it back, and solve it
//! from the file, as an external tool would.
//!
//!     cargo run --release --example matrix_market_io

use nair::hierarchy::{setup, SolverOptions};
use nair::io::{read_matrix_market, write_matrix_market};
use nair::problems::{gen_transport, TransportSpec};
use nair::solvers::solve;

fn main() -> Result<(), nair::Error> {
    let theta = 3.0 * std::f64::consts::PI / 16.0;
    let problem = gen_transport(&TransportSpec::block_source_2d(32, theta))?;
    println!("problem: {}", problem.description);

    let dir = std::env::temp_dir().join("nair_example_io");
    std::fs::create_dir_all(&dir).map_err(|e| nair::Error::Io {
        path: dir.display().to_string(),
        source: e,
    })?;
    let path = dir.join("block_source_32.mtx");
    write_matrix_market(&problem.a, &path)?;
    println!("wrote {} ({} entries)", path.display(), problem.a.nnz());

    let reloaded = read_matrix_market(&path)?;
    assert_eq!(reloaded, problem.a, "round trip must be exact");
    println!("round trip exact: pattern and values identical");

    let hierarchy = setup(&reloaded, SolverOptions::default())?;
    let (_, report) = solve(&hierarchy, &problem.b, None, 1e-12, 100)?;
    println!(
        "solved from file: converged = {} in {} iterations (rho = {:.3e})",
        report.converged, report.iterations, report.rho
    );
    Ok(())
}
