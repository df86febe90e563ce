//! Convergence factor and work-per-digit as the grid refines, for Neumann
//! degrees k = 1, 2 and both cycle types.
//!
//!     cargo run --release --example scaling_bench

use nair::hierarchy::{setup, CycleType, SolverOptions};
use nair::problems::{gen_transport, TransportSpec};
use nair::solvers::solve;

fn main() -> Result<(), nair::Error> {
    let theta = 3.0 * std::f64::consts::PI / 16.0;
    println!("{:>6} {:>8} {:>3} {:>6} {:>7} {:>10} {:>8} {:>8} {:>8}", "grid", "n", "k", "cycle", "levels", "rho", "OC", "CC", "WPD");
    for &cells in &[16usize, 32, 64, 128] {
        let problem = gen_transport(&TransportSpec::inset_2d(cells, theta))?;
        for &k in &[1usize, 2] {
            for cycle in [CycleType::V, CycleType::F] {
                let options = SolverOptions {
                    neumann_degree: k,
                    cycle,
                    ..SolverOptions::default()
                };
                let hierarchy = setup(&problem.a, options)?;
                let (_, report) = solve(&hierarchy, &problem.b, None, 1e-12, 100)?;
                println!(
                    "{:>6} {:>8} {:>3} {:>6} {:>7} {:>10.3e} {:>8.3} {:>8.3} {:>8}",
                    cells,
                    problem.a.nrows(),
                    k,
                    match cycle {
                        CycleType::V => "V",
                        CycleType::F => "F",
                    },
                    hierarchy.num_levels(),
                    report.rho,
                    report.oc,
                    report.cc,
                    report
                        .wpd
                        .map(|w| format!("{w:.2}"))
                        .unwrap_or_else(|| "-".into()),
                );
            }
        }
    }
    Ok(())
}
