//! Numerical tour of the convergence framework: the accuracy residuals, the
//! small G operator whose powers govern error and residual propagation, the
//! bound assembled from measured composite norms, the Schur-complement
//! identity, and the multilevel gamma condition.
//!
//!     cargo run --release --example convergence_framework

use nair::diagnostics::{
    g_report, multilevel_g, verify_outer_product, verify_schur_identity,
};
use nair::graph::{rs_split, strength};
use nair::hierarchy::{setup, SolverOptions};
use nair::problems::{gen_random_triangular, gen_transport, TransportSpec};
use nair::transfer::{build_nair_restriction, build_onepoint_interp, NeumannOptions, TransferPair};

fn main() -> Result<(), nair::Error> {
    // two-grid quantities on a random triangular instance
    let problem = gen_random_triangular(200, 0.06, 0.2, 11)?;
    println!("problem: {}", problem.description);
    let s = strength(&problem.a, 0.25)?;
    let split = rs_split(&s);
    let opts = NeumannOptions { degree: 1, strength_threshold: 0.025 };
    let rb = build_nair_restriction(&problem.a, &split, &opts)?;
    let ib = build_onepoint_interp(&problem.a, &s, &split)?;
    let transfer = TransferPair { r: rb.r, p: ib.p, z: rb.z, w: ib.w, delta: rb.delta };
    let sweeps = 2;

    let g = g_report(&problem.a, &split, &transfer, sweeps)?;
    println!("two-grid G (post-relaxation): |G| = {:.4e}", g.g_norm);
    println!("  assembled bound:            {:.4e}", g.bound_rho);
    println!("pre-relaxation G_pre:         |G_pre| = {:.4e}", g.g_pre_norm);
    println!("  assembled bound:            {:.4e}", g.bound_rho_pre);

    let schur = verify_schur_identity(&problem.a, &split, &transfer)?;
    println!("Schur identity K - K_A = delta_R A_ff^-1 delta_P: rel. error {schur:.2e}");

    let outer = verify_outer_product(&problem.a, &split, &transfer, sweeps, 4)?;
    println!("outer-product factorization of E^k, R^k (k <= 4): max rel. error {outer:.2e}");

    // multilevel gamma on a transport hierarchy
    let theta = 3.0 * std::f64::consts::PI / 16.0;
    let transport = gen_transport(&TransportSpec::inset_2d(16, theta))?;
    let mut options = SolverOptions::default();
    options.max_coarse = 20;
    let hierarchy = setup(&transport.a, options)?;
    println!(
        "\ntransport 16x16 hierarchy: {} levels; multilevel analysis at level 0:",
        hierarchy.num_levels()
    );
    let ml = multilevel_g(&hierarchy, 0)?;
    println!("  two-grid |G|      = {:.4e}", ml.g_norm);
    println!("  gamma             = {:.4e}", ml.gamma.unwrap());
    println!("  gamma sufficient  < {:.4e}", ml.gamma_sufficient.unwrap_or(f64::NAN));
    println!("  multilevel |G^|   = {:.4e}", ml.g_hat_norm.unwrap());
    Ok(())
}
