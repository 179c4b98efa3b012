//! Compares the theoretical and spectral time-step limits with the
//! empirically bisected stability threshold.
//!
//! ```text
//! cargo run --release --example cfl_sweep -- [m] [l]
//! ```

use maxwell_p1::mesh::MeshLevel;
use maxwell_p1::solver::{cfl_bound, cfl_sweep, stability_constants, SweepOptions};
use maxwell_p1::verify::{calibrated_inverse_constant, reference_tau, setup_level, ManufacturedCase};

fn main() -> maxwell_p1::Result<()> {
    let args: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let m = args.first().copied().unwrap_or(2);
    let level = MeshLevel::new(args.get(1).copied().unwrap_or(2))?;

    let case = ManufacturedCase::new(m)?;
    let setup = setup_level(&case, level)?;
    let constant = calibrated_inverse_constant(&case)?;
    let bounds = cfl_bound(&setup.ops, &setup.eps, Some(constant))?;
    let constants = stability_constants(&setup.eps, case.final_time())?;

    println!("m = {m}, l = {}", level.get());
    println!("lambda_max   = {:.6e}", bounds.lambda_max);
    println!("C (l = 1)    = {:.4}", bounds.inverse_constant);
    println!("tau_theory   = {:.6e}", bounds.tau_theory);
    println!("tau_spectral = {:.6e}", bounds.tau_spectral);
    println!("tau_l (rule) = {:.6e}", reference_tau(level));
    println!("eta = {:.4}, theta = {:.4}, rho = {:.4}, beta = {:.4}", constants.eta, constants.theta, constants.rho, constants.beta);

    let sweep = cfl_sweep(&setup.ops, &SweepOptions::default())?;
    for (factor, stable) in &sweep.probes {
        println!("  tau = {factor:.4} x tau_spectral: {}", if *stable { "stable" } else { "unstable" });
    }
    match sweep.threshold {
        Some(t) => println!("empirical threshold: {t:.4} x tau_spectral"),
        None => println!("no instability found"),
    }
    Ok(())
}
