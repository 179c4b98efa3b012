//! One simulation of the manufactured solution with an energy trace.
//!
//! ```text
//! cargo run --release --example single_run -- [m] [l]
//! ```

use maxwell_p1::mesh::MeshLevel;
use maxwell_p1::verify::{reference_tau, setup_level, simulate, ManufacturedCase};

fn main() -> maxwell_p1::Result<()> {
    let args: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let m = args.first().copied().unwrap_or(2);
    let level = MeshLevel::new(args.get(1).copied().unwrap_or(2))?;

    let case = ManufacturedCase::new(m)?;
    let setup = setup_level(&case, level)?;
    let tau = reference_tau(level);

    let mut every = Vec::new();
    let (norms, trajectory) = simulate(&case, &setup, tau, &mut |state, monitor| {
        if state.k % 10 == 0 {
            every.push((state.k, *state.energy_history.last().unwrap(), monitor.last_relative()[0]));
        }
        Ok(())
    })?;

    println!("m = {m}, l = {}, tau = {tau}, {} steps", level.get(), trajectory.steps);
    println!("{:>5} {:>14} {:>12}", "k", "energy", "rel. L2 err");
    for (k, energy, err) in every {
        println!("{k:>5} {energy:>14.6e} {:>12.4e}", err.unwrap_or(f64::NAN));
    }
    println!("e1 = {:.4e}, e2 = {:.4e}, e3 = {:.4e}", norms.e1, norms.e2, norms.e3);
    Ok(())
}
