//! Tabulates the permittivity family and the rotating manufactured field
//! along the radius.
//!
//! ```text
//! cargo run --example manufactured_solution -- [m]
//! ```

use maxwell_p1::verify::{epsilon_derivatives, ManufacturedCase};

fn main() -> maxwell_p1::Result<()> {
    let m = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(2);
    let case = ManufacturedCase::new(m)?;
    let norms = case.permittivity().norms();
    println!("m = {m}: sup eps = {:.4}, |eps|_1 = {:.4}, |eps|_2 = {:.4}", norms.sup, norms.seminorm_1, norms.seminorm_2);
    println!("{:>5} {:>8} {:>9} {:>10} {:>10} {:>10} {:>10}", "r", "eps", "eps'", "eps''", "e_x", "f_x", "f_y");
    for i in 0..=10 {
        let r = i as f64 / 10.0;
        let (eps, d1, d2) = epsilon_derivatives(r, m);
        let x = [0.0, r];
        let e = case.exact(&x, 0.0);
        let f = case.source(&x, 0.0);
        println!("{r:>5.2} {eps:>8.4} {d1:>9.4} {d2:>10.4} {:>10.4} {:>10.4} {:>10.4}", e[0], f[0], f[1]);
    }
    Ok(())
}
