//! Prints the convergence table of the rotating manufactured solution.
//!
//! ```text
//! cargo run --release --example convergence_table -- [m] [l_min] [l_max]
//! ```

use maxwell_p1::verify::{convergence_study, ManufacturedCase, StudyOptions};

fn main() -> maxwell_p1::Result<()> {
    let args: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let m = args.first().copied().unwrap_or(2);
    let l_min = args.get(1).copied().unwrap_or(1);
    let l_max = args.get(2).copied().unwrap_or(4);

    let case = ManufacturedCase::new(m)?;
    let report = convergence_study(&case, l_min, l_max, &StudyOptions::default())?;

    println!("m = {m}, T = {}", case.final_time());
    println!("{:>2} {:>12} {:>9} {:>8} {:>9} {:>8} {:>9} {:>8}", "l", "nel/nno", "e1", "ratio", "e2", "ratio", "e3", "ratio");
    for row in &report.levels {
        let r = |i: usize| row.ratios.map(|r| format!("{:.4}", r[i])).unwrap_or_default();
        println!(
            "{:>2} {:>12} {:>9.4} {:>8} {:>9.4} {:>8} {:>9.4} {:>8}",
            row.level,
            format!("{}/{}", row.nel, row.nno),
            row.errors.e1,
            r(0),
            row.errors.e2,
            r(1),
            row.errors.e3,
            r(2)
        );
    }
    if l_max - l_min >= 2 {
        let lo = l_max - 2;
        for (i, name) in ["e1", "e2", "e3"].iter().enumerate() {
            println!("observed order of {name} over l = {lo}..{l_max}: {:.3}", report.observed_order(i, lo..=l_max)?);
        }
    }
    Ok(())
}
