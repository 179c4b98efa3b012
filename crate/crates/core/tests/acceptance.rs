//! Acceptance checks, run as `cargo test --test acceptance`. Prints the
//! evidence for every criterion followed by one `PASS`/`FAIL` line each, and
//! exits non-zero if any criterion fails.

mod common;

use std::fs;
use std::process::Command;
use std::sync::Arc;
use std::time::{Duration, Instant};

use maxwell_p1::mesh::{build_disk_mesh, MeshLevel};
use maxwell_p1::solver::{cfl_bound, cfl_sweep, probe_levels, SweepOptions};
use maxwell_p1::verify::{
    convergence_study, reference_tau, setup_level, simulate, ConvergenceReport, ManufacturedCase, StudyOptions,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::*;

const NORMS: [&str; 3] = ["e1", "e2", "e3"];

struct Verdict {
    passed: bool,
    summary: String,
}

fn verdict(passed: bool, summary: impl Into<String>) -> Verdict {
    Verdict {
        passed,
        summary: summary.into(),
    }
}

fn studies() -> Vec<(ConvergenceReport, Duration)> {
    (2..=5)
        .map(|m| {
            let start = Instant::now();
            let case = ManufacturedCase::new(m).unwrap();
            let report = convergence_study(&case, 1, 5, &StudyOptions::default()).unwrap();
            (report, start.elapsed())
        })
        .collect()
}

fn criterion_1(studies: &[(ConvergenceReport, Duration)]) -> Verdict {
    let windows = [(3.6, 4.6), (1.7, 2.4), (1.7, 2.4)];
    let mut misses = Vec::new();
    for (report, elapsed) in studies {
        if *elapsed > Duration::from_secs(300) {
            misses.push(format!("m={} took {elapsed:?}", report.m));
        }
        for l in [4, 5] {
            let ratios = report.level(l).unwrap().ratios.unwrap();
            let line: Vec<String> = (0..3)
                .map(|i| {
                    let (lo, hi) = windows[i];
                    let ok = (lo..=hi).contains(&ratios[i]);
                    if !ok {
                        misses.push(format!("m={} l={l} {}={:.3}", report.m, NORMS[i], ratios[i]));
                    }
                    format!("{}={:.3}{}", NORMS[i], ratios[i], if ok { "" } else { "*" })
                })
                .collect();
            println!("  m={} l={l} ratios {} ({:.2?})", report.m, line.join(" "), elapsed);
        }
    }
    verdict(misses.is_empty(), format!("{} ratio(s) outside window: {}", misses.len(), misses.join(", ")))
}

fn criterion_2(studies: &[(ConvergenceReport, Duration)], criterion_1_passed: bool) -> Verdict {
    let report = &studies[0].0;
    let table = [(2, 0.1499, 1.0769), (3, 0.0333, 0.4454), (4, 0.0078, 0.2077)];
    let mut misses = Vec::new();
    for (l, e1, e2) in table {
        let errors = report.level(l).unwrap().errors;
        for (name, ours, table) in [("e1", errors.e1, e1), ("e2", errors.e2, e2)] {
            let rel = ours / table - 1.0;
            println!("  m=2 l={l} {name}: {ours:.4} vs {table} ({:+.1}%)", 100.0 * rel);
            if rel.abs() > 0.25 {
                misses.push(format!("l={l} {name} {:+.0}%", 100.0 * rel));
            }
        }
    }
    if misses.is_empty() {
        verdict(true, "all values within 25%")
    } else if criterion_1_passed {
        verdict(true, format!("mapping sensitivity with correct ratios: {}", misses.join(", ")))
    } else {
        verdict(false, format!("outside 25% and criterion 1 failed: {}", misses.join(", ")))
    }
}

fn criterion_3(studies: &[(ConvergenceReport, Duration)]) -> Verdict {
    let targets = [2.0, 1.0, 1.0];
    let mut misses = Vec::new();
    for (report, _) in studies {
        let slopes: Vec<f64> = (0..3).map(|i| report.observed_order(i, 3..=5).unwrap()).collect();
        println!("  m={} slopes over l=3..5: e1={:.3} e2={:.3} e3={:.3}", report.m, slopes[0], slopes[1], slopes[2]);
        for i in 0..3 {
            if (slopes[i] - targets[i]).abs() > 0.2 {
                misses.push(format!("m={} {}={:.2}", report.m, NORMS[i], slopes[i]));
            }
        }
    }
    verdict(misses.is_empty(), format!("{} slope(s) off target: {}", misses.len(), misses.join(", ")))
}

fn criterion_4() -> Verdict {
    let case = ManufacturedCase::new(2).unwrap();
    let setup = setup_level(&case, MeshLevel::new(2).unwrap()).unwrap();
    let tau_spectral = cfl_bound(&setup.ops, &setup.eps, None).unwrap().tau_spectral;

    let stable = simulate(&case, &setup, reference_tau(setup.level), &mut |_, _| Ok(()));
    let stable_ok = match &stable {
        Ok((_, trajectory)) => {
            let h = &trajectory.state.energy_history;
            let growth = h.last().unwrap() / h[0];
            println!("  tau_2 = 0.00625: {} steps, energy final/initial = {growth:.4}", trajectory.steps);
            growth.is_finite() && growth < 1e3
        }
        Err(e) => {
            println!("  tau_2 = 0.00625 aborted: {e}");
            false
        }
    };

    let tau = 10.0 * tau_spectral;
    let levels = probe_levels(case.final_time(), tau);
    let long = case.with_final_time(levels as f64 * tau).unwrap();
    let unstable = simulate(&long, &setup, tau, &mut |_, _| Ok(()));
    let unstable_ok = match &unstable {
        Err(e) if e.is_instability() => {
            println!("  tau = 10 tau_spectral = {tau:.4}: aborted within {levels} levels ({e})");
            true
        }
        other => {
            println!("  tau = 10 tau_spectral = {tau:.4}: no abort ({:?})", other.as_ref().err());
            false
        }
    };

    let sweep = cfl_sweep(&setup.ops, &SweepOptions::default()).unwrap();
    let threshold = sweep.threshold.unwrap_or(f64::INFINITY);
    println!("  tau_spectral = {tau_spectral:.6e}, empirical threshold = {threshold:.4} x tau_spectral");
    let sweep_ok = (0.9..=2.5).contains(&threshold);

    verdict(
        stable_ok && unstable_ok && sweep_ok,
        format!("reference step stable: {stable_ok}, 10x limit aborts: {unstable_ok}, threshold {threshold:.3} in [0.9, 2.5]: {sweep_ok}"),
    )
}

fn criterion_5() -> Verdict {
    let mut failures = Vec::new();

    let cancellation = (0..20).map(|s| unit_permittivity_cancellation(&random_square_mesh(s))).fold(0.0, f64::max);
    println!("  eps = 1 cancellation over 20 meshes: max |entry| = {cancellation:e}");
    if cancellation > 1e-12 {
        failures.push("cancellation");
    }

    let mut range2 = (f64::INFINITY, 0.0f64);
    let mut range3 = (f64::INFINITY, 0.0f64);
    for s in 0..4 {
        let (lo, hi) = norm_ratio_range(&random_square_mesh(s), 250, s);
        range2 = (range2.0.min(lo), range2.1.max(hi));
        let (lo, hi) = norm_ratio_range(&random_cube_mesh(s), 250, s);
        range3 = (range3.0.min(lo), range3.1.max(hi));
    }
    println!("  lumped/exact norm ratio over 1000 fields: 2D [{:.6}, {:.6}], 3D [{:.6}, {:.6}]", range2.0, range2.1, range3.0, range3.1);
    if range2.0 < 1.0 - 1e-12 || range2.1 > 2.0 + 1e-9 || range3.0 < 1.0 - 1e-12 || range3.1 > 5f64.sqrt() + 1e-9 {
        failures.push("norm equivalence");
    }

    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let cases: Vec<ManufacturedCase> = (2..=5).map(|m| ManufacturedCase::new(m).unwrap()).collect();
    let mut worst = 0.0f64;
    let mut points = 0;
    while points < 200 {
        let r: f64 = rng.gen_range(0.05..0.95);
        if (r - 0.5).abs() < 0.02 {
            continue;
        }
        let theta: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
        let t = rng.gen_range(0.01..0.49);
        let case = &cases[points % 4];
        worst = worst.max(strong_residual(case, [r * theta.cos(), r * theta.sin()], t, 1e-4));
        points += 1;
    }
    println!("  manufactured residual at 200 points: max {worst:e}");
    if worst > 1e-4 {
        failures.push("residual");
    }

    let case = ManufacturedCase::new(3).unwrap();
    let setup = setup_level(&case, MeshLevel::new(2).unwrap()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(50);
    let e0 = random_nodal_field(&setup.mesh, &mut rng);
    let e1 = random_nodal_field(&setup.mesh, &mut rng);
    let defect = reversibility_defect(&setup.ops, &e0, &e1, reference_tau(setup.level), 50);
    println!("  reversibility defect after 50 steps: {defect:e}");
    if defect > 1e-10 {
        failures.push("reversibility");
    }

    let mesh = Arc::new(build_disk_mesh(MeshLevel::new(1).unwrap()).unwrap());
    let gap = dense_oracle_gap(mesh, &ManufacturedCase::new(2).unwrap(), 0.0125, 1);
    println!("  dense oracle step on l=1: relative gap {gap:e}");
    if gap > 1e-12 {
        failures.push("dense oracle");
    }

    verdict(failures.is_empty(), if failures.is_empty() { "all properties hold".to_string() } else { format!("failed: {}", failures.join(", ")) })
}

fn criterion_6() -> Verdict {
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    for dir in &dirs {
        let status = Command::new(env!("CARGO_BIN_EXE_maxwell-p1"))
            .args(["converge", "--m", "2", "--levels", "1..5", "--out"])
            .arg(dir.path())
            .output()
            .unwrap()
            .status;
        if !status.success() {
            return verdict(false, format!("converge exited with {status}"));
        }
    }
    let identical = ["report.csv", "rates.csv", "report.json"]
        .iter()
        .all(|name| fs::read(dirs[0].path().join(name)).unwrap() == fs::read(dirs[1].path().join(name)).unwrap());
    verdict(identical, if identical { "reports are bitwise identical" } else { "reports differ" })
}

fn main() {
    let names = [
        "table rates",
        "table values",
        "convergence order fit",
        "CFL dichotomy",
        "property suite",
        "determinism",
    ];
    println!("criterion 1..3: convergence studies m=2..5, l=1..5");
    let studies = studies();
    let mut verdicts = Vec::new();
    verdicts.push(criterion_1(&studies));
    verdicts.push(criterion_2(&studies, verdicts[0].passed));
    verdicts.push(criterion_3(&studies));
    println!("criterion 4");
    verdicts.push(criterion_4());
    println!("criterion 5");
    verdicts.push(criterion_5());
    println!("criterion 6");
    verdicts.push(criterion_6());

    println!();
    for (i, (v, name)) in verdicts.iter().zip(names).enumerate() {
        println!("criterion {} ({name}): {}: {}", i + 1, if v.passed { "PASS" } else { "FAIL" }, v.summary);
    }
    if verdicts.iter().any(|v| !v.passed) {
        std::process::exit(1);
    }
}
