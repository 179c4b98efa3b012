use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use maxwell_p1::mesh::{build_disk_mesh, load_mesh, MeshLevel};

fn cli(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_maxwell-p1"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .expect("binary runs")
}

fn code(output: &Output) -> i32 {
    output.status.code().expect("exited normally")
}

fn csv_rows(path: &Path) -> Vec<Vec<String>> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(str::to_owned).collect())
        .collect()
}

#[test]
fn converge_writes_table_files() {
    let dir = tempfile::tempdir().unwrap();
    let out = cli(&["converge", "--m", "2", "--levels", "1..3"], dir.path());
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let rows = csv_rows(&dir.path().join("report.csv"));
    assert_eq!(rows.len(), 3);
    assert_eq!(&rows[1][..3], ["2", "128", "81"]);
    let e1: f64 = rows[1][3].parse().unwrap();
    assert!((e1 / 0.1499 - 1.0).abs() < 0.25, "l = 2 e1 = {e1}");
    assert!(rows[0][4].is_empty() && !rows[1][4].is_empty());
    assert_eq!(csv_rows(&dir.path().join("rates.csv")).len(), 9);
    let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("report.json")).unwrap()).unwrap();
    assert_eq!(json["levels"].as_array().unwrap().len(), 3);
}

#[test]
fn converge_single_level_has_no_ratios() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&cli(&["converge", "--m", "5", "--levels", "3..3"], dir.path())), 0);
    let rows = csv_rows(&dir.path().join("report.csv"));
    assert_eq!(rows.len(), 1);
    assert!(rows[0][4].is_empty() && rows[0][6].is_empty() && rows[0][8].is_empty());
}

#[test]
fn gross_cfl_violation_exits_with_instability() {
    let dir = tempfile::tempdir().unwrap();
    let out = cli(&["converge", "--m", "2", "--levels", "1..2", "--tau", "10.0", "--force"], dir.path());
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("level"));
}

#[test]
fn unguarded_tau_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&cli(&["converge", "--levels", "1..2", "--tau", "10.0"], dir.path())), 4);
    assert_eq!(code(&cli(&["run", "--levels", "2", "--tau", "0.25"], dir.path())), 4);
    assert_eq!(code(&cli(&["run", "--levels", "2", "--tau", "0.01"], dir.path())), 0);
}

#[test]
fn bad_arguments_are_config_errors() {
    let dir = tempfile::tempdir().unwrap();
    for args in [&["converge", "--m", "1"][..], &["run", "--levels", "0"], &["mesh", "--kind", "hexagon"], &["frobnicate"]] {
        assert_eq!(code(&cli(args, dir.path())), 4, "{args:?}");
    }
    let config = dir.path().join("c.json");
    fs::write(&config, "{not json").unwrap();
    assert_eq!(code(&cli(&["mesh", "--config", config.to_str().unwrap()], dir.path())), 4);
}

#[test]
fn unwritable_output_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("file");
    fs::write(&blocker, "").unwrap();
    assert_eq!(code(&cli(&["mesh"], &blocker.join("sub"))), 3);
}

#[test]
fn run_logs_one_row_per_level() {
    let dir = tempfile::tempdir().unwrap();
    let out = cli(&["run", "--m", "2", "--levels", "1", "--emit", "energy,vtk"], dir.path());
    assert_eq!(code(&out), 0);
    let rows = csv_rows(&dir.path().join("energy.csv"));
    assert_eq!(rows.len(), 40);
    assert_eq!(rows[0][0], "1");
    assert_eq!(rows[39][0], "40");
    assert!(rows[0][5].is_empty() && !rows[1][5].is_empty());
    let energy = |r: &Vec<String>| r[2].parse::<f64>().unwrap();
    let ratio = energy(&rows[39]) / energy(&rows[0]);
    assert!(ratio.is_finite() && ratio < 1e3);
    assert!(dir.path().join("field_000001.vtk").exists());
    assert!(dir.path().join("field_000040.vtk").exists());
}

#[test]
fn zero_data_run_writes_zero_fields() {
    let dir = tempfile::tempdir().unwrap();
    let out = cli(&["run", "--zero-data", "--emit", "vtk", "--vtk-every", "10"], dir.path());
    assert_eq!(code(&out), 0);
    let vtk = fs::read_to_string(dir.path().join("field_000040.vtk")).unwrap();
    let data = vtk.split("VECTORS e double").nth(1).unwrap();
    assert_eq!(data.lines().filter(|l| !l.is_empty()).count(), 25);
    assert!(data.lines().filter(|l| !l.is_empty()).all(|l| l == "0.0 0.0 0.0"));
    assert!(dir.path().join("field_000020.vtk").exists());
}

#[test]
fn mesh_command_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let out = cli(&["mesh", "--levels", "1", "--emit", "vtk"], dir.path());
    assert_eq!(code(&out), 0);
    let mesh = load_mesh(dir.path().join("disk_l1.mesh")).unwrap();
    assert_eq!(mesh, build_disk_mesh(MeshLevel::new(1).unwrap()).unwrap());
    let vtk = fs::read_to_string(dir.path().join("disk_l1.vtk")).unwrap();
    assert!(vtk.contains("POINTS 25 double") && vtk.contains("CELLS 32 128"));
    assert_eq!(code(&cli(&["mesh", "--kind", "square", "--levels", "2"], dir.path())), 0);
    assert!(dir.path().join("square_l2.mesh").exists());
}

#[test]
fn cfl_sweep_reports_threshold() {
    let dir = tempfile::tempdir().unwrap();
    let out = cli(&["cfl-sweep", "--m", "2", "--levels", "2"], dir.path());
    assert_eq!(code(&out), 0);
    let rows = csv_rows(&dir.path().join("cfl_sweep.csv"));
    assert!(rows.iter().any(|r| r[2] == "0") && rows.iter().any(|r| r[2] == "1"));
    assert!(String::from_utf8_lossy(&out.stdout).contains("threshold = "));
}

#[test]
fn config_file_supplies_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("table.json");
    fs::write(&config, r#"{"m": 3, "levels": "1..2", "threads": 1}"#).unwrap();
    let out = cli(&["converge", "--config", config.to_str().unwrap()], dir.path());
    assert_eq!(code(&out), 0);
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("m = 3"));
    assert_eq!(csv_rows(&dir.path().join("report.csv")).len(), 2);
}

#[test]
fn identical_invocations_are_bitwise_identical() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let args = ["converge", "--m", "4", "--levels", "1..3", "--seed", "7"];
    assert_eq!(code(&cli(&args, a.path())), 0);
    assert_eq!(code(&cli(&[&args[..], &["--threads", "2"]].concat(), b.path())), 0);
    for name in ["report.csv", "rates.csv", "report.json"] {
        assert_eq!(fs::read(a.path().join(name)).unwrap(), fs::read(b.path().join(name)).unwrap(), "{name}");
    }
    let (c, d) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    assert_eq!(code(&cli(&["cfl-sweep", "--seed", "5"], c.path())), 0);
    assert_eq!(code(&cli(&["cfl-sweep", "--seed", "5"], d.path())), 0);
    assert_eq!(fs::read(c.path().join("cfl_sweep.csv")).unwrap(), fs::read(d.path().join("cfl_sweep.csv")).unwrap());
}
