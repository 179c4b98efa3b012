//! Command-line front end: `converge`, `run`, `cfl-sweep` and `mesh`.
//!
//! Settings come from flags, then from the JSON file given by `--config`
//! (same key names as the long flags), then from defaults. Exit codes are
//! [`EXIT_SUCCESS`], [`EXIT_INSTABILITY`], [`EXIT_IO`] and [`EXIT_CONFIG`].

use std::ffi::OsString;
use std::fmt;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::fespace::{interpolate, NodalVectorField};
use crate::mesh::{build_disk_mesh, build_square_mesh, export_vtk, save_mesh, MeshLevel};
use crate::solver::{
    cfl_bound, initialize, probe_levels, run, step_count, RunOptions, SimulationState, SweepOptions,
    cfl_sweep,
};
use crate::verify::{
    convergence_study, level_tau, setup_level, simulate, write_rate_plot_data, write_report_csv,
    ConvergenceReport, ErrorMonitor, LevelSetup, ManufacturedCase, StudyOptions, FINAL_TIME,
};
use crate::Error;

pub const EXIT_SUCCESS: i32 = 0;
pub const EXIT_INSTABILITY: i32 = 2;
pub const EXIT_IO: i32 = 3;
pub const EXIT_CONFIG: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "maxwell-p1", version, about = "Explicit P1 solver for the time-domain Maxwell equation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Convergence study of the manufactured solution over a level range.
    Converge(Flags),
    /// Single simulation with energy log and optional VTK snapshots.
    Run(Flags),
    /// Empirical stability threshold as a multiple of the spectral limit.
    CflSweep(Flags),
    /// Generates a square or disk mesh.
    Mesh(Flags),
}

/// Flags shared by every subcommand. Unset flags fall back to the config file.
#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Flags {
    /// Permittivity exponent (m >= 2).
    #[arg(long)]
    pub m: Option<u32>,
    /// Level `l` or range `a..b`.
    #[arg(long)]
    pub levels: Option<LevelRange>,
    /// Time step override.
    #[arg(long)]
    pub tau: Option<f64>,
    /// Final time.
    #[arg(long = "T")]
    #[serde(rename = "T")]
    pub final_time: Option<f64>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Artifacts to write, comma separated.
    #[arg(long, value_delimiter = ',')]
    #[serde(default)]
    pub emit: Vec<Emit>,
    /// Skip the CFL guard on `--tau` and allow steps that do not divide T.
    #[arg(long)]
    #[serde(default)]
    pub force: bool,
    /// JSON file with default settings.
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads for level-parallel work.
    #[arg(long)]
    pub threads: Option<usize>,
    /// Fraction of the spectral step limit allowed for guarded steps.
    #[arg(long)]
    pub safety_factor: Option<f64>,
    /// Mesh family for `mesh`.
    #[arg(long)]
    pub kind: Option<MeshKind>,
    /// Start `run` from zero data without a source.
    #[arg(long)]
    #[serde(default)]
    pub zero_data: bool,
    /// Write a VTK snapshot every this many levels (0: first and last only).
    #[arg(long)]
    pub vtk_every: Option<usize>,
}

impl Flags {
    /// `self` with unset fields taken from `fallback`.
    fn or(self, fallback: Flags) -> Flags {
        Flags {
            m: self.m.or(fallback.m),
            levels: self.levels.or(fallback.levels),
            tau: self.tau.or(fallback.tau),
            final_time: self.final_time.or(fallback.final_time),
            out: self.out.or(fallback.out),
            emit: if self.emit.is_empty() { fallback.emit } else { self.emit },
            force: self.force || fallback.force,
            config: self.config,
            seed: self.seed.or(fallback.seed),
            threads: self.threads.or(fallback.threads),
            safety_factor: self.safety_factor.or(fallback.safety_factor),
            kind: self.kind.or(fallback.kind),
            zero_data: self.zero_data || fallback.zero_data,
            vtk_every: self.vtk_every.or(fallback.vtk_every),
        }
    }
}

/// Inclusive level range, written `a..b` or `a`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct LevelRange {
    pub first: u32,
    pub last: u32,
}

impl LevelRange {
    pub fn single(l: u32) -> Self {
        LevelRange { first: l, last: l }
    }
}

impl FromStr for LevelRange {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let parse = |t: &str| t.trim().parse::<u32>().map_err(|_| format!("bad level `{t}` in `{s}`"));
        let range = match s.split_once("..") {
            Some((a, b)) => LevelRange {
                first: parse(a)?,
                last: parse(b.strip_prefix('=').unwrap_or(b))?,
            },
            None => LevelRange::single(parse(s)?),
        };
        if range.first == 0 || range.first > range.last {
            return Err(format!("level range `{s}` must satisfy 1 <= a <= b"));
        }
        Ok(range)
    }
}

impl TryFrom<String> for LevelRange {
    type Error = String;

    fn try_from(s: String) -> Result<Self, String> {
        s.parse()
    }
}

impl From<LevelRange> for String {
    fn from(r: LevelRange) -> String {
        r.to_string()
    }
}

impl fmt::Display for LevelRange {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}..{}", self.first, self.last)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Emit {
    Csv,
    Vtk,
    #[value(alias = "energy-log")]
    #[serde(alias = "energy-log")]
    Energy,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MeshKind {
    Square,
    Disk,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CommandKind {
    Converge,
    Run,
    CflSweep,
    Mesh,
}

/// Fully resolved settings of one invocation.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub command: CommandKind,
    pub m: u32,
    pub levels: LevelRange,
    pub tau: Option<f64>,
    pub final_time: f64,
    pub out: PathBuf,
    pub emit: Vec<Emit>,
    pub force: bool,
    pub safety_factor: f64,
    pub seed: u64,
    pub threads: Option<usize>,
    pub kind: MeshKind,
    pub zero_data: bool,
    pub vtk_every: usize,
}

impl RunConfig {
    /// Merges flags over the optional config file and validates the result.
    pub fn resolve(command: CommandKind, flags: Flags) -> Result<RunConfig, CliError> {
        let flags = match &flags.config {
            Some(path) => {
                let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
                let file: Flags = serde_json::from_str(&text)
                    .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
                flags.or(file)
            }
            None => flags,
        };
        let default_levels = match command {
            CommandKind::Converge => LevelRange { first: 1, last: 5 },
            CommandKind::CflSweep => LevelRange::single(2),
            CommandKind::Run | CommandKind::Mesh => LevelRange::single(1),
        };
        let default_emit = match command {
            CommandKind::Converge | CommandKind::CflSweep => vec![Emit::Csv],
            CommandKind::Run => vec![Emit::Energy],
            CommandKind::Mesh => Vec::new(),
        };
        let config = RunConfig {
            command,
            m: flags.m.unwrap_or(2),
            levels: flags.levels.unwrap_or(default_levels),
            tau: flags.tau,
            final_time: flags.final_time.unwrap_or(FINAL_TIME),
            out: flags.out.unwrap_or_else(|| PathBuf::from(".")),
            emit: if flags.emit.is_empty() { default_emit } else { flags.emit },
            force: flags.force,
            safety_factor: flags.safety_factor.unwrap_or(0.9),
            seed: flags.seed.unwrap_or(1),
            threads: flags.threads,
            kind: flags.kind.unwrap_or(MeshKind::Disk),
            zero_data: flags.zero_data,
            vtk_every: flags.vtk_every.unwrap_or(0),
        };
        config.validate()?;
        Ok(config)
    }

    fn validate(&self) -> Result<(), CliError> {
        let fail = |msg: String| Err(CliError::Config(msg));
        if self.m < 2 {
            return fail(format!("m must be at least 2, got {}", self.m));
        }
        if !(self.final_time > 0.0 && self.final_time.is_finite()) {
            return fail(format!("T must be positive, got {}", self.final_time));
        }
        if let Some(tau) = self.tau {
            if !(tau > 0.0 && tau.is_finite()) {
                return fail(format!("tau must be positive, got {tau}"));
            }
        }
        if !(self.safety_factor > 0.0 && self.safety_factor <= 1.0) {
            return fail(format!("safety factor must lie in (0, 1], got {}", self.safety_factor));
        }
        if self.threads == Some(0) {
            return fail("threads must be positive".into());
        }
        MeshLevel::new(self.levels.last)?;
        if self.command != CommandKind::Converge && self.levels.first != self.levels.last {
            return fail(format!("this command takes a single level, got {}", self.levels));
        }
        Ok(())
    }

    pub fn emits(&self, what: Emit) -> bool {
        self.emit.contains(&what)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Solver(#[from] Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Solver(e) if e.is_instability() => EXIT_INSTABILITY,
            CliError::Solver(e) if e.is_io() => EXIT_IO,
            CliError::Solver(_) => EXIT_CONFIG,
        }
    }
}

/// Parses `args` (program name first), runs the command and returns the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_SUCCESS };
        }
    };
    let (kind, flags) = match cli.command {
        Command::Converge(f) => (CommandKind::Converge, f),
        Command::Run(f) => (CommandKind::Run, f),
        Command::CflSweep(f) => (CommandKind::CflSweep, f),
        Command::Mesh(f) => (CommandKind::Mesh, f),
    };
    let mut stdout = std::io::stdout();
    let result = RunConfig::resolve(kind, flags).and_then(|config| execute(&config, &mut stdout));
    match result {
        Ok(()) => EXIT_SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

/// Runs a resolved configuration, printing a summary to `console`.
pub fn execute(config: &RunConfig, console: &mut (dyn Write + Send)) -> Result<(), CliError> {
    let mut work = move || match config.command {
        CommandKind::Converge => cmd_converge(config, console),
        CommandKind::Run => cmd_run(config, console),
        CommandKind::CflSweep => cmd_cfl_sweep(config, console),
        CommandKind::Mesh => cmd_mesh(config, console),
    };
    match config.threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| CliError::Config(format!("thread pool: {e}")))?
            .install(work),
        None => work(),
    }
}

fn say(console: &mut (dyn Write + Send), text: std::fmt::Arguments<'_>) -> Result<(), CliError> {
    console
        .write_fmt(text)
        .and_then(|_| console.write_all(b"\n"))
        .map_err(|e| Error::io("<stdout>", e).into())
}

fn output_dir(config: &RunConfig) -> Result<&Path, CliError> {
    fs::create_dir_all(&config.out).map_err(|e| Error::io(&config.out, e))?;
    Ok(&config.out)
}

fn write_text(path: &Path, f: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>) -> Result<(), CliError> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    f(&mut out).and_then(|_| out.flush()).map_err(|e| Error::io(path, e).into())
}

/// Final time actually run with step `tau`. A forced step that does not
/// divide `T` runs `max(⌈T/τ⌉, MIN_PROBE_LEVELS)` levels.
fn horizon(config: &RunConfig, tau: f64) -> Result<f64, CliError> {
    match step_count(config.final_time, tau) {
        Ok(_) => Ok(config.final_time),
        Err(_) if config.force => Ok(probe_levels(config.final_time, tau) as f64 * tau),
        Err(e) => Err(CliError::Config(e.to_string())),
    }
}

fn check_tau_guard(config: &RunConfig, setup: &LevelSetup, tau: f64) -> Result<(), CliError> {
    if config.force {
        return Ok(());
    }
    let limit = config.safety_factor * cfl_bound(&setup.ops, &setup.eps, None)?.tau_spectral;
    if tau > limit {
        return Err(CliError::Config(format!(
            "tau = {tau} exceeds {} x tau_spectral = {limit:.6e} on level {}; pass --force to run anyway",
            config.safety_factor,
            setup.level.get()
        )));
    }
    Ok(())
}

fn manufactured_case(config: &RunConfig, final_time: f64) -> Result<ManufacturedCase, CliError> {
    Ok(ManufacturedCase::new(config.m)?.with_final_time(final_time)?)
}

pub fn cmd_converge(config: &RunConfig, console: &mut (dyn Write + Send)) -> Result<(), CliError> {
    let final_time = match config.tau {
        Some(tau) => {
            let t = horizon(config, tau)?;
            if !config.force {
                let case = manufactured_case(config, t)?;
                for l in config.levels.first..=config.levels.last {
                    check_tau_guard(config, &setup_level(&case, MeshLevel::new(l)?)?, tau)?;
                }
            }
            t
        }
        None => config.final_time,
    };
    let case = manufactured_case(config, final_time)?;
    let options = StudyOptions {
        tau: config.tau,
        safety_factor: config.safety_factor,
    };
    let report = convergence_study(&case, config.levels.first, config.levels.last, &options)?;
    print_report(&report, console)?;
    if config.emits(Emit::Csv) {
        let dir = output_dir(config)?;
        write_report_csv(&report, dir.join("report.csv"))?;
        write_rate_plot_data(&report, dir.join("rates.csv"))?;
        write_text(&dir.join("report.json"), |out| {
            serde_json::to_writer_pretty(&mut *out, &report)?;
            writeln!(out)
        })?;
    }
    Ok(())
}

fn print_report(report: &ConvergenceReport, console: &mut (dyn Write + Send)) -> Result<(), CliError> {
    say(console, format_args!("m = {}, T = {}", report.m, report.final_time))?;
    say(
        console,
        format_args!("{:>2} {:>6} {:>6} {:>11} {:>7} {:>11} {:>7} {:>11} {:>7}", "l", "nel", "nno", "e1", "ratio", "e2", "ratio", "e3", "ratio"),
    )?;
    for row in &report.levels {
        let r = |i: usize| row.ratios.map(|r| format!("{:.3}", r[i])).unwrap_or_default();
        say(
            console,
            format_args!(
                "{:>2} {:>6} {:>6} {:>11.4e} {:>7} {:>11.4e} {:>7} {:>11.4e} {:>7}",
                row.level, row.nel, row.nno, row.errors.e1, r(0), row.errors.e2, r(1), row.errors.e3, r(2)
            ),
        )?;
    }
    Ok(())
}

fn energy_row(state: &SimulationState, errors: Option<[Option<f64>; 3]>) -> String {
    let energy = state.energy_history.last().copied().unwrap_or(f64::NAN);
    let mut row = format!("{},{:.12e},{:.12e}", state.k, state.time(), energy);
    if let Some(errors) = errors {
        for e in errors {
            row.push(',');
            if let Some(e) = e {
                row.push_str(&format!("{e:.12e}"));
            }
        }
    }
    row
}

pub fn cmd_run(config: &RunConfig, console: &mut (dyn Write + Send)) -> Result<(), CliError> {
    let level = MeshLevel::new(config.levels.first)?;
    let base = manufactured_case(config, config.final_time)?;
    let setup = setup_level(&base, level)?;
    let tau = match config.tau {
        Some(tau) => {
            check_tau_guard(config, &setup, tau)?;
            tau
        }
        None => level_tau(
            &base,
            &setup,
            &StudyOptions {
                tau: None,
                safety_factor: config.safety_factor,
            },
        )?,
    };
    let final_time = horizon(config, tau)?;
    let case = manufactured_case(config, final_time)?;
    let num_levels = step_count(final_time, tau)?;
    let dir = if config.emits(Emit::Vtk) || config.emits(Emit::Energy) {
        Some(output_dir(config)?.to_path_buf())
    } else {
        None
    };
    let mesh = Arc::clone(&setup.mesh);
    let every = config.vtk_every;
    let snapshot = |state: &SimulationState, exact: Option<&ManufacturedCase>| -> crate::Result<()> {
        let due = state.k == 1 || state.k == num_levels || (every > 0 && state.k.is_multiple_of(every));
        let Some(dir) = dir.as_ref().filter(|_| config.emits(Emit::Vtk) && due) else {
            return Ok(());
        };
        let path = dir.join(format!("field_{:06}.vtk", state.k));
        match exact {
            Some(case) => {
                let t = state.time();
                let e = interpolate(&mesh, |x| case.exact(x, t))?;
                export_vtk(&mesh, &[("e", &state.e_curr), ("e_exact", &e)], path)
            }
            None => export_vtk(&mesh, &[("e", &state.e_curr)], path),
        }
    };

    let mut rows = Vec::with_capacity(num_levels);
    let outcome = if config.zero_data {
        let zero = NodalVectorField::zeros_on(&mesh);
        let state = initialize(&zero, &zero, tau)?;
        run(&setup.ops, state, &RunOptions::new(final_time), None, &mut |s| {
            rows.push(energy_row(s, None));
            snapshot(s, None)
        })
        .map(|t| (t, None))
    } else {
        simulate(&case, &setup, tau, &mut |s, monitor: &ErrorMonitor| {
            rows.push(energy_row(s, Some(monitor.last_relative())));
            snapshot(s, Some(&case))
        })
        .map(|(norms, t)| (t, Some(norms)))
    };

    if config.emits(Emit::Energy) {
        let path = dir.as_ref().expect("energy output has a directory").join("energy.csv");
        let header = if config.zero_data { "k,t,energy" } else { "k,t,energy,err1,err2,err3" };
        write_text(&path, |out| {
            writeln!(out, "{header}")?;
            for row in &rows {
                writeln!(out, "{row}")?;
            }
            Ok(())
        })?;
    }

    let (trajectory, norms) = outcome?;
    let history = &trajectory.state.energy_history;
    say(
        console,
        format_args!(
            "m = {}, l = {}, tau = {tau:e}, levels = {}, steps = {}",
            config.m,
            level.get(),
            trajectory.num_levels,
            trajectory.steps
        ),
    )?;
    let (first, last) = (history[0], *history.last().expect("history is never empty"));
    say(console, format_args!("energy: initial {first:.6e}, final {last:.6e}"))?;
    if let Some(n) = norms {
        say(console, format_args!("errors: e1 = {:.6e}, e2 = {:.6e}, e3 = {:.6e}", n.e1, n.e2, n.e3))?;
    }
    Ok(())
}

pub fn cmd_cfl_sweep(config: &RunConfig, console: &mut (dyn Write + Send)) -> Result<(), CliError> {
    let case = manufactured_case(config, config.final_time)?;
    let setup = setup_level(&case, MeshLevel::new(config.levels.first)?)?;
    let options = SweepOptions {
        final_time: config.final_time,
        seed: config.seed,
        ..SweepOptions::default()
    };
    let sweep = cfl_sweep(&setup.ops, &options)?;
    say(
        console,
        format_args!("m = {}, l = {}, tau_spectral = {:.6e}", config.m, config.levels.first, sweep.tau_spectral),
    )?;
    say(console, format_args!("{:>10} {:>13} {:>8}", "factor", "tau", "stable"))?;
    for &(factor, stable) in &sweep.probes {
        say(console, format_args!("{factor:>10.5} {:>13.6e} {stable:>8}", factor * sweep.tau_spectral))?;
    }
    match sweep.threshold {
        Some(t) => say(console, format_args!("threshold = {t:.4} x tau_spectral = {:.6e}", t * sweep.tau_spectral))?,
        None => say(console, format_args!("threshold: no instability up to {} x tau_spectral", options.max_factor))?,
    }
    if config.emits(Emit::Csv) {
        let dir = output_dir(config)?;
        write_text(&dir.join("cfl_sweep.csv"), |out| {
            writeln!(out, "factor,tau,stable")?;
            for &(factor, stable) in &sweep.probes {
                writeln!(out, "{factor:.12},{:.12e},{}", factor * sweep.tau_spectral, u8::from(stable))?;
            }
            Ok(())
        })?;
    }
    Ok(())
}

pub fn cmd_mesh(config: &RunConfig, console: &mut (dyn Write + Send)) -> Result<(), CliError> {
    let level = MeshLevel::new(config.levels.first)?;
    let (mesh, name) = match config.kind {
        MeshKind::Square => (build_square_mesh(level)?, "square"),
        MeshKind::Disk => (build_disk_mesh(level)?, "disk"),
    };
    let dir = output_dir(config)?;
    let stem = format!("{name}_l{}", level.get());
    save_mesh(&mesh, dir.join(format!("{stem}.mesh")))?;
    if config.emits(Emit::Vtk) {
        export_vtk(&mesh, &[], dir.join(format!("{stem}.vtk")))?;
    }
    say(
        console,
        format_args!(
            "{stem}: {} vertices, {} cells, {} boundary facets",
            mesh.num_vertices(),
            mesh.num_cells(),
            mesh.num_boundary_facets()
        ),
    )
}
