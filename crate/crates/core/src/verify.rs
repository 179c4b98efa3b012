//! Manufactured rotating solution on the unit disk, discrete error norms and
//! the convergence-study driver.
//!
//! The exact field is `e = (−x₂, x₁) v(r, t)` with `v = e^{r−2t}/ε(r)` and
//! `ε(r) = 1 + (1 − 4r²)^m` inside `r < 1/2`, `ε = 1` outside. It is
//! divergence free and satisfies `∂ₙe + ∂ₜe = 0` on the unit circle.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fespace::{
    barycentric_rule, interpolate, NodalVectorField, PermittivityField, PermittivityNorms,
    QuadratureRule, Vec3,
};
use crate::mesh::{build_disk_mesh, MeshLevel, SimplicialMesh};
use crate::solver::{
    calibrate_inverse_constant, cfl_bound, initialize, run, step_count, RunOptions,
    SchemeOperators, SimulationState, Trajectory,
};

/// Default final time of the experiments.
pub const FINAL_TIME: f64 = 0.5;

/// Highest level with reference data; deeper levels are extrapolation.
pub const MAX_REFERENCE_LEVEL: u32 = 6;

/// `(ε, ε′, ε″)` at radius `r` for exponent `m`.
///
/// On the interface `r = 1/2` the Heaviside cut-off takes the value `1/2`,
/// so a jump of `ε″` (only present for `m = 2`) is split evenly. Mesh rings
/// sit exactly on the interface, and a one-sided value there would bias the
/// nodal source on a whole ring of vertices.
pub fn epsilon_derivatives(r: f64, m: u32) -> (f64, f64, f64) {
    if r > 0.5 {
        return (1.0, 0.0, 0.0);
    }
    let m_f = m as f64;
    let s = 1.0 - 4.0 * r * r;
    let m = m as i32;
    let eps = 1.0 + s.powi(m);
    let d1 = -8.0 * m_f * r * s.powi(m - 1);
    let d2 = 8.0 * m_f * ((8.0 * m_f - 4.0) * r * r - 1.0) * s.powi(m - 2);
    if r == 0.5 {
        return (1.0, 0.0, 0.5 * d2);
    }
    (eps, d1, d2)
}

/// Radial profile at `t = 0`: `(v, v′, v″)` with `v = e^r/ε`.
fn radial_profile(r: f64, m: u32) -> (f64, f64, f64) {
    let (e, e1, e2) = epsilon_derivatives(r, m);
    let g = r.exp();
    let v = g / e;
    let v1 = (e - e1) / (e * e) * g;
    let v2 = (e * e - 2.0 * e * e1 - e * e2 + 2.0 * e1 * e1) / (e * e * e) * g;
    (v, v1, v2)
}

/// The rotating test problem for one exponent `m`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ManufacturedCase {
    m: u32,
    final_time: f64,
}

impl ManufacturedCase {
    pub fn new(m: u32) -> Result<Self> {
        if m < 2 {
            return Err(Error::InvalidArgument(format!("exponent m must be at least 2, got {m}")));
        }
        Ok(ManufacturedCase {
            m,
            final_time: FINAL_TIME,
        })
    }

    pub fn with_final_time(mut self, final_time: f64) -> Result<Self> {
        if !(final_time > 0.0 && final_time.is_finite()) {
            return Err(Error::InvalidArgument(format!("final time must be positive, got {final_time}")));
        }
        self.final_time = final_time;
        Ok(self)
    }

    pub fn m(&self) -> u32 {
        self.m
    }

    pub fn final_time(&self) -> f64 {
        self.final_time
    }

    pub fn epsilon(&self, r: f64) -> f64 {
        epsilon_derivatives(r, self.m).0
    }

    /// `e(x, 0)`; the solution at time `t` is this times `e^{−2t}`.
    pub fn profile(&self, x: &[f64]) -> [f64; 2] {
        let r = x[0].hypot(x[1]);
        let v = radial_profile(r, self.m).0;
        [-x[1] * v, x[0] * v]
    }

    /// `∇e(x, 0)` as `g[c][d] = ∂_d e_c`.
    pub fn profile_gradient(&self, x: &[f64]) -> [[f64; 2]; 2] {
        let (x1, x2) = (x[0], x[1]);
        let r = x1.hypot(x2);
        let (v, v1, _) = radial_profile(r, self.m);
        // v′/r multiplies quadratic monomials, so those terms vanish at r = 0
        let q = if r > 0.0 { v1 / r } else { 0.0 };
        [
            [-x1 * x2 * q, -v - x2 * x2 * q],
            [v + x1 * x1 * q, x1 * x2 * q],
        ]
    }

    pub fn exact(&self, x: &[f64], t: f64) -> Vec3 {
        let p = self.profile(x);
        let decay = (-2.0 * t).exp();
        [p[0] * decay, p[1] * decay, 0.0]
    }

    pub fn exact_dt(&self, x: &[f64], t: f64) -> Vec3 {
        let e = self.exact(x, t);
        [-2.0 * e[0], -2.0 * e[1], 0.0]
    }

    pub fn exact_gradient(&self, x: &[f64], t: f64) -> [[f64; 2]; 2] {
        let g = self.profile_gradient(x);
        let decay = (-2.0 * t).exp();
        [
            [g[0][0] * decay, g[0][1] * decay],
            [g[1][0] * decay, g[1][1] * decay],
        ]
    }

    pub fn initial_value(&self, x: &[f64]) -> Vec3 {
        self.exact(x, 0.0)
    }

    pub fn initial_velocity(&self, x: &[f64]) -> Vec3 {
        self.exact_dt(x, 0.0)
    }

    /// `f = ε∂ₜₜe − Δe` (the divergence term vanishes). Returns `(0, 0)` at
    /// the origin, the average of its direction-dependent limits.
    pub fn source(&self, x: &[f64], t: f64) -> Vec3 {
        let (x1, x2) = (x[0], x[1]);
        let r = x1.hypot(x2);
        if r == 0.0 {
            return [0.0; 3];
        }
        let (_, v1, v2) = radial_profile(r, self.m);
        let decay = (-2.0 * t).exp();
        let g = (r - 2.0 * t).exp();
        let lap1 = (-3.0 * x2 / r * v1 - x2 * v2) * decay;
        let lap2 = (3.0 * x1 / r * v1 + x1 * v2) * decay;
        [-4.0 * x2 * g - lap1, 4.0 * x1 * g - lap2, 0.0]
    }

    /// `ε` as a field on the plane, with norms from a fine radial grid.
    pub fn permittivity(&self) -> PermittivityField {
        let m = self.m;
        let samples = 200_000;
        let (mut d1_max, mut d2_max) = (0.0f64, 0.0f64);
        for i in 0..samples {
            let r = 0.5 * i as f64 / samples as f64;
            let (_, d1, d2) = epsilon_derivatives(r, m);
            d1_max = d1_max.max(d1.abs());
            d2_max = d2_max.max(d2.abs());
        }
        PermittivityField::new(
            move |x| epsilon_derivatives(x[0].hypot(x[1]), m).0,
            move |x| {
                let r = x[0].hypot(x[1]);
                if r == 0.0 {
                    return [0.0; 3];
                }
                let d1 = epsilon_derivatives(r, m).1;
                [d1 * x[0] / r, d1 * x[1] / r, 0.0]
            },
            PermittivityNorms {
                sup: 2.0,
                seminorm_1: d1_max,
                seminorm_2: d2_max,
            },
        )
    }
}

/// Time step of the reference experiments: `0.025 · 2^{−l}`.
pub fn reference_tau(level: MeshLevel) -> f64 {
    0.025 * (-(level.get() as f64)).exp2()
}

/// Maximum-in-time relative errors in `L²`, `H¹`-seminorm and broken time derivative.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ErrorNorms {
    pub e1: f64,
    pub e2: f64,
    pub e3: f64,
}

struct QuadPoint {
    bary: [f64; 3],
    weight: f64,
    profile: [f64; 2],
    gradient: [[f64; 2]; 2],
}

/// Accumulates the error maxima while a run progresses.
///
/// The exact solution is sampled at degree-4 quadrature points; its
/// separable form `profile(x) e^{−2t}` means each point is evaluated once.
pub struct ErrorMonitor {
    mesh: Arc<SimplicialMesh>,
    points: Vec<QuadPoint>,
    cell_gradients: Vec<[[f64; 2]; 3]>,
    profile_norm: f64,
    gradient_norm: f64,
    max_err: [f64; 3],
    max_ref: [f64; 3],
    last_relative: [Option<f64>; 3],
    samples: [usize; 3],
}

impl ErrorMonitor {
    pub fn new(mesh: Arc<SimplicialMesh>, case: &ManufacturedCase) -> Result<Self> {
        if mesh.dim() != 2 {
            return Err(Error::InvalidArgument("the manufactured case is two-dimensional".into()));
        }
        let rule = barycentric_rule(QuadratureRule::Degree4, 2)?;
        let nq = rule.len();
        let mut points = Vec::with_capacity(mesh.num_cells() * nq);
        let mut cell_gradients = Vec::with_capacity(mesh.num_cells());
        let (mut pn, mut gn) = (0.0, 0.0);
        for k in 0..mesh.num_cells() {
            let geometry = mesh.cell_geometry(k)?;
            let g = geometry.gradients();
            cell_gradients.push([[g[0][0], g[0][1]], [g[1][0], g[1][1]], [g[2][0], g[2][1]]]);
            let cell = mesh.cell(k);
            for (b, w) in &rule {
                let mut x = [0.0; 2];
                for a in 0..3 {
                    let p = mesh.vertex(cell[a]);
                    x[0] += b[a] * p[0];
                    x[1] += b[a] * p[1];
                }
                let weight = w * geometry.volume;
                let profile = case.profile(&x);
                let gradient = case.profile_gradient(&x);
                pn += weight * (profile[0] * profile[0] + profile[1] * profile[1]);
                gn += weight * gradient.iter().flatten().map(|v| v * v).sum::<f64>();
                points.push(QuadPoint {
                    bary: [b[0], b[1], b[2]],
                    weight,
                    profile,
                    gradient,
                });
            }
        }
        Ok(ErrorMonitor {
            mesh,
            points,
            cell_gradients,
            profile_norm: pn.sqrt(),
            gradient_norm: gn.sqrt(),
            max_err: [0.0; 3],
            max_ref: [0.0; 3],
            last_relative: [None; 3],
            samples: [0; 3],
        })
    }

    /// `‖p e^{−2t}·scale − u_h‖` and `‖∇(p e^{−2t}) − ∇u_h‖` for nodal `u`.
    fn distances(&self, u: &[f64], factor: f64, with_gradient: bool) -> (f64, f64) {
        let nq = self.points.len() / self.mesh.num_cells();
        let (mut l2, mut h1) = (0.0, 0.0);
        for k in 0..self.mesh.num_cells() {
            let cell = self.mesh.cell(k);
            let nodal = [
                [u[2 * cell[0]], u[2 * cell[0] + 1]],
                [u[2 * cell[1]], u[2 * cell[1] + 1]],
                [u[2 * cell[2]], u[2 * cell[2] + 1]],
            ];
            let mut grad_h = [[0.0; 2]; 2];
            if with_gradient {
                for (a, value) in nodal.iter().enumerate() {
                    let g = self.cell_gradients[k][a];
                    for c in 0..2 {
                        grad_h[c][0] += value[c] * g[0];
                        grad_h[c][1] += value[c] * g[1];
                    }
                }
            }
            for q in &self.points[k * nq..(k + 1) * nq] {
                for c in 0..2 {
                    let uh = q.bary[0] * nodal[0][c] + q.bary[1] * nodal[1][c] + q.bary[2] * nodal[2][c];
                    let d = factor * q.profile[c] - uh;
                    l2 += q.weight * d * d;
                    if with_gradient {
                        for dd in 0..2 {
                            let d = factor * q.gradient[c][dd] - grad_h[c][dd];
                            h1 += q.weight * d * d;
                        }
                    }
                }
            }
        }
        (l2.sqrt(), h1.sqrt())
    }

    fn record(&mut self, which: usize, err: f64, reference: f64) {
        self.max_err[which] = self.max_err[which].max(err);
        self.max_ref[which] = self.max_ref[which].max(reference);
        self.last_relative[which] = Some(err / reference);
        self.samples[which] += 1;
    }

    /// Samples `eₕᵏ` at `t = kτ` and, for `k ≥ 2`, the difference quotient
    /// `(eₕᵏ − eₕᵏ⁻¹)/τ` against `∂ₜe` at `(k − ½)τ`.
    pub fn observe(&mut self, state: &SimulationState) -> Result<()> {
        let n = 2 * self.mesh.num_vertices();
        if state.e_curr.values().len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                actual: state.e_curr.values().len(),
            });
        }
        let decay = (-2.0 * state.time()).exp();
        let (l2, h1) = self.distances(state.e_curr.values(), decay, true);
        self.record(0, l2, decay * self.profile_norm);
        self.record(1, h1, decay * self.gradient_norm);
        if state.k >= 2 {
            let factor = -2.0 * (-2.0 * (state.time() - 0.5 * state.tau)).exp();
            let (dt, _) = self.distances(&state.difference_quotient(), factor, false);
            self.record(2, dt, factor.abs() * self.profile_norm);
        } else {
            self.last_relative[2] = None;
        }
        Ok(())
    }

    /// Relative errors of the most recent sample (`None` before the first
    /// difference quotient is available).
    pub fn last_relative(&self) -> [Option<f64>; 3] {
        self.last_relative
    }

    pub fn norms(&self) -> Result<ErrorNorms> {
        if self.samples[0] == 0 || self.samples[2] == 0 {
            return Err(Error::InvalidArgument(
                "error norms need at least two observed time levels".into(),
            ));
        }
        Ok(ErrorNorms {
            e1: self.max_err[0] / self.max_ref[0],
            e2: self.max_err[1] / self.max_ref[1],
            e3: self.max_err[2] / self.max_ref[2],
        })
    }
}

/// Mesh, coefficient and operators of one refinement level.
pub struct LevelSetup {
    pub level: MeshLevel,
    pub mesh: Arc<SimplicialMesh>,
    pub eps: PermittivityField,
    pub ops: SchemeOperators,
}

pub fn setup_level(case: &ManufacturedCase, level: MeshLevel) -> Result<LevelSetup> {
    let mesh = Arc::new(build_disk_mesh(level)?);
    let eps = case.permittivity();
    let ops = SchemeOperators::assemble(Arc::clone(&mesh), &eps)?;
    Ok(LevelSetup {
        level,
        mesh,
        eps,
        ops,
    })
}

/// Interpolated initial pair `(e₀ₕ, e₁ₕ)`.
pub fn initial_data(
    case: &ManufacturedCase,
    mesh: &SimplicialMesh,
) -> Result<(NodalVectorField, NodalVectorField)> {
    Ok((
        interpolate(mesh, |x| case.initial_value(x))?,
        interpolate(mesh, |x| case.initial_velocity(x))?,
    ))
}

/// Runs the manufactured case on a prepared level and returns the error
/// norms with the trajectory. `observer` sees every state after the monitor.
pub fn simulate(
    case: &ManufacturedCase,
    setup: &LevelSetup,
    tau: f64,
    observer: &mut dyn FnMut(&SimulationState, &ErrorMonitor) -> Result<()>,
) -> Result<(ErrorNorms, Trajectory)> {
    let (e0, e1) = initial_data(case, &setup.mesh)?;
    let state = initialize(&e0, &e1, tau)?;
    let mut monitor = ErrorMonitor::new(Arc::clone(&setup.mesh), case)?;
    let source = |x: &[f64], t: f64| case.source(x, t);
    let trajectory = run(
        &setup.ops,
        state,
        &RunOptions::new(case.final_time()),
        Some(&source),
        &mut |s| {
            monitor.observe(s)?;
            observer(s, &monitor)
        },
    )?;
    Ok((monitor.norms()?, trajectory))
}

/// Largest `τ ≤ safety · τ_spectral` that divides `T`.
pub fn guarded_tau(setup: &LevelSetup, final_time: f64, safety: f64) -> Result<f64> {
    if !(safety > 0.0 && safety <= 1.0) {
        return Err(Error::InvalidArgument(format!("safety factor must lie in (0, 1], got {safety}")));
    }
    let bounds = cfl_bound(&setup.ops, &setup.eps, None)?;
    let steps = (final_time / (safety * bounds.tau_spectral)).ceil().max(1.0);
    Ok(final_time / steps)
}

/// Inverse-inequality constant calibrated on the coarsest disk mesh.
pub fn calibrated_inverse_constant(case: &ManufacturedCase) -> Result<f64> {
    let setup = setup_level(case, MeshLevel::new(1)?)?;
    calibrate_inverse_constant(&setup.ops, &setup.eps)
}

/// One row of a convergence table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LevelResult {
    pub level: u32,
    pub nel: usize,
    pub nno: usize,
    pub h: f64,
    pub tau: f64,
    pub steps: usize,
    pub errors: ErrorNorms,
    /// `e_{l−1}/e_l` per norm, when the previous level is in the report.
    pub ratios: Option<[f64; 3]>,
    /// Level beyond the reference range.
    pub extrapolated: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceReport {
    pub m: u32,
    pub final_time: f64,
    pub tau_rule: String,
    pub mesh_mapping: String,
    pub quadrature: String,
    pub levels: Vec<LevelResult>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StudyOptions {
    /// Overrides the level-dependent step rule.
    pub tau: Option<f64>,
    /// CFL fraction used for levels without a reference step.
    pub safety_factor: f64,
}

impl Default for StudyOptions {
    fn default() -> Self {
        StudyOptions {
            tau: None,
            safety_factor: 0.9,
        }
    }
}

/// Step used for `level`: the override, the reference rule for levels
/// `1..=6`, else a CFL-guarded step.
pub fn level_tau(
    case: &ManufacturedCase,
    setup: &LevelSetup,
    options: &StudyOptions,
) -> Result<f64> {
    match options.tau {
        Some(tau) => Ok(tau),
        None if setup.level.get() <= MAX_REFERENCE_LEVEL => Ok(reference_tau(setup.level)),
        None => guarded_tau(setup, case.final_time(), options.safety_factor),
    }
}

pub fn run_level(case: &ManufacturedCase, level: MeshLevel, options: &StudyOptions) -> Result<LevelResult> {
    let setup = setup_level(case, level)?;
    let tau = level_tau(case, &setup, options)?;
    let (errors, trajectory) = simulate(case, &setup, tau, &mut |_, _| Ok(()))?;
    Ok(LevelResult {
        level: level.get(),
        nel: setup.mesh.num_cells(),
        nno: setup.mesh.num_vertices(),
        h: level.h_ref(),
        tau,
        steps: trajectory.steps,
        errors,
        ratios: None,
        extrapolated: level.get() > MAX_REFERENCE_LEVEL,
    })
}

/// Runs levels `l_min..=l_max` concurrently and tabulates errors and ratios.
pub fn convergence_study(
    case: &ManufacturedCase,
    l_min: u32,
    l_max: u32,
    options: &StudyOptions,
) -> Result<ConvergenceReport> {
    if l_min < 1 || l_min > l_max {
        return Err(Error::InvalidArgument(format!("invalid level range {l_min}..{l_max}")));
    }
    if let Some(tau) = options.tau {
        step_count(case.final_time(), tau)?;
    }
    let levels = (l_min..=l_max).map(MeshLevel::new).collect::<Result<Vec<_>>>()?;
    let mut rows = levels
        .par_iter()
        .map(|&level| {
            run_level(case, level, options).map_err(|e| Error::AtLevel {
                level: level.get(),
                source: Box::new(e),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    for i in 1..rows.len() {
        let (prev, curr) = (rows[i - 1].errors, rows[i].errors);
        rows[i].ratios = Some([prev.e1 / curr.e1, prev.e2 / curr.e2, prev.e3 / curr.e3]);
    }
    Ok(ConvergenceReport {
        m: case.m(),
        final_time: case.final_time(),
        tau_rule: match options.tau {
            Some(tau) => format!("fixed {tau:?}"),
            None => format!(
                "0.025*2^-l for l<={MAX_REFERENCE_LEVEL}, else T/ceil(T/({:?}*tau_spectral))",
                options.safety_factor
            ),
        },
        mesh_mapping: "square-to-disk, linf radius to euclidean radius, angle linear per octant".into(),
        quadrature: "degree4".into(),
        levels: rows,
    })
}

impl ConvergenceReport {
    pub fn write_csv<W: Write>(&self, out: &mut W) -> std::io::Result<()> {
        writeln!(out, "l,nel,nno,e1,ratio1,e2,ratio2,e3,ratio3")?;
        for row in &self.levels {
            let ratio = |i: usize| row.ratios.map(|r| format!("{:.6}", r[i])).unwrap_or_default();
            writeln!(
                out,
                "{},{},{},{:.6e},{},{:.6e},{},{:.6e},{}",
                row.level,
                row.nel,
                row.nno,
                row.errors.e1,
                ratio(0),
                row.errors.e2,
                ratio(1),
                row.errors.e3,
                ratio(2)
            )?;
        }
        Ok(())
    }

    /// `norm,l,log2_h,log2_error` rows, one per level and norm.
    pub fn write_rate_plot_data<W: Write>(&self, out: &mut W) -> std::io::Result<()> {
        writeln!(out, "norm,l,log2_h,log2_error")?;
        for (name, pick) in NORM_PICKERS {
            for row in &self.levels {
                writeln!(
                    out,
                    "{name},{},{:.12},{:.12}",
                    row.level,
                    row.h.log2(),
                    pick(&row.errors).log2()
                )?;
            }
        }
        Ok(())
    }

    /// Least-squares slope of `log₂ error` against `log₂ h` for norm
    /// `0, 1, 2` (`e¹, e², e³`) over the given levels.
    pub fn observed_order(&self, norm: usize, levels: std::ops::RangeInclusive<u32>) -> Result<f64> {
        let (_, pick) = NORM_PICKERS
            .get(norm)
            .ok_or_else(|| Error::InvalidArgument(format!("norm index {norm} out of range")))?;
        let (xs, ys): (Vec<f64>, Vec<f64>) = self
            .levels
            .iter()
            .filter(|r| levels.contains(&r.level))
            .map(|r| (r.h.log2(), pick(&r.errors).log2()))
            .unzip();
        least_squares_slope(&xs, &ys)
    }

    pub fn level(&self, l: u32) -> Option<&LevelResult> {
        self.levels.iter().find(|r| r.level == l)
    }
}

const NORM_PICKERS: [(&str, fn(&ErrorNorms) -> f64); 3] =
    [("e1", |e| e.e1), ("e2", |e| e.e2), ("e3", |e| e.e3)];

pub fn least_squares_slope(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return Err(Error::InvalidArgument("slope fit needs at least two points".into()));
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidArgument("slope fit needs distinct abscissae".into()));
    }
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    Ok(sxy / sxx)
}

fn write_file(path: &Path, f: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    f(&mut out).and_then(|_| out.flush()).map_err(|e| Error::io(path, e))
}

pub fn write_report_csv(report: &ConvergenceReport, path: impl AsRef<Path>) -> Result<()> {
    write_file(path.as_ref(), |out| report.write_csv(out))
}

pub fn write_rate_plot_data(report: &ConvergenceReport, path: impl AsRef<Path>) -> Result<()> {
    write_file(path.as_ref(), |out| report.write_rate_plot_data(out))
}
