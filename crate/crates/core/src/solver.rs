//! Explicit leapfrog stepping with lumped interior and boundary masses.
//!
//! Each step solves
//!
//! ```text
//! (M/τ² + B/2τ) eᵏ⁺¹ = (2M/τ²) eᵏ − (M/τ² − B/2τ) eᵏ⁻¹ − A eᵏ + Fᵏ
//! ```
//!
//! where `M` and `B` are diagonal, so the only non-diagonal work per step is
//! one sparse product with `A = K + W − D` (stiffness, weighted divergence,
//! divergence).

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::assembly::{
    assemble_boundary_lumped_mass, assemble_div_div, assemble_lumped_mass, assemble_stiffness,
    assemble_weighted_div, lumped_mass_from_cell_weights, DiagonalMatrix, SparseMatrix,
};
use crate::error::{Error, Result};
use crate::fespace::{NodalVectorField, PermittivityField, Vec3};
use crate::mesh::SimplicialMesh;

/// Right-hand side `f(x, t)`.
pub type Source<'a> = &'a (dyn Fn(&[f64], f64) -> Vec3 + Sync);

/// Assembled left-hand-side operators of the scheme.
#[derive(Debug)]
pub struct SchemeOperators {
    mesh: Arc<SimplicialMesh>,
    mass: DiagonalMatrix,
    boundary_mass: DiagonalMatrix,
    load_mass: DiagonalMatrix,
    stiffness: SparseMatrix,
    operator: SparseMatrix,
    applications: AtomicUsize,
}

impl SchemeOperators {
    pub fn assemble(mesh: Arc<SimplicialMesh>, eps: &PermittivityField) -> Result<Self> {
        let stiffness = assemble_stiffness(&mesh);
        let operator = stiffness
            .add_scaled(1.0, &assemble_weighted_div(&mesh, eps))?
            .add_scaled(-1.0, &assemble_div_div(&mesh))?;
        let mass = assemble_lumped_mass(&mesh, eps);
        let boundary_mass = assemble_boundary_lumped_mass(&mesh);
        let ones = vec![1.0; mesh.num_cells()];
        let load_mass = lumped_mass_from_cell_weights(&mesh, &ones);
        Self::from_parts(mesh, mass, boundary_mass, load_mass, stiffness, operator)
    }

    pub fn from_parts(
        mesh: Arc<SimplicialMesh>,
        mass: DiagonalMatrix,
        boundary_mass: DiagonalMatrix,
        load_mass: DiagonalMatrix,
        stiffness: SparseMatrix,
        operator: SparseMatrix,
    ) -> Result<Self> {
        let n = mesh.num_vertices() * mesh.dim();
        for len in [mass.len(), boundary_mass.len(), load_mass.len(), stiffness.nrows(), operator.nrows()] {
            if len != n {
                return Err(Error::DimensionMismatch { expected: n, actual: len });
            }
        }
        if let Some(pos) = mass.diag().iter().position(|&m| !(m > 0.0)) {
            return Err(Error::InvalidArgument(format!(
                "lumped mass must be positive (dof {pos} has {})",
                mass.diag()[pos]
            )));
        }
        if boundary_mass.diag().iter().any(|&b| b < 0.0) {
            return Err(Error::InvalidArgument("boundary mass must be non-negative".into()));
        }
        Ok(SchemeOperators {
            mesh,
            mass,
            boundary_mass,
            load_mass,
            stiffness,
            operator,
            applications: AtomicUsize::new(0),
        })
    }

    /// Same operators with the absorbing boundary term removed.
    pub fn without_boundary(&self) -> SchemeOperators {
        SchemeOperators {
            mesh: Arc::clone(&self.mesh),
            mass: self.mass.clone(),
            boundary_mass: DiagonalMatrix::zeros(self.boundary_mass.len()),
            load_mass: self.load_mass.clone(),
            stiffness: self.stiffness.clone(),
            operator: self.operator.clone(),
            applications: AtomicUsize::new(0),
        }
    }

    pub fn mesh(&self) -> &Arc<SimplicialMesh> {
        &self.mesh
    }

    /// Lumped `ε_h` mass `M`.
    pub fn mass(&self) -> &DiagonalMatrix {
        &self.mass
    }

    /// Lumped boundary mass `B`.
    pub fn boundary_mass(&self) -> &DiagonalMatrix {
        &self.boundary_mass
    }

    /// Unweighted lumped mass used for the source load.
    pub fn load_mass(&self) -> &DiagonalMatrix {
        &self.load_mass
    }

    pub fn stiffness(&self) -> &SparseMatrix {
        &self.stiffness
    }

    /// `A = K + W − D`.
    pub fn operator(&self) -> &SparseMatrix {
        &self.operator
    }

    /// Number of sparse products with `A` performed by [`step`] so far.
    pub fn operator_applications(&self) -> usize {
        self.applications.load(Ordering::Relaxed)
    }

    fn apply_operator(&self, x: &[f64], y: &mut [f64]) -> Result<()> {
        self.applications.fetch_add(1, Ordering::Relaxed);
        self.operator.spmv_into(x, y)
    }

    fn num_dofs(&self) -> usize {
        self.mass.len()
    }
}

/// Two consecutive time levels plus the energy trace.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulationState {
    /// Index of `e_curr` (`eₕᵏ`).
    pub k: usize,
    pub tau: f64,
    pub e_prev: NodalVectorField,
    pub e_curr: NodalVectorField,
    pub energy_history: Vec<f64>,
}

impl SimulationState {
    pub fn time(&self) -> f64 {
        self.k as f64 * self.tau
    }

    /// `(eᵏ − eᵏ⁻¹)/τ`.
    pub fn difference_quotient(&self) -> Vec<f64> {
        self.e_curr
            .values()
            .iter()
            .zip(self.e_prev.values())
            .map(|(a, b)| (a - b) / self.tau)
            .collect()
    }

    /// Swaps the two time levels, which runs the scheme backwards in time.
    pub fn reversed(&self) -> SimulationState {
        SimulationState {
            k: self.k,
            tau: self.tau,
            e_prev: self.e_curr.clone(),
            e_curr: self.e_prev.clone(),
            energy_history: Vec::new(),
        }
    }
}

/// `eₕ⁰ = e0h`, `eₕ¹ = e0h + τ e1h`, `k = 1`.
pub fn initialize(
    e0h: &NodalVectorField,
    e1h: &NodalVectorField,
    tau: f64,
) -> Result<SimulationState> {
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(Error::InvalidArgument(format!("time step must be positive, got {tau}")));
    }
    if !e0h.same_shape(e1h) {
        return Err(Error::DimensionMismatch {
            expected: e0h.values().len(),
            actual: e1h.values().len(),
        });
    }
    Ok(SimulationState {
        k: 1,
        tau,
        e_prev: e0h.clone(),
        e_curr: e0h.added(tau, e1h)?,
        energy_history: Vec::new(),
    })
}

/// Discrete energy `‖(eᵏ − eᵏ⁻¹)/τ‖²_{ε_h,h} + ‖∇eᵏ‖² + ‖∇eᵏ⁻¹‖²`.
pub fn energy(state: &SimulationState, ops: &SchemeOperators) -> f64 {
    let velocity = state.difference_quotient();
    let kinetic = ops.mass.quadratic_form(&velocity);
    let grad_curr = ops.stiffness.quadratic_form(state.e_curr.values()).unwrap_or(f64::NAN);
    let grad_prev = ops.stiffness.quadratic_form(state.e_prev.values()).unwrap_or(f64::NAN);
    kinetic + grad_curr + grad_prev
}

/// Lumped load `Fᵏ` of the source at time `t`.
pub fn source_load(ops: &SchemeOperators, source: Source<'_>, t: f64) -> Vec<f64> {
    let mesh = &ops.mesh;
    let dim = mesh.dim();
    let mut load = vec![0.0; ops.num_dofs()];
    for i in 0..mesh.num_vertices() {
        let f = source(mesh.vertex(i), t);
        for c in 0..dim {
            load[i * dim + c] = ops.load_mass.diag()[i * dim + c] * f[c];
        }
    }
    load
}

/// Advances `state` from `(eᵏ⁻¹, eᵏ)` to `(eᵏ, eᵏ⁺¹)` and appends the new energy.
pub fn step(
    state: &mut SimulationState,
    ops: &SchemeOperators,
    source: Option<Source<'_>>,
) -> Result<()> {
    let n = ops.num_dofs();
    if state.e_curr.values().len() != n || state.e_prev.values().len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            actual: state.e_curr.values().len(),
        });
    }
    if state.k < 1 || !(state.tau > 0.0) {
        return Err(Error::InvalidArgument("state must have k >= 1 and tau > 0".into()));
    }
    let tau = state.tau;
    let mut rhs = match source {
        Some(f) => source_load(ops, f, state.time()),
        None => vec![0.0; n],
    };
    let mut applied = vec![0.0; n];
    ops.apply_operator(state.e_curr.values(), &mut applied)?;
    let inv_tau2 = 1.0 / (tau * tau);
    let inv_2tau = 0.5 / tau;
    let curr = state.e_curr.values();
    let prev = state.e_prev.values();
    for dof in 0..n {
        let m = ops.mass.diag()[dof] * inv_tau2;
        let b = ops.boundary_mass.diag()[dof] * inv_2tau;
        rhs[dof] = (2.0 * m * curr[dof] - (m - b) * prev[dof] - applied[dof] + rhs[dof]) / (m + b);
    }
    let next = rhs;
    let step_index = state.k + 1;
    if next.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteState { step: step_index });
    }
    let next = NodalVectorField::from_values(state.e_curr.num_vertices(), state.e_curr.dim(), next)?;
    state.e_prev = std::mem::replace(&mut state.e_curr, next);
    state.k = step_index;
    let e = energy(state, ops);
    if !e.is_finite() {
        return Err(Error::NonFiniteState { step: step_index });
    }
    state.energy_history.push(e);
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunOptions {
    pub final_time: f64,
    /// Abort once the energy exceeds this multiple of its initial value.
    pub blowup_factor: f64,
}

impl RunOptions {
    pub fn new(final_time: f64) -> Self {
        RunOptions {
            final_time,
            blowup_factor: 1e6,
        }
    }
}

/// Number of steps `N = T/τ`, which must be an integer to rounding.
pub fn step_count(final_time: f64, tau: f64) -> Result<usize> {
    if !(final_time > 0.0) || !(tau > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "need T > 0 and tau > 0 (T = {final_time}, tau = {tau})"
        )));
    }
    let ratio = final_time / tau;
    let n = ratio.round();
    if n < 1.0 || (ratio - n).abs() > 1e-9 * ratio.max(1.0) {
        return Err(Error::InvalidArgument(format!(
            "tau = {tau} does not divide T = {final_time} (T/tau = {ratio})"
        )));
    }
    Ok(n as usize)
}

/// Result of [`run`]: the final two levels and the whole energy trace.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub state: SimulationState,
    pub steps: usize,
    pub num_levels: usize,
}

/// Steps from `k = 1` up to `k = N`, calling `observer` on the initial state
/// and after every step.
pub fn run(
    ops: &SchemeOperators,
    mut state: SimulationState,
    options: &RunOptions,
    source: Option<Source<'_>>,
    observer: &mut dyn FnMut(&SimulationState) -> Result<()>,
) -> Result<Trajectory> {
    let num_levels = step_count(options.final_time, state.tau)?;
    if state.energy_history.is_empty() {
        state.energy_history.push(energy(&state, ops));
    }
    let mut reference = state.energy_history[0];
    observer(&state)?;
    let mut steps = 0;
    while state.k < num_levels {
        step(&mut state, ops, source)?;
        steps += 1;
        let e = *state.energy_history.last().expect("step pushes energy");
        if reference == 0.0 {
            reference = e;
        } else if e > options.blowup_factor * reference {
            return Err(Error::Instability {
                step: state.k,
                energy: e,
                reference,
                factor: options.blowup_factor,
            });
        }
        observer(&state)?;
    }
    Ok(Trajectory {
        state,
        steps,
        num_levels,
    })
}

/// Constants of the discrete energy estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StabilityConstants {
    /// `2 + |ε|₁,∞ + 2|ε|₂,∞`
    pub eta: f64,
    /// `|ε|₁,∞`
    pub theta: f64,
    /// `T²|ε|₂,∞`
    pub rho: f64,
    /// `4T(η + ρ)`
    pub beta: f64,
    /// `ν / C = (1 + 3‖ε − 1‖∞)^½`; the inverse-inequality constant `C` is
    /// mesh-family dependent, see [`calibrate_inverse_constant`].
    pub nu_over_c: f64,
    /// Admissible step cap `1/(2η)`.
    pub tau_cap: f64,
}

pub fn stability_constants(eps: &PermittivityField, final_time: f64) -> Result<StabilityConstants> {
    if !(final_time > 0.0) {
        return Err(Error::InvalidArgument("final time must be positive".into()));
    }
    let norms = eps.norms();
    let (a, b) = (norms.seminorm_1, norms.seminorm_2);
    let eta = 2.0 + a + 2.0 * b;
    let rho = final_time * final_time * b;
    Ok(StabilityConstants {
        eta,
        theta: a,
        rho,
        beta: 4.0 * final_time * (eta + rho),
        nu_over_c: (1.0 + 3.0 * eps.excess_sup()).sqrt(),
        tau_cap: 1.0 / (2.0 * eta),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerIterationOptions {
    pub tolerance: f64,
    pub max_iterations: usize,
    pub seed: u64,
}

impl Default for PowerIterationOptions {
    fn default() -> Self {
        PowerIterationOptions {
            tolerance: 1e-6,
            max_iterations: 200_000,
            seed: 0x5eed,
        }
    }
}

/// Largest eigenvalue of `M^{-1/2} sym(A) M^{-1/2}` (equivalently the
/// generalized problem `sym(A) x = λ M x`) by power iteration.
pub fn max_generalized_eigenvalue(ops: &SchemeOperators, options: &PowerIterationOptions) -> Result<f64> {
    let n = ops.num_dofs();
    let inv_sqrt_mass: Vec<f64> = ops.mass.diag().iter().map(|m| 1.0 / m.sqrt()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    let mut x: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    normalize(&mut x);
    let mut scaled = vec![0.0; n];
    let mut forward = vec![0.0; n];
    let mut backward = vec![0.0; n];
    let mut lambda = 0.0;
    let mut change = f64::INFINITY;
    for _ in 0..options.max_iterations {
        for i in 0..n {
            scaled[i] = x[i] * inv_sqrt_mass[i];
        }
        ops.operator.spmv_into(&scaled, &mut forward)?;
        ops.operator.transpose_spmv_into(&scaled, &mut backward)?;
        let mut y: Vec<f64> = (0..n)
            .map(|i| 0.5 * (forward[i] + backward[i]) * inv_sqrt_mass[i])
            .collect();
        let next_lambda: f64 = x.iter().zip(&y).map(|(a, b)| a * b).sum();
        change = (next_lambda - lambda).abs() / next_lambda.abs().max(f64::MIN_POSITIVE);
        lambda = next_lambda;
        normalize(&mut y);
        x = y;
        if change <= options.tolerance {
            return Ok(lambda);
        }
    }
    Err(Error::PowerIteration {
        iterations: options.max_iterations,
        last_estimate: lambda,
        last_change: change,
        last_iterate: x,
    })
}

fn normalize(x: &mut [f64]) {
    let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm > 0.0 {
        x.iter_mut().for_each(|v| *v /= norm);
    }
}

/// Time-step bounds for the explicit scheme.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CflBounds {
    /// `h_min / ν` with `ν = C (1 + 3‖ε − 1‖∞)^½`.
    pub tau_theory: f64,
    /// `2 / √λ_max`: the leapfrog limit for the undamped operator.
    pub tau_spectral: f64,
    pub lambda_max: f64,
    pub nu: f64,
    pub inverse_constant: f64,
}

/// `C = h_min √λ_max / (1 + 3‖ε − 1‖∞)^½`, which makes `h_min/ν = 1/√λ_max`
/// (half the leapfrog limit) on the mesh it is computed on.
fn inverse_constant_from(h_min: f64, lambda_max: f64, eps: &PermittivityField) -> f64 {
    h_min * lambda_max.sqrt() / (1.0 + 3.0 * eps.excess_sup()).sqrt()
}

/// Estimates `C` of the inverse inequality. Calibrate once on the coarsest
/// mesh of a family and pass the value to [`cfl_bound`] for the others.
pub fn calibrate_inverse_constant(ops: &SchemeOperators, eps: &PermittivityField) -> Result<f64> {
    let lambda = max_generalized_eigenvalue(ops, &PowerIterationOptions::default())?;
    Ok(inverse_constant_from(ops.mesh.h_min(), lambda, eps))
}

/// Both CFL bounds. Without a calibrated constant, `C` is calibrated on
/// this very mesh.
pub fn cfl_bound(
    ops: &SchemeOperators,
    eps: &PermittivityField,
    inverse_constant: Option<f64>,
) -> Result<CflBounds> {
    let lambda_max = max_generalized_eigenvalue(ops, &PowerIterationOptions::default())?;
    let h = ops.mesh.h_min();
    let constant = inverse_constant.unwrap_or_else(|| inverse_constant_from(h, lambda_max, eps));
    let nu = constant * (1.0 + 3.0 * eps.excess_sup()).sqrt();
    Ok(CflBounds {
        tau_theory: h / nu,
        tau_spectral: 2.0 / lambda_max.sqrt(),
        lambda_max,
        nu,
        inverse_constant: constant,
    })
}

/// Seeded random nodal field with entries in `[-1, 1)`.
pub fn random_field(mesh: &SimplicialMesh, seed: u64) -> NodalVectorField {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = mesh.num_vertices() * mesh.dim();
    let values = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    NodalVectorField::from_values(mesh.num_vertices(), mesh.dim(), values)
        .expect("random values are finite")
}

/// Fewest time levels a stability probe runs, whatever `T/τ` is.
pub const MIN_PROBE_LEVELS: usize = 20;

/// Number of levels `max(⌈T/τ⌉, MIN_PROBE_LEVELS)` used by probes.
pub fn probe_levels(final_time: f64, tau: f64) -> usize {
    ((final_time / tau).ceil() as usize).max(MIN_PROBE_LEVELS)
}

/// Runs [`probe_levels`] source-free levels from `(e0, e0)` and reports
/// whether the energy stayed below `blowup_factor` times its initial value.
pub fn probe_stability(
    ops: &SchemeOperators,
    e0: &NodalVectorField,
    tau: f64,
    final_time: f64,
    blowup_factor: f64,
) -> Result<bool> {
    let steps = probe_levels(final_time, tau) as f64;
    let state = initialize(e0, &NodalVectorField::zeros(e0.num_vertices(), e0.dim()), tau)?;
    let options = RunOptions {
        final_time: steps * tau,
        blowup_factor,
    };
    match run(ops, state, &options, None, &mut |_| Ok(())) {
        Ok(_) => Ok(true),
        Err(e) if e.is_instability() => Ok(false),
        Err(e) => Err(e),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepOptions {
    pub final_time: f64,
    pub seed: u64,
    /// First probed multiple of `τ_spectral`.
    pub start_factor: f64,
    /// Ratio between consecutive probes of the geometric sweep.
    pub growth: f64,
    /// Largest multiple probed before giving up.
    pub max_factor: f64,
    /// Relative width at which bisection stops.
    pub tolerance: f64,
    pub blowup_factor: f64,
}

impl Default for SweepOptions {
    fn default() -> Self {
        SweepOptions {
            final_time: 0.5,
            seed: 1,
            start_factor: 0.25,
            growth: 1.5,
            max_factor: 64.0,
            tolerance: 0.01,
            blowup_factor: 1e6,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub tau_spectral: f64,
    /// `(τ/τ_spectral, stable)` for every probe, in the order run.
    pub probes: Vec<(f64, bool)>,
    /// Bisected stability threshold as a multiple of `τ_spectral`; `None`
    /// if no probe up to `max_factor` was unstable.
    pub threshold: Option<f64>,
}

/// Geometric sweep in `τ/τ_spectral` until the first unstable probe,
/// followed by bisection of the last stable/unstable bracket.
pub fn cfl_sweep(ops: &SchemeOperators, options: &SweepOptions) -> Result<SweepResult> {
    if !(options.growth > 1.0 && options.start_factor > 0.0 && options.tolerance > 0.0) {
        return Err(Error::InvalidArgument("sweep needs growth > 1, start > 0, tolerance > 0".into()));
    }
    let lambda = max_generalized_eigenvalue(
        ops,
        &PowerIterationOptions {
            seed: options.seed,
            ..PowerIterationOptions::default()
        },
    )?;
    let tau_spectral = 2.0 / lambda.sqrt();
    let e0 = random_field(&ops.mesh, options.seed);
    let mut probes = Vec::new();
    let mut probe = |factor: f64| -> Result<bool> {
        let stable = probe_stability(ops, &e0, factor * tau_spectral, options.final_time, options.blowup_factor)?;
        probes.push((factor, stable));
        Ok(stable)
    };
    let mut low = 0.0;
    let mut factor = options.start_factor;
    let mut high = None;
    while factor <= options.max_factor {
        if probe(factor)? {
            low = factor;
            factor *= options.growth;
        } else {
            high = Some(factor);
            break;
        }
    }
    let threshold = match high {
        None => None,
        Some(mut high) => {
            while high - low > options.tolerance * high {
                let mid = 0.5 * (low + high);
                if probe(mid)? {
                    low = mid;
                } else {
                    high = mid;
                }
            }
            Some(0.5 * (low + high))
        }
    };
    Ok(SweepResult {
        tau_spectral,
        probes,
        threshold,
    })
}
