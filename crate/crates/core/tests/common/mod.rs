//! Helpers shared by the integration tests: perturbed meshes, a dense
//! re-implementation of the scheme and a few reference checks.

#![allow(dead_code)]

use std::sync::Arc;

use maxwell_p1::assembly::{assemble_div_div, assemble_weighted_div};
use maxwell_p1::fespace::{
    consistent_norm_sq, lumped_norm_sq, NodalVectorField, PermittivityField, Vec3,
};
use maxwell_p1::mesh::{build_cube_mesh, build_square_mesh, MeshLevel, SimplicialMesh};
use maxwell_p1::solver::{initialize, run, RunOptions, SchemeOperators};
use maxwell_p1::verify::ManufacturedCase;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Moves every vertex of `mesh` by up to `amplitude · h_min` per coordinate;
/// boundary vertices of the unit square/cube only slide along the boundary.
pub fn jittered(mesh: &SimplicialMesh, amplitude: f64, seed: u64) -> SimplicialMesh {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dim = mesh.dim();
    let shift = amplitude * mesh.h_min();
    let (lo, hi) = bounding_box(mesh);
    let mut coords = mesh.coords().to_vec();
    for i in 0..mesh.num_vertices() {
        for c in 0..dim {
            let x = &mut coords[i * dim + c];
            let on_face = (*x - lo[c]).abs() < 1e-12 || (*x - hi[c]).abs() < 1e-12;
            let delta = rng.gen_range(-shift..shift);
            if !on_face {
                *x += delta;
            }
        }
    }
    SimplicialMesh::new(dim, coords, mesh.cells().to_vec()).expect("small jitter keeps cells valid")
}

fn bounding_box(mesh: &SimplicialMesh) -> ([f64; 3], [f64; 3]) {
    let dim = mesh.dim();
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for i in 0..mesh.num_vertices() {
        for c in 0..dim {
            lo[c] = lo[c].min(mesh.vertex(i)[c]);
            hi[c] = hi[c].max(mesh.vertex(i)[c]);
        }
    }
    (lo, hi)
}

/// Square mesh of level 1..=3 with random interior jitter.
pub fn random_square_mesh(seed: u64) -> SimplicialMesh {
    let level = MeshLevel::new(1 + (seed % 3) as u32).unwrap();
    jittered(&build_square_mesh(level).unwrap(), 0.2, seed)
}

/// Cube mesh with 2 or 3 cells per side and random interior jitter.
pub fn random_cube_mesh(seed: u64) -> SimplicialMesh {
    jittered(&build_cube_mesh(2 + (seed % 2) as usize).unwrap(), 0.08, seed)
}

pub fn random_nodal_field(mesh: &SimplicialMesh, rng: &mut ChaCha8Rng) -> NodalVectorField {
    let n = mesh.num_vertices() * mesh.dim();
    let values = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    NodalVectorField::from_values(mesh.num_vertices(), mesh.dim(), values).unwrap()
}

/// Largest `|weighted_div − div_div|` entry with `ε ≡ 1`.
pub fn unit_permittivity_cancellation(mesh: &SimplicialMesh) -> f64 {
    let weighted = assemble_weighted_div(mesh, &PermittivityField::constant(1.0));
    let plain = assemble_div_div(mesh);
    weighted.add_scaled(-1.0, &plain).unwrap().max_abs()
}

/// Extremes of `‖v‖_{ε_h,h} / ‖v‖_{ε_h}` over `samples` random fields, with
/// a random positive cell weight.
pub fn norm_ratio_range(mesh: &SimplicialMesh, samples: usize, seed: u64) -> (f64, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let eps_h: Vec<f64> = (0..mesh.num_cells()).map(|_| rng.gen_range(1.0..3.0)).collect();
    let mut range = (f64::INFINITY, 0.0f64);
    for _ in 0..samples {
        let v = random_nodal_field(mesh, &mut rng);
        let ratio = (lumped_norm_sq(mesh, &eps_h, &v) / consistent_norm_sq(mesh, &eps_h, &v)).sqrt();
        range = (range.0.min(ratio), range.1.max(ratio));
    }
    range
}

/// Strong-form residual `ε eₜₜ − Δe − ∇(∇·(εe)) + ∇(∇·e) − f` by central
/// differences with step `h`, largest component.
pub fn strong_residual(case: &ManufacturedCase, x: [f64; 2], t: f64, h: f64) -> f64 {
    let e = |p: [f64; 2], s: f64| -> [f64; 2] {
        let v = case.exact(&p, s);
        [v[0], v[1]]
    };
    let eps = |p: [f64; 2]| case.epsilon(p[0].hypot(p[1]));
    let at = |dx: f64, dy: f64| [x[0] + dx, x[1] + dy];
    let mut out = [0.0; 2];
    for c in 0..2 {
        let ett = (e(x, t + h)[c] - 2.0 * e(x, t)[c] + e(x, t - h)[c]) / (h * h);
        let lap = (e(at(h, 0.0), t)[c] + e(at(-h, 0.0), t)[c] + e(at(0.0, h), t)[c] + e(at(0.0, -h), t)[c]
            - 4.0 * e(x, t)[c])
            / (h * h);
        out[c] = eps(x) * ett - lap;
    }
    // ∂_c (∂_d w_d) for w = e and w = εe, by second and mixed differences
    let grad_div = |w: &dyn Fn([f64; 2]) -> [f64; 2]| -> [f64; 2] {
        let unit = |d: usize, s: f64| if d == 0 { at(s, 0.0) } else { at(0.0, s) };
        let mut g = [0.0; 2];
        for c in 0..2 {
            for d in 0..2 {
                g[c] += if c == d {
                    (w(unit(c, h))[d] - 2.0 * w(x)[d] + w(unit(c, -h))[d]) / (h * h)
                } else {
                    let p = |sc: f64, sd: f64| {
                        let mut q = x;
                        q[c] += sc;
                        q[d] += sd;
                        w(q)[d]
                    };
                    (p(h, h) - p(h, -h) - p(-h, h) + p(-h, -h)) / (4.0 * h * h)
                };
            }
        }
        g
    };
    let plain = grad_div(&|p| e(p, t));
    let weighted = grad_div(&|p| {
        let v = e(p, t);
        [eps(p) * v[0], eps(p) * v[1]]
    });
    let f = case.source(&x, t);
    (0..2)
        .map(|c| (out[c] - weighted[c] + plain[c] - f[c]).abs())
        .fold(0.0, f64::max)
}

/// Runs `steps` source-free steps without boundary damping, swaps the last
/// two levels and runs back; returns the largest deviation from `(e⁰, e¹)`.
pub fn reversibility_defect(ops: &SchemeOperators, e0: &NodalVectorField, e1: &NodalVectorField, tau: f64, steps: usize) -> f64 {
    let closed = ops.without_boundary();
    let start = initialize(e0, e1, tau).unwrap();
    let options = RunOptions::new((steps + 1) as f64 * tau);
    let forward = run(&closed, start.clone(), &options, None, &mut |_| Ok(())).unwrap();
    let mut reversed = forward.state.reversed();
    reversed.k = 1;
    let backward = run(&closed, reversed, &options, None, &mut |_| Ok(())).unwrap();
    let end = backward.state;
    let diff = |a: &NodalVectorField, b: &NodalVectorField| {
        a.values().iter().zip(b.values()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
    };
    diff(&end.e_curr, &start.e_prev).max(diff(&end.e_prev, &start.e_curr))
}

/// Dense matrices of the scheme built from coordinates alone.
pub struct DenseScheme {
    pub n: usize,
    pub mass: Vec<Vec<f64>>,
    pub boundary: Vec<Vec<f64>>,
    pub load: Vec<Vec<f64>>,
    pub operator: Vec<Vec<f64>>,
}

/// Triangle P1 gradients from the inverse Jacobian, and the area.
fn triangle(p: [[f64; 2]; 3]) -> ([[f64; 2]; 3], f64) {
    let (a, b) = ([p[1][0] - p[0][0], p[1][1] - p[0][1]], [p[2][0] - p[0][0], p[2][1] - p[0][1]]);
    let det = a[0] * b[1] - a[1] * b[0];
    // rows of J⁻¹ with J = [a b]
    let g1 = [b[1] / det, -b[0] / det];
    let g2 = [-a[1] / det, a[0] / det];
    ([[-g1[0] - g2[0], -g1[1] - g2[1]], g1, g2], 0.5 * det.abs())
}

pub fn dense_scheme(mesh: &SimplicialMesh, eps: &PermittivityField) -> DenseScheme {
    assert_eq!(mesh.dim(), 2);
    let n = 2 * mesh.num_vertices();
    let zero = || vec![vec![0.0; n]; n];
    let (mut mass, mut boundary, mut load, mut operator) = (zero(), zero(), zero(), zero());
    for k in 0..mesh.num_cells() {
        let vs = mesh.cell(k);
        let p = [0, 1, 2].map(|a| [mesh.vertex(vs[a])[0], mesh.vertex(vs[a])[1]]);
        let (grad, area) = triangle(p);
        let centroid = [(p[0][0] + p[1][0] + p[2][0]) / 3.0, (p[0][1] + p[1][1] + p[2][1]) / 3.0];
        let eps_k = eps.value(&centroid);
        for a in 0..3 {
            for c in 0..2 {
                mass[2 * vs[a] + c][2 * vs[a] + c] += eps_k * area / 3.0;
                load[2 * vs[a] + c][2 * vs[a] + c] += area / 3.0;
            }
        }
        for (j, &vj) in vs.iter().enumerate() {
            for (i, &vi) in vs.iter().enumerate() {
                let g_eps = eps.gradient(mesh.vertex(vi));
                for d in 0..2 {
                    for c in 0..2 {
                        let mut a = 0.0;
                        if c == d {
                            a += area * (grad[i][0] * grad[j][0] + grad[i][1] * grad[j][1]);
                        }
                        // (ε ∇·u + ∇ε·u − ∇·u) ∇·v
                        a += (eps_k - 1.0) * area * grad[i][c] * grad[j][d];
                        a += area / 3.0 * g_eps[c] * grad[j][d];
                        operator[2 * vj + d][2 * vi + c] += a;
                    }
                }
            }
        }
    }
    for f in 0..mesh.num_boundary_facets() {
        let vs = mesh.boundary_facet(f);
        let (p, q) = (mesh.vertex(vs[0]), mesh.vertex(vs[1]));
        let len = (p[0] - q[0]).hypot(p[1] - q[1]);
        for &v in vs {
            for c in 0..2 {
                boundary[2 * v + c][2 * v + c] += len / 2.0;
            }
        }
    }
    DenseScheme {
        n,
        mass,
        boundary,
        load,
        operator,
    }
}

fn mat_vec(a: &[Vec<f64>], x: &[f64]) -> Vec<f64> {
    a.iter().map(|row| row.iter().zip(x).map(|(p, q)| p * q).sum()).collect()
}

/// Gaussian elimination with partial pivoting.
pub fn solve_dense(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap();
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..n {
            let factor = a[row][col] / a[col][col];
            if factor != 0.0 {
                for k in col..n {
                    a[row][k] -= factor * a[col][k];
                }
                b[row] -= factor * b[col];
            }
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    x
}

impl DenseScheme {
    /// `(M/τ² + B/2τ) eᵏ⁺¹ = 2M/τ² eᵏ − (M/τ² − B/2τ) eᵏ⁻¹ − A eᵏ + F`.
    pub fn step(&self, prev: &[f64], curr: &[f64], nodal_source: &[f64], tau: f64) -> Vec<f64> {
        let n = self.n;
        let lhs: Vec<Vec<f64>> = (0..n)
            .map(|i| (0..n).map(|j| self.mass[i][j] / (tau * tau) + self.boundary[i][j] / (2.0 * tau)).collect())
            .collect();
        let m_curr = mat_vec(&self.mass, curr);
        let m_prev = mat_vec(&self.mass, prev);
        let b_prev = mat_vec(&self.boundary, prev);
        let a_curr = mat_vec(&self.operator, curr);
        let f = mat_vec(&self.load, nodal_source);
        let rhs = (0..n)
            .map(|i| 2.0 * m_curr[i] / (tau * tau) - m_prev[i] / (tau * tau) + b_prev[i] / (2.0 * tau) - a_curr[i] + f[i])
            .collect();
        solve_dense(lhs, rhs)
    }
}

pub fn nodal(mesh: &SimplicialMesh, f: impl Fn(&[f64]) -> Vec3) -> Vec<f64> {
    (0..mesh.num_vertices())
        .flat_map(|i| {
            let v = f(mesh.vertex(i));
            [v[0], v[1]]
        })
        .collect()
}

/// Largest relative gap between the library and the dense scheme over
/// `steps` steps of the manufactured problem with step `tau`.
pub fn dense_oracle_gap(mesh: Arc<SimplicialMesh>, case: &ManufacturedCase, tau: f64, steps: usize) -> f64 {
    let eps = case.permittivity();
    let ops = SchemeOperators::assemble(Arc::clone(&mesh), &eps).unwrap();
    let dense = dense_scheme(&mesh, &eps);
    let e0 = nodal(&mesh, |x| case.initial_value(x));
    let e1 = nodal(&mesh, |x| case.initial_velocity(x));
    let nv = mesh.num_vertices();
    let field = |v: &[f64]| NodalVectorField::from_values(nv, 2, v.to_vec()).unwrap();
    let state = initialize(&field(&e0), &field(&e1), tau).unwrap();
    let source = |x: &[f64], t: f64| case.source(x, t);
    let mut library = Vec::new();
    run(&ops, state, &RunOptions::new((steps + 1) as f64 * tau), Some(&source), &mut |s| {
        library.push(s.e_curr.values().to_vec());
        Ok(())
    })
    .unwrap();

    let mut prev = e0.clone();
    let mut curr: Vec<f64> = e0.iter().zip(&e1).map(|(a, b)| a + tau * b).collect();
    let mut gap = 0.0f64;
    for (k, lib) in library.iter().enumerate().skip(1) {
        let f = nodal(&mesh, |x| case.source(x, k as f64 * tau));
        let next = dense.step(&prev, &curr, &f, tau);
        let scale = next.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let diff = next.iter().zip(lib).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        gap = gap.max(diff / scale);
        prev = std::mem::replace(&mut curr, next);
    }
    gap
}

/// `V − E + F`, which is 1 for a triangulated disk or square.
pub fn euler_characteristic(mesh: &SimplicialMesh) -> i64 {
    mesh.num_vertices() as i64 - mesh.edges().len() as i64 + mesh.num_cells() as i64
}
