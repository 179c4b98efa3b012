//! Coefficient fields, P1 nodal vector fields, interpolation and simplex
//! quadrature.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::mesh::SimplicialMesh;

/// Three-component vector; entries past the mesh dimension are ignored.
pub type Vec3 = [f64; 3];

type ScalarFn = dyn Fn(&[f64]) -> f64 + Send + Sync;
type VectorFn = dyn Fn(&[f64]) -> Vec3 + Send + Sync;

/// `‖ε‖₀,∞`, `|ε|₁,∞` and `|ε|₂,∞` as supplied by whoever built the field.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PermittivityNorms {
    pub sup: f64,
    pub seminorm_1: f64,
    pub seminorm_2: f64,
}

/// Scalar relative permittivity with its analytic gradient.
#[derive(Clone)]
pub struct PermittivityField {
    value: Arc<ScalarFn>,
    gradient: Arc<VectorFn>,
    norms: PermittivityNorms,
}

impl fmt::Debug for PermittivityField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PermittivityField")
            .field("norms", &self.norms)
            .finish_non_exhaustive()
    }
}

impl PermittivityField {
    pub fn new(
        value: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
        gradient: impl Fn(&[f64]) -> Vec3 + Send + Sync + 'static,
        norms: PermittivityNorms,
    ) -> Self {
        PermittivityField {
            value: Arc::new(value),
            gradient: Arc::new(gradient),
            norms,
        }
    }

    pub fn constant(c: f64) -> Self {
        Self::new(
            move |_| c,
            |_| [0.0; 3],
            PermittivityNorms {
                sup: c.abs(),
                seminorm_1: 0.0,
                seminorm_2: 0.0,
            },
        )
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        (self.value)(x)
    }

    pub fn gradient(&self, x: &[f64]) -> Vec3 {
        (self.gradient)(x)
    }

    pub fn norms(&self) -> PermittivityNorms {
        self.norms
    }

    /// `‖ε − 1‖∞`, assuming `ε ≥ 1`.
    pub fn excess_sup(&self) -> f64 {
        (self.norms.sup - 1.0).max(0.0)
    }

    /// Checks `ε ≥ 1` at every vertex and centroid, and `ε = 1` at the
    /// centroids of cells touching the boundary.
    pub fn check_admissible(&self, mesh: &SimplicialMesh) -> Result<()> {
        for i in 0..mesh.num_vertices() {
            let e = self.value(mesh.vertex(i));
            if !(e >= 1.0) {
                return Err(Error::InvalidArgument(format!(
                    "permittivity {e} < 1 at vertex {i}"
                )));
            }
        }
        let dim = mesh.dim();
        for f in 0..mesh.num_boundary_facets() {
            let k = mesh.facet_parent(f);
            let g = mesh.cell_geometry(k)?;
            let e = self.value(&g.centroid[..dim]);
            if e != 1.0 {
                return Err(Error::InvalidArgument(format!(
                    "permittivity {e} != 1 in boundary cell {k}"
                )));
            }
        }
        Ok(())
    }
}

/// P1 vector field: `dim` values per mesh vertex, vertex-major.
#[derive(Debug, Clone, PartialEq)]
pub struct NodalVectorField {
    nv: usize,
    dim: usize,
    values: Vec<f64>,
}

impl NodalVectorField {
    pub fn zeros(nv: usize, dim: usize) -> Self {
        NodalVectorField {
            nv,
            dim,
            values: vec![0.0; nv * dim],
        }
    }

    pub fn zeros_on(mesh: &SimplicialMesh) -> Self {
        Self::zeros(mesh.num_vertices(), mesh.dim())
    }

    pub fn from_values(nv: usize, dim: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != nv * dim {
            return Err(Error::DimensionMismatch {
                expected: nv * dim,
                actual: values.len(),
            });
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteValue { vertex: pos / dim });
        }
        Ok(NodalVectorField { nv, dim, values })
    }

    pub fn num_vertices(&self) -> usize {
        self.nv
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn at(&self, vertex: usize) -> &[f64] {
        &self.values[vertex * self.dim..(vertex + 1) * self.dim]
    }

    pub fn same_shape(&self, other: &NodalVectorField) -> bool {
        self.nv == other.nv && self.dim == other.dim
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// `self + alpha * other`
    pub fn added(&self, alpha: f64, other: &NodalVectorField) -> Result<NodalVectorField> {
        if !self.same_shape(other) {
            return Err(Error::DimensionMismatch {
                expected: self.values.len(),
                actual: other.values.len(),
            });
        }
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a + alpha * b)
            .collect();
        Ok(NodalVectorField {
            nv: self.nv,
            dim: self.dim,
            values,
        })
    }
}

/// Nodal interpolant of `f`.
pub fn interpolate(
    mesh: &SimplicialMesh,
    f: impl Fn(&[f64]) -> Vec3,
) -> Result<NodalVectorField> {
    let dim = mesh.dim();
    let mut values = Vec::with_capacity(mesh.num_vertices() * dim);
    for i in 0..mesh.num_vertices() {
        let v = f(mesh.vertex(i));
        if v[..dim].iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFiniteValue { vertex: i });
        }
        values.extend_from_slice(&v[..dim]);
    }
    Ok(NodalVectorField {
        nv: mesh.num_vertices(),
        dim,
        values,
    })
}

/// Piecewise-constant surrogate `ε_h`: ε sampled at each cell centroid.
pub fn centroid_epsilon(mesh: &SimplicialMesh, eps: &PermittivityField) -> Vec<f64> {
    let dim = mesh.dim();
    (0..mesh.num_cells())
        .map(|k| {
            let g = mesh.cell_geometry(k).expect("mesh cells are non-degenerate");
            eps.value(&g.centroid[..dim])
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum QuadratureRule {
    /// Equal weights at the vertices (mass lumping).
    Vertex,
    /// One point at the centroid; exact for affine integrands.
    Centroid,
    /// Exact for total degree four; used for error norms.
    Degree4,
}

impl FromStr for QuadratureRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "vertex" => Ok(QuadratureRule::Vertex),
            "centroid" => Ok(QuadratureRule::Centroid),
            "degree4" => Ok(QuadratureRule::Degree4),
            other => Err(Error::InvalidArgument(format!("unknown quadrature rule {other:?}"))),
        }
    }
}

/// A rule on the reference simplex: barycentric coordinates (first `dim + 1`
/// entries used) and weights as fractions of the cell volume.
pub fn barycentric_rule(rule: QuadratureRule, dim: usize) -> Result<Vec<([f64; 4], f64)>> {
    if dim != 2 && dim != 3 {
        return Err(Error::InvalidArgument(format!("no quadrature in dimension {dim}")));
    }
    let n = dim + 1;
    Ok(match rule {
        QuadratureRule::Vertex => (0..n)
            .map(|i| {
                let mut b = [0.0; 4];
                b[i] = 1.0;
                (b, 1.0 / n as f64)
            })
            .collect(),
        QuadratureRule::Centroid => {
            let mut b = [0.0; 4];
            b[..n].fill(1.0 / n as f64);
            vec![(b, 1.0)]
        }
        QuadratureRule::Degree4 if dim == 2 => triangle_degree4(),
        QuadratureRule::Degree4 => grundmann_moeller(3, 2),
    })
}

/// Six-point degree-4 triangle rule with positive weights.
fn triangle_degree4() -> Vec<([f64; 4], f64)> {
    const A: f64 = 0.445_948_490_915_964_9;
    const WA: f64 = 0.223_381_589_678_011_47;
    const B: f64 = 0.091_576_213_509_770_74;
    const WB: f64 = 0.109_951_743_655_321_87;
    let mut rule = Vec::with_capacity(6);
    for (a, w) in [(A, WA), (B, WB)] {
        let c = 1.0 - 2.0 * a;
        rule.push(([c, a, a, 0.0], w));
        rule.push(([a, c, a, 0.0], w));
        rule.push(([a, a, c, 0.0], w));
    }
    rule
}

/// Grundmann–Möller rule of degree `2s + 1` on the `n`-simplex.
fn grundmann_moeller(n: usize, s: usize) -> Vec<([f64; 4], f64)> {
    let d = 2 * s + 1;
    let factorial = |k: usize| (1..=k).map(|x| x as f64).product::<f64>();
    let mut rule = Vec::new();
    for i in 0..=s {
        let denom = (d + n - 2 * i) as f64;
        let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
        let coef = sign * 2f64.powi(-2 * s as i32) * denom.powi(d as i32)
            / (factorial(i) * factorial(d + n - i))
            * factorial(n);
        for beta in compositions(s - i, n + 1) {
            let mut b = [0.0; 4];
            for (slot, &bj) in b.iter_mut().zip(&beta) {
                *slot = (2 * bj + 1) as f64 / denom;
            }
            rule.push((b, coef));
        }
    }
    rule
}

/// All vectors of `parts` non-negative integers summing to `total`.
fn compositions(total: usize, parts: usize) -> Vec<Vec<usize>> {
    if parts == 1 {
        return vec![vec![total]];
    }
    let mut out = Vec::new();
    for first in 0..=total {
        for mut rest in compositions(total - first, parts - 1) {
            rest.insert(0, first);
            out.push(rest);
        }
    }
    out
}

/// Physical quadrature points and weights on one cell.
pub fn quadrature(
    rule: QuadratureRule,
    mesh: &SimplicialMesh,
    cell: usize,
) -> Result<Vec<(Vec3, f64)>> {
    let geometry = mesh.cell_geometry(cell)?;
    let dim = mesh.dim();
    let vertices: Vec<Vec3> = mesh.cell(cell).iter().map(|&v| mesh.vertex3(v)).collect();
    Ok(barycentric_rule(rule, dim)?
        .into_iter()
        .map(|(b, w)| {
            let mut p = [0.0; 3];
            for (lambda, vertex) in b.iter().zip(&vertices) {
                for c in 0..dim {
                    p[c] += lambda * vertex[c];
                }
            }
            (p, w * geometry.volume)
        })
        .collect())
}

/// `‖v‖²_{ε_h,h}`: the vertex-rule (lumped) weighted norm.
pub fn lumped_norm_sq(mesh: &SimplicialMesh, eps_h: &[f64], v: &NodalVectorField) -> f64 {
    let dim = mesh.dim();
    let mut total = 0.0;
    for k in 0..mesh.num_cells() {
        let volume = mesh.cell_geometry(k).map(|g| g.volume).unwrap_or(0.0);
        let sum: f64 = mesh
            .cell(k)
            .iter()
            .map(|&i| v.at(i).iter().map(|x| x * x).sum::<f64>())
            .sum();
        total += eps_h[k] * volume / (dim + 1) as f64 * sum;
    }
    total
}

/// `‖v‖²_{ε_h}`: the exact weighted L² norm of a P1 field with piecewise
/// constant weight.
pub fn consistent_norm_sq(mesh: &SimplicialMesh, eps_h: &[f64], v: &NodalVectorField) -> f64 {
    let dim = mesh.dim();
    let n = (dim + 1) as f64;
    let mut total = 0.0;
    for k in 0..mesh.num_cells() {
        let volume = mesh.cell_geometry(k).map(|g| g.volume).unwrap_or(0.0);
        total += eps_h[k] * volume / (n * (n + 1.0)) * pair_sum(mesh.cell(k), v);
    }
    total
}

/// `‖v‖²_{∂Ω,h}`: vertex rule on the boundary facets.
pub fn boundary_lumped_norm_sq(mesh: &SimplicialMesh, v: &NodalVectorField) -> f64 {
    let dim = mesh.dim();
    (0..mesh.num_boundary_facets())
        .map(|f| {
            let measure = mesh.facet_measure(f).unwrap_or(0.0);
            let sum: f64 = mesh
                .boundary_facet(f)
                .iter()
                .map(|&i| v.at(i).iter().map(|x| x * x).sum::<f64>())
                .sum();
            measure / dim as f64 * sum
        })
        .sum()
}

/// `‖v‖²_{∂Ω}`: exact boundary L² norm of a P1 field.
pub fn boundary_norm_sq(mesh: &SimplicialMesh, v: &NodalVectorField) -> f64 {
    let n = mesh.dim() as f64;
    (0..mesh.num_boundary_facets())
        .map(|f| {
            let measure = mesh.facet_measure(f).unwrap_or(0.0);
            measure / (n * (n + 1.0)) * pair_sum(mesh.boundary_facet(f), v)
        })
        .sum()
}

/// `Σᵢⱼ (1 + δᵢⱼ) vᵢ·vⱼ = Σ|vᵢ|² + |Σvᵢ|²` over the listed vertices.
fn pair_sum(vertices: &[usize], v: &NodalVectorField) -> f64 {
    let dim = v.dim();
    let mut squares = 0.0;
    let mut sum = [0.0; 3];
    for &i in vertices {
        for (c, x) in v.at(i).iter().enumerate() {
            squares += x * x;
            sum[c] += x;
        }
    }
    squares + sum[..dim].iter().map(|x| x * x).sum::<f64>()
}
