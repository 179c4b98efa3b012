//! Simplicial meshes in two and three dimensions.
//!
//! Coordinates and connectivity are stored flat (`dim` reals per vertex,
//! `dim + 1` indices per cell). Boundary facets are derived from the cells at
//! construction time and carry the index of their unique parent cell.

mod generate;
mod io;

use std::collections::BTreeMap;

pub use generate::{build_cube_mesh, build_disk_mesh, build_square_mesh, map_square_to_disk, MeshLevel};
pub use io::{export_vtk, load_mesh, read_mesh, save_mesh, write_mesh, write_vtk};

use crate::error::{Error, Result};

/// Relative threshold under which a simplex is treated as degenerate.
const DEGENERACY_TOL: f64 = 1e-12;

/// An immutable conforming simplicial mesh (triangles or tetrahedra).
#[derive(Debug, Clone, PartialEq)]
pub struct SimplicialMesh {
    dim: usize,
    coords: Vec<f64>,
    cells: Vec<usize>,
    facet_vertices: Vec<usize>,
    facet_parents: Vec<usize>,
    h_max: f64,
    h_min: f64,
}

/// Volume, centroid and barycentric gradients of one simplex.
///
/// Only the first `dim` components of the vectors and the first `dim + 1`
/// gradients are meaningful.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellGeometry {
    pub dim: usize,
    pub volume: f64,
    pub centroid: [f64; 3],
    pub gradients: [[f64; 3]; 4],
}

impl CellGeometry {
    pub fn gradients(&self) -> &[[f64; 3]] {
        &self.gradients[..self.dim + 1]
    }
}

/// Signed volume, centroid and barycentric gradients of a simplex given by
/// its `dim + 1` vertices. Returns `None` when the simplex is degenerate.
pub fn simplex_geometry(dim: usize, points: &[[f64; 3]]) -> Option<CellGeometry> {
    debug_assert_eq!(points.len(), dim + 1);
    let p0 = points[0];
    let edge = |i: usize| -> [f64; 3] {
        [
            points[i][0] - p0[0],
            points[i][1] - p0[1],
            points[i][2] - p0[2],
        ]
    };
    let mut scale: f64 = 0.0;
    for i in 0..=dim {
        for j in (i + 1)..=dim {
            scale = scale.max(distance(&points[i][..dim], &points[j][..dim]));
        }
    }
    let mut gradients = [[0.0; 3]; 4];
    let volume = match dim {
        2 => {
            let (e1, e2) = (edge(1), edge(2));
            let det = e1[0] * e2[1] - e2[0] * e1[1];
            if det.abs() <= DEGENERACY_TOL * scale * scale {
                return None;
            }
            gradients[1] = [e2[1] / det, -e2[0] / det, 0.0];
            gradients[2] = [-e1[1] / det, e1[0] / det, 0.0];
            det / 2.0
        }
        3 => {
            let (e1, e2, e3) = (edge(1), edge(2), edge(3));
            let c23 = cross(&e2, &e3);
            let det = dot3(&e1, &c23);
            if det.abs() <= DEGENERACY_TOL * scale * scale * scale {
                return None;
            }
            let c31 = cross(&e3, &e1);
            let c12 = cross(&e1, &e2);
            for c in 0..3 {
                gradients[1][c] = c23[c] / det;
                gradients[2][c] = c31[c] / det;
                gradients[3][c] = c12[c] / det;
            }
            det / 6.0
        }
        _ => return None,
    };
    for c in 0..dim {
        gradients[0][c] = -(1..=dim).map(|i| gradients[i][c]).sum::<f64>();
    }
    let mut centroid = [0.0; 3];
    for p in points {
        for c in 0..dim {
            centroid[c] += p[c];
        }
    }
    for value in centroid.iter_mut().take(dim) {
        *value /= (dim + 1) as f64;
    }
    Some(CellGeometry {
        dim,
        volume,
        centroid,
        gradients,
    })
}

impl SimplicialMesh {
    /// Builds a mesh from flat coordinates and cell connectivity, deriving
    /// the boundary facets. Every cell must be positively oriented.
    pub fn new(dim: usize, coords: Vec<f64>, cells: Vec<usize>) -> Result<Self> {
        if dim != 2 && dim != 3 {
            return Err(Error::InvalidMesh(format!("unsupported dimension {dim}")));
        }
        if !coords.len().is_multiple_of(dim) {
            return Err(Error::InvalidMesh(format!(
                "coordinate array length {} is not a multiple of {dim}",
                coords.len()
            )));
        }
        if !cells.len().is_multiple_of(dim + 1) {
            return Err(Error::InvalidMesh(format!(
                "cell array length {} is not a multiple of {}",
                cells.len(),
                dim + 1
            )));
        }
        let nv = coords.len() / dim;
        if let Some(bad) = cells.iter().find(|&&v| v >= nv) {
            return Err(Error::InvalidMesh(format!(
                "vertex index {bad} out of range (nv = {nv})"
            )));
        }
        let mut mesh = SimplicialMesh {
            dim,
            coords,
            cells,
            facet_vertices: Vec::new(),
            facet_parents: Vec::new(),
            h_max: 0.0,
            h_min: f64::INFINITY,
        };
        for k in 0..mesh.num_cells() {
            let cell = mesh.cell(k);
            for i in 0..=dim {
                if cell[i + 1..].contains(&cell[i]) {
                    return Err(Error::InvalidMesh(format!("cell {k} repeats vertex {}", cell[i])));
                }
            }
            let geometry = mesh.cell_geometry(k)?;
            if geometry.volume <= 0.0 {
                return Err(Error::InvalidMesh(format!(
                    "cell {k} has non-positive signed volume {:e}",
                    geometry.volume
                )));
            }
        }
        mesh.derive_boundary()?;
        let (h_min, h_max) = mesh
            .edges()
            .iter()
            .map(|&[a, b]| distance(mesh.vertex(a), mesh.vertex(b)))
            .fold((f64::INFINITY, 0.0_f64), |(lo, hi), len| (lo.min(len), hi.max(len)));
        mesh.h_min = h_min;
        mesh.h_max = h_max;
        Ok(mesh)
    }

    /// Builds a mesh and checks that the supplied boundary facets are exactly
    /// the derived ones (up to vertex order within a facet).
    pub fn with_boundary(
        dim: usize,
        coords: Vec<f64>,
        cells: Vec<usize>,
        facets: &[(Vec<usize>, usize)],
    ) -> Result<Self> {
        let mesh = Self::new(dim, coords, cells)?;
        let key = |vertices: &[usize], parent: usize| {
            let mut v = vertices.to_vec();
            v.sort_unstable();
            (v, parent)
        };
        let mut expected: Vec<_> = (0..mesh.num_boundary_facets())
            .map(|f| key(mesh.boundary_facet(f), mesh.facet_parent(f)))
            .collect();
        let mut given: Vec<_> = facets.iter().map(|(v, p)| key(v, *p)).collect();
        expected.sort();
        given.sort();
        if expected != given {
            return Err(Error::InvalidMesh(format!(
                "boundary facets do not match the cells ({} given, {} derived)",
                given.len(),
                expected.len()
            )));
        }
        Ok(mesh)
    }

    fn derive_boundary(&mut self) -> Result<()> {
        let dim = self.dim;
        // sorted facet key -> (cell, local index of the omitted vertex, count)
        let mut facets: BTreeMap<[usize; 3], (usize, usize, usize)> = BTreeMap::new();
        for k in 0..self.num_cells() {
            let cell = self.cell(k);
            for omit in 0..=dim {
                let mut key = [usize::MAX; 3];
                let mut n = 0;
                for (i, &v) in cell.iter().enumerate() {
                    if i != omit {
                        key[n] = v;
                        n += 1;
                    }
                }
                key[..dim].sort_unstable();
                facets
                    .entry(key)
                    .and_modify(|e| e.2 += 1)
                    .or_insert((k, omit, 1));
            }
        }
        let mut boundary: Vec<(usize, usize)> = Vec::new();
        for (key, &(cell, omit, count)) in &facets {
            match count {
                1 => boundary.push((cell, omit)),
                2 => {}
                _ => {
                    return Err(Error::InvalidMesh(format!(
                        "facet {:?} shared by {count} cells",
                        &key[..dim]
                    )))
                }
            }
        }
        boundary.sort_unstable();
        self.facet_vertices.clear();
        self.facet_parents.clear();
        for (k, omit) in boundary {
            let cell = self.cell(k).to_vec();
            // keep the orientation induced by the cell (counter-clockwise loop in 2D)
            for i in 1..=dim {
                self.facet_vertices.push(cell[(omit + i) % (dim + 1)]);
            }
            self.facet_parents.push(k);
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_vertices(&self) -> usize {
        self.coords.len() / self.dim
    }

    pub fn num_cells(&self) -> usize {
        self.cells.len() / (self.dim + 1)
    }

    pub fn num_boundary_facets(&self) -> usize {
        self.facet_parents.len()
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn cells(&self) -> &[usize] {
        &self.cells
    }

    pub fn vertex(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    /// Vertex coordinates padded with zeros to three components.
    pub fn vertex3(&self, i: usize) -> [f64; 3] {
        let mut p = [0.0; 3];
        p[..self.dim].copy_from_slice(self.vertex(i));
        p
    }

    pub fn cell(&self, k: usize) -> &[usize] {
        &self.cells[k * (self.dim + 1)..(k + 1) * (self.dim + 1)]
    }

    pub fn boundary_facet(&self, f: usize) -> &[usize] {
        &self.facet_vertices[f * self.dim..(f + 1) * self.dim]
    }

    pub fn facet_parent(&self, f: usize) -> usize {
        self.facet_parents[f]
    }

    /// Longest edge length.
    pub fn h_max(&self) -> f64 {
        self.h_max
    }

    /// Shortest edge length.
    pub fn h_min(&self) -> f64 {
        self.h_min
    }

    pub fn cell_geometry(&self, k: usize) -> Result<CellGeometry> {
        if k >= self.num_cells() {
            return Err(Error::InvalidArgument(format!(
                "cell index {k} out of range ({} cells)",
                self.num_cells()
            )));
        }
        let mut points = [[0.0; 3]; 4];
        for (slot, &v) in points.iter_mut().zip(self.cell(k)) {
            *slot = self.vertex3(v);
        }
        simplex_geometry(self.dim, &points[..self.dim + 1]).ok_or(Error::Degenerate {
            kind: "cell",
            index: k,
            measure: 0.0,
        })
    }

    /// Length (2D) or area (3D) of a boundary facet.
    pub fn facet_measure(&self, f: usize) -> Result<f64> {
        if f >= self.num_boundary_facets() {
            return Err(Error::InvalidArgument(format!(
                "facet index {f} out of range ({} facets)",
                self.num_boundary_facets()
            )));
        }
        let facet = self.boundary_facet(f);
        let points: Vec<[f64; 3]> = facet.iter().map(|&v| self.vertex3(v)).collect();
        let measure = facet_measure_of(self.dim, &points);
        let scale = distance(&points[0], &points[1]);
        if measure <= DEGENERACY_TOL * scale.powi(self.dim as i32 - 1) || measure == 0.0 {
            return Err(Error::Degenerate {
                kind: "facet",
                index: f,
                measure,
            });
        }
        Ok(measure)
    }

    /// Sum of all cell volumes.
    pub fn total_volume(&self) -> f64 {
        (0..self.num_cells())
            .map(|k| self.cell_geometry(k).map(|g| g.volume).unwrap_or(0.0))
            .sum()
    }

    /// Unique edges as sorted vertex pairs, in lexicographic order.
    pub fn edges(&self) -> Vec<[usize; 2]> {
        let mut edges = Vec::with_capacity(self.num_cells() * 6);
        for k in 0..self.num_cells() {
            let cell = self.cell(k);
            for i in 0..cell.len() {
                for j in (i + 1)..cell.len() {
                    let (a, b) = (cell[i].min(cell[j]), cell[i].max(cell[j]));
                    edges.push([a, b]);
                }
            }
        }
        edges.sort_unstable();
        edges.dedup();
        edges
    }

    /// Flags the vertices lying on some boundary facet.
    pub fn boundary_vertex_mask(&self) -> Vec<bool> {
        let mut mask = vec![false; self.num_vertices()];
        for &v in &self.facet_vertices {
            mask[v] = true;
        }
        mask
    }

    /// Boundary vertices of a 2D mesh in loop order. Fails unless the
    /// boundary edges form a single closed polygon.
    pub fn boundary_loop(&self) -> Result<Vec<usize>> {
        if self.dim != 2 {
            return Err(Error::InvalidArgument("boundary loop requires a 2D mesh".into()));
        }
        let nf = self.num_boundary_facets();
        if nf == 0 {
            return Err(Error::InvalidMesh("no boundary edges".into()));
        }
        let mut next = vec![usize::MAX; self.num_vertices()];
        for f in 0..nf {
            let e = self.boundary_facet(f);
            if next[e[0]] != usize::MAX {
                return Err(Error::InvalidMesh(format!(
                    "boundary vertex {} starts two edges",
                    e[0]
                )));
            }
            next[e[0]] = e[1];
        }
        let start = self.boundary_facet(0)[0];
        let mut order = vec![start];
        let mut v = next[start];
        while v != start {
            if v == usize::MAX || order.len() > nf {
                return Err(Error::InvalidMesh("boundary edges do not close".into()));
            }
            order.push(v);
            v = next[v];
        }
        if order.len() != nf {
            return Err(Error::InvalidMesh(format!(
                "boundary has several loops ({} of {nf} edges in the first)",
                order.len()
            )));
        }
        Ok(order)
    }
}

pub(crate) fn facet_measure_of(dim: usize, points: &[[f64; 3]]) -> f64 {
    match dim {
        2 => distance(&points[0][..2], &points[1][..2]),
        _ => {
            let a = sub3(&points[1], &points[0]);
            let b = sub3(&points[2], &points[0]);
            let c = cross(&a, &b);
            0.5 * dot3(&c, &c).sqrt()
        }
    }
}

pub(crate) fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

fn sub3(a: &[f64; 3], b: &[f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn cross(a: &[f64; 3], b: &[f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

fn dot3(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}
