//! Sparse (CSR) and diagonal operators for the bilinear forms of the scheme.
//!
//! Vector-valued degrees of freedom are numbered vertex-major, component
//! minor: dof `(i, c)` lives at `i * dim + c`. Element contributions are
//! collected as triplets in cell order and compressed with a stable sort, so
//! assembly is reproducible bit for bit.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::fespace::{centroid_epsilon, PermittivityField};
use crate::mesh::SimplicialMesh;

/// Compressed sparse row matrix with sorted, unique columns per row.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    nrows: usize,
    ncols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl SparseMatrix {
    /// Compresses `(row, col, value)` triplets; duplicates are summed in
    /// insertion order.
    pub fn from_triplets(
        nrows: usize,
        ncols: usize,
        mut triplets: Vec<(usize, usize, f64)>,
    ) -> Result<Self> {
        if let Some(&(r, c, _)) = triplets.iter().find(|&&(r, c, _)| r >= nrows || c >= ncols) {
            return Err(Error::InvalidArgument(format!(
                "triplet ({r}, {c}) outside a {nrows}x{ncols} matrix"
            )));
        }
        triplets.sort_by_key(|&(r, c, _)| (r, c));
        let mut row_ptr = vec![0usize; nrows + 1];
        let mut col_idx = Vec::with_capacity(triplets.len());
        let mut values: Vec<f64> = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in triplets {
            if last == Some((r, c)) {
                *values.last_mut().expect("entry exists") += v;
            } else {
                col_idx.push(c);
                values.push(v);
                row_ptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for r in 0..nrows {
            row_ptr[r + 1] += row_ptr[r];
        }
        Ok(SparseMatrix {
            nrows,
            ncols,
            row_ptr,
            col_idx,
            values,
        })
    }

    pub fn from_dense(rows: &[Vec<f64>]) -> Result<Self> {
        let nrows = rows.len();
        let ncols = rows.first().map_or(0, Vec::len);
        let mut triplets = Vec::new();
        for (r, row) in rows.iter().enumerate() {
            if row.len() != ncols {
                return Err(Error::DimensionMismatch {
                    expected: ncols,
                    actual: row.len(),
                });
            }
            for (c, &v) in row.iter().enumerate() {
                if v != 0.0 {
                    triplets.push((r, c, v));
                }
            }
        }
        Self::from_triplets(nrows, ncols, triplets)
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row_ptr(&self) -> &[usize] {
        &self.row_ptr
    }

    pub fn col_idx(&self) -> &[usize] {
        &self.col_idx
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Column indices and values of row `r`.
    pub fn row(&self, r: usize) -> (&[usize], &[f64]) {
        let range = self.row_ptr[r]..self.row_ptr[r + 1];
        (&self.col_idx[range.clone()], &self.values[range])
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        let (cols, vals) = self.row(r);
        cols.binary_search(&c).map_or(0.0, |pos| vals[pos])
    }

    /// `y = A x`, summing each row left to right.
    pub fn spmv_into(&self, x: &[f64], y: &mut [f64]) -> Result<()> {
        if x.len() != self.ncols {
            return Err(Error::DimensionMismatch {
                expected: self.ncols,
                actual: x.len(),
            });
        }
        if y.len() != self.nrows {
            return Err(Error::DimensionMismatch {
                expected: self.nrows,
                actual: y.len(),
            });
        }
        for (r, out) in y.iter_mut().enumerate() {
            let mut acc = 0.0;
            for idx in self.row_ptr[r]..self.row_ptr[r + 1] {
                acc += self.values[idx] * x[self.col_idx[idx]];
            }
            *out = acc;
        }
        Ok(())
    }

    /// `y = Aᵀ x`.
    pub fn transpose_spmv_into(&self, x: &[f64], y: &mut [f64]) -> Result<()> {
        if x.len() != self.nrows {
            return Err(Error::DimensionMismatch {
                expected: self.nrows,
                actual: x.len(),
            });
        }
        if y.len() != self.ncols {
            return Err(Error::DimensionMismatch {
                expected: self.ncols,
                actual: y.len(),
            });
        }
        y.fill(0.0);
        for (r, &xr) in x.iter().enumerate() {
            for idx in self.row_ptr[r]..self.row_ptr[r + 1] {
                y[self.col_idx[idx]] += self.values[idx] * xr;
            }
        }
        Ok(())
    }

    /// `xᵀ A x`.
    pub fn quadratic_form(&self, x: &[f64]) -> Result<f64> {
        let mut y = vec![0.0; self.nrows];
        self.spmv_into(x, &mut y)?;
        Ok(x.iter().zip(&y).map(|(a, b)| a * b).sum())
    }

    /// `self + alpha * other` over the union of both patterns.
    pub fn add_scaled(&self, alpha: f64, other: &SparseMatrix) -> Result<SparseMatrix> {
        if self.nrows != other.nrows || self.ncols != other.ncols {
            return Err(Error::DimensionMismatch {
                expected: self.nrows * self.ncols,
                actual: other.nrows * other.ncols,
            });
        }
        let mut triplets = Vec::with_capacity(self.nnz() + other.nnz());
        for r in 0..self.nrows {
            let (cols, vals) = self.row(r);
            triplets.extend(cols.iter().zip(vals).map(|(&c, &v)| (r, c, v)));
            let (cols, vals) = other.row(r);
            triplets.extend(cols.iter().zip(vals).map(|(&c, &v)| (r, c, alpha * v)));
        }
        Self::from_triplets(self.nrows, self.ncols, triplets)
    }

    pub fn transpose(&self) -> SparseMatrix {
        let mut triplets = Vec::with_capacity(self.nnz());
        for r in 0..self.nrows {
            let (cols, vals) = self.row(r);
            triplets.extend(cols.iter().zip(vals).map(|(&c, &v)| (c, r, v)));
        }
        Self::from_triplets(self.ncols, self.nrows, triplets).expect("indices in range")
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Largest `|A_ij − A_ji|` relative to the largest entry.
    pub fn asymmetry(&self) -> f64 {
        let diff = self.add_scaled(-1.0, &self.transpose()).map_or(f64::INFINITY, |d| d.max_abs());
        let scale = self.max_abs();
        if scale == 0.0 {
            diff
        } else {
            diff / scale
        }
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut dense = vec![vec![0.0; self.ncols]; self.nrows];
        for (r, row) in dense.iter_mut().enumerate() {
            let (cols, vals) = self.row(r);
            for (&c, &v) in cols.iter().zip(vals) {
                row[c] = v;
            }
        }
        dense
    }

    /// Writes MatrixMarket `coordinate real general` (1-based indices).
    pub fn write_matrix_market<W: Write>(&self, out: &mut W) -> std::io::Result<()> {
        writeln!(out, "%%MatrixMarket matrix coordinate real general")?;
        writeln!(out, "{} {} {}", self.nrows, self.ncols, self.nnz())?;
        for r in 0..self.nrows {
            let (cols, vals) = self.row(r);
            for (&c, &v) in cols.iter().zip(vals) {
                writeln!(out, "{} {} {:?}", r + 1, c + 1, v)?;
            }
        }
        Ok(())
    }

    pub fn save_matrix_market(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = BufWriter::new(file);
        self.write_matrix_market(&mut out)
            .and_then(|_| out.flush())
            .map_err(|e| Error::io(path, e))
    }
}

/// `y = A x`.
pub fn spmv(a: &SparseMatrix, x: &[f64]) -> Result<Vec<f64>> {
    let mut y = vec![0.0; a.nrows()];
    a.spmv_into(x, &mut y)?;
    Ok(y)
}

/// Diagonal matrix stored as its diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagonalMatrix {
    diag: Vec<f64>,
}

impl DiagonalMatrix {
    pub fn new(diag: Vec<f64>) -> Self {
        DiagonalMatrix { diag }
    }

    pub fn zeros(n: usize) -> Self {
        DiagonalMatrix { diag: vec![0.0; n] }
    }

    pub fn diag(&self) -> &[f64] {
        &self.diag
    }

    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    pub fn scaled(&self, alpha: f64) -> DiagonalMatrix {
        DiagonalMatrix::new(self.diag.iter().map(|d| alpha * d).collect())
    }

    /// `xᵀ D x`.
    pub fn quadratic_form(&self, x: &[f64]) -> f64 {
        self.diag.iter().zip(x).map(|(d, v)| d * v * v).sum()
    }
}

struct CellData {
    volume: f64,
    gradients: [[f64; 3]; 4],
}

fn cells(mesh: &SimplicialMesh) -> impl Iterator<Item = (usize, CellData)> + '_ {
    (0..mesh.num_cells()).map(move |k| {
        let g = mesh.cell_geometry(k).expect("mesh cells are non-degenerate");
        (
            k,
            CellData {
                volume: g.volume,
                gradients: g.gradients,
            },
        )
    })
}

/// `(∇u, ∇v)` for vector fields: one scalar stiffness block per component.
pub fn assemble_stiffness(mesh: &SimplicialMesh) -> SparseMatrix {
    let dim = mesh.dim();
    let n = mesh.num_vertices() * dim;
    let mut triplets = Vec::with_capacity(mesh.num_cells() * (dim + 1) * (dim + 1) * dim);
    for (k, cell) in cells(mesh) {
        let vertices = mesh.cell(k);
        for (a, &va) in vertices.iter().enumerate() {
            for (b, &vb) in vertices.iter().enumerate() {
                let grad_a = &cell.gradients[a];
                let grad_b = &cell.gradients[b];
                let value = cell.volume * (0..dim).map(|c| grad_a[c] * grad_b[c]).sum::<f64>();
                for c in 0..dim {
                    triplets.push((va * dim + c, vb * dim + c, value));
                }
            }
        }
    }
    SparseMatrix::from_triplets(n, n, triplets).expect("indices in range")
}

/// `(∇·u, ∇·v)`.
pub fn assemble_div_div(mesh: &SimplicialMesh) -> SparseMatrix {
    let eps_h = vec![1.0; mesh.num_cells()];
    assemble_divergence_form(mesh, &eps_h, None)
}

/// `(∇·(εu), ∇·v) = (ε∇·u + ∇ε·u, ∇·v)`.
///
/// The `ε ∇·u` part uses ε at the cell centroid (exact for the piecewise
/// constant divergences); the `∇ε·u` part uses the vertex rule with `∇ε`
/// evaluated at the vertices.
pub fn assemble_weighted_div(mesh: &SimplicialMesh, eps: &PermittivityField) -> SparseMatrix {
    let eps_h = centroid_epsilon(mesh, eps);
    assemble_divergence_form(mesh, &eps_h, Some(eps))
}

fn assemble_divergence_form(
    mesh: &SimplicialMesh,
    eps_h: &[f64],
    gradient_of: Option<&PermittivityField>,
) -> SparseMatrix {
    let dim = mesh.dim();
    let n = mesh.num_vertices() * dim;
    let local = (dim + 1) * dim;
    let mut triplets = Vec::with_capacity(mesh.num_cells() * local * local);
    let mut eps_grad = [[0.0; 3]; 4];
    for (k, cell) in cells(mesh) {
        let vertices = mesh.cell(k);
        if let Some(eps) = gradient_of {
            for (slot, &v) in eps_grad.iter_mut().zip(vertices) {
                *slot = eps.gradient(mesh.vertex(v));
            }
        }
        let lumped = cell.volume / (dim + 1) as f64;
        // row: test function (j, d); column: trial function (i, c)
        for (j, &vj) in vertices.iter().enumerate() {
            for d in 0..dim {
                let div_test = cell.gradients[j][d];
                for (i, &vi) in vertices.iter().enumerate() {
                    for c in 0..dim {
                        let mut value = eps_h[k] * cell.volume * cell.gradients[i][c] * div_test;
                        if gradient_of.is_some() {
                            value += lumped * eps_grad[i][c] * div_test;
                        }
                        triplets.push((vj * dim + d, vi * dim + c, value));
                    }
                }
            }
        }
    }
    SparseMatrix::from_triplets(n, n, triplets).expect("indices in range")
}

/// Vertex-rule mass with `ε(G_K)` per cell: entry `(i, c)` is
/// `Σ_{K∋i} ε(G_K)|K|/(d+1)`.
pub fn assemble_lumped_mass(mesh: &SimplicialMesh, eps: &PermittivityField) -> DiagonalMatrix {
    let eps_h = centroid_epsilon(mesh, eps);
    lumped_mass_from_cell_weights(mesh, &eps_h)
}

pub fn lumped_mass_from_cell_weights(mesh: &SimplicialMesh, weights: &[f64]) -> DiagonalMatrix {
    let dim = mesh.dim();
    let mut diag = vec![0.0; mesh.num_vertices() * dim];
    for (k, cell) in cells(mesh) {
        let share = weights[k] * cell.volume / (dim + 1) as f64;
        for &v in mesh.cell(k) {
            for c in 0..dim {
                diag[v * dim + c] += share;
            }
        }
    }
    DiagonalMatrix::new(diag)
}

/// Vertex-rule boundary mass: entry `(i, c)` is `Σ_{F∋i} |F|/d`.
pub fn assemble_boundary_lumped_mass(mesh: &SimplicialMesh) -> DiagonalMatrix {
    let dim = mesh.dim();
    let mut diag = vec![0.0; mesh.num_vertices() * dim];
    for f in 0..mesh.num_boundary_facets() {
        let share = mesh.facet_measure(f).expect("boundary facets are non-degenerate") / dim as f64;
        for &v in mesh.boundary_facet(f) {
            for c in 0..dim {
                diag[v * dim + c] += share;
            }
        }
    }
    DiagonalMatrix::new(diag)
}
