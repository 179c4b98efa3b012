//! Structured mesh generators: the union-jack square, its image on the unit
//! disk, and a Kuhn-split cube for 3D checks.

use std::f64::consts::FRAC_PI_4;

use super::SimplicialMesh;
use crate::error::{Error, Result};

/// Refinement index of the square/disk mesh family.
///
/// Level `l` splits each side of the square into `2^(l+1)` intervals of
/// width `2^-l`, giving `2 * 2^(2l+2)` triangles.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct MeshLevel(u32);

impl MeshLevel {
    pub fn new(l: u32) -> Result<Self> {
        if l == 0 {
            return Err(Error::InvalidArgument("mesh level must be at least 1".into()));
        }
        if l > 12 {
            return Err(Error::InvalidArgument(format!("mesh level {l} is too large")));
        }
        Ok(MeshLevel(l))
    }

    pub fn get(self) -> u32 {
        self.0
    }

    /// Grid intervals per side of the square.
    pub fn intervals(self) -> usize {
        1usize << (self.0 + 1)
    }

    pub fn expected_cells(self) -> usize {
        2 * self.intervals() * self.intervals()
    }

    pub fn expected_vertices(self) -> usize {
        (self.intervals() + 1) * (self.intervals() + 1)
    }

    /// Reference mesh size `2^-l`.
    pub fn h_ref(self) -> f64 {
        (-(self.0 as f64)).exp2()
    }
}

/// Uniform triangulation of `[-1, 1]^2`.
///
/// Vertices are numbered row-major (x fastest). Each grid square is cut along
/// the diagonal parallel to `x1 = x2` where `x1 x2 >= 0` and parallel to
/// `x1 = -x2` otherwise, so the pattern is symmetric about both axes.
pub fn build_square_mesh(level: MeshLevel) -> Result<SimplicialMesh> {
    let n = level.intervals();
    let spacing = 2.0 / n as f64;
    let mut coords = Vec::with_capacity(2 * (n + 1) * (n + 1));
    for j in 0..=n {
        for i in 0..=n {
            coords.push(-1.0 + i as f64 * spacing);
            coords.push(-1.0 + j as f64 * spacing);
        }
    }
    let id = |i: usize, j: usize| j * (n + 1) + i;
    let half = n / 2;
    let mut cells = Vec::with_capacity(6 * n * n);
    for j in 0..n {
        for i in 0..n {
            let (v00, v10, v01, v11) = (id(i, j), id(i + 1, j), id(i, j + 1), id(i + 1, j + 1));
            // sign of x1 * x2 at the square's centre
            let same_sign = (i >= half) == (j >= half);
            if same_sign {
                cells.extend_from_slice(&[v00, v10, v11, v00, v11, v01]);
            } else {
                cells.extend_from_slice(&[v00, v10, v01, v10, v11, v01]);
            }
        }
    }
    SimplicialMesh::new(2, coords, cells)
}

/// Maps a point of the square onto the disk.
///
/// A point with `s = |p|_inf` goes to Euclidean radius `s`; along the square
/// ring of radius `s` the polar angle grows linearly with arc length, so the
/// ring lands on the circle of radius `s` with its eight half-sides spread
/// evenly over octants.
pub(crate) fn square_to_disk_point(x: f64, y: f64) -> (f64, f64) {
    let s = x.abs().max(y.abs());
    if s == 0.0 {
        return (0.0, 0.0);
    }
    let theta = if x.abs() >= y.abs() {
        if x > 0.0 {
            FRAC_PI_4 * (y / s)
        } else {
            4.0 * FRAC_PI_4 - FRAC_PI_4 * (y / s)
        }
    } else if y > 0.0 {
        2.0 * FRAC_PI_4 - FRAC_PI_4 * (x / s)
    } else {
        6.0 * FRAC_PI_4 + FRAC_PI_4 * (x / s)
    };
    (s * theta.cos(), s * theta.sin())
}

/// Moves every vertex of a square mesh onto the unit disk; connectivity is kept.
pub fn map_square_to_disk(square: &SimplicialMesh) -> Result<SimplicialMesh> {
    if square.dim() != 2 {
        return Err(Error::InvalidArgument("square-to-disk map needs a 2D mesh".into()));
    }
    let mut coords = Vec::with_capacity(square.coords().len());
    for p in square.coords().chunks_exact(2) {
        let (x, y) = square_to_disk_point(p[0], p[1]);
        coords.push(x);
        coords.push(y);
    }
    SimplicialMesh::new(2, coords, square.cells().to_vec())
}

/// Disk mesh of the given level: [`build_square_mesh`] followed by [`map_square_to_disk`].
pub fn build_disk_mesh(level: MeshLevel) -> Result<SimplicialMesh> {
    map_square_to_disk(&build_square_mesh(level)?)
}

/// `n^3` cubes of `[0,1]^3`, each cut into six tetrahedra around its main
/// diagonal (Kuhn split); conforming across cubes.
pub fn build_cube_mesh(n: usize) -> Result<SimplicialMesh> {
    if n == 0 {
        return Err(Error::InvalidArgument("cube mesh needs at least one cell per side".into()));
    }
    let h = 1.0 / n as f64;
    let id = |i: usize, j: usize, k: usize| (k * (n + 1) + j) * (n + 1) + i;
    let mut coords = Vec::with_capacity(3 * (n + 1).pow(3));
    for k in 0..=n {
        for j in 0..=n {
            for i in 0..=n {
                coords.extend_from_slice(&[i as f64 * h, j as f64 * h, k as f64 * h]);
            }
        }
    }
    // axis orders and permutation parity
    const PERMUTATIONS: [([usize; 3], bool); 6] = [
        ([0, 1, 2], true),
        ([1, 2, 0], true),
        ([2, 0, 1], true),
        ([0, 2, 1], false),
        ([2, 1, 0], false),
        ([1, 0, 2], false),
    ];
    let mut cells = Vec::with_capacity(24 * n * n * n);
    for k in 0..n {
        for j in 0..n {
            for i in 0..n {
                for (order, even) in PERMUTATIONS {
                    let mut corner = [i, j, k];
                    let mut tet = [id(i, j, k); 4];
                    for (slot, axis) in order.iter().enumerate() {
                        corner[*axis] += 1;
                        tet[slot + 1] = id(corner[0], corner[1], corner[2]);
                    }
                    if !even {
                        tet.swap(2, 3);
                    }
                    cells.extend_from_slice(&tet);
                }
            }
        }
    }
    SimplicialMesh::new(3, coords, cells)
}
