//! Plain-text mesh files and legacy VTK export.
//!
//! Mesh text layout:
//!
//! ```text
//! dim nv nc nbf
//! x y [z]            (nv lines)
//! v0 v1 v2 [v3]      (nc lines, 0-based)
//! w0 w1 [w2] parent  (nbf lines)
//! ```
//!
//! Coordinates are written in Rust's shortest round-trip form, so a save/load
//! cycle reproduces every coordinate bit for bit.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use super::SimplicialMesh;
use crate::error::{Error, Result};
use crate::fespace::NodalVectorField;

pub fn write_mesh<W: Write>(mesh: &SimplicialMesh, out: &mut W) -> std::io::Result<()> {
    let dim = mesh.dim();
    writeln!(
        out,
        "{} {} {} {}",
        dim,
        mesh.num_vertices(),
        mesh.num_cells(),
        mesh.num_boundary_facets()
    )?;
    for p in mesh.coords().chunks_exact(dim) {
        let line: Vec<String> = p.iter().map(|x| format!("{x:?}")).collect();
        writeln!(out, "{}", line.join(" "))?;
    }
    for c in mesh.cells().chunks_exact(dim + 1) {
        let line: Vec<String> = c.iter().map(|v| v.to_string()).collect();
        writeln!(out, "{}", line.join(" "))?;
    }
    for f in 0..mesh.num_boundary_facets() {
        let mut line: Vec<String> = mesh.boundary_facet(f).iter().map(|v| v.to_string()).collect();
        line.push(mesh.facet_parent(f).to_string());
        writeln!(out, "{}", line.join(" "))?;
    }
    Ok(())
}

pub fn save_mesh(mesh: &SimplicialMesh, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    write_mesh(mesh, &mut out)
        .and_then(|_| out.flush())
        .map_err(|e| Error::io(path, e))
}

pub fn load_mesh(path: impl AsRef<Path>) -> Result<SimplicialMesh> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_mesh(BufReader::new(file), path)
}

/// Parses the mesh text format; `origin` is only used in error messages.
pub fn read_mesh<R: BufRead>(reader: R, origin: &Path) -> Result<SimplicialMesh> {
    let mut lines = reader.lines().enumerate();
    let mut line_no = 0;
    let parse_err = |line: usize, message: String| Error::Parse {
        path: origin.to_path_buf(),
        line,
        message,
    };
    let mut next_fields = |expected: usize, what: &str| -> Result<(usize, Vec<String>)> {
        let (idx, line) = lines
            .next()
            .ok_or_else(|| parse_err(line_no + 1, format!("unexpected end of file, expected {what}")))?;
        line_no = idx + 1;
        let line = line.map_err(|e| Error::io(origin, e))?;
        let fields: Vec<String> = line.split_whitespace().map(str::to_owned).collect();
        if fields.len() != expected {
            return Err(parse_err(
                line_no,
                format!("expected {expected} fields for {what}, found {}", fields.len()),
            ));
        }
        Ok((line_no, fields))
    };
    let parse_usize = |line: usize, s: &str| -> Result<usize> {
        s.parse::<usize>()
            .map_err(|e| parse_err(line, format!("bad integer {s:?}: {e}")))
    };

    let (header_line, header) = next_fields(4, "header `dim nv nc nbf`")?;
    let dim = parse_usize(header_line, &header[0])?;
    if dim != 2 && dim != 3 {
        return Err(parse_err(header_line, format!("unsupported dimension {dim}")));
    }
    let nv = parse_usize(header_line, &header[1])?;
    let nc = parse_usize(header_line, &header[2])?;
    let nbf = parse_usize(header_line, &header[3])?;

    let mut coords = Vec::with_capacity(nv * dim);
    for _ in 0..nv {
        let (line, fields) = next_fields(dim, "vertex coordinates")?;
        for s in &fields {
            let x: f64 = s
                .parse()
                .map_err(|e| parse_err(line, format!("bad coordinate {s:?}: {e}")))?;
            coords.push(x);
        }
    }
    let mut cells = Vec::with_capacity(nc * (dim + 1));
    for _ in 0..nc {
        let (line, fields) = next_fields(dim + 1, "cell vertices")?;
        for s in &fields {
            let v = parse_usize(line, s)?;
            if v >= nv {
                return Err(parse_err(line, format!("vertex index {v} out of range")));
            }
            cells.push(v);
        }
    }
    let mut facets = Vec::with_capacity(nbf);
    for _ in 0..nbf {
        let (line, fields) = next_fields(dim + 1, "boundary facet")?;
        let mut vertices = Vec::with_capacity(dim);
        for s in &fields[..dim] {
            vertices.push(parse_usize(line, s)?);
        }
        let parent = parse_usize(line, &fields[dim])?;
        if parent >= nc {
            return Err(parse_err(line, format!("parent cell {parent} out of range")));
        }
        facets.push((vertices, parent));
    }
    SimplicialMesh::with_boundary(dim, coords, cells, &facets)
}

/// Writes the mesh and any number of nodal vector fields as a legacy ASCII
/// VTK 3.0 unstructured grid.
pub fn write_vtk<W: Write>(
    mesh: &SimplicialMesh,
    fields: &[(&str, &NodalVectorField)],
    out: &mut W,
) -> std::io::Result<()> {
    let dim = mesh.dim();
    let nv = mesh.num_vertices();
    let nc = mesh.num_cells();
    writeln!(out, "# vtk DataFile Version 3.0")?;
    writeln!(out, "maxwell-p1 output")?;
    writeln!(out, "ASCII")?;
    writeln!(out, "DATASET UNSTRUCTURED_GRID")?;
    writeln!(out, "POINTS {nv} double")?;
    for i in 0..nv {
        let p = mesh.vertex3(i);
        writeln!(out, "{:?} {:?} {:?}", p[0], p[1], p[2])?;
    }
    writeln!(out, "CELLS {} {}", nc, nc * (dim + 2))?;
    for c in mesh.cells().chunks_exact(dim + 1) {
        let ids: Vec<String> = c.iter().map(|v| v.to_string()).collect();
        writeln!(out, "{} {}", dim + 1, ids.join(" "))?;
    }
    writeln!(out, "CELL_TYPES {nc}")?;
    let cell_type = if dim == 2 { 5 } else { 10 };
    for _ in 0..nc {
        writeln!(out, "{cell_type}")?;
    }
    if !fields.is_empty() {
        writeln!(out, "POINT_DATA {nv}")?;
        for (name, field) in fields {
            writeln!(out, "VECTORS {name} double")?;
            for i in 0..nv {
                let v = field.at(i);
                let z = if dim == 3 { v[2] } else { 0.0 };
                writeln!(out, "{:?} {:?} {:?}", v[0], v[1], z)?;
            }
        }
    }
    Ok(())
}

pub fn export_vtk(
    mesh: &SimplicialMesh,
    fields: &[(&str, &NodalVectorField)],
    path: impl AsRef<Path>,
) -> Result<()> {
    let path = path.as_ref();
    for (_, field) in fields {
        if field.num_vertices() != mesh.num_vertices() || field.dim() != mesh.dim() {
            return Err(Error::DimensionMismatch {
                expected: mesh.num_vertices() * mesh.dim(),
                actual: field.values().len(),
            });
        }
    }
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    write_vtk(mesh, fields, &mut out)
        .and_then(|_| out.flush())
        .map_err(|e| Error::io(path, e))
}
