//! Builds the square and disk meshes of one level, checks a file round trip
//! and exports both to VTK.
//!
//! ```text
//! cargo run --example disk_mesh -- [l] [out_dir]
//! ```

use std::path::PathBuf;

use maxwell_p1::mesh::{build_disk_mesh, build_square_mesh, export_vtk, load_mesh, save_mesh, MeshLevel};

fn main() -> maxwell_p1::Result<()> {
    let mut args = std::env::args().skip(1);
    let level = MeshLevel::new(args.next().and_then(|a| a.parse().ok()).unwrap_or(2))?;
    let out = PathBuf::from(args.next().unwrap_or_else(|| std::env::temp_dir().display().to_string()));

    for (name, mesh) in [("square", build_square_mesh(level)?), ("disk", build_disk_mesh(level)?)] {
        let path = out.join(format!("{name}_l{}.mesh", level.get()));
        save_mesh(&mesh, &path)?;
        assert_eq!(load_mesh(&path)?, mesh);
        export_vtk(&mesh, &[], path.with_extension("vtk"))?;
        println!(
            "{name:>6}: {} vertices, {} cells, {} boundary edges, h in [{:.4}, {:.4}], area {:.6}",
            mesh.num_vertices(),
            mesh.num_cells(),
            mesh.num_boundary_facets(),
            mesh.h_min(),
            mesh.h_max(),
            mesh.total_volume()
        );
    }
    println!("area of the unit disk: {:.6}", std::f64::consts::PI);
    println!("files written to {}", out.display());
    Ok(())
}
