//! Legacy ASCII VTK writers. Every grid is written as a STRUCTURED_GRID whose
//! points are the cell centres, so cell values become point data.

use std::io::{self, Write};

use roadcap_core::mesh::StructuredMesh;
use roadcap_core::rans::FlowState;

fn header<W: Write>(w: &mut W, title: &str, mesh: &StructuredMesh) -> io::Result<()> {
    let [nx, ny, nz] = mesh.dims();
    writeln!(w, "# vtk DataFile Version 3.0")?;
    writeln!(w, "{title}")?;
    writeln!(w, "ASCII")?;
    writeln!(w, "DATASET STRUCTURED_GRID")?;
    writeln!(w, "DIMENSIONS {nx} {ny} {nz}")?;
    writeln!(w, "POINTS {} double", mesh.len())?;
    // VTK wants x fastest, then y, then z.
    for k in 0..nz {
        for j in 0..ny {
            for i in 0..nx {
                let c = mesh.idx(i, j, k);
                let [x, y, z] = mesh.center(c);
                writeln!(w, "{x} {y} {z}")?;
            }
        }
    }
    Ok(())
}

fn point_order(mesh: &StructuredMesh) -> impl Iterator<Item = usize> + '_ {
    let [nx, ny, nz] = mesh.dims();
    (0..nz).flat_map(move |k| (0..ny).flat_map(move |j| (0..nx).map(move |i| mesh.idx(i, j, k))))
}

fn scalars<W: Write>(w: &mut W, name: &str, mesh: &StructuredMesh, f: &[f64]) -> io::Result<()> {
    writeln!(w, "SCALARS {name} double 1")?;
    writeln!(w, "LOOKUP_TABLE default")?;
    for c in point_order(mesh) {
        writeln!(w, "{}", f[c])?;
    }
    Ok(())
}

/// Cell centres only.
pub fn write_mesh<W: Write>(mut w: W, mesh: &StructuredMesh) -> io::Result<()> {
    header(&mut w, "roadcap mesh cell centres", mesh)?;
    w.flush()
}

pub fn write_flow<W: Write>(mut w: W, mesh: &StructuredMesh, flow: &FlowState) -> io::Result<()> {
    header(&mut w, "roadcap flow field", mesh)?;
    writeln!(w, "POINT_DATA {}", mesh.len())?;
    writeln!(w, "VECTORS velocity double")?;
    for c in point_order(mesh) {
        writeln!(w, "{} {} {}", flow.u[c], flow.v[c], flow.w[c])?;
    }
    scalars(&mut w, "pressure", mesh, &flow.p)?;
    scalars(&mut w, "k", mesh, &flow.k)?;
    scalars(&mut w, "epsilon", mesh, &flow.epsilon)?;
    scalars(&mut w, "mu_t", mesh, &flow.mu_t)?;
    w.flush()
}

/// One scalar array per named field, values in kg/m^3.
pub fn write_species<W: Write>(mut w: W, mesh: &StructuredMesh, fields: &[(String, &[f64])]) -> io::Result<()> {
    header(&mut w, "roadcap species concentration kg/m3", mesh)?;
    writeln!(w, "POINT_DATA {}", mesh.len())?;
    for (name, f) in fields {
        let name: String = name.chars().map(|c| if c.is_ascii_alphanumeric() { c } else { '_' }).collect();
        scalars(&mut w, &name, mesh, f)?;
    }
    w.flush()
}
