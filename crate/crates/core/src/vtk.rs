//! Legacy ASCII VTK output (`UNSTRUCTURED_GRID`).

use std::io::Write;

use crate::mesh::Mesh;

/// Named per-cell scalar or per-vertex vector data.
pub enum Field<'a> {
    CellScalar(&'a str, &'a [f64]),
    PointVector(&'a str, &'a [f64]),
}

/// Writes `mesh` with the given fields. Point vectors hold `dim` components
/// per vertex and are padded to three.
pub fn write_vtk(w: &mut impl Write, mesh: &Mesh, title: &str, fields: &[Field]) -> std::io::Result<()> {
    let dim = mesh.dim();
    writeln!(w, "# vtk DataFile Version 3.0")?;
    writeln!(w, "{}", title.lines().next().unwrap_or(""))?;
    writeln!(w, "ASCII")?;
    writeln!(w, "DATASET UNSTRUCTURED_GRID")?;
    writeln!(w, "POINTS {} double", mesh.num_vertices())?;
    for p in mesh.vertices() {
        writeln!(w, "{} {} {}", p.x, p.y, p.z)?;
    }
    let nc = mesh.num_cells();
    writeln!(w, "CELLS {} {}", nc, nc * (dim + 2))?;
    for t in 0..nc {
        write!(w, "{}", dim + 1)?;
        for v in mesh.cell(t) {
            write!(w, " {v}")?;
        }
        writeln!(w)?;
    }
    writeln!(w, "CELL_TYPES {nc}")?;
    let cell_type = if dim == 2 { 5 } else { 10 };
    for _ in 0..nc {
        writeln!(w, "{cell_type}")?;
    }

    let cell_fields: Vec<_> = fields
        .iter()
        .filter_map(|f| match f {
            Field::CellScalar(n, v) => Some((n, v)),
            _ => None,
        })
        .collect();
    if !cell_fields.is_empty() {
        writeln!(w, "CELL_DATA {nc}")?;
        for (name, values) in cell_fields {
            assert_eq!(values.len(), nc, "cell field {name} has the wrong length");
            writeln!(w, "SCALARS {name} double 1")?;
            writeln!(w, "LOOKUP_TABLE default")?;
            for v in values.iter() {
                writeln!(w, "{v}")?;
            }
        }
    }

    let point_fields: Vec<_> = fields
        .iter()
        .filter_map(|f| match f {
            Field::PointVector(n, v) => Some((n, v)),
            _ => None,
        })
        .collect();
    if !point_fields.is_empty() {
        let nv = mesh.num_vertices();
        writeln!(w, "POINT_DATA {nv}")?;
        for (name, values) in point_fields {
            assert_eq!(values.len(), nv * dim, "point field {name} has the wrong length");
            writeln!(w, "VECTORS {name} double")?;
            for z in 0..nv {
                let c = &values[z * dim..(z + 1) * dim];
                let third = if dim == 3 { c[2] } else { 0.0 };
                writeln!(w, "{} {} {}", c[0], c[1], third)?;
            }
        }
    }
    Ok(())
}
