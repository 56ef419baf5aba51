//! Files of one case directory: `trace.csv`, `final.vtk`, snapshots and `meta.txt`.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use elastic_afem::adaptive::AdaptiveTrace;
use elastic_afem::estimator::EstimatorField;
use elastic_afem::mesh::{MarkSet, Mesh};
use elastic_afem::postprocess::theta;
use elastic_afem::vtk::{write_vtk, Field};

pub fn write_trace(dir: &Path, trace: &AdaptiveTrace) -> std::io::Result<()> {
    let mut w = BufWriter::new(File::create(dir.join("trace.csv"))?);
    trace.write_csv(&mut w)?;
    w.flush()
}

/// Mesh with indicators, refinement generation, marks and the displacement
/// (cellwise and patch-averaged).
pub fn write_state(
    path: &Path,
    title: &str,
    mesh: &Mesh,
    u: &[f64],
    field: &EstimatorField,
    marks: Option<&MarkSet>,
) -> std::io::Result<()> {
    let dim = mesh.dim();
    let eta = field.indicators();
    let generation: Vec<f64> = mesh.generations().iter().map(|&g| f64::from(g)).collect();
    let marked = marks.map(|m| {
        let mut v = vec![0.0; mesh.num_cells()];
        m.marked.iter().for_each(|&t| v[t] = 1.0);
        v
    });
    let components: Vec<Vec<f64>> = (0..dim).map(|i| (0..mesh.num_cells()).map(|t| u[t * dim + i]).collect()).collect();
    let smooth = theta(mesh, u).p1_coeffs;
    const NAMES: [&str; 3] = ["u_x", "u_y", "u_z"];

    let mut fields = vec![Field::CellScalar("eta_T", &eta), Field::CellScalar("generation", &generation)];
    if let Some(m) = &marked {
        fields.push(Field::CellScalar("marked", m));
    }
    for (name, c) in NAMES.iter().zip(&components) {
        fields.push(Field::CellScalar(name, c));
    }
    fields.push(Field::PointVector("theta_u", &smooth));

    let mut w = BufWriter::new(File::create(path)?);
    write_vtk(&mut w, mesh, title, &fields)?;
    w.flush()
}

/// `meta.txt`: version comments, the resolved settings and a commented summary.
pub fn write_meta(dir: &Path, settings: &str, summary: &[String]) -> std::io::Result<()> {
    let mut w = BufWriter::new(File::create(dir.join("meta.txt"))?);
    writeln!(w, "# elastic-afem {}", elastic_afem::VERSION)?;
    writeln!(w, "# elastic-afem-cli {}", env!("CARGO_PKG_VERSION"))?;
    w.write_all(settings.as_bytes())?;
    for line in summary {
        writeln!(w, "# {line}")?;
    }
    w.flush()
}
