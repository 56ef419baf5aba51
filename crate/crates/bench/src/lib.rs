//! Meshes shared by the benchmarks.

use elastic_afem::mesh::{uniform_refine, Geometry, Mesh};

/// The preset mesh of `geometry` after `times` uniform refinements.
pub fn refined(geometry: Geometry, times: usize) -> Mesh {
    let mut mesh = geometry.mesh().expect("preset mesh");
    for _ in 0..times {
        mesh = uniform_refine(&mesh).expect("uniform refinement");
    }
    mesh
}
