use elastic_afem::assembly::{AForm, MaterialParams, SaddleSystem};
use elastic_afem::eigensolver::{solve_eigs, EigenOptions};
use elastic_afem::mesh::{preset_mesh, refine, uniform_refine, MarkSet, Mesh};
use elastic_afem::oracle::dense_pencil_eigenvalues;

fn meshes() -> Vec<Mesh> {
    let sq = preset_mesh("unit_square", 2).unwrap();
    let l = preset_mesh("lshape2d", 2).unwrap();
    let l1 = uniform_refine(&l).unwrap();
    let local = refine(&l1, &MarkSet::new(vec![0, 3, 11], 0.5)).unwrap();
    let cube = preset_mesh("unit_cube", 3).unwrap();
    let l3 = preset_mesh("lshape3d", 3).unwrap();
    vec![sq, uniform_refine(&preset_mesh("unit_square", 2).unwrap()).unwrap(), l, l1, local, cube, l3]
}

#[test]
fn sparse_path_matches_dense_pencil() {
    for mesh in meshes() {
        assert!(mesh.num_cells() <= 60);
        for nu in [0.35, 0.5] {
            let mat = MaterialParams::new(1.0, nu).unwrap();
            let form = if mat.limit { AForm::Limit } else { AForm::Deviatoric };
            let sys = SaddleSystem::assemble(&mesh, &mat, form).unwrap();
            let dense = dense_pencil_eigenvalues(&sys).unwrap();
            let m = 5.min(sys.num_u());
            let sol = solve_eigs(&sys, &EigenOptions::with_num_eigs(m)).unwrap();
            for i in 0..m {
                let rel = (sol.kappas[i] - dense[i]).abs() / dense[i];
                assert!(rel <= 1e-9, "cells {} nu {nu} i {i}: {} vs {}", mesh.num_cells(), sol.kappas[i], dense[i]);
            }
        }
    }
}

#[test]
fn lshape_frequency_is_in_range() {
    let mut mesh = preset_mesh("lshape2d", 2).unwrap();
    for _ in 0..4 {
        mesh = uniform_refine(&mesh).unwrap();
    }
    let mat = MaterialParams::new(1.0, 0.35).unwrap();
    let sys = SaddleSystem::assemble(&mesh, &mat, AForm::Deviatoric).unwrap();
    let sol = solve_eigs(&sys, &EigenOptions::with_num_eigs(1)).unwrap();
    eprintln!("omega_1 = {}", sol.omegas[0]);
    assert!((sol.omegas[0] - 2.37877).abs() < 0.1);
}
