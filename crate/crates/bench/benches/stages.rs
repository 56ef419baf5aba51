use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use elastic_afem::adaptive::mark_maximal;
use elastic_afem::assembly::{AForm, MaterialParams, SaddleSystem, Variant};
use elastic_afem::eigensolver::{solve_eigs, EigenOptions};
use elastic_afem::estimator::estimate;
use elastic_afem::mesh::{refine, Geometry};
use elastic_afem::postprocess::PatchAverage;
use elastic_afem_bench::refined;

const CASES: [(Geometry, usize); 3] = [(Geometry::LShape2d, 4), (Geometry::LShape2d, 5), (Geometry::LShape3d, 2)];

fn label(geometry: Geometry, times: usize) -> String {
    format!("{geometry}/{times}")
}

fn assembly(c: &mut Criterion) {
    let mat = MaterialParams::new(1.0, 0.35).unwrap();
    let mut group = c.benchmark_group("assemble");
    for (g, k) in CASES {
        let mesh = refined(g, k);
        group.bench_with_input(BenchmarkId::from_parameter(label(g, k)), &mesh, |b, mesh| {
            b.iter(|| SaddleSystem::assemble(mesh, &mat, AForm::Deviatoric).unwrap())
        });
    }
    group.finish();
}

fn eigen(c: &mut Criterion) {
    let mut group = c.benchmark_group("solve_eigs");
    group.sample_size(10);
    for (g, k) in CASES {
        let mesh = refined(g, k);
        for nu in [0.35, 0.5] {
            let mat = MaterialParams::new(1.0, nu).unwrap();
            let form = if mat.limit { AForm::Limit } else { AForm::Deviatoric };
            let sys = SaddleSystem::assemble(&mesh, &mat, form).unwrap();
            let id = BenchmarkId::new(format!("nu={nu}"), label(g, k));
            group.bench_with_input(id, &sys, |b, sys| b.iter(|| solve_eigs(sys, &EigenOptions::with_num_eigs(3)).unwrap()));
        }
    }
    group.finish();
}

fn estimator(c: &mut Criterion) {
    let mat = MaterialParams::new(1.0, 0.35).unwrap();
    let mut group = c.benchmark_group("estimate");
    for (g, k) in CASES {
        let mesh = refined(g, k);
        let sys = SaddleSystem::assemble(&mesh, &mat, AForm::Deviatoric).unwrap();
        let sol = solve_eigs(&sys, &EigenOptions::with_num_eigs(1)).unwrap();
        let patches = PatchAverage::new(&mesh);
        group.bench_function(label(g, k), |b| {
            b.iter(|| estimate(&mesh, &sol.rho_coeffs[0], &sol.u_coeffs[0], &mat, Variant::Standard, &patches).unwrap())
        });
    }
    group.finish();
}

fn refinement(c: &mut Criterion) {
    let mat = MaterialParams::new(1.0, 0.35).unwrap();
    let mut group = c.benchmark_group("refine");
    for (g, k) in CASES {
        let mesh = refined(g, k);
        let sys = SaddleSystem::assemble(&mesh, &mat, AForm::Deviatoric).unwrap();
        let sol = solve_eigs(&sys, &EigenOptions::with_num_eigs(1)).unwrap();
        let field = estimate(&mesh, &sol.rho_coeffs[0], &sol.u_coeffs[0], &mat, Variant::Standard, &PatchAverage::new(&mesh)).unwrap();
        let marks = mark_maximal(&field, 0.5).unwrap();
        group.bench_function(label(g, k), |b| b.iter(|| refine(&mesh, &marks).unwrap()));
    }
    group.finish();
}

criterion_group!(benches, assembly, eigen, estimator, refinement);
criterion_main!(benches);
