//! Fast internal consistency checks on tiny meshes, grouped by topic.
//!
//! Each group compares a production code path against an independent
//! evaluation: the two `a` forms against each other, the interpolant against
//! the projection of the divergence, the sparse eigensolver against a dense
//! pencil solve, the estimator against a high-order quadrature of the same
//! terms, and the compliance map against the constitutive law it inverts.

use std::fmt;

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::assembly::{assemble_a, AForm, MaterialParams, SaddleSystem, Variant};
use crate::eigensolver::{solve_eigs, EigenOptions};
use crate::estimator::estimate_with_compliance;
use crate::mesh::{uniform_refine, Geometry, Mesh, Point};
use crate::oracle::dense_pencil_eigenvalues;
use crate::postprocess::PatchAverage;
use crate::quadrature::collapsed_rule;
use crate::spaces::{check_commuting, identity, trace, Compliance, P0VectorSpace, RtTensorSpace, Tensor};

/// Deliberate defects used to confirm that the checks can fail.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Fault {
    /// Negates the trace coefficient of the compliance map.
    FlipTraceCoefficient,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SelftestOptions {
    pub fault: Option<Fault>,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CheckResult {
    pub name: String,
    pub error: f64,
    pub tol: f64,
}

impl CheckResult {
    pub fn passed(&self) -> bool {
        self.error.is_finite() && self.error <= self.tol
    }
}

impl fmt::Display for CheckResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = if self.passed() { "ok  " } else { "FAIL" };
        write!(f, "{tag} {}: {:.3e} (tol {:.0e})", self.name, self.error, self.tol)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CheckGroup {
    pub name: &'static str,
    pub checks: Vec<CheckResult>,
}

impl CheckGroup {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(CheckResult::passed)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SelftestReport {
    pub groups: Vec<CheckGroup>,
}

impl SelftestReport {
    pub fn passed(&self) -> bool {
        self.groups.iter().all(CheckGroup::passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = (&'static str, &CheckResult)> {
        self.groups.iter().flat_map(|g| g.checks.iter().filter(|c| !c.passed()).map(move |c| (g.name, c)))
    }
}

pub fn run_selftest(opts: &SelftestOptions) -> SelftestReport {
    SelftestReport {
        groups: vec![
            form_identity(),
            commuting_diagram(),
            dense_oracle(),
            estimator_quadrature(opts),
            compliance_inverse(opts),
        ],
    }
}

fn refined(g: Geometry, times: usize) -> Mesh {
    let mut m = g.mesh().expect("preset mesh");
    for _ in 0..times {
        m = uniform_refine(&m).expect("uniform refinement");
    }
    m
}

fn compliance_for(mat: &MaterialParams, dim: usize, variant: Variant, fault: Option<Fault>) -> Compliance {
    let mut c = mat.compliance(dim, variant);
    if fault == Some(Fault::FlipTraceCoefficient) {
        c.c_trace = -c.c_trace;
    }
    c
}

fn form_identity() -> CheckGroup {
    let meshes = [("unit_square", refined(Geometry::UnitSquare, 0)), ("lshape2d/1", refined(Geometry::LShape2d, 1))];
    let mut checks = Vec::new();
    for (label, mesh) in &meshes {
        let rt = RtTensorSpace::new(mesh);
        for nu in [0.2, 0.35, 0.49, 0.4999] {
            let mat = MaterialParams::new(1.0, nu).expect("valid material");
            let error = match (assemble_a(&rt, &mat, AForm::Original), assemble_a(&rt, &mat, AForm::Deviatoric)) {
                (Ok(a), Ok(b)) => a.max_abs_diff(&b) / a.max_abs(),
                _ => f64::NAN,
            };
            checks.push(CheckResult { name: format!("{label} nu={nu}"), error, tol: 1e-12 });
        }
    }
    CheckGroup { name: "form identity", checks }
}

/// Polynomial with monomials `coef * x^a y^b z^c`.
#[derive(Clone)]
struct Poly(Vec<(f64, [i32; 3])>);

impl Poly {
    fn eval(&self, x: &Point) -> f64 {
        self.0.iter().map(|(c, e)| c * x.x.powi(e[0]) * x.y.powi(e[1]) * x.z.powi(e[2])).sum()
    }

    fn diff(&self, k: usize) -> Poly {
        Poly(
            self.0
                .iter()
                .filter(|(_, e)| e[k] > 0)
                .map(|(c, e)| {
                    let mut d = *e;
                    d[k] -= 1;
                    (c * e[k] as f64, d)
                })
                .collect(),
        )
    }
}

/// Five tensor fields of degree one to four with nonzero divergence.
fn test_tensors(dim: usize) -> Vec<Vec<Vec<Poly>>> {
    let mono = |c: f64, a: i32, b: i32, z: i32| (c, [a, b, if dim == 3 { z } else { 0 }]);
    let mut out = Vec::new();
    for k in 0..5 {
        let mut rows = Vec::new();
        for i in 0..dim {
            let mut row = Vec::new();
            for j in 0..dim {
                let s = 1.0 + (i * dim + j) as f64 * 0.5 + k as f64 * 0.25;
                let p = match k {
                    0 => vec![mono(s, 1, 0, 0), mono(-0.5 * s, 0, 1, 1)],
                    1 => vec![mono(s, 2, 0, 0), mono(0.3, 1, 1, 0), mono(-s, 0, 0, 2)],
                    2 => vec![mono(s, 1, 2, 0), mono(-0.7, 3, 0, 0), mono(0.2, 0, 1, 2)],
                    3 => vec![mono(s, 2, 2, 0), mono(0.4, 1, 0, 3), mono(-0.1, 4, 0, 0)],
                    _ => vec![mono(s, 0, 3, 1), mono(1.5, 1, 1, 1), mono(-s, 2, 1, 0), mono(0.9, 0, 0, 0)],
                };
                row.push(Poly(p));
            }
            rows.push(row);
        }
        out.push(rows);
    }
    out
}

fn commuting_diagram() -> CheckGroup {
    let meshes = [
        ("lshape2d/1", refined(Geometry::LShape2d, 1)),
        ("unit_square/2", refined(Geometry::UnitSquare, 2)),
        ("unit_cube", refined(Geometry::UnitCube, 0)),
    ];
    let mut checks = Vec::new();
    for (label, mesh) in &meshes {
        let dim = mesh.dim();
        let rt = RtTensorSpace::new(mesh);
        let p0 = P0VectorSpace::new(mesh);
        for (k, f) in test_tensors(dim).iter().enumerate() {
            let divs: Vec<Poly> = f
                .iter()
                .map(|row| Poly(row.iter().enumerate().flat_map(|(j, p)| p.diff(j).0).collect()))
                .collect();
            let value = |x: &Point| {
                let mut t = Tensor::zeros();
                for i in 0..dim {
                    for j in 0..dim {
                        t[(i, j)] = f[i][j].eval(x);
                    }
                }
                t
            };
            let div = |x: &Point| {
                let mut v = Vector3::zeros();
                for i in 0..dim {
                    v[i] = divs[i].eval(x);
                }
                v
            };
            let rule = collapsed_rule(dim, 6);
            let norm: f64 = (0..mesh.num_cells())
                .map(|t| {
                    let vol = mesh.cell_volume(t);
                    rule.iter().map(|(b, w)| w * vol * div(&mesh.map_to_cell(t, b)).norm_squared()).sum::<f64>()
                })
                .sum::<f64>()
                .sqrt();
            let gap = check_commuting(&rt, &p0, value, div);
            checks.push(CheckResult { name: format!("{label} tensor {}", k + 1), error: gap / norm, tol: 1e-10 });
        }
    }
    CheckGroup { name: "commuting diagram", checks }
}

fn dense_oracle() -> CheckGroup {
    let meshes =
        [("lshape2d/1", refined(Geometry::LShape2d, 1)), ("unit_square/2", refined(Geometry::UnitSquare, 2)), ("lshape3d", refined(Geometry::LShape3d, 0))];
    let mut checks = Vec::new();
    for (label, mesh) in &meshes {
        for nu in [0.35, 0.5] {
            let mat = MaterialParams::new(1.0, nu).expect("valid material");
            let form = if mat.limit { AForm::Limit } else { AForm::Deviatoric };
            let error = SaddleSystem::assemble(mesh, &mat, form)
                .and_then(|sys| {
                    let sparse = solve_eigs(&sys, &EigenOptions::with_num_eigs(5))?;
                    let dense = dense_pencil_eigenvalues(&sys)?;
                    Ok(sparse.kappas.iter().zip(&dense).map(|(s, d)| ((s - d) / d).abs()).fold(0.0, f64::max))
                })
                .unwrap_or(f64::NAN);
            checks.push(CheckResult { name: format!("{label} nu={nu}"), error, tol: 1e-9 });
        }
    }
    CheckGroup { name: "dense eigensolver oracle", checks }
}

/// Trace coefficient computed directly from the Lame parameters.
fn reference_trace_coefficient(mat: &MaterialParams, dim: usize) -> f64 {
    let n = dim as f64;
    if mat.limit {
        1.0 / n
    } else {
        (mat.lambda + mat.mu) / (n * mat.lambda + (n + 1.0) * mat.mu)
    }
}

fn reference_terms(mesh: &Mesh, rho: &[f64], u: &[f64], mat: &MaterialParams) -> Vec<[f64; 5]> {
    let dim = mesh.dim();
    let rt = RtTensorSpace::new(mesh);
    let c = reference_trace_coefficient(mat, dim);
    let chi = |t: usize, x: &Point| {
        let r = rt.value(rho, t, x);
        (r - identity(dim) * (c * trace(&r))) / mat.mu
    };
    // vertex averages of u weighted by cell volume
    let nv = mesh.num_vertices();
    let mut sums = vec![Vector3::zeros(); nv];
    let mut vols = vec![0.0; nv];
    for t in 0..mesh.num_cells() {
        let vol = mesh.cell_volume(t);
        let ut = Vector3::from_fn(|i, _| if i < dim { u[t * dim + i] } else { 0.0 });
        for &z in mesh.cell(t) {
            sums[z] += ut * vol;
            vols[z] += vol;
        }
    }
    let cell_rule = collapsed_rule(dim, 6);
    let facet_rule = collapsed_rule(dim - 1, 6);
    let h = 1e-3;
    let mut terms = vec![[0.0; 5]; mesh.num_cells()];
    for (t, term) in terms.iter_mut().enumerate() {
        let vol = mesh.cell_volume(t);
        let h2 = mesh.cell_diameter(t).powi(2);
        let ut = Vector3::from_fn(|i, _| if i < dim { u[t * dim + i] } else { 0.0 });
        for (b, w) in cell_rule.iter() {
            let x = mesh.map_to_cell(t, b);
            let theta: Vector3<f64> =
                mesh.cell(t).iter().zip(b).map(|(&z, &bz)| sums[z] / vols[z] * bz).sum();
            term[0] += w * vol * (theta - ut).norm_squared();
            term[1] += w * vol * h2 * chi(t, &x).norm_squared();
            // central differences are exact for the affine field chi
            let d = |k: usize| {
                let mut e = Vector3::zeros();
                e[k] = h;
                (chi(t, &(x + e)) - chi(t, &(x - e))) / (2.0 * h)
            };
            let (dx, dy) = (d(0), d(1));
            let mut curl_sq = 0.0;
            if dim == 2 {
                for i in 0..2 {
                    curl_sq += (dx[(i, 1)] - dy[(i, 0)]).powi(2);
                }
            } else {
                let dz = d(2);
                for i in 0..3 {
                    let c = Vector3::new(dy[(i, 2)] - dz[(i, 1)], dz[(i, 0)] - dx[(i, 2)], dx[(i, 1)] - dy[(i, 0)]);
                    curl_sq += c.norm_squared();
                }
            }
            term[2] += w * vol * h2 * curl_sq;
        }
    }
    for f in 0..mesh.num_facets() {
        let n = mesh.normal(f);
        let [t0, t1] = mesh.facet_cells(f);
        let boundary = mesh.is_boundary_facet(f);
        let mut s = 0.0;
        for (b, w) in facet_rule.iter() {
            let x = mesh.map_to_facet(f, b);
            let jump = if boundary { chi(t0, &x) } else { chi(t0, &x) - chi(t1, &x) };
            for i in 0..dim {
                s += w * jump.row(i).transpose().cross(n).norm_squared();
            }
        }
        let v = mesh.facet_diameter(f) * mesh.facet_measure(f) * s;
        if boundary {
            terms[t0][4] += v;
        } else {
            terms[t0][3] += v;
            terms[t1][3] += v;
        }
    }
    terms
}

fn estimator_quadrature(opts: &SelftestOptions) -> CheckGroup {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let meshes = [("lshape2d", refined(Geometry::LShape2d, 0)), ("unit_cube", refined(Geometry::UnitCube, 0))];
    let mut checks = Vec::new();
    for (label, mesh) in &meshes {
        let dim = mesh.dim();
        let rho: Vec<f64> = (0..RtTensorSpace::new(mesh).num_dofs()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let u: Vec<f64> = (0..dim * mesh.num_cells()).map(|_| rng.random_range(-1.0..1.0)).collect();
        for (nu, variant) in [(0.35, Variant::Standard), (0.5, Variant::Limit)] {
            let mat = MaterialParams::new(2.5, nu).expect("valid material");
            let compliance = compliance_for(&mat, dim, variant, opts.fault);
            let field = estimate_with_compliance(mesh, &rho, &u, &compliance, variant, &PatchAverage::new(mesh));
            let reference = reference_terms(mesh, &rho, &u, &mat);
            for k in 0..5 {
                let scale = reference.iter().map(|r| r[k]).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
                let diff = field.terms.iter().zip(&reference).map(|(a, b)| (a[k] - b[k]).abs()).fold(0.0, f64::max);
                checks.push(CheckResult {
                    name: format!("{label} nu={nu} {}", crate::estimator::TERM_NAMES[k]),
                    error: diff / scale,
                    tol: 1e-10,
                });
            }
        }
    }
    CheckGroup { name: "estimator quadrature oracle", checks }
}

fn compliance_inverse(opts: &SelftestOptions) -> CheckGroup {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ 0x5eed);
    let mut checks = Vec::new();
    for dim in [2, 3] {
        for nu in [0.2, 0.35, 0.49, 0.5] {
            let mat = MaterialParams::new(1.0, nu).expect("valid material");
            let variant = mat.auto_variant();
            let compliance = compliance_for(&mat, dim, variant, opts.fault);
            let mut g = Tensor::zeros();
            for i in 0..dim {
                for j in 0..dim {
                    g[(i, j)] = rng.random_range(-1.0..1.0);
                }
            }
            let eye = identity(dim);
            let rho = if mat.limit {
                // incompressible: trace-free gradient plus an arbitrary pressure
                g -= eye * (trace(&g) / dim as f64);
                g * mat.mu + eye * rng.random_range(-1.0..1.0)
            } else {
                g * mat.mu + eye * ((mat.lambda + mat.mu) * trace(&g))
            };
            let error = (compliance.apply(&rho, dim) - g).norm() / g.norm();
            checks.push(CheckResult { name: format!("dim={dim} nu={nu}"), error, tol: 1e-12 });
        }
    }
    CheckGroup { name: "compliance inverse", checks }
}
