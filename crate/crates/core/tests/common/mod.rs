//! Brute-force reference implementations shared by integration tests.
#![allow(dead_code)]

use std::collections::BTreeMap;

use elastic_afem::mesh::{Mesh, Point};
use nalgebra::{DMatrix, Matrix3, Vector3};

/// Gauss-Legendre nodes and weights on `[0, 1]` via Golub-Welsch.
pub fn gauss_legendre01(n: usize) -> Vec<(f64, f64)> {
    let mut j = DMatrix::<f64>::zeros(n, n);
    for k in 1..n {
        let b = k as f64 / ((4 * k * k - 1) as f64).sqrt();
        j[(k, k - 1)] = b;
        j[(k - 1, k)] = b;
    }
    let eig = j.symmetric_eigen();
    let mut out: Vec<(f64, f64)> = (0..n)
        .map(|i| {
            let x = eig.eigenvalues[i];
            let w = 2.0 * eig.eigenvectors[(0, i)].powi(2);
            (0.5 * (x + 1.0), 0.5 * w)
        })
        .collect();
    out.sort_by(|a, b| a.0.total_cmp(&b.0));
    out
}

/// Duffy-collapsed tensor Gauss rule on the reference `k`-simplex, returned
/// as (barycentric coordinates, weight) with weights summing to one.
pub fn simplex_rule(k: usize, n: usize) -> Vec<(Vec<f64>, f64)> {
    let g = gauss_legendre01(n);
    match k {
        1 => g.iter().map(|&(s, w)| (vec![1.0 - s, s], w)).collect(),
        2 => {
            let mut out = Vec::new();
            for &(s, ws) in &g {
                for &(t, wt) in &g {
                    let x = s;
                    let y = (1.0 - s) * t;
                    out.push((vec![1.0 - x - y, x, y], 2.0 * ws * wt * (1.0 - s)));
                }
            }
            out
        }
        3 => {
            let mut out = Vec::new();
            for &(s, ws) in &g {
                for &(t, wt) in &g {
                    for &(r, wr) in &g {
                        let x = s;
                        let y = (1.0 - s) * t;
                        let z = (1.0 - s) * (1.0 - t) * r;
                        let jac = (1.0 - s).powi(2) * (1.0 - t);
                        out.push((vec![1.0 - x - y - z, x, y, z], 6.0 * ws * wt * wr * jac));
                    }
                }
            }
            out
        }
        _ => panic!("unsupported simplex dimension {k}"),
    }
}

fn combine(points: &[Point], bary: &[f64]) -> Point {
    points.iter().zip(bary).map(|(p, l)| p * *l).sum()
}

fn simplex_measure(points: &[Point]) -> f64 {
    match points.len() {
        2 => (points[1] - points[0]).norm(),
        3 => 0.5 * (points[1] - points[0]).cross(&(points[2] - points[0])).norm(),
        4 => (points[1] - points[0]).cross(&(points[2] - points[0])).dot(&(points[3] - points[0])).abs() / 6.0,
        _ => unreachable!(),
    }
}

fn diameter(points: &[Point]) -> f64 {
    let mut h = 0.0f64;
    for a in points {
        for b in points {
            h = h.max((a - b).norm());
        }
    }
    h
}

/// Raw piecewise data read from the mesh with no derived topology.
pub struct RawCell {
    pub points: Vec<Point>,
    pub vertices: Vec<usize>,
    pub facets: Vec<usize>,
}

fn raw_cells(mesh: &Mesh) -> Vec<RawCell> {
    (0..mesh.num_cells())
        .map(|t| RawCell {
            points: mesh.cell(t).iter().map(|&v| *mesh.vertex(v)).collect(),
            vertices: mesh.cell(t).to_vec(),
            facets: mesh.cell_facets(t).to_vec(),
        })
        .collect()
}

/// Evaluates the discrete pseudostress on a cell from the facet fluxes,
/// orienting each facet by the mesh's global normal.
pub fn rho_at(mesh: &Mesh, cell: &RawCell, coeffs: &[f64], x: &Point) -> Matrix3<f64> {
    let n = mesh.dim();
    let nf = mesh.num_facets();
    let vol = simplex_measure(&cell.points);
    let centroid: Point = cell.points.iter().sum::<Point>() / (n + 1) as f64;
    let mut rho = Matrix3::zeros();
    for j in 0..=n {
        let f = cell.facets[j];
        let fpts: Vec<Point> = mesh.facet_vertices(f).iter().map(|&v| *mesh.vertex(v)).collect();
        let fc: Point = fpts.iter().sum::<Point>() / n as f64;
        let outward = (fc - centroid).dot(mesh.normal(f)) > 0.0;
        let s = if outward { 1.0 } else { -1.0 };
        let phi = (x - cell.points[j]) * (s / (n as f64 * vol));
        for i in 0..n {
            let c = coeffs[i * nf + f];
            for k in 0..n {
                rho[(i, k)] += c * phi[k];
            }
        }
    }
    rho
}

pub fn chi_at(mesh: &Mesh, cell: &RawCell, coeffs: &[f64], x: &Point, mu: f64, c: f64) -> Matrix3<f64> {
    let n = mesh.dim();
    let rho = rho_at(mesh, cell, coeffs, x);
    let tr: f64 = (0..n).map(|i| rho[(i, i)]).sum();
    let mut chi = rho;
    for i in 0..n {
        chi[(i, i)] -= c * tr;
    }
    chi / mu
}

/// Row-wise curl by central differences (exact for fields linear in `x`).
pub fn curl_at(mesh: &Mesh, cell: &RawCell, coeffs: &[f64], x: &Point, mu: f64, c: f64) -> Matrix3<f64> {
    let h = 0.125;
    let mut d = [Matrix3::zeros(); 3];
    for (k, dk) in d.iter_mut().enumerate().take(mesh.dim()) {
        let mut e = Vector3::zeros();
        e[k] = h;
        *dk = (chi_at(mesh, cell, coeffs, &(x + e), mu, c) - chi_at(mesh, cell, coeffs, &(x - e), mu, c)) / (2.0 * h);
    }
    let mut out = Matrix3::zeros();
    for i in 0..3 {
        // d[m][(i, l)] = d chi_il / d x_m
        out[(i, 0)] = d[1][(i, 2)] - d[2][(i, 1)];
        out[(i, 1)] = d[2][(i, 0)] - d[0][(i, 2)];
        out[(i, 2)] = d[0][(i, 1)] - d[1][(i, 0)];
    }
    out
}

/// The five estimator contributions per cell, computed directly from their
/// defining integrals with high-order quadrature.
pub fn estimator_terms(mesh: &Mesh, rho: &[f64], u: &[f64], mu: f64, c: f64) -> Vec<[f64; 5]> {
    let n = mesh.dim();
    let cells = raw_cells(mesh);
    let crule = simplex_rule(n, 8);
    let frule = simplex_rule(n - 1, 8);

    // vertex averages
    let mut acc: BTreeMap<usize, (Vector3<f64>, f64)> = BTreeMap::new();
    for (t, cell) in cells.iter().enumerate() {
        let vol = simplex_measure(&cell.points);
        for &v in &cell.vertices {
            let e = acc.entry(v).or_insert((Vector3::zeros(), 0.0));
            for i in 0..n {
                e.0[i] += vol * u[t * n + i];
            }
            e.1 += vol;
        }
    }

    // facets by sorted vertex set
    let mut facets: BTreeMap<Vec<usize>, Vec<usize>> = BTreeMap::new();
    for (t, cell) in cells.iter().enumerate() {
        for j in 0..=n {
            let mut key: Vec<usize> = (0..=n).filter(|&k| k != j).map(|k| cell.vertices[k]).collect();
            key.sort_unstable();
            facets.entry(key).or_default().push(t);
        }
    }

    let mut out = vec![[0.0; 5]; cells.len()];
    for (t, cell) in cells.iter().enumerate() {
        let vol = simplex_measure(&cell.points);
        let h2 = diameter(&cell.points).powi(2);
        let mut uval = Vector3::zeros();
        for i in 0..n {
            uval[i] = u[t * n + i];
        }
        let nodal: Vec<Vector3<f64>> = cell.vertices.iter().map(|v| acc[v].0 / acc[v].1).collect();
        let (mut a, mut b, mut d) = (0.0, 0.0, 0.0);
        for (bary, w) in &crule {
            let x = combine(&cell.points, bary);
            let th: Vector3<f64> = nodal.iter().zip(bary).map(|(p, l)| p * *l).sum();
            a += w * (th - uval).norm_squared();
            b += w * chi_at(mesh, cell, rho, &x, mu, c).norm_squared();
            d += w * curl_at(mesh, cell, rho, &x, mu, c).norm_squared();
        }
        out[t][0] = a * vol;
        out[t][1] = h2 * b * vol;
        out[t][2] = h2 * d * vol;
    }

    for (key, owners) in &facets {
        let pts: Vec<Point> = key.iter().map(|&v| *mesh.vertex(v)).collect();
        let meas = simplex_measure(&pts);
        let he = diameter(&pts);
        let normal = if n == 2 {
            let t = pts[1] - pts[0];
            Vector3::new(t.y, -t.x, 0.0).normalize()
        } else {
            (pts[1] - pts[0]).cross(&(pts[2] - pts[0])).normalize()
        };
        let mut s = 0.0;
        for (bary, w) in &frule {
            let x = combine(&pts, bary);
            let mut jump = chi_at(mesh, &cells[owners[0]], rho, &x, mu, c);
            if owners.len() == 2 {
                jump -= chi_at(mesh, &cells[owners[1]], rho, &x, mu, c);
            }
            for i in 0..n {
                let r: Vector3<f64> = jump.row(i).transpose();
                s += w * r.cross(&normal).norm_squared();
            }
        }
        let val = he * meas * s;
        if owners.len() == 2 {
            out[owners[0]][3] += val;
            out[owners[1]][3] += val;
        } else {
            out[owners[0]][4] += val;
        }
    }
    out
}

/// Deterministic "hand-set" coefficients.
pub fn hand_set(len: usize, salt: f64) -> Vec<f64> {
    (0..len).map(|k| ((k as f64 + 1.0) * 0.7 + salt).sin() * (1.0 + 0.3 * k as f64)).collect()
}

pub fn single_triangle() -> Mesh {
    let coords = vec![Point::new(0.1, -0.2, 0.0), Point::new(1.3, 0.1, 0.0), Point::new(0.4, 0.9, 0.0)];
    Mesh::from_cells(2, coords, vec![0, 1, 2], vec![2], vec![0]).unwrap()
}

pub fn two_triangles() -> Mesh {
    let coords = vec![
        Point::new(0.0, 0.0, 0.0),
        Point::new(1.0, 0.1, 0.0),
        Point::new(0.2, 1.0, 0.0),
        Point::new(1.1, 1.2, 0.0),
    ];
    Mesh::from_cells(2, coords, vec![0, 1, 2, 1, 3, 2], vec![2, 2], vec![0, 0]).unwrap()
}

pub fn single_tetrahedron() -> Mesh {
    let coords = vec![
        Point::new(0.0, 0.0, 0.0),
        Point::new(1.0, 0.2, 0.1),
        Point::new(0.1, 0.9, -0.1),
        Point::new(0.2, 0.3, 1.1),
    ];
    Mesh::from_cells(3, coords, vec![0, 1, 2, 3], vec![3], vec![0]).unwrap()
}

pub fn two_tetrahedra() -> Mesh {
    let coords = vec![
        Point::new(0.0, 0.0, 0.0),
        Point::new(1.0, 0.2, 0.1),
        Point::new(0.1, 0.9, -0.1),
        Point::new(0.2, 0.3, 1.1),
        Point::new(1.0, 1.0, 0.8),
    ];
    Mesh::from_cells(3, coords, vec![0, 1, 2, 3, 4, 1, 2, 3], vec![3, 3], vec![0, 0]).unwrap()
}

/// Largest deviation between the optimized estimator and the oracle over all
/// cells and terms, relative to `max(1, |oracle|)`.
pub fn estimator_oracle_deviation(mesh: &Mesh, nu: f64, limit_form: bool) -> f64 {
    use elastic_afem::assembly::{MaterialParams, Variant};
    use elastic_afem::estimator::estimate;
    use elastic_afem::postprocess::PatchAverage;

    let mat = MaterialParams::new(1.0, nu).unwrap();
    let variant = if limit_form { Variant::Limit } else { Variant::Standard };
    let c = mat.compliance(mesh.dim(), variant).c_trace;
    let rho = hand_set(mesh.dim() * mesh.num_facets(), nu);
    let u = hand_set(mesh.dim() * mesh.num_cells(), 2.0 * nu);
    let fast = estimate(mesh, &rho, &u, &mat, variant, &PatchAverage::new(mesh)).unwrap();
    let slow = estimator_terms(mesh, &rho, &u, mat.mu, c);
    let mut worst = 0.0f64;
    for (a, b) in fast.terms.iter().zip(&slow) {
        for k in 0..5 {
            worst = worst.max((a[k] - b[k]).abs() / b[k].abs().max(1.0));
        }
    }
    worst
}
