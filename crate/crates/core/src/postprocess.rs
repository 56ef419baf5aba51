//! Patch averaging of cellwise-constant displacements onto continuous
//! piecewise-linear fields: `Theta u (z) = sum_{T in w_z} int_T u / |w_z|`.

use nalgebra::Vector3;

use crate::mesh::{Mesh, Point};
use crate::quadrature::{cell_rule, collapsed_rule};
use crate::sparse::CsrMatrix;
use crate::spaces::{P0VectorSpace, P1VectorSpace};

/// The vertex-by-cell weight matrix `W[z, T] = |T| / |w_z|`.
#[derive(Clone, Debug)]
pub struct PatchAverage {
    dim: usize,
    weights: CsrMatrix,
}

/// A continuous piecewise-linear vector field obtained by averaging.
#[derive(Clone, Debug, PartialEq)]
pub struct PostprocessedField {
    pub p1_coeffs: Vec<f64>,
}

impl PatchAverage {
    pub fn new(mesh: &Mesh) -> Self {
        let mut t = Vec::new();
        for z in 0..mesh.num_vertices() {
            let total = mesh.patch_measure(z);
            for &c in mesh.vertex_patch(z) {
                t.push((z, c, mesh.cell_volume(c) / total));
            }
        }
        PatchAverage {
            dim: mesh.dim(),
            weights: CsrMatrix::from_triplets(mesh.num_vertices(), mesh.num_cells(), &t),
        }
    }

    pub fn weights(&self) -> &CsrMatrix {
        &self.weights
    }

    /// Applies the averaging componentwise to P0 coefficients.
    pub fn apply(&self, u: &[f64]) -> PostprocessedField {
        let n = self.dim;
        let nv = self.weights.nrows();
        assert_eq!(u.len(), n * self.weights.ncols());
        let mut out = vec![0.0; n * nv];
        for z in 0..nv {
            for (t, w) in self.weights.row(z) {
                for i in 0..n {
                    out[z * n + i] += w * u[t * n + i];
                }
            }
        }
        PostprocessedField { p1_coeffs: out }
    }
}

/// `Theta_h` applied to a P0 field.
pub fn theta(mesh: &Mesh, u: &[f64]) -> PostprocessedField {
    PatchAverage::new(mesh).apply(u)
}

/// `|| Theta_h u - u ||_{0,T}^2` per cell.
pub fn theta_gap_per_cell(mesh: &Mesh, theta_u: &PostprocessedField, u: &[f64]) -> Vec<f64> {
    let p1 = P1VectorSpace::new(mesh);
    let p0 = P0VectorSpace::new(mesh);
    let rule = cell_rule(mesh.dim());
    (0..mesh.num_cells())
        .map(|t| {
            let ut = p0.value(u, t);
            let vol = mesh.cell_volume(t);
            rule.iter()
                .map(|(bary, w)| w * (p1.value_bary(&theta_u.p1_coeffs, t, bary) - ut).norm_squared())
                .sum::<f64>()
                * vol
        })
        .collect()
}

/// `|| Theta_h u - u ||_{0,Omega}`.
pub fn superconvergence_probe(mesh: &Mesh, u: &[f64]) -> f64 {
    let th = theta(mesh, u);
    theta_gap_per_cell(mesh, &th, u).iter().sum::<f64>().sqrt()
}

/// `|| Theta_h(P_h v) - Theta_h v ||_{0,Omega}`, where `P_h v` uses a
/// degree-7 cell rule and `Theta_h v` uses cell integrals of `v` from a much
/// finer rule standing in for exact integration.
pub fn theta_projection_identity(mesh: &Mesh, v: impl Fn(&Point) -> Vector3<f64>) -> f64 {
    let avg = PatchAverage::new(mesh);
    let p0 = P0VectorSpace::new(mesh);
    let projected = avg.apply(&p0.project_with(&v, &collapsed_rule(mesh.dim(), 4)));
    let direct = avg.apply(&p0.project_with(&v, &collapsed_rule(mesh.dim(), 12)));
    let diff: Vec<f64> = projected.p1_coeffs.iter().zip(&direct.p1_coeffs).map(|(a, b)| a - b).collect();
    P1VectorSpace::new(mesh).l2_norm(&diff)
}
