//! Residual a posteriori indicators for one computed eigenpair.
//!
//! With `chi = (1/mu)(rho_h - c tr(rho_h) I)`,
//!
//! ```text
//! eta_T^2 = ||Theta u_h - u_h||_T^2 + h_T^2 ||grad u_h - chi||_T^2 + h_T^2 ||curl chi||_T^2
//!         + sum_{interior e of T} h_e ||[chi x n]||_e^2 + sum_{boundary e of T} h_e ||chi x n||_e^2
//! ```
//!
//! Rows of `chi` are crossed with the facet normal; in 2D this is the
//! tangential component `chi t`. Each interior facet contributes to both of
//! its cells.

use nalgebra::Vector3;

use crate::assembly::{MaterialParams, Variant};
use crate::error::{Error, Result};
use crate::mesh::Mesh;
use crate::postprocess::{theta_gap_per_cell, PatchAverage};
use crate::quadrature::{cell_rule, facet_rule};
use crate::spaces::{Compliance, RtTensorSpace, Tensor};

/// Index of each contribution inside [`EstimatorField::terms`].
pub const TERM_NAMES: [&str; 5] = ["postprocess", "gradient", "curl", "jump", "boundary"];

#[derive(Clone, Debug)]
pub struct EstimatorField {
    /// `eta_T^2`.
    pub per_cell: Vec<f64>,
    pub terms: Vec<[f64; 5]>,
    pub global_sq: f64,
    pub variant: Variant,
}

impl EstimatorField {
    pub fn global(&self) -> f64 {
        self.global_sq.sqrt()
    }

    /// `eta_T` per cell.
    pub fn indicators(&self) -> Vec<f64> {
        self.per_cell.iter().map(|v| v.sqrt()).collect()
    }

    /// Global value of each term.
    pub fn term_totals(&self) -> [f64; 5] {
        let mut s = [0.0; 5];
        for t in &self.terms {
            for k in 0..5 {
                s[k] += t[k];
            }
        }
        s
    }
}

fn row_cross(chi: &Tensor, n: &Vector3<f64>, dim: usize) -> [Vector3<f64>; 3] {
    let mut out = [Vector3::zeros(); 3];
    for (i, o) in out.iter_mut().enumerate().take(dim) {
        *o = chi.row(i).transpose().cross(n);
    }
    out
}

fn sq_sum(rows: &[Vector3<f64>; 3]) -> f64 {
    rows.iter().map(|r| r.norm_squared()).sum()
}

/// Indicators for the pair `(rho, u)` with the compliance of `variant`.
pub fn estimate(
    mesh: &Mesh,
    rho: &[f64],
    u: &[f64],
    mat: &MaterialParams,
    variant: Variant,
    average: &PatchAverage,
) -> Result<EstimatorField> {
    let dim = mesh.dim();
    let rt = RtTensorSpace::new(mesh);
    if rho.len() != rt.num_dofs() || u.len() != dim * mesh.num_cells() {
        return Err(Error::InvalidArgument(format!(
            "eigenpair sizes ({}, {}) do not match the mesh ({}, {})",
            rho.len(),
            u.len(),
            rt.num_dofs(),
            dim * mesh.num_cells()
        )));
    }
    if average.weights().nrows() != mesh.num_vertices() || average.weights().ncols() != mesh.num_cells() {
        return Err(Error::InvalidArgument("averaging operator belongs to another mesh".into()));
    }
    if variant == Variant::Standard && mat.limit {
        return Err(Error::InvalidArgument("the standard estimator needs a finite lambda".into()));
    }
    Ok(estimate_with_compliance(mesh, rho, u, &mat.compliance(dim, variant), variant, average))
}

/// Indicators for an explicit compliance map; inputs are assumed consistent.
pub(crate) fn estimate_with_compliance(
    mesh: &Mesh,
    rho: &[f64],
    u: &[f64],
    compliance: &Compliance,
    variant: Variant,
    average: &PatchAverage,
) -> EstimatorField {
    let dim = mesh.dim();
    let rt = RtTensorSpace::new(mesh);
    let theta_u = average.apply(u);
    let gap = theta_gap_per_cell(mesh, &theta_u, u);

    let mut terms = vec![[0.0; 5]; mesh.num_cells()];
    let crule = cell_rule(dim);
    for t in 0..mesh.num_cells() {
        let vol = mesh.cell_volume(t);
        let h2 = mesh.cell_diameter(t).powi(2);
        let mut grad_term = 0.0;
        let mut curl_sq = 0.0;
        for (bary, w) in crule.iter() {
            let x = mesh.map_to_cell(t, bary);
            let ev = rt.eval_unchecked(rho, t, &x, compliance);
            // u_h is cellwise constant, so its gradient vanishes
            let grad_u = Tensor::zeros();
            grad_term += w * (grad_u - ev.value).norm_squared();
            curl_sq += w * ev.curl.norm_squared();
        }
        terms[t][0] = gap[t];
        terms[t][1] = h2 * vol * grad_term;
        terms[t][2] = h2 * vol * curl_sq;
    }

    add_facet_terms(mesh, &rt, rho, compliance, &mut terms);
    assemble_field(terms, variant)
}

fn add_facet_terms(mesh: &Mesh, rt: &RtTensorSpace, rho: &[f64], compliance: &Compliance, terms: &mut [[f64; 5]]) {
    let dim = mesh.dim();
    let frule = facet_rule(dim);
    for f in 0..mesh.num_facets() {
        let n = mesh.normal(f);
        let he = mesh.facet_diameter(f);
        let meas = mesh.facet_measure(f);
        let [t0, t1] = mesh.facet_cells(f);
        let mut s = 0.0;
        for (bary, w) in frule.iter() {
            let x = mesh.map_to_facet(f, bary);
            let chi0 = rt.eval_unchecked(rho, t0, &x, compliance).value;
            let jump = if mesh.is_boundary_facet(f) {
                chi0
            } else {
                chi0 - rt.eval_unchecked(rho, t1, &x, compliance).value
            };
            s += w * sq_sum(&row_cross(&jump, n, dim));
        }
        let contribution = he * meas * s;
        if mesh.is_boundary_facet(f) {
            terms[t0][4] += contribution;
        } else {
            terms[t0][3] += contribution;
            terms[t1][3] += contribution;
        }
    }
}

fn assemble_field(terms: Vec<[f64; 5]>, variant: Variant) -> EstimatorField {
    let per_cell: Vec<f64> = terms.iter().map(|t| t.iter().sum()).collect();
    let global_sq = per_cell.iter().sum();
    EstimatorField { per_cell, terms, global_sq, variant }
}

/// `err / eta^2`.
pub fn effectivity(err_omega: f64, field: &EstimatorField) -> Result<f64> {
    if field.global_sq <= 0.0 {
        return Err(Error::ZeroEstimator);
    }
    Ok(err_omega / field.global_sq)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assembly::{AForm, SaddleSystem};
    use crate::eigensolver::{solve_eigs, EigenOptions};
    use crate::mesh::{preset_mesh, uniform_refine};
    use crate::spaces::identity;

    fn solved(nu: f64) -> (Mesh, Vec<f64>, Vec<f64>, MaterialParams) {
        let m = uniform_refine(&uniform_refine(&preset_mesh("lshape2d", 2).unwrap()).unwrap()).unwrap();
        let mat = MaterialParams::new(1.0, nu).unwrap();
        let form = if mat.limit { AForm::Limit } else { AForm::Deviatoric };
        let sys = SaddleSystem::assemble(&m, &mat, form).unwrap();
        let sol = solve_eigs(&sys, &EigenOptions::with_num_eigs(1)).unwrap();
        (m, sol.rho_coeffs[0].clone(), sol.u_coeffs[0].clone(), mat)
    }

    #[test]
    fn zero_input_gives_zero() {
        let m = preset_mesh("lshape2d", 2).unwrap();
        let mat = MaterialParams::new(1.0, 0.35).unwrap();
        let rt = RtTensorSpace::new(&m);
        let f = estimate(&m, &vec![0.0; rt.num_dofs()], &vec![0.0; 12], &mat, Variant::Standard, &PatchAverage::new(&m))
            .unwrap();
        assert_eq!(f.global_sq, 0.0);
        assert!(matches!(effectivity(1.0, &f), Err(Error::ZeroEstimator)));
    }

    #[test]
    fn homogeneous_of_degree_one() {
        let (m, rho, u, mat) = solved(0.35);
        let avg = PatchAverage::new(&m);
        let a = estimate(&m, &rho, &u, &mat, Variant::Standard, &avg).unwrap();
        let s = -3.0;
        let rho_s: Vec<f64> = rho.iter().map(|v| v * s).collect();
        let u_s: Vec<f64> = u.iter().map(|v| v * s).collect();
        let b = estimate(&m, &rho_s, &u_s, &mat, Variant::Standard, &avg).unwrap();
        assert!((b.global() - 3.0 * a.global()).abs() < 1e-12 * b.global());
    }

    #[test]
    fn consistency_of_breakdown() {
        let (m, rho, u, mat) = solved(0.35);
        let f = estimate(&m, &rho, &u, &mat, Variant::Standard, &PatchAverage::new(&m)).unwrap();
        let sum: f64 = f.per_cell.iter().sum();
        assert!((sum - f.global_sq).abs() <= 1e-12 * f.global_sq);
        for (t, p) in f.terms.iter().zip(&f.per_cell) {
            assert!(t.iter().all(|&v| v >= 0.0));
            assert!((t.iter().sum::<f64>() - p).abs() <= 1e-14 * p.max(1e-300));
        }
        assert_eq!(effectivity(f.global_sq, &f).unwrap(), 1.0);
        assert_eq!(effectivity(0.0, &f).unwrap(), 0.0);
    }

    #[test]
    fn standard_and_limit_agree_near_incompressibility() {
        let (m, rho, u, mat) = solved(0.499_999);
        let avg = PatchAverage::new(&m);
        let a = estimate(&m, &rho, &u, &mat, Variant::Standard, &avg).unwrap();
        let b = estimate(&m, &rho, &u, &mat, Variant::Limit, &avg).unwrap();
        assert!((a.global() - b.global()).abs() <= 1e-3 * a.global());
    }

    #[test]
    fn identity_tensor_has_only_tangential_terms() {
        // chi = (1/mu)(1 - c n) I: no curl, no interior jumps
        let m = preset_mesh("lshape2d", 2).unwrap();
        let mat = MaterialParams::new(1.0, 0.35).unwrap();
        let rt = RtTensorSpace::new(&m);
        let rho = rt.interpolate(|_| identity(2));
        let u = vec![0.0; 12];
        let f = estimate(&m, &rho, &u, &mat, Variant::Standard, &PatchAverage::new(&m)).unwrap();
        let tot = f.term_totals();
        assert_eq!(tot[0], 0.0);
        assert!(tot[2] < 1e-28);
        assert!(tot[3] < 1e-28);
        let s = (1.0 - 2.0 * mat.c_trace(2)) / mat.mu;
        // sum over boundary edges of h_e |e| s^2 (|t|^2 summed over two rows = 1)
        let expected: f64 = (0..m.num_facets())
            .filter(|&e| m.is_boundary_facet(e))
            .map(|e| m.facet_diameter(e) * m.facet_measure(e) * s * s)
            .sum();
        assert!((tot[4] - expected).abs() < 1e-12 * expected);
    }

    #[test]
    fn size_mismatch_is_rejected() {
        let m = preset_mesh("unit_square", 2).unwrap();
        let mat = MaterialParams::new(1.0, 0.35).unwrap();
        let avg = PatchAverage::new(&m);
        assert!(estimate(&m, &[0.0; 3], &[0.0; 4], &mat, Variant::Standard, &avg).is_err());
        let lim = MaterialParams::new(1.0, 0.5).unwrap();
        assert!(estimate(&m, &[0.0; 10], &[0.0; 4], &lim, Variant::Standard, &avg).is_err());
    }
}
