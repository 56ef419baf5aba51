//! Dense reference computations for small problems, used to cross-check the
//! sparse and optimized code paths.

use nalgebra::{DMatrix, DVector};

use crate::assembly::SaddleSystem;
use crate::error::{Error, Result};

/// All eigenvalues of the saddle pencil, ascending, from a dense inverse of
/// the block matrix.
///
/// With `G = -(K^{-1})_{uu} M`, the nonzero eigenvalues of `K^{-1} Mm` are
/// those of `G`; `M^{1/2} G M^{-1/2}` is symmetric, so a dense symmetric
/// eigensolver yields `1 / kappa`.
pub fn dense_pencil_eigenvalues(sys: &SaddleSystem) -> Result<Vec<f64>> {
    let nr = sys.num_rho();
    let nu = sys.num_u();
    let k = sys.saddle_matrix().to_dense();
    let kinv = k
        .lu()
        .try_inverse()
        .ok_or_else(|| Error::SingularSystem("dense saddle matrix is singular".into()))?;
    let sqrt_m = DVector::from_iterator(nu, sys.mass.iter().map(|m| m.sqrt()));
    let mut g = DMatrix::zeros(nu, nu);
    for i in 0..nu {
        for j in 0..nu {
            g[(i, j)] = -sqrt_m[i] * kinv[(nr + i, nr + j)] * sqrt_m[j];
        }
    }
    let g = (&g + g.transpose()) * 0.5;
    let mut kappas: Vec<f64> = g
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .filter(|&&t| t > 0.0)
        .map(|t| 1.0 / t)
        .collect();
    kappas.sort_by(f64::total_cmp);
    Ok(kappas)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assembly::{AForm, MaterialParams};
    use crate::mesh::preset_mesh;

    #[test]
    fn all_pencil_eigenvalues_are_positive() {
        let m = preset_mesh("lshape2d", 2).unwrap();
        let sys = SaddleSystem::assemble(&m, &MaterialParams::new(1.0, 0.35).unwrap(), AForm::Deviatoric).unwrap();
        let k = dense_pencil_eigenvalues(&sys).unwrap();
        assert_eq!(k.len(), sys.num_u());
    }

    #[test]
    fn reduced_problem_agrees() {
        // kappa also solves B A^{-1} B^T u = kappa M u restricted to int tr = 0;
        // with the constraint projected out this is a generalized symmetric problem
        let m = preset_mesh("unit_square", 2).unwrap();
        let sys = SaddleSystem::assemble(&m, &MaterialParams::new(1.0, 0.3).unwrap(), AForm::Deviatoric).unwrap();
        let a = sys.a.to_dense();
        let b = sys.b.to_dense();
        let c = DVector::from_vec(sys.c.clone());
        let ainv = a.try_inverse().unwrap();
        // Schur complement with the multiplier eliminated: P = A^{-1} - A^{-1} c c^T A^{-1} / (c^T A^{-1} c)
        let ac = &ainv * &c;
        let p = &ainv - &ac * ac.transpose() / c.dot(&ac);
        let s = &b * p * b.transpose();
        let mut expected: Vec<f64> = {
            let minv_sqrt = DMatrix::from_diagonal(&DVector::from_iterator(4, sys.mass.iter().map(|v| 1.0 / v.sqrt())));
            let sym = &minv_sqrt * s * &minv_sqrt;
            let sym = (&sym + sym.transpose()) * 0.5;
            sym.symmetric_eigen().eigenvalues.iter().copied().collect()
        };
        expected.sort_by(f64::total_cmp);
        let got = dense_pencil_eigenvalues(&sys).unwrap();
        for (g, e) in got.iter().zip(&expected) {
            assert!((g - e).abs() < 1e-10 * e);
        }
    }
}
