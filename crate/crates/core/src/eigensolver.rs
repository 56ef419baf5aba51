//! Smallest eigenpairs of the mixed saddle pencil `K x = kappa Mm x`.
//!
//! `K = [[A, B^T, c], [B, 0, 0], [c^T, 0, 0]]` and `Mm` is `-M` on the
//! displacement block, zero elsewhere. The operator
//! `T u = (K^{-1} Mm [0; u; 0])_u` is self-adjoint in the `M` inner product
//! on the displacement space and has eigenvalues `1 / kappa`. A Krylov-Schur
//! (thick restart Lanczos) iteration with full reorthogonalization extracts
//! the largest of them.
//!
//! `T` is applied without factoring the indefinite `K`. The augmented block
//! `A + gamma B^T M^{-1} B` is symmetric positive definite with the sparsity
//! of `A`, so it gets a sparse Cholesky factor. The displacement then solves
//! the augmented Schur complement system by conjugate gradients, which
//! converge in a handful of steps because that complement is a small
//! perturbation of `M / gamma`. In the limit case one stress dof is pinned
//! and the trace constraint is restored by a final projection.

use faer::linalg::solvers::Solve;
use faer::sparse::linalg::solvers::Llt;
use faer::{Mat, Side};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::assembly::SaddleSystem;
use crate::error::{Error, Result};
use crate::sparse::CsrMatrix;

#[derive(Clone, Debug, PartialEq)]
pub struct EigenOptions {
    pub num_eigs: usize,
    /// Krylov subspace size; `None` means `4 m + 10`.
    pub krylov_dim: Option<usize>,
    pub tol: f64,
    pub max_restarts: usize,
    pub seed: u64,
}

impl Default for EigenOptions {
    fn default() -> Self {
        EigenOptions { num_eigs: 3, krylov_dim: None, tol: 1e-10, max_restarts: 50, seed: 42 }
    }
}

impl EigenOptions {
    pub fn with_num_eigs(num_eigs: usize) -> Self {
        EigenOptions { num_eigs, ..Self::default() }
    }
}

/// Eigenpairs in ascending order of `kappa`.
#[derive(Clone, Debug)]
pub struct MixedSolution {
    pub kappas: Vec<f64>,
    pub omegas: Vec<f64>,
    pub rho_coeffs: Vec<Vec<f64>>,
    /// Normalized to `||u||_M = 1` with the largest-magnitude entry positive.
    pub u_coeffs: Vec<Vec<f64>>,
    pub multipliers: Vec<f64>,
    /// `||K x - kappa Mm x|| / (kappa ||Mm x||)`.
    pub residuals: Vec<f64>,
    pub restarts: usize,
}

impl MixedSolution {
    pub fn len(&self) -> usize {
        self.kappas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.kappas.is_empty()
    }
}

/// `min_{i != j} |kappa_i - kappa_j|`.
pub fn spectral_gap(sol: &MixedSolution, j: usize) -> Result<f64> {
    if sol.len() < 2 {
        return Err(Error::InvalidArgument("a spectral gap needs at least two eigenvalues".into()));
    }
    if j >= sol.len() {
        return Err(Error::InvalidArgument(format!("eigenvalue index {j} out of range")));
    }
    Ok(sol
        .kappas
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != j)
        .map(|(_, k)| (k - sol.kappas[j]).abs())
        .fold(f64::INFINITY, f64::min))
}

struct ShiftInvert<'s> {
    sys: &'s SaddleSystem,
    /// Full bordered matrix, used for residuals only.
    k: CsrMatrix,
    /// `B` with the pinned column removed.
    b: CsrMatrix,
    bt: CsrMatrix,
    llt: Llt<usize, f64>,
    gamma: f64,
    /// Pinned pseudostress dof when `A` has the identity in its kernel.
    pinned: Option<usize>,
}

impl<'s> ShiftInvert<'s> {
    /// Prepares the augmented Lagrangian solver for `[[A, B^T], [B, 0]]`.
    ///
    /// Testing the first block row of the bordered system with the identity
    /// shows that the trace multiplier always vanishes, so the dense
    /// constraint row can be dropped. For `A` definite the trace constraint
    /// then holds automatically; in the limit the identity spans the kernel
    /// of the block matrix, so one dof is pinned and the identity component is
    /// projected out afterwards.
    ///
    /// With `A_g = A + g B^T M^{-1} B` (symmetric positive definite, same
    /// pattern as `A`) and `S_g = B A_g^{-1} B^T`, the displacement part of
    /// the solution is `S_g^{-1} M u - g u`. Because
    /// `S_g^{-1} = S^{-1} + g M^{-1}`, the pencil `(S_g, M)` has eigenvalues
    /// `kappa / (1 + g kappa)`; choosing `g kappa_1` of order ten makes
    /// conjugate gradients on `S_g` converge in a handful of steps.
    fn new(sys: &'s SaddleSystem) -> Result<Self> {
        let k = sys.saddle_matrix();
        let pinned = sys.trace_kernel.then(|| {
            let mut best = 0;
            for (j, v) in sys.identity.iter().enumerate() {
                if v.abs() > sys.identity[best].abs() {
                    best = j;
                }
            }
            best
        });
        let b = match pinned {
            None => sys.b.clone(),
            Some(p) => {
                let t: Vec<_> = sys.b.triplets().filter(|&(_, c, _)| c != p).collect();
                CsrMatrix::from_triplets(sys.b.nrows(), sys.b.ncols(), &t)
            }
        };
        let gamma = 0.1 / sys.kappa_scale;
        let mut t: Vec<_> = sys.a.triplets().filter(|&(r, c, _)| Some(r) != pinned && Some(c) != pinned).collect();
        for (r, &m) in sys.mass.iter().enumerate() {
            let row: Vec<_> = b.row(r).collect();
            for &(i, bi) in &row {
                for &(j, bj) in &row {
                    if j <= i {
                        t.push((i, j, gamma * bi * bj / m));
                    }
                }
            }
        }
        if let Some(p) = pinned {
            t.push((p, p, 1.0));
        }
        let nr = sys.num_rho();
        let lower: Vec<_> = t.into_iter().filter(|&(r, c, _)| c <= r).collect();
        let llt = CsrMatrix::from_triplets(nr, nr, &lower)
            .to_faer()?
            .sp_cholesky(Side::Lower)
            .map_err(|e| Error::SingularSystem(format!("sparse Cholesky failed: {e}")))?;
        let bt = b.transpose();
        Ok(ShiftInvert { sys, k, b, bt, llt, gamma, pinned })
    }

    /// `A_g^{-1} B^T v`.
    fn lift(&self, v: &[f64]) -> Vec<f64> {
        let rhs = self.bt.mul_vec(v);
        let mut x = Mat::<f64>::from_fn(rhs.len(), 1, |i, _| rhs[i]);
        self.llt.solve_in_place(&mut x);
        (0..rhs.len()).map(|i| x[(i, 0)]).collect()
    }

    /// Solves `K y = [0; -M u; 0]`.
    fn solve(&self, u: &[f64]) -> Vec<f64> {
        let mass = &self.sys.mass;
        let g = self.gamma;
        // preconditioned CG for S_g z = M u with preconditioner M / g
        let b: Vec<f64> = u.iter().zip(mass).map(|(a, m)| a * m).collect();
        let mut z: Vec<f64> = u.iter().map(|a| g * a).collect();
        let mut lifted = self.lift(&z);
        let mut r: Vec<f64> = b.iter().zip(self.b.mul_vec(&lifted)).map(|(bi, si)| bi - si).collect();
        let precond = |r: &[f64]| -> Vec<f64> { r.iter().zip(mass).map(|(ri, m)| g * ri / m).collect() };
        let bnorm = dot(&b, &precond(&b)).sqrt();
        let mut w = precond(&r);
        let mut rw = dot(&r, &w);
        let mut p = w.clone();
        for _ in 0..200 {
            if rw.sqrt() <= 1e-14 * bnorm {
                break;
            }
            let q = self.lift(&p);
            let sp = self.b.mul_vec(&q);
            let alpha = rw / dot(&p, &sp);
            z.iter_mut().zip(&p).for_each(|(zi, pi)| *zi += alpha * pi);
            lifted.iter_mut().zip(&q).for_each(|(li, qi)| *li += alpha * qi);
            r.iter_mut().zip(&sp).for_each(|(ri, si)| *ri -= alpha * si);
            w = precond(&r);
            let rw_new = dot(&r, &w);
            let beta = rw_new / rw;
            rw = rw_new;
            p.iter_mut().zip(&w).for_each(|(pi, wi)| *pi = wi + beta * *pi);
        }
        let nr = self.sys.num_rho();
        let mut y: Vec<f64> = lifted.iter().map(|v| -v).collect();
        if let Some(p) = self.pinned {
            y[p] = 0.0;
            let id = &self.sys.identity;
            let s = dot(&self.sys.c, &y[..nr]) / dot(&self.sys.c, id);
            y.iter_mut().zip(id).for_each(|(yi, ii)| *yi -= s * ii);
        }
        y.extend(z.iter().zip(u).map(|(zi, ui)| zi - g * ui));
        // trace multiplier
        y.push(0.0);
        y
    }

    fn apply(&self, u: &[f64]) -> Vec<f64> {
        let nr = self.sys.num_rho();
        let y = self.solve(u);
        y[nr..nr + u.len()].to_vec()
    }

    /// Guards against a numerically singular factorization.
    fn check(&self, u: &[f64]) -> Result<()> {
        let nr = self.sys.num_rho();
        let y = self.solve(u);
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::SingularSystem("non-finite solution of the saddle system".into()));
        }
        let mut r = self.k.mul_vec(&y);
        for (i, (&ui, &mi)) in u.iter().zip(&self.sys.mass).enumerate() {
            r[nr + i] += mi * ui;
        }
        let rn = norm2(&r);
        let bn: f64 = u.iter().zip(&self.sys.mass).map(|(a, m)| (a * m).powi(2)).sum::<f64>().sqrt();
        if rn > 1e-6 * bn {
            return Err(Error::SingularSystem(format!("saddle solve residual {rn:e} vs rhs {bn:e}")));
        }
        Ok(())
    }
}

fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

fn norm2(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn m_dot(m: &[f64], x: &[f64], y: &[f64]) -> f64 {
    m.iter().zip(x).zip(y).map(|((m, a), b)| m * a * b).sum()
}

/// `w -= sum_i <w, v_i>_M v_i` twice; returns the accumulated coefficients.
fn orthogonalize(m: &[f64], basis: &[Vec<f64>], w: &mut [f64]) -> Vec<f64> {
    let mut coeffs = vec![0.0; basis.len()];
    for _ in 0..2 {
        for (c, v) in coeffs.iter_mut().zip(basis) {
            let h = m_dot(m, v, w);
            *c += h;
            w.iter_mut().zip(v).for_each(|(wi, vi)| *wi -= h * vi);
        }
    }
    coeffs
}

fn random_vector(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

/// Computes the `opts.num_eigs` smallest eigenvalues of the pencil.
pub fn solve_eigs(sys: &SaddleSystem, opts: &EigenOptions) -> Result<MixedSolution> {
    let m = opts.num_eigs;
    if m == 0 {
        return Err(Error::InvalidArgument("at least one eigenpair must be requested".into()));
    }
    let nu = sys.num_u();
    if m > nu {
        return Err(Error::TooFewEigenvalues { found: nu, requested: m });
    }
    let mass = &sys.mass;
    let op = ShiftInvert::new(sys)?;

    let kdim = opts.krylov_dim.unwrap_or(4 * m + 10).max(m + 2).min(nu);
    let keep = (m + (kdim - m) / 2).min(kdim.saturating_sub(1)).max(m.min(kdim));
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);

    let mut v0 = random_vector(&mut rng, nu);
    let s = m_dot(mass, &v0, &v0).sqrt();
    v0.iter_mut().for_each(|x| *x /= s);
    op.check(&v0)?;

    let mut basis: Vec<Vec<f64>> = vec![v0];
    let mut h = DMatrix::<f64>::zeros(kdim, kdim);
    let mut start = 0;
    let mut restarts = 0;
    let (theta, ritz) = loop {
        // expand to kdim vectors; `basis[kdim]` (if present) is the residual direction
        let mut last_beta = 0.0;
        let mut exhausted = false;
        let mut j = start;
        while j < kdim {
            let mut w = op.apply(&basis[j]);
            let coeffs = orthogonalize(mass, &basis, &mut w);
            for (i, c) in coeffs.iter().enumerate().take(kdim) {
                h[(i, j)] = *c;
            }
            let beta = m_dot(mass, &w, &w).sqrt();
            let scale = h[(j, j)].abs().max(1e-300);
            if beta <= 1e-12 * scale {
                // invariant subspace: continue with a fresh direction if there is room
                if j + 1 == kdim {
                    last_beta = 0.0;
                    j += 1;
                    break;
                }
                let mut fresh = random_vector(&mut rng, nu);
                orthogonalize(mass, &basis, &mut fresh);
                let fnorm = m_dot(mass, &fresh, &fresh).sqrt();
                if fnorm <= 1e-10 {
                    exhausted = true;
                    j += 1;
                    break;
                }
                fresh.iter_mut().for_each(|x| *x /= fnorm);
                basis.push(fresh);
            } else {
                w.iter_mut().for_each(|x| *x /= beta);
                if j + 1 < kdim {
                    h[(j + 1, j)] = beta;
                }
                last_beta = beta;
                basis.push(w);
            }
            j += 1;
        }
        let k_eff = j.min(kdim);
        let hk = h.view((0, 0), (k_eff, k_eff)).into_owned();
        let hs = (&hk + hk.transpose()) * 0.5;
        let eig = hs.symmetric_eigen();
        let mut order: Vec<usize> = (0..k_eff).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
        let theta: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
        let y: Vec<Vec<f64>> =
            order.iter().map(|&i| eig.eigenvectors.column(i).iter().copied().collect()).collect();

        let done_all = exhausted || k_eff < kdim || k_eff == nu;
        let converged = (0..m.min(k_eff)).all(|i| (last_beta * y[i][k_eff - 1]).abs() <= opts.tol * theta[i].abs());
        if converged || done_all {
            if k_eff < m {
                return Err(Error::TooFewEigenvalues { found: k_eff, requested: m });
            }
            let ritz: Vec<Vec<f64>> = (0..m)
                .map(|i| {
                    let mut x = vec![0.0; nu];
                    for (c, v) in y[i].iter().zip(&basis) {
                        x.iter_mut().zip(v).for_each(|(xi, vi)| *xi += c * vi);
                    }
                    x
                })
                .collect();
            break (theta[..m].to_vec(), ritz);
        }
        if restarts >= opts.max_restarts {
            let residual = (0..m).map(|i| (last_beta * y[i][k_eff - 1]).abs() / theta[i].abs()).fold(0.0, f64::max);
            return Err(Error::NoConvergence { restarts, residual });
        }
        restarts += 1;

        // thick restart: keep the leading Ritz vectors and the residual direction
        let residual_dir = basis.pop().expect("residual direction");
        let mut kept = Vec::with_capacity(keep + 1);
        for yi in y.iter().take(keep) {
            let mut x = vec![0.0; nu];
            for (c, v) in yi.iter().zip(&basis) {
                x.iter_mut().zip(v).for_each(|(xi, vi)| *xi += c * vi);
            }
            kept.push(x);
        }
        kept.push(residual_dir);
        basis = kept;
        h.fill(0.0);
        for i in 0..keep {
            h[(i, i)] = theta[i];
            let b = last_beta * y[i][kdim - 1];
            h[(keep, i)] = b;
            h[(i, keep)] = b;
        }
        start = keep;
    };

    finish(&op, theta, ritz, restarts)
}

fn finish(op: &ShiftInvert, theta: Vec<f64>, ritz: Vec<Vec<f64>>, restarts: usize) -> Result<MixedSolution> {
    let sys = op.sys;
    let nr = sys.num_rho();
    let nu = sys.num_u();
    let mut sol = MixedSolution {
        kappas: Vec::new(),
        omegas: Vec::new(),
        rho_coeffs: Vec::new(),
        u_coeffs: Vec::new(),
        multipliers: Vec::new(),
        residuals: Vec::new(),
        restarts,
    };
    for (t, u) in theta.into_iter().zip(ritz) {
        if !(t.is_finite() && t > 0.0) {
            return Err(Error::TooFewEigenvalues { found: sol.len(), requested: sol.len() + 1 });
        }
        let kappa = 1.0 / t;
        let mut x: Vec<f64> = op.solve(&u).into_iter().map(|v| v * kappa).collect();
        let norm = m_dot(&sys.mass, &x[nr..nr + nu], &x[nr..nr + nu]).sqrt();
        let peak = x[nr..nr + nu].iter().copied().fold(0.0f64, |a, v| if v.abs() > a.abs() { v } else { a });
        let scale = peak.signum() / norm;
        x.iter_mut().for_each(|v| *v *= scale);

        let mut r = op.k.mul_vec(&x);
        let mut mx = 0.0;
        for i in 0..nu {
            let mi = sys.mass[i] * x[nr + i];
            r[nr + i] += kappa * mi;
            mx += mi * mi;
        }
        sol.residuals.push(norm2(&r) / (kappa * mx.sqrt()));
        sol.kappas.push(kappa);
        sol.omegas.push(kappa.sqrt());
        sol.rho_coeffs.push(x[..nr].to_vec());
        sol.u_coeffs.push(x[nr..nr + nu].to_vec());
        sol.multipliers.push(x[nr + nu]);
    }
    Ok(sol)
}
