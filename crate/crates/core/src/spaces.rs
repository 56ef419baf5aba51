//! Discrete spaces: row-wise lowest-order Raviart-Thomas tensors, piecewise
//! constant vectors and continuous piecewise linear vectors.
//!
//! Tensors are `Matrix3` values whose unused row/column is zero in 2D. The
//! RT0 basis function attached to local facet `j` of cell `T` (the facet
//! opposite vertex `p_j`) is
//!
//! ```text
//! phi_j(x) = s_j / (n |T|) (x - p_j)
//! ```
//!
//! with `s_j = +1` when the global facet normal points out of `T`. Its flux
//! through the facet along the global normal is one, and zero through the
//! other facets of `T`.

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};
use crate::mesh::{Mesh, Point};
use crate::quadrature::{cell_rule, facet_rule, Rule};

pub type Tensor = Matrix3<f64>;

/// Identity on the first `dim` coordinates.
pub fn identity(dim: usize) -> Tensor {
    let mut m = Tensor::zeros();
    for i in 0..dim {
        m[(i, i)] = 1.0;
    }
    m
}

pub fn trace(t: &Tensor) -> f64 {
    t[(0, 0)] + t[(1, 1)] + t[(2, 2)]
}

/// Trace-free part `t - tr(t)/n I`.
pub fn deviator(t: &Tensor, dim: usize) -> Tensor {
    t - identity(dim) * (trace(t) / dim as f64)
}

/// The map `tau -> (1/mu) (tau - c tr(tau) I)` applied to pseudostresses.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Compliance {
    pub inv_mu: f64,
    pub c_trace: f64,
}

impl Compliance {
    pub fn apply(&self, tau: &Tensor, dim: usize) -> Tensor {
        (tau - identity(dim) * (self.c_trace * trace(tau))) * self.inv_mu
    }
}

/// Pointwise evaluation of `chi = (1/mu) (rho - c tr(rho) I)`.
#[derive(Clone, Debug)]
pub struct TensorFieldEval {
    pub value: Tensor,
    pub trace: f64,
    pub deviator: Tensor,
    /// Row `i` holds the curl of row `i` of the value. In 2D only the third
    /// component is populated and equals the scalar rot.
    pub curl: Tensor,
}

/// One row of an RT0 tensor field on a single cell: `a + slope * x`.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct RowField {
    pub a: Vector3<f64>,
    pub slope: f64,
}

impl RowField {
    pub fn at(&self, x: &Point) -> Vector3<f64> {
        self.a + x * self.slope
    }
}

/// A basis function value returned by [`RtTensorSpace::basis_eval`].
#[derive(Clone, Copy, Debug)]
pub struct BasisValue {
    pub dof: usize,
    pub row: usize,
    pub local_facet: usize,
    pub value: Vector3<f64>,
}

fn curl_from_gradient(g: &Tensor) -> Vector3<f64> {
    // g[(l, m)] = d v_l / d x_m
    Vector3::new(g[(2, 1)] - g[(1, 2)], g[(0, 2)] - g[(2, 0)], g[(1, 0)] - g[(0, 1)])
}

#[derive(Clone, Copy, Debug)]
pub struct RtTensorSpace<'m> {
    mesh: &'m Mesh,
}

impl<'m> RtTensorSpace<'m> {
    pub fn new(mesh: &'m Mesh) -> Self {
        RtTensorSpace { mesh }
    }

    pub fn mesh(&self) -> &'m Mesh {
        self.mesh
    }

    pub fn dim(&self) -> usize {
        self.mesh.dim()
    }

    pub fn num_dofs(&self) -> usize {
        self.dim() * self.mesh.num_facets()
    }

    pub fn dof(&self, row: usize, facet: usize) -> usize {
        row * self.mesh.num_facets() + facet
    }

    /// `s_j / (n |T|)` for local facet `j` of cell `t`.
    pub fn local_scale(&self, t: usize, j: usize) -> f64 {
        self.mesh.facet_sign(t, j) / (self.dim() as f64 * self.mesh.cell_volume(t))
    }

    /// The vector RT0 basis function of local facet `j` on cell `t` at `x`.
    pub fn local_basis(&self, t: usize, j: usize, x: &Point) -> Vector3<f64> {
        let p = self.mesh.vertex(self.mesh.cell(t)[j]);
        (x - p) * self.local_scale(t, j)
    }

    fn check_inside(&self, t: usize, x: &Point) -> Result<()> {
        let bary = self.mesh.barycentric(t, x);
        let min_bary = bary[..=self.dim()].iter().cloned().fold(f64::INFINITY, f64::min);
        if min_bary < -1e-12 {
            return Err(Error::PointOutsideCell { cell: t, min_bary });
        }
        Ok(())
    }

    /// All nonzero tensor basis functions on cell `t` at `x`; each has a
    /// single nonzero row.
    pub fn basis_eval(&self, t: usize, x: &Point) -> Result<Vec<BasisValue>> {
        self.check_inside(t, x)?;
        let n = self.dim();
        let facets = self.mesh.cell_facets(t);
        let mut out = Vec::with_capacity(n * (n + 1));
        for row in 0..n {
            for (j, &f) in facets.iter().enumerate() {
                out.push(BasisValue {
                    dof: self.dof(row, f),
                    row,
                    local_facet: j,
                    value: self.local_basis(t, j, x),
                });
            }
        }
        Ok(out)
    }

    /// Row fields of the tensor with coefficients `coeffs` restricted to cell `t`.
    pub fn cell_rows(&self, coeffs: &[f64], t: usize) -> [RowField; 3] {
        let mut rows = [RowField::default(); 3];
        let facets = self.mesh.cell_facets(t);
        for (i, row) in rows.iter_mut().enumerate().take(self.dim()) {
            for (j, &f) in facets.iter().enumerate() {
                let w = coeffs[self.dof(i, f)] * self.local_scale(t, j);
                let p = self.mesh.vertex(self.mesh.cell(t)[j]);
                row.slope += w;
                row.a -= p * w;
            }
        }
        rows
    }

    /// Value of the discrete tensor on cell `t` at `x` (no containment check).
    pub fn value(&self, coeffs: &[f64], t: usize, x: &Point) -> Tensor {
        let rows = self.cell_rows(coeffs, t);
        let mut m = Tensor::zeros();
        for i in 0..self.dim() {
            m.set_row(i, &rows[i].at(x).transpose());
        }
        m
    }

    /// Row divergences on cell `t` (constant).
    pub fn divergence(&self, coeffs: &[f64], t: usize) -> Vector3<f64> {
        let rows = self.cell_rows(coeffs, t);
        let n = self.dim() as f64;
        Vector3::new(rows[0].slope * n, rows[1].slope * n, rows[2].slope * n)
    }

    /// Evaluates `chi = (1/mu)(rho - c tr(rho) I)` with its trace, deviator
    /// and row-wise curl, using the analytic derivatives of the basis.
    pub fn eval_tensor_field(
        &self,
        coeffs: &[f64],
        t: usize,
        x: &Point,
        compliance: &Compliance,
    ) -> Result<TensorFieldEval> {
        self.check_inside(t, x)?;
        Ok(self.eval_unchecked(coeffs, t, x, compliance))
    }

    pub(crate) fn eval_unchecked(
        &self,
        coeffs: &[f64],
        t: usize,
        x: &Point,
        compliance: &Compliance,
    ) -> TensorFieldEval {
        let dim = self.dim();
        let rows = self.cell_rows(coeffs, t);
        let mut rho = Tensor::zeros();
        for i in 0..dim {
            rho.set_row(i, &rows[i].at(x).transpose());
        }
        let value = compliance.apply(&rho, dim);
        let eye = identity(dim);
        // grad tr(rho) = (slope_1, ..., slope_n)
        let mut grad_tr = Vector3::zeros();
        for i in 0..dim {
            grad_tr[i] = rows[i].slope;
        }
        let mut curl = Tensor::zeros();
        for i in 0..dim {
            // gradient of row i of chi: (slope_i I - c e_i (x) grad tr(rho)) / mu
            let mut g = eye * rows[i].slope;
            for m in 0..dim {
                g[(i, m)] -= compliance.c_trace * grad_tr[m];
            }
            curl.set_row(i, &(curl_from_gradient(&g) * compliance.inv_mu).transpose());
        }
        let tr = trace(&value);
        TensorFieldEval { value, trace: tr, deviator: deviator(&value, dim), curl }
    }

    /// Facet-flux interpolant: dof `(i, e)` is `int_e (row_i f) . n_e`.
    pub fn interpolate(&self, f: impl Fn(&Point) -> Tensor) -> Vec<f64> {
        self.interpolate_with(f, &facet_rule(self.dim()))
    }

    pub fn interpolate_with(&self, f: impl Fn(&Point) -> Tensor, rule: &Rule) -> Vec<f64> {
        let mesh = self.mesh;
        let mut out = vec![0.0; self.num_dofs()];
        for e in 0..mesh.num_facets() {
            let nrm = mesh.normal(e);
            let meas = mesh.facet_measure(e);
            let mut flux = Vector3::zeros();
            for (bary, w) in rule.iter() {
                flux += f(&mesh.map_to_facet(e, bary)) * nrm * w;
            }
            for i in 0..self.dim() {
                out[self.dof(i, e)] = flux[i] * meas;
            }
        }
        out
    }
}

#[derive(Clone, Copy, Debug)]
pub struct P0VectorSpace<'m> {
    mesh: &'m Mesh,
}

impl<'m> P0VectorSpace<'m> {
    pub fn new(mesh: &'m Mesh) -> Self {
        P0VectorSpace { mesh }
    }

    pub fn mesh(&self) -> &'m Mesh {
        self.mesh
    }

    pub fn num_dofs(&self) -> usize {
        self.mesh.dim() * self.mesh.num_cells()
    }

    pub fn dof(&self, cell: usize, comp: usize) -> usize {
        cell * self.mesh.dim() + comp
    }

    pub fn value(&self, coeffs: &[f64], t: usize) -> Vector3<f64> {
        let mut v = Vector3::zeros();
        for i in 0..self.mesh.dim() {
            v[i] = coeffs[self.dof(t, i)];
        }
        v
    }

    /// L2 projection: cell means computed with the degree-4 cell rule.
    pub fn project(&self, g: impl Fn(&Point) -> Vector3<f64>) -> Vec<f64> {
        self.project_with(g, &cell_rule(self.mesh.dim()))
    }

    pub fn project_with(&self, g: impl Fn(&Point) -> Vector3<f64>, rule: &Rule) -> Vec<f64> {
        let n = self.mesh.dim();
        let mut out = vec![0.0; self.num_dofs()];
        for t in 0..self.mesh.num_cells() {
            let mut mean = Vector3::zeros();
            for (bary, w) in rule.iter() {
                mean += g(&self.mesh.map_to_cell(t, bary)) * w;
            }
            for i in 0..n {
                out[self.dof(t, i)] = mean[i];
            }
        }
        out
    }

    /// `||v||_{0,Omega}` of a P0 field.
    pub fn l2_norm(&self, coeffs: &[f64]) -> f64 {
        (0..self.mesh.num_cells())
            .map(|t| self.value(coeffs, t).norm_squared() * self.mesh.cell_volume(t))
            .sum::<f64>()
            .sqrt()
    }
}

#[derive(Clone, Copy, Debug)]
pub struct P1VectorSpace<'m> {
    mesh: &'m Mesh,
}

impl<'m> P1VectorSpace<'m> {
    pub fn new(mesh: &'m Mesh) -> Self {
        P1VectorSpace { mesh }
    }

    pub fn num_dofs(&self) -> usize {
        self.mesh.dim() * self.mesh.num_vertices()
    }

    pub fn dof(&self, vertex: usize, comp: usize) -> usize {
        vertex * self.mesh.dim() + comp
    }

    pub fn nodal_value(&self, coeffs: &[f64], v: usize) -> Vector3<f64> {
        let mut out = Vector3::zeros();
        for i in 0..self.mesh.dim() {
            out[i] = coeffs[self.dof(v, i)];
        }
        out
    }

    /// Value on cell `t` at barycentric coordinates `bary`.
    pub fn value_bary(&self, coeffs: &[f64], t: usize, bary: &[f64]) -> Vector3<f64> {
        self.mesh
            .cell(t)
            .iter()
            .zip(bary)
            .map(|(&v, &l)| self.nodal_value(coeffs, v) * l)
            .sum()
    }

    pub fn value(&self, coeffs: &[f64], t: usize, x: &Point) -> Vector3<f64> {
        let b = self.mesh.barycentric(t, x);
        self.value_bary(coeffs, t, &b[..=self.mesh.dim()])
    }

    pub fn l2_norm(&self, coeffs: &[f64]) -> f64 {
        let rule = cell_rule(self.mesh.dim());
        let mut s = 0.0;
        for t in 0..self.mesh.num_cells() {
            let vol = self.mesh.cell_volume(t);
            for (b, w) in rule.iter() {
                s += w * vol * self.value_bary(coeffs, t, b).norm_squared();
            }
        }
        s.sqrt()
    }
}

/// `|| div(Pi_h f) - P_h(div f) ||_{0,Omega}`.
pub fn check_commuting(
    rt: &RtTensorSpace,
    p0: &P0VectorSpace,
    f: impl Fn(&Point) -> Tensor,
    div_f: impl Fn(&Point) -> Vector3<f64>,
) -> f64 {
    let dim = rt.dim();
    check_commuting_with(rt, p0, f, div_f, &facet_rule(dim), &cell_rule(dim))
}

pub fn check_commuting_with(
    rt: &RtTensorSpace,
    p0: &P0VectorSpace,
    f: impl Fn(&Point) -> Tensor,
    div_f: impl Fn(&Point) -> Vector3<f64>,
    facet: &Rule,
    cell: &Rule,
) -> f64 {
    let coeffs = rt.interpolate_with(f, facet);
    let proj = p0.project_with(div_f, cell);
    let mesh = rt.mesh();
    (0..mesh.num_cells())
        .map(|t| (rt.divergence(&coeffs, t) - p0.value(&proj, t)).norm_squared() * mesh.cell_volume(t))
        .sum::<f64>()
        .sqrt()
}
