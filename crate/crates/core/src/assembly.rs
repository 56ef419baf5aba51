//! Material parameters and global assembly of the mixed saddle system.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::mesh::{Mesh, Point};
use crate::quadrature::cell_rule;
use crate::sparse::CsrMatrix;
use crate::spaces::{deviator, identity, trace, Compliance, P0VectorSpace, RtTensorSpace, Tensor};

/// Which trace coupling the compliance map uses.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Variant {
    /// `c = (lambda + mu) / (n lambda + (n + 1) mu)`.
    Standard,
    /// Incompressible limit, `c = 1/n`.
    Limit,
}

impl Variant {
    pub fn name(self) -> &'static str {
        match self {
            Variant::Standard => "standard",
            Variant::Limit => "limit",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "standard" => Ok(Variant::Standard),
            "limit" => Ok(Variant::Limit),
            other => Err(Error::Parse(format!("unknown variant `{other}`"))),
        }
    }
}

/// Lamé parametrization from Young's modulus and Poisson ratio.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MaterialParams {
    pub e: f64,
    pub nu: f64,
    /// `+inf` in the incompressible limit.
    pub lambda: f64,
    pub mu: f64,
    pub limit: bool,
}

impl MaterialParams {
    pub fn new(e: f64, nu: f64) -> Result<Self> {
        if !(e > 0.0 && e.is_finite()) {
            return Err(Error::InvalidArgument(format!("Young's modulus must be positive, got {e}")));
        }
        if !(nu > 0.0 && nu <= 0.5) {
            return Err(Error::InvalidArgument(format!("Poisson ratio must lie in (0, 1/2], got {nu}")));
        }
        let limit = nu == 0.5;
        let lambda = if limit {
            f64::INFINITY
        } else {
            e * nu / ((1.0 + nu) * (1.0 - 2.0 * nu))
        };
        Ok(MaterialParams { e, nu, lambda, mu: e / (2.0 * (1.0 + nu)), limit })
    }

    /// The variant implied by the Poisson ratio.
    pub fn auto_variant(&self) -> Variant {
        if self.limit {
            Variant::Limit
        } else {
            Variant::Standard
        }
    }

    /// `(lambda + mu) / (n lambda + (n + 1) mu)`, tending to `1/n` as `lambda -> inf`.
    pub fn c_trace(&self, dim: usize) -> f64 {
        let n = dim as f64;
        if self.limit {
            1.0 / n
        } else {
            (self.lambda + self.mu) / (n * self.lambda + (n + 1.0) * self.mu)
        }
    }

    pub fn compliance(&self, dim: usize, variant: Variant) -> Compliance {
        let c_trace = match variant {
            Variant::Standard => self.c_trace(dim),
            Variant::Limit => 1.0 / dim as f64,
        };
        Compliance { inv_mu: 1.0 / self.mu, c_trace }
    }

    /// Coefficient of `int tr tr` in the deviatoric form, `1 / (n (n lambda + (n + 1) mu))`.
    fn deviatoric_trace_coeff(&self, dim: usize) -> f64 {
        if self.limit {
            0.0
        } else {
            let n = dim as f64;
            1.0 / (n * (n * self.lambda + (n + 1.0) * self.mu))
        }
    }
}

/// Which expression of the `a` form to assemble.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AForm {
    /// `(1/mu) xi:tau - (lambda + mu)/(mu (n lambda + (n + 1) mu)) tr xi tr tau`.
    Original,
    /// `(1/mu) xi^d:tau^d + 1/(n (n lambda + (n + 1) mu)) tr xi tr tau`.
    Deviatoric,
    /// `(1/mu) xi:tau - 1/(n mu) tr xi tr tau`.
    Limit,
}

type Integrand = Box<dyn Fn(&Tensor, &Tensor) -> f64>;

fn integrand(mat: &MaterialParams, dim: usize, form: AForm) -> Result<Integrand> {
    let inv_mu = 1.0 / mat.mu;
    let n = dim as f64;
    Ok(match form {
        AForm::Original => {
            if mat.limit {
                return Err(Error::InvalidArgument(
                    "the original a-form is undefined in the incompressible limit".into(),
                ));
            }
            let alpha = (mat.lambda + mat.mu) / (mat.mu * (n * mat.lambda + (n + 1.0) * mat.mu));
            Box::new(move |x, t| inv_mu * x.component_mul(t).sum() - alpha * trace(x) * trace(t))
        }
        AForm::Deviatoric => {
            let beta = mat.deviatoric_trace_coeff(dim);
            Box::new(move |x, t| {
                inv_mu * deviator(x, dim).component_mul(&deviator(t, dim)).sum() + beta * trace(x) * trace(t)
            })
        }
        AForm::Limit => {
            let alpha = inv_mu / n;
            Box::new(move |x, t| inv_mu * x.component_mul(t).sum() - alpha * trace(x) * trace(t))
        }
    })
}

/// Global matrix of the `a` form on the RT tensor space.
pub fn assemble_a(space: &RtTensorSpace, mat: &MaterialParams, form: AForm) -> Result<CsrMatrix> {
    let mesh = space.mesh();
    let dim = mesh.dim();
    let form_fn = integrand(mat, dim, form)?;
    let rule = cell_rule(dim);
    let nloc = dim * (dim + 1);
    let mut triplets = Vec::with_capacity(mesh.num_cells() * nloc * nloc);
    let mut local = vec![0.0; nloc * nloc];
    let mut dofs = vec![0usize; nloc];
    let mut basis = vec![Tensor::zeros(); nloc];
    for t in 0..mesh.num_cells() {
        local.iter_mut().for_each(|v| *v = 0.0);
        let facets = mesh.cell_facets(t);
        for row in 0..dim {
            for (j, &f) in facets.iter().enumerate() {
                dofs[row * (dim + 1) + j] = space.dof(row, f);
            }
        }
        let vol = mesh.cell_volume(t);
        for (bary, w) in rule.iter() {
            let x = mesh.map_to_cell(t, bary);
            for row in 0..dim {
                for j in 0..=dim {
                    let mut b = Tensor::zeros();
                    b.set_row(row, &space.local_basis(t, j, &x).transpose());
                    basis[row * (dim + 1) + j] = b;
                }
            }
            for p in 0..nloc {
                for q in p..nloc {
                    local[p * nloc + q] += w * vol * form_fn(&basis[p], &basis[q]);
                }
            }
        }
        for p in 0..nloc {
            for q in p..nloc {
                let v = local[p * nloc + q];
                triplets.push((dofs[p], dofs[q], v));
                if q != p {
                    triplets.push((dofs[q], dofs[p], v));
                }
            }
        }
    }
    let n = space.num_dofs();
    Ok(CsrMatrix::from_triplets(n, n, &triplets))
}

/// `B[v, tau] = int v . div(tau)`; entries are the facet signs `+-1`.
pub fn assemble_b(space_rt: &RtTensorSpace, space_p0: &P0VectorSpace) -> Result<CsrMatrix> {
    let mesh = space_rt.mesh();
    if !std::ptr::eq(mesh, space_p0.mesh()) {
        return Err(Error::InvalidArgument("RT and P0 spaces live on different meshes".into()));
    }
    let dim = mesh.dim();
    let mut triplets = Vec::with_capacity(mesh.num_cells() * dim * (dim + 1));
    for t in 0..mesh.num_cells() {
        for row in 0..dim {
            for (j, &f) in mesh.cell_facets(t).iter().enumerate() {
                // int_T div(phi_j) = s_j
                triplets.push((space_p0.dof(t, row), space_rt.dof(row, f), mesh.facet_sign(t, j)));
            }
        }
    }
    Ok(CsrMatrix::from_triplets(space_p0.num_dofs(), space_rt.num_dofs(), &triplets))
}

/// Diagonal of the P0 mass matrix: `|T|` repeated per component.
pub fn assemble_mass(space_p0: &P0VectorSpace) -> Vec<f64> {
    let mesh = space_p0.mesh();
    let mut d = vec![0.0; space_p0.num_dofs()];
    for t in 0..mesh.num_cells() {
        for i in 0..mesh.dim() {
            d[space_p0.dof(t, i)] = mesh.cell_volume(t);
        }
    }
    d
}

/// `c_j = int_Omega tr(phi_j)`.
pub fn assemble_trace_constraint(space: &RtTensorSpace) -> Vec<f64> {
    let mesh = space.mesh();
    let dim = mesh.dim();
    let rule = cell_rule(dim);
    let mut c = vec![0.0; space.num_dofs()];
    for t in 0..mesh.num_cells() {
        let vol = mesh.cell_volume(t);
        for (j, &f) in mesh.cell_facets(t).iter().enumerate() {
            for row in 0..dim {
                let mut s = 0.0;
                for (bary, w) in rule.iter() {
                    s += w * space.local_basis(t, j, &mesh.map_to_cell(t, bary))[row];
                }
                c[space.dof(row, f)] += s * vol;
            }
        }
    }
    c
}

fn bounding_diameter(mesh: &Mesh) -> f64 {
    let mut lo = Point::repeat(f64::INFINITY);
    let mut hi = Point::repeat(f64::NEG_INFINITY);
    for p in mesh.vertices() {
        lo = lo.inf(p);
        hi = hi.sup(p);
    }
    (hi - lo).norm()
}

/// The blocks of the discrete mixed eigenproblem.
#[derive(Clone, Debug)]
pub struct SaddleSystem {
    pub dim: usize,
    pub a: CsrMatrix,
    pub b: CsrMatrix,
    pub mass: Vec<f64>,
    pub c: Vec<f64>,
    /// Coefficients of the identity tensor, which lies in the kernel of `B`.
    pub identity: Vec<f64>,
    /// Whether `A` annihilates the identity (incompressible limit).
    pub trace_kernel: bool,
    /// `mu / diam(Omega)^2`, the order of magnitude of the eigenvalues.
    pub kappa_scale: f64,
}

impl SaddleSystem {
    pub fn assemble(mesh: &Mesh, mat: &MaterialParams, form: AForm) -> Result<Self> {
        let rt = RtTensorSpace::new(mesh);
        let p0 = P0VectorSpace::new(mesh);
        Ok(SaddleSystem {
            dim: mesh.dim(),
            a: assemble_a(&rt, mat, form)?,
            b: assemble_b(&rt, &p0)?,
            mass: assemble_mass(&p0),
            c: assemble_trace_constraint(&rt),
            identity: rt.interpolate(|_| identity(mesh.dim())),
            trace_kernel: form == AForm::Limit || mat.limit,
            kappa_scale: mat.mu / bounding_diameter(mesh).powi(2),
        })
    }

    pub fn num_rho(&self) -> usize {
        self.a.nrows()
    }

    pub fn num_u(&self) -> usize {
        self.b.nrows()
    }

    /// `dim(H_h x Q_h)`, the unknown count reported in traces.
    pub fn num_dofs(&self) -> usize {
        self.num_rho() + self.num_u()
    }

    /// `[[A, B^T], [B, 0]]` without the trace multiplier.
    pub fn block_matrix(&self) -> CsrMatrix {
        let nr = self.num_rho();
        let n = nr + self.num_u();
        let mut t: Vec<_> = self.a.triplets().collect();
        for (r, c, v) in self.b.triplets() {
            t.push((nr + r, c, v));
            t.push((c, nr + r, v));
        }
        CsrMatrix::from_triplets(n, n, &t)
    }

    /// The symmetric block matrix `[[A, B^T, c], [B, 0, 0], [c^T, 0, 0]]`.
    pub fn saddle_matrix(&self) -> CsrMatrix {
        let nr = self.num_rho();
        let nu = self.num_u();
        let n = nr + nu + 1;
        let mut t = Vec::with_capacity(self.a.nnz() + 2 * self.b.nnz() + 2 * nr);
        t.extend(self.a.triplets());
        for (r, c, v) in self.b.triplets() {
            t.push((nr + r, c, v));
            t.push((c, nr + r, v));
        }
        for (j, &v) in self.c.iter().enumerate() {
            if v != 0.0 {
                t.push((j, n - 1, v));
                t.push((n - 1, j, v));
            }
        }
        CsrMatrix::from_triplets(n, n, &t)
    }
}
