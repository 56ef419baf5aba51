//! The adaptive loop (solve, estimate, mark, refine) with rate fitting and
//! eigenvalue extrapolation.

use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;
use std::time::Instant;

use nalgebra::{Matrix3, Vector3};

use crate::assembly::{AForm, MaterialParams, SaddleSystem, Variant};
use crate::eigensolver::{solve_eigs, spectral_gap, EigenOptions, MixedSolution};
use crate::error::{Error, Result};
use crate::estimator::{effectivity, estimate, EstimatorField};
use crate::mesh::{refine, uniform_refine, Geometry, MarkSet, Mesh};
use crate::postprocess::PatchAverage;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Mode {
    Adaptive,
    Uniform,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Adaptive => "adaptive",
            Mode::Uniform => "uniform",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Mode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "adaptive" => Ok(Mode::Adaptive),
            "uniform" => Ok(Mode::Uniform),
            other => Err(Error::Parse(format!("unknown mode `{other}`"))),
        }
    }
}

/// Estimator/form selection; `Auto` picks the limit variant exactly at `nu = 1/2`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum VariantChoice {
    Standard,
    Limit,
    Auto,
}

impl VariantChoice {
    pub fn resolve(self, mat: &MaterialParams) -> Variant {
        match self {
            VariantChoice::Standard => Variant::Standard,
            VariantChoice::Limit => Variant::Limit,
            VariantChoice::Auto => mat.auto_variant(),
        }
    }
}

impl FromStr for VariantChoice {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "auto" => Ok(VariantChoice::Auto),
            other => Ok(match other.parse::<Variant>()? {
                Variant::Standard => VariantChoice::Standard,
                Variant::Limit => VariantChoice::Limit,
            }),
        }
    }
}

impl fmt::Display for VariantChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            VariantChoice::Standard => "standard",
            VariantChoice::Limit => "limit",
            VariantChoice::Auto => "auto",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AdaptiveConfig {
    pub geometry: Geometry,
    pub nu: f64,
    pub e: f64,
    /// One-based index of the tracked eigenpair.
    pub eig_index: usize,
    pub beta: f64,
    pub max_dofs: usize,
    pub max_iters: usize,
    pub variant: VariantChoice,
    pub mode: Mode,
    pub ref_omega: Option<f64>,
    pub eigen: EigenOptions,
}

impl AdaptiveConfig {
    pub fn new(geometry: Geometry, nu: f64, mode: Mode) -> Self {
        AdaptiveConfig {
            geometry,
            nu,
            e: 1.0,
            eig_index: 1,
            beta: 0.5,
            max_dofs: if geometry.dim() == 2 { 200_000 } else { 300_000 },
            max_iters: 200,
            variant: VariantChoice::Auto,
            mode,
            ref_omega: None,
            eigen: EigenOptions::default(),
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.beta > 0.0 && self.beta < 1.0) {
            return Err(Error::InvalidArgument(format!("beta must lie in (0, 1), got {}", self.beta)));
        }
        if self.eig_index == 0 {
            return Err(Error::InvalidArgument("eigenpair indices start at 1".into()));
        }
        if self.max_iters == 0 {
            return Err(Error::InvalidArgument("at least one iteration is required".into()));
        }
        Ok(())
    }

    pub fn material(&self) -> Result<MaterialParams> {
        MaterialParams::new(self.e, self.nu)
    }
}

/// One row of the trace.
#[derive(Clone, Debug, PartialEq)]
pub struct IterationRecord {
    pub iter: usize,
    pub n: usize,
    pub num_cells: usize,
    pub omega_h: f64,
    pub eta_sq: f64,
    /// `|omega_h - omega_ref|`, `NaN` without a reference.
    pub err: f64,
    pub eff: f64,
    pub num_marked: usize,
    pub wall_ms: f64,
}

pub const TRACE_HEADER: &str = "iter,N,num_cells,omega_h,eta_sq,err,eff,num_marked,wall_ms";

#[derive(Clone, Debug, Default, PartialEq)]
pub struct AdaptiveTrace {
    pub records: Vec<IterationRecord>,
    /// `|| Theta u_h - u_h ||` per iteration.
    pub postprocess_gap: Vec<f64>,
    pub warnings: Vec<String>,
}

impl AdaptiveTrace {
    pub fn ns(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.n as f64).collect()
    }

    pub fn omegas(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.omega_h).collect()
    }

    pub fn eta_sqs(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.eta_sq).collect()
    }

    pub fn last(&self) -> Option<&IterationRecord> {
        self.records.last()
    }

    /// Recomputes `err` and `eff` against a new reference value.
    pub fn with_reference(&self, omega_ref: f64) -> AdaptiveTrace {
        let mut t = self.clone();
        for r in &mut t.records {
            r.err = (r.omega_h - omega_ref).abs();
            r.eff = r.err / r.eta_sq;
        }
        t
    }

    pub fn write_csv(&self, w: &mut impl Write) -> std::io::Result<()> {
        writeln!(w, "{TRACE_HEADER}")?;
        for r in &self.records {
            writeln!(
                w,
                "{},{},{},{},{},{},{},{},{}",
                r.iter, r.n, r.num_cells, r.omega_h, r.eta_sq, r.err, r.eff, r.num_marked, r.wall_ms
            )?;
        }
        Ok(())
    }

    /// Reads rows written by [`AdaptiveTrace::write_csv`].
    pub fn read_csv(r: impl BufRead) -> Result<AdaptiveTrace> {
        let mut lines = r.lines();
        let header = lines.next().ok_or_else(|| Error::Parse("empty trace file".into()))??;
        if header.trim_end() != TRACE_HEADER {
            return Err(Error::Parse(format!("unexpected trace header `{header}`")));
        }
        let mut trace = AdaptiveTrace::default();
        for (lineno, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 9 {
                return Err(Error::Parse(format!("line {}: expected 9 fields, got {}", lineno + 2, f.len())));
            }
            let int = |s: &str| s.parse::<usize>().map_err(|e| Error::Parse(format!("line {}: {e}", lineno + 2)));
            let flt = |s: &str| s.parse::<f64>().map_err(|e| Error::Parse(format!("line {}: {e}", lineno + 2)));
            trace.records.push(IterationRecord {
                iter: int(f[0])?,
                n: int(f[1])?,
                num_cells: int(f[2])?,
                omega_h: flt(f[3])?,
                eta_sq: flt(f[4])?,
                err: flt(f[5])?,
                eff: flt(f[6])?,
                num_marked: int(f[7])?,
                wall_ms: flt(f[8])?,
            });
        }
        Ok(trace)
    }
}

/// What an observer sees after each iteration.
pub struct IterationView<'a> {
    pub record: &'a IterationRecord,
    pub mesh: &'a Mesh,
    pub solution: &'a MixedSolution,
    pub field: &'a EstimatorField,
    /// Cells selected for refinement; `None` on the final iteration.
    pub marks: Option<&'a MarkSet>,
}

/// Final state of a completed run.
#[derive(Clone, Debug)]
pub struct RunOutput {
    pub trace: AdaptiveTrace,
    pub mesh: Mesh,
    pub solution: MixedSolution,
    pub field: EstimatorField,
}

/// A run that stopped on an error, with the iterations completed so far.
#[derive(Debug)]
pub struct Aborted {
    pub trace: AdaptiveTrace,
    pub error: Error,
}

impl fmt::Display for Aborted {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "run aborted after {} iterations: {}", self.trace.records.len(), self.error)
    }
}

impl std::error::Error for Aborted {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.error)
    }
}

/// `{T : eta_T >= beta max eta_T}`.
pub fn mark_maximal(field: &EstimatorField, beta: f64) -> Result<MarkSet> {
    if !(beta > 0.0 && beta <= 1.0) {
        return Err(Error::InvalidArgument(format!("beta must lie in (0, 1], got {beta}")));
    }
    let eta = field.indicators();
    let max = eta.iter().copied().fold(0.0, f64::max);
    if max <= 0.0 {
        return Err(Error::ZeroEstimator);
    }
    let marked = eta.iter().enumerate().filter(|&(_, &e)| e >= beta * max).map(|(t, _)| t).collect();
    Ok(MarkSet::new(marked, beta))
}

fn system_for(mesh: &Mesh, mat: &MaterialParams, variant: Variant) -> Result<SaddleSystem> {
    let form = match variant {
        Variant::Standard => AForm::Deviatoric,
        Variant::Limit => AForm::Limit,
    };
    SaddleSystem::assemble(mesh, mat, form)
}

/// Runs the loop without observing intermediate states.
pub fn run(config: &AdaptiveConfig) -> std::result::Result<RunOutput, Aborted> {
    run_with(config, |_| {})
}

/// Runs the loop, calling `observe` after every iteration.
pub fn run_with(
    config: &AdaptiveConfig,
    mut observe: impl FnMut(&IterationView),
) -> std::result::Result<RunOutput, Aborted> {
    let mut trace = AdaptiveTrace::default();
    macro_rules! bail {
        ($e:expr) => {
            match $e {
                Ok(v) => v,
                Err(error) => return Err(Aborted { trace, error }),
            }
        };
    }
    bail!(config.validate());
    let mat = bail!(config.material());
    let variant = config.variant.resolve(&mat);
    let mut eigen = config.eigen.clone();
    eigen.num_eigs = eigen.num_eigs.max(config.eig_index);
    let idx = config.eig_index - 1;

    let mut mesh = bail!(config.geometry.mesh());
    for iter in 0..config.max_iters {
        let start = Instant::now();
        let sys = bail!(system_for(&mesh, &mat, variant));
        let n = sys.num_dofs();
        if iter > 0 && n > config.max_dofs {
            break;
        }
        let sol = bail!(solve_eigs(&sys, &eigen));
        if sol.len() > 1 {
            if let Ok(gap) = spectral_gap(&sol, idx) {
                if gap <= 1e-8 * sol.kappas[idx] {
                    trace.warnings.push(format!("iteration {iter}: eigenvalue {} is not separated", config.eig_index));
                }
            }
        }
        let average = PatchAverage::new(&mesh);
        let field = bail!(estimate(&mesh, &sol.rho_coeffs[idx], &sol.u_coeffs[idx], &mat, variant, &average));
        let omega_h = sol.omegas[idx];
        let (err, eff) = match config.ref_omega {
            Some(w) => {
                let err = (omega_h - w).abs();
                (err, bail!(effectivity(err, &field)))
            }
            None => (f64::NAN, f64::NAN),
        };
        let last = iter + 1 == config.max_iters;
        let marks = if last {
            None
        } else {
            Some(match config.mode {
                Mode::Adaptive => bail!(mark_maximal(&field, config.beta)),
                Mode::Uniform => MarkSet::all(&mesh),
            })
        };
        trace.postprocess_gap.push(field.term_totals()[0].sqrt());
        let record = IterationRecord {
            iter,
            n,
            num_cells: mesh.num_cells(),
            omega_h,
            eta_sq: field.global_sq,
            err,
            eff,
            num_marked: marks.as_ref().map_or(0, |m| m.len()),
            wall_ms: start.elapsed().as_secs_f64() * 1e3,
        };
        observe(&IterationView { record: &record, mesh: &mesh, solution: &sol, field: &field, marks: marks.as_ref() });
        trace.records.push(record);

        let next = match (&marks, config.mode) {
            (None, _) => None,
            (Some(_), Mode::Uniform) => Some(bail!(uniform_refine(&mesh))),
            (Some(m), Mode::Adaptive) => Some(bail!(refine(&mesh, m))),
        };
        // stop before solving a mesh beyond the budget
        let stop = match &next {
            None => true,
            Some(nm) => estimated_dofs(nm) > config.max_dofs,
        };
        if stop {
            return Ok(RunOutput { trace, mesh, solution: sol, field });
        }
        mesh = next.expect("next mesh");
    }
    Err(Aborted { trace, error: Error::Internal("iteration loop ended without a result".into()) })
}

/// `dim(H_h x Q_h) = n (#facets + #cells)`.
pub fn estimated_dofs(mesh: &Mesh) -> usize {
    mesh.dim() * (mesh.num_facets() + mesh.num_cells())
}

/// Least-squares slope and intercept of `y` against `x`.
pub fn fit_line(x: &[f64], y: &[f64]) -> Result<(f64, f64)> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::Fit("need at least two points".into()));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    if sxx <= 1e-300 {
        return Err(Error::Fit("degenerate abscissas".into()));
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    Ok((slope, my - slope * mx))
}

/// Log-log slope of `values` against `ns` over the last `count` points.
pub fn loglog_slope(ns: &[f64], values: &[f64], count: usize) -> Result<f64> {
    let k = count.min(ns.len());
    let start = ns.len() - k;
    if values[start..].iter().any(|v| !(*v > 0.0)) {
        return Err(Error::Fit("log of a non-positive value".into()));
    }
    let x: Vec<f64> = ns[start..].iter().map(|v| v.ln()).collect();
    let y: Vec<f64> = values[start..].iter().map(|v| v.ln()).collect();
    Ok(fit_line(&x, &y)?.0)
}

/// Slope of `log |omega_h - ref|` against `log N` over the last
/// `max(4, ceil(len / 2))` iterations.
pub fn fit_rate(trace: &AdaptiveTrace, ref_omega: f64) -> Result<f64> {
    let len = trace.records.len();
    if len < 4 {
        return Err(Error::Fit(format!("need at least 4 iterations, have {len}")));
    }
    let errs: Vec<f64> = trace.omegas().iter().map(|w| (w - ref_omega).abs()).collect();
    loglog_slope(&trace.ns(), &errs, 4.max(len.div_ceil(2)))
}

/// Fitted model `omega_h = omega + C N^{-alpha_n}`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Extrapolation {
    pub omega: f64,
    pub c: f64,
    /// Exponent in `N`.
    pub alpha_n: f64,
    /// Equivalent `h` exponent `n alpha_n`.
    pub alpha: f64,
    pub residual: f64,
}

fn model_residuals(ns: &[f64], ws: &[f64], p: &Vector3<f64>) -> Vec<f64> {
    ns.iter().zip(ws).map(|(n, w)| p[0] + p[1] * n.powf(-p[2]) - w).collect()
}

fn sum_sq(r: &[f64]) -> f64 {
    r.iter().map(|v| v * v).sum()
}

/// Linear least squares for `(omega, C)` at a fixed exponent.
fn linear_part(ns: &[f64], ws: &[f64], a: f64) -> Option<(f64, f64)> {
    let z: Vec<f64> = ns.iter().map(|n| n.powf(-a)).collect();
    fit_line(&z, ws).ok().map(|(c, omega)| (omega, c))
}

/// Nonlinear least-squares fit of `omega + C N^{-alpha_n}` by
/// Levenberg-Marquardt. The start is `omega = last omega_h`,
/// `alpha_n = 0.5` and the matching least-squares `C`; when that start does
/// not converge, the exponent is first located on a logarithmic grid.
pub fn extrapolate(ns: &[f64], omegas: &[f64], dim: usize) -> Result<Extrapolation> {
    if ns.len() != omegas.len() || ns.len() < 4 {
        return Err(Error::Fit("extrapolation needs at least 4 levels".into()));
    }
    // scale N for conditioning
    let scale = ns[0];
    let xs: Vec<f64> = ns.iter().map(|n| n / scale).collect();
    let last = *omegas.last().expect("nonempty");
    let c0 = {
        let z: Vec<f64> = xs.iter().map(|n| n.powf(-0.5)).collect();
        let num: f64 = z.iter().zip(omegas).map(|(z, w)| z * (w - last)).sum();
        let den: f64 = z.iter().map(|z| z * z).sum();
        num / den
    };
    let tol = 1e-14 * omegas.iter().map(|w| w * w).sum::<f64>();
    let mut best = levenberg_marquardt(&xs, omegas, Vector3::new(last, c0, 0.5));
    if !best.1.is_finite() || best.1 > tol {
        let mut grid_best = (f64::INFINITY, 0.5);
        for k in 0..400 {
            let a = 0.02 * (4.0f64 / 0.02).powf(k as f64 / 399.0);
            if let Some((w, c)) = linear_part(&xs, omegas, a) {
                let r = sum_sq(&model_residuals(&xs, omegas, &Vector3::new(w, c, a)));
                if r < grid_best.0 {
                    grid_best = (r, a);
                }
            }
        }
        let a = grid_best.1;
        if let Some((w, c)) = linear_part(&xs, omegas, a) {
            let alt = levenberg_marquardt(&xs, omegas, Vector3::new(w, c, a));
            if alt.1 < best.1 || !best.1.is_finite() {
                best = alt;
            }
        }
    }
    let (p, res) = best;
    if !res.is_finite() || !p.iter().all(|v| v.is_finite()) {
        return Err(Error::Fit(format!("extrapolation did not converge (residual {res:e})")));
    }
    let c = p[1] * scale.powf(p[2]);
    Ok(Extrapolation { omega: p[0], c, alpha_n: p[2], alpha: p[2] * dim as f64, residual: res.sqrt() })
}

fn levenberg_marquardt(xs: &[f64], ws: &[f64], mut p: Vector3<f64>) -> (Vector3<f64>, f64) {
    let mut lambda = 1e-3;
    let mut cost = sum_sq(&model_residuals(xs, ws, &p));
    for _ in 0..500 {
        let r = model_residuals(xs, ws, &p);
        let mut jtj = Matrix3::zeros();
        let mut jtr = Vector3::zeros();
        for (x, ri) in xs.iter().zip(&r) {
            let z = x.powf(-p[2]);
            let j = Vector3::new(1.0, z, -p[1] * z * x.ln());
            jtj += j * j.transpose();
            jtr += j * *ri;
        }
        let mut improved = false;
        for _ in 0..30 {
            let mut damped = jtj;
            for k in 0..3 {
                damped[(k, k)] += lambda * jtj[(k, k)].max(1e-300);
            }
            let Some(step) = damped.lu().solve(&(-jtr)) else {
                lambda *= 10.0;
                continue;
            };
            let trial = p + step;
            let c = sum_sq(&model_residuals(xs, ws, &trial));
            if c.is_finite() && c <= cost {
                let small = step.norm() <= 1e-15 * (1.0 + p.norm());
                p = trial;
                let done = small || cost - c <= 1e-30 * cost.max(1e-300);
                cost = c;
                lambda = (lambda * 0.3).max(1e-15);
                improved = !done;
                break;
            }
            lambda *= 10.0;
        }
        if !improved {
            break;
        }
    }
    (p, cost)
}
