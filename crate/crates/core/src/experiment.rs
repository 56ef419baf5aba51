//! Batches of adaptive runs: the L-shape reproduction matrix, a bounded
//! worker pool, and the summary tables written as CSV.

use std::fmt;
use std::io::Write;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use crate::adaptive::{
    extrapolate, fit_rate, loglog_slope, run_with, AdaptiveConfig, Aborted, Extrapolation, Mode, RunOutput,
    VariantChoice,
};
use crate::eigensolver::EigenOptions;
use crate::error::{Error, Result};
use crate::mesh::{Geometry, MarkSet, Mesh};

/// Published lowest eigenfrequencies of the two L-shaped domains.
pub fn reference_omega(geometry: Geometry, nu: f64) -> Option<f64> {
    const TABLE: [(Geometry, f64, f64); 6] = [
        (Geometry::LShape2d, 0.35, 2.37877),
        (Geometry::LShape2d, 0.49, 3.26873),
        (Geometry::LShape2d, 0.5, 3.27271),
        (Geometry::LShape3d, 0.35, 3.01757),
        (Geometry::LShape3d, 0.49, 3.73062),
        (Geometry::LShape3d, 0.5, 3.73364),
    ];
    TABLE.iter().find(|(g, n, _)| *g == geometry && *n == nu).map(|&(_, _, w)| w)
}

/// Radius of the neighbourhood used to measure how strongly marking
/// concentrates at the singularity.
pub const CONCENTRATION_RADIUS: f64 = 0.25;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CaseSpec {
    pub geometry: Geometry,
    pub nu: f64,
    pub mode: Mode,
    pub variant: VariantChoice,
}

impl CaseSpec {
    pub fn new(geometry: Geometry, nu: f64, mode: Mode) -> Self {
        CaseSpec { geometry, nu, mode, variant: VariantChoice::Auto }
    }

    /// Directory-friendly name, e.g. `lshape2d_0.35_adaptive`.
    pub fn label(&self) -> String {
        format!("{}_{}_{}", self.geometry, self.nu, self.mode)
    }
}

impl fmt::Display for CaseSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

/// A named list of cases sharing solver settings.
#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentSpec {
    pub name: String,
    pub cases: Vec<CaseSpec>,
    pub e: f64,
    pub beta: f64,
    pub max_dofs_2d: usize,
    pub max_dofs_3d: usize,
    /// Refinement levels of uniform runs; `None` runs them to the dof budget.
    pub levels: Option<usize>,
    pub eigen: EigenOptions,
}

impl ExperimentSpec {
    /// `{0.35, 0.49, 0.5} x {uniform, adaptive}` on the 2D L-shape, followed
    /// by the adaptive 3D run at `nu = 0.35` when `include_3d` is set.
    pub fn paper(include_3d: bool) -> Self {
        let mut cases = Vec::new();
        for nu in [0.35, 0.49, 0.5] {
            for mode in [Mode::Uniform, Mode::Adaptive] {
                cases.push(CaseSpec::new(Geometry::LShape2d, nu, mode));
            }
        }
        if include_3d {
            cases.push(CaseSpec::new(Geometry::LShape3d, 0.35, Mode::Adaptive));
        }
        ExperimentSpec {
            name: "paper".into(),
            cases,
            e: 1.0,
            beta: 0.5,
            max_dofs_2d: 200_000,
            max_dofs_3d: 300_000,
            levels: None,
            eigen: EigenOptions::default(),
        }
    }

    /// Loop configuration for one case; the published value, when known,
    /// serves as the reference.
    pub fn config(&self, case: &CaseSpec) -> AdaptiveConfig {
        let mut c = AdaptiveConfig::new(case.geometry, case.nu, case.mode);
        c.e = self.e;
        c.beta = self.beta;
        c.variant = case.variant;
        c.max_dofs = if case.geometry.dim() == 2 { self.max_dofs_2d } else { self.max_dofs_3d };
        if let (Mode::Uniform, Some(levels)) = (case.mode, self.levels) {
            c.max_iters = levels + 1;
        }
        c.ref_omega = if self.e == 1.0 { reference_omega(case.geometry, case.nu) } else { None };
        c.eigen = self.eigen.clone();
        c
    }
}

/// Result of one case with the per-iteration concentration of marked cells.
#[derive(Debug)]
pub struct CaseOutcome {
    pub case: CaseSpec,
    pub config: AdaptiveConfig,
    pub result: std::result::Result<RunOutput, Aborted>,
    /// `(iteration, fraction of marked cells near the singularity)`.
    pub concentration: Vec<(usize, f64)>,
}

impl CaseOutcome {
    pub fn trace(&self) -> &crate::adaptive::AdaptiveTrace {
        match &self.result {
            Ok(out) => &out.trace,
            Err(ab) => &ab.trace,
        }
    }
}

/// Fraction of marked cells whose centroid lies within `r` of the singular set.
pub fn marked_fraction_near(geometry: Geometry, mesh: &Mesh, marks: &MarkSet, r: f64) -> Option<f64> {
    if marks.is_empty() {
        return None;
    }
    let mut near = 0usize;
    for &t in &marks.marked {
        if geometry.singular_distance(&mesh.centroid(t))? < r {
            near += 1;
        }
    }
    Some(near as f64 / marks.len() as f64)
}

/// Runs one case, recording the marked-cell concentration along the way.
pub fn run_case(case: &CaseSpec, config: &AdaptiveConfig) -> CaseOutcome {
    run_case_with(case, config, |_| {})
}

/// As [`run_case`], also forwarding every iteration to `observe`.
pub fn run_case_with(
    case: &CaseSpec,
    config: &AdaptiveConfig,
    mut observe: impl FnMut(&crate::adaptive::IterationView),
) -> CaseOutcome {
    let mut concentration = Vec::new();
    let result = run_with(config, |view| {
        if let Some(marks) = view.marks {
            if let Some(f) = marked_fraction_near(case.geometry, view.mesh, marks, CONCENTRATION_RADIUS) {
                concentration.push((view.record.iter, f));
            }
        }
        observe(view);
    });
    CaseOutcome { case: *case, config: config.clone(), result, concentration }
}

/// Runs all cases on at most `threads` workers; outcomes keep the case order.
pub fn run_cases(spec: &ExperimentSpec, threads: usize) -> Vec<CaseOutcome> {
    run_cases_with(spec, threads, |_, _| {})
}

/// As [`run_cases`], calling `done(index, outcome)` as each case finishes.
pub fn run_cases_with(
    spec: &ExperimentSpec,
    threads: usize,
    done: impl Fn(usize, &CaseOutcome) + Sync,
) -> Vec<CaseOutcome> {
    let n = spec.cases.len();
    let workers = threads.clamp(1, n.max(1));
    let next = AtomicUsize::new(0);
    let slots: Vec<Mutex<Option<CaseOutcome>>> = (0..n).map(|_| Mutex::new(None)).collect();
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= n {
                    break;
                }
                let case = &spec.cases[i];
                let outcome = run_case(case, &spec.config(case));
                done(i, &outcome);
                *slots[i].lock().expect("result slot") = Some(outcome);
            });
        }
    });
    slots.into_iter().map(|m| m.into_inner().expect("result slot").expect("every case ran")).collect()
}

/// Summary row of `table2.csv`.
#[derive(Clone, Debug, PartialEq)]
pub struct Table2Row {
    pub geometry: Geometry,
    pub nu: f64,
    pub omega_published: f64,
    pub n_adaptive: usize,
    pub omega_adaptive: f64,
    pub extrapolation: Option<Extrapolation>,
}

/// Summary row of `slopes.csv`.
#[derive(Clone, Debug, PartialEq)]
pub struct SlopeRow {
    pub case: CaseSpec,
    pub iterations: usize,
    pub final_n: usize,
    pub final_omega: f64,
    pub err_slope: f64,
    pub eta_sq_slope: f64,
    /// Extremes of the effectivity over the last six iterations.
    pub eff_min: f64,
    pub eff_max: f64,
}

/// One pass/fail comparison against a published value or range.
#[derive(Clone, Debug, PartialEq)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub lo: f64,
    pub hi: f64,
}

impl Check {
    pub fn passed(&self) -> bool {
        self.value >= self.lo && self.value <= self.hi
    }
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {}: {} in [{}, {}]",
            if self.passed() { "PASS" } else { "FAIL" },
            self.name,
            self.value,
            self.lo,
            self.hi
        )
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct PaperReport {
    pub table2: Vec<Table2Row>,
    pub slopes: Vec<SlopeRow>,
    pub checks: Vec<Check>,
}

pub const TABLE2_HEADER: &str = "geometry,nu,omega_published,N_adaptive,omega_adaptive,omega_extrapolated,C,alpha";
pub const SLOPES_HEADER: &str =
    "geometry,nu,mode,variant,iterations,final_N,final_omega,err_slope,eta_sq_slope,eff_min,eff_max";

fn tail_extremes(values: &[f64], count: usize) -> (f64, f64) {
    let tail = &values[values.len().saturating_sub(count)..];
    let min = tail.iter().copied().fold(f64::INFINITY, f64::min);
    let max = tail.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    (min, max)
}

fn slope_row(o: &CaseOutcome) -> Result<SlopeRow> {
    let trace = o.trace();
    let last = trace.last().ok_or_else(|| Error::Fit(format!("{} has no iterations", o.case)))?;
    let reference = o
        .config
        .ref_omega
        .ok_or_else(|| Error::Fit(format!("{} has no reference eigenfrequency", o.case)))?;
    let len = trace.records.len();
    let effs: Vec<f64> = trace.records.iter().map(|r| r.eff).collect();
    let (eff_min, eff_max) = tail_extremes(&effs, 6);
    Ok(SlopeRow {
        case: o.case,
        iterations: len,
        final_n: last.n,
        final_omega: last.omega_h,
        err_slope: fit_rate(trace, reference)?,
        eta_sq_slope: loglog_slope(&trace.ns(), &trace.eta_sqs(), 4.max(len.div_ceil(2)))?,
        eff_min,
        eff_max,
    })
}

/// Uniform-run extrapolation over the same window as the rate fits.
pub fn extrapolate_trace(trace: &crate::adaptive::AdaptiveTrace, dim: usize) -> Result<Extrapolation> {
    let len = trace.records.len();
    let start = len - 4.max(len.div_ceil(2)).min(len);
    extrapolate(&trace.ns()[start..], &trace.omegas()[start..], dim)
}

/// Builds the summary tables and checks from completed outcomes. Cases that
/// aborted contribute a failing check instead of rows.
pub fn paper_report(outcomes: &[CaseOutcome]) -> PaperReport {
    let mut report = PaperReport::default();
    let fail = |name: String| Check { name, value: f64::NAN, lo: 0.0, hi: 0.0 };
    for o in outcomes {
        if let Err(ab) = &o.result {
            report.checks.push(fail(format!("{} ({})", o.case, ab.error)));
            continue;
        }
        match slope_row(o) {
            Ok(row) => report.slopes.push(row),
            Err(e) => report.checks.push(fail(format!("{} ({e})", o.case))),
        }
    }

    for o in outcomes.iter().filter(|o| o.case.mode == Mode::Adaptive && o.result.is_ok()) {
        let Some(omega_published) = o.config.ref_omega else { continue };
        let last = o.trace().last().expect("completed run has iterations");
        let uniform = outcomes.iter().find(|u| {
            u.case.mode == Mode::Uniform && u.case.geometry == o.case.geometry && u.case.nu == o.case.nu
        });
        let extrapolation = uniform
            .filter(|u| u.result.is_ok() && u.trace().records.len() >= 4)
            .and_then(|u| extrapolate_trace(u.trace(), o.case.geometry.dim()).ok());
        report.table2.push(Table2Row {
            geometry: o.case.geometry,
            nu: o.case.nu,
            omega_published,
            n_adaptive: last.n,
            omega_adaptive: last.omega_h,
            extrapolation,
        });
    }

    for row in &report.table2 {
        let tol = if row.geometry.dim() == 2 { 1e-2 } else { 5e-2 };
        report.checks.push(Check {
            name: format!("{} nu={} adaptive omega_1", row.geometry, row.nu),
            value: row.omega_adaptive,
            lo: row.omega_published - tol,
            hi: row.omega_published + tol,
        });
        if let Some(x) = &row.extrapolation {
            report.checks.push(Check {
                name: format!("{} nu={} extrapolated omega_1", row.geometry, row.nu),
                value: x.omega,
                lo: row.omega_published - tol,
                hi: row.omega_published + tol,
            });
        }
    }
    for row in report.slopes.iter().filter(|r| r.case.geometry.dim() == 2) {
        let (lo, hi) = match row.case.mode {
            Mode::Adaptive => (-1.15, -0.85),
            Mode::Uniform => (-0.70, -0.47),
        };
        report.checks.push(Check { name: format!("{} error slope", row.case), value: row.err_slope, lo, hi });
        if row.case.mode == Mode::Adaptive {
            report.checks.push(Check {
                name: format!("{} eta^2 slope", row.case),
                value: row.eta_sq_slope,
                lo: -1.15,
                hi: -0.85,
            });
        }
    }
    report
}

impl PaperReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(Check::passed)
    }

    pub fn write_table2(&self, w: &mut impl Write) -> std::io::Result<()> {
        writeln!(w, "{TABLE2_HEADER}")?;
        for r in &self.table2 {
            let (xw, xc, xa) = match &r.extrapolation {
                Some(x) => (x.omega, x.c, x.alpha),
                None => (f64::NAN, f64::NAN, f64::NAN),
            };
            writeln!(
                w,
                "{},{},{},{},{},{},{},{}",
                r.geometry, r.nu, r.omega_published, r.n_adaptive, r.omega_adaptive, xw, xc, xa
            )?;
        }
        Ok(())
    }

    pub fn write_slopes(&self, w: &mut impl Write) -> std::io::Result<()> {
        writeln!(w, "{SLOPES_HEADER}")?;
        for r in &self.slopes {
            writeln!(
                w,
                "{},{},{},{},{},{},{},{},{},{},{}",
                r.case.geometry,
                r.case.nu,
                r.case.mode,
                r.case.variant,
                r.iterations,
                r.final_n,
                r.final_omega,
                r.err_slope,
                r.eta_sq_slope,
                r.eff_min,
                r.eff_max
            )?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_spec() -> ExperimentSpec {
        let mut spec = ExperimentSpec::paper(false);
        spec.cases.retain(|c| c.nu == 0.35);
        spec.max_dofs_2d = 6_000;
        spec
    }

    #[test]
    fn reference_lookup() {
        assert_eq!(reference_omega(Geometry::LShape2d, 0.49), Some(3.26873));
        assert_eq!(reference_omega(Geometry::LShape3d, 0.35), Some(3.01757));
        assert_eq!(reference_omega(Geometry::UnitSquare, 0.35), None);
    }

    #[test]
    fn paper_matrix_layout() {
        let spec = ExperimentSpec::paper(true);
        assert_eq!(spec.cases.len(), 7);
        assert_eq!(spec.cases[6].geometry, Geometry::LShape3d);
        assert_eq!(spec.cases[0].label(), "lshape2d_0.35_uniform");
        let c = spec.config(&spec.cases[6]);
        assert_eq!(c.max_dofs, 300_000);
        assert_eq!(c.ref_omega, Some(3.01757));
    }

    #[test]
    fn levels_bound_uniform_runs_only() {
        let mut spec = ExperimentSpec::paper(false);
        spec.levels = Some(3);
        assert_eq!(spec.config(&spec.cases[0]).max_iters, 4);
        assert_eq!(spec.config(&spec.cases[1]).max_iters, 200);
    }

    #[test]
    fn pool_preserves_order_and_matches_serial() {
        let spec = small_spec();
        let parallel = run_cases(&spec, 2);
        let serial = run_cases(&spec, 1);
        assert_eq!(parallel.len(), 2);
        for (p, s) in parallel.iter().zip(&serial) {
            assert_eq!(p.case, s.case);
            assert_eq!(p.trace().omegas(), s.trace().omegas());
            assert_eq!(p.concentration, s.concentration);
        }
        assert!(!parallel[1].concentration.is_empty());
    }

    #[test]
    fn report_tables_are_reproducible() {
        let spec = small_spec();
        let write = |r: &PaperReport| {
            let mut a = Vec::new();
            let mut b = Vec::new();
            r.write_table2(&mut a).unwrap();
            r.write_slopes(&mut b).unwrap();
            (a, b)
        };
        let first = paper_report(&run_cases(&spec, 1));
        let second = paper_report(&run_cases(&spec, 2));
        assert_eq!(write(&first), write(&second));
        assert_eq!(first.table2.len(), 1);
        assert_eq!(first.slopes.len(), 2);
        let (t2, _) = write(&first);
        assert!(String::from_utf8(t2).unwrap().starts_with(TABLE2_HEADER));
    }

    #[test]
    fn marked_fraction() {
        let m = Geometry::LShape2d.mesh().unwrap();
        let all = MarkSet::all(&m);
        let f = marked_fraction_near(Geometry::LShape2d, &m, &all, 10.0).unwrap();
        assert_eq!(f, 1.0);
        assert_eq!(marked_fraction_near(Geometry::LShape2d, &m, &MarkSet::new(vec![], 0.5), 1.0), None);
        assert_eq!(marked_fraction_near(Geometry::UnitSquare, &m, &all, 1.0), None);
    }

    #[test]
    fn failed_case_becomes_failing_check() {
        let mut spec = small_spec();
        spec.beta = 2.0;
        spec.cases.truncate(1);
        let report = paper_report(&run_cases(&spec, 1));
        assert!(!report.passed());
        assert!(report.slopes.is_empty());
    }
}
