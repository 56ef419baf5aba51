mod config;
mod output;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Mutex;

use clap::{Args, Parser, Subcommand, ValueEnum};
use elastic_afem::adaptive::{fit_rate, loglog_slope, run, run_with, AdaptiveConfig, AdaptiveTrace, Mode};
use elastic_afem::experiment::{extrapolate_trace, paper_report, run_cases_with, ExperimentSpec};
use elastic_afem::selftest::{run_selftest, Fault, SelftestOptions};

use config::{render_settings, RunArgs, RunSettings};

#[derive(Parser, Debug)]
#[command(name = "elastic-afem", version, about = "Adaptive mixed finite elements for elasticity eigenvalues")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run the adaptive or uniform loop for one configuration.
    Run(RunArgs),
    /// Reproduce the L-shape studies and write table2.csv and slopes.csv.
    Paper(PaperArgs),
    /// Quick consistency checks on tiny meshes.
    Selftest(SelftestArgs),
}

#[derive(Args, Debug)]
struct PaperArgs {
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Skip the 3D L-shape run.
    #[arg(long)]
    no_3d: bool,
    #[arg(long, default_value_t = 0.5)]
    beta: f64,
    #[arg(long, default_value_t = 200_000)]
    max_dofs_2d: usize,
    #[arg(long, default_value_t = 300_000)]
    max_dofs_3d: usize,
    #[arg(long, default_value_t = 3)]
    num_eigs: usize,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long, default_value_t = 1e-10)]
    si_tol: f64,
    #[arg(long, default_value_t = 50)]
    si_maxiter: usize,
}

#[derive(Args, Debug)]
struct SelftestArgs {
    /// List every individual check.
    #[arg(long)]
    verbose: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Introduce a known defect to confirm that the checks catch it.
    #[arg(long, value_enum)]
    inject_fault: Option<FaultArg>,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum FaultArg {
    FlipTraceCoefficient,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(args) => cmd_run(&args),
        Command::Paper(args) => cmd_paper(&args),
        Command::Selftest(args) => cmd_selftest(&args),
    };
    match result {
        Ok(code) => code,
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::FAILURE
        }
    }
}

fn create_dir(dir: &Path) -> Result<(), String> {
    std::fs::create_dir_all(dir).map_err(|e| format!("cannot create {}: {e}", dir.display()))
}

fn io_context(what: &Path) -> impl Fn(std::io::Error) -> String + '_ {
    move |e| format!("cannot write {}: {e}", what.display())
}

fn slope_lines(trace: &AdaptiveTrace, reference: Option<f64>) -> Vec<String> {
    let mut lines = Vec::new();
    let len = trace.records.len();
    if let Some(w) = reference {
        if let Ok(s) = fit_rate(trace, w) {
            lines.push(format!("error slope vs N: {s:.4}"));
        }
    }
    if let Ok(s) = loglog_slope(&trace.ns(), &trace.eta_sqs(), 4.max(len.div_ceil(2))) {
        lines.push(format!("eta^2 slope vs N: {s:.4}"));
    }
    lines
}

/// Reference value for the error columns: the flag, else an extrapolation
/// of this run (uniform mode) or of a companion uniform run.
fn reference_for(settings: &RunSettings, trace: &AdaptiveTrace, dir: &Path) -> Result<Option<(f64, String)>, String> {
    if let Some(w) = settings.config.ref_omega {
        return Ok(Some((w, "given".into())));
    }
    let dim = settings.config.geometry.dim();
    let uniform_trace = if settings.config.mode == Mode::Uniform {
        trace.clone()
    } else {
        let mut companion = AdaptiveConfig { mode: Mode::Uniform, ..settings.config.clone() };
        if companion.max_dofs == usize::MAX {
            companion.max_iters = usize::MAX;
            companion.max_dofs = trace.last().map_or(0, |r| r.n);
        }
        eprintln!("running companion uniform refinement for the reference value");
        let t = match run(&companion) {
            Ok(out) => out.trace,
            Err(ab) => ab.trace,
        };
        let path = dir.join("reference_uniform.csv");
        let mut f = std::fs::File::create(&path).map_err(io_context(&path))?;
        t.write_csv(&mut f).map_err(io_context(&path))?;
        t
    };
    if uniform_trace.records.len() < 4 {
        eprintln!("warning: fewer than 4 uniform levels, no reference value");
        return Ok(None);
    }
    match extrapolate_trace(&uniform_trace, dim) {
        Ok(x) => Ok(Some((x.omega, format!("extrapolated, C = {}, alpha = {}", x.c, x.alpha)))),
        Err(e) => {
            eprintln!("warning: {e}");
            Ok(None)
        }
    }
}

fn cmd_run(args: &RunArgs) -> Result<ExitCode, String> {
    let settings = RunSettings::resolve(args)?;
    let dir = settings.case_dir();
    create_dir(&dir)?;
    let cfg = &settings.config;
    let snapshot_error = Mutex::new(None);
    let result = run_with(cfg, |view| {
        let r = view.record;
        eprintln!("iter {:>3}  N {:>8}  omega_h {:.8}  eta^2 {:.4e}  marked {}", r.iter, r.n, r.omega_h, r.eta_sq, r.num_marked);
        if let Some(k) = settings.vtk_every {
            if r.iter % k == 0 {
                let path = dir.join(format!("iter_{:04}.vtk", r.iter));
                let u = &view.solution.u_coeffs[cfg.eig_index - 1];
                if let Err(e) = output::write_state(&path, &format!("iteration {}", r.iter), view.mesh, u, view.field, view.marks) {
                    *snapshot_error.lock().expect("snapshot error slot") = Some(format!("{}: {e}", path.display()));
                }
            }
        }
    });
    if let Some(e) = snapshot_error.into_inner().expect("snapshot error slot") {
        eprintln!("warning: snapshot not written: {e}");
    }
    let settings_text = render_settings(cfg, settings.levels, settings.vtk_every, &settings.out);
    let out = match result {
        Ok(out) => out,
        Err(aborted) => {
            output::write_trace(&dir, &aborted.trace).map_err(io_context(&dir))?;
            let summary = vec![format!("aborted after {} iterations: {}", aborted.trace.records.len(), aborted.error)];
            output::write_meta(&dir, &settings_text, &summary).map_err(io_context(&dir))?;
            return Err(aborted.to_string());
        }
    };

    let reference = reference_for(&settings, &out.trace, &dir)?;
    let trace = match &reference {
        Some((w, _)) => out.trace.with_reference(*w),
        None => out.trace.clone(),
    };
    output::write_trace(&dir, &trace).map_err(io_context(&dir))?;
    let last = trace.last().expect("completed run has iterations");
    let u = &out.solution.u_coeffs[cfg.eig_index - 1];
    let vtk = dir.join("final.vtk");
    output::write_state(&vtk, &format!("final mesh, iteration {}", last.iter), &out.mesh, u, &out.field, None)
        .map_err(io_context(&vtk))?;

    let mut summary = vec![
        format!("iterations: {}", trace.records.len()),
        format!("final N: {}", last.n),
        format!("final omega_h: {}", last.omega_h),
        format!("final eta: {}", out.field.global()),
    ];
    match &reference {
        Some((w, how)) => summary.push(format!("reference omega: {w} ({how})")),
        None => summary.push("reference omega: none".into()),
    }
    summary.extend(slope_lines(&trace, reference.as_ref().map(|r| r.0)));
    summary.extend(trace.warnings.iter().map(|w| format!("warning: {w}")));
    output::write_meta(&dir, &settings_text, &summary).map_err(io_context(&dir))?;
    for line in &summary {
        println!("{line}");
    }
    println!("output: {}", dir.display());
    Ok(ExitCode::SUCCESS)
}

/// Worker count: `ELASTIC_AFEM_THREADS` when set, else the available parallelism.
fn worker_threads() -> Result<usize, String> {
    match std::env::var("ELASTIC_AFEM_THREADS") {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(n),
            _ => Err(format!("ELASTIC_AFEM_THREADS must be a positive integer, got `{v}`")),
        },
        Err(_) => Ok(std::thread::available_parallelism().map_or(1, |n| n.get())),
    }
}

fn cmd_paper(args: &PaperArgs) -> Result<ExitCode, String> {
    let mut spec = ExperimentSpec::paper(!args.no_3d);
    spec.beta = args.beta;
    spec.max_dofs_2d = args.max_dofs_2d;
    spec.max_dofs_3d = args.max_dofs_3d;
    spec.eigen.num_eigs = args.num_eigs;
    spec.eigen.seed = args.seed;
    spec.eigen.tol = args.si_tol;
    spec.eigen.max_restarts = args.si_maxiter;
    create_dir(&args.out)?;
    let threads = worker_threads()?;
    eprintln!("running {} cases on {} worker(s)", spec.cases.len(), threads);

    let write_errors = Mutex::new(Vec::new());
    let outcomes = run_cases_with(&spec, threads, |_, o| {
        let dir = args.out.join(o.case.label());
        let written = (|| -> Result<(), String> {
            create_dir(&dir)?;
            output::write_trace(&dir, o.trace()).map_err(io_context(&dir))?;
            let mut summary = Vec::new();
            if let Ok(out) = &o.result {
                let u = &out.solution.u_coeffs[o.config.eig_index - 1];
                let vtk = dir.join("final.vtk");
                output::write_state(&vtk, &o.case.label(), &out.mesh, u, &out.field, None).map_err(io_context(&vtk))?;
                summary.extend(slope_lines(o.trace(), o.config.ref_omega));
            }
            if let Err(ab) = &o.result {
                summary.push(format!("aborted: {}", ab.error));
            }
            let settings = render_settings(&o.config, None, None, &args.out);
            output::write_meta(&dir, &settings, &summary).map_err(io_context(&dir))
        })();
        match written {
            Ok(()) => eprintln!("finished {}", o.case),
            Err(e) => write_errors.lock().expect("error list").push(e),
        }
    });
    let errors = write_errors.into_inner().expect("error list");
    if !errors.is_empty() {
        return Err(errors.join("; "));
    }

    let report = paper_report(&outcomes);
    write_file(&args.out.join("table2.csv"), |w| report.write_table2(w))?;
    write_file(&args.out.join("slopes.csv"), |w| report.write_slopes(w))?;
    for check in &report.checks {
        println!("{check}");
    }
    let failed = outcomes.iter().any(|o| o.result.is_err());
    Ok(if report.passed() && !failed { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}

fn write_file(
    path: &Path,
    body: impl FnOnce(&mut std::io::BufWriter<std::fs::File>) -> std::io::Result<()>,
) -> Result<(), String> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path).map_err(io_context(path))?);
    body(&mut w).and_then(|_| std::io::Write::flush(&mut w)).map_err(io_context(path))
}

fn cmd_selftest(args: &SelftestArgs) -> Result<ExitCode, String> {
    let opts = SelftestOptions {
        fault: args.inject_fault.map(|f| match f {
            FaultArg::FlipTraceCoefficient => Fault::FlipTraceCoefficient,
        }),
        seed: args.seed,
    };
    let report = run_selftest(&opts);
    for group in &report.groups {
        let status = if group.passed() { "ok  " } else { "FAIL" };
        println!("{status} {} ({} checks)", group.name, group.checks.len());
        if args.verbose {
            for c in &group.checks {
                println!("     {c}");
            }
        }
    }
    if report.passed() {
        return Ok(ExitCode::SUCCESS);
    }
    eprintln!("failed checks:");
    for (group, c) in report.failures() {
        eprintln!("  {group}: {c}");
    }
    Ok(ExitCode::FAILURE)
}
