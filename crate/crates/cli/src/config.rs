//! Run settings from flags and an optional TOML file; flags win.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::Args;
use elastic_afem::adaptive::{AdaptiveConfig, Mode, VariantChoice};
use elastic_afem::eigensolver::EigenOptions;
use elastic_afem::mesh::Geometry;
use serde::Deserialize;

/// Flags of `run`. Every field is optional so that a config file can fill it.
#[derive(Args, Debug, Default, Clone)]
pub struct RunArgs {
    /// TOML file with the same keys as the long flags.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// unit_square, lshape2d, unit_cube or lshape3d.
    #[arg(long)]
    pub geometry: Option<String>,
    /// Poisson ratio in (0, 0.5].
    #[arg(long)]
    pub nu: Option<f64>,
    /// Young's modulus [default: 1].
    #[arg(long)]
    pub e_modulus: Option<f64>,
    /// adaptive or uniform [default: adaptive].
    #[arg(long)]
    pub mode: Option<String>,
    /// standard, limit or auto [default: auto].
    #[arg(long)]
    pub variant: Option<String>,
    /// Maximal-marking fraction in (0, 1) [default: 0.5].
    #[arg(long)]
    pub beta: Option<f64>,
    /// Stop before solving a mesh with more unknowns [default: 2e5 in 2D, 3e5 in 3D].
    #[arg(long)]
    pub max_dofs: Option<usize>,
    /// Number of refinements; without --max-dofs this lifts the dof budget.
    #[arg(long)]
    pub levels: Option<usize>,
    /// Eigenpairs computed per mesh [default: 3].
    #[arg(long)]
    pub num_eigs: Option<usize>,
    /// One-based index of the tracked eigenpair [default: 1].
    #[arg(long)]
    pub eig_index: Option<usize>,
    /// Reference eigenfrequency; extrapolated from a uniform run when absent.
    #[arg(long)]
    pub ref_omega: Option<f64>,
    /// Write a VTK snapshot every k iterations.
    #[arg(long)]
    pub vtk_every: Option<usize>,
    /// Seed of the eigensolver start vector [default: 42].
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output root [default: out].
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Relative Ritz residual tolerance [default: 1e-10].
    #[arg(long)]
    pub si_tol: Option<f64>,
    /// Maximal number of eigensolver restarts [default: 50].
    #[arg(long)]
    pub si_maxiter: Option<usize>,
}

/// Contents of a `--config` file.
#[derive(Deserialize, Debug, Default, Clone, PartialEq)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct FileConfig {
    pub geometry: Option<String>,
    pub nu: Option<f64>,
    pub e_modulus: Option<f64>,
    pub mode: Option<String>,
    pub variant: Option<String>,
    pub beta: Option<f64>,
    pub max_dofs: Option<usize>,
    pub levels: Option<usize>,
    pub num_eigs: Option<usize>,
    pub eig_index: Option<usize>,
    pub ref_omega: Option<f64>,
    pub vtk_every: Option<usize>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub si_tol: Option<f64>,
    pub si_maxiter: Option<usize>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("cannot read {}: {e}", path.display()))?;
        toml::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))
    }
}

/// Fully resolved settings of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSettings {
    pub config: AdaptiveConfig,
    pub levels: Option<usize>,
    pub vtk_every: Option<usize>,
    pub out: PathBuf,
}

impl RunSettings {
    /// Merges flags over the file and fills in defaults.
    pub fn resolve(args: &RunArgs) -> Result<Self, String> {
        let file = match &args.config {
            Some(p) => FileConfig::load(p)?,
            None => FileConfig::default(),
        };
        macro_rules! pick {
            ($f:ident) => {
                args.$f.clone().or(file.$f.clone())
            };
        }
        let geometry: Geometry = pick!(geometry)
            .ok_or("missing --geometry")?
            .parse()
            .map_err(|e: elastic_afem::Error| e.to_string())?;
        let nu = pick!(nu).ok_or("missing --nu")?;
        let mode: Mode = match pick!(mode) {
            Some(s) => s.parse().map_err(|e: elastic_afem::Error| e.to_string())?,
            None => Mode::Adaptive,
        };
        let mut config = AdaptiveConfig::new(geometry, nu, mode);
        if let Some(v) = pick!(variant) {
            config.variant = v.parse::<VariantChoice>().map_err(|e| e.to_string())?;
        }
        config.e = pick!(e_modulus).unwrap_or(config.e);
        config.beta = pick!(beta).unwrap_or(config.beta);
        config.eig_index = pick!(eig_index).unwrap_or(config.eig_index);
        config.ref_omega = pick!(ref_omega);
        let levels = pick!(levels);
        match (pick!(max_dofs), levels) {
            (Some(m), _) => config.max_dofs = m,
            (None, Some(_)) => config.max_dofs = usize::MAX,
            (None, None) => {}
        }
        if let Some(l) = levels {
            config.max_iters = l + 1;
        }
        let defaults = EigenOptions::default();
        config.eigen = EigenOptions {
            num_eigs: pick!(num_eigs).unwrap_or(defaults.num_eigs),
            tol: pick!(si_tol).unwrap_or(defaults.tol),
            max_restarts: pick!(si_maxiter).unwrap_or(defaults.max_restarts),
            seed: pick!(seed).unwrap_or(defaults.seed),
            krylov_dim: None,
        };
        let vtk_every = pick!(vtk_every);
        if vtk_every == Some(0) {
            return Err("--vtk-every must be positive".into());
        }
        Ok(RunSettings { config, levels, vtk_every, out: pick!(out).unwrap_or_else(|| PathBuf::from("out")) })
    }

    /// Case directory `<out>/<geometry>_<nu>_<mode>`.
    pub fn case_dir(&self) -> PathBuf {
        self.out.join(format!("{}_{}_{}", self.config.geometry, self.config.nu, self.config.mode))
    }
}

/// The resolved configuration in config-file syntax, so that `meta.txt`
/// can be fed back through `--config`.
pub fn render_settings(config: &AdaptiveConfig, levels: Option<usize>, vtk_every: Option<usize>, out: &Path) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "geometry = \"{}\"", config.geometry);
    let _ = writeln!(s, "nu = {:?}", config.nu);
    let _ = writeln!(s, "e-modulus = {:?}", config.e);
    let _ = writeln!(s, "mode = \"{}\"", config.mode);
    let _ = writeln!(s, "variant = \"{}\"", config.variant);
    let _ = writeln!(s, "beta = {:?}", config.beta);
    if config.max_dofs != usize::MAX {
        let _ = writeln!(s, "max-dofs = {}", config.max_dofs);
    }
    if let Some(l) = levels {
        let _ = writeln!(s, "levels = {l}");
    }
    let _ = writeln!(s, "num-eigs = {}", config.eigen.num_eigs);
    let _ = writeln!(s, "eig-index = {}", config.eig_index);
    if let Some(w) = config.ref_omega {
        let _ = writeln!(s, "ref-omega = {w:?}");
    }
    if let Some(k) = vtk_every {
        let _ = writeln!(s, "vtk-every = {k}");
    }
    let _ = writeln!(s, "seed = {}", config.eigen.seed);
    let _ = writeln!(s, "out = {:?}", out.display().to_string());
    let _ = writeln!(s, "si-tol = {:?}", config.eigen.tol);
    let _ = writeln!(s, "si-maxiter = {}", config.eigen.max_restarts);
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn args(geometry: &str, nu: f64) -> RunArgs {
        RunArgs { geometry: Some(geometry.into()), nu: Some(nu), ..RunArgs::default() }
    }

    #[test]
    fn defaults() {
        let s = RunSettings::resolve(&args("lshape3d", 0.35)).unwrap();
        assert_eq!(s.config.max_dofs, 300_000);
        assert_eq!(s.config.mode, Mode::Adaptive);
        assert_eq!(s.config.eigen, EigenOptions::default());
        assert_eq!(s.case_dir(), PathBuf::from("out/lshape3d_0.35_adaptive"));
    }

    #[test]
    fn levels_lift_the_budget() {
        let mut a = args("lshape2d", 0.5);
        a.levels = Some(6);
        a.mode = Some("uniform".into());
        let s = RunSettings::resolve(&a).unwrap();
        assert_eq!((s.config.max_iters, s.config.max_dofs), (7, usize::MAX));
        a.max_dofs = Some(1000);
        assert_eq!(RunSettings::resolve(&a).unwrap().config.max_dofs, 1000);
    }

    #[test]
    fn missing_and_invalid_values() {
        assert!(RunSettings::resolve(&RunArgs::default()).unwrap_err().contains("geometry"));
        let mut a = args("annulus", 0.3);
        assert!(RunSettings::resolve(&a).is_err());
        a.geometry = Some("lshape2d".into());
        a.variant = Some("weird".into());
        assert!(RunSettings::resolve(&a).is_err());
    }

    #[test]
    fn rendered_settings_parse_back() {
        let mut a = args("lshape2d", 0.49);
        a.ref_omega = Some(3.26873);
        a.vtk_every = Some(2);
        let s = RunSettings::resolve(&a).unwrap();
        let text = render_settings(&s.config, s.levels, s.vtk_every, &s.out);
        let file: FileConfig = toml::from_str(&text).unwrap();
        assert_eq!(file.nu, Some(0.49));
        assert_eq!(file.ref_omega, Some(3.26873));
        assert_eq!(file.max_dofs, Some(200_000));
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("meta.txt");
        std::fs::write(&path, &text).unwrap();
        let back = RunSettings::resolve(&RunArgs { config: Some(path), ..RunArgs::default() }).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn flags_override_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        std::fs::write(&path, "geometry = \"unit_square\"\nnu = 0.3\nbeta = 0.4\n").unwrap();
        let a = RunArgs { config: Some(path.clone()), nu: Some(0.45), ..RunArgs::default() };
        let s = RunSettings::resolve(&a).unwrap();
        assert_eq!((s.config.nu, s.config.beta), (0.45, 0.4));
        std::fs::write(&path, "geometry = \"unit_square\"\nnu = 0.3\ncolour = 1\n").unwrap();
        assert!(RunSettings::resolve(&RunArgs { config: Some(path), ..RunArgs::default() }).is_err());
    }
}
