//! Command-line front end: argument parsing, study execution and output files.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::PathBuf;

use clap::{Parser, ValueEnum};

use crate::assembly::{InterfaceMode, MixedMethod, ResidualWeight, StabilizationParams};
use crate::dg::DgParams;
use crate::error::{FemError, Result};
use crate::fem::Order;
use crate::verification::{
    convergence_study, crumpton_problem, default_meshes, smooth_problem, solve_problem, write_convergence_csv,
    write_field_dump, Method, ProblemSpec, StudyConfig,
};

/// Environment variable overriding the worker thread count.
pub const THREADS_ENV: &str = "DARCY_THREADS";

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    Galerkin,
    Mgls,
    Hvm,
    Cgls,
    Dg,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum InterfaceArg {
    Continuous,
    Constrained,
    #[value(name = "constrained_ns")]
    ConstrainedNs,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum WeightArg {
    /// Global scalar `|K|_inf`.
    GlobalNorm,
    /// Local conductivity tensor.
    Tensor,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ProblemArg {
    /// Two-material benchmark with interface at x = 0.
    Crumpton,
    /// K = I, p = exp(x) sin(y).
    Smooth,
}

/// Convergence studies for Darcy flow discretizations.
#[derive(Clone, Debug, Parser)]
#[command(name = "darcy", version, about)]
pub struct RunConfig {
    #[arg(long, value_enum)]
    pub method: MethodArg,
    /// Element degree (1 or 2).
    #[arg(long, default_value_t = 1)]
    pub order: usize,
    /// Elements per direction, comma separated; defaults to the standard family.
    #[arg(long, value_delimiter = ',')]
    pub meshes: Vec<usize>,
    #[arg(long, default_value_t = 1.0, allow_hyphen_values = true)]
    pub gamma: f64,
    #[arg(long, value_enum, default_value_t = InterfaceArg::Continuous)]
    pub interface: InterfaceArg,
    #[arg(long, value_enum, default_value_t = ProblemArg::Crumpton)]
    pub problem: ProblemArg,
    /// DG consistency parameter in [-1, 1].
    #[arg(long, allow_hyphen_values = true)]
    pub alpha: Option<f64>,
    /// DG penalty scale (edge penalty beta0 / h_e).
    #[arg(long, allow_hyphen_values = true)]
    pub beta0: Option<f64>,
    /// Weight of the Darcy-law residual term in the mixed methods.
    #[arg(long, value_enum, default_value_t = WeightArg::Tensor)]
    pub residual_weight: WeightArg,
    /// Output directory.
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
    /// Also write nodal fields for each mesh.
    #[arg(long)]
    pub dump_fields: bool,
}

impl RunConfig {
    pub fn interface_mode(&self) -> InterfaceMode {
        match self.interface {
            InterfaceArg::Continuous => InterfaceMode::Continuous,
            InterfaceArg::Constrained => InterfaceMode::Constrained,
            InterfaceArg::ConstrainedNs => InterfaceMode::ConstrainedNonsymmetric,
        }
    }

    /// Checks cross-flag consistency and builds the study settings.
    pub fn study(&self) -> Result<StudyConfig> {
        let order = Order::from_degree(self.order).map_err(|e| FemError::Config(e.to_string()))?;
        let mode = self.interface_mode();
        let is_dg = self.method == MethodArg::Dg;
        if !is_dg && (self.alpha.is_some() || self.beta0.is_some()) {
            return Err(FemError::Config("--alpha/--beta0 apply only to --method dg".into()));
        }
        let weight = match self.residual_weight {
            WeightArg::GlobalNorm => ResidualWeight::GlobalNorm,
            WeightArg::Tensor => ResidualWeight::Tensor,
        };
        let mixed = |m| Method::Mixed(StabilizationParams::for_method(m).with_residual_weight(weight));
        let method = match self.method {
            MethodArg::Galerkin => Method::Galerkin,
            MethodArg::Mgls => mixed(MixedMethod::Mgls),
            MethodArg::Hvm => mixed(MixedMethod::Hvm),
            MethodArg::Cgls => mixed(MixedMethod::Cgls),
            MethodArg::Dg => Method::Dg(DgParams::new(self.alpha.unwrap_or(-1.0), self.beta0)?),
        };
        if mode != InterfaceMode::Continuous && !matches!(method, Method::Mixed(_)) {
            return Err(FemError::Config(format!(
                "--interface {mode} requires a mixed method (mgls, hvm, cgls)"
            )));
        }
        let meshes = if self.meshes.is_empty() {
            default_meshes(order)
        } else {
            self.meshes.clone()
        };
        if meshes.contains(&0) || meshes.windows(2).any(|w| w[0] >= w[1]) {
            return Err(FemError::Config(format!(
                "--meshes must be positive and strictly increasing, got {meshes:?}"
            )));
        }
        Ok(StudyConfig::new(method, order, mode, &meshes))
    }

    pub fn problem(&self) -> Result<ProblemSpec> {
        match self.problem {
            ProblemArg::Crumpton => crumpton_problem(self.gamma).map_err(|e| FemError::Config(e.to_string())),
            ProblemArg::Smooth => Ok(smooth_problem()),
        }
    }
}

/// Process exit status.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExitStatus {
    Ok = 0,
    ConfigError = 1,
    NumericalFailure = 2,
}

impl ExitStatus {
    pub fn for_error(err: &FemError) -> Self {
        match err {
            FemError::Config(_) | FemError::Io(_) => ExitStatus::ConfigError,
            FemError::StudyFailure { source, .. } => Self::for_error(source),
            FemError::MisalignedInterface { .. } | FemError::InvalidMesh(_) | FemError::InvalidMaterial(_) => {
                ExitStatus::ConfigError
            }
            _ => ExitStatus::NumericalFailure,
        }
    }
}

/// Sizes the global thread pool from [`THREADS_ENV`] if set.
pub fn configure_threads() -> Result<()> {
    let Ok(raw) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let threads: usize = raw
        .trim()
        .parse()
        .map_err(|_| FemError::Config(format!("{THREADS_ENV} must be a positive integer, got '{raw}'")))?;
    if threads == 0 {
        return Err(FemError::Config(format!("{THREADS_ENV} must be positive")));
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| FemError::Config(format!("thread pool: {e}")))
}

/// Runs the study and writes `convergence.csv` (and field dumps) into `out`.
pub fn run(config: &RunConfig) -> Result<PathBuf> {
    let study = config.study()?;
    let problem = config.problem()?;
    fs::create_dir_all(&config.out)?;
    let reports = convergence_study(&problem, &study)?;
    let path = config.out.join("convergence.csv");
    write_convergence_csv(BufWriter::new(File::create(&path)?), &study, &reports)?;
    for r in &reports {
        log::info!(
            "n={} err_p={:.3e} err_u={:.3e} err_divu={:.3e}",
            r.n,
            r.errors.err_p,
            r.errors.err_u,
            r.errors.err_divu
        );
    }
    if config.dump_fields {
        for &n in &study.meshes {
            let mesh = problem.mesh(n, study.order)?;
            let outcome = solve_problem(&mesh, &problem, &study.method, study.mode)
                .map_err(|e| FemError::StudyFailure { n, source: Box::new(e) })?;
            let file = BufWriter::new(File::create(config.out.join(format!("fields_n{n}.csv")))?);
            write_field_dump(file, &mesh, &outcome.solution, &problem)?;
        }
    }
    Ok(path)
}

/// Full entry point behind `main`: parse, run, map errors to exit codes.
pub fn main_with_args<I, T>(args: I) -> ExitStatus
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let config = match RunConfig::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitStatus::ConfigError
            } else {
                ExitStatus::Ok
            };
        }
    };
    if let Err(e) = configure_threads() {
        eprintln!("error: {e}");
        return ExitStatus::ConfigError;
    }
    match run(&config) {
        Ok(path) => {
            log::info!("wrote {}", path.display());
            ExitStatus::Ok
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitStatus::for_error(&e)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(args: &[&str]) -> RunConfig {
        RunConfig::try_parse_from(std::iter::once("darcy").chain(args.iter().copied())).unwrap()
    }

    #[test]
    fn defaults_and_families() {
        let c = parse(&["--method", "cgls", "--order", "2"]);
        assert_eq!(c.study().unwrap().meshes, vec![4, 8, 16, 32]);
        let c = parse(&["--method", "hvm", "--meshes", "8,16"]);
        assert_eq!(c.study().unwrap().meshes, vec![8, 16]);
        assert_eq!(c.interface_mode(), InterfaceMode::Continuous);
        let c = parse(&["--method", "cgls", "--interface", "constrained_ns"]);
        assert_eq!(c.interface_mode(), InterfaceMode::ConstrainedNonsymmetric);
    }

    #[test]
    fn invalid_combinations() {
        assert!(parse(&["--method", "galerkin", "--interface", "constrained"]).study().is_err());
        assert!(parse(&["--method", "dg", "--interface", "constrained"]).study().is_err());
        assert!(parse(&["--method", "mgls", "--alpha", "1"]).study().is_err());
        assert!(parse(&["--method", "dg", "--alpha", "2"]).study().is_err());
        assert!(parse(&["--method", "dg", "--alpha", "-1", "--beta0", "5"]).study().is_ok());
        assert!(parse(&["--method", "mgls", "--order", "3"]).study().is_err());
        assert!(parse(&["--method", "mgls", "--meshes", "16,8"]).study().is_err());
        assert!(parse(&["--method", "mgls", "--gamma", "-1"]).problem().is_err());
    }

    #[test]
    fn exit_status_mapping() {
        assert_eq!(
            ExitStatus::for_error(&FemError::Config("x".into())),
            ExitStatus::ConfigError
        );
        let wrapped = FemError::StudyFailure {
            n: 8,
            source: Box::new(FemError::SingularSystem("pivot".into())),
        };
        assert_eq!(ExitStatus::for_error(&wrapped), ExitStatus::NumericalFailure);
        assert_eq!(
            main_with_args(["darcy", "--method", "nope"]),
            ExitStatus::ConfigError
        );
    }
}
