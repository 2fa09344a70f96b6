//! Batch front-end: configures cases, runs solves, certificates and
//! refinement studies, and writes JSON reports with CSV tables.

pub mod commands;
pub mod config;
pub mod report;

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use mapgal::operator::JacobianMode;
use mapgal::problems::{CaseKind, ForcingKind};

pub use commands::{execute, CommandKind, Outcome, EXIT_NOT_CONVERGED};
pub use config::RunConfig;
pub use report::{RunReport, SCHEMA_VERSION};

/// Exit code for configuration, input and I/O errors.
pub const EXIT_CONFIG: i32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] mapgal::Error),
    #[error("i/o error: {0}")]
    Io(String),
    #[error("internal error: {0}")]
    Internal(String),
}

#[derive(Debug, Parser)]
#[command(
    name = "mapgal",
    version,
    about = "Nonlinear Petrov-Galerkin solves with mapped-coercivity certificates"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve every level, then certify and report.
    Run(Overrides),
    /// Probe mapped coercivity on the finest level and print the verdict.
    Certify(Overrides),
    /// Inf-sup constants of an affine case on every level.
    Infsup(Overrides),
    /// Refinement study: solve every level and check that increments decrease.
    Converge(Overrides),
}

impl Command {
    fn split(self) -> (CommandKind, Overrides) {
        match self {
            Command::Run(o) => (CommandKind::Run, o),
            Command::Certify(o) => (CommandKind::Certify, o),
            Command::Infsup(o) => (CommandKind::Infsup, o),
            Command::Converge(o) => (CommandKind::Converge, o),
        }
    }
}

/// Flags mirroring the config file keys; a flag overrides the file.
#[derive(Debug, Default, Args)]
pub struct Overrides {
    /// TOML config file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_parser = parse_case)]
    pub case: Option<CaseKind>,
    /// Comma-separated refinement levels.
    #[arg(long, value_delimiter = ',')]
    pub refinements: Option<Vec<u32>>,
    #[arg(long)]
    pub levels: Option<usize>,
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long)]
    pub degree: Option<usize>,
    #[arg(long)]
    pub p: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// JSON report path; the CSV table is written next to it.
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[arg(long, alias = "f", value_parser = parse_forcing)]
    pub forcing: Option<ForcingKind>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub load: Option<f64>,
    #[arg(long)]
    pub nu: Option<f64>,
    #[arg(long)]
    pub lid: Option<f64>,
    #[arg(long)]
    pub saturation: Option<f64>,
    #[arg(long)]
    pub tol_residual: Option<f64>,
    #[arg(long)]
    pub max_newton_its: Option<usize>,
    /// Comma-separated damping factors.
    #[arg(long, value_delimiter = ',')]
    pub damping_schedule: Option<Vec<f64>>,
    #[arg(long)]
    pub homotopy_steps: Option<usize>,
    #[arg(long)]
    pub multistart: Option<usize>,
    #[arg(long, value_parser = parse_jacobian)]
    pub jacobian: Option<JacobianMode>,
    #[arg(long)]
    pub directions: Option<usize>,
    #[arg(long)]
    pub radius_min: Option<f64>,
    #[arg(long)]
    pub radius_max: Option<f64>,
    #[arg(long)]
    pub radius_count: Option<usize>,
    #[arg(long)]
    pub surplus_samples: Option<usize>,
}

fn parse_case(s: &str) -> Result<CaseKind, String> {
    s.parse().map_err(|e: mapgal::Error| e.to_string())
}

fn parse_forcing(s: &str) -> Result<ForcingKind, String> {
    s.parse().map_err(|e: mapgal::Error| e.to_string())
}

fn parse_jacobian(s: &str) -> Result<JacobianMode, String> {
    serde_json::from_value(serde_json::Value::String(s.to_string()))
        .map_err(|_| format!("unknown jacobian mode {s:?}, expected analytic or finite-difference"))
}

impl Overrides {
    /// Loads the config file, if any, and applies the flags on top.
    pub fn resolve(self) -> Result<RunConfig, CliError> {
        let mut c = match &self.config {
            Some(path) => RunConfig::from_file(path)?,
            None => RunConfig::default(),
        };
        macro_rules! set {
            ($($flag:ident => $($field:ident).+),* $(,)?) => {
                $(if let Some(v) = self.$flag { c.$($field).+ = v; })*
            };
        }
        macro_rules! set_some {
            ($($flag:ident => $($field:ident).+),* $(,)?) => {
                $(if let Some(v) = self.$flag { c.$($field).+ = Some(v); })*
            };
        }
        if self.refinements.is_some() || self.levels.is_some() {
            c.refinements = None;
            c.levels = None;
        }
        set!(case => case, degree => degree, p => p, seed => seed);
        set!(forcing => forcing.kind, lambda => forcing.lambda, load => forcing.load);
        set!(nu => flow.nu, lid => flow.lid, saturation => kirchhoff.saturation);
        set!(
            directions => certify.directions,
            radius_min => certify.radius_min,
            radius_max => certify.radius_max,
            radius_count => certify.radius_count,
            surplus_samples => certify.surplus_samples,
        );
        set_some!(refinements => refinements, levels => levels, dim => dim, output => output);
        set_some!(
            tol_residual => solver.tol_residual,
            max_newton_its => solver.max_newton_its,
            damping_schedule => solver.damping_schedule,
            homotopy_steps => solver.homotopy_steps,
            multistart => solver.multistart,
            jacobian => solver.jacobian,
        );
        Ok(c)
    }
}

/// Caps the global thread pool at `MG_THREADS` when set.
fn configure_threads() -> Result<(), CliError> {
    let Ok(v) = std::env::var("MG_THREADS") else {
        return Ok(());
    };
    let n: usize = v.trim().parse().ok().filter(|&n| n > 0).ok_or_else(|| {
        CliError::Config(format!("MG_THREADS must be a positive integer, got {v:?}"))
    })?;
    let _ = rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global();
    Ok(())
}

/// Writes the JSON report and CSV table, or prints the JSON when no output
/// path is configured.
pub fn emit(outcome: &Outcome) -> Result<(), CliError> {
    let json = outcome.report.to_json()?;
    match &outcome.report.config.output {
        Some(path) => {
            report::write_atomic(path, &json)?;
            if let Some(csv) = &outcome.csv {
                report::write_atomic(&path.with_extension("csv"), csv)?;
            }
            let mut out = std::io::stdout().lock();
            for line in &outcome.summary {
                let _ = writeln!(out, "{line}");
            }
        }
        None => {
            for line in &outcome.summary {
                eprintln!("{line}");
            }
            let mut out = std::io::stdout().lock();
            match out.write_all(json.as_bytes()).and_then(|_| out.flush()) {
                Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => {
                    return Err(CliError::Io(e.to_string()))
                }
                _ => {}
            }
        }
    }
    Ok(())
}

/// Runs one resolved command and returns its exit code.
pub fn run_command(command: CommandKind, config: &RunConfig) -> Result<i32, CliError> {
    configure_threads()?;
    let outcome = execute(command, config)?;
    emit(&outcome)?;
    Ok(outcome.report.exit_code)
}

/// Parses `args` (program name first), runs the command and returns the exit code.
pub fn run_cli<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { 0 };
        }
    };
    let (kind, overrides) = cli.command.split();
    match overrides.resolve().and_then(|c| run_command(kind, &c)) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_CONFIG
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn resolve(args: &[&str]) -> RunConfig {
        let cli = Cli::try_parse_from(args).unwrap();
        cli.command.split().1.resolve().unwrap()
    }

    #[test]
    fn flags_mirror_config_keys() {
        let c = resolve(&[
            "mapgal",
            "run",
            "--case",
            "semilinear",
            "--p",
            "2",
            "--f",
            "sin",
            "--lambda",
            "5",
            "--levels",
            "4",
            "--jacobian",
            "finite-difference",
            "--damping-schedule",
            "1,0.5",
        ]);
        assert_eq!(c.case, CaseKind::Semilinear);
        assert_eq!(c.forcing.kind, ForcingKind::Sin);
        assert_eq!(c.levels, Some(4));
        assert_eq!(c.solver.jacobian, Some(JacobianMode::FiniteDifference));
        assert_eq!(c.solver.damping_schedule, Some(vec![1.0, 0.5]));
        assert_eq!(c.resolved_refinements().unwrap().len(), 4);
    }

    #[test]
    fn flags_override_the_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.toml");
        std::fs::write(
            &path,
            "case = \"mixed-poisson\"\nrefinements = [2, 3]\n[forcing]\nkind = \"zero\"\n",
        )
        .unwrap();
        let c = resolve(&[
            "mapgal",
            "run",
            "--config",
            path.to_str().unwrap(),
            "--levels",
            "3",
        ]);
        assert_eq!(c.case, CaseKind::MixedPoisson);
        assert_eq!(c.forcing.kind, ForcingKind::Zero);
        assert_eq!(c.refinements, None);
        assert_eq!(c.resolved_refinements().unwrap(), vec![3, 4, 5]);
    }

    #[test]
    fn usage_errors_exit_one() {
        assert_eq!(run_cli(["mapgal", "run", "--case", "nope"]), EXIT_CONFIG);
        assert_eq!(run_cli(["mapgal", "launch"]), EXIT_CONFIG);
        assert_eq!(run_cli(["mapgal", "--help"]), 0);
    }
}
