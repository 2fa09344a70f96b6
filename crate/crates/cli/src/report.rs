use std::io::Write;
use std::path::{Path, PathBuf};

use mapgal::certify::{BoundednessTrace, CoercivityCertificate, InfSupReport, SurplusReport};
use mapgal::solver::{PathPoint, SolveReport};
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::CliError;

pub const SCHEMA_VERSION: u32 = 1;

/// Wall-clock timings in seconds. Kept apart from all other fields so that
/// reports of identical runs differ only here.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Timings {
    pub build: f64,
    pub solve: f64,
    pub certify: f64,
    pub total: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct LevelSummary {
    pub level: usize,
    pub refinement: u32,
    pub dimension: usize,
    pub converged: bool,
    pub iterations: usize,
    pub residual_norm: f64,
    pub tolerance: f64,
    pub solution_norm: f64,
    pub newton_trace: Vec<f64>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub continuation: Vec<PathPoint>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub message: Option<String>,
}

impl LevelSummary {
    pub fn new(level: usize, refinement: u32, r: &SolveReport) -> LevelSummary {
        LevelSummary {
            level,
            refinement,
            dimension: r.solution.len(),
            converged: r.converged,
            iterations: r.iterations,
            residual_norm: r.residual_norm,
            tolerance: r.tolerance,
            solution_norm: r.solution_norm_x,
            newton_trace: r.newton_trace.clone(),
            continuation: r.path.clone(),
            message: r.message.clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ConvergenceRow {
    pub level: usize,
    pub dimension: usize,
    pub norm: f64,
    pub increment: Option<f64>,
    pub residual: f64,
}

impl ConvergenceRow {
    pub fn table(trace: &BoundednessTrace) -> Vec<ConvergenceRow> {
        trace
            .levels
            .iter()
            .map(|l| ConvergenceRow {
                level: l.level,
                dimension: l.dimension,
                norm: l.norm,
                increment: l.increment,
                residual: l.residual,
            })
            .collect()
    }
}

/// Solvability evidence from the coercivity probe.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SolvabilityVerdict {
    /// `H2`, `H2'` with a positive margin, or not certified.
    pub certified: bool,
    pub summary: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub surplus: Option<SurplusReport>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct LevelCertificate {
    pub level: usize,
    pub refinement: u32,
    pub certificate: CoercivityCertificate,
    pub solvability: SolvabilityVerdict,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct LevelInfSup {
    pub level: usize,
    pub refinement: u32,
    /// The larger of the two constants: the stable direction of a rectangular pairing.
    pub gamma: f64,
    pub report: InfSupReport,
    /// Smallest eigenvalue of the supremizer pencil, equal to `gamma_yx²`.
    pub supremizer_alpha: f64,
    pub supremizer_defect: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct RunReport {
    pub schema_version: u32,
    pub command: String,
    pub config: RunConfig,
    pub levels: Vec<LevelSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub certificate: Option<LevelCertificate>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub boundedness: Option<BoundednessTrace>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub infsup: Vec<LevelInfSup>,
    /// Smallness constant of the boundary extension on the finest cavity level.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub extension_epsilon: Option<f64>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub convergence: Vec<ConvergenceRow>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub increments_decreasing: Option<bool>,
    pub exit_code: i32,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub message: Option<String>,
    pub timings: Timings,
}

impl RunReport {
    pub fn new(command: &str, config: &RunConfig) -> RunReport {
        RunReport {
            schema_version: SCHEMA_VERSION,
            command: command.to_string(),
            config: config.clone(),
            levels: Vec::new(),
            certificate: None,
            boundedness: None,
            infsup: Vec::new(),
            extension_epsilon: None,
            convergence: Vec::new(),
            increments_decreasing: None,
            exit_code: 0,
            message: None,
            timings: Timings::default(),
        }
    }

    pub fn to_json(&self) -> Result<String, CliError> {
        let mut s =
            serde_json::to_string_pretty(self).map_err(|e| CliError::Internal(e.to_string()))?;
        s.push('\n');
        Ok(s)
    }
}

/// A float with 17 significant digits, `.` as decimal separator.
pub fn csv_float(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn convergence_csv(rows: &[ConvergenceRow]) -> String {
    let mut out = String::from("level,dim,norm,increment,residual\n");
    for r in rows {
        let inc = r.increment.map(csv_float).unwrap_or_default();
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            r.level,
            r.dimension,
            csv_float(r.norm),
            inc,
            csv_float(r.residual)
        ));
    }
    out
}

/// One row per sampled direction and radius of the coercivity probe.
pub fn evidence_csv(cert: &LevelCertificate) -> String {
    let c = &cert.certificate;
    let mut out = String::from("level,direction,adversarial,radius,ratio\n");
    let first_adversarial = c.ratios.len() - c.adversarial_directions;
    for (d, row) in c.ratios.iter().enumerate() {
        for (r, v) in c.radii.iter().zip(row) {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                cert.level,
                d,
                d >= first_adversarial,
                csv_float(*r),
                csv_float(*v)
            ));
        }
    }
    out
}

pub fn infsup_csv(rows: &[LevelInfSup]) -> String {
    let mut out = String::from(
        "level,refinement,rows,cols,gamma,gamma_xy,gamma_yx,discrepancy,supremizer_alpha\n",
    );
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            r.level,
            r.refinement,
            r.report.rows,
            r.report.cols,
            csv_float(r.gamma),
            csv_float(r.report.gamma_xy),
            csv_float(r.report.gamma_yx),
            csv_float(r.report.discrepancy),
            csv_float(r.supremizer_alpha)
        ));
    }
    out
}

/// Writes `contents` to `path` through a temporary file in the same directory.
pub fn write_atomic(path: &Path, contents: &str) -> Result<(), CliError> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d.to_path_buf(),
        _ => PathBuf::from("."),
    };
    std::fs::create_dir_all(&dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
    let mut tmp = tempfile::NamedTempFile::new_in(&dir)
        .map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
    tmp.write_all(contents.as_bytes())
        .map_err(|e| CliError::Io(e.to_string()))?;
    tmp.persist(path)
        .map_err(|e| CliError::Io(format!("{}: {}", path.display(), e.error)))?;
    Ok(())
}
