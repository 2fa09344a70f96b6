use std::path::{Path, PathBuf};

use mapgal::operator::JacobianMode;
use mapgal::problems::{CaseKind, CaseParams, ForcingKind};
use mapgal::solver::SolverConfig;
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields, default)]
pub struct ForcingSection {
    pub kind: ForcingKind,
    pub lambda: f64,
    /// Constant load `g`.
    pub load: f64,
}

impl Default for ForcingSection {
    fn default() -> Self {
        ForcingSection {
            kind: ForcingKind::Sin,
            lambda: 5.0,
            load: 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields, default)]
pub struct FlowSection {
    pub nu: f64,
    pub lid: f64,
}

impl Default for FlowSection {
    fn default() -> Self {
        FlowSection { nu: 0.01, lid: 1.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields, default)]
pub struct KirchhoffSection {
    pub saturation: f64,
}

impl Default for KirchhoffSection {
    fn default() -> Self {
        KirchhoffSection { saturation: 1.0 }
    }
}

/// Overrides of the solver defaults.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields, default)]
pub struct SolverSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tol_residual: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_newton_its: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub damping_schedule: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub homotopy_steps: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub multistart: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub jacobian: Option<JacobianMode>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields, default)]
pub struct CertifySection {
    pub directions: usize,
    pub radius_min: f64,
    pub radius_max: f64,
    pub radius_count: usize,
    pub surplus_samples: usize,
}

impl Default for CertifySection {
    fn default() -> Self {
        CertifySection {
            directions: 8,
            radius_min: 1.0,
            radius_max: 1000.0,
            radius_count: 4,
            surplus_samples: 32,
        }
    }
}

/// Run configuration, read from a TOML file and overridden by command-line
/// flags of the same names.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields, default)]
pub struct RunConfig {
    pub case: CaseKind,
    /// Explicit refinement levels; takes precedence over `levels`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub refinements: Option<Vec<u32>>,
    /// Number of consecutive levels from the case's coarsest default level.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub levels: Option<usize>,
    /// Spatial dimension; the cavity is always 2D and other cases default to 1D.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dim: Option<usize>,
    pub degree: usize,
    pub p: f64,
    pub seed: u64,
    /// JSON report path; tables go next to it with a `.csv` extension.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    pub forcing: ForcingSection,
    pub flow: FlowSection,
    pub kirchhoff: KirchhoffSection,
    pub solver: SolverSection,
    pub certify: CertifySection,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            case: CaseKind::Semilinear,
            refinements: None,
            levels: None,
            dim: None,
            degree: 1,
            p: 2.0,
            seed: 0,
            output: None,
            forcing: ForcingSection::default(),
            flow: FlowSection::default(),
            kirchhoff: KirchhoffSection::default(),
            solver: SolverSection::default(),
            certify: CertifySection::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<RunConfig, CliError> {
        toml::from_str(text)
            .map_err(|e| CliError::Config(format!("invalid config: {}", e.message())))
    }

    pub fn from_file(path: &Path) -> Result<RunConfig, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        RunConfig::from_toml_str(&text)
    }

    pub fn dim(&self) -> usize {
        match (self.case, self.dim) {
            (CaseKind::NsCavity, d) => d.unwrap_or(2),
            (_, d) => d.unwrap_or(1),
        }
    }

    /// The refinement levels to run, ascending.
    pub fn resolved_refinements(&self) -> Result<Vec<u32>, CliError> {
        let (start, count) = match (self.case, self.dim()) {
            (CaseKind::NsCavity, _) => (1, 3),
            (_, 2) => (2, 3),
            _ => (3, 4),
        };
        let levels = match (&self.refinements, self.levels) {
            (Some(r), _) => r.clone(),
            (None, Some(n)) => (0..n as u32).map(|i| start + i).collect(),
            (None, None) => (0..count).map(|i| start + i).collect(),
        };
        if levels.is_empty() {
            return Err(CliError::Config(
                "at least one refinement level is required".into(),
            ));
        }
        if levels.windows(2).any(|w| w[1] <= w[0]) {
            return Err(CliError::Config(format!(
                "refinements must increase strictly, got {levels:?}"
            )));
        }
        if let Some(&top) = levels.last() {
            if top > 12 {
                return Err(CliError::Config(format!(
                    "refinement {top} exceeds the supported maximum 12"
                )));
            }
        }
        Ok(levels)
    }

    pub fn case_params(&self) -> Result<CaseParams, CliError> {
        let params = CaseParams {
            case: self.case,
            dim: self.dim(),
            degree: self.degree,
            p: self.p,
            forcing: self.forcing.kind,
            lambda: self.forcing.lambda,
            load: self.forcing.load,
            nu: self.flow.nu,
            lid: self.flow.lid,
            saturation: self.kirchhoff.saturation,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn solver_config(&self) -> Result<SolverConfig, CliError> {
        let d = SolverConfig::default();
        let s = &self.solver;
        let cfg = SolverConfig {
            tol_residual: s.tol_residual.unwrap_or(d.tol_residual),
            max_newton_its: s.max_newton_its.unwrap_or(d.max_newton_its),
            damping_schedule: s.damping_schedule.clone().unwrap_or(d.damping_schedule),
            homotopy_steps: s.homotopy_steps.unwrap_or(d.homotopy_steps),
            multistart: s.multistart.unwrap_or(d.multistart),
            seed: self.seed,
            jacobian_mode: s.jacobian.unwrap_or(d.jacobian_mode),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Checks every derived setting without building anything.
    pub fn validate(&self) -> Result<(), CliError> {
        self.resolved_refinements()?;
        self.case_params()?;
        self.solver_config()?;
        let c = &self.certify;
        if c.directions < 8 || c.radius_count < 4 || c.surplus_samples < 16 {
            return Err(CliError::Config(
                "certify needs at least 8 directions, 4 radii and 16 surplus samples".into(),
            ));
        }
        if !(c.radius_min > 0.0)
            || !(c.radius_max >= 100.0 * c.radius_min)
            || !c.radius_max.is_finite()
        {
            return Err(CliError::Config(
                "certify radii must be positive and span at least two decades".into(),
            ));
        }
        Ok(())
    }
}
