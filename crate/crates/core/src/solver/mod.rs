//! Damped Newton, continuation and ball multistart for the discrete systems.

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::operator::{GalerkinSystem, JacobianMode, OperatorProblem, TestMap};

/// Smallest continuation step before a homotopy run is declared stuck.
pub const MIN_HOMOTOPY_STEP: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields, default)]
pub struct SolverConfig {
    /// Relative residual tolerance; the absolute threshold is `tol (1 + ‖b‖)`.
    pub tol_residual: f64,
    pub max_newton_its: usize,
    /// Step factors tried in order until the residual decreases.
    pub damping_schedule: Vec<f64>,
    pub homotopy_steps: usize,
    pub multistart: usize,
    pub seed: u64,
    pub jacobian_mode: JacobianMode,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            tol_residual: 1e-10,
            max_newton_its: 50,
            damping_schedule: (0..13).map(|k| 0.5f64.powi(k)).collect(),
            homotopy_steps: 10,
            multistart: 8,
            seed: 0,
            jacobian_mode: JacobianMode::Analytic,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol_residual > 0.0) || !self.tol_residual.is_finite() {
            return Err(Error::Config(format!(
                "tolResidual must be positive, got {}",
                self.tol_residual
            )));
        }
        if self.max_newton_its == 0 {
            return Err(Error::Config("maxNewtonIts must be at least 1".into()));
        }
        if self.damping_schedule.is_empty()
            || self
                .damping_schedule
                .iter()
                .any(|&f| !(f > 0.0 && f <= 1.0))
        {
            return Err(Error::Config(
                "dampingSchedule must be a nonempty list of factors in (0, 1]".into(),
            ));
        }
        if self.homotopy_steps == 0 {
            return Err(Error::Config("homotopySteps must be at least 1".into()));
        }
        if self.multistart == 0 {
            return Err(Error::Config("multistart must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct PathPoint {
    pub t: f64,
    pub solution_norm: f64,
    pub iterations: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct StartOutcome {
    pub index: usize,
    pub converged: bool,
    pub residual_norm: f64,
    pub iterations: usize,
    pub trace: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SolveReport {
    pub solution: DVector<f64>,
    pub residual_norm: f64,
    /// Residual norms, starting with the initial guess.
    pub newton_trace: Vec<f64>,
    pub solution_norm_x: f64,
    pub converged: bool,
    pub starts_used: usize,
    pub iterations: usize,
    pub tolerance: f64,
    pub message: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub path: Vec<PathPoint>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub starts: Vec<StartOutcome>,
}

/// Damped Newton on `r(x) = 0` for the system assembled from `problem` and `phi`.
pub fn newton_solve(
    problem: &OperatorProblem,
    phi: &TestMap,
    config: &SolverConfig,
    x0: &DVector<f64>,
) -> Result<SolveReport> {
    let system = GalerkinSystem::new(problem.clone(), phi.clone())?;
    solve_system(&system, config, x0)
}

/// Damped Newton on an assembled system. Nonconvergence (singular Jacobian,
/// exhausted damping, iteration limit) is reported, not raised.
pub fn solve_system(
    system: &GalerkinSystem,
    config: &SolverConfig,
    x0: &DVector<f64>,
) -> Result<SolveReport> {
    config.validate()?;
    system.check_input(x0)?;
    let tol = config.tol_residual * (1.0 + system.rhs_scale());
    let mut x = x0.clone();
    let mut r = system.residual(&x);
    let mut rn = r.norm();
    let mut trace = vec![rn];
    let mut message = None;
    let mut iterations = 0;
    if !rn.is_finite() {
        message = Some("residual is not finite at the initial guess".to_string());
    }
    while rn.is_finite() && rn > tol {
        if iterations == config.max_newton_its {
            message = Some("iteration limit reached".to_string());
            break;
        }
        let jac = system.jacobian(&x, config.jacobian_mode);
        let Some(step) = linalg::solve_linear(&jac, &(-&r)) else {
            message = Some("singular Jacobian".to_string());
            break;
        };
        let mut accepted = false;
        for &lambda in &config.damping_schedule {
            let xt = &x + &step * lambda;
            let rt = system.residual(&xt);
            let rtn = rt.norm();
            if rtn.is_finite() && rtn <= (1.0 - 1e-4 * lambda) * rn {
                x = xt;
                r = rt;
                rn = rtn;
                accepted = true;
                break;
            }
        }
        iterations += 1;
        if !accepted {
            message = Some("damping schedule exhausted".to_string());
            break;
        }
        trace.push(rn);
    }
    let converged = rn.is_finite() && rn <= tol;
    Ok(SolveReport {
        solution_norm_x: system.norm_x(&x),
        solution: x,
        residual_norm: rn,
        newton_trace: trace,
        converged,
        starts_used: 1,
        iterations,
        tolerance: tol,
        message: if converged { None } else { message },
        path: Vec::new(),
        starts: Vec::new(),
    })
}

/// Continuation in `t ∈ [0, 1]` over the systems produced by `family`, starting
/// from `x0` at `t = 0`, with step halving on failure and step growth back to
/// `1 / homotopySteps` after success.
pub fn homotopy_solve<F>(family: F, config: &SolverConfig, x0: &DVector<f64>) -> Result<SolveReport>
where
    F: Fn(f64) -> Result<GalerkinSystem>,
{
    config.validate()?;
    let base = 1.0 / config.homotopy_steps as f64;
    let mut report = solve_system(&family(0.0)?, config, x0)?;
    let mut path = vec![PathPoint {
        t: 0.0,
        solution_norm: report.solution_norm_x,
        iterations: report.iterations,
    }];
    if !report.converged {
        report.message = Some(format!(
            "continuation failed at t = 0: {}",
            report.message.clone().unwrap_or_default()
        ));
        report.path = path;
        return Ok(report);
    }
    let mut t = 0.0;
    let mut dt = base;
    while t < 1.0 {
        let t_next = if t + dt >= 1.0 - 1e-12 { 1.0 } else { t + dt };
        let attempt = solve_system(&family(t_next)?, config, &report.solution)?;
        if attempt.converged {
            t = t_next;
            path.push(PathPoint {
                t,
                solution_norm: attempt.solution_norm_x,
                iterations: attempt.iterations,
            });
            report = attempt;
            dt = (dt * 2.0).min(base);
        } else {
            dt *= 0.5;
            if dt < MIN_HOMOTOPY_STEP {
                let mut failed = attempt;
                failed.converged = false;
                failed.message = Some(format!("continuation step underflow at t = {t}"));
                failed.path = path;
                return Ok(failed);
            }
        }
    }
    report.path = path;
    Ok(report)
}

/// Newton from `multistart` seeded random starts inside the orthonormal-coordinate
/// ball of the given radius. Starts run in parallel; the lowest final residual
/// wins, ties going to the earliest start.
pub fn ball_multistart(
    system: &GalerkinSystem,
    config: &SolverConfig,
    radius: f64,
) -> Result<SolveReport> {
    config.validate()?;
    if !(radius > 0.0) || !radius.is_finite() {
        return Err(Error::Input(format!(
            "ball radius must be positive, got {radius}"
        )));
    }
    let trial = system.problem().trial();
    let starts: Vec<DVector<f64>> = (0..config.multistart)
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            rng.set_stream(k as u64);
            trial.random_in_ball(&mut rng, radius)
        })
        .collect::<Result<_>>()?;
    let reports: Vec<SolveReport> = starts
        .par_iter()
        .map(|x0| solve_system(system, config, x0))
        .collect::<Result<_>>()?;
    let outcomes: Vec<StartOutcome> = reports
        .iter()
        .enumerate()
        .map(|(index, r)| StartOutcome {
            index,
            converged: r.converged,
            residual_norm: r.residual_norm,
            iterations: r.iterations,
            trace: r.newton_trace.clone(),
        })
        .collect();
    let mut best = 0;
    for (k, r) in reports.iter().enumerate() {
        let rb = reports[best].residual_norm;
        if r.residual_norm < rb || (rb.is_nan() && !r.residual_norm.is_nan()) {
            best = k;
        }
    }
    let mut report = reports[best].clone();
    report.starts_used = config.multistart;
    if !reports.iter().any(|r| r.converged) {
        report.message = Some("no start converged".to_string());
    }
    report.starts = outcomes;
    Ok(report)
}
