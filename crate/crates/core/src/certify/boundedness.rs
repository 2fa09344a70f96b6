use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::operator::{GalerkinHierarchy, GalerkinSystem};
use crate::solver::{solve_system, SolveReport, SolverConfig};

/// Growth of successive norm differences beyond this ratio counts as superlinear.
pub const GROWTH_RATIO: f64 = 1.1;

/// Largest test matrix whose rank is computed for the span record.
const SPAN_RANK_LIMIT: usize = 1200;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct LevelRecord {
    pub level: usize,
    pub refinement: u32,
    pub dimension: usize,
    pub norm: f64,
    /// `‖x_n − P x_{n−1}‖_X` against the prolongated previous solution.
    pub increment: Option<f64>,
    pub residual: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Dimension of the span of the test vectors `Φ_n(ṽ_i)`.
    pub test_span_dim: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct BoundednessTrace {
    pub levels: Vec<LevelRecord>,
    pub growth_flag: bool,
    /// Index of the first level that failed to converge; the trace stops there.
    pub failed_level: Option<usize>,
    #[serde(skip)]
    pub solutions: Vec<SolveReport>,
}

/// Superlinear growth in the level index: the last two norm differences are
/// positive and the last exceeds the previous by [`GROWTH_RATIO`].
pub fn superlinear_growth(norms: &[f64]) -> bool {
    if norms.iter().any(|v| !v.is_finite()) {
        return true;
    }
    if norms.len() < 3 {
        return false;
    }
    let k = norms.len();
    let d1 = norms[k - 2] - norms[k - 3];
    let d2 = norms[k - 1] - norms[k - 2];
    d1 > 0.0 && d2 > GROWTH_RATIO * d1
}

/// Solves every level with damped Newton (warm-started from the prolongated
/// coarser solution, falling back to zero) and records the solution norms.
pub fn track_boundedness(
    hierarchy: &GalerkinHierarchy,
    config: &SolverConfig,
) -> Result<BoundednessTrace> {
    track_boundedness_with(hierarchy, |_, sys, x0| solve_system(sys, config, x0))
}

/// [`track_boundedness`] with a custom per-level solve `solve(level, system, x0)`.
pub fn track_boundedness_with<S>(
    hierarchy: &GalerkinHierarchy,
    solve: S,
) -> Result<BoundednessTrace>
where
    S: Fn(usize, &GalerkinSystem, &DVector<f64>) -> Result<SolveReport>,
{
    let mut levels = Vec::new();
    let mut solutions: Vec<SolveReport> = Vec::new();
    let mut failed = None;
    for (i, level) in hierarchy.levels().iter().enumerate() {
        let sys = &level.system;
        let zero = DVector::zeros(sys.dim());
        let warm = match (solutions.last(), &level.prolongate) {
            (Some(prev), Some(p)) => Some(p(&prev.solution)),
            _ => None,
        };
        let mut report = solve(i, sys, warm.as_ref().unwrap_or(&zero))?;
        if !report.converged && warm.is_some() {
            let cold = solve(i, sys, &zero)?;
            if cold.converged || cold.residual_norm < report.residual_norm {
                report = cold;
            }
        }
        let increment = solutions
            .last()
            .and_then(|prev| level.increment(&prev.solution, &report.solution));
        let test_span_dim = match sys.test_vectors() {
            None => Some(sys.dim()),
            Some(t) if t.ncols() <= SPAN_RANK_LIMIT => {
                let sv = t.singular_values();
                let top = sv.max();
                Some(sv.iter().filter(|&&s| s > 1e-10 * top).count())
            }
            Some(_) => None,
        };
        levels.push(LevelRecord {
            level: i,
            refinement: level.refinement,
            dimension: sys.dim(),
            norm: report.solution_norm_x,
            increment,
            residual: report.residual_norm,
            iterations: report.iterations,
            converged: report.converged,
            test_span_dim,
        });
        let ok = report.converged;
        solutions.push(report);
        if !ok {
            failed = Some(i);
            break;
        }
    }
    let norms: Vec<f64> = levels.iter().map(|l| l.norm).collect();
    Ok(BoundednessTrace {
        growth_flag: superlinear_growth(&norms),
        levels,
        failed_level: failed,
        solutions,
    })
}
