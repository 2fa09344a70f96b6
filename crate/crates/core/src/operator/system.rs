use std::fmt;
use std::sync::{Arc, OnceLock};

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::problem::OperatorProblem;
use super::testmap::TestMap;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum JacobianMode {
    #[default]
    Analytic,
    FiniteDifference,
}

/// The square discrete system `r_i(x) = ⟨A(x) − b, Φ(ṽ_i)⟩ = 0`, where `ṽ_i`
/// is a trial basis orthonormal in the trial inner product.
///
/// The test vectors `Φ(ṽ_i)` are computed once and stored as the columns of
/// `tests`; `None` stands for the identity (Euclidean trial coordinates, `Φ = id`).
#[derive(Clone)]
pub struct GalerkinSystem {
    problem: OperatorProblem,
    phi: TestMap,
    tests: Option<Arc<DMatrix<f64>>>,
    rhs_scale: Arc<OnceLock<f64>>,
}

impl fmt::Debug for GalerkinSystem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GalerkinSystem")
            .field("problem", &self.problem)
            .field("phi", &self.phi)
            .finish()
    }
}

impl GalerkinSystem {
    pub fn new(problem: OperatorProblem, phi: TestMap) -> Result<GalerkinSystem> {
        let n = problem.trial().dim();
        let m = problem.test().dim();
        if phi.is_identity() && n != m {
            return Err(Error::Input(format!(
                "identity test map needs equal dimensions, got {n} and {m}"
            )));
        }
        phi.validate(n, m)?;
        let basis = problem.trial().orthonormal_basis()?;
        let tests = match (&basis, phi.is_identity(), phi.matrix()) {
            (None, true, _) => None,
            (Some(b), true, _) => Some(Arc::clone(b)),
            (None, false, Some(p)) => Some(Arc::new(p.clone())),
            (Some(b), false, Some(p)) => Some(Arc::new(p * &**b)),
            (_, false, None) => {
                let cols: Vec<DVector<f64>> = (0..n)
                    .into_par_iter()
                    .map(|i| {
                        let v = match &basis {
                            None => {
                                let mut e = DVector::zeros(n);
                                e[i] = 1.0;
                                e
                            }
                            Some(b) => b.column(i).into_owned(),
                        };
                        phi.apply(&v)
                    })
                    .collect();
                if cols.iter().any(|c| c.iter().any(|v| !v.is_finite())) {
                    return Err(Error::Input(
                        "test map produced non-finite test vectors".into(),
                    ));
                }
                Some(Arc::new(DMatrix::from_columns(&cols)))
            }
        };
        Ok(GalerkinSystem {
            problem,
            phi,
            tests,
            rhs_scale: Arc::new(OnceLock::new()),
        })
    }

    /// Same spaces and test map with a different problem (e.g. a continuation
    /// parameter); the stored test vectors are reused.
    pub fn with_problem(&self, problem: OperatorProblem) -> Result<GalerkinSystem> {
        if problem.trial().dim() != self.problem.trial().dim()
            || problem.test().dim() != self.problem.test().dim()
        {
            return Err(Error::Input(
                "replacement problem has different dimensions".into(),
            ));
        }
        Ok(GalerkinSystem {
            problem,
            phi: self.phi.clone(),
            tests: self.tests.clone(),
            rhs_scale: Arc::new(OnceLock::new()),
        })
    }

    pub fn problem(&self) -> &OperatorProblem {
        &self.problem
    }

    pub fn phi(&self) -> &TestMap {
        &self.phi
    }

    pub fn dim(&self) -> usize {
        self.problem.trial().dim()
    }

    /// Matrix whose columns are the test vectors `Φ(ṽ_i)`, `None` for the identity.
    pub fn test_vectors(&self) -> Option<&DMatrix<f64>> {
        self.tests.as_deref()
    }

    fn project(&self, v: &DVector<f64>) -> DVector<f64> {
        match &self.tests {
            None => v.clone(),
            Some(t) => t.tr_mul(v),
        }
    }

    pub fn check_input(&self, x: &DVector<f64>) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::Input(format!(
                "coefficient vector has length {}, trial space dimension is {}",
                x.len(),
                self.dim()
            )));
        }
        Ok(())
    }

    pub fn residual(&self, x: &DVector<f64>) -> DVector<f64> {
        self.project(&(self.problem.apply(x) - self.problem.rhs()))
    }

    pub fn residual_checked(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_input(x)?;
        Ok(self.residual(x))
    }

    /// `‖b‖` scale used in relative residual tolerances.
    pub fn rhs_scale(&self) -> f64 {
        *self
            .rhs_scale
            .get_or_init(|| self.problem.estimate_rhs_dual_norm())
    }

    pub fn jacobian(&self, x: &DVector<f64>, mode: JacobianMode) -> DMatrix<f64> {
        let jf = match mode {
            JacobianMode::Analytic => self
                .problem
                .jacobian(x)
                .unwrap_or_else(|| self.problem.fd_jacobian(x)),
            JacobianMode::FiniteDifference => self.problem.fd_jacobian(x),
        };
        match &self.tests {
            None => jf,
            Some(t) => crate::linalg::par_gemm_tn(t, &jf),
        }
    }

    /// Trial-space norm `‖x‖_X`.
    pub fn norm_x(&self, x: &DVector<f64>) -> f64 {
        self.problem.trial().norm(x)
    }
}
