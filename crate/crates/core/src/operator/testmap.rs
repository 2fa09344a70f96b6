use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TestMapKind {
    Identity,
    LinearSupremizer,
    DualityPoisson,
    MixedShear,
    Custom,
}

impl TestMapKind {
    pub fn as_str(self) -> &'static str {
        match self {
            TestMapKind::Identity => "identity",
            TestMapKind::LinearSupremizer => "linear-supremizer",
            TestMapKind::DualityPoisson => "duality-poisson",
            TestMapKind::MixedShear => "mixed-shear",
            TestMapKind::Custom => "custom",
        }
    }
}

pub type MapFn = Arc<dyn Fn(&DVector<f64>) -> DVector<f64> + Send + Sync>;

#[derive(Clone)]
enum Repr {
    Identity,
    Linear(Arc<DMatrix<f64>>),
    Nonlinear(MapFn),
}

/// A map `Φ: X_n → Y_n` acting on coefficient vectors.
#[derive(Clone)]
pub struct TestMap {
    kind: TestMapKind,
    repr: Repr,
    n_estimate: Option<f64>,
    per_level: bool,
}

impl fmt::Debug for TestMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TestMap")
            .field("kind", &self.kind)
            .field("linear", &self.is_linear())
            .field("n_estimate", &self.n_estimate)
            .field("per_level", &self.per_level)
            .finish()
    }
}

impl TestMap {
    pub fn identity() -> TestMap {
        TestMap {
            kind: TestMapKind::Identity,
            repr: Repr::Identity,
            n_estimate: None,
            per_level: false,
        }
    }

    /// Linear map with matrix `p` (test coefficients = `p` · trial coefficients).
    pub fn linear(kind: TestMapKind, p: DMatrix<f64>) -> Result<TestMap> {
        if p.iter().any(|v| !v.is_finite()) {
            return Err(Error::Input(
                "test map matrix has non-finite entries".into(),
            ));
        }
        Ok(TestMap {
            kind,
            repr: Repr::Linear(Arc::new(p)),
            n_estimate: None,
            per_level: false,
        })
    }

    pub fn nonlinear(kind: TestMapKind, f: MapFn) -> TestMap {
        TestMap {
            kind,
            repr: Repr::Nonlinear(f),
            n_estimate: None,
            per_level: false,
        }
    }

    pub fn with_n_estimate(mut self, n: f64) -> Result<TestMap> {
        if !(n >= 0.0) || !n.is_finite() {
            return Err(Error::Input(format!(
                "N(Φ) estimate must be finite and nonnegative, got {n}"
            )));
        }
        self.n_estimate = Some(n);
        Ok(self)
    }

    pub fn with_per_level(mut self, per_level: bool) -> TestMap {
        self.per_level = per_level;
        self
    }

    pub fn kind(&self) -> TestMapKind {
        self.kind
    }

    pub fn n_estimate(&self) -> Option<f64> {
        self.n_estimate
    }

    pub fn per_level(&self) -> bool {
        self.per_level
    }

    pub fn is_linear(&self) -> bool {
        !matches!(self.repr, Repr::Nonlinear(_))
    }

    pub fn is_identity(&self) -> bool {
        matches!(self.repr, Repr::Identity)
    }

    /// Matrix of a linear map, `None` for identity and nonlinear maps.
    pub fn matrix(&self) -> Option<&DMatrix<f64>> {
        match &self.repr {
            Repr::Linear(p) => Some(p),
            _ => None,
        }
    }

    pub fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        match &self.repr {
            Repr::Identity => x.clone(),
            Repr::Linear(p) => &**p * x,
            Repr::Nonlinear(f) => f(x),
        }
    }

    /// Output dimension for inputs of dimension `n`.
    pub fn output_dim(&self, n: usize) -> usize {
        match &self.repr {
            Repr::Identity => n,
            Repr::Linear(p) => p.nrows(),
            Repr::Nonlinear(f) => f(&DVector::zeros(n)).len(),
        }
    }

    /// Checks dimensions against `trial → test` and that `Φ(0)` is finite.
    pub fn validate(&self, trial_dim: usize, test_dim: usize) -> Result<()> {
        if let Repr::Linear(p) = &self.repr {
            if p.ncols() != trial_dim {
                return Err(Error::Input(format!(
                    "test map expects {} trial coefficients, space has {trial_dim}",
                    p.ncols()
                )));
            }
        }
        let out = self.apply(&DVector::zeros(trial_dim));
        if out.len() != test_dim {
            return Err(Error::Input(format!(
                "test map produces {} coefficients, test space has {test_dim}",
                out.len()
            )));
        }
        if out.iter().any(|v| !v.is_finite()) {
            return Err(Error::Input("test map is not finite at 0".into()));
        }
        Ok(())
    }
}
