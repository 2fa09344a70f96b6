use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::fnspace::DiscreteSpace;
use crate::linalg;
use crate::operator::{CoordSpace, NonlinearForm, OperatorProblem, TestMap};

/// Saturating Kirchhoff-type operator `A(u) = −m(‖∇u‖²) Δu` with
/// `m(s) = 1 / sqrt(ε² + s)`, so that `⟨A(u), u⟩ / ‖u‖ → 1`.
pub struct KirchhoffForm {
    space: Arc<DiscreteSpace>,
    eps: f64,
}

impl KirchhoffForm {
    fn weight(&self, s: f64) -> f64 {
        1.0 / (self.eps * self.eps + s).sqrt()
    }
}

impl NonlinearForm for KirchhoffForm {
    fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        let ku = linalg::csr_mul_vec(self.space.stiffness(), x);
        let s = x.dot(&ku);
        ku * self.weight(s)
    }

    fn jacobian(&self, x: &DVector<f64>) -> Option<DMatrix<f64>> {
        let ku = linalg::csr_mul_vec(self.space.stiffness(), x);
        let s = x.dot(&ku);
        let m = self.weight(s);
        // m′(s) = −½ (ε² + s)^{−3/2}
        let dm = -0.5 * m * m * m;
        Some(self.space.stiffness_dense() * m + &ku * ku.transpose() * (2.0 * dm))
    }
}

/// Builds `−m(‖∇u‖²) Δu = g` in `H¹₀` with the identity test map.
pub fn make_kirchhoff(
    space: Arc<DiscreteSpace>,
    eps: f64,
    load: &dyn Fn([f64; 2]) -> f64,
) -> Result<(OperatorProblem, TestMap)> {
    if !(eps > 0.0) || !eps.is_finite() {
        return Err(Error::Config(format!(
            "saturation parameter must be positive, got {eps}"
        )));
    }
    let rhs = space.load_vector(load);
    let x = CoordSpace::w1p(space.clone(), 2.0);
    let form = KirchhoffForm { space, eps };
    let problem =
        OperatorProblem::new("kirchhoff", Arc::new(form), x.clone(), x, rhs)?.with_same_space();
    Ok((problem, TestMap::identity().with_n_estimate(1.0)?))
}
