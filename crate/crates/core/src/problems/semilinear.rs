use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use super::forcing::{ForcingSpec, GrowthClass};
use crate::error::{Error, Result};
use crate::fnspace::{DiscreteSpace, SobolevExponents};
use crate::linalg;
use crate::operator::{CoordSpace, NonlinearForm, OperatorProblem, TestMap, TestMapKind};

/// `a(u, φ) = ∫ ∇u·∇φ − ∫ f(u) φ` on a finite element space.
pub struct SemilinearForm {
    space: Arc<DiscreteSpace>,
    forcing: ForcingSpec,
}

impl NonlinearForm for SemilinearForm {
    fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        let f = self.forcing.function();
        linalg::csr_mul_vec(self.space.stiffness(), x)
            - self.space.nonlinear_load(x.as_slice(), &**f)
    }

    fn jacobian(&self, x: &DVector<f64>) -> Option<DMatrix<f64>> {
        let df = |u: f64| self.forcing.derivative(u);
        Some(self.space.stiffness_dense() - self.space.weighted_mass(x.as_slice(), &df))
    }
}

/// The semilinear Poisson problem in `W^{1,p}_0` tested in `W^{1,q}_0`.
#[derive(Clone, Debug)]
pub struct SemilinearProblem {
    pub problem: OperatorProblem,
    pub phi: TestMap,
    pub space: Arc<DiscreteSpace>,
    pub exponents: SobolevExponents,
    pub forcing: ForcingSpec,
}

impl SemilinearProblem {
    /// `‖f(u)‖_{Y′}` estimated on the discrete test space.
    pub fn forcing_dual_norm(&self, u: &DVector<f64>) -> f64 {
        let f = self.forcing.function();
        let g = self.space.nonlinear_load(u.as_slice(), &**f);
        crate::fnspace::dual_norm(&self.space, &g, self.exponents.q)
    }
}

/// The duality test map `u ↦ K⁻¹ J_p(u)`.
pub fn duality_poisson_map(space: Arc<DiscreteSpace>, p: f64) -> TestMap {
    TestMap::nonlinear(
        TestMapKind::DualityPoisson,
        Arc::new(move |u: &DVector<f64>| {
            space.poisson_solve_raw(&space.duality_map_raw(u.as_slice(), p))
        }),
    )
}

/// Builds `−Δu − f(u) = g` with the load `g`.
///
/// The forcing must pass its growth check, and growth of power type `s`
/// requires `s ≤ p* − 1`.
pub fn make_semilinear(
    space: Arc<DiscreteSpace>,
    forcing: ForcingSpec,
    p: f64,
    load: &dyn Fn([f64; 2]) -> f64,
) -> Result<SemilinearProblem> {
    if !(p > 1.0 && p <= 2.0) {
        return Err(Error::Config(format!(
            "semilinear problems need 1 < p ≤ 2, got {p}"
        )));
    }
    let exponents = SobolevExponents::new(p, space.spatial_dim())?;
    forcing.validate()?;
    if let GrowthClass::Power(s) = forcing.growth() {
        if s > exponents.p_star - 1.0 {
            return Err(Error::Config(format!(
                "forcing growth {s} exceeds p* − 1 = {} for p = {p}",
                exponents.p_star - 1.0
            )));
        }
    }
    let rhs = space.load_vector(load);
    let trial = CoordSpace::w1p(space.clone(), p);
    let test = CoordSpace::w1p(space.clone(), exponents.q);
    let form = SemilinearForm {
        space: space.clone(),
        forcing: forcing.clone(),
    };
    let mut problem = OperatorProblem::new(
        &format!("semilinear-{}", forcing.name()),
        Arc::new(form),
        trial,
        test,
        rhs,
    )?;
    let phi = if p == 2.0 {
        problem = problem.with_same_space();
        TestMap::identity().with_n_estimate(1.0)?
    } else {
        duality_poisson_map(space.clone(), p)
    };
    Ok(SemilinearProblem {
        problem,
        phi,
        space,
        exponents,
        forcing,
    })
}
