use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use super::forcing::ForcingSpec;
use crate::error::{Error, Result};
use crate::fnspace::DiscreteSpace;
use crate::operator::{CoordSpace, NonlinearForm, OperatorProblem, TestMap, TestMapKind};

/// `a((q,u),(p,v)) = (q,p) − (∇u,p) + (q,∇v) − (f(u),v)` with elementwise
/// constant vector fluxes and a P1 potential.
pub struct MixedForm {
    potential: Arc<DiscreteSpace>,
    gradient: Arc<DMatrix<f64>>,
    weights: Arc<DVector<f64>>,
    forcing: ForcingSpec,
}

impl MixedForm {
    fn split(&self, z: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
        let nq = self.gradient.nrows();
        (
            z.rows(0, nq).into_owned(),
            z.rows(nq, z.len() - nq).into_owned(),
        )
    }
}

impl NonlinearForm for MixedForm {
    fn apply(&self, z: &DVector<f64>) -> DVector<f64> {
        let (q, u) = self.split(z);
        let flux = (&q - &*self.gradient * &u).component_mul(&self.weights);
        let f = self.forcing.function();
        let pot = self.gradient.tr_mul(&q.component_mul(&self.weights))
            - self.potential.nonlinear_load(u.as_slice(), &**f);
        let mut out = DVector::zeros(z.len());
        out.rows_mut(0, q.len()).copy_from(&flux);
        out.rows_mut(q.len(), u.len()).copy_from(&pot);
        out
    }

    fn jacobian(&self, z: &DVector<f64>) -> Option<DMatrix<f64>> {
        let (q, u) = self.split(z);
        let (nq, nu) = (q.len(), u.len());
        let m0g = DMatrix::from_diagonal(&self.weights) * &*self.gradient;
        let df = |s: f64| self.forcing.derivative(s);
        let mut j = DMatrix::zeros(nq + nu, nq + nu);
        j.view_mut((0, 0), (nq, nq)).set_diagonal(&self.weights);
        j.view_mut((0, nq), (nq, nu)).copy_from(&(-&m0g));
        j.view_mut((nq, 0), (nu, nq)).copy_from(&m0g.transpose());
        j.view_mut((nq, nq), (nu, nu))
            .copy_from(&(-self.potential.weighted_mass(u.as_slice(), &df)));
        Some(j)
    }
}

#[derive(Clone, Debug)]
pub struct MixedPoissonProblem {
    pub problem: OperatorProblem,
    pub phi: TestMap,
    pub potential: Arc<DiscreteSpace>,
    /// Cellwise gradients of the potential basis, `(cells · d) × n_u`.
    pub gradient: Arc<DMatrix<f64>>,
    /// Cell measures repeated per flux component (the flux mass diagonal).
    pub flux_weights: Arc<DVector<f64>>,
}

impl MixedPoissonProblem {
    pub fn n_flux(&self) -> usize {
        self.gradient.nrows()
    }

    pub fn split(&self, z: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
        let nq = self.n_flux();
        (
            z.rows(0, nq).into_owned(),
            z.rows(nq, z.len() - nq).into_owned(),
        )
    }

    /// `‖q‖_{L²}` of a cellwise constant flux.
    pub fn flux_norm(&self, q: &DVector<f64>) -> f64 {
        q.component_mul(q).dot(&self.flux_weights).sqrt()
    }

    /// `‖q − ∇u‖_{L²}`.
    pub fn flux_defect(&self, z: &DVector<f64>) -> f64 {
        let (q, u) = self.split(z);
        self.flux_norm(&(q - &*self.gradient * u))
    }
}

/// Builds the primal-mixed formulation of `−Δu − f(u) = g` with test map
/// `Φ(q, u) = (q − ∇u, u)`. The potential space must be P1 so that its
/// gradients are exactly cellwise constant.
pub fn make_mixed_poisson(
    potential: Arc<DiscreteSpace>,
    forcing: ForcingSpec,
    load: &dyn Fn([f64; 2]) -> f64,
) -> Result<MixedPoissonProblem> {
    if potential.degree() != 1 {
        return Err(Error::Config(format!(
            "cellwise constant fluxes are compatible with P1 potentials only, got P{}",
            potential.degree()
        )));
    }
    forcing.validate()?;
    let d = potential.spatial_dim();
    let cells = potential.cells();
    let nu = potential.dim();
    let nq = cells.len() * d;
    let mut gradient = DMatrix::zeros(nq, nu);
    let mut weights = DVector::zeros(nq);
    for (c, cell) in cells.iter().enumerate() {
        let qp = &cell.qps[0];
        for (a, dof) in cell.dofs.iter().enumerate() {
            if let Some(j) = dof {
                for i in 0..d {
                    gradient[(c * d + i, *j)] = qp.grads[a][i];
                }
            }
        }
        for i in 0..d {
            weights[c * d + i] = cell.measure;
        }
    }
    let mut gram = DMatrix::zeros(nq + nu, nq + nu);
    gram.view_mut((0, 0), (nq, nq)).set_diagonal(&weights);
    gram.view_mut((nq, nq), (nu, nu))
        .copy_from(&potential.stiffness_dense());
    let space = CoordSpace::with_gram("L2 x H1", gram);

    let mut phi_m = DMatrix::identity(nq + nu, nq + nu);
    phi_m.view_mut((0, nq), (nq, nu)).copy_from(&(-&gradient));
    // in the product norm Φ acts like [[1, −1], [0, 1]], whose norm is the golden ratio
    let phi = TestMap::linear(TestMapKind::MixedShear, phi_m)?
        .with_n_estimate((1.0 + 5f64.sqrt()) / 2.0)?;

    let mut rhs = DVector::zeros(nq + nu);
    rhs.rows_mut(nq, nu).copy_from(&potential.load_vector(load));
    let gradient = Arc::new(gradient);
    let weights = Arc::new(weights);
    let form = MixedForm {
        potential: potential.clone(),
        gradient: gradient.clone(),
        weights: weights.clone(),
        forcing: forcing.clone(),
    };
    let problem = OperatorProblem::new(
        &format!("mixed-{}", forcing.name()),
        Arc::new(form),
        space.clone(),
        space,
        rhs,
    )?
    .with_same_space();
    Ok(MixedPoissonProblem {
        problem,
        phi,
        potential,
        gradient,
        flux_weights: weights,
    })
}
