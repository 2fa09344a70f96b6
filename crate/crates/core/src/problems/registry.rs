use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::forcing::ForcingSpec;
use super::kirchhoff::make_kirchhoff;
use super::mixed::{make_mixed_poisson, MixedPoissonProblem};
use super::navier_stokes::{make_navier_stokes, BodyForce, BoundaryData, NavierStokesProblem};
use super::semilinear::{make_semilinear, SemilinearProblem};
use crate::error::{Error, Result};
use crate::fnspace::{build_space, DiscreteSpace};
use crate::operator::{
    GalerkinHierarchy, GalerkinSystem, HierarchyLevel, MapFn, OperatorProblem, TestMap,
};
use crate::solver::{homotopy_solve, solve_system, SolveReport, SolverConfig};

/// Viscosity from which Navier–Stokes continuation starts.
pub const CONTINUATION_VISCOSITY: f64 = 1.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CaseKind {
    Semilinear,
    SemilinearP,
    MixedPoisson,
    NsCavity,
    Kirchhoff,
}

impl CaseKind {
    pub const ALL: [CaseKind; 5] = [
        CaseKind::Semilinear,
        CaseKind::SemilinearP,
        CaseKind::MixedPoisson,
        CaseKind::NsCavity,
        CaseKind::Kirchhoff,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            CaseKind::Semilinear => "semilinear",
            CaseKind::SemilinearP => "semilinear-p",
            CaseKind::MixedPoisson => "mixed-poisson",
            CaseKind::NsCavity => "ns-cavity",
            CaseKind::Kirchhoff => "kirchhoff",
        }
    }
}

impl fmt::Display for CaseKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for CaseKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<CaseKind> {
        CaseKind::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| {
                let names: Vec<&str> = CaseKind::ALL.iter().map(|c| c.as_str()).collect();
                Error::Config(format!(
                    "unknown case '{s}', expected one of {}",
                    names.join(", ")
                ))
            })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ForcingKind {
    Zero,
    /// `λ sin u`.
    Sin,
    /// `−λu³`, giving the monotone operator `−Δu + λu³`.
    Cubic,
    /// `λu³`.
    CubicPlus,
    /// `λu`.
    Linear,
    /// `λ₁ʰu` with the first discrete Dirichlet eigenvalue of the level.
    Resonant,
    /// `λ₁u` with the first continuous Dirichlet eigenvalue `dπ²`.
    ResonantLimit,
}

impl ForcingKind {
    pub const ALL: [ForcingKind; 7] = [
        ForcingKind::Zero,
        ForcingKind::Sin,
        ForcingKind::Cubic,
        ForcingKind::CubicPlus,
        ForcingKind::Linear,
        ForcingKind::Resonant,
        ForcingKind::ResonantLimit,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ForcingKind::Zero => "zero",
            ForcingKind::Sin => "sin",
            ForcingKind::Cubic => "cubic",
            ForcingKind::CubicPlus => "cubic-plus",
            ForcingKind::Linear => "linear",
            ForcingKind::Resonant => "resonant",
            ForcingKind::ResonantLimit => "resonant-limit",
        }
    }

    /// Whether the forcing is linear in `u`, making the operator affine.
    pub fn is_linear(self) -> bool {
        matches!(
            self,
            ForcingKind::Zero
                | ForcingKind::Linear
                | ForcingKind::Resonant
                | ForcingKind::ResonantLimit
        )
    }
}

impl fmt::Display for ForcingKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ForcingKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<ForcingKind> {
        ForcingKind::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| {
                let names: Vec<&str> = ForcingKind::ALL.iter().map(|c| c.as_str()).collect();
                Error::Config(format!(
                    "unknown forcing '{s}', expected one of {}",
                    names.join(", ")
                ))
            })
    }
}

/// Parameters selecting and configuring a problem family.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields, default)]
pub struct CaseParams {
    pub case: CaseKind,
    /// Spatial dimension, 1 or 2. Navier–Stokes is always 2D.
    pub dim: usize,
    /// Polynomial degree of the scalar spaces. Navier–Stokes always uses P2/P1.
    pub degree: usize,
    pub p: f64,
    pub forcing: ForcingKind,
    pub lambda: f64,
    /// Constant load `g`.
    pub load: f64,
    pub nu: f64,
    /// Lid speed of the cavity.
    pub lid: f64,
    /// Saturation parameter `ε` of the Kirchhoff operator.
    pub saturation: f64,
}

impl Default for CaseParams {
    fn default() -> CaseParams {
        CaseParams {
            case: CaseKind::Semilinear,
            dim: 1,
            degree: 1,
            p: 2.0,
            forcing: ForcingKind::Sin,
            lambda: 5.0,
            load: 1.0,
            nu: 0.01,
            lid: 1.0,
            saturation: 1.0,
        }
    }
}

impl CaseParams {
    pub fn validate(&self) -> Result<()> {
        let finite = [
            self.p,
            self.lambda,
            self.load,
            self.nu,
            self.lid,
            self.saturation,
        ];
        if finite.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config("case parameters must be finite".into()));
        }
        match self.case {
            CaseKind::NsCavity => {
                if self.dim != 2 {
                    return Err(Error::Config("the cavity case is two-dimensional".into()));
                }
                if !(self.nu > 0.0) {
                    return Err(Error::Config(format!(
                        "viscosity must be positive, got {}",
                        self.nu
                    )));
                }
            }
            _ => {
                if !(1..=2).contains(&self.dim) {
                    return Err(Error::Config(format!(
                        "dimension must be 1 or 2, got {}",
                        self.dim
                    )));
                }
                if !(1..=2).contains(&self.degree) {
                    return Err(Error::Config(format!(
                        "degree must be 1 or 2, got {}",
                        self.degree
                    )));
                }
            }
        }
        match self.case {
            CaseKind::Semilinear | CaseKind::MixedPoisson | CaseKind::Kirchhoff
                if self.p != 2.0 =>
            {
                Err(Error::Config(format!(
                    "case {} is posed in H¹ and needs p = 2, got {}",
                    self.case, self.p
                )))
            }
            CaseKind::SemilinearP if !(self.p > 1.0 && self.p <= 2.0) => Err(Error::Config(
                format!("case {} needs 1 < p ≤ 2, got {}", self.case, self.p),
            )),
            CaseKind::MixedPoisson if self.degree != 1 => {
                Err(Error::Config("the mixed case needs P1 potentials".into()))
            }
            CaseKind::Kirchhoff if !(self.saturation > 0.0) => Err(Error::Config(format!(
                "saturation must be positive, got {}",
                self.saturation
            ))),
            _ => Ok(()),
        }
    }

    /// Whether the selected operator is affine, so that an inf-sup analysis applies.
    pub fn is_linear(&self) -> bool {
        match self.case {
            CaseKind::Semilinear | CaseKind::MixedPoisson => self.forcing.is_linear(),
            CaseKind::SemilinearP => self.forcing.is_linear() && self.p == 2.0,
            CaseKind::NsCavity => true,
            CaseKind::Kirchhoff => false,
        }
    }
}

/// Smallest eigenvalue of the pencil `(K, M)` of a space.
pub fn first_dirichlet_eigenvalue(space: &DiscreteSpace) -> Result<f64> {
    let (lambda, _) =
        crate::linalg::gen_sym_min_eig(&space.stiffness_dense(), &space.mass_dense())?;
    Ok(lambda)
}

/// The forcing selected by `params` on the given level.
pub fn forcing_for(params: &CaseParams, space: &DiscreteSpace) -> Result<ForcingSpec> {
    let l = params.lambda;
    Ok(match params.forcing {
        ForcingKind::Zero => ForcingSpec::zero(),
        ForcingKind::Sin => ForcingSpec::sine(l),
        ForcingKind::Cubic => ForcingSpec::monotone_cubic(l),
        ForcingKind::CubicPlus => ForcingSpec::cubic(l),
        ForcingKind::Linear => ForcingSpec::linear("linear", l),
        ForcingKind::Resonant => {
            ForcingSpec::linear("resonant", first_dirichlet_eigenvalue(space)?)
        }
        ForcingKind::ResonantLimit => ForcingSpec::linear(
            "resonant-limit",
            space.spatial_dim() as f64 * std::f64::consts::PI.powi(2),
        ),
    })
}

/// Family-specific data of a built case.
#[derive(Clone, Debug)]
pub enum CaseData {
    Semilinear(SemilinearProblem),
    Mixed(MixedPoissonProblem),
    Kirchhoff(Arc<DiscreteSpace>),
    NavierStokes(NavierStokesProblem),
}

/// `(A, G_X, G_Y)` of an affine case: `A[i][j] = a(x_j, y_i)` with the Gram
/// matrices of trial and test coordinates.
pub type LinearPair = (DMatrix<f64>, DMatrix<f64>, DMatrix<f64>);

/// A problem family instantiated on one refinement level.
#[derive(Clone, Debug)]
pub struct BuiltCase {
    pub params: CaseParams,
    pub refinement: u32,
    pub problem: OperatorProblem,
    pub phi: TestMap,
    pub data: CaseData,
}

/// Builds the case described by `params` on the given refinement level.
pub fn build_case(params: &CaseParams, refinement: u32) -> Result<BuiltCase> {
    params.validate()?;
    let g = params.load;
    let load = move |_: [f64; 2]| g;
    let (problem, phi, data) = match params.case {
        CaseKind::Semilinear | CaseKind::SemilinearP => {
            let space = build_space(params.dim, refinement, params.degree, params.p)?;
            let forcing = forcing_for(params, &space)?;
            let sp = make_semilinear(space, forcing, params.p, &load)?;
            (sp.problem.clone(), sp.phi.clone(), CaseData::Semilinear(sp))
        }
        CaseKind::MixedPoisson => {
            let space = build_space(params.dim, refinement, 1, 2.0)?;
            let forcing = forcing_for(params, &space)?;
            let mp = make_mixed_poisson(space, forcing, &load)?;
            (mp.problem.clone(), mp.phi.clone(), CaseData::Mixed(mp))
        }
        CaseKind::Kirchhoff => {
            let space = build_space(params.dim, refinement, params.degree, 2.0)?;
            let (problem, phi) = make_kirchhoff(space.clone(), params.saturation, &load)?;
            (problem, phi, CaseData::Kirchhoff(space))
        }
        CaseKind::NsCavity => {
            let ns = make_navier_stokes(refinement, params.nu, BodyForce::Zero, BoundaryData::Lid)?
                .with_boundary_scale(params.lid)?;
            (
                ns.problem.clone(),
                ns.phi.clone(),
                CaseData::NavierStokes(ns),
            )
        }
    };
    Ok(BuiltCase {
        params: params.clone(),
        refinement,
        problem,
        phi,
        data,
    })
}

impl BuiltCase {
    pub fn dim(&self) -> usize {
        self.problem.trial().dim()
    }

    pub fn system(&self) -> Result<GalerkinSystem> {
        GalerkinSystem::new(self.problem.clone(), self.phi.clone())
    }

    /// Solves from `x0` (zero when absent). Navier–Stokes below the
    /// continuation viscosity is reached by viscosity continuation.
    pub fn solve(&self, config: &SolverConfig, x0: Option<&DVector<f64>>) -> Result<SolveReport> {
        let zero = DVector::zeros(self.dim());
        let x0 = x0.unwrap_or(&zero);
        match &self.data {
            CaseData::NavierStokes(ns) if ns.nu() < CONTINUATION_VISCOSITY => {
                homotopy_solve(ns.viscosity_path(CONTINUATION_VISCOSITY), config, x0)
            }
            _ => solve_system(&self.system()?, config, x0),
        }
    }

    /// Map from the coordinates of `coarse` (a coarser level of the same case)
    /// into this level's coordinates.
    pub fn prolongation_from(&self, coarse: &BuiltCase) -> Option<MapFn> {
        match (&self.data, &coarse.data) {
            (CaseData::Semilinear(f), CaseData::Semilinear(c)) => {
                Some(scalar_prolongation(f.space.clone(), c.space.clone()))
            }
            (CaseData::Kirchhoff(f), CaseData::Kirchhoff(c)) => {
                Some(scalar_prolongation(f.clone(), c.clone()))
            }
            (CaseData::Mixed(f), CaseData::Mixed(c)) => {
                let (f, c) = (f.clone(), c.clone());
                Some(Arc::new(move |z: &DVector<f64>| {
                    mixed_prolongation(&f, &c, z)
                }))
            }
            (CaseData::NavierStokes(f), CaseData::NavierStokes(c)) => {
                let (f, c) = (f.clone(), c.clone());
                Some(Arc::new(move |x: &DVector<f64>| f.prolongate_from(&c, x)))
            }
            _ => None,
        }
    }

    /// Operator matrix and Gram matrices of an affine case, `None` otherwise.
    /// For the cavity this is the velocity–pressure divergence pairing.
    pub fn linear_pair(&self) -> Result<Option<LinearPair>> {
        if !self.params.is_linear() {
            return Ok(None);
        }
        if let CaseData::NavierStokes(ns) = &self.data {
            return Ok(Some(ns.infsup_matrices()));
        }
        let n = self.dim();
        let a = self
            .problem
            .jacobian(&DVector::zeros(n))
            .unwrap_or_else(|| self.problem.fd_jacobian(&DVector::zeros(n)));
        let gram = |space: &crate::operator::CoordSpace| -> Result<DMatrix<f64>> {
            if let Some(g) = space.gram() {
                return Ok(g.clone());
            }
            match space.fe_space() {
                Some((s, _)) => Ok(s.stiffness_dense()),
                None => Ok(DMatrix::identity(space.dim(), space.dim())),
            }
        };
        Ok(Some((
            a,
            gram(self.problem.trial())?,
            gram(self.problem.test())?,
        )))
    }
}

fn scalar_prolongation(fine: Arc<DiscreteSpace>, coarse: Arc<DiscreteSpace>) -> MapFn {
    Arc::new(move |x: &DVector<f64>| fine.prolongate_from(&coarse, x.as_slice()))
}

/// Potential by interpolation, flux by cell containment.
fn mixed_prolongation(
    fine: &MixedPoissonProblem,
    coarse: &MixedPoissonProblem,
    z: &DVector<f64>,
) -> DVector<f64> {
    let (q, u) = coarse.split(z);
    let u_f = fine
        .potential
        .prolongate_from(&coarse.potential, u.as_slice());
    let d = fine.potential.spatial_dim();
    let coarse_mesh = coarse.potential.mesh();
    let fine_mesh = fine.potential.mesh();
    let mut out = DVector::zeros(fine.n_flux() + u_f.len());
    for (c, cell) in fine_mesh.cells.iter().enumerate() {
        let mut centroid = [0.0; 2];
        for v in cell {
            for (k, x) in fine_mesh.vertices[*v].iter().enumerate() {
                centroid[k] += x / cell.len() as f64;
            }
        }
        let parent = coarse_mesh.locate(centroid);
        for i in 0..d {
            out[c * d + i] = q[parent * d + i];
        }
    }
    out.rows_mut(fine.n_flux(), u_f.len()).copy_from(&u_f);
    out
}

/// Builds one level per refinement, each with the prolongation from the previous level.
pub fn build_levels(
    params: &CaseParams,
    refinements: &[u32],
) -> Result<(Vec<BuiltCase>, GalerkinHierarchy)> {
    if refinements.is_empty() {
        return Err(Error::Config(
            "at least one refinement level is required".into(),
        ));
    }
    let cases = refinements
        .iter()
        .map(|&k| build_case(params, k))
        .collect::<Result<Vec<_>>>()?;
    let mut levels = Vec::with_capacity(cases.len());
    for (i, case) in cases.iter().enumerate() {
        let prolongate = if i > 0 {
            case.prolongation_from(&cases[i - 1])
        } else {
            None
        };
        levels.push(HierarchyLevel {
            refinement: case.refinement,
            system: case.system()?,
            prolongate,
        });
    }
    Ok((cases, GalerkinHierarchy::new(levels)?))
}
