use std::fmt;
use std::sync::{Arc, OnceLock};

use nalgebra::{DMatrix, DVector};
use nalgebra_sparse::{CooMatrix, CsrMatrix};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fnspace::{shape, CellData, DiscreteSpace, QuadPoint};
use crate::linalg;
use crate::operator::{CoordSpace, GalerkinSystem, NonlinearForm, OperatorProblem, TestMap};

pub type VectorField = Arc<dyn Fn([f64; 2]) -> [f64; 2] + Send + Sync>;

/// Inf-sup threshold below which pressure recovery is refused.
pub const PRESSURE_INFSUP_THRESHOLD: f64 = 0.2;

/// Relative tolerance for the pressure-constraint rank decisions.
const RANK_TOL: f64 = 1e-10;

#[derive(Clone)]
pub enum BodyForce {
    Zero,
    Field(VectorField),
    /// Gradient of the P1 function with the given vertex values.
    PressureGradient(DVector<f64>),
}

#[derive(Clone)]
pub enum BoundaryData {
    Homogeneous,
    /// Unit tangential velocity on the top side, zero on the other sides and at the top corners.
    Lid,
    Field(VectorField),
}

impl fmt::Debug for BodyForce {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BodyForce::Zero => write!(f, "Zero"),
            BodyForce::Field(_) => write!(f, "Field"),
            BodyForce::PressureGradient(v) => write!(f, "PressureGradient({} values)", v.len()),
        }
    }
}

impl fmt::Debug for BoundaryData {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BoundaryData::Homogeneous => write!(f, "Homogeneous"),
            BoundaryData::Lid => write!(f, "Lid"),
            BoundaryData::Field(_) => write!(f, "Field"),
        }
    }
}

/// Mesh-dependent data shared by every viscosity and boundary scaling.
///
/// Full velocity vectors hold both components at every P2 node,
/// `[u₁ at all nodes, u₂ at all nodes]`; interior vectors use the same layout
/// over interior nodes only.
struct NsCore {
    velocity: Arc<DiscreteSpace>,
    n_nodes: usize,
    n_int: usize,
    div_full: DMatrix<f64>,
    pressure_mass: DMatrix<f64>,
    pressure_weights: DVector<f64>,
    /// Orthonormal basis of mean-zero vertex vectors.
    pressure_basis: DMatrix<f64>,
    reduced_div: DMatrix<f64>,
    reduced_div_gram: nalgebra::Cholesky<f64, nalgebra::Dyn>,
    /// H¹-orthonormal basis of discretely divergence-free interior velocities.
    basis: DMatrix<f64>,
    basis_t: DMatrix<f64>,
    boundary: DVector<f64>,
    lift: DVector<f64>,
    force: DVector<f64>,
    infsup: OnceLock<f64>,
}

impl NsCore {
    fn embed(&self, w: &DVector<f64>) -> DVector<f64> {
        let mut full = DVector::zeros(2 * self.n_nodes);
        for (node, dof) in self.velocity.node_dof().iter().enumerate() {
            if let Some(i) = dof {
                for c in 0..2 {
                    full[c * self.n_nodes + node] = w[c * self.n_int + i];
                }
            }
        }
        full
    }

    fn field_at(
        &self,
        full: &DVector<f64>,
        cell: &CellData,
        qp: &QuadPoint,
    ) -> ([f64; 2], [[f64; 2]; 2]) {
        let mut u = [0.0; 2];
        let mut g = [[0.0; 2]; 2];
        for (a, node) in cell.nodes.iter().enumerate() {
            for c in 0..2 {
                let v = full[c * self.n_nodes + node];
                u[c] += v * qp.values[a];
                g[c][0] += v * qp.grads[a][0];
                g[c][1] += v * qp.grads[a][1];
            }
        }
        (u, g)
    }

    fn scatter(&self, parts: Vec<Vec<(usize, f64)>>) -> DVector<f64> {
        let mut out = DVector::zeros(2 * self.n_int);
        for part in parts {
            for (i, v) in part {
                out[i] += v;
            }
        }
        out
    }

    /// `ν(∇U, ∇φ) + c(U; U, φ)` for every interior basis function `φ`.
    fn momentum(&self, full: &DVector<f64>, nu: f64) -> DVector<f64> {
        let parts = self
            .velocity
            .cells()
            .par_iter()
            .map(|cell| {
                let mut local = Vec::with_capacity(12);
                for qp in &cell.qps {
                    let (u, g) = self.field_at(full, cell, qp);
                    for (a, dof) in cell.dofs.iter().enumerate() {
                        let Some(i) = dof else { continue };
                        let ga = qp.grads[a];
                        let adv_a = u[0] * ga[0] + u[1] * ga[1];
                        for c in 0..2 {
                            let visc = g[c][0] * ga[0] + g[c][1] * ga[1];
                            let adv_u = u[0] * g[c][0] + u[1] * g[c][1];
                            let conv = 0.5 * (adv_u * qp.values[a] - adv_a * u[c]);
                            local.push((c * self.n_int + i, qp.weight * (nu * visc + conv)));
                        }
                    }
                }
                local
            })
            .collect();
        self.scatter(parts)
    }

    /// `(∇U, ∇φ)` for every interior basis function `φ`.
    fn laplace_action(&self, full: &DVector<f64>) -> DVector<f64> {
        let parts = self
            .velocity
            .cells()
            .par_iter()
            .map(|cell| {
                let mut local = Vec::with_capacity(12);
                for qp in &cell.qps {
                    let (_, g) = self.field_at(full, cell, qp);
                    for (a, dof) in cell.dofs.iter().enumerate() {
                        let Some(i) = dof else { continue };
                        for c in 0..2 {
                            let v = g[c][0] * qp.grads[a][0] + g[c][1] * qp.grads[a][1];
                            local.push((c * self.n_int + i, qp.weight * v));
                        }
                    }
                }
                local
            })
            .collect();
        self.scatter(parts)
    }

    /// Skew convection `½[((u·∇)v, w) − ((u·∇)w, v)]`.
    fn convection(&self, u: &DVector<f64>, v: &DVector<f64>, w: &DVector<f64>) -> f64 {
        self.velocity
            .cells()
            .par_iter()
            .map(|cell| {
                let mut s = 0.0;
                for qp in &cell.qps {
                    let (uu, _) = self.field_at(u, cell, qp);
                    let (vv, gv) = self.field_at(v, cell, qp);
                    let (ww, gw) = self.field_at(w, cell, qp);
                    let mut t = 0.0;
                    for c in 0..2 {
                        t += (uu[0] * gv[c][0] + uu[1] * gv[c][1]) * ww[c];
                        t -= (uu[0] * gw[c][0] + uu[1] * gw[c][1]) * vv[c];
                    }
                    s += 0.5 * qp.weight * t;
                }
                s
            })
            .collect::<Vec<f64>>()
            .iter()
            .sum()
    }

    /// Gradient of `u ↦ c(u; e, u)` with respect to the interior values of `u`.
    fn convection_gradient(&self, u: &DVector<f64>, e: &DVector<f64>) -> DVector<f64> {
        let parts = self
            .velocity
            .cells()
            .par_iter()
            .map(|cell| {
                let mut local = Vec::with_capacity(12);
                for qp in &cell.qps {
                    let (uu, gu) = self.field_at(u, cell, qp);
                    let (ee, ge) = self.field_at(e, cell, qp);
                    for (a, dof) in cell.dofs.iter().enumerate() {
                        let Some(i) = dof else { continue };
                        let (pa, ga) = (qp.values[a], qp.grads[a]);
                        let adv_a = uu[0] * ga[0] + uu[1] * ga[1];
                        for c in 0..2 {
                            let de_u = uu[0] * ge[0][c] + uu[1] * ge[1][c];
                            let adv_e = uu[0] * ge[c][0] + uu[1] * ge[c][1];
                            let du_e = ee[0] * gu[0][c] + ee[1] * gu[1][c];
                            let v = 0.5 * (pa * de_u + adv_e * pa - pa * du_e - adv_a * ee[c]);
                            local.push((c * self.n_int + i, qp.weight * v));
                        }
                    }
                }
                local
            })
            .collect();
        self.scatter(parts)
    }

    /// Derivative of [`NsCore::momentum`] with respect to the interior values.
    fn momentum_jacobian(&self, full: &DVector<f64>, nu: f64) -> CsrMatrix<f64> {
        let parts: Vec<Vec<(usize, usize, f64)>> = self
            .velocity
            .cells()
            .par_iter()
            .map(|cell| {
                let mut local = Vec::new();
                for qp in &cell.qps {
                    let (u, g) = self.field_at(full, cell, qp);
                    for (a, da) in cell.dofs.iter().enumerate() {
                        let Some(i) = da else { continue };
                        let (pa, ga) = (qp.values[a], qp.grads[a]);
                        let adv_a = u[0] * ga[0] + u[1] * ga[1];
                        for (b, db) in cell.dofs.iter().enumerate() {
                            let Some(j) = db else { continue };
                            let (pb, gb) = (qp.values[b], qp.grads[b]);
                            let adv_b = u[0] * gb[0] + u[1] * gb[1];
                            let lap = ga[0] * gb[0] + ga[1] * gb[1];
                            for c in 0..2 {
                                for e in 0..2 {
                                    let mut v = 0.5 * (pb * g[c][e] * pa - pb * ga[e] * u[c]);
                                    if c == e {
                                        v += nu * lap + 0.5 * (adv_b * pa - adv_a * pb);
                                    }
                                    local.push((
                                        c * self.n_int + i,
                                        e * self.n_int + j,
                                        qp.weight * v,
                                    ));
                                }
                            }
                        }
                    }
                }
                local
            })
            .collect();
        let n = 2 * self.n_int;
        let mut coo = CooMatrix::new(n, n);
        for part in parts {
            for (i, j, v) in part {
                coo.push(i, j, v);
            }
        }
        CsrMatrix::from(&coo)
    }
}

/// Steady incompressible Navier–Stokes on the unit square with Taylor–Hood
/// (P2 velocity, P1 pressure) elements, posed on the discretely
/// divergence-free velocities with identity test map.
///
/// The unknowns are coordinates in an H¹-orthonormal divergence-free basis,
/// so the Euclidean coefficient norm is `‖∇u‖_{L²}`. Boundary data enter
/// through a discrete Stokes lift `u_ext` scaled by `boundary_scale`.
#[derive(Clone)]
pub struct NavierStokesProblem {
    core: Arc<NsCore>,
    nu: f64,
    scale: f64,
    pub problem: OperatorProblem,
    pub phi: TestMap,
}

impl fmt::Debug for NavierStokesProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("NavierStokesProblem")
            .field("nu", &self.nu)
            .field("boundary_scale", &self.scale)
            .field("velocity_dofs", &(2 * self.core.n_int))
            .field("div_free_dim", &self.core.basis.ncols())
            .finish()
    }
}

struct NsForm {
    core: Arc<NsCore>,
    nu: f64,
    scale: f64,
}

impl NsForm {
    fn velocity(&self, x: &DVector<f64>) -> DVector<f64> {
        self.core.embed(&(&self.core.basis * x)) + &self.core.lift * self.scale
    }
}

impl NonlinearForm for NsForm {
    fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        let r = self.core.momentum(&self.velocity(x), self.nu);
        self.core.basis.tr_mul(&r)
    }

    fn jacobian(&self, x: &DVector<f64>) -> Option<DMatrix<f64>> {
        let j = self.core.momentum_jacobian(&self.velocity(x), self.nu);
        let bt = &self.core.basis_t;
        let mut jz_t = DMatrix::zeros(bt.nrows(), j.nrows());
        for (i, row) in j.row_iter().enumerate() {
            let mut out = jz_t.column_mut(i);
            for (k, v) in row.col_indices().iter().zip(row.values()) {
                out.axpy(*v, &bt.column(*k), 1.0);
            }
        }
        Some(linalg::par_gemm_tn(&self.core.basis, &jz_t.transpose()))
    }
}

impl NavierStokesProblem {
    fn assemble(core: Arc<NsCore>, nu: f64, scale: f64) -> Result<NavierStokesProblem> {
        if !(nu > 0.0) || !nu.is_finite() {
            return Err(Error::Config(format!(
                "viscosity must be positive, got {nu}"
            )));
        }
        if !scale.is_finite() {
            return Err(Error::Config(format!(
                "boundary scale must be finite, got {scale}"
            )));
        }
        let m = core.basis.ncols();
        let rhs = core.basis.tr_mul(&core.force);
        let rhs_norm = rhs.norm();
        let space = CoordSpace::euclidean(m);
        let form = NsForm {
            core: core.clone(),
            nu,
            scale,
        };
        let problem =
            OperatorProblem::new("navier-stokes", Arc::new(form), space.clone(), space, rhs)?
                .with_same_space()
                .with_rhs_dual_norm(rhs_norm);
        Ok(NavierStokesProblem {
            core,
            nu,
            scale,
            problem,
            phi: TestMap::identity().with_n_estimate(1.0)?,
        })
    }

    pub fn with_viscosity(&self, nu: f64) -> Result<NavierStokesProblem> {
        NavierStokesProblem::assemble(self.core.clone(), nu, self.scale)
    }

    pub fn with_boundary_scale(&self, scale: f64) -> Result<NavierStokesProblem> {
        NavierStokesProblem::assemble(self.core.clone(), self.nu, scale)
    }

    pub fn nu(&self) -> f64 {
        self.nu
    }

    pub fn boundary_scale(&self) -> f64 {
        self.scale
    }

    pub fn velocity_space(&self) -> &Arc<DiscreteSpace> {
        &self.core.velocity
    }

    /// Number of velocity unknowns before the divergence constraint.
    pub fn velocity_dofs(&self) -> usize {
        2 * self.core.n_int
    }

    pub fn pressure_dofs(&self) -> usize {
        self.core.pressure_weights.len()
    }

    /// Columns span the discretely divergence-free interior velocities.
    pub fn div_free_basis(&self) -> &DMatrix<f64> {
        &self.core.basis
    }

    /// Full nodal velocity of the boundary data.
    pub fn boundary_values(&self) -> DVector<f64> {
        &self.core.boundary * self.scale
    }

    /// Full nodal velocity of the Stokes lift `u_ext`.
    pub fn extension(&self) -> DVector<f64> {
        &self.core.lift * self.scale
    }

    /// Interior load vector `(f, φ)`.
    pub fn load(&self) -> &DVector<f64> {
        &self.core.force
    }

    /// Full nodal velocity of the divergence-free part with coordinates `x`.
    pub fn homogeneous_velocity(&self, x: &DVector<f64>) -> DVector<f64> {
        self.core.embed(&(&self.core.basis * x))
    }

    /// Full nodal velocity `u + u_ext`.
    pub fn velocity(&self, x: &DVector<f64>) -> DVector<f64> {
        self.homogeneous_velocity(x) + self.extension()
    }

    /// Interior values of a full nodal vector.
    pub fn interior(&self, full: &DVector<f64>) -> DVector<f64> {
        let core = &self.core;
        let mut w = DVector::zeros(2 * core.n_int);
        for (node, dof) in core.velocity.node_dof().iter().enumerate() {
            if let Some(i) = dof {
                for c in 0..2 {
                    w[c * core.n_int + i] = full[c * core.n_nodes + node];
                }
            }
        }
        w
    }

    /// Embeds interior values into a full nodal vector with zero boundary values.
    pub fn embed(&self, w: &DVector<f64>) -> DVector<f64> {
        self.core.embed(w)
    }

    /// `max_q |(div u, q)|` over the orthonormal mean-zero pressure basis.
    pub fn divergence_defect(&self, full: &DVector<f64>) -> f64 {
        self.core
            .pressure_basis
            .tr_mul(&(&self.core.div_full * full))
            .amax()
    }

    /// Skew convection `c(u; v, w)` of full nodal velocities.
    pub fn convection(&self, u: &DVector<f64>, v: &DVector<f64>, w: &DVector<f64>) -> f64 {
        self.core.convection(u, v, w)
    }

    /// `‖∇u‖_{L²}` of a full nodal velocity.
    pub fn gradient_norm(&self, full: &DVector<f64>) -> f64 {
        let core = &self.core;
        core.velocity
            .cells()
            .iter()
            .map(|cell| {
                cell.qps
                    .iter()
                    .map(|qp| {
                        let (_, g) = core.field_at(full, cell, qp);
                        qp.weight
                            * (g[0][0].powi(2)
                                + g[0][1].powi(2)
                                + g[1][0].powi(2)
                                + g[1][1].powi(2))
                    })
                    .sum::<f64>()
            })
            .sum::<f64>()
            .sqrt()
    }

    /// Both sides of the energy identity obtained by testing with the
    /// divergence-free part `w` of the solution:
    /// `ν‖∇w‖² = (f, w) − ν(∇u_ext, ∇w) − c(w + u_ext; u_ext, w)`.
    pub fn energy_identity(&self, x: &DVector<f64>) -> (f64, f64) {
        let core = &self.core;
        let w_int = &core.basis * x;
        let w = core.embed(&w_int);
        let ext = self.extension();
        let lhs = self.nu * x.norm_squared();
        let rhs = core.force.dot(&w_int)
            - self.nu * core.laplace_action(&ext).dot(&w_int)
            - core.convection(&(&w + &ext), &ext, &w);
        (lhs, rhs)
    }

    /// Discrete inf-sup constant of the velocity–pressure pair,
    /// `inf_q sup_v (q, div v) / (‖q‖_{L²} ‖∇v‖_{L²})` over mean-zero pressures.
    pub fn pressure_infsup(&self) -> Result<f64> {
        if let Some(g) = self.core.infsup.get() {
            return Ok(*g);
        }
        let core = &self.core;
        let b = &core.reduced_div;
        let n = core.n_int;
        let rows: Vec<DVector<f64>> = (0..b.nrows())
            .into_par_iter()
            .map(|r| {
                let row = b.row(r).transpose();
                let mut z = DVector::zeros(2 * n);
                for c in 0..2 {
                    let part = row.rows(c * n, n).into_owned();
                    z.rows_mut(c * n, n)
                        .copy_from(&core.velocity.poisson_solve_raw(&part));
                }
                z
            })
            .collect();
        let kinv_bt = DMatrix::from_columns(&rows);
        let schur = b * kinv_bt;
        let gy = core
            .pressure_basis
            .tr_mul(&(&core.pressure_mass * &core.pressure_basis));
        let (lambda, _) = linalg::gen_sym_min_eig(&((&schur + schur.transpose()) * 0.5), &gy)?;
        let gamma = lambda.max(0.0).sqrt();
        Ok(*core.infsup.get_or_init(|| gamma))
    }

    /// `(A, G_X, G_Y)` for the pairing `(q, div v)`: rows are mean-zero
    /// pressure coordinates, columns interior velocity values, `G_X` the
    /// vector stiffness and `G_Y` the pressure mass in those coordinates.
    pub fn infsup_matrices(&self) -> (DMatrix<f64>, DMatrix<f64>, DMatrix<f64>) {
        let core = &self.core;
        let n = core.n_int;
        let k = core.velocity.stiffness_dense();
        let mut gx = DMatrix::zeros(2 * n, 2 * n);
        gx.view_mut((0, 0), (n, n)).copy_from(&k);
        gx.view_mut((n, n), (n, n)).copy_from(&k);
        let gy = core
            .pressure_basis
            .tr_mul(&(&core.pressure_mass * &core.pressure_basis));
        (core.reduced_div.clone(), gx, gy)
    }

    /// Recovers the mean-zero P1 pressure (vertex values) from the momentum
    /// residual of the velocity with coordinates `x`, by least squares on
    /// `(p, div φ) = ν(∇u, ∇φ) + c(u; u, φ) − (f, φ)`.
    pub fn recover_pressure(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        let gamma = self.pressure_infsup()?;
        if gamma <= PRESSURE_INFSUP_THRESHOLD {
            return Err(Error::UnstablePair {
                gamma,
                threshold: PRESSURE_INFSUP_THRESHOLD,
            });
        }
        let core = &self.core;
        let r = core.momentum(&self.velocity(x), self.nu) - &core.force;
        let p0 = core.reduced_div_gram.solve(&(&core.reduced_div * r));
        Ok(&core.pressure_basis * p0)
    }

    /// `∫ p` of a P1 pressure given by vertex values.
    pub fn pressure_integral(&self, p: &DVector<f64>) -> f64 {
        self.core.pressure_weights.dot(p)
    }

    /// Coordinates on this level of the H¹ projection of a coarser level's
    /// divergence-free velocity with coordinates `x`.
    pub fn prolongate_from(&self, coarse: &NavierStokesProblem, x: &DVector<f64>) -> DVector<f64> {
        let w = coarse.interior(&coarse.homogeneous_velocity(x));
        let (nc, nf) = (coarse.core.n_int, self.core.n_int);
        let mut kw = DVector::zeros(2 * nf);
        for c in 0..2 {
            let part = w.rows(c * nc, nc);
            let fine = self
                .core
                .velocity
                .prolongate_from(&coarse.core.velocity, part.as_slice());
            kw.rows_mut(c * nf, nf)
                .copy_from(&linalg::csr_mul_vec(self.core.velocity.stiffness(), &fine));
        }
        self.core.basis.tr_mul(&kw)
    }

    /// Galerkin system at viscosity `ν₀^{1−t} ν^t`, for continuation from `ν₀`.
    pub fn viscosity_path(&self, nu0: f64) -> impl Fn(f64) -> Result<GalerkinSystem> + '_ {
        move |t: f64| {
            let nu = nu0.powf(1.0 - t) * self.nu.powf(t);
            let p = self.with_viscosity(nu)?;
            GalerkinSystem::new(p.problem, p.phi)
        }
    }
}

/// Builds the Navier–Stokes problem on the unit square at the given refinement.
pub fn make_navier_stokes(
    refinement: u32,
    nu: f64,
    force: BodyForce,
    boundary: BoundaryData,
) -> Result<NavierStokesProblem> {
    if !(nu > 0.0) || !nu.is_finite() {
        return Err(Error::Config(format!(
            "viscosity must be positive, got {nu}"
        )));
    }
    let velocity = Arc::new(DiscreteSpace::build(2, refinement, 2, 2.0)?);
    let mesh = velocity.mesh();
    let n_nodes = velocity.nodes().len();
    let n_int = velocity.dim();
    let n_vert = mesh.vertices.len();
    let p1_values: Vec<[f64; 3]> = velocity
        .rule()
        .points
        .iter()
        .map(|xi| {
            let (v, _) = shape(2, 1, *xi);
            [v[0], v[1], v[2]]
        })
        .collect();

    let mut div_full = DMatrix::zeros(n_vert, 2 * n_nodes);
    let mut pressure_mass = DMatrix::zeros(n_vert, n_vert);
    let mut pressure_weights = DVector::zeros(n_vert);
    for (cell, verts) in velocity.cells().iter().zip(&mesh.cells) {
        for (q, qp) in cell.qps.iter().enumerate() {
            let psi = p1_values[q];
            for (k, vk) in verts.iter().enumerate() {
                pressure_weights[*vk] += qp.weight * psi[k];
                for (l, vl) in verts.iter().enumerate() {
                    pressure_mass[(*vk, *vl)] += qp.weight * psi[k] * psi[l];
                }
                for (a, node) in cell.nodes.iter().enumerate() {
                    for e in 0..2 {
                        div_full[(*vk, e * n_nodes + node)] += qp.weight * psi[k] * qp.grads[a][e];
                    }
                }
            }
        }
    }
    let mut div_int = DMatrix::zeros(n_vert, 2 * n_int);
    for (node, dof) in velocity.node_dof().iter().enumerate() {
        if let Some(i) = dof {
            for c in 0..2 {
                div_int.set_column(c * n_int + i, &div_full.column(c * n_nodes + node));
            }
        }
    }

    let pressure_basis = linalg::nullspace(
        &DMatrix::from_row_slice(1, n_vert, pressure_weights.as_slice()),
        RANK_TOL,
    );
    let reduced_div = linalg::par_gemm_tn(&pressure_basis, &div_int);
    let gram = &reduced_div * reduced_div.transpose();
    let reduced_div_gram = linalg::spd_cholesky(&gram, "pressure constraint")?;

    let z = linalg::nullspace(&reduced_div, RANK_TOL);
    if z.ncols() == 0 {
        return Err(Error::Config(format!(
            "refinement {refinement} has no discretely divergence-free velocities"
        )));
    }
    let stiff = velocity.stiffness();
    let mut kz = DMatrix::zeros(2 * n_int, z.ncols());
    for c in 0..2 {
        let block = stiff * &z.rows(c * n_int, n_int).into_owned();
        kz.rows_mut(c * n_int, n_int).copy_from(&block);
    }
    let g = linalg::par_gemm_tn(&z, &kz);
    let g = (&g + g.transpose()) * 0.5;
    let basis = z * linalg::orthonormalizing_basis(&g, "divergence-free basis")?;

    let mut boundary_values = DVector::zeros(2 * n_nodes);
    for (node, (x, is_b)) in velocity
        .nodes()
        .iter()
        .zip(velocity.node_is_boundary())
        .enumerate()
    {
        if !is_b {
            continue;
        }
        let v = match &boundary {
            BoundaryData::Homogeneous => [0.0, 0.0],
            BoundaryData::Lid => {
                let top = (x[1] - 1.0).abs() < 1e-12;
                let corner = x[0].abs() < 1e-12 || (x[0] - 1.0).abs() < 1e-12;
                if top && !corner {
                    [1.0, 0.0]
                } else {
                    [0.0, 0.0]
                }
            }
            BoundaryData::Field(f) => f(*x),
        };
        boundary_values[node] = v[0];
        boundary_values[n_nodes + node] = v[1];
    }

    let mut force_vec = DVector::zeros(2 * n_int);
    for (cell, verts) in velocity.cells().iter().zip(&mesh.cells) {
        let grad = match &force {
            BodyForce::PressureGradient(vals) => {
                if vals.len() != n_vert {
                    return Err(Error::Input(format!(
                        "pressure gradient forcing needs {n_vert} vertex values, got {}",
                        vals.len()
                    )));
                }
                let v = [
                    mesh.vertices[verts[0]],
                    mesh.vertices[verts[1]],
                    mesh.vertices[verts[2]],
                ];
                Some(p1_gradient(
                    v,
                    [vals[verts[0]], vals[verts[1]], vals[verts[2]]],
                ))
            }
            _ => None,
        };
        for qp in &cell.qps {
            let f = match (&force, grad) {
                (_, Some(g)) => g,
                (BodyForce::Field(f), None) => f(qp.x),
                _ => continue,
            };
            for (a, dof) in cell.dofs.iter().enumerate() {
                let Some(i) = dof else { continue };
                for c in 0..2 {
                    force_vec[c * n_int + i] += qp.weight * f[c] * qp.values[a];
                }
            }
        }
    }

    let mut core = NsCore {
        velocity,
        n_nodes,
        n_int,
        div_full,
        pressure_mass,
        pressure_weights,
        pressure_basis,
        reduced_div,
        reduced_div_gram,
        basis_t: basis.transpose(),
        basis,
        boundary: boundary_values,
        lift: DVector::zeros(2 * n_nodes),
        force: force_vec,
        infsup: OnceLock::new(),
    };
    core.lift = stokes_lift(&core);
    NavierStokesProblem::assemble(Arc::new(core), nu, 1.0)
}

/// Discretely divergence-free extension of the boundary values that is
/// H¹-orthogonal to the divergence-free interior velocities.
fn stokes_lift(core: &NsCore) -> DVector<f64> {
    if core.boundary.iter().all(|v| *v == 0.0) {
        return DVector::zeros(2 * core.n_nodes);
    }
    let r0 = -core
        .pressure_basis
        .tr_mul(&(&core.div_full * &core.boundary));
    let particular = core.reduced_div.tr_mul(&core.reduced_div_gram.solve(&r0));
    let full = core.embed(&particular) + &core.boundary;
    let alpha = -core.basis.tr_mul(&core.laplace_action(&full));
    full + core.embed(&(&core.basis * alpha))
}

fn p1_gradient(v: [[f64; 2]; 3], f: [f64; 3]) -> [f64; 2] {
    let e1 = [v[1][0] - v[0][0], v[1][1] - v[0][1]];
    let e2 = [v[2][0] - v[0][0], v[2][1] - v[0][1]];
    let (d1, d2) = (f[1] - f[0], f[2] - f[0]);
    let det = e1[0] * e2[1] - e1[1] * e2[0];
    [
        (d1 * e2[1] - d2 * e1[1]) / det,
        (e1[0] * d2 - e2[0] * d1) / det,
    ]
}

/// Power-iteration steps applied to each sampled direction.
const EPSILON_POWER_STEPS: usize = 40;

/// Sampled smallness constant `max |c(u; u_ext, u)| / ‖∇u‖²` of the lift over
/// seeded random divergence-free velocities, each refined by power iteration
/// on the quadratic form `u ↦ c(u; u_ext, u)`. Every iterate is itself a
/// sample, so the result is a lower bound of the exact constant.
pub fn measure_extension_epsilon(
    ns: &NavierStokesProblem,
    samples: usize,
    seed: u64,
) -> Result<f64> {
    if samples == 0 {
        return Err(Error::Input(
            "extension sampling needs at least one sample".into(),
        ));
    }
    let ext = ns.extension();
    if ext.iter().all(|v| *v == 0.0) {
        return Ok(0.0);
    }
    let core = &ns.core;
    let m = core.basis.ncols();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best = 0.0f64;
    for _ in 0..samples {
        let mut x = DVector::from_fn(m, |_, _| StandardNormal.sample(&mut rng));
        for _ in 0..EPSILON_POWER_STEPS {
            x /= x.norm();
            let u = ns.homogeneous_velocity(&x);
            best = best.max(core.convection(&u, &ext, &u).abs());
            let sx = core.basis.tr_mul(&core.convection_gradient(&u, &ext)) * 0.5;
            if !(sx.norm() > 0.0) {
                break;
            }
            x = sx;
        }
    }
    Ok(best)
}
