use std::fmt;

use nalgebra::{DMatrix, DVector};
use nalgebra_sparse::factorization::CscCholesky;
use nalgebra_sparse::{CooMatrix, CscMatrix, CsrMatrix};
use serde::{Deserialize, Serialize};

use super::element;
use super::mesh::Mesh;
use super::quadrature::{interval_rule, triangle_rule, Rule};
use crate::error::{Error, Result};
use crate::linalg;

/// Identifies a discrete space; spaces with equal ids have identical bases.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SpaceId {
    pub dim: usize,
    pub refinement: u32,
    pub degree: usize,
}

/// Coefficients of a function (or functional) against a space's interior basis.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefVec {
    pub values: DVector<f64>,
    pub space: SpaceId,
}

impl CoefVec {
    pub fn new(space: SpaceId, values: DVector<f64>) -> CoefVec {
        CoefVec { values, space }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

#[derive(Debug, Clone)]
pub struct QuadPoint {
    pub x: [f64; 2],
    pub xi: [f64; 2],
    /// Reference weight times the cell Jacobian determinant.
    pub weight: f64,
    pub values: Vec<f64>,
    pub grads: Vec<[f64; 2]>,
}

#[derive(Debug, Clone)]
pub struct CellData {
    /// Global node indices of the local nodes.
    pub nodes: Vec<usize>,
    /// Interior degree of freedom per local node (`None` on the boundary).
    pub dofs: Vec<Option<usize>>,
    pub measure: f64,
    pub qps: Vec<QuadPoint>,
}

/// Conforming P1/P2 Lagrange space on a [`Mesh`] with homogeneous Dirichlet
/// conditions imposed by dropping boundary nodes.
pub struct DiscreteSpace {
    mesh: Mesh,
    degree: usize,
    p: f64,
    nodes: Vec<[f64; 2]>,
    node_boundary: Vec<bool>,
    node_dof: Vec<Option<usize>>,
    dof_node: Vec<usize>,
    cells: Vec<CellData>,
    rule: Rule,
    mass: CsrMatrix<f64>,
    stiffness: CsrMatrix<f64>,
    stiffness_factor: Option<CscCholesky<f64>>,
}

impl fmt::Debug for DiscreteSpace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DiscreteSpace")
            .field("id", &self.id())
            .field("p", &self.p)
            .field("dofs", &self.dof_node.len())
            .finish()
    }
}

impl DiscreteSpace {
    /// Builds the P`degree` space on the `dim`-dimensional unit domain at the
    /// given refinement level, with W^{1,p} exponent `p`.
    pub fn build(dim: usize, refinement: u32, degree: usize, p: f64) -> Result<DiscreteSpace> {
        if !(1..=2).contains(&dim) || !(1..=2).contains(&degree) {
            return Err(Error::Config(format!(
                "unsupported element: dimension {dim}, degree {degree}"
            )));
        }
        if !(p > 1.0) || !p.is_finite() {
            return Err(Error::Domain(format!("exponent p must exceed 1, got {p}")));
        }
        let mesh = Mesh::build(dim, refinement)?;
        let n = mesh.cells_per_side();
        let side = degree * n + 1;
        let spacing = 1.0 / (degree * n) as f64;

        let (nodes, node_boundary): (Vec<[f64; 2]>, Vec<bool>) = if dim == 1 {
            (0..side)
                .map(|i| ([i as f64 * spacing, 0.0], i == 0 || i == side - 1))
                .unzip()
        } else {
            (0..side * side)
                .map(|k| {
                    let (i, j) = (k % side, k / side);
                    let b = i == 0 || j == 0 || i == side - 1 || j == side - 1;
                    ([i as f64 * spacing, j as f64 * spacing], b)
                })
                .unzip()
        };
        let mut node_dof = vec![None; nodes.len()];
        let mut dof_node = Vec::new();
        for (k, b) in node_boundary.iter().enumerate() {
            if !b {
                node_dof[k] = Some(dof_node.len());
                dof_node.push(k);
            }
        }

        let rule = if dim == 1 {
            interval_rule(2 * degree + 2)
        } else {
            triangle_rule(2 * degree + 2)
        };
        let shapes: Vec<(Vec<f64>, Vec<[f64; 2]>)> = rule
            .points
            .iter()
            .map(|xi| element::shape(dim, degree, *xi))
            .collect();

        let lattice = |v: usize| -> (usize, usize) {
            if dim == 1 {
                (degree * v, 0)
            } else {
                (degree * (v % (n + 1)), degree * (v / (n + 1)))
            }
        };
        let node_at = |(i, j): (usize, usize)| j * side + i;

        let mut cells = Vec::with_capacity(mesh.cells.len());
        for cell in &mesh.cells {
            let verts: Vec<(usize, usize)> = cell.iter().map(|v| lattice(*v)).collect();
            let mut local: Vec<(usize, usize)> = verts.clone();
            if degree == 2 {
                let mid = |a: (usize, usize), b: (usize, usize)| ((a.0 + b.0) / 2, (a.1 + b.1) / 2);
                if dim == 1 {
                    local.push(mid(verts[0], verts[1]));
                } else {
                    local.push(mid(verts[0], verts[1]));
                    local.push(mid(verts[1], verts[2]));
                    local.push(mid(verts[2], verts[0]));
                }
            }
            let gnodes: Vec<usize> = local.iter().map(|l| node_at(*l)).collect();
            let dofs: Vec<Option<usize>> = gnodes.iter().map(|g| node_dof[*g]).collect();
            let x0 = mesh.vertices[cell[0]];
            let (b, det) = if dim == 1 {
                let h = mesh.vertices[cell[1]][0] - x0[0];
                ([[h, 0.0], [0.0, 1.0]], h)
            } else {
                let x1 = mesh.vertices[cell[1]];
                let x2 = mesh.vertices[cell[2]];
                let b = [
                    [x1[0] - x0[0], x2[0] - x0[0]],
                    [x1[1] - x0[1], x2[1] - x0[1]],
                ];
                (b, b[0][0] * b[1][1] - b[0][1] * b[1][0])
            };
            // inverse transpose of the affine Jacobian
            let binv_t = [
                [b[1][1] / det, -b[1][0] / det],
                [-b[0][1] / det, b[0][0] / det],
            ];
            let qps = rule
                .points
                .iter()
                .zip(&rule.weights)
                .zip(&shapes)
                .map(|((xi, w), (vals, rgrads))| {
                    let x = [
                        x0[0] + b[0][0] * xi[0] + b[0][1] * xi[1],
                        x0[1] + b[1][0] * xi[0] + b[1][1] * xi[1],
                    ];
                    let grads = rgrads
                        .iter()
                        .map(|g| {
                            if dim == 1 {
                                [g[0] / det, 0.0]
                            } else {
                                [
                                    binv_t[0][0] * g[0] + binv_t[0][1] * g[1],
                                    binv_t[1][0] * g[0] + binv_t[1][1] * g[1],
                                ]
                            }
                        })
                        .collect();
                    QuadPoint {
                        x,
                        xi: *xi,
                        weight: w * det.abs(),
                        values: vals.clone(),
                        grads,
                    }
                })
                .collect();
            let measure = if dim == 1 { det.abs() } else { 0.5 * det.abs() };
            cells.push(CellData {
                nodes: gnodes,
                dofs,
                measure,
                qps,
            });
        }

        let ndof = dof_node.len();
        let mut mass = CooMatrix::new(ndof, ndof);
        let mut stiff = CooMatrix::new(ndof, ndof);
        for cell in &cells {
            for qp in &cell.qps {
                for (a, da) in cell.dofs.iter().enumerate() {
                    let Some(i) = da else { continue };
                    for (b, db) in cell.dofs.iter().enumerate() {
                        let Some(j) = db else { continue };
                        mass.push(*i, *j, qp.weight * qp.values[a] * qp.values[b]);
                        let g = qp.grads[a][0] * qp.grads[b][0] + qp.grads[a][1] * qp.grads[b][1];
                        stiff.push(*i, *j, qp.weight * g);
                    }
                }
            }
        }
        let mass = CsrMatrix::from(&mass);
        let stiffness = CsrMatrix::from(&stiff);
        let stiffness_factor = if ndof > 0 {
            Some(
                CscCholesky::factor(&CscMatrix::from(&stiffness)).map_err(|e| {
                    Error::Internal(format!("stiffness matrix is not positive definite: {e:?}"))
                })?,
            )
        } else {
            None
        };

        Ok(DiscreteSpace {
            mesh,
            degree,
            p,
            nodes,
            node_boundary,
            node_dof,
            dof_node,
            cells,
            rule,
            mass,
            stiffness,
            stiffness_factor,
        })
    }

    pub fn id(&self) -> SpaceId {
        SpaceId {
            dim: self.mesh.dimension,
            refinement: self.mesh.refinement,
            degree: self.degree,
        }
    }

    /// Number of interior degrees of freedom.
    pub fn dim(&self) -> usize {
        self.dof_node.len()
    }

    pub fn spatial_dim(&self) -> usize {
        self.mesh.dimension
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn mesh(&self) -> &Mesh {
        &self.mesh
    }

    pub fn nodes(&self) -> &[[f64; 2]] {
        &self.nodes
    }

    pub fn node_is_boundary(&self) -> &[bool] {
        &self.node_boundary
    }

    pub fn node_dof(&self) -> &[Option<usize>] {
        &self.node_dof
    }

    pub fn dof_coordinates(&self, dof: usize) -> [f64; 2] {
        self.nodes[self.dof_node[dof]]
    }

    pub fn cells(&self) -> &[CellData] {
        &self.cells
    }

    pub fn rule(&self) -> &Rule {
        &self.rule
    }

    /// L2 Gram matrix on interior degrees of freedom.
    pub fn mass(&self) -> &CsrMatrix<f64> {
        &self.mass
    }

    /// H1 stiffness matrix `∫ ∇v_i · ∇v_j` on interior degrees of freedom.
    pub fn stiffness(&self) -> &CsrMatrix<f64> {
        &self.stiffness
    }

    pub fn mass_dense(&self) -> DMatrix<f64> {
        linalg::csr_to_dense(&self.mass)
    }

    pub fn stiffness_dense(&self) -> DMatrix<f64> {
        linalg::csr_to_dense(&self.stiffness)
    }

    pub fn zeros(&self) -> CoefVec {
        CoefVec::new(self.id(), DVector::zeros(self.dim()))
    }

    pub fn coef(&self, values: DVector<f64>) -> Result<CoefVec> {
        if values.len() != self.dim() {
            return Err(Error::Input(format!(
                "coefficient vector has length {}, space dimension is {}",
                values.len(),
                self.dim()
            )));
        }
        Ok(CoefVec::new(self.id(), values))
    }

    pub fn check(&self, u: &CoefVec) -> Result<()> {
        if u.space != self.id() || u.len() != self.dim() {
            return Err(Error::Input(format!(
                "vector of space {:?} used with space {:?}",
                u.space,
                self.id()
            )));
        }
        Ok(())
    }

    /// Value and gradient of the function `u` at quadrature point `q` of cell `c`.
    pub fn eval_qp(&self, c: usize, q: usize, u: &[f64]) -> (f64, [f64; 2]) {
        let cell = &self.cells[c];
        let qp = &cell.qps[q];
        let mut val = 0.0;
        let mut grad = [0.0; 2];
        for (a, d) in cell.dofs.iter().enumerate() {
            if let Some(i) = d {
                let ui = u[*i];
                val += ui * qp.values[a];
                grad[0] += ui * qp.grads[a][0];
                grad[1] += ui * qp.grads[a][1];
            }
        }
        (val, grad)
    }

    /// `Σ_i ∫ |∂u/∂x_i|^p` by quadrature.
    pub fn gradient_p_integral(&self, u: &[f64], p: f64) -> f64 {
        let d = self.spatial_dim();
        let mut s = 0.0;
        for (c, cell) in self.cells.iter().enumerate() {
            for (q, qp) in cell.qps.iter().enumerate() {
                let (_, g) = self.eval_qp(c, q, u);
                for gi in g.iter().take(d) {
                    s += qp.weight * gi.abs().powf(p);
                }
            }
        }
        s
    }

    /// Anisotropic gradient norm `(Σ_i ∫ |∂u/∂x_i|^p)^{1/p}`.
    pub fn norm_w1p(&self, u: &CoefVec, p: f64) -> Result<f64> {
        self.check(u)?;
        check_exponent(p)?;
        Ok(self.norm_w1p_raw(u.values.as_slice(), p))
    }

    pub fn norm_w1p_raw(&self, u: &[f64], p: f64) -> f64 {
        self.gradient_p_integral(u, p).powf(1.0 / p)
    }

    /// Coefficients `j_k = ⟨J(u), v_k⟩ = Σ_i ∫ sgn(∂_i u)|∂_i u|^{p−1} ∂_i v_k`.
    pub fn duality_map(&self, u: &CoefVec, p: f64) -> Result<CoefVec> {
        self.check(u)?;
        check_exponent(p)?;
        Ok(CoefVec::new(
            self.id(),
            self.duality_map_raw(u.values.as_slice(), p),
        ))
    }

    pub fn duality_map_raw(&self, u: &[f64], p: f64) -> DVector<f64> {
        let d = self.spatial_dim();
        let mut out = DVector::zeros(self.dim());
        for (c, cell) in self.cells.iter().enumerate() {
            for (q, qp) in cell.qps.iter().enumerate() {
                let (_, g) = self.eval_qp(c, q, u);
                let flux: Vec<f64> = g
                    .iter()
                    .take(d)
                    .map(|gi| signed_power(*gi, p - 1.0))
                    .collect();
                for (a, dof) in cell.dofs.iter().enumerate() {
                    if let Some(k) = dof {
                        let mut s = 0.0;
                        for (i, fi) in flux.iter().enumerate() {
                            s += fi * qp.grads[a][i];
                        }
                        out[*k] += qp.weight * s;
                    }
                }
            }
        }
        out
    }

    /// Derivative of the duality map: `Σ_i ∫ (p−1)(|∂_i u|² + δ²)^{(p−2)/2} ∂_i v_j ∂_i v_k`.
    /// `delta` regularizes the degenerate (p > 2) or singular (p < 2) weight.
    pub fn duality_map_jacobian(&self, u: &[f64], p: f64, delta: f64) -> DMatrix<f64> {
        let d = self.spatial_dim();
        let n = self.dim();
        let mut out = DMatrix::zeros(n, n);
        for (c, cell) in self.cells.iter().enumerate() {
            for (q, qp) in cell.qps.iter().enumerate() {
                let (_, g) = self.eval_qp(c, q, u);
                let wts: Vec<f64> = g
                    .iter()
                    .take(d)
                    .map(|gi| (p - 1.0) * (gi * gi + delta * delta).powf(0.5 * (p - 2.0)))
                    .collect();
                for (a, da) in cell.dofs.iter().enumerate() {
                    let Some(j) = da else { continue };
                    for (b, db) in cell.dofs.iter().enumerate() {
                        let Some(k) = db else { continue };
                        let mut s = 0.0;
                        for (i, wi) in wts.iter().enumerate() {
                            s += wi * qp.grads[a][i] * qp.grads[b][i];
                        }
                        out[(*j, *k)] += qp.weight * s;
                    }
                }
            }
        }
        out
    }

    /// Solves `K z = rhs` with the stiffness matrix.
    pub fn poisson_solve(&self, rhs: &CoefVec) -> Result<CoefVec> {
        self.check(rhs)?;
        Ok(CoefVec::new(self.id(), self.poisson_solve_raw(&rhs.values)))
    }

    pub fn poisson_solve_raw(&self, rhs: &DVector<f64>) -> DVector<f64> {
        match &self.stiffness_factor {
            Some(f) => {
                let sol = f.solve(rhs);
                DVector::from_column_slice(sol.as_slice())
            }
            None => DVector::zeros(0),
        }
    }

    /// Nodal interpolant of `f`; boundary values are implicitly zero.
    pub fn interpolate<F: Fn([f64; 2]) -> f64>(&self, f: F) -> Result<CoefVec> {
        let mut v = DVector::zeros(self.dim());
        for (k, node) in self.dof_node.iter().enumerate() {
            let x = self.nodes[*node];
            let fx = f(x);
            if !fx.is_finite() {
                return Err(Error::Input(format!(
                    "non-finite value {fx} at node ({}, {})",
                    x[0], x[1]
                )));
            }
            v[k] = fx;
        }
        Ok(CoefVec::new(self.id(), v))
    }

    /// Point evaluation of the finite element function `u`.
    pub fn evaluate(&self, u: &[f64], x: [f64; 2]) -> f64 {
        let c = self.mesh.locate(x);
        let cell = &self.mesh.cells[c];
        let x0 = self.mesh.vertices[cell[0]];
        let xi = if self.spatial_dim() == 1 {
            let h = self.mesh.vertices[cell[1]][0] - x0[0];
            [(x[0] - x0[0]) / h, 0.0]
        } else {
            let x1 = self.mesh.vertices[cell[1]];
            let x2 = self.mesh.vertices[cell[2]];
            let b = [
                [x1[0] - x0[0], x2[0] - x0[0]],
                [x1[1] - x0[1], x2[1] - x0[1]],
            ];
            let det = b[0][0] * b[1][1] - b[0][1] * b[1][0];
            let (dx, dy) = (x[0] - x0[0], x[1] - x0[1]);
            [
                (b[1][1] * dx - b[0][1] * dy) / det,
                (-b[1][0] * dx + b[0][0] * dy) / det,
            ]
        };
        let (vals, _) = element::shape(self.spatial_dim(), self.degree, xi);
        self.cells[c]
            .dofs
            .iter()
            .zip(&vals)
            .filter_map(|(d, v)| d.map(|i| u[i] * v))
            .sum()
    }

    /// Exact embedding of a function of a coarser nested space into this one.
    pub fn prolongate_from(&self, coarse: &DiscreteSpace, u: &[f64]) -> DVector<f64> {
        DVector::from_iterator(
            self.dim(),
            self.dof_node
                .iter()
                .map(|node| coarse.evaluate(u, self.nodes[*node])),
        )
    }

    /// Load vector `∫ g v_k`.
    pub fn load_vector<G: Fn([f64; 2]) -> f64>(&self, g: G) -> DVector<f64> {
        let mut out = DVector::zeros(self.dim());
        for cell in &self.cells {
            for qp in &cell.qps {
                let gx = g(qp.x);
                for (a, d) in cell.dofs.iter().enumerate() {
                    if let Some(k) = d {
                        out[*k] += qp.weight * gx * qp.values[a];
                    }
                }
            }
        }
        out
    }

    /// `∫ f(u) v_k` for a pointwise nonlinearity `f`.
    pub fn nonlinear_load<F: Fn(f64) -> f64 + ?Sized>(&self, u: &[f64], f: &F) -> DVector<f64> {
        let mut out = DVector::zeros(self.dim());
        for (c, cell) in self.cells.iter().enumerate() {
            for (q, qp) in cell.qps.iter().enumerate() {
                let (val, _) = self.eval_qp(c, q, u);
                let fv = f(val);
                for (a, d) in cell.dofs.iter().enumerate() {
                    if let Some(k) = d {
                        out[*k] += qp.weight * fv * qp.values[a];
                    }
                }
            }
        }
        out
    }

    /// Weighted mass matrix `∫ w(u) v_j v_k`.
    pub fn weighted_mass<F: Fn(f64) -> f64 + ?Sized>(&self, u: &[f64], w: &F) -> DMatrix<f64> {
        let n = self.dim();
        let mut out = DMatrix::zeros(n, n);
        for (c, cell) in self.cells.iter().enumerate() {
            for (q, qp) in cell.qps.iter().enumerate() {
                let (val, _) = self.eval_qp(c, q, u);
                let wv = w(val) * qp.weight;
                for (a, da) in cell.dofs.iter().enumerate() {
                    let Some(j) = da else { continue };
                    for (b, db) in cell.dofs.iter().enumerate() {
                        let Some(k) = db else { continue };
                        out[(*j, *k)] += wv * qp.values[a] * qp.values[b];
                    }
                }
            }
        }
        out
    }

    pub fn l2_norm(&self, u: &[f64]) -> f64 {
        let v = DVector::from_column_slice(u);
        linalg::csr_quadratic(&self.mass, &v).max(0.0).sqrt()
    }

    /// H1 seminorm `‖∇u‖_{L2}`.
    pub fn h1_seminorm(&self, u: &[f64]) -> f64 {
        let v = DVector::from_column_slice(u);
        linalg::csr_quadratic(&self.stiffness, &v).max(0.0).sqrt()
    }

    /// L2 distance between `u` and a smooth function, by quadrature.
    pub fn l2_error<F: Fn([f64; 2]) -> f64>(&self, u: &[f64], exact: F) -> f64 {
        let mut s = 0.0;
        for (c, cell) in self.cells.iter().enumerate() {
            for (q, qp) in cell.qps.iter().enumerate() {
                let (val, _) = self.eval_qp(c, q, u);
                let e = val - exact(qp.x);
                s += qp.weight * e * e;
            }
        }
        s.sqrt()
    }
}

pub(crate) fn check_exponent(p: f64) -> Result<()> {
    if p > 1.0 && p.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!("exponent must exceed 1, got {p}")))
    }
}

/// `sgn(s)|s|^e`, with the value 0 at `s = 0`.
pub fn signed_power(s: f64, e: f64) -> f64 {
    if s == 0.0 {
        0.0
    } else {
        s.signum() * s.abs().powf(e)
    }
}
