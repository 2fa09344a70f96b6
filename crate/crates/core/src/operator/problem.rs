use std::fmt;
use std::sync::{Arc, OnceLock};

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fnspace::DiscreteSpace;
use crate::linalg;

/// An operator `A: X_n → Y_n'` given through its action on the test basis:
/// `apply(x)_j = a(x, w_j) = ⟨A(x), w_j⟩`.
///
/// Implementations must be pure so they can be evaluated from several threads.
pub trait NonlinearForm: Send + Sync {
    fn apply(&self, x: &DVector<f64>) -> DVector<f64>;

    /// `J[j][k] = a'(x)(e_k, w_j)` when available.
    fn jacobian(&self, _x: &DVector<f64>) -> Option<DMatrix<f64>> {
        None
    }
}

pub type VecFn = Arc<dyn Fn(&DVector<f64>) -> DVector<f64> + Send + Sync>;
pub type MatFn = Arc<dyn Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync>;

/// A form given by closures.
#[derive(Clone)]
pub struct ClosureForm {
    apply: VecFn,
    jacobian: Option<MatFn>,
}

impl ClosureForm {
    pub fn new(
        apply: impl Fn(&DVector<f64>) -> DVector<f64> + Send + Sync + 'static,
    ) -> ClosureForm {
        ClosureForm {
            apply: Arc::new(apply),
            jacobian: None,
        }
    }

    pub fn with_jacobian(
        mut self,
        jacobian: impl Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync + 'static,
    ) -> ClosureForm {
        self.jacobian = Some(Arc::new(jacobian));
        self
    }
}

impl NonlinearForm for ClosureForm {
    fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        (self.apply)(x)
    }

    fn jacobian(&self, x: &DVector<f64>) -> Option<DMatrix<f64>> {
        self.jacobian.as_ref().map(|j| j(x))
    }
}

pub trait SpaceNorm: Send + Sync {
    fn norm(&self, x: &DVector<f64>) -> f64;
}

struct EuclideanNorm;

impl SpaceNorm for EuclideanNorm {
    fn norm(&self, x: &DVector<f64>) -> f64 {
        x.norm()
    }
}

struct GramNorm(Arc<DMatrix<f64>>);

impl SpaceNorm for GramNorm {
    fn norm(&self, x: &DVector<f64>) -> f64 {
        x.dot(&(&*self.0 * x)).max(0.0).sqrt()
    }
}

struct W1pNorm {
    space: Arc<DiscreteSpace>,
    p: f64,
}

impl SpaceNorm for W1pNorm {
    fn norm(&self, x: &DVector<f64>) -> f64 {
        self.space.norm_w1p_raw(x.as_slice(), self.p)
    }
}

/// Coordinates of a finite-dimensional trial or test space together with its
/// norm and (optionally) the inner product used to orthonormalize its basis.
#[derive(Clone)]
pub struct CoordSpace {
    label: String,
    dim: usize,
    norm: Arc<dyn SpaceNorm>,
    gram: Option<Arc<DMatrix<f64>>>,
    fe: Option<(Arc<DiscreteSpace>, f64)>,
    basis: Arc<OnceLock<std::result::Result<Option<Arc<DMatrix<f64>>>, Error>>>,
}

impl fmt::Debug for CoordSpace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CoordSpace")
            .field("label", &self.label)
            .field("dim", &self.dim)
            .finish()
    }
}

impl CoordSpace {
    fn make(
        label: String,
        dim: usize,
        norm: Arc<dyn SpaceNorm>,
        gram: Option<Arc<DMatrix<f64>>>,
    ) -> CoordSpace {
        CoordSpace {
            label,
            dim,
            norm,
            gram,
            fe: None,
            basis: Arc::new(OnceLock::new()),
        }
    }

    /// Coordinates that are already orthonormal.
    pub fn euclidean(dim: usize) -> CoordSpace {
        CoordSpace::make(format!("R^{dim}"), dim, Arc::new(EuclideanNorm), None)
    }

    /// Hilbert space with Gram matrix `g`.
    pub fn with_gram(label: &str, g: DMatrix<f64>) -> CoordSpace {
        let g = Arc::new(g);
        CoordSpace::make(
            label.to_string(),
            g.nrows(),
            Arc::new(GramNorm(g.clone())),
            Some(g),
        )
    }

    /// `W^{1,p}_0` realized by a finite element space; orthonormalization uses
    /// the H1 stiffness inner product.
    pub fn w1p(space: Arc<DiscreteSpace>, p: f64) -> CoordSpace {
        let gram = Arc::new(space.stiffness_dense());
        let mut cs = CoordSpace::make(
            format!("W1,{p}({:?})", space.id()),
            space.dim(),
            Arc::new(W1pNorm {
                space: space.clone(),
                p,
            }),
            Some(gram),
        );
        cs.fe = Some((space, p));
        cs
    }

    pub fn custom(
        label: &str,
        dim: usize,
        norm: Arc<dyn SpaceNorm>,
        gram: Option<DMatrix<f64>>,
    ) -> CoordSpace {
        CoordSpace::make(label.to_string(), dim, norm, gram.map(Arc::new))
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn norm(&self, x: &DVector<f64>) -> f64 {
        self.norm.norm(x)
    }

    pub fn gram(&self) -> Option<&DMatrix<f64>> {
        self.gram.as_deref()
    }

    /// Finite element space and exponent when this is a `W^{1,p}_0` realization.
    pub fn fe_space(&self) -> Option<(&Arc<DiscreteSpace>, f64)> {
        self.fe.as_ref().map(|(s, p)| (s, *p))
    }

    /// Basis orthonormal in the Gram inner product, as columns in these
    /// coordinates. `None` means the coordinates are already orthonormal.
    pub fn orthonormal_basis(&self) -> Result<Option<Arc<DMatrix<f64>>>> {
        self.basis
            .get_or_init(|| match &self.gram {
                None => Ok(None),
                Some(g) => {
                    linalg::orthonormalizing_basis(g, &self.label).map(|b| Some(Arc::new(b)))
                }
            })
            .clone()
    }

    /// Maps orthonormal coordinates to these coordinates.
    pub fn from_orthonormal(&self, c: &DVector<f64>) -> Result<DVector<f64>> {
        Ok(match self.orthonormal_basis()? {
            None => c.clone(),
            Some(b) => &*b * c,
        })
    }

    /// A random direction of unit norm, drawn from an isotropic Gaussian in
    /// orthonormal coordinates.
    pub fn random_unit<R: Rng>(&self, rng: &mut R) -> Result<DVector<f64>> {
        loop {
            let c = DVector::from_fn(self.dim, |_, _| rng.sample::<f64, _>(StandardNormal));
            let x = self.from_orthonormal(&c)?;
            let n = self.norm(&x);
            if n > 0.0 && n.is_finite() {
                return Ok(x / n);
            }
        }
    }

    /// A random point of the orthonormal-coordinate ball of the given radius.
    pub fn random_in_ball<R: Rng>(&self, rng: &mut R, radius: f64) -> Result<DVector<f64>> {
        let c = DVector::from_fn(self.dim, |_, _| rng.sample::<f64, _>(StandardNormal));
        let cn = c.norm();
        if cn == 0.0 {
            return Ok(DVector::zeros(self.dim));
        }
        let u: f64 = rng.random_range(0.0..1.0);
        let r = radius * u.powf(1.0 / self.dim.max(1) as f64);
        self.from_orthonormal(&(c * (r / cn)))
    }
}

/// The discrete problem `x ∈ X_n: a(x, y) = ⟨b, y⟩ for y ∈ Y_n`.
#[derive(Clone)]
pub struct OperatorProblem {
    name: String,
    form: Arc<dyn NonlinearForm>,
    trial: CoordSpace,
    test: CoordSpace,
    rhs: DVector<f64>,
    rhs_dual_norm: Option<f64>,
    same_space: bool,
}

impl fmt::Debug for OperatorProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("OperatorProblem")
            .field("name", &self.name)
            .field("trial", &self.trial)
            .field("test", &self.test)
            .finish()
    }
}

impl OperatorProblem {
    pub fn new(
        name: &str,
        form: Arc<dyn NonlinearForm>,
        trial: CoordSpace,
        test: CoordSpace,
        rhs: DVector<f64>,
    ) -> Result<OperatorProblem> {
        if rhs.len() != test.dim() {
            return Err(Error::Input(format!(
                "right-hand side has length {}, test space dimension is {}",
                rhs.len(),
                test.dim()
            )));
        }
        Ok(OperatorProblem {
            name: name.to_string(),
            form,
            trial,
            test,
            rhs,
            rhs_dual_norm: None,
            same_space: false,
        })
    }

    /// Declares `X_n = Y_n` (same coordinates and basis), enabling monotonicity sampling.
    pub fn with_same_space(mut self) -> Self {
        self.same_space = self.trial.dim() == self.test.dim();
        self
    }

    pub fn with_rhs_dual_norm(mut self, value: f64) -> Self {
        self.rhs_dual_norm = Some(value);
        self
    }

    /// Replaces the right-hand side; the dual norm estimate is dropped unless given.
    pub fn with_rhs(&self, rhs: DVector<f64>, dual_norm: Option<f64>) -> Result<OperatorProblem> {
        if rhs.len() != self.test.dim() {
            return Err(Error::Input("right-hand side has wrong length".into()));
        }
        let mut p = self.clone();
        p.rhs = rhs;
        p.rhs_dual_norm = dual_norm;
        Ok(p)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn trial(&self) -> &CoordSpace {
        &self.trial
    }

    pub fn test(&self) -> &CoordSpace {
        &self.test
    }

    pub fn same_space(&self) -> bool {
        self.same_space
    }

    pub fn form(&self) -> &Arc<dyn NonlinearForm> {
        &self.form
    }

    pub fn rhs(&self) -> &DVector<f64> {
        &self.rhs
    }

    pub fn rhs_dual_norm(&self) -> Option<f64> {
        self.rhs_dual_norm
    }

    /// `A(x)` as coefficients against the test basis.
    pub fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        self.form.apply(x)
    }

    /// `a(x, y)`.
    pub fn form_eval(&self, x: &DVector<f64>, y: &DVector<f64>) -> f64 {
        self.form.apply(x).dot(y)
    }

    /// `⟨b, y⟩`.
    pub fn rhs_eval(&self, y: &DVector<f64>) -> f64 {
        self.rhs.dot(y)
    }

    pub fn jacobian(&self, x: &DVector<f64>) -> Option<DMatrix<f64>> {
        self.form.jacobian(x)
    }

    /// Gateaux derivative `a'(x)(dx, y)` when the form provides a Jacobian.
    pub fn derivative(&self, x: &DVector<f64>, dx: &DVector<f64>, y: &DVector<f64>) -> Option<f64> {
        self.form.jacobian(x).map(|j| y.dot(&(j * dx)))
    }

    /// Jacobian of `apply` by central differences with step `1e-6 (1 + ‖x‖)`.
    pub fn fd_jacobian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let h = 1e-6 * (1.0 + x.norm());
        let cols: Vec<DVector<f64>> = (0..x.len())
            .into_par_iter()
            .map(|k| {
                let mut xp = x.clone();
                xp[k] = x[k] + h;
                let fp = self.form.apply(&xp);
                xp[k] = x[k] - h;
                let fm = self.form.apply(&xp);
                (fp - fm) / (2.0 * h)
            })
            .collect();
        if cols.is_empty() {
            return DMatrix::zeros(self.test.dim(), 0);
        }
        DMatrix::from_columns(&cols)
    }

    /// Largest deviation from linearity in `y` of `a(x, ·)` and `⟨b, ·⟩` over
    /// random samples, relative to the magnitudes involved.
    pub fn linearity_defect<R: Rng>(&self, rng: &mut R, samples: usize) -> f64 {
        let n = self.trial.dim();
        let m = self.test.dim();
        let mut worst = 0.0f64;
        for _ in 0..samples {
            let x = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
            let y1 = DVector::from_fn(m, |_, _| rng.random_range(-1.0..1.0));
            let y2 = DVector::from_fn(m, |_, _| rng.random_range(-1.0..1.0));
            let alpha: f64 = rng.random_range(-2.0..2.0);
            let y = &y1 * alpha + &y2;
            let (a1, a2, a) = (
                self.form_eval(&x, &y1),
                self.form_eval(&x, &y2),
                self.form_eval(&x, &y),
            );
            let (b1, b2, b) = (self.rhs_eval(&y1), self.rhs_eval(&y2), self.rhs_eval(&y));
            let da = (a - alpha * a1 - a2).abs() / (1.0 + a.abs() + a1.abs() + a2.abs());
            let db = (b - alpha * b1 - b2).abs() / (1.0 + b.abs() + b1.abs() + b2.abs());
            worst = worst.max(da).max(db);
        }
        worst
    }

    /// `‖b‖_{Y'}`: the stored estimate, the exact Hilbert dual norm when the test
    /// space has a Gram matrix, or a basis-ratio search otherwise.
    pub fn estimate_rhs_dual_norm(&self) -> f64 {
        if let Some(v) = self.rhs_dual_norm {
            return v;
        }
        estimate_dual_norm(&self.test, &self.rhs)
    }
}

/// Estimate of `sup_y ⟨g, y⟩ / ‖y‖_Y` over the coordinate space `test`.
pub fn estimate_dual_norm(test: &CoordSpace, g: &DVector<f64>) -> f64 {
    if g.amax() == 0.0 {
        return 0.0;
    }
    if let Some((fe, q)) = test.fe_space() {
        return crate::fnspace::dual_norm(fe, g, q);
    }
    if let Some(gram) = test.gram() {
        if let Some(chol) = gram.clone().cholesky() {
            let y = chol.solve(g);
            let n = test.norm(&y);
            if n > 0.0 {
                return g.dot(&y) / n;
            }
        }
    }
    // generic fallback: best basis ratio refined by coordinate sweeps
    let n = g.len();
    let ratio = |y: &DVector<f64>| {
        let ny = test.norm(y);
        if ny > 0.0 {
            g.dot(y) / ny
        } else {
            0.0
        }
    };
    let mut y = DVector::zeros(n);
    let mut best = 0.0;
    for k in 0..n {
        let mut e = DVector::zeros(n);
        e[k] = g[k].signum();
        let r = ratio(&e);
        if r > best {
            best = r;
            y = e;
        }
    }
    let mut step = 0.5;
    for _ in 0..6 {
        for k in 0..n {
            for s in [step, -step] {
                let mut t = y.clone();
                t[k] += s;
                let r = ratio(&t);
                if r > best {
                    best = r;
                    y = t;
                }
            }
        }
        step *= 0.5;
    }
    best
}
