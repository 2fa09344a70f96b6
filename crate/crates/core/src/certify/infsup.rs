use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::operator::{TestMap, TestMapKind};

/// Constants below this fraction of the largest singular value are reported as zero.
pub const RANK_TOLERANCE: f64 = 1e-12;

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct InfSupReport {
    /// `inf_y sup_x ⟨Ax, y⟩ / (‖x‖ ‖y‖)`.
    pub gamma_xy: f64,
    /// `inf_x sup_y ⟨Ax, y⟩ / (‖x‖ ‖y‖)`.
    pub gamma_yx: f64,
    pub discrepancy: f64,
    pub largest_singular_value: f64,
    pub rows: usize,
    pub cols: usize,
    pub warning: Option<String>,
    /// `x ↦ GY⁻¹ A x`.
    #[serde(skip)]
    pub supremizer: Option<TestMap>,
}

impl PartialEq for InfSupReport {
    fn eq(&self, other: &Self) -> bool {
        self.gamma_xy == other.gamma_xy
            && self.gamma_yx == other.gamma_yx
            && self.discrepancy == other.discrepancy
            && self.largest_singular_value == other.largest_singular_value
            && self.rows == other.rows
            && self.cols == other.cols
            && self.warning == other.warning
    }
}

fn check_shapes(a: &DMatrix<f64>, gx: &DMatrix<f64>, gy: &DMatrix<f64>) -> Result<()> {
    if gx.nrows() != a.ncols()
        || gx.ncols() != a.ncols()
        || gy.nrows() != a.nrows()
        || gy.ncols() != a.nrows()
    {
        return Err(Error::Input(format!(
            "shape mismatch: A is {}x{}, GX is {}x{}, GY is {}x{}",
            a.nrows(),
            a.ncols(),
            gx.nrows(),
            gx.ncols(),
            gy.nrows(),
            gy.ncols()
        )));
    }
    Ok(())
}

fn min_singular(w: &DMatrix<f64>) -> f64 {
    // inf over the column space: zero when there are more columns than rows
    if w.ncols() > w.nrows() || w.ncols() == 0 {
        return 0.0;
    }
    w.clone().svd(false, false).singular_values.min()
}

/// Both inf-sup constants of `a(x, y) = yᵀ A x` with trial Gram `GX` (columns)
/// and test Gram `GY` (rows), from the whitened matrix `GY^{-1/2} A GX^{-1/2}`
/// and its transpose.
pub fn infsup_constants(
    a: &DMatrix<f64>,
    gx: &DMatrix<f64>,
    gy: &DMatrix<f64>,
) -> Result<InfSupReport> {
    check_shapes(a, gx, gy)?;
    let wx = linalg::sym_inv_sqrt(gx, "trial Gram")?;
    let wy = linalg::sym_inv_sqrt(gy, "test Gram")?;
    let w = &wy * a * &wx;
    let wt = w.transpose();
    let gamma_yx = min_singular(&w);
    let gamma_xy = min_singular(&wt);
    let top = if w.is_empty() {
        0.0
    } else {
        w.clone().svd(false, false).singular_values.max()
    };
    let zero = RANK_TOLERANCE * top;
    let (gamma_yx, gamma_xy) = (
        if gamma_yx <= zero { 0.0 } else { gamma_yx },
        if gamma_xy <= zero { 0.0 } else { gamma_xy },
    );
    let warning = (gamma_yx == 0.0 || gamma_xy == 0.0)
        .then(|| "inf-sup constant is zero: operator is rank deficient".to_string());
    let chol = linalg::spd_cholesky(gy, "test Gram")?;
    let supremizer = TestMap::linear(TestMapKind::LinearSupremizer, chol.solve(a))?;
    Ok(InfSupReport {
        gamma_xy,
        gamma_yx,
        discrepancy: (gamma_xy - gamma_yx).abs(),
        largest_singular_value: top,
        rows: a.nrows(),
        cols: a.ncols(),
        warning,
        supremizer: Some(supremizer),
    })
}

/// `α = min_{‖x‖_X = 1} ⟨Ax, Φx⟩` for the supremizer `Φ = GY⁻¹A`, as the smallest
/// eigenvalue of the pencil `(Aᵀ GY⁻¹ A, GX)`.
pub fn supremizer_coercivity_check(
    a: &DMatrix<f64>,
    gx: &DMatrix<f64>,
    gy: &DMatrix<f64>,
) -> Result<f64> {
    check_shapes(a, gx, gy)?;
    linalg::spd_cholesky(gx, "trial Gram")?;
    let chol = linalg::spd_cholesky(gy, "test Gram")?;
    let s = linalg::par_gemm_tn(a, &chol.solve(a));
    let s = (&s + s.transpose()) * 0.5;
    let (alpha, _) = linalg::gen_sym_min_eig(&s, gx)?;
    Ok(alpha)
}
