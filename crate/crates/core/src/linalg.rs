//! Dense linear-algebra helpers shared by the solver and certification layers.

use nalgebra::{DMatrix, DVector};
use nalgebra_sparse::CsrMatrix;
use rayon::prelude::*;

use crate::error::{Error, Result};

/// Dimension above which Newton steps switch from dense LU to restarted GMRES.
pub const DENSE_LU_LIMIT: usize = 2000;

/// Smallest-to-largest LU pivot ratio below which a matrix is treated as singular.
const PIVOT_RATIO_FLOOR: f64 = 1e-13;

/// Converts a CSR matrix into a dense one.
pub fn csr_to_dense(a: &CsrMatrix<f64>) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(a.nrows(), a.ncols());
    for (i, j, v) in a.triplet_iter() {
        out[(i, j)] += *v;
    }
    out
}

pub fn csr_mul_vec(a: &CsrMatrix<f64>, x: &DVector<f64>) -> DVector<f64> {
    let mut y = DVector::zeros(a.nrows());
    for (i, row) in a.row_iter().enumerate() {
        let mut s = 0.0;
        for (j, v) in row.col_indices().iter().zip(row.values()) {
            s += v * x[*j];
        }
        y[i] = s;
    }
    y
}

/// `x^T A x` for a CSR matrix.
pub fn csr_quadratic(a: &CsrMatrix<f64>, x: &DVector<f64>) -> f64 {
    x.dot(&csr_mul_vec(a, x))
}

/// `a^T b`, computed in parallel over column blocks of `b`.
pub fn par_gemm_tn(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    assert_eq!(a.nrows(), b.nrows(), "par_gemm_tn: inner dimensions differ");
    let cols = b.ncols();
    let block = cols
        .div_ceil(rayon::current_num_threads().max(1) * 4)
        .max(16);
    let starts: Vec<usize> = (0..cols).step_by(block).collect();
    let at = a.transpose();
    let parts: Vec<DMatrix<f64>> = starts
        .par_iter()
        .map(|&s| {
            let w = block.min(cols - s);
            &at * b.columns(s, w)
        })
        .collect();
    let mut out = DMatrix::zeros(a.ncols(), cols);
    for (s, part) in starts.iter().zip(parts) {
        out.columns_mut(*s, part.ncols()).copy_from(&part);
    }
    out
}

/// Checks that `g` is symmetric (relative 1e-10) and returns its Cholesky factor.
pub fn spd_cholesky(
    g: &DMatrix<f64>,
    what: &str,
) -> Result<nalgebra::Cholesky<f64, nalgebra::Dyn>> {
    if !g.is_square() {
        return Err(Error::Input(format!("{what}: Gram matrix is not square")));
    }
    let scale = g.amax().max(f64::MIN_POSITIVE);
    let asym = (g - g.transpose()).amax();
    if asym > 1e-10 * scale {
        return Err(Error::Input(format!(
            "{what}: Gram matrix is not symmetric (asymmetry {asym:.3e})"
        )));
    }
    g.clone()
        .cholesky()
        .ok_or_else(|| Error::Input(format!("{what}: Gram matrix is not positive definite")))
}

/// Returns `L^{-T}` for the Cholesky factor `L` of `g`. The columns are `g`-orthonormal.
pub fn orthonormalizing_basis(g: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    let chol = spd_cholesky(g, what)?;
    let l = chol.l();
    let n = g.nrows();
    let lt = l.transpose();
    lt.solve_upper_triangular(&DMatrix::identity(n, n))
        .ok_or_else(|| Error::Internal(format!("{what}: triangular inverse failed")))
}

/// Symmetric inverse square root `G^{-1/2}` through an eigendecomposition.
pub fn sym_inv_sqrt(g: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    spd_cholesky(g, what)?;
    let eig = g.clone().symmetric_eigen();
    let mut d = eig.eigenvalues.clone();
    for v in d.iter_mut() {
        *v = 1.0 / v.sqrt();
    }
    let q = &eig.eigenvectors;
    Ok(q * DMatrix::from_diagonal(&d) * q.transpose())
}

/// Smallest eigenpair of a symmetric matrix.
pub fn sym_min_eig(s: &DMatrix<f64>) -> (f64, DVector<f64>) {
    let sym = (s + s.transpose()) * 0.5;
    let eig = sym.symmetric_eigen();
    let (k, val) = eig
        .eigenvalues
        .iter()
        .enumerate()
        .fold(
            (0, f64::INFINITY),
            |acc, (i, v)| if *v < acc.1 { (i, *v) } else { acc },
        );
    (val, eig.eigenvectors.column(k).into_owned())
}

/// Smallest eigenpair of the symmetric-definite pencil `(a, b)`: `a v = λ b v`,
/// eigenvector normalized to `v^T b v = 1`.
pub fn gen_sym_min_eig(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<(f64, DVector<f64>)> {
    let chol = spd_cholesky(b, "pencil")?;
    let l = chol.l();
    let linv = l
        .solve_lower_triangular(&DMatrix::identity(b.nrows(), b.nrows()))
        .ok_or_else(|| Error::Internal("pencil: triangular inverse failed".into()))?;
    let c = &linv * a * linv.transpose();
    let (val, w) = sym_min_eig(&c);
    let v = linv.transpose() * w;
    Ok((val, v))
}

/// Orthonormal basis of the null space of `a` (rows are constraints), from a
/// column-pivoted Householder QR of `a^T`. Columns with remaining norm below
/// `rel_tol` times the largest initial column norm are treated as dependent.
pub fn nullspace(a: &DMatrix<f64>, rel_tol: f64) -> DMatrix<f64> {
    let mut w = a.transpose();
    let (n, m) = w.shape();
    let mut norms: Vec<f64> = (0..m).map(|j| w.column(j).norm()).collect();
    let max0 = norms.iter().cloned().fold(0.0, f64::max);
    let mut reflectors: Vec<(usize, DVector<f64>)> = Vec::new();
    let mut rank = 0;
    for k in 0..m.min(n) {
        for (j, nj) in norms.iter_mut().enumerate().skip(k) {
            *nj = w.view((k, j), (n - k, 1)).norm();
        }
        let (piv, best) = norms
            .iter()
            .enumerate()
            .skip(k)
            .fold(
                (k, -1.0),
                |acc, (j, v)| if *v > acc.1 { (j, *v) } else { acc },
            );
        if best <= rel_tol * max0 || best == 0.0 {
            break;
        }
        w.swap_columns(k, piv);
        norms.swap(k, piv);
        let x: DVector<f64> = w.column(k).rows(k, n - k).into_owned();
        let alpha = if x[0] >= 0.0 { -best } else { best };
        let mut v = x;
        v[0] -= alpha;
        let vnorm2 = v.norm_squared();
        if vnorm2 > 0.0 {
            let beta = 2.0 / vnorm2;
            let mut block = w.view_mut((k, k), (n - k, m - k));
            let proj = block.tr_mul(&v);
            block.ger(-beta, &v, &proj, 1.0);
        }
        reflectors.push((k, v));
        rank += 1;
    }
    let mut q = DMatrix::zeros(n, n - rank);
    for j in 0..n - rank {
        q[(rank + j, j)] = 1.0;
    }
    for (k, v) in reflectors.iter().rev() {
        let vnorm2 = v.norm_squared();
        if vnorm2 == 0.0 {
            continue;
        }
        let beta = 2.0 / vnorm2;
        let cols = q.ncols();
        let mut block = q.view_mut((*k, 0), (n - k, cols));
        let proj = block.tr_mul(v);
        block.ger(-beta, v, &proj, 1.0);
    }
    q
}

/// Solves `j x = rhs`. Dense LU up to [`DENSE_LU_LIMIT`], Jacobi-preconditioned
/// restarted GMRES above. Returns `None` for (numerically) singular systems.
pub fn solve_linear(j: &DMatrix<f64>, rhs: &DVector<f64>) -> Option<DVector<f64>> {
    if j.nrows() != j.ncols() || j.nrows() != rhs.len() {
        return None;
    }
    if j.nrows() == 0 {
        return Some(DVector::zeros(0));
    }
    if j.nrows() <= DENSE_LU_LIMIT {
        solve_lu(j, rhs)
    } else {
        gmres(j, rhs, 60, 1e-13, 40 * j.nrows())
    }
}

fn solve_lu(j: &DMatrix<f64>, rhs: &DVector<f64>) -> Option<DVector<f64>> {
    let lu = j.clone().lu();
    let u = lu.u();
    let diag = u.diagonal();
    let max = diag.amax();
    let min = diag.iter().fold(f64::INFINITY, |a, v| a.min(v.abs()));
    if !(max > 0.0) || min < PIVOT_RATIO_FLOOR * max || !min.is_finite() {
        return None;
    }
    let x = lu.solve(rhs)?;
    if x.iter().all(|v| v.is_finite()) {
        Some(x)
    } else {
        None
    }
}

/// Restarted GMRES with left Jacobi preconditioning.
pub fn gmres(
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    restart: usize,
    rel_tol: f64,
    max_iters: usize,
) -> Option<DVector<f64>> {
    let n = b.len();
    let dinv: DVector<f64> = a
        .diagonal()
        .map(|d| if d.abs() > 0.0 { 1.0 / d } else { 1.0 });
    let precond = |v: &DVector<f64>| v.component_mul(&dinv);
    let pb = precond(b);
    let bnorm = pb.norm();
    if bnorm == 0.0 {
        return Some(DVector::zeros(n));
    }
    let mut x = DVector::zeros(n);
    let mut iters = 0;
    while iters < max_iters {
        let r = precond(&(b - a * &x));
        let beta = r.norm();
        if beta <= rel_tol * bnorm {
            return Some(x);
        }
        let m = restart.min(n);
        let mut basis: Vec<DVector<f64>> = Vec::with_capacity(m + 1);
        basis.push(&r / beta);
        let mut h = DMatrix::<f64>::zeros(m + 1, m);
        let mut cs = vec![0.0; m];
        let mut sn = vec![0.0; m];
        let mut g = DVector::<f64>::zeros(m + 1);
        g[0] = beta;
        let mut used = 0;
        for k in 0..m {
            iters += 1;
            let mut w = precond(&(a * &basis[k]));
            for (i, vi) in basis.iter().enumerate() {
                h[(i, k)] = w.dot(vi);
                w.axpy(-h[(i, k)], vi, 1.0);
            }
            h[(k + 1, k)] = w.norm();
            for i in 0..k {
                let t = cs[i] * h[(i, k)] + sn[i] * h[(i + 1, k)];
                h[(i + 1, k)] = -sn[i] * h[(i, k)] + cs[i] * h[(i + 1, k)];
                h[(i, k)] = t;
            }
            let denom = h[(k, k)].hypot(h[(k + 1, k)]);
            if denom == 0.0 {
                return None;
            }
            cs[k] = h[(k, k)] / denom;
            sn[k] = h[(k + 1, k)] / denom;
            h[(k, k)] = denom;
            h[(k + 1, k)] = 0.0;
            g[k + 1] = -sn[k] * g[k];
            g[k] *= cs[k];
            used = k + 1;
            let hk1 = w.norm();
            if g[k + 1].abs() <= rel_tol * bnorm || hk1 == 0.0 {
                break;
            }
            basis.push(w / hk1);
        }
        let hu = h.view((0, 0), (used, used)).into_owned();
        let y = hu.solve_upper_triangular(&g.rows(0, used).into_owned())?;
        for (i, yi) in y.iter().enumerate() {
            x.axpy(*yi, &basis[i], 1.0);
        }
    }
    let r = precond(&(b - a * &x));
    if r.norm() <= 1e3 * rel_tol * bnorm {
        Some(x)
    } else {
        None
    }
}
