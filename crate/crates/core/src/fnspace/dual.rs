use nalgebra::DVector;

use super::space::DiscreteSpace;
use crate::linalg;

/// Dual norm `sup_y ⟨g, y⟩ / ‖y‖_{W^{1,q}}` of a functional given by its
/// coefficients against the interior basis.
///
/// For `q = 2` this is `sqrt(gᵀ K⁻¹ g)`. Otherwise the maximizer is the
/// minimizer of the convex energy `(1/q)‖y‖^q − ⟨g, y⟩`, found by damped Newton
/// iteration; the returned value is the best ratio seen among the Newton
/// iterates and the normalized basis functions, so it never exceeds the true
/// supremum.
pub fn dual_norm(space: &DiscreteSpace, g: &DVector<f64>, q: f64) -> f64 {
    let gnorm = g.amax();
    if gnorm == 0.0 || space.dim() == 0 {
        return 0.0;
    }
    let riesz = space.poisson_solve_raw(g);
    if (q - 2.0).abs() < 1e-14 {
        return g.dot(&riesz).max(0.0).sqrt();
    }
    let ratio = |y: &DVector<f64>| {
        let n = space.norm_w1p_raw(y.as_slice(), q);
        if n > 0.0 {
            g.dot(y) / n
        } else {
            0.0
        }
    };
    let mut best = 0.0f64;
    for k in 0..space.dim() {
        let mut e = DVector::zeros(space.dim());
        e[k] = 1.0;
        best = best.max(ratio(&e).abs());
    }

    // optimal scaling of the Riesz representative as the starting point
    let n0 = space.gradient_p_integral(riesz.as_slice(), q);
    let gy = g.dot(&riesz);
    let mut y = if n0 > 0.0 && gy > 0.0 {
        riesz * (gy / n0).powf(1.0 / (q - 1.0))
    } else {
        riesz
    };
    best = best.max(ratio(&y));

    let energy = |y: &DVector<f64>| space.gradient_p_integral(y.as_slice(), q) / q - g.dot(y);
    let mut e = energy(&y);
    let stiff = space.stiffness_dense();
    for _ in 0..80 {
        let grad = space.duality_map_raw(y.as_slice(), q) - g;
        if grad.norm() <= 1e-13 * g.norm() {
            break;
        }
        let scale = y.amax().max(1e-300);
        let mut hess = space.duality_map_jacobian(y.as_slice(), q, 1e-8 * scale);
        let kreg = &stiff * (1e-12 * hess.diagonal().amax().max(1e-300));
        hess += kreg;
        let Some(step) = linalg::solve_linear(&hess, &(-&grad)) else {
            break;
        };
        let mut accepted = false;
        let mut t = 1.0;
        for _ in 0..30 {
            let trial = &y + &step * t;
            let et = energy(&trial);
            if et < e {
                y = trial;
                e = et;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        best = best.max(ratio(&y));
        if !accepted {
            break;
        }
    }
    best
}
