//! Operators as forms, test maps, the discrete residual and Galerkin hierarchies.

mod hierarchy;
mod problem;
mod system;
mod testmap;

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use hierarchy::{GalerkinHierarchy, HierarchyLevel};
pub use problem::{
    estimate_dual_norm, ClosureForm, CoordSpace, MatFn, NonlinearForm, OperatorProblem, SpaceNorm,
    VecFn,
};
pub use system::{GalerkinSystem, JacobianMode};
pub use testmap::{MapFn, TestMap, TestMapKind};

use crate::error::{Error, Result};

/// Cap on random perturbations per hill-climb round of [`estimate_n`].
pub const HILL_CLIMB_DIRECTIONS: usize = 32;

/// `r_i = ⟨A(x) − b, Φ(ṽ_i)⟩` over the orthonormalized trial basis.
pub fn assemble_residual(
    problem: &OperatorProblem,
    phi: &TestMap,
    x: &DVector<f64>,
) -> Result<DVector<f64>> {
    GalerkinSystem::new(problem.clone(), phi.clone())?.residual_checked(x)
}

/// `a(x, Φ(x))`.
pub fn coercivity_pairing(problem: &OperatorProblem, phi: &TestMap, x: &DVector<f64>) -> f64 {
    problem.apply(x).dot(&phi.apply(x))
}

/// Heuristic upper envelope of `N(Φ) = limsup ‖Φ(x)‖_Y / ‖x‖_X`: the largest
/// ratio `‖Φ(ρd)‖ / ρ` over seeded unit directions `d` and the two largest
/// radii, followed by a local hill climb from the best direction.
pub fn estimate_n(
    phi: &TestMap,
    trial: &CoordSpace,
    test: &CoordSpace,
    samples: usize,
    radii: &[f64],
    seed: u64,
) -> Result<f64> {
    if radii.len() < 2 || radii.windows(2).any(|w| w[1] <= w[0]) || radii[0] <= 0.0 {
        return Err(Error::Input(
            "radii must be positive, increasing, at least two".into(),
        ));
    }
    if samples == 0 {
        return Err(Error::Input("need at least one sample".into()));
    }
    let top = &radii[radii.len() - 2..];
    let ratio = |d: &DVector<f64>| {
        let nd = trial.norm(d);
        top.iter()
            .map(|&r| test.norm(&phi.apply(&(d * (r / nd)))) / r)
            .fold(0.0f64, f64::max)
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best_d = trial.random_unit(&mut rng)?;
    let mut best = ratio(&best_d);
    for _ in 1..samples {
        let d = trial.random_unit(&mut rng)?;
        let r = ratio(&d);
        if r > best {
            best = r;
            best_d = d;
        }
    }
    let mut step = 0.5;
    for _ in 0..12 {
        let mut improved = false;
        for _ in 0..2 * trial.dim().clamp(4, HILL_CLIMB_DIRECTIONS) {
            let e = trial.random_unit(&mut rng)?;
            let d = &best_d + e * step;
            if trial.norm(&d) == 0.0 {
                continue;
            }
            let r = ratio(&d);
            if r > best {
                best = r;
                best_d = d.clone() / trial.norm(&d);
                improved = true;
            }
        }
        if !improved {
            step *= 0.5;
        }
    }
    Ok(best)
}

/// Continuity check of the discrete operator at `x`: for steps `h = 10^{-k}`
/// along each direction, `|a(x + h d, y) − a(x, y)|` must fall below
/// `tol (1 + max |a(x, y)|)` at the smallest step, for seeded sample vectors `y`.
pub fn check_h1_discrete(
    problem: &OperatorProblem,
    x: &DVector<f64>,
    directions: &[DVector<f64>],
    tol: f64,
) -> bool {
    let mut rng = ChaCha8Rng::seed_from_u64(0x4831);
    let m = problem.test().dim();
    let ys: Vec<DVector<f64>> = (0..8)
        .map(|_| {
            let y = DVector::from_fn(m, |_, _| rand::Rng::random_range(&mut rng, -1.0..1.0));
            let n = y.norm();
            if n > 0.0 {
                y / n
            } else {
                y
            }
        })
        .collect();
    let fx = problem.apply(x);
    let scale = 1.0 + ys.iter().map(|y| fx.dot(y).abs()).fold(0.0, f64::max);
    for d in directions {
        let nd = problem.trial().norm(d);
        if nd == 0.0 || !nd.is_finite() {
            return false;
        }
        let d = d / nd;
        let mut last = f64::INFINITY;
        for k in 1..=10 {
            let h = 10f64.powi(-k);
            let fh = problem.apply(&(x + &d * h));
            let diff = &fh - &fx;
            last = ys.iter().map(|y| diff.dot(y).abs()).fold(0.0, f64::max);
            if !last.is_finite() {
                return false;
            }
        }
        if last > tol * scale {
            return false;
        }
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fnspace::build_space;
    use crate::linalg;
    use nalgebra::DMatrix;
    use proptest::prelude::*;
    use rand::Rng;
    use std::sync::Arc;

    fn spd(n: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let b = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        &b * b.transpose() + DMatrix::identity(n, n) * (n as f64)
    }

    fn cubic(k: DMatrix<f64>, c: f64) -> ClosureForm {
        let k2 = k.clone();
        ClosureForm::new(move |x| &k * x + x.map(|v| c * v * v * v))
            .with_jacobian(move |x| &k2 + DMatrix::from_diagonal(&x.map(|v| 3.0 * c * v * v)))
    }

    fn euclid_problem(form: ClosureForm, n: usize, rhs: DVector<f64>) -> OperatorProblem {
        OperatorProblem::new(
            "t",
            Arc::new(form),
            CoordSpace::euclidean(n),
            CoordSpace::euclidean(n),
            rhs,
        )
        .unwrap()
        .with_same_space()
    }

    fn rand_vec(n: usize, rng: &mut ChaCha8Rng) -> DVector<f64> {
        DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn linear_identity_residual_is_stiffness_times_x() {
        let k = spd(5, 1);
        let p = euclid_problem(cubic(k.clone(), 0.0), 5, DVector::zeros(5));
        let x = rand_vec(5, &mut ChaCha8Rng::seed_from_u64(2));
        let r = assemble_residual(&p, &TestMap::identity(), &x).unwrap();
        assert!((r - &k * &x).amax() < 1e-14);
    }

    #[test]
    fn petrov_galerkin_residual_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for n in 1..=5 {
            let k = spd(n, n as u64);
            let b = rand_vec(n, &mut rng);
            let pm = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
            let prob = euclid_problem(cubic(k.clone(), 0.7), n, b.clone());
            let phi = TestMap::linear(TestMapKind::Custom, pm.clone()).unwrap();
            let x = rand_vec(n, &mut rng);
            let r = assemble_residual(&prob, &phi, &x).unwrap();
            for i in 0..n {
                let mut brute = 0.0;
                for j in 0..n {
                    let fj: f64 =
                        (0..n).map(|l| k[(j, l)] * x[l]).sum::<f64>() + 0.7 * x[j].powi(3);
                    brute += (fj - b[j]) * pm[(j, i)];
                }
                assert!((r[i] - brute).abs() < 1e-12 * (1.0 + brute.abs()));
            }
        }
    }

    #[test]
    fn residual_rejects_wrong_dimension() {
        let p = euclid_problem(cubic(spd(3, 1), 0.0), 3, DVector::zeros(3));
        assert!(matches!(
            assemble_residual(&p, &TestMap::identity(), &DVector::zeros(4)),
            Err(Error::Input(_))
        ));
        let bad = TestMap::linear(TestMapKind::Custom, DMatrix::zeros(3, 2)).unwrap();
        assert!(matches!(GalerkinSystem::new(p, bad), Err(Error::Input(_))));
    }

    #[test]
    fn residual_is_energy_gradient_for_symmetric_linear_problems() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let k = spd(6, 5);
        let b = rand_vec(6, &mut rng);
        let p = euclid_problem(cubic(k.clone(), 0.0), 6, b.clone());
        let x = rand_vec(6, &mut rng);
        let r = assemble_residual(&p, &TestMap::identity(), &x).unwrap();
        let energy = |z: &DVector<f64>| 0.5 * z.dot(&(&k * z)) - b.dot(z);
        let h = 1e-5;
        for i in 0..6 {
            let mut e = DVector::zeros(6);
            e[i] = h;
            let g = (energy(&(&x + &e)) - energy(&(&x - &e))) / (2.0 * h);
            assert!((g - r[i]).abs() < 1e-8);
        }
    }

    #[test]
    fn coercivity_pairing_with_identity_is_positive_quadratic() {
        let k = spd(4, 6);
        let p = euclid_problem(cubic(k.clone(), 0.0), 4, DVector::zeros(4));
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let x = rand_vec(4, &mut rng);
            let v = coercivity_pairing(&p, &TestMap::identity(), &x);
            assert!(v > 0.0);
            assert!((v - x.dot(&(&k * &x))).abs() < 1e-12);
        }
    }

    #[test]
    fn pairing_decomposes_over_basis_images_for_linear_maps() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let n = 5;
        let p = euclid_problem(cubic(spd(n, 9), 1.3), n, DVector::zeros(n));
        let phi = TestMap::linear(
            TestMapKind::Custom,
            DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0)),
        )
        .unwrap();
        let x = rand_vec(n, &mut rng);
        let r = assemble_residual(&p, &phi, &x).unwrap();
        let lhs = coercivity_pairing(&p, &phi, &x);
        assert!((lhs - x.dot(&r)).abs() < 1e-9 * (1.0 + lhs.abs()));
    }

    #[test]
    fn analytic_derivative_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let p = euclid_problem(cubic(spd(4, 11), 2.0), 4, DVector::zeros(4));
        for _ in 0..10 {
            let x = rand_vec(4, &mut rng);
            let dx = rand_vec(4, &mut rng);
            let y = rand_vec(4, &mut rng);
            let d = p.derivative(&x, &dx, &y).unwrap();
            let h = 1e-6;
            let fd =
                (p.form_eval(&(&x + &dx * h), &y) - p.form_eval(&(&x - &dx * h), &y)) / (2.0 * h);
            assert!((d - fd).abs() <= 1e-5 * d.abs().max(1e-3));
            let ja = p.jacobian(&x).unwrap();
            let jf = p.fd_jacobian(&x);
            assert!((&ja - &jf).amax() <= 1e-5 * ja.amax());
        }
    }

    #[test]
    fn forms_are_linear_in_the_test_argument() {
        let p = euclid_problem(cubic(spd(5, 12), 1.0), 5, DVector::from_element(5, 0.3));
        let defect = p.linearity_defect(&mut ChaCha8Rng::seed_from_u64(13), 50);
        assert!(defect < 1e-9);
    }

    #[test]
    fn n_of_identity_is_one() {
        let g = spd(5, 14);
        let x = CoordSpace::with_gram("X", g);
        let n = estimate_n(&TestMap::identity(), &x, &x, 10, &[1.0, 10.0, 100.0], 1).unwrap();
        assert!((n - 1.0).abs() < 1e-9);
    }

    #[test]
    fn n_of_linear_map_matches_generalized_singular_value() {
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        for n in 2..=6 {
            let gx = spd(n, 20 + n as u64);
            let gy = spd(n, 40 + n as u64);
            let pm = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
            // oracle: σ_max(GY^{1/2} P GX^{-1/2})
            let gx_is = linalg::sym_inv_sqrt(&gx, "gx").unwrap();
            let gy_s = gy.clone().symmetric_eigen();
            let gy_sqrt = &gy_s.eigenvectors
                * DMatrix::from_diagonal(&gy_s.eigenvalues.map(f64::sqrt))
                * gy_s.eigenvectors.transpose();
            let w = gy_sqrt * &pm * gx_is;
            let sigma = w.singular_values().max();
            let phi = TestMap::linear(TestMapKind::Custom, pm).unwrap();
            let x = CoordSpace::with_gram("X", gx);
            let y = CoordSpace::with_gram("Y", gy);
            let est = estimate_n(&phi, &x, &y, 64, &[1.0, 2.0], 3).unwrap();
            assert!(est <= sigma * (1.0 + 1e-9));
            assert!(est >= 0.95 * sigma, "n={n}: {est} vs {sigma}");
        }
    }

    #[test]
    fn n_of_sublinear_duality_map_decreases_with_radius() {
        let p = 1.5;
        let s = build_space(1, 4, 1, p).unwrap();
        let s2 = s.clone();
        let phi = TestMap::nonlinear(
            TestMapKind::DualityPoisson,
            Arc::new(move |u: &DVector<f64>| {
                s2.poisson_solve_raw(&s2.duality_map_raw(u.as_slice(), p))
            }),
        );
        let x = CoordSpace::w1p(s.clone(), p);
        let y = CoordSpace::w1p(s.clone(), 3.0);
        let small = estimate_n(&phi, &x, &y, 8, &[1.0, 10.0], 5).unwrap();
        let large = estimate_n(&phi, &x, &y, 8, &[100.0, 1000.0], 5).unwrap();
        assert!(small.is_finite() && large.is_finite());
        assert!(large < small);
    }

    #[test]
    fn estimate_n_validates_radii() {
        let x = CoordSpace::euclidean(2);
        assert!(estimate_n(&TestMap::identity(), &x, &x, 1, &[1.0], 0).is_err());
        assert!(estimate_n(&TestMap::identity(), &x, &x, 1, &[2.0, 1.0], 0).is_err());
    }

    #[test]
    fn continuity_check_accepts_smooth_and_rejects_step_forms() {
        let mut rng = ChaCha8Rng::seed_from_u64(16);
        let k = spd(4, 17);
        let lin = euclid_problem(cubic(k.clone(), 0.0), 4, DVector::zeros(4));
        let dirs: Vec<_> = (0..4).map(|_| rand_vec(4, &mut rng)).collect();
        let x = rand_vec(4, &mut rng);
        assert!(check_h1_discrete(&lin, &x, &dirs, 1e-6));
        let k2 = k.clone();
        let sine = euclid_problem(
            ClosureForm::new(move |z| &k2 * z - z.map(|v| 3.0 * v.sin())),
            4,
            DVector::zeros(4),
        );
        assert!(check_h1_discrete(&sine, &x, &dirs, 1e-6));
        let step = euclid_problem(
            ClosureForm::new(|z| z.map(|v| if v >= 0.0 { 1.0 } else { 0.0 })),
            4,
            DVector::zeros(4),
        );
        let x0 = DVector::zeros(4);
        let neg: Vec<_> = vec![DVector::from_element(4, -1.0)];
        assert!(!check_h1_discrete(&step, &x0, &neg, 1e-6));
    }

    #[test]
    fn gram_trial_space_uses_orthonormal_test_vectors() {
        // Φ = id on a Hilbert space: r = Ṽᵀ(Kx − b) and ‖r‖ is the dual norm of Kx − b
        let k = spd(4, 18);
        let g = spd(4, 19);
        let prob = OperatorProblem::new(
            "t",
            Arc::new(cubic(k.clone(), 0.0)),
            CoordSpace::with_gram("X", g.clone()),
            CoordSpace::with_gram("X", g.clone()),
            DVector::zeros(4),
        )
        .unwrap();
        let x = rand_vec(4, &mut ChaCha8Rng::seed_from_u64(20));
        let r = assemble_residual(&prob, &TestMap::identity(), &x).unwrap();
        let f = &k * &x;
        let dual = f.dot(&g.clone().cholesky().unwrap().solve(&f)).sqrt();
        assert!((r.norm() - dual).abs() < 1e-10 * dual);
    }

    #[test]
    fn hierarchy_requires_increasing_dimensions() {
        let mk = |n: usize| HierarchyLevel {
            refinement: n as u32,
            system: GalerkinSystem::new(
                euclid_problem(cubic(spd(n, 1), 0.0), n, DVector::zeros(n)),
                TestMap::identity(),
            )
            .unwrap(),
            prolongate: None,
        };
        assert!(GalerkinHierarchy::new(vec![mk(2), mk(3)]).is_ok());
        assert!(matches!(
            GalerkinHierarchy::new(vec![mk(3), mk(3)]),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            GalerkinHierarchy::new(vec![]),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn test_map_invariants() {
        assert!(TestMap::identity().with_n_estimate(-1.0).is_err());
        assert!(
            TestMap::linear(TestMapKind::Custom, DMatrix::from_element(1, 1, f64::NAN)).is_err()
        );
        let x = DVector::from_vec(vec![1.0, -2.0]);
        assert_eq!(TestMap::identity().apply(&x), x);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn identity_residual_is_linear_in_rhs(seed in 0u64..10_000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = 4;
            let b1 = rand_vec(n, &mut rng);
            let b2 = rand_vec(n, &mut rng);
            let x = rand_vec(n, &mut rng);
            let p1 = euclid_problem(cubic(spd(n, 2), 0.5), n, b1.clone());
            let p2 = p1.with_rhs(b2.clone(), None).unwrap();
            let r1 = assemble_residual(&p1, &TestMap::identity(), &x).unwrap();
            let r2 = assemble_residual(&p2, &TestMap::identity(), &x).unwrap();
            prop_assert!(((r1 - r2) - (b2 - b1)).amax() < 1e-12);
        }
    }
}
