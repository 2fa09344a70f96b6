//! Concrete problem families: semilinear Poisson, primal-mixed Poisson,
//! a saturating Kirchhoff operator and steady Navier–Stokes.

mod forcing;
mod kirchhoff;
mod mixed;
mod navier_stokes;
mod registry;
mod semilinear;

pub use forcing::{ForcingSpec, GrowthClass, GrowthFit, ScalarFn, ENVELOPE_SLACK, GRID_LIMIT};
pub use kirchhoff::{make_kirchhoff, KirchhoffForm};
pub use mixed::{make_mixed_poisson, MixedForm, MixedPoissonProblem};
pub use navier_stokes::{
    make_navier_stokes, measure_extension_epsilon, BodyForce, BoundaryData, NavierStokesProblem,
    VectorField, PRESSURE_INFSUP_THRESHOLD,
};
pub use registry::{
    build_case, build_levels, first_dirichlet_eigenvalue, forcing_for, BuiltCase, CaseData,
    CaseKind, CaseParams, ForcingKind, LinearPair, CONTINUATION_VISCOSITY,
};
pub use semilinear::{duality_poisson_map, make_semilinear, SemilinearForm, SemilinearProblem};

#[cfg(test)]
mod tests {
    use super::*;
    use crate::certify::{geometric_radii, probe_coercivity, track_boundedness, Verdict};
    use crate::error::Error;
    use crate::fnspace::{build_space, dual_norm};
    use crate::operator::coercivity_pairing;
    use crate::solver::{newton_solve, SolverConfig};
    use nalgebra::DVector;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::sync::Arc;

    fn params(case: CaseKind, forcing: ForcingKind) -> CaseParams {
        CaseParams {
            case,
            forcing,
            ..CaseParams::default()
        }
    }

    fn random_vec(n: usize, scale: f64, rng: &mut ChaCha8Rng) -> DVector<f64> {
        DVector::from_fn(n, |_, _| scale * rng.random_range(-1.0..1.0))
    }

    #[test]
    fn poisson_matches_parabola_at_the_nodes() {
        for k in 3..=6 {
            let case = build_case(&params(CaseKind::Semilinear, ForcingKind::Zero), k).unwrap();
            let r = case.solve(&SolverConfig::default(), None).unwrap();
            assert!(r.converged);
            let CaseData::Semilinear(sp) = &case.data else {
                panic!()
            };
            let h = sp.space.mesh().h();
            for i in 0..sp.space.dim() {
                let x = sp.space.dof_coordinates(i)[0];
                assert!((r.solution[i] - x * (1.0 - x) / 2.0).abs() <= h * h);
            }
        }
    }

    #[test]
    fn sine_forcing_is_coercive_solvable_and_bounded() {
        let p = params(CaseKind::Semilinear, ForcingKind::Sin);
        let (cases, hierarchy) = build_levels(&p, &[2, 3, 4, 5]).unwrap();
        let cert = probe_coercivity(
            &cases[2].problem,
            &cases[2].phi,
            8,
            &geometric_radii(1.0, 1000.0, 4),
            7,
        )
        .unwrap();
        assert_eq!(cert.verdict, Verdict::H2);
        let trace = track_boundedness(&hierarchy, &SolverConfig::default()).unwrap();
        assert!(trace.failed_level.is_none() && !trace.growth_flag);
        let incs: Vec<f64> = trace.levels.iter().filter_map(|l| l.increment).collect();
        assert_eq!(incs.len(), 3);
        assert!(incs.windows(2).all(|w| w[1] < w[0]), "{incs:?}");
    }

    #[test]
    fn duality_test_map_pairs_to_the_norm_power() {
        for dim in 1..=2 {
            let p = CaseParams {
                case: CaseKind::SemilinearP,
                forcing: ForcingKind::Zero,
                p: 1.5,
                dim,
                ..CaseParams::default()
            };
            let case = build_case(&p, if dim == 1 { 5 } else { 3 }).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(dim as u64);
            for _ in 0..10 {
                let u = random_vec(case.dim(), 2.0, &mut rng);
                let norm = case.problem.trial().norm(&u);
                let pairing = coercivity_pairing(&case.problem, &case.phi, &u);
                assert!((pairing - norm.powf(1.5)).abs() <= 1e-6 * (1.0 + norm.powf(1.5)));
            }
        }
    }

    #[test]
    fn duality_test_map_degenerates_to_identity_at_p_two() {
        let space = build_space(1, 4, 1, 2.0).unwrap();
        let map = duality_poisson_map(space.clone(), 2.0);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let u = random_vec(space.dim(), 1.0, &mut rng);
        assert!((map.apply(&u) - &u).amax() < 1e-10);
    }

    #[test]
    fn semilinear_coercivity_chain_holds_on_samples() {
        for pexp in [1.5, 2.0] {
            let p = CaseParams {
                case: CaseKind::SemilinearP,
                p: pexp,
                dim: 2,
                ..CaseParams::default()
            };
            let case = build_case(&p, 3).unwrap();
            let CaseData::Semilinear(sp) = &case.data else {
                panic!()
            };
            let mut rng = ChaCha8Rng::seed_from_u64(11);
            for _ in 0..10 {
                let u = random_vec(case.dim(), 3.0, &mut rng);
                let lhs = coercivity_pairing(&case.problem, &case.phi, &u);
                let phi_u = case.phi.apply(&u);
                let bound = case.problem.trial().norm(&u).powf(pexp)
                    - sp.forcing_dual_norm(&u) * case.problem.test().norm(&phi_u);
                assert!(lhs >= bound - 1e-6, "{pexp}: {lhs} < {bound}");
            }
        }
    }

    #[test]
    fn forcing_dual_norm_constant_is_stable_across_levels() {
        let mut constants = Vec::new();
        for k in 3..=5 {
            let case = build_case(&params(CaseKind::Semilinear, ForcingKind::Sin), k).unwrap();
            let CaseData::Semilinear(sp) = &case.data else {
                panic!()
            };
            let fit = sp.forcing.check_growth();
            let mut rng = ChaCha8Rng::seed_from_u64(9);
            let c = (0..20)
                .map(|_| {
                    let (amp, freq) = (rng.random_range(0.1..20.0), rng.random_range(1..4) as f64);
                    let u = sp
                        .space
                        .interpolate(|x| amp * (freq * std::f64::consts::PI * x[0]).sin())
                        .unwrap()
                        .values;
                    let norm = case.problem.trial().norm(&u);
                    sp.forcing_dual_norm(&u) / (fit.c + fit.b * norm.powf(fit.exponent))
                })
                .fold(0.0f64, f64::max);
            constants.push(c);
        }
        let (lo, hi) = constants
            .iter()
            .fold((f64::MAX, 0.0f64), |(l, h), c| (l.min(*c), h.max(*c)));
        assert!(hi <= 1.5 * lo, "{constants:?}");
    }

    #[test]
    fn excessive_growth_is_rejected() {
        let space = build_space(2, 2, 1, 1.5).unwrap();
        let f = ForcingSpec::new(
            "ninth",
            Arc::new(|u: f64| u.powi(9)),
            None,
            GrowthClass::Power(9.0),
        );
        assert!(matches!(
            make_semilinear(space.clone(), f, 1.5, &|_| 1.0),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            make_semilinear(space, ForcingSpec::zero(), 2.5, &|_| 1.0),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn mixed_pairing_dominates_half_the_energy() {
        let case = build_case(
            &CaseParams {
                dim: 2,
                ..params(CaseKind::MixedPoisson, ForcingKind::Zero)
            },
            3,
        )
        .unwrap();
        let CaseData::Mixed(mp) = &case.data else {
            panic!()
        };
        assert_eq!(
            coercivity_pairing(&case.problem, &case.phi, &DVector::zeros(case.dim())),
            0.0
        );
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let z = random_vec(case.dim(), 4.0, &mut rng);
            let (q, u) = mp.split(&z);
            let grad = mp.flux_norm(&(&*mp.gradient * &u));
            let bound = 0.5 * mp.flux_norm(&q).powi(2) + 0.5 * grad * grad;
            assert!(coercivity_pairing(&case.problem, &case.phi, &z) >= bound - 1e-9);
        }
    }

    #[test]
    fn mixed_and_primal_solutions_coincide() {
        for dim in 1..=2 {
            let k = if dim == 1 { 5 } else { 3 };
            let base = CaseParams {
                dim,
                ..params(CaseKind::Semilinear, ForcingKind::Sin)
            };
            let primal = build_case(&base, k).unwrap();
            let mixed = build_case(
                &CaseParams {
                    case: CaseKind::MixedPoisson,
                    ..base.clone()
                },
                k,
            )
            .unwrap();
            let cfg = SolverConfig::default();
            let rp = primal.solve(&cfg, None).unwrap();
            let rm = mixed.solve(&cfg, None).unwrap();
            assert!(rp.converged && rm.converged);
            let CaseData::Mixed(mp) = &mixed.data else {
                panic!()
            };
            let (_, u) = mp.split(&rm.solution);
            let d = &u - &rp.solution;
            let h1 = mp.potential.h1_seminorm(d.as_slice());
            assert!(h1 <= 1e-8, "{h1}");
            assert!(mp.flux_defect(&rm.solution) <= 1e-8);
        }
    }

    #[test]
    fn mixed_rejects_quadratic_potentials() {
        let space = build_space(2, 2, 2, 2.0).unwrap();
        assert!(matches!(
            make_mixed_poisson(space, ForcingSpec::zero(), &|_| 1.0),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn kirchhoff_solution_norm_matches_closed_form() {
        let case = build_case(&params(CaseKind::Kirchhoff, ForcingKind::Zero), 5).unwrap();
        let CaseData::Kirchhoff(space) = &case.data else {
            panic!()
        };
        let r = case.solve(&SolverConfig::default(), None).unwrap();
        assert!(r.converged);
        let b = dual_norm(space, case.problem.rhs(), 2.0);
        let expected = b / (1.0 - b * b).sqrt();
        assert!((r.solution_norm_x - expected).abs() < 1e-8);
        let cert = probe_coercivity(
            &case.problem,
            &case.phi,
            8,
            &geometric_radii(1.0, 1000.0, 4),
            2,
        )
        .unwrap();
        assert_eq!(cert.verdict, Verdict::H2prime);
        assert!((cert.m_estimate - 1.0).abs() < 1e-5);
        let margin = cert.solvability_margin.unwrap();
        assert!((margin - (cert.m_estimate - b)).abs() < 1e-6);
    }

    #[test]
    fn resonant_forcing_fails_the_probe_and_its_limit_grows() {
        let case = build_case(&params(CaseKind::Semilinear, ForcingKind::Resonant), 4).unwrap();
        let cert = probe_coercivity(
            &case.problem,
            &case.phi,
            8,
            &geometric_radii(1.0, 1000.0, 4),
            1,
        )
        .unwrap();
        assert_eq!(cert.verdict, Verdict::Fail);
        let (_, h) = build_levels(
            &params(CaseKind::Semilinear, ForcingKind::ResonantLimit),
            &[2, 3, 4, 5],
        )
        .unwrap();
        let trace = track_boundedness(&h, &SolverConfig::default()).unwrap();
        assert!(trace.growth_flag);
    }

    #[test]
    fn monotone_cubic_solves_from_any_start() {
        let case = build_case(
            &CaseParams {
                lambda: 1.0,
                ..params(CaseKind::Semilinear, ForcingKind::Cubic)
            },
            4,
        )
        .unwrap();
        let sys = case.system().unwrap();
        let cfg = SolverConfig::default();
        let a = newton_solve(&case.problem, &case.phi, &cfg, &DVector::zeros(case.dim())).unwrap();
        let b = crate::solver::solve_system(&sys, &cfg, &DVector::from_element(case.dim(), 3.0))
            .unwrap();
        assert!(a.converged && b.converged);
        assert!(case.problem.trial().norm(&(&a.solution - &b.solution)) < 1e-8);
    }

    #[test]
    fn names_round_trip_and_unknown_names_are_rejected() {
        for c in CaseKind::ALL {
            assert_eq!(c.as_str().parse::<CaseKind>().unwrap(), c);
            assert_eq!(
                serde_json::to_string(&c).unwrap(),
                format!("\"{}\"", c.as_str())
            );
        }
        for f in ForcingKind::ALL {
            assert_eq!(f.as_str().parse::<ForcingKind>().unwrap(), f);
        }
        assert!(matches!(
            "stokes".parse::<CaseKind>(),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            "tan".parse::<ForcingKind>(),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn invalid_parameters_are_configuration_errors() {
        let bad = [
            CaseParams {
                p: 1.5,
                ..CaseParams::default()
            },
            CaseParams {
                case: CaseKind::SemilinearP,
                p: 2.5,
                ..CaseParams::default()
            },
            CaseParams {
                dim: 3,
                ..CaseParams::default()
            },
            CaseParams {
                case: CaseKind::NsCavity,
                dim: 1,
                ..CaseParams::default()
            },
            CaseParams {
                case: CaseKind::NsCavity,
                dim: 2,
                nu: 0.0,
                ..CaseParams::default()
            },
            CaseParams {
                case: CaseKind::MixedPoisson,
                degree: 2,
                ..CaseParams::default()
            },
            CaseParams {
                case: CaseKind::Kirchhoff,
                saturation: -1.0,
                ..CaseParams::default()
            },
        ];
        for p in bad {
            assert!(matches!(build_case(&p, 2), Err(Error::Config(_))), "{p:?}");
        }
    }

    #[test]
    fn prolongations_carry_linear_interpolants_exactly() {
        let p = CaseParams {
            dim: 2,
            ..params(CaseKind::MixedPoisson, ForcingKind::Zero)
        };
        let (cases, h) = build_levels(&p, &[2, 3]).unwrap();
        let CaseData::Mixed(coarse) = &cases[0].data else {
            panic!()
        };
        let CaseData::Mixed(fine) = &cases[1].data else {
            panic!()
        };
        let f = |x: [f64; 2]| x[0] * (1.0 - x[0]) * x[1];
        let uc = coarse.potential.interpolate(f).unwrap().values;
        let mut zc = DVector::zeros(cases[0].dim());
        let qc = &*coarse.gradient * &uc;
        zc.rows_mut(0, qc.len()).copy_from(&qc);
        zc.rows_mut(qc.len(), uc.len()).copy_from(&uc);
        let zf = (h.levels()[1].prolongate.as_ref().unwrap())(&zc);
        assert!(fine.flux_defect(&zf) < 1e-12);
        assert!(fine.flux_norm(&fine.split(&zf).0) > 0.0);
    }

    #[test]
    fn linear_pairs_exist_exactly_for_affine_cases() {
        let lin = build_case(&params(CaseKind::Semilinear, ForcingKind::Linear), 3).unwrap();
        let (a, gx, gy) = lin.linear_pair().unwrap().unwrap();
        assert_eq!(a.shape(), gx.shape());
        assert_eq!(gx, gy);
        let nonlin = build_case(&params(CaseKind::Semilinear, ForcingKind::Sin), 3).unwrap();
        assert!(nonlin.linear_pair().unwrap().is_none());
        let kirchhoff = build_case(&params(CaseKind::Kirchhoff, ForcingKind::Zero), 3).unwrap();
        assert!(kirchhoff.linear_pair().unwrap().is_none());
    }

    #[test]
    fn cavity_levels_prolongate_and_solve_in_the_stokes_regime() {
        let p = CaseParams {
            case: CaseKind::NsCavity,
            dim: 2,
            nu: 1.0,
            ..CaseParams::default()
        };
        let (cases, h) = build_levels(&p, &[1, 2, 3]).unwrap();
        let cfg = SolverConfig::default();
        let trace =
            crate::certify::track_boundedness_with(&h, |i, _, x0| cases[i].solve(&cfg, Some(x0)))
                .unwrap();
        assert!(trace.failed_level.is_none());
        assert!(
            trace.levels.iter().all(|l| l.iterations <= 3),
            "{:?}",
            trace.levels
        );
        assert!(trace.levels[1..].iter().all(|l| l.increment.is_some()));
    }
}
