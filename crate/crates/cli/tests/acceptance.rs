//! Acceptance suite: one PASS/FAIL line per criterion.

use std::time::Instant;

use mapgal::certify::{
    geometric_radii, infsup_constants, probe_coercivity, supremizer_coercivity_check,
    track_boundedness, uniqueness_sample, Verdict,
};
use mapgal::fnspace::build_space;
use mapgal::operator::{coercivity_pairing, GalerkinSystem};
use mapgal::problems::{
    build_case, build_levels, make_navier_stokes, BodyForce, BoundaryData, CaseData, CaseKind,
    CaseParams, ForcingKind,
};
use mapgal::solver::{ball_multistart, homotopy_solve, newton_solve, solve_system, SolverConfig};
use mapgal_cli::{execute, CommandKind, RunConfig};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

type Check = Result<String, String>;

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn core<T>(r: mapgal::Result<T>) -> Result<T, String> {
    r.map_err(|e| e.to_string())
}

fn params(case: CaseKind, forcing: ForcingKind) -> CaseParams {
    CaseParams {
        case,
        forcing,
        ..CaseParams::default()
    }
}

fn gaussian(n: usize, rng: &mut ChaCha8Rng) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.sample(StandardNormal))
}

fn duality_identity() -> Check {
    let mut worst = 0.0f64;
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for p in [1.5, 2.0] {
        for (dim, refinement) in [(1, 5), (1, 9), (2, 3), (2, 5)] {
            let space = core(build_space(dim, refinement, 1, p))?;
            ensure(space.dim() <= 1000, || format!("{} dofs", space.dim()))?;
            for _ in 0..50 {
                let scale = 10f64.powf(rng.random_range(-2.0..2.0));
                let u = gaussian(space.dim(), &mut rng) * scale;
                let norm_p = space.norm_w1p_raw(u.as_slice(), p).powf(p);
                let pairing = space.duality_map_raw(u.as_slice(), p).dot(&u);
                let rel = (pairing - norm_p).abs() / (1.0 + norm_p);
                worst = worst.max(rel);
                ensure(rel <= 1e-8, || {
                    format!("p={p} dim={dim}: |<J(u),u> - |u|^p| / (1+|u|^p) = {rel:.3e}")
                })?;
            }
        }
    }
    Ok(format!("worst relative defect {worst:.2e}"))
}

fn coercivity_chain() -> Check {
    let mut worst = f64::INFINITY;
    for p in [1.5, 2.0] {
        let case_kind = if p == 2.0 {
            CaseKind::Semilinear
        } else {
            CaseKind::SemilinearP
        };
        let case = core(build_case(
            &CaseParams {
                p,
                dim: 2,
                ..params(case_kind, ForcingKind::Sin)
            },
            3,
        ))?;
        let CaseData::Semilinear(sp) = &case.data else {
            return Err("unexpected case data".into());
        };
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..50 {
            let u = gaussian(case.dim(), &mut rng) * 10f64.powf(rng.random_range(-1.0..1.5));
            let lhs = coercivity_pairing(&case.problem, &case.phi, &u);
            let phi_u = case.phi.apply(&u);
            let bound = case.problem.trial().norm(&u).powf(p)
                - sp.forcing_dual_norm(&u) * case.problem.test().norm(&phi_u);
            worst = worst.min(lhs - bound);
            ensure(lhs >= bound - 1e-6, || {
                format!("p={p}: a(u, phi(u)) = {lhs:.6e} < {bound:.6e}")
            })?;
        }
        let cert = core(probe_coercivity(
            &case.problem,
            &case.phi,
            8,
            &geometric_radii(1.0, 1000.0, 4),
            2,
        ))?;
        ensure(cert.verdict == Verdict::H2, || {
            format!("p={p}: verdict {}", cert.verdict.as_str())
        })?;
    }
    Ok(format!(
        "smallest surplus over the bound {worst:.3e}, verdict H2"
    ))
}

/// `inf_x sup_y <Ax, y> / (|x|_gx |y|_gy)`, by sampling the sphere and
/// refining the best sample with a shrinking compass grid.
fn grid_infsup(
    a: &DMatrix<f64>,
    gx: &DMatrix<f64>,
    gy: &DMatrix<f64>,
    rng: &mut ChaCha8Rng,
) -> f64 {
    let gy_inv = gy.clone().try_inverse().expect("spd");
    let h = a.transpose() * gy_inv * a;
    let q = |x: &DVector<f64>| (x.dot(&(&h * x)) / x.dot(&(gx * x))).max(0.0);
    let n = a.ncols();
    let mut best = gaussian(n, rng);
    let mut best_q = q(&best);
    for _ in 0..20_000 {
        let x = gaussian(n, rng);
        let v = q(&x);
        if v < best_q {
            best = x;
            best_q = v;
        }
    }
    best /= best.norm();
    let mut step = 0.5;
    while step > 1e-9 {
        let mut improved = false;
        for i in 0..n {
            for s in [step, -step] {
                let mut x = best.clone();
                x[i] += s;
                x /= x.norm();
                let v = q(&x);
                if v < best_q {
                    best = x;
                    best_q = v;
                    improved = true;
                }
            }
        }
        if !improved {
            step *= 0.5;
        }
    }
    best_q.sqrt()
}

fn spd(n: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let b = DMatrix::from_fn(n, n, |_, _| rng.sample::<f64, _>(StandardNormal));
    b.transpose() * b + DMatrix::identity(n, n) * 0.5
}

fn infsup_equivalence() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (mut order, mut oracle, mut alpha) = (0.0f64, 0.0f64, 0.0f64);
    for _ in 0..20 {
        let n = rng.random_range(2..=6);
        let a = DMatrix::from_fn(n, n, |_, _| rng.sample::<f64, _>(StandardNormal));
        let (gx, gy) = (spd(n, &mut rng), spd(n, &mut rng));
        let r = core(infsup_constants(&a, &gx, &gy))?;
        let xy = grid_infsup(&a, &gx, &gy, &mut rng);
        let yx = grid_infsup(&a.transpose(), &gy, &gx, &mut rng);
        let al = core(supremizer_coercivity_check(&a, &gx, &gy))?;
        order = order.max((r.gamma_xy - r.gamma_yx).abs());
        oracle = oracle
            .max((r.gamma_yx - xy).abs())
            .max((r.gamma_xy - yx).abs());
        alpha = alpha.max((al - r.gamma_yx * r.gamma_yx).abs());
    }
    ensure(order <= 1e-9, || format!("orderings differ by {order:.3e}"))?;
    ensure(oracle <= 1e-3, || {
        format!("grid oracle differs by {oracle:.3e}")
    })?;
    ensure(alpha <= 1e-9, || {
        format!("supremizer alpha differs from gamma^2 by {alpha:.3e}")
    })?;
    Ok(format!(
        "orderings {order:.1e}, grid oracle {oracle:.1e}, alpha - gamma^2 {alpha:.1e}"
    ))
}

fn uniqueness() -> Check {
    let p = CaseParams {
        dim: 2,
        lambda: 1.0,
        ..params(CaseKind::Semilinear, ForcingKind::Cubic)
    };
    let case = core(build_case(&p, 3))?;
    let report = core(uniqueness_sample(&case.problem, 200, 4))?;
    ensure(
        report.pairs >= 200 && report.violations.is_empty() && report.monotone_fraction == 1.0,
        || {
            format!(
                "{} violations in {} pairs",
                report.violations.len(),
                report.pairs
            )
        },
    )?;
    let system = core(case.system())?;
    let solve = |seed: u64| {
        let cfg = SolverConfig {
            multistart: 4,
            seed,
            ..SolverConfig::default()
        };
        core(ball_multistart(&system, &cfg, 5.0))
    };
    let (a, b) = (solve(11)?, solve(12)?);
    ensure(a.converged && b.converged, || {
        "a multistart solve did not converge".into()
    })?;
    let d = case.problem.trial().norm(&(&a.solution - &b.solution));
    ensure(d <= 1e-8, || format!("solutions differ by {d:.3e} in H1"))?;
    Ok(format!(
        "{} pairs strictly monotone, multistart solutions differ by {d:.1e}",
        report.pairs
    ))
}

fn boundedness() -> Check {
    let (_, h) = core(build_levels(
        &params(CaseKind::Semilinear, ForcingKind::Sin),
        &[3, 4, 5, 6],
    ))?;
    let trace = core(track_boundedness(&h, &SolverConfig::default()))?;
    ensure(trace.failed_level.is_none(), || {
        format!("level {:?} failed", trace.failed_level)
    })?;
    ensure(!trace.growth_flag, || {
        "growth flag raised for the sine family".into()
    })?;
    let incs: Vec<f64> = trace.levels.iter().filter_map(|l| l.increment).collect();
    ensure(
        incs.len() == 3 && incs.windows(2).all(|w| w[1] < w[0]),
        || format!("increments {incs:?}"),
    )?;
    let norms: Vec<f64> = trace.levels.iter().map(|l| l.norm).collect();
    let (_, h) = core(build_levels(
        &params(CaseKind::Semilinear, ForcingKind::ResonantLimit),
        &[2, 3, 4, 5],
    ))?;
    let resonant = core(track_boundedness(&h, &SolverConfig::default()))?;
    ensure(resonant.growth_flag, || {
        "resonant family did not raise the growth flag".into()
    })?;
    let incs: Vec<String> = incs.iter().map(|v| format!("{v:.2e}")).collect();
    Ok(format!(
        "norms {norms:.4?}, increments [{}], resonant growth flagged",
        incs.join(", ")
    ))
}

fn mixed_primal() -> Check {
    let mut worst = 0.0f64;
    for (dim, k) in [(1, 5), (2, 3)] {
        let base = CaseParams {
            dim,
            ..params(CaseKind::Semilinear, ForcingKind::Sin)
        };
        let primal = core(build_case(&base, k))?;
        let mixed = core(build_case(
            &CaseParams {
                case: CaseKind::MixedPoisson,
                ..base
            },
            k,
        ))?;
        let cfg = SolverConfig::default();
        let (rp, rm) = (
            core(primal.solve(&cfg, None))?,
            core(mixed.solve(&cfg, None))?,
        );
        ensure(rp.converged && rm.converged, || {
            format!("dim {dim}: a solve did not converge")
        })?;
        let CaseData::Mixed(mp) = &mixed.data else {
            return Err("unexpected case data".into());
        };
        let (_, u) = mp.split(&rm.solution);
        let d = mp.potential.h1_seminorm((&u - &rp.solution).as_slice());
        worst = worst.max(d);
        ensure(d <= 1e-8, || {
            format!("dim {dim}: mixed and primal differ by {d:.3e} in H1")
        })?;
    }
    let case = core(build_case(
        &CaseParams {
            dim: 2,
            ..params(CaseKind::MixedPoisson, ForcingKind::Zero)
        },
        3,
    ))?;
    let CaseData::Mixed(mp) = &case.data else {
        return Err("unexpected case data".into());
    };
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut slack = f64::INFINITY;
    for _ in 0..50 {
        let z = gaussian(case.dim(), &mut rng) * 10f64.powf(rng.random_range(-1.0..1.0));
        let (q, u) = mp.split(&z);
        let grad = mp.flux_norm(&(&*mp.gradient * &u));
        let bound = 0.5 * mp.flux_norm(&q).powi(2) + 0.5 * grad * grad;
        let pairing = coercivity_pairing(&case.problem, &case.phi, &z);
        slack = slack.min(pairing - bound);
        ensure(pairing >= bound - 1e-9, || {
            format!("pairing {pairing:.6e} below {bound:.6e}")
        })?;
    }
    Ok(format!(
        "H1 difference {worst:.1e}, smallest energy surplus {slack:.2e}"
    ))
}

fn navier_stokes() -> Check {
    let ns = core(make_navier_stokes(
        2,
        1.0,
        BodyForce::Zero,
        BoundaryData::Lid,
    ))?;
    let m = ns.div_free_basis().ncols();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut skew = 0.0f64;
    for _ in 0..20 {
        let u = ns.velocity(&gaussian(m, &mut rng));
        let u = &u / ns.gradient_norm(&u);
        skew = skew.max(ns.convection(&u, &u, &u).abs());
    }
    ensure(skew <= 1e-12, || format!("c(u; u, u) = {skew:.3e}"))?;

    let zero = core(make_navier_stokes(
        2,
        0.1,
        BodyForce::Zero,
        BoundaryData::Homogeneous,
    ))?;
    let m0 = zero.div_free_basis().ncols();
    let r = core(newton_solve(
        &zero.problem,
        &zero.phi,
        &SolverConfig::default(),
        &DVector::zeros(m0),
    ))?;
    ensure(r.converged && r.solution.amax() == 0.0, || {
        "zero data did not give u = 0".into()
    })?;

    let t = Instant::now();
    let cavity = core(make_navier_stokes(
        4,
        0.01,
        BodyForce::Zero,
        BoundaryData::Lid,
    ))?;
    let mc = cavity.div_free_basis().ncols();
    let r = core(homotopy_solve(
        cavity.viscosity_path(1.0),
        &SolverConfig::default(),
        &DVector::zeros(mc),
    ))?;
    ensure(r.converged && r.residual_norm < 1e-9, || {
        format!("Re 100: residual {:.3e}", r.residual_norm)
    })?;
    let (lhs, rhs) = cavity.energy_identity(&r.solution);
    let energy = (lhs - rhs).abs() / lhs.abs();
    ensure(energy <= 1e-8, || {
        format!("energy identity relative defect {energy:.3e}")
    })?;
    let cavity_secs = t.elapsed().as_secs_f64();
    let (cavity_residual, path_points) = (r.residual_norm, r.path.len());

    let vertices = core(build_space(2, 2, 1, 2.0))?.mesh().vertices.clone();
    let phi = DVector::from_iterator(
        vertices.len(),
        vertices
            .iter()
            .map(|x| (3.0 * x[0]).sin() + x[0] * x[1] * x[1]),
    );
    let grad = core(make_navier_stokes(
        2,
        0.5,
        BodyForce::PressureGradient(phi.clone()),
        BoundaryData::Homogeneous,
    ))?;
    let mg = grad.div_free_basis().ncols();
    let r = core(newton_solve(
        &grad.problem,
        &grad.phi,
        &SolverConfig::default(),
        &DVector::zeros(mg),
    ))?;
    ensure(r.converged && r.solution.amax() < 1e-10, || {
        "gradient forcing moved the velocity".into()
    })?;
    let p = core(grad.recover_pressure(&r.solution))?;
    let mean = grad.pressure_integral(&phi);
    let pressure = (&p - phi.map(|v| v - mean)).amax();
    ensure(pressure <= 1e-8, || {
        format!("recovered pressure off by {pressure:.3e}")
    })?;
    Ok(format!(
        "skew {skew:.1e}, Re 100 residual {cavity_residual:.1e} after {path_points} continuation points in {cavity_secs:.0}s, energy {energy:.1e}, pressure {pressure:.1e}"
    ))
}

fn solvability() -> Check {
    let case = core(build_case(
        &params(CaseKind::Kirchhoff, ForcingKind::Zero),
        5,
    ))?;
    let radii = geometric_radii(1.0, 1000.0, 4);
    let cert = core(probe_coercivity(&case.problem, &case.phi, 8, &radii, 8))?;
    ensure(cert.verdict == Verdict::H2prime, || {
        format!("verdict {}", cert.verdict.as_str())
    })?;
    let (m, n) = (cert.m_estimate, cert.n_phi);
    let b0 = case.problem.rhs();
    let b0_norm = case
        .problem
        .rhs_dual_norm()
        .unwrap_or_else(|| case.problem.estimate_rhs_dual_norm());

    let inside = 0.5 * m / n;
    let problem = core(case.problem.with_rhs(b0 * (inside / b0_norm), Some(inside)))?;
    let radius = 2.0 * inside / m;
    let system = core(GalerkinSystem::new(problem.clone(), case.phi.clone()))?;
    let mut largest = 0.0f64;
    for seed in 0..8u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x0 = core(problem.trial().random_in_ball(&mut rng, radius))?;
        let r = core(solve_system(
            &system,
            &SolverConfig {
                seed,
                ..SolverConfig::default()
            },
            &x0,
        ))?;
        ensure(r.converged, || format!("seed {seed}: no convergence"))?;
        ensure(r.solution_norm_x <= radius, || {
            format!("seed {seed}: |x| = {:.4} > {radius:.4}", r.solution_norm_x)
        })?;
        largest = largest.max(r.solution_norm_x);
    }

    let outside = 10.0 * m / n;
    let big = core(
        case.problem
            .with_rhs(b0 * (outside / b0_norm), Some(outside)),
    )?;
    let cert_out = core(probe_coercivity(&big, &case.phi, 8, &radii, 8))?;
    let margin = cert_out.solvability_margin.unwrap_or(f64::NAN);
    ensure(margin < 0.0, || {
        format!("data at 10 M/N reported with margin {margin:.3e}")
    })?;
    Ok(format!(
        "M = {m:.4}, N = {n:.1}: 8/8 seeds solve with |x| <= {largest:.4} < {radius:.4}; 10 M/N outside (margin {margin:.2})"
    ))
}

fn smoke_matrix() -> Vec<(CommandKind, RunConfig)> {
    let base = RunConfig::default();
    let with = |f: &dyn Fn(&mut RunConfig)| {
        let mut c = base.clone();
        f(&mut c);
        c
    };
    vec![
        (CommandKind::Run, with(&|c| c.levels = Some(4))),
        (
            CommandKind::Run,
            with(&|c| {
                c.case = CaseKind::SemilinearP;
                c.p = 1.5;
                c.dim = Some(2);
                c.refinements = Some(vec![2, 3, 4]);
            }),
        ),
        (
            CommandKind::Run,
            with(&|c| {
                c.case = CaseKind::MixedPoisson;
                c.dim = Some(2);
            }),
        ),
        (
            CommandKind::Run,
            with(&|c| {
                c.case = CaseKind::NsCavity;
                c.flow.nu = 1.0;
            }),
        ),
        (
            CommandKind::Certify,
            with(&|c| c.case = CaseKind::Kirchhoff),
        ),
        (
            CommandKind::Certify,
            with(&|c| c.forcing.kind = ForcingKind::Resonant),
        ),
        (
            CommandKind::Infsup,
            with(&|c| {
                c.case = CaseKind::MixedPoisson;
                c.forcing.kind = ForcingKind::Linear;
            }),
        ),
        (
            CommandKind::Converge,
            with(&|c| c.forcing.kind = ForcingKind::ResonantLimit),
        ),
        (
            CommandKind::Converge,
            with(&|c| {
                c.forcing.kind = ForcingKind::Cubic;
                c.seed = 17;
            }),
        ),
    ]
}

fn stripped_report(command: CommandKind, config: &RunConfig) -> Result<String, String> {
    let mut outcome = execute(command, config).map_err(|e| e.to_string())?;
    outcome.report.timings = Default::default();
    outcome.report.to_json().map_err(|e| e.to_string())
}

fn determinism() -> Check {
    let matrix = smoke_matrix();
    for (command, config) in &matrix {
        let (a, b) = (
            stripped_report(*command, config)?,
            stripped_report(*command, config)?,
        );
        ensure(a == b, || {
            format!(
                "{} on {} differs between runs",
                command.as_str(),
                config.case
            )
        })?;
    }
    Ok(format!(
        "{} configurations byte-identical modulo timings",
        matrix.len()
    ))
}

fn main() {
    let criteria: [(&str, fn() -> Check); 9] = [
        ("duality identity <J(u),u> = |u|^p", duality_identity),
        ("mapped coercivity chain and H2 verdict", coercivity_chain),
        (
            "inf-sup orderings, grid oracle and supremizer",
            infsup_equivalence,
        ),
        (
            "strict monotonicity and unique multistart solution",
            uniqueness,
        ),
        (
            "bounded Cauchy levels and resonant growth flag",
            boundedness,
        ),
        (
            "mixed and primal agreement and mixed energy bound",
            mixed_primal,
        ),
        (
            "Navier-Stokes skew form, zero data, Re 100 cavity, pressure",
            navier_stokes,
        ),
        (
            "solvability inside and outside the certificate",
            solvability,
        ),
        ("deterministic reports", determinism),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let result = check();
        let secs = t.elapsed().as_secs_f64();
        match result {
            Ok(detail) => println!("criterion {}: PASS {name}: {detail} [{secs:.1}s]", i + 1),
            Err(reason) => {
                failed += 1;
                println!("criterion {}: FAIL {name}: {reason} [{secs:.1}s]", i + 1);
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
