use std::time::Instant;

use mapgal::certify::{
    geometric_radii, infsup_constants, probe_coercivity, sphere_surplus,
    supremizer_coercivity_check, track_boundedness_with, BoundednessTrace, Verdict,
};
use mapgal::problems::{build_case, build_levels, measure_extension_epsilon, BuiltCase, CaseData};
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::report::{
    convergence_csv, evidence_csv, infsup_csv, ConvergenceRow, LevelCertificate, LevelInfSup,
    LevelSummary, RunReport, SolvabilityVerdict,
};
use crate::CliError;

/// Exit code for nonconvergence or non-decreasing refinement increments.
pub const EXIT_NOT_CONVERGED: i32 = 2;

/// Random directions used by the extension smallness measurement.
const EPSILON_SAMPLES: usize = 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CommandKind {
    Run,
    Certify,
    Infsup,
    Converge,
}

impl CommandKind {
    pub fn as_str(self) -> &'static str {
        match self {
            CommandKind::Run => "run",
            CommandKind::Certify => "certify",
            CommandKind::Infsup => "infsup",
            CommandKind::Converge => "converge",
        }
    }
}

/// A finished command: the report, CSV tables and human-readable summary lines.
#[derive(Clone, Debug)]
pub struct Outcome {
    pub report: RunReport,
    pub csv: Option<String>,
    pub summary: Vec<String>,
}

pub fn execute(command: CommandKind, config: &RunConfig) -> Result<Outcome, CliError> {
    config.validate()?;
    match command {
        CommandKind::Run => cmd_run(config),
        CommandKind::Certify => cmd_certify(config),
        CommandKind::Infsup => cmd_infsup(config),
        CommandKind::Converge => cmd_converge(config),
    }
}

fn solve_levels(
    config: &RunConfig,
    report: &mut RunReport,
) -> Result<(Vec<BuiltCase>, BoundednessTrace), CliError> {
    let t0 = Instant::now();
    let (cases, hierarchy) = build_levels(&config.case_params()?, &config.resolved_refinements()?)?;
    report.timings.build = t0.elapsed().as_secs_f64();
    let solver = config.solver_config()?;
    let t1 = Instant::now();
    let trace = track_boundedness_with(&hierarchy, |i, _, x0| cases[i].solve(&solver, Some(x0)))?;
    report.timings.solve = t1.elapsed().as_secs_f64();
    report.levels = trace
        .solutions
        .iter()
        .enumerate()
        .map(|(i, r)| LevelSummary::new(i, cases[i].refinement, r))
        .collect();
    report.convergence = ConvergenceRow::table(&trace);
    Ok((cases, trace))
}

/// Increments strictly decrease, an all-zero tail counting as decreasing.
pub fn increments_decrease(rows: &[ConvergenceRow]) -> bool {
    let incs: Vec<Option<f64>> = rows.iter().skip(1).map(|r| r.increment).collect();
    if incs.iter().any(|i| i.is_none()) {
        return false;
    }
    let incs: Vec<f64> = incs.into_iter().flatten().collect();
    incs.windows(2)
        .all(|w| w[1] < w[0] || (w[0] == 0.0 && w[1] == 0.0))
}

fn certify_level(
    case: &BuiltCase,
    level: usize,
    config: &RunConfig,
) -> Result<LevelCertificate, CliError> {
    let c = &config.certify;
    let radii = geometric_radii(c.radius_min, c.radius_max, c.radius_count);
    let cert = probe_coercivity(&case.problem, &case.phi, c.directions, &radii, config.seed)?;
    let solvability = match cert.verdict {
        Verdict::H2 => SolvabilityVerdict {
            certified: true,
            summary: "H2: the pairing grows superlinearly, every right-hand side is attained"
                .into(),
            surplus: None,
        },
        Verdict::H2prime => {
            let margin = cert.solvability_margin.unwrap_or(f64::NEG_INFINITY);
            let radius = *radii.last().unwrap_or(&c.radius_max);
            let surplus = sphere_surplus(
                &case.problem,
                &case.phi,
                radius,
                c.surplus_samples,
                config.seed,
            )?;
            let certified = margin > 0.0;
            let summary = if certified {
                format!("H2': margin M/N - |b| = {margin:.6e} > 0, data inside the certificate")
            } else {
                format!("H2': margin M/N - |b| = {margin:.6e} <= 0, data outside the certificate")
            };
            SolvabilityVerdict {
                certified,
                summary,
                surplus: Some(surplus),
            }
        }
        Verdict::Fail => SolvabilityVerdict {
            certified: false,
            summary: "fail: the pairing is not positive on the probe grid".into(),
            surplus: None,
        },
    };
    Ok(LevelCertificate {
        level,
        refinement: case.refinement,
        certificate: cert,
        solvability,
    })
}

fn verdict_line(cert: &LevelCertificate) -> String {
    let c = &cert.certificate;
    match c.verdict {
        Verdict::H2 => "verdict: H2".to_string(),
        Verdict::H2prime => format!(
            "verdict: H2' margin={:.6e}",
            c.solvability_margin.unwrap_or(f64::NAN)
        ),
        Verdict::Fail => "verdict: fail".to_string(),
    }
}

fn infsup_level(case: &BuiltCase, level: usize) -> Result<Option<LevelInfSup>, CliError> {
    let Some((a, gx, gy)) = case.linear_pair()? else {
        return Ok(None);
    };
    let report = infsup_constants(&a, &gx, &gy)?;
    let alpha = supremizer_coercivity_check(&a, &gx, &gy)?;
    Ok(Some(LevelInfSup {
        level,
        refinement: case.refinement,
        gamma: report.gamma_xy.max(report.gamma_yx),
        supremizer_defect: (alpha - report.gamma_yx * report.gamma_yx).abs(),
        supremizer_alpha: alpha,
        report,
    }))
}

fn extension_epsilon(case: &BuiltCase, seed: u64) -> Result<Option<f64>, CliError> {
    match &case.data {
        CaseData::NavierStokes(ns) => {
            Ok(Some(measure_extension_epsilon(ns, EPSILON_SAMPLES, seed)?))
        }
        _ => Ok(None),
    }
}

fn level_lines(report: &RunReport) -> Vec<String> {
    report
        .levels
        .iter()
        .map(|l| {
            format!(
                "level {} (refinement {}, dim {}): {} in {} iterations, residual {:.3e}, norm {:.6e}",
                l.level,
                l.refinement,
                l.dimension,
                if l.converged { "converged" } else { "not converged" },
                l.iterations,
                l.residual_norm,
                l.solution_norm
            )
        })
        .collect()
}

pub fn cmd_run(config: &RunConfig) -> Result<Outcome, CliError> {
    let start = Instant::now();
    let mut report = RunReport::new(CommandKind::Run.as_str(), config);
    let (cases, trace) = solve_levels(config, &mut report)?;
    let t = Instant::now();
    let finest = cases.len() - 1;
    let mut summary = level_lines(&report);
    let cert = certify_level(&cases[finest], finest, config)?;
    summary.push(verdict_line(&cert));
    report.certificate = Some(cert);
    if let Some(inf) = infsup_level(&cases[finest], finest)? {
        summary.push(format!(
            "inf-sup constant on level {finest}: {:.6e}",
            inf.gamma
        ));
        report.infsup.push(inf);
    }
    if let Some(eps) = extension_epsilon(&cases[finest], config.seed)? {
        summary.push(format!(
            "extension smallness constant on level {finest}: {eps:.6e}"
        ));
        report.extension_epsilon = Some(eps);
    }
    report.timings.certify = t.elapsed().as_secs_f64();
    report.increments_decreasing = Some(increments_decrease(&report.convergence));
    if let Some(i) = trace.failed_level {
        report.exit_code = EXIT_NOT_CONVERGED;
        report.message = Some(format!("level {i} did not converge"));
    }
    if trace.growth_flag {
        summary.push("warning: solution norms grow superlinearly across levels".into());
    }
    report.boundedness = Some(trace);
    report.timings.total = start.elapsed().as_secs_f64();
    let csv = convergence_csv(&report.convergence);
    Ok(Outcome {
        report,
        csv: Some(csv),
        summary,
    })
}

pub fn cmd_certify(config: &RunConfig) -> Result<Outcome, CliError> {
    let start = Instant::now();
    let mut report = RunReport::new(CommandKind::Certify.as_str(), config);
    let refinements = config.resolved_refinements()?;
    let level = refinements.len() - 1;
    let case = build_case(&config.case_params()?, refinements[level])?;
    report.timings.build = start.elapsed().as_secs_f64();
    let t = Instant::now();
    let cert = certify_level(&case, level, config)?;
    report.timings.certify = t.elapsed().as_secs_f64();
    let summary = vec![verdict_line(&cert), cert.solvability.summary.clone()];
    let csv = evidence_csv(&cert);
    report.certificate = Some(cert);
    report.timings.total = start.elapsed().as_secs_f64();
    Ok(Outcome {
        report,
        csv: Some(csv),
        summary,
    })
}

pub fn cmd_infsup(config: &RunConfig) -> Result<Outcome, CliError> {
    let params = config.case_params()?;
    if !params.is_linear() {
        return Err(CliError::Config(format!(
            "infsup needs an affine case, but {} with forcing {} is nonlinear",
            params.case, params.forcing
        )));
    }
    let start = Instant::now();
    let mut report = RunReport::new(CommandKind::Infsup.as_str(), config);
    let mut summary = Vec::new();
    for (level, k) in config.resolved_refinements()?.into_iter().enumerate() {
        let case = build_case(&params, k)?;
        let inf = infsup_level(&case, level)?.ok_or_else(|| {
            CliError::Config(format!("case {} has no linear pairing", params.case))
        })?;
        summary.push(format!(
            "level {level} (refinement {k}): gamma = {:.6e}, gamma_xy = {:.6e}, gamma_yx = {:.6e}, supremizer alpha = {:.6e}{}",
            inf.gamma,
            inf.report.gamma_xy,
            inf.report.gamma_yx,
            inf.supremizer_alpha,
            match (&inf.report.warning, inf.gamma > 0.0) {
                (Some(w), false) => format!(" (warning: {w})"),
                _ => String::new(),
            }
        ));
        report.infsup.push(inf);
    }
    report.timings.certify = start.elapsed().as_secs_f64();
    report.timings.total = report.timings.certify;
    let csv = infsup_csv(&report.infsup);
    Ok(Outcome {
        report,
        csv: Some(csv),
        summary,
    })
}

pub fn cmd_converge(config: &RunConfig) -> Result<Outcome, CliError> {
    let refinements = config.resolved_refinements()?;
    if refinements.len() < 3 {
        return Err(CliError::Config(format!(
            "a convergence study needs at least 3 levels, got {}",
            refinements.len()
        )));
    }
    let start = Instant::now();
    let mut report = RunReport::new(CommandKind::Converge.as_str(), config);
    let (_, trace) = solve_levels(config, &mut report)?;
    let mut summary = level_lines(&report);
    let decreasing = increments_decrease(&report.convergence);
    report.increments_decreasing = Some(decreasing);
    if let Some(i) = trace.failed_level {
        report.exit_code = EXIT_NOT_CONVERGED;
        report.message = Some(format!("level {i} did not converge"));
    } else if !decreasing {
        report.exit_code = EXIT_NOT_CONVERGED;
        report.message = Some(
            "increments do not decrease: possible failure of coercivity or under-resolution".into(),
        );
    }
    if let Some(m) = &report.message {
        summary.push(m.clone());
    }
    report.boundedness = Some(trace);
    report.timings.total = start.elapsed().as_secs_f64();
    let csv = convergence_csv(&report.convergence);
    Ok(Outcome {
        report,
        csv: Some(csv),
        summary,
    })
}
