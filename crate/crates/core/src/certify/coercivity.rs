use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::operator::{coercivity_pairing, estimate_n, OperatorProblem, TestMap};

/// Ratios below this fraction of the largest absolute ratio count as nonpositive.
pub const ZERO_RATIO_FRACTION: f64 = 1e-10;

/// Factor by which the minimal ratio must grow over the last decade of radii
/// for the unbounded-coercivity verdict.
pub const GROWTH_FACTOR: f64 = 2.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    H2,
    H2prime,
    #[serde(rename = "fail")]
    Fail,
}

impl Verdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::H2 => "H2",
            Verdict::H2prime => "H2prime",
            Verdict::Fail => "fail",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct CoercivityCertificate {
    pub verdict: Verdict,
    /// Minimum over directions of the ratio at the largest radius.
    pub m_estimate: f64,
    pub n_phi: f64,
    pub rhs_dual_norm: f64,
    /// `M / N(Φ) − ‖b‖`, reported for the bounded-coercivity verdict.
    pub solvability_margin: Option<f64>,
    pub radii: Vec<f64>,
    /// `ratios[d][k] = a(ρ_k d, Φ(ρ_k d)) / ρ_k` for unit direction `d`.
    pub ratios: Vec<Vec<f64>>,
    /// Number of trailing directions chosen adversarially (minimal pairing at 0).
    pub adversarial_directions: usize,
    pub min_ratio_per_radius: Vec<f64>,
    pub seed: u64,
}

/// Direction minimizing the linearized pairing `x ↦ ⟨A'(0)x, Φx⟩ / ‖x‖²` for
/// linear `Φ`, from the symmetric generalized eigenproblem in the trial inner product.
pub fn min_pairing_direction(problem: &OperatorProblem, phi: &TestMap) -> Option<DVector<f64>> {
    let n = problem.trial().dim();
    if n == 0 {
        return None;
    }
    let p = if phi.is_identity() {
        if problem.test().dim() != n {
            return None;
        }
        None
    } else {
        Some(phi.matrix()?)
    };
    let zero = DVector::zeros(n);
    let j = problem
        .jacobian(&zero)
        .unwrap_or_else(|| problem.fd_jacobian(&zero));
    let s = match p {
        Some(p) => linalg::par_gemm_tn(p, &j),
        None => j,
    };
    let s = (&s + s.transpose()) * 0.5;
    let g = problem
        .trial()
        .gram()
        .cloned()
        .unwrap_or_else(|| DMatrix::identity(n, n));
    let (_, v) = linalg::gen_sym_min_eig(&s, &g).ok()?;
    let nv = problem.trial().norm(&v);
    (nv > 0.0 && nv.is_finite()).then(|| v / nv)
}

fn validate_grid(directions: usize, radii: &[f64]) -> Result<()> {
    if directions < 8 {
        return Err(Error::Input(format!(
            "need at least 8 directions, got {directions}"
        )));
    }
    if radii.len() < 4 || radii[0] <= 0.0 || radii.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Input(
            "need at least 4 positive increasing radii".into(),
        ));
    }
    if radii[radii.len() - 1] / radii[0] < 100.0 * (1.0 - 1e-12) {
        return Err(Error::Input("radii must span at least two decades".into()));
    }
    Ok(())
}

/// `n` radii spaced geometrically from `lo` to `hi`.
pub fn geometric_radii(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|k| lo * (hi / lo).powf(k as f64 / (n - 1).max(1) as f64))
        .collect()
}

/// Heuristic classification of mapped coercivity on a seeded direction/radius grid.
pub fn probe_coercivity(
    problem: &OperatorProblem,
    phi: &TestMap,
    directions: usize,
    radii: &[f64],
    seed: u64,
) -> Result<CoercivityCertificate> {
    validate_grid(directions, radii)?;
    let trial = problem.trial();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut dirs = (0..directions)
        .map(|_| trial.random_unit(&mut rng))
        .collect::<Result<Vec<_>>>()?;
    let mut adversarial = 0;
    if let Some(v) = min_pairing_direction(problem, phi) {
        dirs.push(-&v);
        dirs.push(v);
        adversarial = 2;
    }
    let ratios: Vec<Vec<f64>> = dirs
        .par_iter()
        .map(|d| {
            radii
                .iter()
                .map(|&r| coercivity_pairing(problem, phi, &(d * r)) / r)
                .collect()
        })
        .collect();
    let scale = ratios.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
    let zero = ZERO_RATIO_FRACTION * scale;
    let k_last = radii.len() - 1;
    let min_per_radius: Vec<f64> = (0..radii.len())
        .map(|k| {
            ratios
                .iter()
                .map(|row| row[k])
                .fold(f64::INFINITY, f64::min)
        })
        .collect();
    let m = min_per_radius[k_last];
    let k_decade = radii
        .iter()
        .rposition(|&r| r <= radii[k_last] / 10.0 * (1.0 + 1e-12))
        .unwrap_or(0);

    let n_phi = match phi.n_estimate() {
        Some(v) => v,
        None => estimate_n(phi, trial, problem.test(), 16, radii, seed)?,
    };
    let rhs_norm = problem.estimate_rhs_dual_norm();

    let nonpositive = !(m > zero) || ratios.iter().flatten().any(|v| !v.is_finite());
    let verdict = if nonpositive {
        Verdict::Fail
    } else if min_per_radius[k_decade] > 0.0 && m >= GROWTH_FACTOR * min_per_radius[k_decade] {
        Verdict::H2
    } else {
        Verdict::H2prime
    };
    let margin = (verdict == Verdict::H2prime && n_phi > 0.0).then(|| m / n_phi - rhs_norm);
    Ok(CoercivityCertificate {
        verdict,
        m_estimate: m,
        n_phi,
        rhs_dual_norm: rhs_norm,
        solvability_margin: margin,
        radii: radii.to_vec(),
        ratios,
        adversarial_directions: adversarial,
        min_ratio_per_radius: min_per_radius,
        seed,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SurplusReport {
    pub certified: bool,
    pub worst: f64,
    pub radius: f64,
    pub samples: usize,
}

/// Samples `s(x) = ⟨A(x) − b, Φ(x)⟩` on the sphere `‖x‖_X = radius`; certified
/// iff every sample is positive.
pub fn sphere_surplus(
    problem: &OperatorProblem,
    phi: &TestMap,
    radius: f64,
    samples: usize,
    seed: u64,
) -> Result<SurplusReport> {
    if !(radius > 0.0) || !radius.is_finite() {
        return Err(Error::Input(format!(
            "radius must be positive, got {radius}"
        )));
    }
    if samples < 16 {
        return Err(Error::Input(format!(
            "need at least 16 samples, got {samples}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut points = (0..samples)
        .map(|_| problem.trial().random_unit(&mut rng).map(|d| d * radius))
        .collect::<Result<Vec<_>>>()?;
    if let Some(v) = min_pairing_direction(problem, phi) {
        points.push(&v * radius);
        points.push(-v * radius);
    }
    let worst = points
        .par_iter()
        .map(|x| (problem.apply(x) - problem.rhs()).dot(&phi.apply(x)))
        .reduce(
            || f64::INFINITY,
            |a, b| {
                if b.is_nan() || a.is_nan() {
                    f64::NAN
                } else {
                    a.min(b)
                }
            },
        );
    Ok(SurplusReport {
        certified: worst > 0.0,
        worst,
        radius,
        samples: points.len(),
    })
}
