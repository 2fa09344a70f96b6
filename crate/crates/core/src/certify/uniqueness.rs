use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::coercivity::min_pairing_direction;
use crate::error::{Error, Result};
use crate::operator::{OperatorProblem, TestMap};

/// Relative threshold below which `⟨A(x) − A(y), x − y⟩` counts as zero.
pub const ZERO_THRESHOLD: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Violation {
    pub pair: usize,
    pub value: f64,
    pub scale: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct UniquenessReport {
    pub monotone_fraction: f64,
    pub violations: Vec<Violation>,
    pub pairs: usize,
    pub targeted_pairs: usize,
    pub zero_threshold: f64,
    pub seed: u64,
}

/// Samples `⟨A(x) − A(y), x − y⟩` over random pairs, plus pairs along the
/// direction of least linearized monotonicity at 0. Values not exceeding
/// `ZERO_THRESHOLD · ‖x − y‖ · max(‖A(x)‖, ‖A(y)‖)` are violations.
pub fn uniqueness_sample(
    problem: &OperatorProblem,
    pairs: usize,
    seed: u64,
) -> Result<UniquenessReport> {
    if !problem.same_space() {
        return Err(Error::Unsupported(
            "monotonicity sampling needs identical trial and test spaces".into(),
        ));
    }
    if pairs < 100 {
        return Err(Error::Input(format!(
            "need at least 100 pairs, got {pairs}"
        )));
    }
    let trial = problem.trial();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let targeted = match min_pairing_direction(problem, &TestMap::identity()) {
        Some(v) => {
            let k = (pairs / 10).min(20);
            (0..k)
                .map(|_| {
                    let s: f64 = rng.random_range(-3.0..3.0);
                    let t: f64 = rng.random_range(-3.0..3.0);
                    (&v * s, &v * t)
                })
                .collect::<Vec<_>>()
        }
        None => Vec::new(),
    };
    let n_targeted = targeted.len();
    let mut samples = Vec::with_capacity(pairs);
    for _ in 0..pairs - n_targeted {
        let rx = 10f64.powf(rng.random_range(-1.0..1.0));
        let ry = 10f64.powf(rng.random_range(-1.0..1.0));
        let x = trial.random_unit(&mut rng)? * rx;
        let y = trial.random_unit(&mut rng)? * ry;
        samples.push((x, y));
    }
    samples.extend(targeted);
    let values: Vec<(f64, f64)> = samples
        .par_iter()
        .map(|(x, y)| {
            let (fx, fy): (DVector<f64>, DVector<f64>) = (problem.apply(x), problem.apply(y));
            let diff = x - y;
            let value = (&fx - &fy).dot(&diff);
            let scale = diff.norm() * fx.norm().max(fy.norm());
            (value, scale)
        })
        .collect();
    let mut violations = Vec::new();
    let mut positive = 0;
    for (i, &(value, scale)) in values.iter().enumerate() {
        if value > ZERO_THRESHOLD * scale {
            positive += 1;
        } else {
            violations.push(Violation {
                pair: i,
                value,
                scale,
            });
        }
    }
    Ok(UniquenessReport {
        monotone_fraction: positive as f64 / values.len() as f64,
        violations,
        pairs: values.len(),
        targeted_pairs: n_targeted,
        zero_threshold: ZERO_THRESHOLD,
        seed,
    })
}
