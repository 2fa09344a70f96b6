use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Sampling range `[−GRID_LIMIT, GRID_LIMIT]` for growth checks.
pub const GRID_LIMIT: f64 = 1e6;

/// Allowed growth of the normalized envelope over the last decade of the grid.
pub const ENVELOPE_SLACK: f64 = 1.5;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", tag = "class", content = "exponent")]
pub enum GrowthClass {
    /// `|f| ≤ c`.
    Bounded,
    /// `|f₀(x)| ≤ c + b|x|^{1−ε}` for the same-sign part `f₀`.
    Sublinear(f64),
    /// `|f(x)| ≤ c + b|x|^s`.
    Power(f64),
}

/// Result of a sampled growth check with the fitted envelope constants.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct GrowthFit {
    pub passed: bool,
    pub exponent: f64,
    pub c: f64,
    pub b: f64,
}

/// A scalar nonlinearity `f` with optional derivative and declared growth class.
#[derive(Clone)]
pub struct ForcingSpec {
    name: String,
    f: ScalarFn,
    f_prime: Option<ScalarFn>,
    growth: GrowthClass,
}

impl fmt::Debug for ForcingSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ForcingSpec")
            .field("name", &self.name)
            .field("growth", &self.growth)
            .finish()
    }
}

impl ForcingSpec {
    pub fn new(
        name: &str,
        f: ScalarFn,
        f_prime: Option<ScalarFn>,
        growth: GrowthClass,
    ) -> ForcingSpec {
        ForcingSpec {
            name: name.to_string(),
            f,
            f_prime,
            growth,
        }
    }

    pub fn zero() -> ForcingSpec {
        ForcingSpec::new(
            "zero",
            Arc::new(|_| 0.0),
            Some(Arc::new(|_| 0.0)),
            GrowthClass::Bounded,
        )
    }

    /// `λ sin(u)`.
    pub fn sine(lambda: f64) -> ForcingSpec {
        ForcingSpec::new(
            "sin",
            Arc::new(move |u| lambda * u.sin()),
            Some(Arc::new(move |u| lambda * u.cos())),
            GrowthClass::Bounded,
        )
    }

    /// `−λu³`: the operator `−Δu + λu³` is monotone and the same-sign part vanishes.
    pub fn monotone_cubic(lambda: f64) -> ForcingSpec {
        ForcingSpec::new(
            "cubic",
            Arc::new(move |u| -lambda * u * u * u),
            Some(Arc::new(move |u| -3.0 * lambda * u * u)),
            GrowthClass::Sublinear(1.0),
        )
    }

    /// `λu³`.
    pub fn cubic(lambda: f64) -> ForcingSpec {
        ForcingSpec::new(
            "cubic-plus",
            Arc::new(move |u| lambda * u * u * u),
            Some(Arc::new(move |u| 3.0 * lambda * u * u)),
            GrowthClass::Power(3.0),
        )
    }

    /// `λu`.
    pub fn linear(name: &str, lambda: f64) -> ForcingSpec {
        ForcingSpec::new(
            name,
            Arc::new(move |u| lambda * u),
            Some(Arc::new(move |_| lambda)),
            GrowthClass::Power(1.0),
        )
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn growth(&self) -> GrowthClass {
        self.growth
    }

    pub fn eval(&self, u: f64) -> f64 {
        (self.f)(u)
    }

    pub fn function(&self) -> &ScalarFn {
        &self.f
    }

    /// Derivative, by central differences when not supplied.
    pub fn derivative(&self, u: f64) -> f64 {
        match &self.f_prime {
            Some(d) => d(u),
            None => {
                let h = 1e-6 * (1.0 + u.abs());
                ((self.f)(u + h) - (self.f)(u - h)) / (2.0 * h)
            }
        }
    }

    /// Same-sign part `f₊χ₊ + f₋χ₋`.
    pub fn same_sign_part(&self, u: f64) -> f64 {
        let v = (self.f)(u);
        if u > 0.0 {
            v.max(0.0)
        } else if u < 0.0 {
            v.min(0.0)
        } else {
            0.0
        }
    }

    /// Sampled check of the declared growth class on a symmetric log grid over
    /// `[−GRID_LIMIT, GRID_LIMIT]`: the envelope `|g(x)| / (1 + |x|^e)` over the
    /// last decade may exceed its maximum on the rest of the grid by at most
    /// [`ENVELOPE_SLACK`]. The fitted `c`, `b` satisfy `|g| ≤ c + b|x|^e` on the grid.
    pub fn check_growth(&self) -> GrowthFit {
        let (exponent, g): (f64, Box<dyn Fn(f64) -> f64>) = match self.growth {
            GrowthClass::Bounded => (0.0, Box::new(|x| (self.f)(x))),
            GrowthClass::Sublinear(eps) => (1.0 - eps, Box::new(|x| self.same_sign_part(x))),
            GrowthClass::Power(s) => (s, Box::new(|x| (self.f)(x))),
        };
        let grid = log_grid();
        let mut head = 0.0f64;
        let mut tail = 0.0f64;
        let mut finite = true;
        let mut c = 0.0f64;
        let mut values = Vec::with_capacity(grid.len());
        for &x in &grid {
            let v = g(x).abs();
            if !v.is_finite() {
                finite = false;
                continue;
            }
            values.push((x, v));
            let env = v / (1.0 + x.abs().powf(exponent));
            if x.abs() > GRID_LIMIT / 10.0 {
                tail = tail.max(env);
            } else {
                head = head.max(env);
            }
            if x.abs() <= 1.0 {
                c = c.max(v);
            }
        }
        let b = values
            .iter()
            .filter(|(x, _)| x.abs() > 1.0)
            .map(|(x, v)| (v - c).max(0.0) / x.abs().powf(exponent))
            .fold(0.0f64, f64::max);
        let passed = finite && (tail == 0.0 || tail <= ENVELOPE_SLACK * head);
        GrowthFit {
            passed,
            exponent,
            c,
            b,
        }
    }

    /// Sampled Lipschitz constants of `f` on `[−K, K]` for each `K`.
    pub fn lipschitz_constants(&self, ks: &[f64]) -> Vec<f64> {
        ks.iter()
            .map(|&k| {
                let n = 4000;
                let xs: Vec<f64> = (0..=n)
                    .map(|i| -k + 2.0 * k * i as f64 / n as f64)
                    .collect();
                xs.windows(2)
                    .map(|w| ((self.f)(w[1]) - (self.f)(w[0])).abs() / (w[1] - w[0]))
                    .fold(0.0f64, f64::max)
            })
            .collect()
    }

    /// Rejects forcings whose sampled growth contradicts the declared class or
    /// that are not locally Lipschitz on the sampled compacts.
    pub fn validate(&self) -> Result<GrowthFit> {
        let fit = self.check_growth();
        if !fit.passed {
            return Err(Error::Config(format!(
                "forcing '{}' violates its declared growth class {:?}",
                self.name, self.growth
            )));
        }
        if self
            .lipschitz_constants(&[1.0, 10.0, 100.0])
            .iter()
            .any(|l| !l.is_finite())
        {
            return Err(Error::Config(format!(
                "forcing '{}' is not locally Lipschitz",
                self.name
            )));
        }
        Ok(fit)
    }
}

fn log_grid() -> Vec<f64> {
    let mut out = vec![0.0];
    let steps = 240;
    for i in 0..=steps {
        let x = 10f64.powf(-6.0 + 12.0 * i as f64 / steps as f64);
        out.push(x);
        out.push(-x);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn standard_forcings_pass_their_growth_checks() {
        for f in [
            ForcingSpec::zero(),
            ForcingSpec::sine(5.0),
            ForcingSpec::monotone_cubic(1.0),
            ForcingSpec::cubic(1.0),
            ForcingSpec::linear("linear", 2.0),
        ] {
            assert!(f.validate().is_ok(), "{}", f.name());
        }
    }

    #[test]
    fn misdeclared_growth_is_rejected() {
        let f = ForcingSpec::new("lin", Arc::new(|u| u), None, GrowthClass::Bounded);
        assert!(matches!(f.validate(), Err(Error::Config(_))));
        let f = ForcingSpec::new("lin", Arc::new(|u| u), None, GrowthClass::Sublinear(0.5));
        assert!(matches!(f.validate(), Err(Error::Config(_))));
        let f = ForcingSpec::new(
            "sq",
            Arc::new(|u| u * u.abs()),
            None,
            GrowthClass::Power(1.0),
        );
        assert!(matches!(f.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn same_sign_part_of_monotone_cubic_vanishes() {
        let f = ForcingSpec::monotone_cubic(2.0);
        for u in [-3.0, -0.1, 0.0, 0.5, 7.0] {
            assert_eq!(f.same_sign_part(u), 0.0);
        }
        let s = ForcingSpec::sine(1.0);
        assert_eq!(s.same_sign_part(1.0), 1.0f64.sin());
        assert_eq!(s.same_sign_part(4.0), 0.0);
        assert_eq!(s.same_sign_part(-1.0), -(1.0f64.sin()));
    }

    #[test]
    fn fitted_envelope_bounds_the_samples() {
        let f = ForcingSpec::sine(3.0);
        let fit = f.check_growth();
        assert!((fit.c - 3.0 * 1.0f64.sin()).abs() < 1e-12);
        for x in [-1e5, -20.0, 0.3, 2.0, 1e4] {
            assert!(f.eval(x).abs() <= fit.c + fit.b * x.abs().powf(fit.exponent) + 1e-12);
        }
    }

    #[test]
    fn lipschitz_constants_of_sine_and_cubic() {
        let l = ForcingSpec::sine(5.0).lipschitz_constants(&[1.0, 10.0]);
        assert!((l[0] - 5.0).abs() < 1e-3 && (l[1] - 5.0).abs() < 1e-3);
        let l = ForcingSpec::cubic(1.0).lipschitz_constants(&[1.0, 10.0, 100.0]);
        // sup |3u²| on [−K, K]
        for (k, lk) in [1.0, 10.0, 100.0].iter().zip(&l) {
            assert!((lk - 3.0 * k * k).abs() < 0.01 * 3.0 * k * k);
        }
    }

    #[test]
    fn derivative_falls_back_to_differences() {
        let f = ForcingSpec::new(
            "exp",
            Arc::new(|u: f64| u.tanh()),
            None,
            GrowthClass::Bounded,
        );
        assert!((f.derivative(0.3) - (1.0 - 0.3f64.tanh().powi(2))).abs() < 1e-8);
    }
}
