use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Sobolev exponents attached to `W^{1,p}` in `d` dimensions.
///
/// `1/p* = 1/p − 1/d`, `1/q* = 1/q − 1/d` and `1/r + 1/q* = 1`. A negative
/// reciprocal means the embedding reaches `L^∞` and the exponent is `∞`. In the
/// borderline case `p = d` (or `q = d`) any finite exponent is admissible;
/// [`BORDERLINE_FACTOR`]` · p` is used.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SobolevExponents {
    pub d: usize,
    pub p: f64,
    pub q: f64,
    pub p_star: f64,
    pub q_star: f64,
    pub r: f64,
}

pub const BORDERLINE_FACTOR: f64 = 2.0;

impl SobolevExponents {
    pub fn new(p: f64, d: usize) -> Result<SobolevExponents> {
        if !(p > 1.0) || !p.is_finite() {
            return Err(Error::Domain(format!("p must lie in (1, ∞), got {p}")));
        }
        if d == 0 {
            return Err(Error::Domain("dimension must be positive".into()));
        }
        let q = p / (p - 1.0);
        let p_star = embedding_exponent(p, d);
        let q_star = embedding_exponent(q, d);
        let r = if q_star.is_infinite() {
            1.0
        } else {
            q_star / (q_star - 1.0)
        };
        Ok(SobolevExponents {
            d,
            p,
            q,
            p_star,
            q_star,
            r,
        })
    }
}

fn embedding_exponent(s: f64, d: usize) -> f64 {
    let df = d as f64;
    let recip = 1.0 / s - 1.0 / df;
    if (s - df).abs() < 1e-12 {
        BORDERLINE_FACTOR * s
    } else if recip < 0.0 {
        f64::INFINITY
    } else {
        1.0 / recip
    }
}
