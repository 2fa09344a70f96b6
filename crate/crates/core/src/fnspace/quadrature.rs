//! Gauss rules on the reference interval `[0, 1]` and the reference triangle
//! `{(ξ, η) : ξ, η ≥ 0, ξ + η ≤ 1}`.

use std::f64::consts::PI;

/// A quadrature rule on a reference cell. Points carry 1 or 2 coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct Rule {
    pub points: Vec<[f64; 2]>,
    pub weights: Vec<f64>,
    /// Highest total polynomial degree integrated exactly.
    pub exactness: usize,
}

impl Rule {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
}

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1, "Gauss rule needs at least one point");
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre(n, z);
            dp = d;
            let dz = p / d;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre(n, z);
        if d != 0.0 {
            dp = d;
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    (x, w)
}

/// `(P_n(z), P_n'(z))` by the three-term recurrence.
fn legendre(n: usize, z: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = z;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * z * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (z * p1 - p0) / (z * z - 1.0);
    (p1, d)
}

/// Gauss rule on `[0, 1]` exact for polynomials of degree `exactness`.
pub fn interval_rule(exactness: usize) -> Rule {
    let n = exactness / 2 + 1;
    let (x, w) = gauss_legendre(n);
    Rule {
        points: x.iter().map(|xi| [0.5 * (xi + 1.0), 0.0]).collect(),
        weights: w.iter().map(|wi| 0.5 * wi).collect(),
        exactness: 2 * n - 1,
    }
}

/// Collapsed (Duffy) tensor Gauss rule on the reference triangle, exact for
/// total degree `exactness`. An `n × n` product rule integrates degree `2n − 2`.
pub fn triangle_rule(exactness: usize) -> Rule {
    let n = exactness / 2 + 1;
    let (x, w) = gauss_legendre(n);
    let mut points = Vec::with_capacity(n * n);
    let mut weights = Vec::with_capacity(n * n);
    for (xs, ws) in x.iter().zip(&w) {
        let s = 0.5 * (xs + 1.0);
        for (xt, wt) in x.iter().zip(&w) {
            let t = 0.5 * (xt + 1.0);
            points.push([s, (1.0 - s) * t]);
            weights.push(0.25 * ws * wt * (1.0 - s));
        }
    }
    Rule {
        points,
        weights,
        exactness: 2 * n - 2,
    }
}
