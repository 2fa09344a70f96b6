use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Uniform mesh of the unit interval or a structured right-triangle split of
/// the unit square.
///
/// Refinement level `k` has `2^k` cells per side, so level `k + 1` refines
/// level `k` by bisection and the hierarchy is nested.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mesh {
    pub dimension: usize,
    pub refinement: u32,
    pub vertices: Vec<[f64; 2]>,
    /// Vertex indices, 2 per interval or 3 per triangle (counter-clockwise).
    pub cells: Vec<Vec<usize>>,
    pub boundary: Vec<bool>,
}

impl Mesh {
    pub fn unit_interval(refinement: u32) -> Result<Mesh> {
        let n = cells_per_side(refinement)?;
        let h = 1.0 / n as f64;
        let vertices = (0..=n).map(|i| [i as f64 * h, 0.0]).collect();
        let cells = (0..n).map(|i| vec![i, i + 1]).collect();
        let boundary = (0..=n).map(|i| i == 0 || i == n).collect();
        Ok(Mesh {
            dimension: 1,
            refinement,
            vertices,
            cells,
            boundary,
        })
    }

    pub fn unit_square(refinement: u32) -> Result<Mesh> {
        let n = cells_per_side(refinement)?;
        let h = 1.0 / n as f64;
        let idx = |i: usize, j: usize| j * (n + 1) + i;
        let mut vertices = Vec::with_capacity((n + 1) * (n + 1));
        let mut boundary = Vec::with_capacity((n + 1) * (n + 1));
        for j in 0..=n {
            for i in 0..=n {
                vertices.push([i as f64 * h, j as f64 * h]);
                boundary.push(i == 0 || j == 0 || i == n || j == n);
            }
        }
        let mut cells = Vec::with_capacity(2 * n * n);
        for j in 0..n {
            for i in 0..n {
                let (v00, v10, v01, v11) =
                    (idx(i, j), idx(i + 1, j), idx(i, j + 1), idx(i + 1, j + 1));
                cells.push(vec![v00, v10, v11]);
                cells.push(vec![v00, v11, v01]);
            }
        }
        Ok(Mesh {
            dimension: 2,
            refinement,
            vertices,
            cells,
            boundary,
        })
    }

    pub fn build(dimension: usize, refinement: u32) -> Result<Mesh> {
        match dimension {
            1 => Mesh::unit_interval(refinement),
            2 => Mesh::unit_square(refinement),
            d => Err(Error::Config(format!("unsupported mesh dimension {d}"))),
        }
    }

    pub fn cells_per_side(&self) -> usize {
        1 << self.refinement
    }

    pub fn h(&self) -> f64 {
        1.0 / self.cells_per_side() as f64
    }

    /// Index of a cell containing `x` (points on shared faces resolve to one of the neighbours).
    pub fn locate(&self, x: [f64; 2]) -> usize {
        let n = self.cells_per_side();
        let clampi = |t: f64| ((t * n as f64).floor().max(0.0) as usize).min(n - 1);
        match self.dimension {
            1 => clampi(x[0]),
            _ => {
                let (i, j) = (clampi(x[0]), clampi(x[1]));
                let h = self.h();
                let (lx, ly) = (x[0] - i as f64 * h, x[1] - j as f64 * h);
                let base = 2 * (j * n + i);
                if lx >= ly {
                    base
                } else {
                    base + 1
                }
            }
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("mesh serializes")
    }
}

fn cells_per_side(refinement: u32) -> Result<usize> {
    if refinement == 0 || refinement > 12 {
        return Err(Error::Config(format!(
            "refinement must lie in 1..=12, got {refinement}"
        )));
    }
    Ok(1 << refinement)
}
