//! Nodal Lagrange shape functions on reference cells.
//!
//! Local node order: vertices first, then (P2) edge midpoints `m01, m12, m20`
//! in 2D, or the interval midpoint in 1D.

/// Number of local nodes of the P`degree` element in `dim` dimensions.
pub fn local_node_count(dim: usize, degree: usize) -> usize {
    match (dim, degree) {
        (1, 1) => 2,
        (1, 2) => 3,
        (2, 1) => 3,
        (2, 2) => 6,
        _ => 0,
    }
}

/// Reference coordinates of local nodes.
pub fn local_nodes(dim: usize, degree: usize) -> Vec<[f64; 2]> {
    match (dim, degree) {
        (1, 1) => vec![[0.0, 0.0], [1.0, 0.0]],
        (1, 2) => vec![[0.0, 0.0], [1.0, 0.0], [0.5, 0.0]],
        (2, 1) => vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]],
        (2, 2) => vec![
            [0.0, 0.0],
            [1.0, 0.0],
            [0.0, 1.0],
            [0.5, 0.0],
            [0.5, 0.5],
            [0.0, 0.5],
        ],
        _ => Vec::new(),
    }
}

/// Shape values and reference gradients at a reference point.
pub fn shape(dim: usize, degree: usize, xi: [f64; 2]) -> (Vec<f64>, Vec<[f64; 2]>) {
    match dim {
        1 => {
            let (l0, l1) = (1.0 - xi[0], xi[0]);
            match degree {
                1 => (vec![l0, l1], vec![[-1.0, 0.0], [1.0, 0.0]]),
                _ => (
                    vec![l0 * (2.0 * l0 - 1.0), l1 * (2.0 * l1 - 1.0), 4.0 * l0 * l1],
                    vec![
                        [-(4.0 * l0 - 1.0), 0.0],
                        [4.0 * l1 - 1.0, 0.0],
                        [4.0 * (l0 - l1), 0.0],
                    ],
                ),
            }
        }
        _ => {
            let l = [1.0 - xi[0] - xi[1], xi[0], xi[1]];
            let dl = [[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]];
            match degree {
                1 => (l.to_vec(), dl.to_vec()),
                _ => {
                    let mut vals = Vec::with_capacity(6);
                    let mut grads = Vec::with_capacity(6);
                    for i in 0..3 {
                        vals.push(l[i] * (2.0 * l[i] - 1.0));
                        let s = 4.0 * l[i] - 1.0;
                        grads.push([s * dl[i][0], s * dl[i][1]]);
                    }
                    for (i, j) in [(0, 1), (1, 2), (2, 0)] {
                        vals.push(4.0 * l[i] * l[j]);
                        grads.push([
                            4.0 * (l[j] * dl[i][0] + l[i] * dl[j][0]),
                            4.0 * (l[j] * dl[i][1] + l[i] * dl[j][1]),
                        ]);
                    }
                    (vals, grads)
                }
            }
        }
    }
}
