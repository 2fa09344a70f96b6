//! Finite element realizations of `W^{1,p}_0` on the unit interval and square.

mod dual;
mod element;
mod exponents;
mod mesh;
pub mod quadrature;
mod space;

use std::sync::Arc;

pub use dual::dual_norm;
pub use element::{local_node_count, local_nodes, shape};
pub use exponents::{SobolevExponents, BORDERLINE_FACTOR};
pub use mesh::Mesh;
pub use space::{signed_power, CellData, CoefVec, DiscreteSpace, QuadPoint, SpaceId};

use crate::error::Result;

/// Builds a shared P`degree` space on the unit interval (`dim = 1`) or unit square (`dim = 2`).
pub fn build_space(
    dim: usize,
    refinement: u32,
    degree: usize,
    p: f64,
) -> Result<Arc<DiscreteSpace>> {
    DiscreteSpace::build(dim, refinement, degree, p).map(Arc::new)
}
