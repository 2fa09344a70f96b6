use std::fmt;

use nalgebra::DVector;

use super::system::GalerkinSystem;
use super::testmap::MapFn;
use crate::error::{Error, Result};

/// One level of a Galerkin hierarchy: the discrete system and a map carrying
/// coefficients of the previous level into this level's trial space.
#[derive(Clone)]
pub struct HierarchyLevel {
    pub refinement: u32,
    pub system: GalerkinSystem,
    pub prolongate: Option<MapFn>,
}

impl fmt::Debug for HierarchyLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("HierarchyLevel")
            .field("refinement", &self.refinement)
            .field("dim", &self.system.dim())
            .finish()
    }
}

impl HierarchyLevel {
    /// `‖x − P x_coarse‖_X`, or `None` without a prolongation.
    pub fn increment(&self, coarse: &DVector<f64>, x: &DVector<f64>) -> Option<f64> {
        let p = self.prolongate.as_ref()?;
        let px = p(coarse);
        if px.len() != x.len() {
            return None;
        }
        Some(self.system.norm_x(&(x - px)))
    }
}

/// Sequence of discrete systems with nested trial spaces of increasing dimension.
#[derive(Clone, Debug)]
pub struct GalerkinHierarchy {
    levels: Vec<HierarchyLevel>,
}

impl GalerkinHierarchy {
    pub fn new(levels: Vec<HierarchyLevel>) -> Result<GalerkinHierarchy> {
        if levels.is_empty() {
            return Err(Error::Config("hierarchy needs at least one level".into()));
        }
        for w in levels.windows(2) {
            if w[1].system.dim() <= w[0].system.dim() {
                return Err(Error::Config(format!(
                    "trial dimensions must increase strictly, got {} then {}",
                    w[0].system.dim(),
                    w[1].system.dim()
                )));
            }
        }
        Ok(GalerkinHierarchy { levels })
    }

    /// Builds one level per refinement with `factory`.
    pub fn build<F>(refinements: &[u32], factory: F) -> Result<GalerkinHierarchy>
    where
        F: Fn(u32) -> Result<HierarchyLevel>,
    {
        let levels = refinements
            .iter()
            .map(|&k| factory(k))
            .collect::<Result<Vec<_>>>()?;
        GalerkinHierarchy::new(levels)
    }

    pub fn levels(&self) -> &[HierarchyLevel] {
        &self.levels
    }

    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }
}
