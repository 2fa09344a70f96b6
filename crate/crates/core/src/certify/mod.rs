//! Numerical evidence for coercivity, solvability, boundedness, inf-sup
//! stability and monotonicity.

mod boundedness;
mod coercivity;
mod infsup;
mod uniqueness;

pub use boundedness::{
    superlinear_growth, track_boundedness, track_boundedness_with, BoundednessTrace, LevelRecord,
    GROWTH_RATIO,
};
pub use coercivity::{
    geometric_radii, min_pairing_direction, probe_coercivity, sphere_surplus,
    CoercivityCertificate, SurplusReport, Verdict, GROWTH_FACTOR, ZERO_RATIO_FRACTION,
};
pub use infsup::{infsup_constants, supremizer_coercivity_check, InfSupReport, RANK_TOLERANCE};
pub use uniqueness::{uniqueness_sample, UniquenessReport, Violation, ZERO_THRESHOLD};
