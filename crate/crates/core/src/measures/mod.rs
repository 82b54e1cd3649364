//! State spaces, measures, rate/growth functions, kernel laws and the
//! admissibility certificate for the truncation level.

mod admissible;
mod law;
mod rate;
mod state;

pub use admissible::{
    admissible_a, suggest_a, Admissibility, AdmissibilityRule, GridSpec, Metric, Witness, SUGGEST_SAFETY,
};
pub use law::{BirthLaw, FragmentRatio, KernelSpec, Law1D, MatingMix, Quadrature, SpatialNoise, VecLaw};
pub use rate::{
    CustomRate, GrowthFunction, Monotonicity, PowerTerm, RateFunction, FLOW_STEP, MONOTONICITY_TOLERANCE,
};
pub use state::{EmpiricalMeasure, Space, StatePoint, WEIGHT_TOLERANCE};
