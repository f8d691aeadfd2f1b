//! Numerical laboratory for two-good screening with ordeals and damages.
//!
//! Types have values `(a, b)` in the unit square for goods A and B. The
//! designer offers each good through a menu of `(quality, ordeal)` options;
//! agents pick the option and good that maximize `quality · value − ordeal`.

// `!(x > 0.0)` is how NaN gets rejected along with non-positive values
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod geom;
pub mod pwl;
pub mod dist;
pub mod mechanism;
pub mod boundary;
pub mod implement;
pub mod market;
pub mod optimize;
pub mod waitlist;

pub use dist::{
    check_assumption1, check_weighted_condition, hetero_transform, ConditionReport, DensityKind,
    DensityModel, StrictDirection, WeightedModel,
};
pub use error::{Error, Result};
pub use pwl::PwlConvex;
pub use mechanism::{best_option, indirect_utility, Choice, Good, Mechanism, MenuOption, Outcome};
pub use boundary::{check_feasible_pair, Boundary, FeasibilityReport, Orientation};
pub use implement::{
    brute_force_best_ua, c_scale, extract_boundary, m_profile, mechanism_from, optimal_ua, ub_from,
    wstar_welfare, ImplementationBundle, StepFunction,
};
pub use market::{market_clearing_ordeals, posted_demand, theorem1_mechanism, ClearingResult};
pub use optimize::{
    default_slopes, example1_compare, local_boundary_search, multi_start_search, single_good_compare,
    slope_sweep, stationarity_diagnostic, supply_preserving_linear, OneDimDensity, SearchResult,
    StationarityPoint, SweepResult, SweepRow,
};
pub use waitlist::{
    expected_discount, simulate, static_equivalent, steady_state_check, SimConfig, Trajectory,
    TrajectoryRow, WaitMechanism, WaitOption,
};
