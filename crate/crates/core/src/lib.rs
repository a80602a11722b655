//! Critical points of the common-mean likelihood equations for two or more
//! multivariate normal populations with unknown, unequal covariances.
//!
//! The crate builds the cleared-denominator polynomial system for a problem,
//! finds all of its complex solutions by homotopy continuation, drops the
//! spurious ones on which the denominators vanish, and selects the maximum
//! likelihood estimate among the real survivors. Paths start either from
//! generic solutions of the likelihood family ([`family`], the default) or
//! from a total-degree start system ([`homotopy::solve_system`]). The number of
//! complex critical points for generic data is `d(k, p)` (see [`mldegree`]),
//! which is `2p + 1` for two populations.

pub mod estimator;
pub mod family;
pub mod homotopy;
pub mod linalg;
pub mod mldegree;
pub mod poly;
pub mod problem;
pub mod rng;
pub mod simulation;
pub mod system;

pub use estimator::{
    count_real, critical_points, estimate_fixed_point, estimate_global, fixed_point_iterate,
    EstimateError, EstimateReport, FixedPointInit, Method,
};
pub use homotopy::{CriticalPoint, CriticalPointSet, StartKind, TrackerConfig};
pub use problem::{GroupData, GroupStats, Problem, ProblemError};
pub use system::{build_system, LikelihoodSystem};
