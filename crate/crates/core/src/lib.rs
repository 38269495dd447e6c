//! Sharp bounds on linear combinations of conditional means `E[Y | X, G]`
//! when only group-level aggregates are observed: the group mean of `Y`, the
//! per-covariate marginals of `X`, and optionally subgroup means.
//!
//! The main entry points are [`identified_set`] for the point-estimated
//! interval, [`ci_identified_sets`] for Bonferroni confidence sets, and
//! [`frechet_identified_set`] for the closed-form binary-outcome bounds.

pub mod bounds;
pub mod dataset;
pub mod error;
pub mod feasible;
pub mod frechet;
pub mod inference;
pub mod linprog;
pub mod search;
pub mod simlab;
pub mod support;

pub use bounds::{
    group_bounds, identified_set, inner_closed_form, inner_lp, joint_known_range, BoundResult, Direction,
    GroupBounds, JointKnownRange, SearchOptions, Witness,
};
pub use dataset::{
    validate_dataset, AggregateDataset, FinerMoment, GroupRecord, MarginalEntry, Monotone, OutcomeRange,
    ShapeConstraintSet, ShapeRow, ShapeSpec, ValidationOptions, Violation, WeightVector,
};
pub use error::{Error, Result};
pub use feasible::{min_slack_joint, FeasibleJoint, FeasibleSetChart, JointPolytope};
pub use frechet::{frechet_identified_set, FrechetResult};
pub use inference::{ci_identified_set, ci_identified_sets, clopper_pearson, CiOptions, ConfidenceReport};
pub use support::CovariateSupport;
