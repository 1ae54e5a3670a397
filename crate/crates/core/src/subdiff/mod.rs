//! Clarke subdifferentials of composite losses over factorization maps.
//!
//! Upper sets come from the chain rule and are represented exactly as
//! zonotopes; lower sets are estimated by sampling gradients near the point.

mod loss;
mod oracles;
mod outer;
mod sampling;
mod zonotope;

pub use loss::{Interval, LossKind, ScalarLoss};
pub use oracles::{fm_train_subdiff, gmf_subdiff, FmTrainSubdiff, GmfObjective};
pub use outer::{
    chainrule_upper, Composite, GroupedSumLoss, Objective, OuterLoss, ProductDifferenceLoss,
    SeparableLoss,
};
pub use sampling::{
    max_inclusion_residual, sample_gradients, support_gap, support_gap_along, uniform_in_ball,
    unit_direction, GapReport, GradientSample, KINK_TOL,
};
pub use zonotope::{BoxProjection, Generator, SubgradientZonotope, ZeroTest, MEMBERSHIP_TOL_SQ};
