//! The (α, β) rough integral `∫ f(X̂) d𝕏` by compensated Riemann sums on
//! dyadic refinements, plus the explicit growth and Lipschitz constants.

mod bounds;
mod rough_path;
mod sums;
mod volfn;

pub use bounds::{
    estimate_k, estimate_m, lipschitz_ratio, lipschitz_ratio_of, riemann_zeta, theoretical_bounds, xhat_range,
    BoundConstants, BoundParams, LipschitzReport,
};
pub use rough_path::RoughPath;
pub use sums::{
    compensated_sum_level1, compensated_sum_level2, higher_order_sum, integrate, ConvergenceTrace, LevelTrace, StopReason, DEFAULT_TOL,
};
pub use volfn::{ScalarFn, VolFamily, VolFunction};
