//! Interface extraction and the free-boundary diagnostics measured on it.

mod contour;
mod flatness;
mod regular;
mod slopes;

pub use contour::{
    boundary_consistency, extract_level_set, extract_zero_set, hausdorff, BoundaryConsistency, FreeBoundaryCurve,
    CONSISTENCY_OFFSET,
};
pub use flatness::{
    band_width, blowup_flatness, epsilon_monotonicity, flatness_measure, ConeSpec, EpsilonMonotonicity, Window,
};
pub use regular::{ball_sup, classify_regular, default_floor, detect_regular_points, tangent_ball, FLOOR_CELLS, RegularityRecord};
pub use slopes::{check_alpha_beta, fit_two_plane, RadiusFit, SlopeFit, NO_ASYMPTOTE_RESIDUAL};
