//! Deterministic calculus on time grids: total variation, Stieltjes sums,
//! delayed windows, step approximations and the Helly–Bray distance.

mod approx;
mod function;
mod grid;
mod helly_bray;
mod segment;
mod stieltjes;

pub use approx::{modulus_of_continuity, step_approximation, step_approximation_error};
pub use function::{bv_norm, total_variation, variation_slice, BvFunction, GridFunction, Interpolation};
pub use grid::{same_grid, suggest_n_steps, DelaySpan, GridSummary, TimeGrid, NODE_TOLERANCE};
pub use helly_bray::{helly_bray_distance, helly_bray_distance_with};
pub use segment::{delayed_segment, DelayedSegment, LagMeasure, Segment, SegmentKind, MAX_SEGMENT_DIM};
pub use stieltjes::{cumulative_scalar, stieltjes_cumulative, stieltjes_integral, stieltjes_integral_with, EvalPoint};
