//! Streaming parametric estimators.
//!
//! Each state consumes one observation `(x, y_row)` at a time and exposes
//! its current estimate in O(p). States are plain values: clone them to
//! branch a stream, send them across threads to run replications.

mod height;
mod robbins_monro;
mod scale;

pub use height::HeightState;
pub use robbins_monro::{
    efficient_gains, rm_dual_select, rm_innovation, rm_project, Chain, Gain, Innovation, RmConfig,
    RobbinsMonro, SignMode, SHIFT_BOUND,
};
pub use scale::{F1State, ScaleState, DEGENERATE_F1};
