//! Recursive estimation in shape-invariant regression models.
//!
//! `p` curves share a 1-periodic zero-mean shape `f`:
//! `Y_ij = a_j f(X_i - theta_j) + v_j + eps_ij`. This crate streams
//! estimates of the heights `v`, shifts `theta`, scales `a` and the shape `f`,
//! provides plug-in asymptotic covariances and confidence intervals, and an
//! ECG template-extraction front end.

pub mod asymptotics;
pub mod ecg;
pub mod error;
pub mod estimators;
pub mod io;
pub mod model;
pub mod pipeline;
pub mod quadrature;
pub mod rng;
pub mod scenario;
pub mod shape;
pub mod stats;

pub use error::{Error, ErrorClass, Result};
pub use model::{simulate, validate_identifiability, Dataset, DesignDensity, ModelParams, ShapeSpec};
pub use pipeline::{fit_dataset, F1Mode, PipelineConfig, RecursiveEstimator, Snapshot};
