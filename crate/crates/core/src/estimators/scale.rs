use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::DesignDensity;

/// Below this magnitude the estimated first Fourier coefficient is treated
/// as zero and the scale estimate `a_tilde` is reported unavailable.
pub const DEGENERATE_F1: f64 = 1e-8;

/// Running mean of `cos(2 pi X_i) Y_{i,1} / g(X_i)`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct F1State {
    n: usize,
    sum: f64,
}

impl F1State {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn update(&mut self, x: f64, y_row: &[f64], density: &DesignDensity) -> Result<()> {
        let g = density.eval_positive(x)?;
        let y = *y_row.first().ok_or_else(|| Error::DimensionMismatch("empty row".into()))?;
        self.sum += (2.0 * PI * x).cos() * y / g;
        self.n += 1;
        Ok(())
    }

    pub fn estimate(&self) -> Option<f64> {
        (self.n > 0).then(|| self.sum / self.n as f64)
    }
}

/// Running sums `sum_i cos(2 pi (X_i - theta_{i-1,j})) Y_{i,j} / g(X_i)`.
///
/// The shift passed to [`ScaleState::update`] must be the estimate from the
/// previous step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaleState {
    n: usize,
    cos_sum: Vec<f64>,
}

impl ScaleState {
    pub fn new(p: usize) -> Self {
        Self { n: 0, cos_sum: vec![0.0; p] }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn update(&mut self, x: f64, y_row: &[f64], theta_prev: &[f64], density: &DesignDensity) -> Result<()> {
        let p = self.cos_sum.len();
        if y_row.len() != p || theta_prev.len() != p {
            return Err(Error::DimensionMismatch(format!("expected {p} curves")));
        }
        let g = density.eval_positive(x)?;
        for ((s, y), t) in self.cos_sum.iter_mut().zip(y_row).zip(theta_prev) {
            *s += (2.0 * PI * (x - t)).cos() * y / g;
        }
        self.n += 1;
        Ok(())
    }

    /// `a_hat = cos_sum / (n f1)` with a known first Fourier coefficient.
    pub fn a_hat(&self, f1: f64) -> Result<Vec<f64>> {
        if f1 == 0.0 {
            return Err(Error::ZeroArgument("f1"));
        }
        if self.n == 0 {
            return Err(Error::InsufficientData { needed: 1, got: 0 });
        }
        let d = self.n as f64 * f1;
        Ok(self.cos_sum.iter().map(|s| s / d).collect())
    }

    /// `a_tilde = cos_sum / (n f1_hat)` with the running estimate of `f1`.
    pub fn a_tilde(&self, f1: &F1State) -> Result<Vec<f64>> {
        let f1_hat = f1.estimate().ok_or(Error::InsufficientData { needed: 1, got: 0 })?;
        if f1_hat.abs() < DEGENERATE_F1 {
            return Err(Error::DegenerateF1 { value: f1_hat });
        }
        self.a_hat(f1_hat)
    }
}
