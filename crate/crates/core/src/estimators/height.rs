use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::DesignDensity;

/// Running mean of `Y_i / g(X_i)`, the natural estimator of the heights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeightState {
    n: usize,
    sum: Vec<f64>,
    trajectory: Option<Vec<Vec<f64>>>,
}

impl HeightState {
    pub fn new(p: usize) -> Self {
        Self { n: 0, sum: vec![0.0; p], trajectory: None }
    }

    /// Records every intermediate estimate.
    pub fn with_trajectory(mut self) -> Self {
        self.trajectory = Some(Vec::new());
        self
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn update(&mut self, x: f64, y_row: &[f64], density: &DesignDensity) -> Result<()> {
        if y_row.len() != self.sum.len() {
            return Err(Error::DimensionMismatch(format!(
                "row has {} values, expected {}",
                y_row.len(),
                self.sum.len()
            )));
        }
        let g = density.eval_positive(x)?;
        for (s, y) in self.sum.iter_mut().zip(y_row) {
            *s += y / g;
        }
        self.n += 1;
        if self.trajectory.is_some() {
            let est = self.estimate();
            self.trajectory.as_mut().unwrap().push(est);
        }
        Ok(())
    }

    /// Current estimate; zeros before the first observation.
    pub fn estimate(&self) -> Vec<f64> {
        if self.n == 0 {
            return vec![0.0; self.sum.len()];
        }
        self.sum.iter().map(|s| s / self.n as f64).collect()
    }

    pub fn trajectory(&self) -> Option<&[Vec<f64>]> {
        self.trajectory.as_deref()
    }
}
