//! The full recursive estimator: heights, shifts, scales, `f1` and the
//! shape, advanced together one observation at a time.
//!
//! Per observation the order is: capture `theta_{i-1}` and `v_{i-1}`, update
//! the scale sums and the shape accumulators with those lagged values, then
//! step the shifts, the heights and `f1`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{F1State, HeightState, RmConfig, RobbinsMonro, ScaleState};
use crate::model::{Dataset, DesignDensity};
use crate::shape::{GridFunction, NWConfig, NWState};

/// Source of the first Fourier coefficient used by the scale estimator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", content = "value", rename_all = "snake_case")]
pub enum F1Mode {
    Known(f64),
    /// Running estimate from the first curve (`a_tilde`).
    Estimated,
}

#[derive(Debug, Clone)]
pub struct PipelineConfig {
    pub rm: RmConfig,
    pub f1_mode: F1Mode,
    /// Shape estimation; `None` skips it.
    pub shape: Option<NWConfig>,
    /// Record `v_hat` and `theta_hat` after every observation.
    pub record_trajectories: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self { rm: RmConfig::default(), f1_mode: F1Mode::Estimated, shape: None, record_trajectories: false }
    }
}

/// Per-step estimates, indexed by observation count minus one.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Trajectories {
    pub v: Vec<Vec<f64>>,
    pub theta: Vec<Vec<f64>>,
}

/// Serializable summary of the current estimates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub n: usize,
    pub v_hat: Vec<f64>,
    pub theta_hat: Vec<f64>,
    /// `None` when the scale estimate is unavailable (no data, degenerate `f1`).
    pub a_hat: Option<Vec<f64>>,
    pub f1_hat: Option<f64>,
    pub truncations: Vec<u64>,
}

#[derive(Debug, Clone)]
pub struct RecursiveEstimator {
    p: usize,
    f1_mode: F1Mode,
    height: HeightState,
    rm: RobbinsMonro,
    scale: ScaleState,
    f1: F1State,
    shape: Option<(NWConfig, NWState)>,
    trajectories: Option<Trajectories>,
}

impl RecursiveEstimator {
    pub fn new(p: usize, config: PipelineConfig) -> Result<Self> {
        if p == 0 {
            return Err(Error::InvalidParams("need at least one curve".into()));
        }
        if let F1Mode::Known(f1) = config.f1_mode {
            if f1 == 0.0 || !f1.is_finite() {
                return Err(Error::ZeroFirstFourier);
            }
        }
        let shape = match config.shape {
            Some(cfg) => {
                let state = NWState::new(p, &cfg)?;
                Some((cfg, state))
            }
            None => None,
        };
        Ok(Self {
            p,
            f1_mode: config.f1_mode,
            height: HeightState::new(p),
            rm: RobbinsMonro::new(p, config.rm)?,
            scale: ScaleState::new(p),
            f1: F1State::new(),
            shape,
            trajectories: config.record_trajectories.then(Trajectories::default),
        })
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn n(&self) -> usize {
        self.height.n()
    }

    pub fn update(&mut self, x: f64, y_row: &[f64], density: &DesignDensity) -> Result<()> {
        if y_row.len() != self.p {
            return Err(Error::DimensionMismatch(format!("row has {} values, expected {}", y_row.len(), self.p)));
        }
        let i = self.n() + 1;
        let theta_prev = self.rm.theta_hat();
        let v_prev = self.height.estimate();
        self.scale.update(x, y_row, &theta_prev, density)?;
        if let Some((cfg, state)) = &mut self.shape {
            state.update(i, x, y_row, &theta_prev, &v_prev, cfg)?;
        }
        self.rm.step(x, y_row, density)?;
        self.height.update(x, y_row, density)?;
        self.f1.update(x, y_row, density)?;
        if let Some(t) = &mut self.trajectories {
            t.v.push(self.height.estimate());
            t.theta.push(self.rm.theta_hat());
        }
        Ok(())
    }

    /// Feeds every row of `data` in order.
    pub fn consume(&mut self, data: &Dataset, density: &DesignDensity) -> Result<()> {
        for (x, row) in data.rows() {
            self.update(x, row, density)?;
        }
        Ok(())
    }

    pub fn v_hat(&self) -> Vec<f64> {
        self.height.estimate()
    }

    pub fn theta_hat(&self) -> Vec<f64> {
        self.rm.theta_hat()
    }

    pub fn f1_hat(&self) -> Option<f64> {
        self.f1.estimate()
    }

    /// `f1` fed to the scale estimator: the known value or the running estimate.
    pub fn f1_used(&self) -> Option<f64> {
        match self.f1_mode {
            F1Mode::Known(f1) => Some(f1),
            F1Mode::Estimated => self.f1.estimate(),
        }
    }

    /// `a_hat` (known `f1`) or `a_tilde` (estimated `f1`).
    pub fn a_hat(&self) -> Result<Vec<f64>> {
        match self.f1_mode {
            F1Mode::Known(f1) => self.scale.a_hat(f1),
            F1Mode::Estimated => self.scale.a_tilde(&self.f1),
        }
    }

    /// Orientation of each shift chain, for plug-in covariances.
    pub fn signs(&self) -> Vec<f64> {
        self.rm.signs()
    }

    pub fn rm(&self) -> &RobbinsMonro {
        &self.rm
    }

    pub fn scale(&self) -> &ScaleState {
        &self.scale
    }

    pub fn shape_state(&self) -> Option<(&NWConfig, &NWState)> {
        self.shape.as_ref().map(|(c, s)| (c, s))
    }

    /// Shape estimate on the grid using `a_hat`; `None` entries have no kernel mass.
    pub fn shape_estimate(&self) -> Result<Vec<Option<f64>>> {
        let (cfg, state) = self.shape.as_ref().ok_or_else(|| Error::InvalidParams("shape estimation disabled".into()))?;
        state.evaluate_grid(&self.a_hat()?, cfg)
    }

    /// Shape estimate as a periodic interpolant; empty grid cells are filled
    /// from their neighbours.
    pub fn shape_function(&self) -> Result<GridFunction> {
        let (cfg, _) = self.shape_state().ok_or_else(|| Error::InvalidParams("shape estimation disabled".into()))?;
        GridFunction::from_partial(cfg.grid.clone(), &self.shape_estimate()?)
    }

    /// Per-curve mean squared residual `(1/n) sum (Y - a f(X - theta) - v)^2`
    /// at the current estimates.
    pub fn residual_variance(&self, data: &Dataset) -> Result<Vec<f64>> {
        if data.n() == 0 {
            return Err(Error::InsufficientData { needed: 1, got: 0 });
        }
        let f = self.shape_function()?;
        let (v, theta, a) = (self.v_hat(), self.theta_hat(), self.a_hat()?);
        let mut ss = vec![0.0; data.p()];
        for (x, y) in data.rows() {
            for (j, s) in ss.iter_mut().enumerate() {
                *s += (y[j] - v[j] - a[j] * f.eval(x - theta[j])).powi(2);
            }
        }
        Ok(ss.into_iter().map(|s| s / data.n() as f64).collect())
    }

    pub fn trajectories(&self) -> Option<&Trajectories> {
        self.trajectories.as_ref()
    }

    pub fn snapshot(&self) -> Snapshot {
        Snapshot {
            n: self.n(),
            v_hat: self.v_hat(),
            theta_hat: self.theta_hat(),
            a_hat: self.a_hat().ok(),
            f1_hat: self.f1_hat(),
            truncations: self.rm.truncations(),
        }
    }
}

/// Runs a fresh estimator over the whole dataset.
pub fn fit_dataset(data: &Dataset, density: &DesignDensity, config: PipelineConfig) -> Result<RecursiveEstimator> {
    if data.n() == 0 {
        return Err(Error::InsufficientData { needed: 1, got: 0 });
    }
    let mut est = RecursiveEstimator::new(data.p(), config)?;
    est.consume(data, density)?;
    Ok(est)
}
