//! The five-curve benchmark configuration and a few helpers to run it.

use crate::error::Result;
use crate::estimators::{RmConfig, SignMode};
use crate::model::{simulate, Dataset, DesignDensity, ModelParams, ShapeSpec};
use crate::pipeline::{F1Mode, PipelineConfig};
use crate::shape::NWConfig;

/// Benchmark problem: `f(x) = sum_{k=1..5} cos(2 k pi x)`, uniform design,
/// unit noise on every curve.
#[derive(Debug, Clone)]
pub struct Benchmark {
    pub params: ModelParams,
    pub shape: ShapeSpec,
    pub density: DesignDensity,
    pub sigma: Vec<f64>,
}

impl Benchmark {
    pub fn new() -> Self {
        let params = ModelParams::new(
            vec![0.0, 1.0 / 3.0, -1.0, 2.0, -0.9],
            vec![0.0, 0.2, -0.05, -1.0 / 7.0, 1.0 / 6.0],
            vec![1.0, -4.0, 3.0, -2.5, -2.0],
        )
        .expect("benchmark parameters are consistent");
        Self {
            params,
            shape: ShapeSpec::fourier_cosine(vec![1.0; 5]).expect("benchmark shape is valid"),
            density: DesignDensity::Uniform,
            sigma: vec![1.0; 5],
        }
    }

    pub fn p(&self) -> usize {
        self.params.p()
    }

    pub fn f1(&self) -> f64 {
        self.shape.f1()
    }

    pub fn simulate(&self, n: usize, seed: u64) -> Result<Dataset> {
        simulate(&self.params, &self.shape, &self.density, &self.sigma, n, seed)
    }

    /// Known signs `sign(a_j f1)`.
    pub fn signs(&self) -> Vec<f64> {
        self.params.signs(self.f1())
    }

    /// Pipeline with known `f1`; `known_signs` picks the sign mode.
    pub fn pipeline(&self, known_signs: bool, shape: Option<NWConfig>) -> PipelineConfig {
        let sign_mode = if known_signs { SignMode::Known(self.signs()) } else { SignMode::DualRun };
        PipelineConfig {
            rm: RmConfig { sign_mode, ..RmConfig::default() },
            f1_mode: F1Mode::Known(self.f1()),
            shape,
            record_trajectories: false,
        }
    }
}

impl Default for Benchmark {
    fn default() -> Self {
        Self::new()
    }
}
