//! ECG template extraction: cut a quasi-periodic signal into equal-length
//! beats around their maxima, fit the deformation model with each beat as
//! the reference, keep the reference with the smallest total residual
//! variance and rebuild each beat from the common shape.
//!
//! Every beat is centered by its own mean before fitting; the means are kept
//! in [`EcgFit::offsets`]. Beat samples are fed to the recursive estimator as
//! design points `x_k = -1/2 + (k + 1/2) / n` in a seeded random order.

use std::f64::consts::PI;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{Gain, Innovation, RmConfig, SignMode};
use crate::model::{Dataset, DesignDensity};
use crate::pipeline::{F1Mode, PipelineConfig, RecursiveEstimator};
use crate::rng;
use crate::shape::{uniform_grid, GridFunction, KernelSpec, NWConfig, WeightRule, DEFAULT_ALPHA};

/// Detection threshold as a fraction of the global maximum.
pub const DEFAULT_THRESHOLD_FRACTION: f64 = 0.6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Signal {
    pub samples: Vec<f64>,
    /// Samples per second; informational only.
    pub rate: f64,
}

impl Signal {
    pub fn new(samples: Vec<f64>, rate: f64) -> Self {
        Self { samples, rate }
    }
}

/// `p` beats of `n` samples each, on the common abscissae `x`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentedBeats {
    pub beats: Vec<Vec<f64>>,
    pub x: Vec<f64>,
    /// Sample index of each beat's center in the source signal.
    pub centers: Vec<usize>,
}

impl SegmentedBeats {
    /// Wraps equal-length beats, building the abscissae.
    pub fn from_beats(beats: Vec<Vec<f64>>) -> Result<Self> {
        let n = beats.first().map(Vec::len).ok_or(Error::NoBeatsDetected)?;
        if n == 0 {
            return Err(Error::SignalTooShort("empty beat".into()));
        }
        if beats.iter().any(|b| b.len() != n) {
            return Err(Error::DimensionMismatch("beats must share one length".into()));
        }
        let centers = vec![0; beats.len()];
        Ok(Self { x: beat_grid(n), beats, centers })
    }

    pub fn p(&self) -> usize {
        self.beats.len()
    }

    pub fn n(&self) -> usize {
        self.x.len()
    }
}

/// `x_k = -1/2 + (k + 1/2) / n`; the middle sample of an odd window sits at 0.
pub fn beat_grid(n: usize) -> Vec<f64> {
    (0..n).map(|k| -0.5 + (k as f64 + 0.5) / n as f64).collect()
}

/// Indices of local maxima above `threshold`, at least `min_separation`
/// samples apart; within a refractory window the larger peak wins.
pub fn detect_peaks(samples: &[f64], min_separation: usize, threshold: f64) -> Vec<usize> {
    let mut peaks: Vec<usize> = Vec::new();
    for i in 0..samples.len() {
        let s = samples[i];
        if !(s > threshold) {
            continue;
        }
        let left_ok = i == 0 || samples[i - 1] <= s;
        let right_ok = i + 1 == samples.len() || samples[i + 1] < s;
        if !(left_ok && right_ok) {
            continue;
        }
        match peaks.last() {
            Some(&last) if i - last < min_separation => {
                if s > samples[last] {
                    *peaks.last_mut().unwrap() = i;
                }
            }
            _ => peaks.push(i),
        }
    }
    peaks
}

/// Detects beats and cuts windows of common odd length centered on each
/// maximum. `threshold` defaults to 0.6 of the global maximum.
pub fn segment(signal: &Signal, min_separation: usize, threshold: Option<f64>) -> Result<SegmentedBeats> {
    let s = &signal.samples;
    if s.len() < 3 {
        return Err(Error::SignalTooShort(format!("{} samples", s.len())));
    }
    let max = s.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let threshold = threshold.unwrap_or(DEFAULT_THRESHOLD_FRACTION * max);
    let peaks = detect_peaks(s, min_separation.max(1), threshold);
    match peaks.len() {
        0 => return Err(Error::NoBeatsDetected),
        1 => return Err(Error::SignalTooShort("only one beat detected".into())),
        _ => {}
    }
    let gap = peaks.windows(2).map(|w| w[1] - w[0]).min().unwrap();
    let n = if gap % 2 == 0 { gap - 1 } else { gap };
    segment_at(signal, &peaks, n)
}

/// Cuts windows of length `n` (odd) centered on the given sample indices,
/// dropping windows that leave the signal.
pub fn segment_at(signal: &Signal, centers: &[usize], n: usize) -> Result<SegmentedBeats> {
    if n == 0 || n % 2 == 0 {
        return Err(Error::InvalidParams(format!("window length must be odd, got {n}")));
    }
    let half = n / 2;
    let s = &signal.samples;
    let mut beats = Vec::new();
    let mut kept = Vec::new();
    for &c in centers {
        if c < half || c + half >= s.len() {
            continue;
        }
        beats.push(s[c - half..=c + half].to_vec());
        kept.push(c);
    }
    if beats.is_empty() {
        return Err(Error::SignalTooShort("no complete window".into()));
    }
    Ok(SegmentedBeats { x: beat_grid(n), beats, centers: kept })
}

#[derive(Debug, Clone)]
pub struct EcgFitConfig {
    pub alpha: f64,
    pub kernel: KernelSpec,
    pub grid_points: usize,
    /// Seed of the observation shuffle.
    pub seed: u64,
    /// Use the non-symmetric innovation and an unsymmetrized shape estimate.
    pub non_symmetric: bool,
    /// Shift step sizes.
    pub gain: Gain,
    /// Start each shift chain at the first-harmonic phase lag to the
    /// reference instead of zero.
    pub warm_start: bool,
}

impl Default for EcgFitConfig {
    fn default() -> Self {
        Self { alpha: DEFAULT_ALPHA, kernel: KernelSpec::uniform(), grid_points: 201, seed: 0, non_symmetric: true, gain: Gain::Harmonic, warm_start: true }
    }
}

/// Fitted deformation model in the original beat order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EcgFit {
    pub reference: usize,
    pub v_hat: Vec<f64>,
    pub theta_hat: Vec<f64>,
    pub a_hat: Vec<f64>,
    /// First Fourier coefficients of the reference beat.
    pub f1: f64,
    pub g1: f64,
    pub shape: GridFunction,
    /// Mean of each beat, removed before fitting.
    pub offsets: Vec<f64>,
    pub truncations: Vec<u64>,
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Fits the model with beat `reference` (0-based) pinned to `a = 1, theta = 0`.
pub fn fit_with_reference(beats: &SegmentedBeats, reference: usize, config: &EcgFitConfig) -> Result<EcgFit> {
    let p = beats.p();
    if reference >= p {
        return Err(Error::IndexOutOfRange { index: reference, len: p });
    }
    let n = beats.n();
    let order: Vec<usize> = std::iter::once(reference).chain((0..p).filter(|&j| j != reference)).collect();
    let offsets: Vec<f64> = beats.beats.iter().map(|b| mean(b)).collect();

    let ref_beat = &beats.beats[reference];
    let off = offsets[reference];
    let f1 = beats.x.iter().zip(ref_beat).map(|(x, y)| (2.0 * PI * x).cos() * (y - off)).sum::<f64>() / n as f64;
    let g1 = beats.x.iter().zip(ref_beat).map(|(x, y)| (2.0 * PI * x).sin() * (y - off)).sum::<f64>() / n as f64;
    if f1 == 0.0 {
        return Err(Error::ZeroFirstFourier);
    }

    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut rng::stream(config.seed, 0, rng::DESIGN_COMPONENT));
    let rows: Vec<Vec<f64>> =
        idx.iter().map(|&k| order.iter().map(|&j| beats.beats[j][k] - offsets[j]).collect()).collect();
    let data = Dataset::new(idx.iter().map(|&k| beats.x[k]).collect(), rows)?;

    // warm start: shift and scale sign from the first-harmonic phase lag
    let (theta0, sign_mode) = if config.warm_start {
        let harmonic = |j: usize| {
            let (mut c, mut s) = (0.0, 0.0);
            for (x, y) in beats.x.iter().zip(&beats.beats[j]) {
                let (sn, cs) = (2.0 * PI * x).sin_cos();
                c += cs * (y - offsets[j]);
                s += sn * (y - offsets[j]);
            }
            (c, s)
        };
        let r = harmonic(reference);
        let (theta0, signs): (Vec<f64>, Vec<f64>) =
            order.iter().map(|&j| if j == reference { (0.0, 1.0) } else { phase_lag(harmonic(j), r) }).unzip();
        (theta0, SignMode::Known(signs))
    } else {
        (vec![0.0; p], SignMode::DualRun)
    };

    let innovation = if config.non_symmetric { Innovation::NonSymmetric { f1, g1 } } else { Innovation::Symmetric };
    let nw = NWConfig {
        alpha: config.alpha,
        kernel: config.kernel.clone(),
        weights: WeightRule::Uniform,
        grid: uniform_grid(config.grid_points),
        symmetrize: !config.non_symmetric,
    };
    let pipeline = PipelineConfig {
        rm: RmConfig {
            theta0: Some(theta0),
            gain: config.gain.clone(),
            sign_mode,
            innovation,
            pinned: vec![0],
            ..RmConfig::default()
        },
        f1_mode: F1Mode::Known(f1),
        shape: Some(nw),
        record_trajectories: false,
    };
    let density = DesignDensity::Uniform;
    let mut est = RecursiveEstimator::new(p, pipeline)?;
    est.consume(&data, &density)?;

    let mut a_local = est.a_hat()?;
    a_local[0] = 1.0;
    let theta_local = est.theta_hat();
    let (nw_cfg, nw_state) = est.shape_state().expect("shape estimation enabled");
    let mut eval_cfg = nw_cfg.clone();
    if config.non_symmetric {
        eval_cfg.weights = WeightRule::Coverage { a: a_local.clone(), theta: theta_local.clone(), density };
    }
    let values = nw_state.evaluate_grid(&a_local, &eval_cfg)?;
    let shape = GridFunction::from_partial(nw_cfg.grid.clone(), &values)?;

    let v_local = est.v_hat();
    let trunc_local = est.rm().truncations();
    let mut v_hat = vec![0.0; p];
    let mut theta_hat = vec![0.0; p];
    let mut a_hat = vec![0.0; p];
    let mut truncations = vec![0; p];
    for (local, &j) in order.iter().enumerate() {
        v_hat[j] = v_local[local];
        theta_hat[j] = theta_local[local];
        a_hat[j] = a_local[local];
        truncations[j] = trunc_local[local];
    }
    Ok(EcgFit { reference, v_hat, theta_hat, a_hat, f1, g1, shape, offsets, truncations })
}

/// Shift of a beat relative to the reference and the sign of its scale,
/// read off the phase of the first harmonics `(c, s)`. Lags beyond a
/// quarter period are folded back with a sign flip.
fn phase_lag(beat: (f64, f64), reference: (f64, f64)) -> (f64, f64) {
    // beat / reference as complex numbers c + i s
    let re = beat.0 * reference.0 + beat.1 * reference.1;
    let im = beat.1 * reference.0 - beat.0 * reference.1;
    if re == 0.0 && im == 0.0 {
        return (0.0, 1.0);
    }
    let t = im.atan2(re) / (2.0 * PI);
    if t > 0.25 {
        ((t - 0.5).max(-0.25), -1.0)
    } else if t < -0.25 {
        ((t + 0.5).min(0.25), -1.0)
    } else {
        (t, 1.0)
    }
}

/// `a_j f(x - theta_j) + v_j` on the mean-centered scale of beat `curve`.
pub fn reconstruct(fit: &EcgFit, curve: usize, x: f64) -> f64 {
    fit.a_hat[curve] * fit.shape.eval(x - fit.theta_hat[curve]) + fit.v_hat[curve]
}

/// Per-beat mean squared residual of the centered beat against its
/// reconstruction.
pub fn residual_variance(beats: &SegmentedBeats, fit: &EcgFit) -> Vec<f64> {
    beats
        .beats
        .iter()
        .enumerate()
        .map(|(j, b)| {
            let off = fit.offsets.get(j).copied().unwrap_or(0.0);
            b.iter().zip(&beats.x).map(|(y, &x)| (y - off - reconstruct(fit, j, x)).powi(2)).sum::<f64>()
                / b.len() as f64
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceSelection {
    pub reference: usize,
    /// `l1` norm of the residual variances for each candidate reference.
    pub scores: Vec<f64>,
}

/// Fits once per candidate reference (in parallel) and returns the one with
/// the smallest total residual variance; ties go to the smallest index.
pub fn select_reference(beats: &SegmentedBeats, config: &EcgFitConfig) -> Result<ReferenceSelection> {
    let p = beats.p();
    if p == 0 {
        return Err(Error::NoBeatsDetected);
    }
    let scores = (0..p)
        .into_par_iter()
        .map(|r| fit_with_reference(beats, r, config).map(|fit| residual_variance(beats, &fit).iter().sum()))
        .collect::<Result<Vec<f64>>>()?;
    let mut best = 0;
    for (j, s) in scores.iter().enumerate() {
        if *s < scores[best] {
            best = j;
        }
    }
    Ok(ReferenceSelection { reference: best, scores })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pulse_train(beats: usize, period: usize) -> Signal {
        let samples = (0..beats * period)
            .map(|i| {
                let phase = (i % period) as f64 / period as f64 - 0.5;
                (-phase * phase / 0.002).exp()
            })
            .collect();
        Signal::new(samples, 360.0)
    }

    #[test]
    fn pulse_train_gives_identical_beats() {
        let seg = segment(&pulse_train(20, 100), 50, None).unwrap();
        assert!((18..=20).contains(&seg.p()));
        assert_eq!(seg.n(), 99);
        for b in &seg.beats {
            assert_eq!(b, &seg.beats[0]);
        }
    }

    #[test]
    fn flat_signal_has_no_beats() {
        let flat = Signal::new(vec![0.0; 1000], 360.0);
        assert_eq!(segment(&flat, 10, None), Err(Error::NoBeatsDetected));
    }

    #[test]
    fn refractory_window_keeps_larger_peak() {
        let s = [0.0, 1.0, 0.0, 2.0, 0.0, 0.0, 0.0, 0.0, 1.5, 0.0];
        assert_eq!(detect_peaks(&s, 4, 0.5), vec![3, 8]);
    }

    #[test]
    fn grid_centers_middle_sample() {
        let g = beat_grid(5);
        assert_eq!(g[2], 0.0);
        assert!((g[0] + 0.4).abs() < 1e-15);
    }

    #[test]
    fn single_beat_fit_is_trivial() {
        let x = beat_grid(301);
        let beat: Vec<f64> = x.iter().map(|x| (2.0 * PI * x).cos() + 0.3).collect();
        let beats = SegmentedBeats::from_beats(vec![beat]).unwrap();
        let fit = fit_with_reference(&beats, 0, &EcgFitConfig::default()).unwrap();
        assert_eq!(fit.a_hat, vec![1.0]);
        assert_eq!(fit.theta_hat, vec![0.0]);
        assert!(fit.v_hat[0].abs() < 1e-12);
        assert!((fit.offsets[0] - 0.3).abs() < 1e-12);
    }

    #[test]
    fn phase_lag_recovers_shift() {
        let x = beat_grid(400);
        let h = |th: f64| {
            let mut c = 0.0;
            let mut s = 0.0;
            for &x in &x {
                let y = (2.0 * PI * (x - th)).cos() + 0.4 * (2.0 * PI * (x - th)).sin();
                c += (2.0 * PI * x).cos() * y;
                s += (2.0 * PI * x).sin() * y;
            }
            (c, s)
        };
        let (t, s) = phase_lag(h(0.13), h(0.0));
        assert!((t - 0.13).abs() < 1e-9 && s == 1.0);
        let (t, s) = phase_lag(h(-0.2), h(0.0));
        assert!((t + 0.2).abs() < 1e-9 && s == 1.0);
        let (t, s) = phase_lag(h(0.4), h(0.0));
        assert!((t + 0.1).abs() < 1e-9 && s == -1.0);
    }

    #[test]
    fn zero_fit_residuals_vanish() {
        let beats = SegmentedBeats::from_beats(vec![vec![0.0; 5]; 2]).unwrap();
        let fit = EcgFit {
            reference: 0,
            v_hat: vec![0.0; 2],
            theta_hat: vec![0.0; 2],
            a_hat: vec![1.0; 2],
            f1: 1.0,
            g1: 0.0,
            shape: GridFunction { grid: uniform_grid(11), values: vec![0.0; 11] },
            offsets: vec![0.0; 2],
            truncations: vec![0; 2],
        };
        assert_eq!(residual_variance(&beats, &fit), vec![0.0, 0.0]);
        assert_eq!(reconstruct(&fit, 1, 0.2), 0.0);
    }
}
