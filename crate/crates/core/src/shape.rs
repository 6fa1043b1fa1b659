//! Weighted, symmetrized, recursive Nadaraya–Watson estimation of the
//! common shape on a fixed grid.
//!
//! For every grid point `x` and curve `j` the state accumulates
//! `num[x][j] = sum_i (W_ij(x) + W_ij(-x)) (Y_ij - v_{i-1,j})` and
//! `den[x][j] = sum_i (W_ij(x) + W_ij(-x))` with
//! `W_ij(x) = K((X_i - theta_{i-1,j} - x) / h_i) / h_i` and `h_i = i^-alpha`.
//! The estimate is `f(x) = sum_j w_j(x) num[x][j] / (a_j den[x][j])`.
//!
//! Kernel windows are not wrapped around `±1/2`.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{wrap_unit, DesignDensity};
use crate::quadrature;

/// Number of grid points used when none is given.
pub const DEFAULT_GRID_POINTS: usize = 101;
/// Bandwidth exponent used when none is given.
pub const DEFAULT_ALPHA: f64 = 0.9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum KernelKind {
    /// `1/2` on `[-1, 1]`.
    Uniform,
    /// `3/4 (1 - u^2)` on `[-1, 1]`.
    Epanechnikov,
    /// Values on a uniform grid over `[-1, 1]`, linearly interpolated.
    Table { values: Vec<f64> },
}

/// Nonnegative symmetric kernel with support `[-1, 1]` and unit mass.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelSpec {
    kind: KernelKind,
    nu2: f64,
}

impl KernelSpec {
    pub fn new(kind: KernelKind) -> Result<Self> {
        if let KernelKind::Table { values } = &kind {
            if values.len() < 3 {
                return Err(Error::InvalidKernel("table needs at least 3 values".into()));
            }
            if values.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
                return Err(Error::InvalidKernel("kernel must be nonnegative".into()));
            }
            let n = values.len();
            if (0..n).any(|k| (values[k] - values[n - 1 - k]).abs() > 1e-12) {
                return Err(Error::InvalidKernel("kernel must be symmetric".into()));
            }
        }
        let mut spec = Self { kind, nu2: 0.0 };
        let breaks = spec.breaks();
        let mass = quadrature::integrate_panels(&|u| spec.eval(u), &breaks, 1e-12)?;
        if (mass - 1.0).abs() > 1e-8 {
            return Err(Error::InvalidKernel(format!("kernel integrates to {mass}, not 1")));
        }
        spec.nu2 = quadrature::integrate_panels(&|u| spec.eval(u).powi(2), &breaks, 1e-12)?;
        Ok(spec)
    }

    pub fn uniform() -> Self {
        Self::new(KernelKind::Uniform).expect("uniform kernel is valid")
    }

    pub fn epanechnikov() -> Self {
        Self::new(KernelKind::Epanechnikov).expect("Epanechnikov kernel is valid")
    }

    pub fn kind(&self) -> &KernelKind {
        &self.kind
    }

    /// `int K^2`.
    pub fn nu2(&self) -> f64 {
        self.nu2
    }

    /// Support half-width.
    pub fn radius(&self) -> f64 {
        1.0
    }

    #[inline]
    pub fn eval(&self, u: f64) -> f64 {
        if !(u.abs() <= 1.0) {
            return 0.0;
        }
        match &self.kind {
            KernelKind::Uniform => 0.5,
            KernelKind::Epanechnikov => 0.75 * (1.0 - u * u),
            KernelKind::Table { values } => {
                let m = (values.len() - 1) as f64;
                let t = (u + 1.0) * 0.5 * m;
                let k = (t.floor() as usize).min(values.len() - 2);
                let frac = t - k as f64;
                values[k] * (1.0 - frac) + values[k + 1] * frac
            }
        }
    }

    fn breaks(&self) -> Vec<f64> {
        match &self.kind {
            KernelKind::Table { values } => {
                let m = values.len() - 1;
                (0..=m).map(|k| -1.0 + 2.0 * k as f64 / m as f64).collect()
            }
            _ => vec![-1.0, 0.0, 1.0],
        }
    }
}

impl Default for KernelSpec {
    fn default() -> Self {
        Self::uniform()
    }
}

pub fn kernel_eval(spec: &KernelSpec, u: f64) -> f64 {
    spec.eval(u)
}

type WeightFn = Arc<dyn Fn(f64) -> Vec<f64> + Send + Sync>;

/// How the per-curve estimates are combined at each `x`.
#[derive(Clone)]
pub enum WeightRule {
    /// `w_j = 1/p`.
    Uniform,
    /// Variance-minimizing weights, see [`weights_optimal`].
    Optimal { a: Vec<f64>, theta: Vec<f64>, sigma: Vec<f64>, density: DesignDensity },
    /// User weights; must be even in `x`, nonnegative and sum to one.
    Custom(WeightFn),
    /// For the unsymmetrized estimator: `w_j ∝ a_j^2 g(theta_j + x)`, zero
    /// where curve `j` has no design coverage. Not even in `x`.
    Coverage { a: Vec<f64>, theta: Vec<f64>, density: DesignDensity },
}

impl fmt::Debug for WeightRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            WeightRule::Uniform => write!(f, "Uniform"),
            WeightRule::Optimal { a, theta, sigma, .. } => f
                .debug_struct("Optimal")
                .field("a", a)
                .field("theta", theta)
                .field("sigma", sigma)
                .finish(),
            WeightRule::Custom(_) => write!(f, "Custom"),
            WeightRule::Coverage { a, theta, .. } => {
                f.debug_struct("Coverage").field("a", a).field("theta", theta).finish()
            }
        }
    }
}

impl WeightRule {
    pub fn weights(&self, x: f64, p: usize) -> Result<Vec<f64>> {
        match self {
            WeightRule::Uniform => Ok(vec![1.0 / p as f64; p]),
            WeightRule::Optimal { a, theta, sigma, density } => weights_optimal(x, a, theta, sigma, density),
            WeightRule::Custom(f) => {
                let w = f(x);
                check_weights(x, &w, &f(-x), p)?;
                Ok(w)
            }
            WeightRule::Coverage { a, theta, density } => {
                if a.len() != p || theta.len() != p {
                    return Err(Error::DimensionMismatch("coverage weight inputs".into()));
                }
                let m: Vec<f64> = (0..p).map(|j| a[j] * a[j] * density.eval(theta[j] + x)).collect();
                let total: f64 = m.iter().sum();
                if !(total > 0.0) {
                    return Err(Error::DegenerateWeights { x });
                }
                Ok(m.into_iter().map(|v| v / total).collect())
            }
        }
    }
}

fn check_weights(x: f64, w: &[f64], mirror: &[f64], p: usize) -> Result<()> {
    let bad = |reason: &str| Err(Error::InvalidWeights { x, reason: reason.into() });
    if w.len() != p {
        return bad("wrong number of weights");
    }
    if w.iter().any(|v| !(*v >= 0.0)) {
        return bad("negative weight");
    }
    if (w.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
        return bad("weights do not sum to one");
    }
    if w != mirror {
        return bad("weights are not even in x");
    }
    Ok(())
}

/// `w_j(x) = m_j(x) / sum_k m_k(x)` with `m_j = a_j^2 (g(theta_j + x) + g(theta_j - x)) / sigma_j^2`.
pub fn weights_optimal(x: f64, a: &[f64], theta: &[f64], sigma: &[f64], density: &DesignDensity) -> Result<Vec<f64>> {
    let p = a.len();
    if theta.len() != p || sigma.len() != p {
        return Err(Error::DimensionMismatch("weights_optimal inputs".into()));
    }
    if sigma.iter().any(|s| !(*s > 0.0)) {
        return Err(Error::ZeroArgument("sigma"));
    }
    let m: Vec<f64> = (0..p)
        .map(|j| a[j] * a[j] * (density.eval(theta[j] + x) + density.eval(theta[j] - x)) / (sigma[j] * sigma[j]))
        .collect();
    let total: f64 = m.iter().sum();
    if !(total > 0.0) {
        return Err(Error::DegenerateWeights { x });
    }
    Ok(m.into_iter().map(|v| v / total).collect())
}

/// `n` points spaced uniformly on `[-1/2, 1/2]`, exactly symmetric about zero.
pub fn uniform_grid(n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![0.0];
    }
    let half = (n - 1) as f64 / 2.0;
    (0..n).map(|k| (k as f64 - half) / (2.0 * half)).collect()
}

#[derive(Debug, Clone)]
pub struct NWConfig {
    /// Bandwidth exponent, `h_n = n^-alpha`.
    pub alpha: f64,
    pub kernel: KernelSpec,
    pub weights: WeightRule,
    /// Sorted evaluation abscissae in `[-1/2, 1/2]`.
    pub grid: Vec<f64>,
    /// Add the mirrored window `W(-x)`; turn off for non-symmetric shapes.
    pub symmetrize: bool,
}

impl Default for NWConfig {
    fn default() -> Self {
        Self {
            alpha: DEFAULT_ALPHA,
            kernel: KernelSpec::uniform(),
            weights: WeightRule::Uniform,
            grid: uniform_grid(DEFAULT_GRID_POINTS),
            symmetrize: true,
        }
    }
}

impl NWConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::InvalidParams(format!("alpha must lie in (0, 1), got {}", self.alpha)));
        }
        if self.alpha <= 1.0 / 3.0 {
            log::warn!("alpha = {} <= 1/3: pointwise normal approximation does not apply", self.alpha);
        }
        if self.grid.is_empty() {
            return Err(Error::InvalidParams("empty evaluation grid".into()));
        }
        if self.grid.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::InvalidParams("grid must be strictly increasing".into()));
        }
        if self.grid.iter().any(|x| !(-0.5..=0.5).contains(x)) {
            return Err(Error::InvalidParams("grid must lie in [-1/2, 1/2]".into()));
        }
        Ok(())
    }
}

/// Accumulators of the recursive estimator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NWState {
    n: usize,
    p: usize,
    grid: Vec<f64>,
    num: Vec<f64>,
    den: Vec<f64>,
}

impl NWState {
    pub fn new(p: usize, config: &NWConfig) -> Result<Self> {
        config.validate()?;
        let m = config.grid.len();
        Ok(Self { n: 0, p, grid: config.grid.clone(), num: vec![0.0; m * p], den: vec![0.0; m * p] })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn num(&self, k: usize, j: usize) -> f64 {
        self.num[k * self.p + j]
    }

    pub fn den(&self, k: usize, j: usize) -> f64 {
        self.den[k * self.p + j]
    }

    /// Adds observation `i` (1-based, strictly sequential). `theta_prev` and
    /// `v_prev` are the estimates from step `i - 1`.
    pub fn update(
        &mut self,
        i: usize,
        x_obs: f64,
        y_row: &[f64],
        theta_prev: &[f64],
        v_prev: &[f64],
        config: &NWConfig,
    ) -> Result<()> {
        if i != self.n + 1 {
            return Err(Error::OutOfOrderUpdate { expected: self.n + 1, got: i });
        }
        if y_row.len() != self.p || theta_prev.len() != self.p || v_prev.len() != self.p {
            return Err(Error::DimensionMismatch(format!("expected {} curves", self.p)));
        }
        let h = (i as f64).powf(-config.alpha);
        let inv_h = 1.0 / h;
        let r = config.kernel.radius() * h * (1.0 + 1e-12) + 1e-15;
        for j in 0..self.p {
            let c = x_obs - theta_prev[j];
            let resid = y_row[j] - v_prev[j];
            let direct = self.index_range(c - r, c + r);
            let ranges = if config.symmetrize {
                merge(direct, self.index_range(-c - r, -c + r))
            } else {
                [Some(direct), None]
            };
            for range in ranges.into_iter().flatten() {
                for k in range {
                    let xg = self.grid[k];
                    let mut w = config.kernel.eval((c - xg) * inv_h) * inv_h;
                    if config.symmetrize {
                        w += config.kernel.eval((c + xg) * inv_h) * inv_h;
                    }
                    if w != 0.0 {
                        self.den[k * self.p + j] += w;
                        self.num[k * self.p + j] += w * resid;
                    }
                }
            }
        }
        self.n = i;
        Ok(())
    }

    fn index_range(&self, lo: f64, hi: f64) -> std::ops::Range<usize> {
        let start = self.grid.partition_point(|g| *g < lo);
        let end = self.grid.partition_point(|g| *g <= hi);
        start..end.max(start)
    }

    /// Estimate at grid index `k`.
    pub fn evaluate(&self, a_hat: &[f64], config: &NWConfig, k: usize) -> Result<f64> {
        if a_hat.len() != self.p {
            return Err(Error::DimensionMismatch("scale estimate length".into()));
        }
        let x = *self.grid.get(k).ok_or(Error::IndexOutOfRange { index: k, len: self.grid.len() })?;
        if let Some(curve) = a_hat.iter().position(|a| *a == 0.0) {
            return Err(Error::ZeroScaleEstimate { curve });
        }
        let w = config.weights.weights(x, self.p)?;
        let mut acc = 0.0;
        let mut mass = 0.0;
        for j in 0..self.p {
            let den = self.den[k * self.p + j];
            if den > 0.0 {
                acc += w[j] * self.num[k * self.p + j] / (den * a_hat[j]);
                mass += w[j];
            }
        }
        if mass > 0.0 {
            Ok(acc / mass)
        } else {
            Err(Error::Unavailable { x })
        }
    }

    /// Estimates on the whole grid; `None` where no kernel mass arrived yet.
    pub fn evaluate_grid(&self, a_hat: &[f64], config: &NWConfig) -> Result<Vec<Option<f64>>> {
        (0..self.grid.len())
            .map(|k| match self.evaluate(a_hat, config, k) {
                Ok(v) => Ok(Some(v)),
                Err(Error::Unavailable { .. }) => Ok(None),
                Err(e) => Err(e),
            })
            .collect()
    }

    /// Single-curve estimate `num / (a den)` at grid index `k`.
    pub fn evaluate_curve(&self, a_hat_j: f64, j: usize, k: usize) -> Option<f64> {
        let den = self.den[k * self.p + j];
        (den > 0.0 && a_hat_j != 0.0).then(|| self.num[k * self.p + j] / (den * a_hat_j))
    }
}

/// Free-function form of [`NWState::evaluate`].
pub fn nw_evaluate(state: &NWState, a_hat: &[f64], config: &NWConfig, k: usize) -> Result<f64> {
    state.evaluate(a_hat, config, k)
}

fn merge(a: std::ops::Range<usize>, b: std::ops::Range<usize>) -> [Option<std::ops::Range<usize>>; 2] {
    let (a, b) = if a.start <= b.start { (a, b) } else { (b, a) };
    if a.is_empty() {
        return [Some(b), None];
    }
    if b.is_empty() {
        return [Some(a), None];
    }
    if b.start <= a.end {
        [Some(a.start..a.end.max(b.end)), None]
    } else {
        [Some(a), Some(b)]
    }
}

/// A function known on a sorted grid, evaluated by linear interpolation with
/// periodic wrap-around on `[-1/2, 1/2)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridFunction {
    pub grid: Vec<f64>,
    pub values: Vec<f64>,
}

impl GridFunction {
    /// Fills missing values by periodic linear interpolation between the
    /// nearest available neighbours.
    pub fn from_partial(grid: Vec<f64>, values: &[Option<f64>]) -> Result<Self> {
        let m = grid.len();
        let known: Vec<usize> = (0..m).filter(|&k| values[k].is_some()).collect();
        if known.is_empty() {
            return Err(Error::Unavailable { x: f64::NAN });
        }
        let mut filled = vec![0.0; m];
        for k in 0..m {
            filled[k] = match values[k] {
                Some(v) => v,
                None => {
                    let next = known.iter().copied().find(|&q| q > k).unwrap_or(known[0]);
                    let prev = known.iter().rev().copied().find(|&q| q < k).unwrap_or(*known.last().unwrap());
                    let (x0, x1) = (grid[prev], grid[next]);
                    let span = wrap_dist(x0, x1);
                    if span == 0.0 {
                        values[prev].unwrap()
                    } else {
                        let t = wrap_dist(x0, grid[k]) / span;
                        values[prev].unwrap() * (1.0 - t) + values[next].unwrap() * t
                    }
                }
            };
        }
        Ok(Self { grid, values: filled })
    }

    pub fn eval(&self, x: f64) -> f64 {
        let g = &self.grid;
        let m = g.len();
        if m == 1 {
            return self.values[0];
        }
        let x = wrap_unit(x);
        let k = g.partition_point(|v| *v <= x);
        let (lo, hi) = if k == 0 || k == m { (m - 1, 0) } else { (k - 1, k) };
        let span = wrap_dist(g[lo], g[hi]);
        if span == 0.0 {
            return self.values[lo];
        }
        let t = wrap_dist(g[lo], x) / span;
        self.values[lo] * (1.0 - t) + self.values[hi] * t
    }
}

/// Forward distance from `a` to `b` on the unit circle, in `[0, 1)`.
fn wrap_dist(a: f64, b: f64) -> f64 {
    let d = b - a;
    if d >= 0.0 {
        d
    } else {
        d + 1.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_kernel_values() {
        let k = KernelSpec::uniform();
        assert_eq!(kernel_eval(&k, 0.5), 0.5);
        assert_eq!(kernel_eval(&k, 1.5), 0.0);
        assert!((k.nu2() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn epanechnikov_nu2() {
        assert!((KernelSpec::epanechnikov().nu2() - 0.6).abs() < 1e-10);
    }

    #[test]
    fn table_kernel_checks() {
        // triangular kernel 1 - |u|
        let tri = KernelSpec::new(KernelKind::Table { values: vec![0.0, 1.0, 0.0] }).unwrap();
        assert!((tri.nu2() - 2.0 / 3.0).abs() < 1e-10);
        assert!(KernelSpec::new(KernelKind::Table { values: vec![0.0, 2.0, 0.0] }).is_err());
        assert!(KernelSpec::new(KernelKind::Table { values: vec![0.0, 1.5, 0.5] }).is_err());
    }

    #[test]
    fn grid_is_symmetric() {
        let g = uniform_grid(101);
        assert_eq!(g[0], -0.5);
        assert_eq!(g[100], 0.5);
        assert_eq!(g[50], 0.0);
        for k in 0..101 {
            assert_eq!(g[k], -g[100 - k]);
        }
    }

    #[test]
    fn single_update_at_origin() {
        let cfg = NWConfig { grid: vec![0.0], ..NWConfig::default() };
        let mut s = NWState::new(2, &cfg).unwrap();
        s.update(1, 0.0, &[1.0, 2.0], &[0.0, 0.0], &[0.0, 0.0], &cfg).unwrap();
        assert_eq!(s.den(0, 0), 1.0);
        assert_eq!(s.num(0, 1), 2.0);
    }

    #[test]
    fn far_observation_leaves_state_unchanged() {
        let cfg = NWConfig { grid: vec![-0.5, 0.5], ..NWConfig::default() };
        let mut s = NWState::new(1, &cfg).unwrap();
        // h_10 = 10^-0.9 ~ 0.126, an observation at 0 misses both grid points
        s.n = 9;
        let before = s.clone();
        s.update(10, 0.0, &[1.0], &[0.0], &[0.0], &cfg).unwrap();
        assert_eq!(s.num, before.num);
        assert_eq!(s.den, before.den);
    }

    #[test]
    fn out_of_order_rejected() {
        let cfg = NWConfig::default();
        let mut s = NWState::new(1, &cfg).unwrap();
        assert_eq!(
            s.update(2, 0.0, &[1.0], &[0.0], &[0.0], &cfg),
            Err(Error::OutOfOrderUpdate { expected: 1, got: 2 })
        );
    }

    #[test]
    fn zero_numerators_give_zero() {
        let cfg = NWConfig::default();
        let mut s = NWState::new(1, &cfg).unwrap();
        s.update(1, 0.1, &[0.0], &[0.0], &[0.0], &cfg).unwrap();
        assert_eq!(s.evaluate(&[1.0], &cfg, 50).unwrap(), 0.0);
    }

    #[test]
    fn evaluation_errors() {
        let cfg = NWConfig { grid: vec![0.0], ..NWConfig::default() };
        let s = NWState::new(1, &cfg).unwrap();
        assert!(matches!(s.evaluate(&[1.0], &cfg, 0), Err(Error::Unavailable { .. })));
        assert_eq!(s.evaluate(&[0.0], &cfg, 0), Err(Error::ZeroScaleEstimate { curve: 0 }));
    }

    #[test]
    fn empty_curves_are_renormalized_away() {
        let cfg = NWConfig { grid: vec![0.0], ..NWConfig::default() };
        let mut s = NWState::new(2, &cfg).unwrap();
        s.den[0] = 2.0;
        s.num[0] = 3.0;
        // curve 1 has no mass; result is curve 0 alone
        assert_eq!(s.evaluate(&[1.0, 1.0], &cfg, 0).unwrap(), 1.5);
    }

    #[test]
    fn optimal_weights_examples() {
        let g = DesignDensity::Uniform;
        let w = weights_optimal(0.05, &[2.0; 3], &[0.0, 0.1, -0.1], &[1.0; 3], &g).unwrap();
        for v in &w {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
        let a = [1.0, -4.0, 3.0, -2.5, -2.0];
        let theta = [0.0, 0.2, -0.05, -1.0 / 7.0, 1.0 / 6.0];
        let w = weights_optimal(0.0, &a, &theta, &[1.0; 5], &g).unwrap();
        let m = [1.0, 16.0, 9.0, 6.25, 4.0];
        let total: f64 = m.iter().sum();
        for j in 0..5 {
            assert!((w[j] - m[j] / total).abs() < 1e-15);
        }
        assert_eq!(weights_optimal(0.0, &[1.0], &[0.0], &[0.0], &g), Err(Error::ZeroArgument("sigma")));
        assert!(matches!(
            weights_optimal(0.0, &[1.0], &[0.9], &[1.0], &g),
            Err(Error::DegenerateWeights { .. })
        ));
    }

    #[test]
    fn custom_weights_are_validated() {
        let odd = WeightRule::Custom(Arc::new(|x: f64| vec![0.5 + x, 0.5 - x]));
        assert!(odd.weights(0.1, 2).is_err());
        let even = WeightRule::Custom(Arc::new(|x: f64| vec![0.5 + x * x, 0.5 - x * x]));
        assert!(even.weights(0.1, 2).is_ok());
    }

    #[test]
    fn grid_function_interpolates_periodically() {
        let gf = GridFunction { grid: vec![-0.25, 0.25], values: vec![0.0, 1.0] };
        assert!((gf.eval(0.0) - 0.5).abs() < 1e-15);
        assert!((gf.eval(0.5) - 0.5).abs() < 1e-15);
        assert!((gf.eval(-0.5) - 0.5).abs() < 1e-15);
        let filled = GridFunction::from_partial(vec![-0.5, 0.0, 0.25], &[Some(1.0), None, Some(3.0)]).unwrap();
        assert!((filled.values[1] - (1.0 + 2.0 * (0.5 / 0.75))).abs() < 1e-12);
    }
}
