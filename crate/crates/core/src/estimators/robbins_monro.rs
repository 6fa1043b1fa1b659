//! Projected Robbins–Monro recursion for the shifts.
//!
//! For every curve `j` the recursion is
//! `theta[j] <- clamp(theta[j] + gamma_n * s_j * T_j, -1/4, 1/4)` where the
//! innovation `T_j = sin(2 pi (x - theta[j])) y_j / g(x)` has conditional
//! mean `a_j f1 sin(2 pi (theta_j - theta[j]))`. The sign `s_j` orients the
//! drift towards the true shift; when it is unknown two chains run side by
//! side, one with `s_j = +1` and one with `s_j = -1`, and the chain that
//! stays away from the boundary of `[-1/4, 1/4]` is selected.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::DesignDensity;

/// Half-width of the projection interval.
pub const SHIFT_BOUND: f64 = 0.25;

/// Projection onto `[-1/4, 1/4]`.
pub fn rm_project(x: f64) -> f64 {
    x.clamp(-SHIFT_BOUND, SHIFT_BOUND)
}

/// Step-size schedule. `gain(n)` is applied at the `n`-th observation (1-based).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Gain {
    /// `1 / n`.
    Harmonic,
    /// `c / n`.
    Scaled(f64),
    /// `c / (n + n0)`: same asymptotics as `c / n` with smaller early steps.
    Offset { c: f64, n0: f64 },
    /// `|gamma_j| / n`, see [`efficient_gains`]. Only the magnitude is used;
    /// the orientation always comes from the sign mode.
    PerCurve(Vec<f64>),
}

impl Gain {
    fn at(&self, n: usize, j: usize) -> f64 {
        let base = 1.0 / n as f64;
        match self {
            Gain::Harmonic => base,
            Gain::Scaled(c) => c * base,
            Gain::Offset { c, n0 } => c / (n as f64 + n0),
            Gain::PerCurve(g) => g[j].abs() * base,
        }
    }
}

/// `gamma_j = 1 / (2 pi a_j f1)`, the gains giving the asymptotically
/// efficient recursion.
pub fn efficient_gains(f1: f64, a: &[f64]) -> Result<Vec<f64>> {
    if f1 == 0.0 {
        return Err(Error::ZeroArgument("f1"));
    }
    if a.iter().any(|&a| a == 0.0) {
        return Err(Error::ZeroArgument("a"));
    }
    Ok(a.iter().map(|a| 1.0 / (2.0 * PI * a * f1)).collect())
}

/// Which innovation drives the recursion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Innovation {
    /// `sin(2 pi (x - t_j)) y_j / g(x)`; requires a symmetric shape.
    Symmetric,
    /// `[f1 sin(2 pi (x - t_j)) - g1 cos(2 pi (x - t_j))] y_j / g(x)`.
    NonSymmetric { f1: f64, g1: f64 },
}

impl Innovation {
    /// Builds the innovation from a mode flag, failing when the
    /// non-symmetric mode lacks its coefficients.
    pub fn select(non_symmetric: bool, coeffs: Option<(f64, f64)>) -> Result<Self> {
        match (non_symmetric, coeffs) {
            (false, _) => Ok(Innovation::Symmetric),
            (true, Some((f1, g1))) => Ok(Innovation::NonSymmetric { f1, g1 }),
            (true, None) => Err(Error::MissingCoefficients),
        }
    }

    #[inline]
    fn factor(&self, x: f64, t: f64) -> f64 {
        let arg = 2.0 * PI * (x - t);
        match *self {
            Innovation::Symmetric => arg.sin(),
            Innovation::NonSymmetric { f1, g1 } => {
                let (s, c) = arg.sin_cos();
                f1 * s - g1 * c
            }
        }
    }
}

/// Innovation vector `T` at the frozen shift estimate `theta_hat`.
pub fn rm_innovation(
    x: f64,
    y_row: &[f64],
    theta_hat: &[f64],
    density: &DesignDensity,
    innovation: &Innovation,
) -> Result<Vec<f64>> {
    if y_row.len() != theta_hat.len() {
        return Err(Error::DimensionMismatch("row and shift lengths differ".into()));
    }
    let g = density.eval_positive(x)?;
    Ok(y_row.iter().zip(theta_hat).map(|(y, t)| innovation.factor(x, *t) * y / g).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum SignMode {
    /// `s_j`, typically `sign(a_j f1)` (or `sign(a_j)` in the non-symmetric case).
    Known(Vec<f64>),
    DualRun,
}

/// One trajectory of the projected recursion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Chain {
    pub theta: Vec<f64>,
    pub truncations: Vec<u64>,
}

impl Chain {
    fn new(theta0: Vec<f64>) -> Self {
        let p = theta0.len();
        Self { theta: theta0, truncations: vec![0; p] }
    }

    #[allow(clippy::too_many_arguments)]
    fn advance(
        &mut self,
        n: usize,
        x: f64,
        y_row: &[f64],
        inv_g: f64,
        signs: impl Fn(usize) -> f64,
        gain: &Gain,
        innovation: &Innovation,
        pinned: &[bool],
    ) {
        for j in 0..self.theta.len() {
            if pinned[j] {
                continue;
            }
            let t = innovation.factor(x, self.theta[j]) * y_row[j] * inv_g;
            let raw = self.theta[j] + gain.at(n, j) * signs(j) * t;
            if raw.abs() > SHIFT_BOUND {
                self.truncations[j] += 1;
            }
            self.theta[j] = rm_project(raw);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RmConfig {
    /// Starting point, inside `[-1/4, 1/4]^p`. Defaults to zero.
    pub theta0: Option<Vec<f64>>,
    pub gain: Gain,
    pub sign_mode: SignMode,
    pub innovation: Innovation,
    /// Components held fixed at their starting value (e.g. the reference curve).
    pub pinned: Vec<usize>,
}

impl Default for RmConfig {
    fn default() -> Self {
        Self {
            theta0: None,
            gain: Gain::Harmonic,
            sign_mode: SignMode::DualRun,
            innovation: Innovation::Symmetric,
            pinned: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
enum Chains {
    Known { signs: Vec<f64>, chain: Chain },
    Dual { plus: Chain, minus: Chain },
}

/// State of the projected Robbins–Monro recursion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobbinsMonro {
    n: usize,
    gain: Gain,
    innovation: Innovation,
    pinned: Vec<bool>,
    chains: Chains,
}

impl RobbinsMonro {
    pub fn new(p: usize, config: RmConfig) -> Result<Self> {
        let theta0 = config.theta0.unwrap_or_else(|| vec![0.0; p]);
        if theta0.len() != p {
            return Err(Error::DimensionMismatch(format!("theta0 has {} entries, expected {p}", theta0.len())));
        }
        if theta0.iter().any(|t| !(t.abs() <= SHIFT_BOUND)) {
            return Err(Error::InvalidParams("theta0 must lie in [-1/4, 1/4]".into()));
        }
        if let Gain::PerCurve(g) = &config.gain {
            if g.len() != p {
                return Err(Error::DimensionMismatch("per-curve gains".into()));
            }
        }
        let mut pinned = vec![false; p];
        for &j in &config.pinned {
            *pinned.get_mut(j).ok_or(Error::IndexOutOfRange { index: j, len: p })? = true;
        }
        let chains = match config.sign_mode {
            SignMode::Known(signs) => {
                if signs.len() != p {
                    return Err(Error::DimensionMismatch("sign vector".into()));
                }
                if signs.iter().any(|s| *s == 0.0 || !s.is_finite()) {
                    return Err(Error::ZeroArgument("sign"));
                }
                let signs = signs.iter().map(|s| s.signum()).collect();
                Chains::Known { signs, chain: Chain::new(theta0) }
            }
            SignMode::DualRun => Chains::Dual { plus: Chain::new(theta0.clone()), minus: Chain::new(theta0) },
        };
        Ok(Self { n: 0, gain: config.gain, innovation: config.innovation, pinned, chains })
    }

    /// Number of observations consumed.
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn p(&self) -> usize {
        self.pinned.len()
    }

    pub fn is_dual(&self) -> bool {
        matches!(self.chains, Chains::Dual { .. })
    }

    /// Consumes one observation.
    pub fn step(&mut self, x: f64, y_row: &[f64], density: &DesignDensity) -> Result<()> {
        if y_row.len() != self.p() {
            return Err(Error::DimensionMismatch(format!("row has {} values, expected {}", y_row.len(), self.p())));
        }
        let inv_g = 1.0 / density.eval_positive(x)?;
        let n = self.n + 1;
        match &mut self.chains {
            Chains::Known { signs, chain } => {
                chain.advance(n, x, y_row, inv_g, |j| signs[j], &self.gain, &self.innovation, &self.pinned)
            }
            Chains::Dual { plus, minus } => {
                plus.advance(n, x, y_row, inv_g, |_| 1.0, &self.gain, &self.innovation, &self.pinned);
                minus.advance(n, x, y_row, inv_g, |_| -1.0, &self.gain, &self.innovation, &self.pinned);
            }
        }
        self.n = n;
        Ok(())
    }

    /// Current shift estimate. In dual mode this is the magnitude selection
    /// of [`rm_dual_select`].
    pub fn theta_hat(&self) -> Vec<f64> {
        match &self.chains {
            Chains::Known { chain, .. } => chain.theta.clone(),
            Chains::Dual { plus, minus } => select(plus, minus).map(|(t, _)| t).collect(),
        }
    }

    /// Projection counts of the chain currently reported by [`Self::theta_hat`].
    pub fn truncations(&self) -> Vec<u64> {
        match &self.chains {
            Chains::Known { chain, .. } => chain.truncations.clone(),
            Chains::Dual { plus, minus } => select(plus, minus).map(|(_, c)| c).collect(),
        }
    }

    /// Total projections over all chains and components.
    pub fn total_truncations(&self) -> u64 {
        match &self.chains {
            Chains::Known { chain, .. } => chain.truncations.iter().sum(),
            Chains::Dual { plus, minus } => {
                plus.truncations.iter().sum::<u64>() + minus.truncations.iter().sum::<u64>()
            }
        }
    }

    /// `(plus, minus)` chains in dual mode.
    pub fn dual_chains(&self) -> Option<(&Chain, &Chain)> {
        match &self.chains {
            Chains::Dual { plus, minus } => Some((plus, minus)),
            Chains::Known { .. } => None,
        }
    }

    /// Orientation per component: the known signs, or in dual mode `+1` when
    /// the plus chain is selected and `-1` otherwise.
    pub fn signs(&self) -> Vec<f64> {
        match &self.chains {
            Chains::Known { signs, .. } => signs.clone(),
            Chains::Dual { plus, minus } => plus
                .theta
                .iter()
                .zip(&minus.theta)
                .map(|(p, m)| if p.abs() <= m.abs() { 1.0 } else { -1.0 })
                .collect(),
        }
    }
}

fn select<'a>(plus: &'a Chain, minus: &'a Chain) -> impl Iterator<Item = (f64, u64)> + 'a {
    (0..plus.theta.len()).map(move |j| {
        // ties go to the plus chain
        if plus.theta[j].abs() <= minus.theta[j].abs() {
            (plus.theta[j], plus.truncations[j])
        } else {
            (minus.theta[j], minus.truncations[j])
        }
    })
}

/// Per component, the dual chain value of smaller magnitude.
pub fn rm_dual_select(state: &RobbinsMonro) -> Result<Vec<f64>> {
    match &state.chains {
        Chains::Known { .. } => Err(Error::WrongMode),
        Chains::Dual { .. } if state.n == 0 => Err(Error::InsufficientData { needed: 1, got: 0 }),
        Chains::Dual { plus, minus } => Ok(select(plus, minus).map(|(t, _)| t).collect()),
    }
}
