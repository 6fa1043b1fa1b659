//! Plug-in asymptotic covariances, confidence intervals and quadratic
//! strong law diagnostics.
//!
//! Matrices are dense row-major `Vec<Vec<f64>>`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::Innovation;
use crate::model::{Dataset, DesignDensity};
use crate::stats::{covariance, two_sided_quantile};

pub type Matrix = Vec<Vec<f64>>;

fn zeros(p: usize) -> Matrix {
    vec![vec![0.0; p]; p]
}

fn need_two(data: &Dataset) -> Result<()> {
    if data.n() < 2 {
        return Err(Error::InsufficientData { needed: 2, got: data.n() });
    }
    Ok(())
}

fn check_len(name: &str, v: &[f64], p: usize) -> Result<()> {
    if v.len() != p {
        return Err(Error::DimensionMismatch(format!("{name} has {} entries, expected {p}", v.len())));
    }
    Ok(())
}

/// Empirical covariance of `Y_i / g(X_i)`.
pub fn gamma_v_estimate(data: &Dataset, density: &DesignDensity) -> Result<Matrix> {
    need_two(data)?;
    let rows = data
        .rows()
        .map(|(x, y)| {
            let g = density.eval_positive(x)?;
            Ok(y.iter().map(|v| v / g).collect())
        })
        .collect::<Result<Vec<Vec<f64>>>>()?;
    Ok(covariance(&rows))
}

/// Difference-based noise variances: with the sample sorted by `X`,
/// `sigma_j^2 = sum (Y_(i+1),j - Y_(i),j)^2 / (2 (n - 1))`. Does not depend
/// on any fitted shape.
pub fn noise_variance_estimate(data: &Dataset) -> Result<Vec<f64>> {
    need_two(data)?;
    let mut order: Vec<usize> = (0..data.n()).collect();
    order.sort_by(|&i, &k| data.x()[i].total_cmp(&data.x()[k]));
    let mut ss = vec![0.0; data.p()];
    for w in order.windows(2) {
        let (y0, y1) = (data.row(w[0]), data.row(w[1]));
        for (j, s) in ss.iter_mut().enumerate() {
            *s += (y1[j] - y0[j]).powi(2);
        }
    }
    let denom = 2.0 * (data.n() - 1) as f64;
    Ok(ss.into_iter().map(|s| s / denom).collect())
}

/// Empirical mean of `V V^T` with `V = diag(signs) D(X, theta_hat) Y` and
/// `D_jj = sin(2 pi (X - theta_hat_j)) / g(X)`.
pub fn phi_theta_estimate(
    data: &Dataset,
    theta_hat: &[f64],
    signs: &[f64],
    density: &DesignDensity,
) -> Result<Matrix> {
    phi_theta_estimate_with(data, theta_hat, signs, density, &Innovation::Symmetric)
}

/// As [`phi_theta_estimate`], with the innovation of the chosen mode
/// (`Psi` for the non-symmetric variant).
pub fn phi_theta_estimate_with(
    data: &Dataset,
    theta_hat: &[f64],
    signs: &[f64],
    density: &DesignDensity,
    innovation: &Innovation,
) -> Result<Matrix> {
    need_two(data)?;
    let p = data.p();
    check_len("theta_hat", theta_hat, p)?;
    check_len("signs", signs, p)?;
    let mut acc = zeros(p);
    let mut v = vec![0.0; p];
    for (x, y) in data.rows() {
        let t = crate::estimators::rm_innovation(x, y, theta_hat, density, innovation)?;
        for j in 0..p {
            v[j] = signs[j] * t[j];
        }
        for k in 0..p {
            for l in k..p {
                acc[k][l] += v[k] * v[l];
            }
        }
    }
    let n = data.n() as f64;
    for k in 0..p {
        for l in k..p {
            acc[k][l] /= n;
            acc[l][k] = acc[k][l];
        }
    }
    Ok(acc)
}

fn sigma_from(phi: &Matrix, a: &[f64], rate: f64) -> Result<Matrix> {
    let p = a.len();
    if phi.len() != p || phi.iter().any(|r| r.len() != p) {
        return Err(Error::DimensionMismatch("phi must be p x p".into()));
    }
    let min_a = a.iter().map(|v| v.abs()).fold(f64::INFINITY, f64::min);
    let stability = 2.0 * rate * min_a;
    if !(stability > 1.0) {
        return Err(Error::StabilityConditionViolated { value: stability });
    }
    Ok((0..p)
        .map(|k| (0..p).map(|l| phi[k][l] / (rate * (a[k].abs() + a[l].abs()) - 1.0)).collect())
        .collect())
}

/// `Sigma_kl = phi_kl / (2 pi (|a_k| + |a_l|) |f1| - 1)`, requiring
/// `4 pi |f1| min|a| > 1`.
pub fn sigma_theta_from_phi(phi: &Matrix, a: &[f64], f1: f64) -> Result<Matrix> {
    sigma_from(phi, a, 2.0 * PI * f1.abs())
}

/// Non-symmetric variant: `Psi_kl / (2 pi (f1^2 + g1^2)(|a_k| + |a_l|) - 1)`.
pub fn sigma_theta_nonsym(psi: &Matrix, a: &[f64], f1: f64, g1: f64) -> Result<Matrix> {
    sigma_from(psi, a, 2.0 * PI * (f1 * f1 + g1 * g1))
}

/// `4 pi |f1| min_j |a_j|`.
pub fn stability_value(a: &[f64], f1: f64) -> f64 {
    4.0 * PI * f1.abs() * a.iter().map(|v| v.abs()).fold(f64::INFINITY, f64::min)
}

/// Covariance with the efficient gains `1 / (2 pi a_j f1)`:
/// `phi_kl / (4 pi^2 f1^2 |a_k a_l|)`.
pub fn ell_theta_from_phi(phi: &Matrix, a: &[f64], f1: f64) -> Result<Matrix> {
    if f1 == 0.0 {
        return Err(Error::ZeroArgument("f1"));
    }
    if a.iter().any(|v| *v == 0.0) {
        return Err(Error::ZeroArgument("a"));
    }
    let p = a.len();
    let c = 4.0 * PI * PI * f1 * f1;
    Ok((0..p).map(|k| (0..p).map(|l| phi[k][l] / (c * (a[k] * a[l]).abs())).collect()).collect())
}

/// `M_p = I - a e_1^T`.
pub fn m_matrix(a: &[f64]) -> Matrix {
    let p = a.len();
    (0..p)
        .map(|i| (0..p).map(|k| if i == k { 1.0 } else { 0.0 } - if k == 0 { a[i] } else { 0.0 }).collect())
        .collect()
}

/// `M G M^T`, symmetrized.
pub fn sandwich(m: &Matrix, g: &Matrix) -> Matrix {
    let p = m.len();
    let mut mg = zeros(p);
    for i in 0..p {
        for k in 0..p {
            mg[i][k] = (0..p).map(|l| m[i][l] * g[l][k]).sum();
        }
    }
    let mut out = zeros(p);
    for i in 0..p {
        for j in i..p {
            out[i][j] = (0..p).map(|k| mg[i][k] * m[j][k]).sum();
            out[j][i] = out[i][j];
        }
    }
    out
}

/// `(Gamma(a), M Gamma(a) M^T)` with `Gamma(a) = Cov(C(X, theta_hat) Y) / f1^2`,
/// `C_jj = cos(2 pi (X - theta_hat_j)) / g(X)` and `M` built from `a_hat`.
pub fn gamma_a_estimate(
    data: &Dataset,
    theta_hat: &[f64],
    f1: f64,
    a_hat: &[f64],
    density: &DesignDensity,
) -> Result<(Matrix, Matrix)> {
    need_two(data)?;
    if f1 == 0.0 {
        return Err(Error::ZeroArgument("f1"));
    }
    let p = data.p();
    check_len("theta_hat", theta_hat, p)?;
    check_len("a_hat", a_hat, p)?;
    let rows = data
        .rows()
        .map(|(x, y)| {
            let g = density.eval_positive(x)?;
            Ok((0..p).map(|j| (2.0 * PI * (x - theta_hat[j])).cos() * y[j] / g).collect())
        })
        .collect::<Result<Vec<Vec<f64>>>>()?;
    let f2 = f1 * f1;
    let gamma: Matrix = covariance(&rows).into_iter().map(|r| r.into_iter().map(|v| v / f2).collect()).collect();
    let tilde = sandwich(&m_matrix(a_hat), &gamma);
    Ok((gamma, tilde))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
    pub level: f64,
}

impl Interval {
    pub fn length(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn contains(&self, v: f64) -> bool {
        self.lo <= v && v <= self.hi
    }
}

fn check_level(level: f64) -> Result<()> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidParams(format!("confidence level {level} outside (0, 1)")));
    }
    Ok(())
}

/// `estimate_j ± q sqrt(cov_jj / n)`.
pub fn ci_param(estimate: &[f64], cov: &Matrix, n: usize, level: f64) -> Result<Vec<Interval>> {
    check_level(level)?;
    if cov.len() != estimate.len() || cov.iter().any(|r| r.len() != estimate.len()) {
        return Err(Error::DimensionMismatch("covariance must be p x p".into()));
    }
    let q = two_sided_quantile(level);
    estimate
        .iter()
        .enumerate()
        .map(|(j, &e)| {
            let var = cov[j][j];
            if var < 0.0 || var.is_nan() {
                return Err(Error::NegativeVariance { index: j, value: var });
            }
            let half = q * (var / n as f64).sqrt();
            Ok(Interval { lo: e - half, hi: e + half, level })
        })
        .collect()
}

/// Model inputs of the pointwise shape variance.
#[derive(Debug, Clone, Copy)]
pub struct ShapeVarianceInputs<'a> {
    pub a: &'a [f64],
    pub theta: &'a [f64],
    pub sigma: &'a [f64],
    pub density: &'a DesignDensity,
}

/// Asymptotic variance `w^2(x)` of `sqrt(n h_n) (f_hat(x) - f(x))`.
///
/// For `x != 0` it is `nu2 / (1 + alpha) sum_j sigma_j^2 w_j^2 / (a_j^2 (g(theta_j + x) + g(theta_j - x)))`;
/// at `x = 0` the denominator is `a_j^2 g(theta_j)`. Curves whose density
/// terms both vanish are dropped and the remaining weights renormalized.
pub fn nw_variance(x: f64, alpha: f64, nu2: f64, weights: &[f64], inputs: ShapeVarianceInputs<'_>) -> Result<f64> {
    if !(alpha > 1.0 / 3.0) {
        return Err(Error::AlphaTooSmall { alpha });
    }
    let ShapeVarianceInputs { a, theta, sigma, density } = inputs;
    let p = weights.len();
    check_len("a", a, p)?;
    check_len("theta", theta, p)?;
    check_len("sigma", sigma, p)?;
    if sigma.iter().any(|s| !(*s > 0.0)) {
        return Err(Error::ZeroArgument("sigma"));
    }
    let mut kept_weight = 0.0;
    let mut sum = 0.0;
    let mut first_dropped = None;
    for j in 0..p {
        let mass = if x == 0.0 { density.eval(theta[j]) } else { density.eval(theta[j] + x) + density.eval(theta[j] - x) };
        if mass > 0.0 {
            kept_weight += weights[j];
            sum += sigma[j] * sigma[j] * weights[j] * weights[j] / (a[j] * a[j] * mass);
        } else if first_dropped.is_none() {
            first_dropped = Some(j);
        }
    }
    if !(kept_weight > 0.0) {
        return Err(Error::ZeroDensityAtShiftedPoint { curve: first_dropped.unwrap_or(0), x });
    }
    Ok(nu2 / (1.0 + alpha) * sum / (kept_weight * kept_weight))
}

/// `f_hat ± q sqrt(variance) / sqrt(n h_n)` with `h_n = n^-alpha`.
pub fn ci_shape(f_hat: f64, variance: f64, n: usize, alpha: f64, level: f64) -> Result<Interval> {
    check_level(level)?;
    if variance < 0.0 || variance.is_nan() {
        return Err(Error::NegativeVariance { index: 0, value: variance });
    }
    let n = n as f64;
    let nh = n * n.powf(-alpha);
    let half = two_sided_quantile(level) * variance.sqrt() / nh.sqrt();
    Ok(Interval { lo: f_hat - half, hi: f_hat + half, level })
}

/// `(1 / log n) sum_i (est_i - target)(est_i - target)^T` over a trajectory
/// of length `n`.
pub fn qsl_diagnostic(trajectory: &[Vec<f64>], target: &[f64]) -> Result<Matrix> {
    let n = trajectory.len();
    if n < 2 {
        return Err(Error::InsufficientData { needed: 2, got: n });
    }
    let p = target.len();
    let mut acc = zeros(p);
    let mut d = vec![0.0; p];
    for est in trajectory {
        check_len("trajectory entry", est, p)?;
        for j in 0..p {
            d[j] = est[j] - target[j];
        }
        for k in 0..p {
            for l in k..p {
                acc[k][l] += d[k] * d[l];
            }
        }
    }
    let ln = (n as f64).ln();
    for k in 0..p {
        for l in k..p {
            acc[k][l] /= ln;
            acc[l][k] = acc[k][l];
        }
    }
    Ok(acc)
}

/// Frobenius norm of `a - b` relative to that of `b`.
pub fn relative_frobenius(a: &Matrix, b: &Matrix) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for (ra, rb) in a.iter().zip(b) {
        for (x, y) in ra.iter().zip(rb) {
            num += (x - y).powi(2);
            den += y * y;
        }
    }
    (num / den).sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovarianceReport {
    pub gamma_v: Matrix,
    pub sigma_theta: Matrix,
    pub gamma_a: Matrix,
    pub gamma_a_tilde: Matrix,
    pub sample_n: usize,
}

/// Plug-in values feeding [`covariance_report`].
#[derive(Debug, Clone, PartialEq)]
pub struct PlugIn {
    pub theta_hat: Vec<f64>,
    pub a_hat: Vec<f64>,
    pub signs: Vec<f64>,
    /// Known `f1` or its estimate.
    pub f1: f64,
    pub innovation: Innovation,
}

/// Builds every covariance from the data and the final estimates.
pub fn covariance_report(data: &Dataset, density: &DesignDensity, plug: &PlugIn) -> Result<CovarianceReport> {
    let gamma_v = gamma_v_estimate(data, density)?;
    let phi = phi_theta_estimate_with(data, &plug.theta_hat, &plug.signs, density, &plug.innovation)?;
    let sigma_theta = match plug.innovation {
        Innovation::Symmetric => sigma_theta_from_phi(&phi, &plug.a_hat, plug.f1)?,
        Innovation::NonSymmetric { f1, g1 } => sigma_theta_nonsym(&phi, &plug.a_hat, f1, g1)?,
    };
    let (gamma_a, gamma_a_tilde) = gamma_a_estimate(data, &plug.theta_hat, plug.f1, &plug.a_hat, density)?;
    Ok(CovarianceReport { gamma_v, sigma_theta, gamma_a, gamma_a_tilde, sample_n: data.n() })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamIntervals {
    pub v: Vec<Interval>,
    pub theta: Vec<Interval>,
    pub a: Vec<Interval>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub gamma_v: Matrix,
    pub sigma_theta: Matrix,
    pub gamma_a: Matrix,
    pub gamma_a_tilde: Matrix,
    pub intervals: ParamIntervals,
    pub level: f64,
}

/// Intervals for `v`, `theta` and `a`. The scale intervals use `Gamma(a)`
/// when `f1` is known and `M Gamma(a) M^T` when it was estimated.
pub fn report(
    cov: &CovarianceReport,
    v_hat: &[f64],
    theta_hat: &[f64],
    a_hat: &[f64],
    f1_known: bool,
    level: f64,
) -> Result<Report> {
    let n = cov.sample_n;
    let a_cov = if f1_known { &cov.gamma_a } else { &cov.gamma_a_tilde };
    Ok(Report {
        intervals: ParamIntervals {
            v: ci_param(v_hat, &cov.gamma_v, n, level)?,
            theta: ci_param(theta_hat, &cov.sigma_theta, n, level)?,
            a: ci_param(a_hat, a_cov, n, level)?,
        },
        gamma_v: cov.gamma_v.clone(),
        sigma_theta: cov.sigma_theta.clone(),
        gamma_a: cov.gamma_a.clone(),
        gamma_a_tilde: cov.gamma_a_tilde.clone(),
        level,
    })
}
