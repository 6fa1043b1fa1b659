//! Shape-invariant regression model.
//!
//! Curve `j` of the model is observed as
//! `Y[i][j] = a[j] * f(X[i] - theta[j]) + v[j] + eps[i][j]` with a common
//! 1-periodic, zero-mean shape `f` and i.i.d. design points `X[i]` drawn from
//! a density `g` supported on `[-1/2, 1/2]`. Curve 0 is the reference
//! (`a[0] = 1`, `theta[0] = 0`) and every shift satisfies `|theta[j]| < 1/4`.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature;
use crate::rng;

/// Absolute tolerance of the Fourier-coefficient quadrature.
pub const FOURIER_TOL: f64 = 1e-10;
/// Smallest table accepted by [`ShapeSpec::tabulated`].
pub const MIN_TABLE_LEN: usize = 256;
/// Grid used to estimate `sup g` for rejection sampling.
pub const DENSITY_SUP_GRID: usize = 10_000;

/// Reduces `x` modulo 1 into `[-1/2, 1/2)`.
pub fn wrap_unit(x: f64) -> f64 {
    let r = x - (x + 0.5).floor();
    // floor can round (x + 0.5) up to an integer for x just below a half-integer
    if r >= 0.5 {
        r - 1.0
    } else {
        r
    }
}

/// Deformation parameters `(v, theta, a)` of `p` curves.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub v: Vec<f64>,
    pub theta: Vec<f64>,
    pub a: Vec<f64>,
}

impl ModelParams {
    pub fn new(v: Vec<f64>, theta: Vec<f64>, a: Vec<f64>) -> Result<Self> {
        if v.is_empty() {
            return Err(Error::InvalidParams("at least one curve is required".into()));
        }
        if theta.len() != v.len() || a.len() != v.len() {
            return Err(Error::InvalidParams(format!(
                "length mismatch: v has {}, theta {}, a {}",
                v.len(),
                theta.len(),
                a.len()
            )));
        }
        Ok(Self { v, theta, a })
    }

    pub fn p(&self) -> usize {
        self.v.len()
    }

    /// `sign(a_j * f1)` for each curve.
    pub fn signs(&self, f1: f64) -> Vec<f64> {
        self.a.iter().map(|a| (a * f1).signum()).collect()
    }
}

/// Checks the identifiability constraints and `f1 != 0`, reporting the
/// first violation in the order: reference curve, zero scale, shift range,
/// vanishing first Fourier coefficient.
pub fn validate_identifiability(params: &ModelParams, shape: &ShapeSpec) -> Result<()> {
    let p = params.p();
    if p == 0 || params.theta.len() != p || params.a.len() != p {
        return Err(Error::InvalidParams("inconsistent curve count".into()));
    }
    if params.a[0] != 1.0 || params.theta[0] != 0.0 {
        return Err(Error::FirstCurveNotReference);
    }
    if let Some(curve) = params.a.iter().position(|&a| a == 0.0 || !a.is_finite()) {
        return Err(Error::ZeroScale { curve });
    }
    for (curve, &t) in params.theta.iter().enumerate() {
        if !(t.abs() < 0.25) {
            return Err(Error::ShiftOutOfRange { curve, value: t });
        }
    }
    if shape.f1() == 0.0 {
        return Err(Error::ZeroFirstFourier);
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ShapeRepr {
    /// `f(x) = sum_k coeffs[k-1] * cos(2 k pi x)`.
    FourierCosine { coeffs: Vec<f64> },
    /// Values at `x_k = -1/2 + k/N`, linearly interpolated with periodic wrap.
    Tabulated { values: Vec<f64> },
}

/// A 1-periodic zero-mean shape function with cached first Fourier
/// coefficients `f1 = int cos(2 pi x) f(x) dx` and `g1 = int sin(2 pi x) f(x) dx`.
#[derive(Debug, Clone, PartialEq)]
pub struct ShapeSpec {
    repr: ShapeRepr,
    f1: f64,
    g1: f64,
    symmetric: bool,
}

impl ShapeSpec {
    pub fn fourier_cosine(coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidShape("non-finite coefficient".into()));
        }
        let f1 = coeffs.first().copied().unwrap_or(0.0) / 2.0;
        Ok(Self { repr: ShapeRepr::FourierCosine { coeffs }, f1, g1: 0.0, symmetric: true })
    }

    /// Tabulated shape; the table must have at least [`MIN_TABLE_LEN`] entries
    /// and zero mean.
    pub fn tabulated(values: Vec<f64>) -> Result<Self> {
        let n = values.len();
        if n < MIN_TABLE_LEN {
            return Err(Error::InvalidShape(format!(
                "table has {n} entries, at least {MIN_TABLE_LEN} required"
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidShape("non-finite table entry".into()));
        }
        // The integral of the periodic linear interpolant is the plain table mean.
        let mean = values.iter().sum::<f64>() / n as f64;
        let scale = values.iter().fold(1.0_f64, |m, v| m.max(v.abs()));
        if mean.abs() > 1e-9 * scale {
            return Err(Error::InvalidShape(format!("table mean {mean:e} is not zero")));
        }
        let symmetric = (0..n).all(|k| {
            let mirror = values[(n - k) % n];
            (values[k] - mirror).abs() <= 1e-12 * scale
        });
        let mut spec = Self { repr: ShapeRepr::Tabulated { values }, f1: 0.0, g1: 0.0, symmetric };
        spec.f1 = fourier_f1_quadrature(&spec)?;
        spec.g1 = if symmetric { 0.0 } else { fourier_g1_quadrature(&spec)? };
        Ok(spec)
    }

    /// Tabulates `f` on `n` points and removes the table mean.
    pub fn tabulated_centered<F: Fn(f64) -> f64>(f: F, n: usize) -> Result<Self> {
        let mut values: Vec<f64> = (0..n).map(|k| f(-0.5 + k as f64 / n as f64)).collect();
        let mean = values.iter().sum::<f64>() / n.max(1) as f64;
        values.iter_mut().for_each(|v| *v -= mean);
        Self::tabulated(values)
    }

    pub fn from_repr(repr: ShapeRepr) -> Result<Self> {
        match repr {
            ShapeRepr::FourierCosine { coeffs } => Self::fourier_cosine(coeffs),
            ShapeRepr::Tabulated { values } => Self::tabulated(values),
        }
    }

    pub fn repr(&self) -> &ShapeRepr {
        &self.repr
    }

    pub fn f1(&self) -> f64 {
        self.f1
    }

    pub fn g1(&self) -> f64 {
        self.g1
    }

    pub fn is_symmetric(&self) -> bool {
        self.symmetric
    }

    /// `f(x)` under periodic extension.
    pub fn eval(&self, x: f64) -> f64 {
        let r = wrap_unit(x);
        match &self.repr {
            ShapeRepr::FourierCosine { coeffs } => coeffs
                .iter()
                .enumerate()
                .map(|(k, c)| c * (2.0 * PI * (k + 1) as f64 * r).cos())
                .sum(),
            ShapeRepr::Tabulated { values } => interpolate_periodic(values, r),
        }
    }

    fn quadrature_breaks(&self) -> Vec<f64> {
        match &self.repr {
            ShapeRepr::FourierCosine { .. } => vec![-0.5, 0.0, 0.5],
            ShapeRepr::Tabulated { values } => {
                let n = values.len();
                (0..=n).map(|k| -0.5 + k as f64 / n as f64).collect()
            }
        }
    }
}

/// Linear interpolation of a periodic table sampled at `-1/2 + k/N`.
pub(crate) fn interpolate_periodic(values: &[f64], x: f64) -> f64 {
    let n = values.len();
    let t = (wrap_unit(x) + 0.5) * n as f64;
    let k = (t.floor() as usize).min(n - 1);
    let frac = t - k as f64;
    values[k] * (1.0 - frac) + values[(k + 1) % n] * frac
}

/// `f(x)` under periodic extension.
pub fn eval_shape(spec: &ShapeSpec, x: f64) -> f64 {
    spec.eval(x)
}

/// First Fourier coefficient: analytic for cosine series, quadrature otherwise.
pub fn fourier_f1(spec: &ShapeSpec) -> Result<f64> {
    match spec.repr() {
        ShapeRepr::FourierCosine { coeffs } => Ok(coeffs.first().copied().unwrap_or(0.0) / 2.0),
        ShapeRepr::Tabulated { .. } => fourier_f1_quadrature(spec),
    }
}

/// First Fourier coefficient by adaptive quadrature, whatever the representation.
pub fn fourier_f1_quadrature(spec: &ShapeSpec) -> Result<f64> {
    let f = |x: f64| (2.0 * PI * x).cos() * spec.eval(x);
    quadrature::integrate_panels(&f, &spec.quadrature_breaks(), FOURIER_TOL)
}

/// Sine coefficient `g1` by adaptive quadrature.
pub fn fourier_g1_quadrature(spec: &ShapeSpec) -> Result<f64> {
    let f = |x: f64| (2.0 * PI * x).sin() * spec.eval(x);
    quadrature::integrate_panels(&f, &spec.quadrature_breaks(), FOURIER_TOL)
}

/// Probability density of the design points on `[-1/2, 1/2]`.
#[derive(Clone)]
pub enum DesignDensity {
    Uniform,
    /// `g(x) = 1 + eps * cos(2 pi x)` with `|eps| < 1`.
    Cosine { eps: f64 },
    Custom(CustomDensity),
}

#[derive(Clone)]
pub struct CustomDensity {
    f: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    sup: f64,
}

impl fmt::Debug for DesignDensity {
    fn fmt(&self, fm: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DesignDensity::Uniform => write!(fm, "Uniform"),
            DesignDensity::Cosine { eps } => write!(fm, "Cosine {{ eps: {eps} }}"),
            DesignDensity::Custom(c) => write!(fm, "Custom {{ sup: {} }}", c.sup),
        }
    }
}

impl DesignDensity {
    pub fn cosine(eps: f64) -> Result<Self> {
        if !(eps.abs() < 1.0) {
            return Err(Error::InvalidDensity(format!("cosine density needs |eps| < 1, got {eps}")));
        }
        Ok(DesignDensity::Cosine { eps })
    }

    /// User density on `[-1/2, 1/2]`. Positivity is checked on a grid and the
    /// total mass by quadrature.
    pub fn custom<F>(f: F) -> Result<Self>
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        let mut sup = 0.0_f64;
        for k in 0..=DENSITY_SUP_GRID {
            let x = -0.5 + k as f64 / DENSITY_SUP_GRID as f64;
            let g = f(x);
            if !(g > 0.0) || !g.is_finite() {
                return Err(Error::InvalidDensity(format!("density is not positive at x = {x}")));
            }
            sup = sup.max(g);
        }
        let mass = quadrature::integrate(&f, -0.5, 0.5, 1e-10)?;
        if (mass - 1.0).abs() > 1e-6 {
            return Err(Error::InvalidDensity(format!("density integrates to {mass}, not 1")));
        }
        Ok(DesignDensity::Custom(CustomDensity { f: Arc::new(f), sup }))
    }

    /// `g(x)`, zero outside `[-1/2, 1/2]`.
    pub fn eval(&self, x: f64) -> f64 {
        if !(-0.5..=0.5).contains(&x) {
            return 0.0;
        }
        match self {
            DesignDensity::Uniform => 1.0,
            DesignDensity::Cosine { eps } => 1.0 + eps * (2.0 * PI * x).cos(),
            DesignDensity::Custom(c) => (c.f)(x),
        }
    }

    /// Envelope for rejection sampling.
    pub fn sup(&self) -> f64 {
        match self {
            DesignDensity::Uniform => 1.0,
            DesignDensity::Cosine { eps } => 1.0 + eps.abs(),
            DesignDensity::Custom(c) => c.sup,
        }
    }

    pub fn is_uniform(&self) -> bool {
        matches!(self, DesignDensity::Uniform)
    }

    /// Draws one design point: inverse CDF for the uniform law, rejection
    /// sampling under `sup g` otherwise.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            DesignDensity::Uniform => rng.random::<f64>() - 0.5,
            _ => {
                let env = self.sup();
                loop {
                    let x = rng.random::<f64>() - 0.5;
                    let u = rng.random::<f64>() * env;
                    if u < self.eval(x) {
                        return x;
                    }
                }
            }
        }
    }

    /// `g(x)`, failing with `ZeroDensity` when it does not exceed machine epsilon.
    pub fn eval_positive(&self, x: f64) -> Result<f64> {
        let g = self.eval(x);
        if g <= f64::EPSILON {
            Err(Error::ZeroDensity { x })
        } else {
            Ok(g)
        }
    }
}

/// `n` design points and the `n x p` response matrix (row-major).
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    x: Vec<f64>,
    y: Vec<f64>,
    p: usize,
    pub sigma: Option<Vec<f64>>,
}

impl Dataset {
    pub fn new(x: Vec<f64>, rows: Vec<Vec<f64>>) -> Result<Self> {
        if x.len() != rows.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} design points but {} response rows",
                x.len(),
                rows.len()
            )));
        }
        let p = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != p) {
            return Err(Error::DimensionMismatch("ragged response rows".into()));
        }
        if let Some(bad) = x.iter().find(|x| !(-0.5..=0.5).contains(*x)) {
            return Err(Error::DimensionMismatch(format!("design point {bad} outside [-1/2, 1/2]")));
        }
        Ok(Self { x, y: rows.into_iter().flatten().collect(), p, sigma: None })
    }

    pub fn with_sigma(mut self, sigma: Vec<f64>) -> Self {
        self.sigma = Some(sigma);
        self
    }

    pub fn n(&self) -> usize {
        self.x.len()
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.y[i * self.p..(i + 1) * self.p]
    }

    pub fn rows(&self) -> impl Iterator<Item = (f64, &[f64])> + '_ {
        self.x.iter().copied().zip(self.y.chunks_exact(self.p.max(1)))
    }

    pub fn column(&self, j: usize) -> impl Iterator<Item = f64> + '_ {
        self.y.iter().skip(j).step_by(self.p.max(1)).copied()
    }

    /// First `n` observations.
    pub fn prefix(&self, n: usize) -> Dataset {
        let n = n.min(self.n());
        Dataset {
            x: self.x[..n].to_vec(),
            y: self.y[..n * self.p].to_vec(),
            p: self.p,
            sigma: self.sigma.clone(),
        }
    }
}

/// Law of the noise, scaled so that its standard deviation is `sigma[j]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseLaw {
    #[default]
    Gaussian,
    Uniform,
}

impl NoiseLaw {
    fn draw<R: Rng + ?Sized>(self, rng: &mut R) -> f64 {
        match self {
            NoiseLaw::Gaussian => StandardNormal.sample(rng),
            NoiseLaw::Uniform => (rng.random::<f64>() - 0.5) * 12f64.sqrt(),
        }
    }
}

/// Full description of a simulation run.
#[derive(Debug, Clone)]
pub struct Simulation<'a> {
    pub params: &'a ModelParams,
    pub shape: &'a ShapeSpec,
    pub density: &'a DesignDensity,
    pub sigma: &'a [f64],
    pub noise: NoiseLaw,
}

impl Simulation<'_> {
    /// Draws `n` observations from replication `replication` of `seed`.
    pub fn run(&self, n: usize, seed: u64, replication: u64) -> Result<Dataset> {
        validate_identifiability(self.params, self.shape)
            .map_err(|e| Error::InvalidParams(e.to_string()))?;
        let p = self.params.p();
        if self.sigma.len() != p {
            return Err(Error::InvalidParams(format!("sigma has {} entries, expected {p}", self.sigma.len())));
        }
        if let Some(s) = self.sigma.iter().find(|s| !(**s >= 0.0) || !s.is_finite()) {
            return Err(Error::InvalidParams(format!("noise level {s} must be nonnegative")));
        }
        let mut design = rng::stream(seed, replication, rng::DESIGN_COMPONENT);
        let x: Vec<f64> = (0..n).map(|_| self.density.sample(&mut design)).collect();
        let mut y = vec![0.0; n * p];
        for j in 0..p {
            let mut noise = rng::noise_stream(seed, replication, j);
            let (a, theta, v, s) = (self.params.a[j], self.params.theta[j], self.params.v[j], self.sigma[j]);
            for (i, xi) in x.iter().enumerate() {
                let eps = if s > 0.0 { s * self.noise.draw(&mut noise) } else { 0.0 };
                y[i * p + j] = a * self.shape.eval(xi - theta) + v + eps;
            }
        }
        Ok(Dataset { x, y, p, sigma: Some(self.sigma.to_vec()) })
    }
}

/// Simulates `n` observations with Gaussian noise (replication 0 of `seed`).
pub fn simulate(
    params: &ModelParams,
    shape: &ShapeSpec,
    density: &DesignDensity,
    sigma: &[f64],
    n: usize,
    seed: u64,
) -> Result<Dataset> {
    Simulation { params, shape, density, sigma, noise: NoiseLaw::Gaussian }.run(n, seed, 0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn five() -> ShapeSpec {
        ShapeSpec::fourier_cosine(vec![1.0; 5]).unwrap()
    }

    fn bench_params() -> ModelParams {
        ModelParams::new(
            vec![0.0, 1.0 / 3.0, -1.0, 2.0, -0.9],
            vec![0.0, 0.2, -0.05, -1.0 / 7.0, 1.0 / 6.0],
            vec![1.0, -4.0, 3.0, -2.5, -2.0],
        )
        .unwrap()
    }

    #[test]
    fn accepts_benchmark_parameters() {
        assert_eq!(validate_identifiability(&bench_params(), &five()), Ok(()));
    }

    #[test]
    fn rejects_shifted_reference() {
        let mut p = bench_params();
        p.theta = vec![0.1, 0.0, 0.0, 0.0, 0.0];
        assert_eq!(validate_identifiability(&p, &five()), Err(Error::FirstCurveNotReference));
    }

    #[test]
    fn rejects_large_shift() {
        let mut p = bench_params();
        p.theta = vec![0.0, 0.3, 0.0, 0.0, 0.0];
        assert!(matches!(
            validate_identifiability(&p, &five()),
            Err(Error::ShiftOutOfRange { curve: 1, .. })
        ));
    }

    #[test]
    fn rejects_zero_scale_and_zero_f1() {
        let mut p = bench_params();
        p.a[3] = 0.0;
        assert_eq!(validate_identifiability(&p, &five()), Err(Error::ZeroScale { curve: 3 }));
        let no_first = ShapeSpec::fourier_cosine(vec![0.0, 3.0]).unwrap();
        assert_eq!(validate_identifiability(&bench_params(), &no_first), Err(Error::ZeroFirstFourier));
    }

    #[test]
    fn eval_shape_examples() {
        let f = five();
        assert!((eval_shape(&f, 0.0) - 5.0).abs() < 1e-12);
        assert!((eval_shape(&f, 0.5) + 1.0).abs() < 1e-12);
        assert!((eval_shape(&f, 0.3) - eval_shape(&f, 1.3)).abs() < 1e-12);
    }

    #[test]
    fn fourier_examples() {
        assert_eq!(fourier_f1(&five()).unwrap(), 0.5);
        assert_eq!(fourier_f1(&ShapeSpec::fourier_cosine(vec![0.0, 3.0]).unwrap()).unwrap(), 0.0);
        // The linear interpolant of 2cos(2 pi x) on N nodes has first coefficient
        // (sin(pi/N)/(pi/N))^2; N = 65536 puts it within 1e-9 of 1.
        let n = 65_536;
        let tab = ShapeSpec::tabulated_centered(|x| 2.0 * (2.0 * PI * x).cos(), n).unwrap();
        assert!((fourier_f1(&tab).unwrap() - 1.0).abs() < 1e-8);
        assert!(tab.is_symmetric());
    }

    #[test]
    fn analytic_and_quadrature_f1_agree() {
        for coeffs in [vec![1.0; 5], vec![0.3, -2.0, 0.7], vec![-1.5]] {
            let s = ShapeSpec::fourier_cosine(coeffs).unwrap();
            assert!((fourier_f1(&s).unwrap() - fourier_f1_quadrature(&s).unwrap()).abs() < 1e-8);
        }
    }

    #[test]
    fn tabulated_rejects_short_or_biased_tables() {
        assert!(ShapeSpec::tabulated(vec![0.0; 100]).is_err());
        assert!(ShapeSpec::tabulated(vec![1.0; 300]).is_err());
    }

    #[test]
    fn wrap_unit_range() {
        for x in [-3.7, -0.5, -0.5000000001, 0.4999999999, 0.5, 12.25, 1e-17] {
            let r = wrap_unit(x);
            assert!((-0.5..0.5).contains(&r), "{x} -> {r}");
        }
    }

    #[test]
    fn noiseless_simulation_is_exact() {
        let p = bench_params();
        let f = five();
        let d = simulate(&p, &f, &DesignDensity::Uniform, &[0.0; 5], 50, 9).unwrap();
        assert_eq!((d.n(), d.p()), (50, 5));
        for (i, (x, row)) in d.rows().enumerate() {
            for j in 0..5 {
                let expect = p.a[j] * f.eval(x - p.theta[j]) + p.v[j];
                assert_eq!(row[j], expect, "row {i} curve {j}");
            }
        }
    }

    #[test]
    fn simulation_is_deterministic() {
        let p = bench_params();
        let f = five();
        let a = simulate(&p, &f, &DesignDensity::Uniform, &[1.0; 5], 200, 42).unwrap();
        let b = simulate(&p, &f, &DesignDensity::Uniform, &[1.0; 5], 200, 42).unwrap();
        let c = simulate(&p, &f, &DesignDensity::Uniform, &[1.0; 5], 200, 43).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn custom_density_checks() {
        assert!(DesignDensity::custom(|x| 1.0 + x).is_ok());
        assert!(DesignDensity::custom(|_| 2.0).is_err());
        assert!(DesignDensity::custom(|x| 2.0 * x + 1.0).is_err());
        assert!(DesignDensity::cosine(1.5).is_err());
    }

    #[test]
    fn rejection_sampling_stays_in_support() {
        let g = DesignDensity::cosine(0.8).unwrap();
        let mut r = rng::stream(1, 0, 0);
        for _ in 0..1000 {
            let x = g.sample(&mut r);
            assert!((-0.5..0.5).contains(&x));
        }
    }

    #[test]
    fn bad_sigma_rejected() {
        let r = simulate(&bench_params(), &five(), &DesignDensity::Uniform, &[1.0; 4], 10, 0);
        assert!(matches!(r, Err(Error::InvalidParams(_))));
        let r = simulate(&bench_params(), &five(), &DesignDensity::Uniform, &[-1.0; 5], 10, 0);
        assert!(matches!(r, Err(Error::InvalidParams(_))));
    }
}
