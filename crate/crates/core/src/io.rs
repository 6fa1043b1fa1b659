//! File formats: dataset, signal, grid, trajectory and beat CSVs, and JSON
//! configs, snapshots and reports.
//!
//! Reals are written with Rust's shortest round-trip formatting, so every
//! file re-parses to bit-identical values.

use std::fs::File;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::asymptotics::Interval;
use crate::ecg::{SegmentedBeats, Signal};
use crate::error::{Error, Result};
use crate::model::{Dataset, DesignDensity, ModelParams, ShapeRepr, ShapeSpec};
use crate::pipeline::Trajectories;
use crate::shape::{uniform_grid, KernelKind, KernelSpec, NWConfig, WeightRule, DEFAULT_ALPHA, DEFAULT_GRID_POINTS};

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut f = File::create(path)?;
    serde_json::to_writer_pretty(&mut f, value)?;
    f.write_all(b"\n")?;
    Ok(())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    Ok(serde_json::from_reader(BufReader::new(File::open(path)?))?)
}

fn parse_f64(s: &str, what: &str) -> Result<f64> {
    s.trim().parse().map_err(|_| Error::Parse(format!("{what}: cannot parse `{s}` as a number")))
}

/// Writes `i,x,y1,...,yp`, one row per observation (`i` is 1-based).
pub fn write_dataset<W: Write>(w: W, data: &Dataset) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let mut header = vec!["i".to_string(), "x".to_string()];
    header.extend((1..=data.p()).map(|j| format!("y{j}")));
    out.write_record(&header)?;
    for (i, (x, row)) in data.rows().enumerate() {
        let mut rec = vec![(i + 1).to_string(), x.to_string()];
        rec.extend(row.iter().map(f64::to_string));
        out.write_record(&rec)?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_dataset<R: Read>(r: R) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(r);
    let header = rdr.headers()?.clone();
    if header.len() < 3 || &header[0] != "i" || &header[1] != "x" {
        if header.iter().all(|h| h.trim().is_empty()) {
            return Err(Error::InsufficientData { needed: 1, got: 0 });
        }
        return Err(Error::Parse("dataset header must be `i,x,y1,...,yp`".into()));
    }
    let p = header.len() - 2;
    let mut x = Vec::new();
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        if rec.len() != p + 2 {
            return Err(Error::DimensionMismatch(format!("row has {} fields, expected {}", rec.len(), p + 2)));
        }
        x.push(parse_f64(&rec[1], "x")?);
        rows.push((0..p).map(|j| parse_f64(&rec[j + 2], "y")).collect::<Result<Vec<_>>>()?);
    }
    Dataset::new(x, rows)
}

pub fn write_dataset_file(path: &Path, data: &Dataset) -> Result<()> {
    write_dataset(File::create(path)?, data)
}

pub fn read_dataset_file(path: &Path) -> Result<Dataset> {
    read_dataset(File::open(path)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum DensityConfig {
    Uniform,
    Cosine { eps: f64 },
}

impl DensityConfig {
    pub fn build(&self) -> Result<DesignDensity> {
        match *self {
            DensityConfig::Uniform => Ok(DesignDensity::Uniform),
            DensityConfig::Cosine { eps } => DesignDensity::cosine(eps),
        }
    }
}

/// Model and simulation settings, as stored in the config JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub p: usize,
    pub v: Vec<f64>,
    pub theta: Vec<f64>,
    pub a: Vec<f64>,
    pub sigma: Vec<f64>,
    pub shape: ShapeRepr,
    pub density: DensityConfig,
    pub n: usize,
    pub seed: u64,
}

impl ModelConfig {
    /// The five-curve benchmark with `n = 2000`.
    pub fn benchmark() -> Self {
        let b = crate::scenario::Benchmark::new();
        Self {
            p: 5,
            v: b.params.v.clone(),
            theta: b.params.theta.clone(),
            a: b.params.a.clone(),
            sigma: b.sigma.clone(),
            shape: b.shape.repr().clone(),
            density: DensityConfig::Uniform,
            n: 2000,
            seed: 0,
        }
    }

    pub fn params(&self) -> Result<ModelParams> {
        let params = ModelParams::new(self.v.clone(), self.theta.clone(), self.a.clone())?;
        if params.p() != self.p || self.sigma.len() != self.p {
            return Err(Error::InvalidParams(format!("config declares p = {} but vectors disagree", self.p)));
        }
        Ok(params)
    }

    pub fn shape(&self) -> Result<ShapeSpec> {
        ShapeSpec::from_repr(self.shape.clone())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightsConfig {
    #[default]
    Uniform,
    /// Variance-optimal weights from the fitted parameters and noise levels.
    Optimal,
}

/// Shape estimator settings, as stored in JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapeConfig {
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_kernel")]
    pub kernel: KernelKind,
    #[serde(default)]
    pub weights: WeightsConfig,
    #[serde(default = "default_grid_points")]
    pub grid_points: usize,
}

fn default_alpha() -> f64 {
    DEFAULT_ALPHA
}

fn default_kernel() -> KernelKind {
    KernelKind::Uniform
}

fn default_grid_points() -> usize {
    DEFAULT_GRID_POINTS
}

impl Default for ShapeConfig {
    fn default() -> Self {
        Self {
            alpha: DEFAULT_ALPHA,
            kernel: KernelKind::Uniform,
            weights: WeightsConfig::Uniform,
            grid_points: DEFAULT_GRID_POINTS,
        }
    }
}

impl ShapeConfig {
    /// Builds the estimator config; `optimal` supplies `(a, theta, sigma,
    /// density)` when optimal weights are requested.
    pub fn build(&self, optimal: Option<(Vec<f64>, Vec<f64>, Vec<f64>, DesignDensity)>) -> Result<NWConfig> {
        let weights = match (self.weights, optimal) {
            (WeightsConfig::Uniform, _) => WeightRule::Uniform,
            (WeightsConfig::Optimal, Some((a, theta, sigma, density))) => WeightRule::Optimal { a, theta, sigma, density },
            (WeightsConfig::Optimal, None) => {
                return Err(Error::InvalidParams("optimal weights need scale, shift and noise estimates".into()))
            }
        };
        let cfg = NWConfig {
            alpha: self.alpha,
            kernel: KernelSpec::new(self.kernel.clone())?,
            weights,
            grid: uniform_grid(self.grid_points),
            symmetrize: true,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Writes `n,component,value` for `v_hat` and `theta_hat`. Components are
/// labelled `v1..vp` and `theta1..thetap`.
pub fn write_trajectories<W: Write>(w: W, t: &Trajectories) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["n", "component", "value"])?;
    for (label, series) in [("v", &t.v), ("theta", &t.theta)] {
        for (i, est) in series.iter().enumerate() {
            for (j, val) in est.iter().enumerate() {
                out.write_record([(i + 1).to_string(), format!("{label}{}", j + 1), val.to_string()])?;
            }
        }
    }
    out.flush()?;
    Ok(())
}

pub fn read_trajectories<R: Read>(r: R) -> Result<Trajectories> {
    let mut rdr = csv::Reader::from_reader(r);
    let mut t = Trajectories::default();
    for rec in rdr.records() {
        let rec = rec?;
        let n: usize = rec[0].parse().map_err(|_| Error::Parse(format!("bad step `{}`", &rec[0])))?;
        let comp = &rec[1];
        let (series, idx) = if let Some(j) = comp.strip_prefix("theta") {
            (&mut t.theta, j)
        } else if let Some(j) = comp.strip_prefix('v') {
            (&mut t.v, j)
        } else {
            return Err(Error::Parse(format!("unknown component `{comp}`")));
        };
        let j: usize = idx.parse().map_err(|_| Error::Parse(format!("bad component `{comp}`")))?;
        if n == 0 || j == 0 {
            return Err(Error::Parse("steps and components are 1-based".into()));
        }
        while series.len() < n {
            series.push(Vec::new());
        }
        let row = &mut series[n - 1];
        if row.len() != j - 1 {
            return Err(Error::Parse(format!("component `{comp}` out of order at step {n}")));
        }
        row.push(parse_f64(&rec[2], "value")?);
    }
    Ok(t)
}

/// One row of the shape export.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridRow {
    pub x: f64,
    pub f_hat: Option<f64>,
    pub ci_lo: Option<f64>,
    pub ci_hi: Option<f64>,
}

impl GridRow {
    pub fn new(x: f64, f_hat: Option<f64>, ci: Option<Interval>) -> Self {
        Self { x, f_hat, ci_lo: ci.map(|c| c.lo), ci_hi: ci.map(|c| c.hi) }
    }
}

/// Writes `x,f_hat,ci_lo,ci_hi`; missing values are empty fields.
pub fn write_grid<W: Write>(w: W, rows: &[GridRow]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["x", "f_hat", "ci_lo", "ci_hi"])?;
    let opt = |v: Option<f64>| v.map_or(String::new(), |v| v.to_string());
    for r in rows {
        out.write_record([r.x.to_string(), opt(r.f_hat), opt(r.ci_lo), opt(r.ci_hi)])?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_grid<R: Read>(r: R) -> Result<Vec<GridRow>> {
    let mut rdr = csv::Reader::from_reader(r);
    let opt = |s: &str| if s.trim().is_empty() { Ok(None) } else { parse_f64(s, "grid value").map(Some) };
    rdr.records()
        .map(|rec| {
            let rec = rec?;
            Ok(GridRow {
                x: parse_f64(&rec[0], "x")?,
                f_hat: opt(&rec[1])?,
                ci_lo: opt(rec.get(2).unwrap_or(""))?,
                ci_hi: opt(rec.get(3).unwrap_or(""))?,
            })
        })
        .collect()
}

/// Writes `beat,sample,x,value` (both indices 0-based).
pub fn write_beats<W: Write>(w: W, beats: &SegmentedBeats) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["beat", "sample", "x", "value"])?;
    for (b, beat) in beats.beats.iter().enumerate() {
        for (k, v) in beat.iter().enumerate() {
            out.write_record([b.to_string(), k.to_string(), beats.x[k].to_string(), v.to_string()])?;
        }
    }
    out.flush()?;
    Ok(())
}

pub fn read_beats<R: Read>(r: R) -> Result<SegmentedBeats> {
    let mut rdr = csv::Reader::from_reader(r);
    let mut beats: Vec<Vec<f64>> = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let b: usize = rec[0].trim().parse().map_err(|_| Error::Parse(format!("bad beat `{}`", &rec[0])))?;
        let k: usize = rec[1].trim().parse().map_err(|_| Error::Parse(format!("bad sample `{}`", &rec[1])))?;
        while beats.len() <= b {
            beats.push(Vec::new());
        }
        if beats[b].len() != k {
            return Err(Error::Parse(format!("beat {b}: sample {k} out of order")));
        }
        beats[b].push(parse_f64(&rec[3], "value")?);
    }
    SegmentedBeats::from_beats(beats)
}

/// One sample per line; a non-numeric first line is taken as a header. For
/// comma-separated lines the first field is used.
pub fn read_signal<R: Read>(r: R, rate: f64) -> Result<Signal> {
    let mut samples = Vec::new();
    for (i, line) in BufReader::new(r).lines().enumerate() {
        let line = line?;
        let field = line.split(',').next().unwrap_or("").trim();
        if field.is_empty() {
            continue;
        }
        match field.parse::<f64>() {
            Ok(v) => samples.push(v),
            Err(_) if i == 0 => continue,
            Err(_) => return Err(Error::Parse(format!("line {}: `{field}` is not a number", i + 1))),
        }
    }
    Ok(Signal::new(samples, rate))
}

pub fn write_signal<W: Write>(mut w: W, signal: &Signal) -> Result<()> {
    for s in &signal.samples {
        writeln!(w, "{s}")?;
    }
    Ok(())
}
