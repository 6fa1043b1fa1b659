use std::f64::consts::PI;
use std::fs::{self, File};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::Serialize;

use shapeinv::asymptotics::{
    ci_shape, covariance_report, gamma_v_estimate, noise_variance_estimate, nw_variance, qsl_diagnostic, relative_frobenius, report,
    sigma_theta_from_phi, phi_theta_estimate, stability_value, Matrix, PlugIn, ShapeVarianceInputs,
};
use shapeinv::ecg::{self, EcgFitConfig};
use shapeinv::estimators::{Innovation, RmConfig, SignMode};
use shapeinv::io::{self, GridRow, ModelConfig, ShapeConfig};
use shapeinv::pipeline::{fit_dataset, F1Mode, PipelineConfig, RecursiveEstimator, Snapshot};
use shapeinv::shape::KernelKind;
use shapeinv::{Dataset, DesignDensity, Error, ErrorClass, ModelParams, ShapeSpec};

#[derive(Parser)]
#[command(name = "shapeinv", version, about = "Recursive estimation in shape-invariant models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate datasets from a model config (benchmark by default).
    Simulate(Common),
    /// Fit a dataset: estimator snapshot and trajectories.
    Fit(Common),
    /// Covariances and parameter confidence intervals; with --reps, a
    /// coverage sweep over simulated replications.
    Ci(Common),
    /// Shape estimate on a grid with pointwise confidence intervals.
    Shape(Common),
    /// Quadratic strong law diagnostics against the true parameters.
    Qsl(Common),
    /// Cut a signal into equal-length beats.
    EcgSegment(EcgArgs),
    /// Select the reference beat, fit and export the common shape.
    EcgFit(EcgArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SignArg {
    Known,
    Dual,
}

#[derive(Args, Clone)]
struct Common {
    /// Model config JSON.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Input dataset CSV.
    #[arg(long)]
    input: Option<PathBuf>,
    /// Output directory.
    #[arg(long, default_value = ".")]
    output: PathBuf,
    /// Base seed; overrides the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Number of replications (seeds seed, seed+1, ...).
    #[arg(long, default_value_t = 1)]
    reps: u64,
    /// Bandwidth exponent of the shape estimator.
    #[arg(long, default_value_t = shapeinv::shape::DEFAULT_ALPHA)]
    alpha: f64,
    /// Confidence level.
    #[arg(long, default_value_t = 0.95)]
    level: f64,
    #[arg(long, value_enum, default_value_t = SignArg::Dual)]
    sign_mode: SignArg,
    /// Non-symmetric shape: use the sine-corrected innovation.
    #[arg(long)]
    nonsym: bool,
    /// Number of grid points for the shape estimate.
    #[arg(long, default_value_t = shapeinv::shape::DEFAULT_GRID_POINTS)]
    grid_points: usize,
}

#[derive(Args, Clone)]
struct EcgArgs {
    /// Signal (one sample per line) for ecg-segment, beats CSV for ecg-fit.
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value = ".")]
    output: PathBuf,
    /// Seed of the observation shuffle.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = shapeinv::shape::DEFAULT_ALPHA)]
    alpha: f64,
    /// Refractory window in samples.
    #[arg(long, default_value_t = 72)]
    min_sep: usize,
    /// Absolute detection threshold (default: 0.6 of the maximum).
    #[arg(long)]
    threshold: Option<f64>,
    /// Sampling rate in Hz (informational).
    #[arg(long, default_value_t = 360.0)]
    rate: f64,
    #[arg(long, default_value_t = 201)]
    grid_points: usize,
    /// Start shifts at zero and run the dual sign chains instead of the
    /// harmonic-phase warm start.
    #[arg(long)]
    no_warm_start: bool,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let (code, class, status) = match e.downcast_ref::<Error>() {
                Some(err) => {
                    let (name, status) = match err.class() {
                        ErrorClass::Config => ("config", 2),
                        ErrorClass::Data => ("data", 3),
                        ErrorClass::Numeric => ("numeric", 4),
                    };
                    (err.code(), name, status)
                }
                None => ("Io", "data", 3),
            };
            let msg = format!("{e:#}").replace('\n', " ");
            eprintln!("error code={code} class={class} message=\"{msg}\"");
            ExitCode::from(status)
        }
    }
}

fn run(cmd: Command) -> Result<()> {
    match cmd {
        Command::Simulate(c) => simulate(&c),
        Command::Fit(c) => fit(&c),
        Command::Ci(c) => ci(&c),
        Command::Shape(c) => shape(&c),
        Command::Qsl(c) => qsl(&c),
        Command::EcgSegment(a) => ecg_segment(&a),
        Command::EcgFit(a) => ecg_fit(&a),
    }
}

/// Parsed model config with its derived objects.
struct Model {
    cfg: ModelConfig,
    params: ModelParams,
    shape: ShapeSpec,
    density: DesignDensity,
}

fn load_model(path: &Path) -> Result<Model> {
    let cfg: ModelConfig =
        io::read_json(path).map_err(|e| config_err(e)).with_context(|| format!("reading {}", path.display()))?;
    let params = cfg.params()?;
    let shape = cfg.shape()?;
    shapeinv::validate_identifiability(&params, &shape)?;
    let density = cfg.density.build()?;
    Ok(Model { cfg, params, shape, density })
}

fn config_err(e: Error) -> Error {
    match e {
        Error::Parse(m) => Error::InvalidParams(m),
        other => other,
    }
}

fn optional_model(c: &Common) -> Result<Option<Model>> {
    c.config.as_deref().map(load_model).transpose()
}

fn require_model(c: &Common, what: &str) -> Result<Model> {
    optional_model(c)?.ok_or_else(|| Error::InvalidParams(format!("{what} needs --config")).into())
}

fn out_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn read_input(c: &Common) -> Result<Dataset> {
    let path = c.input.as_deref().ok_or_else(|| Error::InvalidParams("--input is required".into()))?;
    Ok(io::read_dataset_file(path).with_context(|| format!("reading {}", path.display()))?)
}

fn simulate(c: &Common) -> Result<()> {
    let model = match optional_model(c)? {
        Some(m) => m,
        None => {
            let cfg = ModelConfig::benchmark();
            Model { params: cfg.params()?, shape: cfg.shape()?, density: cfg.density.build()?, cfg }
        }
    };
    out_dir(&c.output)?;
    let base = c.seed.unwrap_or(model.cfg.seed);
    for r in 0..c.reps {
        let seed = base + r;
        let data = shapeinv::simulate(&model.params, &model.shape, &model.density, &model.cfg.sigma, model.cfg.n, seed)?;
        let name = if c.reps == 1 { "dataset.csv".to_string() } else { format!("dataset_{seed}.csv") };
        io::write_dataset_file(&c.output.join(name), &data)?;
    }
    let mut cfg = model.cfg.clone();
    cfg.seed = base;
    io::write_json(&c.output.join("config.json"), &cfg)?;
    Ok(())
}

/// First Fourier coefficients of curve 1, `(mean cos(2 pi X) Y / g, mean sin(2 pi X) Y / g)`.
fn harmonic_moments(data: &Dataset, density: &DesignDensity) -> Result<(f64, f64)> {
    let (mut c, mut s) = (0.0, 0.0);
    for (x, y) in data.rows() {
        let g = density.eval_positive(x)?;
        let (sn, cs) = (2.0 * PI * x).sin_cos();
        c += cs * y[0] / g;
        s += sn * y[0] / g;
    }
    let n = data.n() as f64;
    Ok((c / n, s / n))
}

struct FitSetup {
    pipeline: PipelineConfig,
    density: DesignDensity,
    innovation: Innovation,
    f1_known: bool,
}

fn fit_setup(c: &Common, model: Option<&Model>, data: &Dataset) -> Result<FitSetup> {
    let density = model.map_or(DesignDensity::Uniform, |m| m.density.clone());
    let innovation = if c.nonsym {
        let coeffs = match model {
            Some(m) => (m.shape.f1(), m.shape.g1()),
            None => harmonic_moments(data, &density)?,
        };
        Innovation::select(true, Some(coeffs))?
    } else {
        Innovation::Symmetric
    };
    let sign_mode = match c.sign_mode {
        SignArg::Dual => SignMode::DualRun,
        SignArg::Known => {
            let m = model.ok_or_else(|| Error::InvalidParams("--sign-mode known needs --config".into()))?;
            if c.nonsym {
                SignMode::Known(m.params.a.iter().map(|a| a.signum()).collect())
            } else {
                SignMode::Known(m.params.signs(m.shape.f1()))
            }
        }
    };
    let f1_mode = model.map_or(F1Mode::Estimated, |m| F1Mode::Known(m.shape.f1()));
    Ok(FitSetup {
        pipeline: PipelineConfig {
            rm: RmConfig { sign_mode, innovation, ..RmConfig::default() },
            f1_mode,
            shape: None,
            record_trajectories: false,
        },
        density,
        innovation,
        f1_known: model.is_some(),
    })
}

fn fit(c: &Common) -> Result<()> {
    let model = optional_model(c)?;
    let data = read_input(c)?;
    let mut setup = fit_setup(c, model.as_ref(), &data)?;
    setup.pipeline.record_trajectories = true;
    let est = fit_dataset(&data, &setup.density, setup.pipeline)?;
    out_dir(&c.output)?;
    io::write_json(&c.output.join("snapshot.json"), &est.snapshot())?;
    let traj = est.trajectories().expect("trajectories recorded");
    io::write_trajectories(File::create(c.output.join("trajectory.csv"))?, traj)?;
    Ok(())
}

fn plug_in(est: &RecursiveEstimator, innovation: Innovation) -> Result<PlugIn> {
    Ok(PlugIn {
        theta_hat: est.theta_hat(),
        a_hat: est.a_hat()?,
        signs: est.signs(),
        f1: est.f1_used().ok_or(Error::InsufficientData { needed: 1, got: 0 })?,
        innovation,
    })
}

fn ci(c: &Common) -> Result<()> {
    if c.reps > 1 || c.input.is_none() {
        return ci_sweep(c);
    }
    let model = optional_model(c)?;
    let data = read_input(c)?;
    let setup = fit_setup(c, model.as_ref(), &data)?;
    let est = fit_dataset(&data, &setup.density, setup.pipeline)?;
    let plug = plug_in(&est, setup.innovation)?;
    let cov = covariance_report(&data, &setup.density, &plug)?;
    let rep = report(&cov, &est.v_hat(), &plug.theta_hat, &plug.a_hat, setup.f1_known, c.level)?;
    out_dir(&c.output)?;
    io::write_json(&c.output.join("report.json"), &rep)?;
    Ok(())
}

#[derive(Serialize)]
struct SweepRow {
    seed: u64,
    parameter: &'static str,
    component: usize,
    truth: f64,
    estimate: f64,
    lo: f64,
    hi: f64,
    covered: bool,
}

/// Simulates `reps` datasets, fits each and records every interval.
fn ci_sweep(c: &Common) -> Result<()> {
    let model = require_model(c, "a replication sweep")?;
    let base = c.seed.unwrap_or(model.cfg.seed);
    let rows = (0..c.reps)
        .into_par_iter()
        .map(|r| -> Result<Vec<SweepRow>> {
            let seed = base + r;
            let data =
                shapeinv::simulate(&model.params, &model.shape, &model.density, &model.cfg.sigma, model.cfg.n, seed)?;
            let setup = fit_setup(c, Some(&model), &data)?;
            let est = fit_dataset(&data, &setup.density, setup.pipeline)?;
            let plug = plug_in(&est, setup.innovation)?;
            let cov = covariance_report(&data, &setup.density, &plug)?;
            let rep = report(&cov, &est.v_hat(), &plug.theta_hat, &plug.a_hat, setup.f1_known, c.level)?;
            let mut out = Vec::new();
            for (name, truth, est, ints) in [
                ("v", &model.params.v, est.v_hat(), &rep.intervals.v),
                ("theta", &model.params.theta, plug.theta_hat.clone(), &rep.intervals.theta),
                ("a", &model.params.a, plug.a_hat.clone(), &rep.intervals.a),
            ] {
                for (j, iv) in ints.iter().enumerate() {
                    out.push(SweepRow {
                        seed,
                        parameter: name,
                        component: j + 1,
                        truth: truth[j],
                        estimate: est[j],
                        lo: iv.lo,
                        hi: iv.hi,
                        covered: iv.contains(truth[j]),
                    });
                }
            }
            Ok(out)
        })
        .collect::<Result<Vec<_>>>()?;
    out_dir(&c.output)?;
    let mut w = csv::Writer::from_path(c.output.join("summary.csv"))?;
    for row in rows.into_iter().flatten() {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

fn shape(c: &Common) -> Result<()> {
    let model = optional_model(c)?;
    let data = read_input(c)?;
    let mut setup = fit_setup(c, model.as_ref(), &data)?;
    let shape_cfg = ShapeConfig { alpha: c.alpha, kernel: KernelKind::Uniform, grid_points: c.grid_points, ..Default::default() };
    let mut nw = shape_cfg.build(None)?;
    nw.symmetrize = !c.nonsym;
    setup.pipeline.shape = Some(nw);
    let est = fit_dataset(&data, &setup.density, setup.pipeline)?;
    let (nw_cfg, _) = est.shape_state().expect("shape enabled");
    let grid = nw_cfg.grid.clone();
    let values = est.shape_estimate()?;
    let a_hat = est.a_hat()?;
    let theta_hat = est.theta_hat();

    let sigma = match &model {
        Some(m) => m.cfg.sigma.clone(),
        None => noise_variance_estimate(&data)?.into_iter().map(f64::sqrt).collect(),
    };
    let nu2 = nw_cfg.kernel.nu2();
    let with_ci = !c.nonsym && c.alpha > 1.0 / 3.0 && sigma.iter().all(|s| *s > 0.0);
    if !with_ci {
        log::warn!("confidence columns omitted (non-symmetric mode, alpha <= 1/3 or zero noise)");
    }
    let inputs = ShapeVarianceInputs { a: &a_hat, theta: &theta_hat, sigma: &sigma, density: &setup.density };
    let rows = grid
        .iter()
        .zip(&values)
        .map(|(&x, f)| {
            let interval = match (with_ci, f) {
                (true, Some(f)) => {
                    let w = nw_cfg.weights.weights(x, a_hat.len())?;
                    let var = nw_variance(x, c.alpha, nu2, &w, inputs)?;
                    Some(ci_shape(*f, var, data.n(), c.alpha, c.level)?)
                }
                _ => None,
            };
            Ok(GridRow::new(x, *f, interval))
        })
        .collect::<shapeinv::Result<Vec<_>>>()?;
    out_dir(&c.output)?;
    io::write_grid(File::create(c.output.join("grid.csv"))?, &rows)?;
    Ok(())
}

#[derive(Serialize)]
struct QslOutput {
    n: usize,
    qsl_v: Matrix,
    gamma_v: Matrix,
    relative_frobenius_v: f64,
    qsl_theta: Matrix,
    sigma_theta: Matrix,
    relative_frobenius_theta: f64,
    stability: f64,
}

fn qsl(c: &Common) -> Result<()> {
    let model = require_model(c, "the quadratic strong law diagnostic")?;
    let data = match &c.input {
        Some(_) => read_input(c)?,
        None => shapeinv::simulate(
            &model.params,
            &model.shape,
            &model.density,
            &model.cfg.sigma,
            model.cfg.n,
            c.seed.unwrap_or(model.cfg.seed),
        )?,
    };
    let mut setup = fit_setup(c, Some(&model), &data)?;
    setup.pipeline.record_trajectories = true;
    let est = fit_dataset(&data, &setup.density, setup.pipeline)?;
    let traj = est.trajectories().expect("trajectories recorded");
    let f1 = model.shape.f1();
    let gamma_v = gamma_v_estimate(&data, &setup.density)?;
    let phi = phi_theta_estimate(&data, &est.theta_hat(), &est.signs(), &setup.density)?;
    let sigma_theta = sigma_theta_from_phi(&phi, &est.a_hat()?, f1)?;
    let qsl_v = qsl_diagnostic(&traj.v, &model.params.v)?;
    let qsl_theta = qsl_diagnostic(&traj.theta, &model.params.theta)?;
    let out = QslOutput {
        n: data.n(),
        relative_frobenius_v: relative_frobenius(&qsl_v, &gamma_v),
        relative_frobenius_theta: relative_frobenius(&qsl_theta, &sigma_theta),
        qsl_v,
        gamma_v,
        qsl_theta,
        sigma_theta,
        stability: stability_value(&model.params.a, f1),
    };
    out_dir(&c.output)?;
    io::write_json(&c.output.join("qsl.json"), &out)?;
    Ok(())
}

fn ecg_segment(a: &EcgArgs) -> Result<()> {
    let signal = io::read_signal(File::open(&a.input).with_context(|| format!("reading {}", a.input.display()))?, a.rate)?;
    let beats = ecg::segment(&signal, a.min_sep, a.threshold)?;
    out_dir(&a.output)?;
    io::write_beats(File::create(a.output.join("beats.csv"))?, &beats)?;
    log::info!("{} beats of {} samples", beats.p(), beats.n());
    Ok(())
}

#[derive(Serialize)]
struct Selection<'a> {
    reference: usize,
    scores: &'a [f64],
    residual_variance: Vec<f64>,
    offsets: &'a [f64],
}

fn ecg_fit(a: &EcgArgs) -> Result<()> {
    let beats = io::read_beats(File::open(&a.input).with_context(|| format!("reading {}", a.input.display()))?)?;
    let cfg = EcgFitConfig {
        alpha: a.alpha,
        grid_points: a.grid_points,
        seed: a.seed,
        warm_start: !a.no_warm_start,
        ..EcgFitConfig::default()
    };
    let sel = ecg::select_reference(&beats, &cfg)?;
    let fit = ecg::fit_with_reference(&beats, sel.reference, &cfg)?;
    let snapshot = Snapshot {
        n: beats.n(),
        v_hat: fit.v_hat.clone(),
        theta_hat: fit.theta_hat.clone(),
        a_hat: Some(fit.a_hat.clone()),
        f1_hat: Some(fit.f1),
        truncations: fit.truncations.clone(),
    };
    out_dir(&a.output)?;
    io::write_json(&a.output.join("snapshot.json"), &snapshot)?;
    io::write_json(
        &a.output.join("selection.json"),
        &Selection {
            reference: sel.reference,
            scores: &sel.scores,
            residual_variance: ecg::residual_variance(&beats, &fit),
            offsets: &fit.offsets,
        },
    )?;
    let rows: Vec<GridRow> =
        fit.shape.grid.iter().zip(&fit.shape.values).map(|(&x, &f)| GridRow::new(x, Some(f), None)).collect();
    io::write_grid(File::create(a.output.join("grid.csv"))?, &rows)?;
    let mut w = csv::Writer::from_path(a.output.join("reconstruction.csv"))?;
    w.write_record(["beat", "sample", "x", "value", "reconstruction"])?;
    for (b, beat) in beats.beats.iter().enumerate() {
        for (k, v) in beat.iter().enumerate() {
            let x = beats.x[k];
            let rec = ecg::reconstruct(&fit, b, x) + fit.offsets[b];
            w.write_record([b.to_string(), k.to_string(), x.to_string(), v.to_string(), rec.to_string()])?;
        }
    }
    w.flush()?;
    if beats.p() == 0 {
        bail!(Error::NoBeatsDetected);
    }
    Ok(())
}
