//! End-to-end acceptance checks. Each test prints one `criterion N: PASS|FAIL`
//! line with the measured values, then asserts.

mod common;

use std::io::Write;

use proptest::prelude::*;
use proptest::test_runner::{Config, TestRunner};
use rayon::prelude::*;

use shapeinv::asymptotics::{
    ci_shape, covariance_report, gamma_v_estimate, noise_variance_estimate, nw_variance, phi_theta_estimate, qsl_diagnostic,
    relative_frobenius, report, sigma_theta_from_phi, stability_value, Matrix, PlugIn, ShapeVarianceInputs,
};
use shapeinv::ecg::{fit_with_reference, reconstruct, select_reference, EcgFitConfig};
use shapeinv::estimators::{rm_project, Innovation, RmConfig, RobbinsMonro, SignMode};
use shapeinv::pipeline::fit_dataset;
use shapeinv::scenario::Benchmark;
use shapeinv::shape::{uniform_grid, NWConfig, NWState, WeightRule};
use shapeinv::stats::median;
use shapeinv::{simulate, DesignDensity, ModelParams, ShapeSpec};

use common::{max_abs_diff, synthetic_beats};

// Written to the process stdout directly so the line survives test output capture.
fn verdict(criterion: u32, pass: bool, detail: &str) {
    let line = format!("criterion {criterion}: {} {detail}\n", if pass { "PASS" } else { "FAIL" });
    let mut out = std::io::stdout().lock();
    out.write_all(line.as_bytes()).unwrap();
    out.flush().unwrap();
    assert!(pass, "criterion {criterion} failed: {detail}");
}

fn within_rel(x: f64, target: f64, tol: f64) -> bool {
    (x - target).abs() <= tol * target.abs()
}

fn benchmark_weights(p: usize) -> Vec<f64> {
    vec![1.0 / p as f64; p]
}

#[test]
fn criterion_01_variance_table() {
    let start = std::time::Instant::now();
    let b = Benchmark::new();
    let w = benchmark_weights(b.p());
    let inputs = ShapeVarianceInputs { a: &b.params.a, theta: &b.params.theta, sigma: &b.sigma, density: &b.density };
    let table = [
        (0.0, 0.0166),
        (0.1, 0.0083),
        (0.25, 0.0083),
        (0.32, 0.0086),
        (0.35, 0.0099),
        (0.40, 0.0108),
        (0.48, 0.0114),
        (0.5, 0.0114),
    ];
    let mut worst: f64 = 0.0;
    for (x, expected) in table {
        for xs in [x, -x] {
            let got = nw_variance(xs, 0.9, 0.5, &w, inputs).unwrap();
            worst = worst.max((got - expected).abs());
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    verdict(1, worst <= 2e-4 && elapsed < 1.0, &format!("max deviation {worst:.2e}, {elapsed:.3}s"));
}

#[test]
fn criterion_02_single_curve_constants() {
    let inputs = ShapeVarianceInputs { a: &[1.0], theta: &[0.0], sigma: &[1.0], density: &DesignDensity::Uniform };
    let off = nw_variance(0.2, 0.9, 0.5, &[1.0], inputs).unwrap();
    let at0 = nw_variance(0.0, 0.9, 0.5, &[1.0], inputs).unwrap();
    let err = (off - 5.0 / 38.0).abs().max((at0 - 5.0 / 19.0).abs());
    verdict(2, err <= 1e-12, &format!("x!=0 {off:.15}, x=0 {at0:.15}, error {err:.1e}"));
}

#[test]
fn criterion_03_interval_lengths() {
    let b = Benchmark::new();
    let n = 2000;
    let lengths: Vec<[f64; 5]> = (0..100u64)
        .into_par_iter()
        .map(|seed| {
            let data = b.simulate(n, seed).unwrap();
            let est = fit_dataset(&data, &b.density, b.pipeline(true, Some(NWConfig::default()))).unwrap();
            let (theta, a, v) = (est.theta_hat(), est.a_hat().unwrap(), est.v_hat());
            let plug = PlugIn {
                theta_hat: theta.clone(),
                a_hat: a.clone(),
                signs: est.signs(),
                f1: b.f1(),
                innovation: Innovation::Symmetric,
            };
            let cov = covariance_report(&data, &b.density, &plug).unwrap();
            let rep = report(&cov, &v, &theta, &a, true, 0.95).unwrap();

            let f = est.shape_estimate().unwrap();
            let k0 = f.len() / 2;
            let sigma: Vec<f64> = noise_variance_estimate(&data).unwrap().iter().map(|s| s.sqrt()).collect();
            let nu2 = 0.5;
            let w = benchmark_weights(b.p());
            let inputs = ShapeVarianceInputs { a: &a, theta: &theta, sigma: &sigma, density: &b.density };
            let k = ci_shape(f[k0].unwrap(), nw_variance(0.0, 0.9, nu2, &w, inputs).unwrap(), n, 0.9, 0.95).unwrap();
            let single =
                ShapeVarianceInputs { a: &a[..1], theta: &theta[..1], sigma: &sigma[..1], density: &b.density };
            let j = ci_shape(0.0, nw_variance(0.09, 0.9, nu2, &[1.0], single).unwrap(), n, 0.9, 0.95).unwrap();
            [
                rep.intervals.v[1].length(),
                rep.intervals.theta[2].length(),
                rep.intervals.a[3].length(),
                k.length(),
                j.length(),
            ]
        })
        .collect();
    let med = |c: usize| median(&mut lengths.iter().map(|l| l[c]).collect::<Vec<_>>());
    let checks = [
        ("v2", med(0), 0.5612, 0.30),
        ("theta3", med(1), 0.1437, 0.30),
        ("a4", med(2), 0.6001, 0.30),
        ("K_n(0)", med(3), 0.3460, 0.10),
        ("J_n", med(4), 0.9723, 0.10),
    ];
    let mut pass = true;
    let mut detail = Vec::new();
    for (name, got, target, tol) in checks {
        let ok = within_rel(got, target, tol);
        pass &= ok;
        detail.push(format!("{name} {got:.4} vs {target} [{}]", if ok { "ok" } else { "out" }));
    }
    verdict(3, pass, &detail.join(", "));
}

fn max_errors(b: &Benchmark, n: usize, seed: u64) -> [f64; 4] {
    let data = b.simulate(n, seed).unwrap();
    let est = fit_dataset(&data, &b.density, b.pipeline(true, None)).unwrap();
    [
        max_abs_diff(&est.v_hat(), &b.params.v),
        max_abs_diff(&est.theta_hat(), &b.params.theta),
        max_abs_diff(&est.a_hat().unwrap(), &b.params.a),
        (est.f1_hat().unwrap() - b.f1()).abs(),
    ]
}

#[test]
fn criterion_04_consistency() {
    let b = Benchmark::new();
    let errs: Vec<Vec<[f64; 4]>> = [500, 2000, 8000]
        .iter()
        .map(|&n| (0..100u64).into_par_iter().map(|s| max_errors(&b, n, s)).collect())
        .collect();
    let thresholds = [("v", 0.15), ("theta", 0.05), ("a", 0.2), ("f1", 0.05)];
    let mut pass = true;
    let mut detail = Vec::new();
    for (c, (name, t)) in thresholds.iter().enumerate() {
        let hits = errs[1].iter().filter(|e| e[c] < *t).count();
        let meds: Vec<f64> = errs.iter().map(|e| median(&mut e.iter().map(|r| r[c]).collect::<Vec<_>>())).collect();
        let monotone = meds[0] > meds[1] && meds[1] > meds[2];
        pass &= hits >= 90 && monotone;
        detail.push(format!(
            "{name} {hits}/100 medians {:.4}>{:.4}>{:.4}{}",
            meds[0],
            meds[1],
            meds[2],
            if monotone { "" } else { " (not monotone)" }
        ));
    }
    verdict(4, pass, &detail.join("; "));
}

#[test]
fn criterion_05_coverage() {
    let b = Benchmark::new();
    let reps = 500u64;
    let covered: Vec<Vec<bool>> = (0..reps)
        .into_par_iter()
        .map(|seed| {
            let data = b.simulate(2000, 10_000 + seed).unwrap();
            let est = fit_dataset(&data, &b.density, b.pipeline(true, None)).unwrap();
            let (theta, a, v) = (est.theta_hat(), est.a_hat().unwrap(), est.v_hat());
            let plug = PlugIn {
                theta_hat: theta.clone(),
                a_hat: a.clone(),
                signs: est.signs(),
                f1: b.f1(),
                innovation: Innovation::Symmetric,
            };
            let cov = covariance_report(&data, &b.density, &plug).unwrap();
            let rep = report(&cov, &v, &theta, &a, true, 0.95).unwrap();
            let mut out = Vec::new();
            for (ints, truth) in [
                (&rep.intervals.v, &b.params.v),
                (&rep.intervals.theta, &b.params.theta),
                (&rep.intervals.a, &b.params.a),
            ] {
                out.extend(ints.iter().zip(truth.iter()).map(|(i, t)| i.contains(*t)));
            }
            out
        })
        .collect();
    let m = covered[0].len();
    let rates: Vec<f64> =
        (0..m).map(|c| covered.iter().filter(|r| r[c]).count() as f64 / reps as f64).collect();
    let (lo, hi) = rates.iter().fold((1.0f64, 0.0f64), |(l, h), r| (l.min(*r), h.max(*r)));
    let pass = rates.iter().all(|r| (0.90..=0.99).contains(r));
    verdict(5, pass, &format!("{reps} replications, coverage range [{lo:.3}, {hi:.3}] over {m} components"));
}

fn mean_matrix(ms: &[Matrix]) -> Matrix {
    let p = ms[0].len();
    let mut out = vec![vec![0.0; p]; p];
    for m in ms {
        for i in 0..p {
            for j in 0..p {
                out[i][j] += m[i][j] / ms.len() as f64;
            }
        }
    }
    out
}

#[test]
fn criterion_06_quadratic_strong_law() {
    let b = Benchmark::new();
    let n = 100_000;
    let paths = 20u64;
    let runs: Vec<[Matrix; 4]> = (0..paths)
        .into_par_iter()
        .map(|seed| {
            let data = b.simulate(n, 1000 + seed).unwrap();
            let mut cfg = b.pipeline(true, None);
            cfg.record_trajectories = true;
            let est = fit_dataset(&data, &b.density, cfg).unwrap();
            let traj = est.trajectories().unwrap();
            let phi = phi_theta_estimate(&data, &est.theta_hat(), &est.signs(), &b.density).unwrap();
            [
                qsl_diagnostic(&traj.v, &b.params.v).unwrap(),
                gamma_v_estimate(&data, &b.density).unwrap(),
                qsl_diagnostic(&traj.theta, &b.params.theta).unwrap(),
                sigma_theta_from_phi(&phi, &est.a_hat().unwrap(), b.f1()).unwrap(),
            ]
        })
        .collect();
    let avg = |k: usize| mean_matrix(&runs.iter().map(|r| r[k].clone()).collect::<Vec<_>>());
    let dv = relative_frobenius(&avg(0), &avg(1));
    let dt = relative_frobenius(&avg(2), &avg(3));
    let single_v = runs.iter().filter(|r| relative_frobenius(&r[0], &r[1]) <= 0.3).count();
    let single_t = runs.iter().filter(|r| relative_frobenius(&r[2], &r[3]) <= 0.3).count();
    let stab = stability_value(&b.params.a, b.f1());
    let exact = stab == 2.0 * std::f64::consts::PI && stab > 1.0;
    verdict(
        6,
        dv <= 0.3 && dt <= 0.3 && exact,
        &format!(
            "mean over {paths} paths: v {dv:.3}, theta {dt:.3}; single paths within 0.3: v {single_v}/{paths}, theta {single_t}/{paths}; stability {stab}"
        ),
    );
}

#[test]
fn criterion_07_finite_truncation() {
    let b = Benchmark::new();
    let n = 100_000;
    let late: Vec<(u64, u64)> = (0..50u64)
        .into_par_iter()
        .map(|seed| {
            let data = b.simulate(n, 5000 + seed).unwrap();
            let cfg = RmConfig { sign_mode: SignMode::Known(b.signs()), ..RmConfig::default() };
            let mut rm = RobbinsMonro::new(b.p(), cfg).unwrap();
            let mut half = 0;
            for (i, (x, y)) in data.rows().enumerate() {
                if i == n / 2 {
                    half = rm.total_truncations();
                }
                rm.step(x, y, &b.density).unwrap();
            }
            (half, rm.total_truncations() - half)
        })
        .collect();
    let bad = late.iter().filter(|(_, l)| *l > 0).count();
    let total: u64 = late.iter().map(|(h, _)| h).sum();
    verdict(7, bad == 0, &format!("{bad}/50 runs truncated in the second half; {total} truncations in first halves"));
}

#[test]
fn criterion_08_dual_run() {
    let b = Benchmark::new();
    let agree = (0..100u64)
        .into_par_iter()
        .filter(|&seed| {
            let data = b.simulate(2000, 20_000 + seed).unwrap();
            let known = fit_dataset(&data, &b.density, b.pipeline(true, None)).unwrap().theta_hat();
            let dual = fit_dataset(&data, &b.density, b.pipeline(false, None)).unwrap().theta_hat();
            max_abs_diff(&known, &dual) <= 0.02
        })
        .count();
    verdict(8, agree >= 90, &format!("{agree}/100 seeds within 0.02"));
}

#[test]
fn criterion_09_ecg_round_trip() {
    let hits = (0..100u64)
        .into_par_iter()
        .filter(|&seed| {
            let s = synthetic_beats(8, 500, 0.1, seed);
            let cfg = EcgFitConfig { seed, ..EcgFitConfig::default() };
            select_reference(&s.beats, &cfg).unwrap().reference == s.reference
        })
        .count();
    let errors: Vec<f64> = (0..20u64)
        .into_par_iter()
        .map(|seed| {
            let s = synthetic_beats(8, 4000, 0.0, 500 + seed);
            let cfg = EcgFitConfig { seed, ..EcgFitConfig::default() };
            let fit = fit_with_reference(&s.beats, s.reference, &cfg).unwrap();
            let mut worst: f64 = 0.0;
            for (j, beat) in s.beats.beats.iter().enumerate() {
                for (&x, &y) in s.beats.x.iter().zip(beat) {
                    worst = worst.max((reconstruct(&fit, j, x) + fit.offsets[j] - y).abs());
                }
            }
            worst
        })
        .collect();
    let sup = errors.iter().cloned().fold(0.0, f64::max);
    verdict(
        9,
        hits >= 80 && sup < 0.1,
        &format!("reference recovered {hits}/100; noiseless sup error {sup:.4} (max over 20 seeds)"),
    );
}

#[test]
fn criterion_10_property_suites() {
    let cases = 10_000;
    let runner = || TestRunner::new(Config { cases, failure_persistence: None, ..Config::default() });
    let mut failures = Vec::new();

    let projection = runner()
        .run(&(-10.0f64..10.0, -10.0f64..10.0), |(x, y)| {
            let px = rm_project(x);
            prop_assert_eq!(rm_project(px), px);
            prop_assert!(px.abs() <= 0.25);
            prop_assert!((px - rm_project(y)).abs() <= (x - y).abs());
            Ok(())
        });
    failures.extend(projection.err().map(|e| format!("projection: {e}")));

    let grid = uniform_grid(51);
    let weights = runner()
        .run(
            &(
                prop::collection::vec((0.2f64..3.0, -0.2f64..0.2, 0.1f64..2.0), 1..6),
                -0.5f64..=0.5,
            ),
            |(curves, x)| {
                let a: Vec<f64> = curves.iter().map(|c| c.0).collect();
                let theta: Vec<f64> = curves.iter().map(|c| c.1).collect();
                let sigma: Vec<f64> = curves.iter().map(|c| c.2).collect();
                let p = a.len();
                let rule = WeightRule::Optimal { a, theta, sigma, density: DesignDensity::Uniform };
                let w = rule.weights(x, p).unwrap();
                let wm = rule.weights(-x, p).unwrap();
                prop_assert!((w.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
                prop_assert!(w.iter().all(|v| *v >= 0.0));
                prop_assert_eq!(&w, &wm);
                let u = WeightRule::Uniform.weights(x, p).unwrap();
                prop_assert!((u.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
                prop_assert_eq!(u, WeightRule::Uniform.weights(-x, p).unwrap());
                Ok(())
            },
        );
    failures.extend(weights.err().map(|e| format!("weights: {e}")));

    let cfg = NWConfig { grid: grid.clone(), ..NWConfig::default() };
    let den = runner()
        .run(&prop::collection::vec((-0.5f64..0.5, -3.0f64..3.0), 1..20), |obs| {
            let mut s = NWState::new(1, &cfg).unwrap();
            let mut prev: Vec<f64> = (0..grid.len()).map(|k| s.den(k, 0)).collect();
            for (i, (x, y)) in obs.iter().enumerate() {
                s.update(i + 1, *x, &[*y], &[0.0], &[0.0], &cfg).unwrap();
                let den: Vec<f64> = (0..grid.len()).map(|k| s.den(k, 0)).collect();
                prop_assert!(den.iter().zip(&prev).all(|(d, p)| d >= p));
                prev = den;
            }
            Ok(())
        });
    failures.extend(den.err().map(|e| format!("den monotonicity: {e}")));

    let sim = runner()
        .run(&(prop::collection::vec(-2.0f64..2.0, 2..4), 3usize..40, any::<u64>()), |(v, n, seed)| {
            let p = v.len();
            let theta: Vec<f64> = (0..p).map(|j| if j == 0 { 0.0 } else { 0.05 * j as f64 }).collect();
            let a: Vec<f64> = (0..p).map(|j| 1.0 + j as f64).collect();
            let params = ModelParams::new(v, theta, a).unwrap();
            let shape = ShapeSpec::fourier_cosine(vec![1.0, 0.5]).unwrap();
            let sigma = vec![1.0; p];
            let d1 = simulate(&params, &shape, &DesignDensity::Uniform, &sigma, n, seed).unwrap();
            let d2 = simulate(&params, &shape, &DesignDensity::Uniform, &sigma, n, seed).unwrap();
            prop_assert_eq!(d1.x(), d2.x());
            prop_assert_eq!(d1.rows().map(|(_, y)| y.to_vec()).collect::<Vec<_>>(), d2.rows().map(|(_, y)| y.to_vec()).collect::<Vec<_>>());
            let g = gamma_v_estimate(&d1, &DesignDensity::Uniform).unwrap();
            for i in 0..p {
                prop_assert!(g[i][i] >= 0.0);
                for j in 0..p {
                    prop_assert!((g[i][j] - g[j][i]).abs() <= 1e-12);
                }
            }
            Ok(())
        });
    failures.extend(sim.err().map(|e| format!("determinism/covariance: {e}")));

    let detail = if failures.is_empty() { String::new() } else { format!("; {}", failures.join("; ")) };
    verdict(10, failures.is_empty(), &format!("5 property suites, {cases} cases each{detail}"));
}
