#![allow(dead_code)]

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use shapeinv::ecg::{beat_grid, SegmentedBeats};

/// Peak of the raw template, reached at `x = 0`.
const TEMPLATE_PEAK: f64 = 1.75;

/// Smooth non-symmetric beat shape with unit peak at 0.
pub fn template(x: f64) -> f64 {
    let t = 2.0 * PI * x;
    (t.cos() + 0.5 * (2.0 * t).cos() + 0.3 * t.sin() + 0.25 * (3.0 * t).cos() + 0.2 * (2.0 * t).sin()) / TEMPLATE_PEAK
}

pub struct SyntheticBeats {
    pub beats: SegmentedBeats,
    pub reference: usize,
    pub theta: Vec<f64>,
    pub a: Vec<f64>,
    pub v: Vec<f64>,
}

/// `p` beats of `n` samples; one randomly placed beat is the reference
/// (`a = 1`, `theta = 0`, `v = 0`), the others are shifted by
/// `+-U(0.15, 0.2)` with alternating signs.
pub fn synthetic_beats(p: usize, n: usize, sigma: f64, seed: u64) -> SyntheticBeats {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let reference = rng.random_range(0..p);
    let x = beat_grid(n);
    let noise = Normal::new(0.0, sigma.max(f64::MIN_POSITIVE)).unwrap();
    let (mut theta, mut a, mut v) = (vec![0.0; p], vec![1.0; p], vec![0.0; p]);
    let mut beats = Vec::with_capacity(p);
    for j in 0..p {
        if j != reference {
            let s = if j % 2 == 0 { 1.0 } else { -1.0 };
            theta[j] = s * rng.random_range(0.15..0.2);
            a[j] = rng.random_range(0.8..1.3);
            v[j] = rng.random_range(-0.5..0.5);
        }
        let beat = x
            .iter()
            .map(|&xk| {
                let e = if sigma > 0.0 { noise.sample(&mut rng) } else { 0.0 };
                a[j] * template(xk - theta[j]) + v[j] + e
            })
            .collect();
        beats.push(beat);
    }
    SyntheticBeats { beats: SegmentedBeats::from_beats(beats).unwrap(), reference, theta, a, v }
}

pub fn max_abs_diff(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
}
