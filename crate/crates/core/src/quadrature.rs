//! Adaptive Simpson quadrature.

use crate::error::{Error, Result};

const MAX_DEPTH: u32 = 48;

/// Integrates `f` over `[a, b]` to absolute tolerance `tol`.
pub fn integrate<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> Result<f64> {
    if a == b {
        return Ok(0.0);
    }
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    let mut ok = true;
    let v = simpson_step(f, a, b, fa, fm, fb, whole, tol, MAX_DEPTH, &mut ok);
    if ok && v.is_finite() {
        Ok(v)
    } else {
        Err(Error::QuadratureFailure { tol })
    }
}

/// Integrates over consecutive panels `[breaks[k], breaks[k+1]]`, splitting the
/// tolerance evenly. Use when `f` has kinks at known abscissae.
pub fn integrate_panels<F: Fn(f64) -> f64>(f: &F, breaks: &[f64], tol: f64) -> Result<f64> {
    if breaks.len() < 2 {
        return Ok(0.0);
    }
    let per = tol / (breaks.len() - 1) as f64;
    let mut total = 0.0;
    for w in breaks.windows(2) {
        total += integrate(f, w[0], w[1], per).map_err(|_| Error::QuadratureFailure { tol })?;
    }
    Ok(total)
}

#[allow(clippy::too_many_arguments)]
fn simpson_step<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
    ok: &mut bool,
) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if delta.abs() <= 15.0 * tol {
        return left + right + delta / 15.0;
    }
    if depth == 0 || (m - a) <= f64::EPSILON * a.abs().max(1.0) {
        *ok = false;
        return left + right + delta / 15.0;
    }
    simpson_step(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1, ok)
        + simpson_step(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1, ok)
}
