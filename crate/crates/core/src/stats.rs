//! Small numeric helpers shared by the estimators.

use statrs::distribution::{ContinuousCDF, Normal};

/// Standard normal quantile of order `p` in (0, 1).
pub fn normal_quantile(p: f64) -> f64 {
    // Normal::new(0, 1) cannot fail.
    Normal::new(0.0, 1.0).expect("standard normal").inverse_cdf(p)
}

/// Two-sided quantile `q_{(1+level)/2}`.
pub fn two_sided_quantile(level: f64) -> f64 {
    normal_quantile(0.5 * (1.0 + level))
}

/// Sample covariance (divisor `n - 1`) of the rows in `rows`.
pub fn covariance(rows: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = rows.len();
    let p = rows.first().map_or(0, Vec::len);
    let mut mean = vec![0.0; p];
    for r in rows {
        for (m, v) in mean.iter_mut().zip(r) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= n as f64;
    }
    let mut cov = vec![vec![0.0; p]; p];
    for r in rows {
        for k in 0..p {
            let dk = r[k] - mean[k];
            for l in k..p {
                cov[k][l] += dk * (r[l] - mean[l]);
            }
        }
    }
    let denom = (n.max(2) - 1) as f64;
    for k in 0..p {
        for l in k..p {
            cov[k][l] /= denom;
            cov[l][k] = cov[k][l];
        }
    }
    cov
}

pub fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantile_values() {
        assert!((normal_quantile(0.975) - 1.959_963_984_540_054).abs() < 1e-9);
        assert!(normal_quantile(0.5).abs() < 1e-12);
        assert!((normal_quantile(0.05) + 1.644_853_626_951_472_2).abs() < 1e-9);
    }

    #[test]
    fn covariance_of_two_columns() {
        let rows = vec![vec![1.0, 2.0], vec![3.0, 6.0], vec![5.0, 10.0]];
        let c = covariance(&rows);
        assert!((c[0][0] - 4.0).abs() < 1e-12);
        assert!((c[0][1] - 8.0).abs() < 1e-12);
        assert!((c[1][1] - 16.0).abs() < 1e-12);
    }
}
