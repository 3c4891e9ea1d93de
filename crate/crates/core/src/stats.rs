//! Monte Carlo summaries and goodness-of-fit statistics.
//!
//! Every reduction walks its input in index order, so results do not depend
//! on how replications were scheduled.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::rng::RngStream;

/// Mean and standard error of an i.i.d. sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub n: usize,
    pub mean: f64,
    pub se: f64,
}

impl Summary {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len();
        if n == 0 {
            return Self { n, mean: f64::NAN, se: f64::NAN };
        }
        let mut mean = 0.0;
        let mut m2 = 0.0;
        for (i, &x) in values.iter().enumerate() {
            let delta = x - mean;
            mean += delta / (i + 1) as f64;
            m2 += delta * (x - mean);
        }
        let se = if n > 1 {
            (m2 / (n - 1) as f64 / n as f64).sqrt()
        } else {
            f64::INFINITY
        };
        Self { n, mean, se }
    }

    /// Mean of the sample with the standard error from `batches` batch means.
    pub fn batched(values: &[f64], batches: usize) -> Self {
        let n = values.len();
        let batches = batches.clamp(2, n.max(2));
        if n < 2 * batches {
            return Self::of(values);
        }
        let means: Vec<f64> = (0..batches)
            .map(|b| {
                let lo = b * n / batches;
                let hi = (b + 1) * n / batches;
                values[lo..hi].iter().sum::<f64>() / (hi - lo) as f64
            })
            .collect();
        let batch = Self::of(&means);
        Self {
            n,
            mean: values.iter().sum::<f64>() / n as f64,
            se: batch.se,
        }
    }
}

/// Runs `f` once per replication in parallel and returns results in
/// replication order.
pub fn replicate<T, F>(stream: RngStream, reps: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(RngStream) -> T + Sync + Send,
{
    (0..reps as u64)
        .into_par_iter()
        .map(|r| f(stream.replication(r)))
        .collect()
}

/// Asymptotic Kolmogorov critical value `c(α)` for the scaled KS statistic.
pub fn kolmogorov_critical(alpha: f64) -> f64 {
    (-(alpha / 2.0).ln() / 2.0).sqrt()
}

/// One-sample KS critical distance at level `alpha`.
pub fn ks_critical_one_sample(n: usize, alpha: f64) -> f64 {
    kolmogorov_critical(alpha) / (n as f64).sqrt()
}

/// Two-sample KS critical distance at level `alpha`.
pub fn ks_critical_two_sample(n: usize, m: usize, alpha: f64) -> f64 {
    let (n, m) = (n as f64, m as f64);
    kolmogorov_critical(alpha) * ((n + m) / (n * m)).sqrt()
}

/// One-sample KS distance of `sample` against a continuous CDF.
pub fn ks_statistic(sample: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut sorted = sample.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in sorted.iter().enumerate() {
        let f = cdf(x);
        d = d.max((i + 1) as f64 / n - f).max(f - i as f64 / n);
    }
    d
}

/// Two-sample KS distance.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> f64 {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

/// Upper bound on the KS distance between a large sample and a continuous
/// CDF that is too expensive to evaluate at every sample point.
///
/// The CDF is evaluated only at `grid` empirical quantiles; between two grid
/// points both functions are monotone, which bounds the gap in the interval.
pub fn ks_statistic_bracketed(sample: &[f64], grid: usize, cdf: impl Fn(f64) -> f64) -> f64 {
    let mut sorted = sample.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    if n == 0 {
        return 0.0;
    }
    let nf = n as f64;
    let grid = grid.clamp(1, n);
    // Knots are order statistics; the last knot is the sample maximum.
    let knots: Vec<f64> = (1..=grid).map(|k| sorted[k * n / grid - 1]).collect();
    let ecdf = |x: f64| sorted.partition_point(|&v| v <= x) as f64 / nf;
    let ecdf_left = |x: f64| sorted.partition_point(|&v| v < x) as f64 / nf;
    // Below the first knot both functions lie in [0, value at the knot].
    let mut d = ecdf_left(knots[0]).max(cdf(knots[0]));
    let mut prev_f = cdf(knots[0]);
    let mut prev_e = ecdf(knots[0]);
    d = d.max((prev_e - prev_f).abs());
    for &x in &knots[1..] {
        let f = cdf(x);
        let e = ecdf(x);
        // On [previous knot, x) each function is sandwiched between its
        // values at the two ends.
        d = d.max(ecdf_left(x) - prev_f).max(f - prev_e).max((e - f).abs());
        prev_f = f;
        prev_e = e;
    }
    d.max(1.0 - prev_f)
}

pub fn correlation(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len().min(y.len());
    if n < 2 {
        return 0.0;
    }
    let mx = x[..n].iter().sum::<f64>() / n as f64;
    let my = y[..n].iter().sum::<f64>() / n as f64;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for i in 0..n {
        let (dx, dy) = (x[i] - mx, y[i] - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        0.0
    } else {
        sxy / (sxx * syy).sqrt()
    }
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Pearson chi-square statistic of the 2×2 table formed by median splits of
/// `x` and `y`. `None` when either split is degenerate.
pub fn quadrant_chi_square(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len().min(y.len());
    let (mx, my) = (median(&x[..n]), median(&y[..n]));
    let mut table = [[0.0f64; 2]; 2];
    for i in 0..n {
        table[(x[i] > mx) as usize][(y[i] > my) as usize] += 1.0;
    }
    let rows = [table[0][0] + table[0][1], table[1][0] + table[1][1]];
    let cols = [table[0][0] + table[1][0], table[0][1] + table[1][1]];
    if rows.contains(&0.0) || cols.contains(&0.0) {
        return None;
    }
    let total = n as f64;
    let mut chi = 0.0;
    for r in 0..2 {
        for c in 0..2 {
            let expected = rows[r] * cols[c] / total;
            chi += (table[r][c] - expected).powi(2) / expected;
        }
    }
    Some(chi)
}

/// 99th percentile of χ²₁.
pub const CHI2_1_CRITICAL_1PCT: f64 = 6.634_896_601_021_214;

/// `later ≤ earlier` up to `k` combined standard errors.
pub fn not_larger(earlier: Summary, later: Summary, k: f64) -> bool {
    later.mean <= earlier.mean + k * (earlier.se.powi(2) + later.se.powi(2)).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn summary_matches_two_pass() {
        let v = [1.0, 2.0, 4.0, 8.0];
        let s = Summary::of(&v);
        assert!((s.mean - 3.75).abs() < 1e-15);
        let var = v.iter().map(|x| (x - 3.75f64).powi(2)).sum::<f64>() / 3.0;
        assert!((s.se - (var / 4.0).sqrt()).abs() < 1e-14);
    }

    #[test]
    fn ks_of_uniform_grid_is_small() {
        let n = 1000;
        let sample: Vec<f64> = (0..n).map(|i| (i as f64 + 0.5) / n as f64).collect();
        let d = ks_statistic(&sample, |x| x.clamp(0.0, 1.0));
        assert!((d - 0.5 / n as f64).abs() < 1e-12);
        let db = ks_statistic_bracketed(&sample, 50, |x| x.clamp(0.0, 1.0));
        assert!(db >= d - 1e-12 && db < 0.03);
    }

    #[test]
    fn two_sample_ks_identical_is_zero() {
        let a = [0.1, 0.5, 0.9];
        assert_eq!(ks_two_sample(&a, &a), 0.0);
        assert!((ks_two_sample(&[0.0, 1.0], &[2.0, 3.0]) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn quadrant_chi_square_detects_dependence() {
        let x: Vec<f64> = (0..400).map(|i| i as f64).collect();
        assert!(quadrant_chi_square(&x, &x).unwrap() > 100.0);
        assert!(quadrant_chi_square(&x, &vec![1.0; 400]).is_none());
    }

    #[test]
    fn kolmogorov_one_percent() {
        assert!((kolmogorov_critical(0.01) - 1.6276).abs() < 1e-3);
    }
}
