//! Weighted chi-square mixtures `Σ λ_j N_j²` and their distribution function.

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{config, Error, Result};
use crate::linalg::SymMatrix;
use crate::perturbation::QuadraticSpec;
use crate::quadrature::{integrate, wynn_epsilon, Estimate};
use crate::rng::StreamRng;
use crate::scalar::Scalar;

/// Absolute accuracy requested from [`ChiSquareMixture::cdf`] by default.
pub const DEFAULT_CDF_TOLERANCE: f64 = 1e-6;

const MAX_PANELS: usize = 400;
const MAX_INTERVALS: usize = 400;

/// Where a covariance matrix came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CovarianceSource {
    Analytic,
    Empirical,
}

/// Covariance `Σ` of `Y_1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Scalar + Serialize", deserialize = "T: Scalar + Deserialize<'de>"))]
pub struct CovarianceEstimate<T> {
    pub matrix: SymMatrix<T>,
    pub source: CovarianceSource,
}

impl<T: Scalar> CovarianceEstimate<T> {
    pub fn analytic(matrix: SymMatrix<T>) -> Result<Self> {
        matrix.sqrt_psd(T::lit(1e-10))?;
        Ok(Self { matrix, source: CovarianceSource::Analytic })
    }

    /// Sample covariance (divisor `n − 1`) of mean-zero vectors.
    pub fn empirical<Y: AsRef<[T]>>(samples: &[Y]) -> Result<Self> {
        let n = samples.len();
        if n < 2 {
            return config("empirical covariance needs at least two samples");
        }
        let d = samples[0].as_ref().len();
        let mut mean = vec![T::zero(); d];
        for s in samples {
            let s = s.as_ref();
            if s.len() != d {
                return config("samples have inconsistent dimensions");
            }
            for (m, &x) in mean.iter_mut().zip(s) {
                *m = *m + x;
            }
        }
        let nf = T::from_usize_lossy(n);
        for m in &mut mean {
            *m = *m / nf;
        }
        let mut rows = vec![vec![T::zero(); d]; d];
        for s in samples {
            let s = s.as_ref();
            for i in 0..d {
                for j in 0..d {
                    rows[i][j] = rows[i][j] + (s[i] - mean[i]) * (s[j] - mean[j]);
                }
            }
        }
        let denom = T::from_usize_lossy(n - 1);
        for row in &mut rows {
            for v in row.iter_mut() {
                *v = *v / denom;
            }
        }
        Ok(Self { matrix: SymMatrix::from_rows(rows)?, source: CovarianceSource::Empirical })
    }
}

/// Law of `Σ λ_j N_j²` with i.i.d. standard normal `N_j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChiSquareMixture<T> {
    weights: Vec<T>,
    tolerance: T,
}

impl<T: Scalar> ChiSquareMixture<T> {
    /// Mixture with the given weights, which must not all vanish.
    pub fn new(weights: Vec<T>) -> Result<Self> {
        if weights.is_empty() || weights.iter().all(|w| w.is_zero()) {
            return config("mixture needs at least one nonzero weight");
        }
        Self::with_degenerate(weights)
    }

    /// Mixture that may be the point mass at zero (all weights zero).
    pub fn with_degenerate(mut weights: Vec<T>) -> Result<Self> {
        if weights.iter().any(|w| !w.is_finite()) {
            return config("mixture weights must be finite");
        }
        weights.sort_by(|a, b| b.partial_cmp(a).unwrap_or(std::cmp::Ordering::Equal));
        Ok(Self { weights, tolerance: T::lit(DEFAULT_CDF_TOLERANCE) })
    }

    pub fn with_tolerance(mut self, tolerance: T) -> Self {
        self.tolerance = tolerance;
        self
    }

    pub fn tolerance(&self) -> T {
        self.tolerance
    }

    /// Weights in descending order.
    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    pub fn is_degenerate(&self) -> bool {
        self.weights.iter().all(|w| w.is_zero())
    }

    pub fn mean(&self) -> T {
        self.weights.iter().fold(T::zero(), |acc, &w| acc + w)
    }

    pub fn variance(&self) -> T {
        T::lit(2.0) * self.weights.iter().fold(T::zero(), |acc, &w| acc + w * w)
    }

    /// `P(Σ λ_j N_j² ≤ z)`.
    pub fn cdf(&self, z: T) -> Result<T> {
        Ok(self.cdf_estimate(z)?.value)
    }

    /// Distribution function with its error estimate. Fails with
    /// [`Error::Numeric`] when the estimate exceeds the tolerance.
    pub fn cdf_estimate(&self, z: T) -> Result<Estimate<T>> {
        if z.is_nan() {
            return Err(Error::Contract("mixture cdf at NaN".into()));
        }
        let exact = |v: T| Ok(Estimate { value: v, error: T::zero() });
        if self.is_degenerate() {
            return exact(if z >= T::zero() { T::one() } else { T::zero() });
        }
        if z.is_infinite() {
            return exact(if z > T::zero() { T::one() } else { T::zero() });
        }
        let scale = self.weights.iter().fold(T::zero(), |m, w| m.max(w.abs()));
        let mut lambda: Vec<T> = self.weights.iter().filter(|w| !w.is_zero()).map(|&w| w / scale).collect();
        let mut x = z / scale;
        let flipped = x < T::zero();
        if flipped {
            for l in &mut lambda {
                *l = -*l;
            }
            x = -x;
        }
        let est = imhof(&lambda, x, self.tolerance);
        if !(est.error <= self.tolerance) {
            return Err(Error::Numeric {
                message: format!("mixture cdf at {z} did not reach tolerance {}", self.tolerance),
                achieved: est.error.to_f64().unwrap_or(f64::NAN),
            });
        }
        // P(Q ≤ z) = 1 − P(−Q ≤ −z) = 1 − P(−Q < −z) for continuous laws.
        let value = if flipped { T::one() - est.value } else { est.value };
        Ok(Estimate {
            value: value.max(T::zero()).min(T::one()),
            error: est.error,
        })
    }

    /// Smallest `z` with `cdf(z) ≥ p`, by bisection.
    pub fn quantile(&self, p: T) -> Result<T> {
        if !(p > T::zero() && p < T::one()) {
            return Err(Error::Contract(format!("quantile level must lie in (0, 1), got {p}")));
        }
        if self.is_degenerate() {
            return Ok(T::zero());
        }
        let spread = self.variance().sqrt().max(T::min_positive_value());
        let mut lo = self.mean() - spread;
        let mut hi = self.mean() + spread;
        while self.cdf(lo)? > p {
            lo = lo - (hi - lo);
        }
        while self.cdf(hi)? < p {
            hi = hi + (hi - lo);
        }
        for _ in 0..200 {
            let mid = (lo + hi) * T::lit(0.5);
            if mid <= lo || mid >= hi {
                break;
            }
            if self.cdf(mid)? < p {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(hi)
    }

    pub fn median(&self) -> Result<T> {
        self.quantile(T::lit(0.5))
    }
}

impl ChiSquareMixture<f64> {
    pub fn sample(&self, rng: &mut StreamRng) -> f64 {
        self.weights
            .iter()
            .map(|&w| {
                let n: f64 = StandardNormal.sample(rng);
                w * n * n
            })
            .sum()
    }
}

/// Eigenvalues of `Σ^{1/2} Q Σ^{1/2}` as a mixture. A zero `Q` (when allowed)
/// gives the point mass at zero.
pub fn mixture_weights<T: Scalar>(
    quadratic: &QuadraticSpec<T>,
    covariance: &CovarianceEstimate<T>,
) -> Result<ChiSquareMixture<T>> {
    quadratic.validate()?;
    if quadratic.dim() != covariance.matrix.dim() {
        return config(format!(
            "Q is {}-dimensional but Σ is {}-dimensional",
            quadratic.dim(),
            covariance.matrix.dim()
        ));
    }
    let root = covariance.matrix.sqrt_psd(T::lit(1e-10))?;
    let (mut values, _) = quadratic.q.congruence(&root)?.eigen();
    let top = values.iter().fold(T::zero(), |m, v| m.max(v.abs()));
    let floor = top * T::epsilon() * T::lit(16.0) * T::from_usize_lossy(values.len().max(1));
    for v in &mut values {
        if v.abs() <= floor {
            *v = T::zero();
        }
    }
    ChiSquareMixture::with_degenerate(values)
}

/// Phase `θ(u)` and amplitude `u·ρ(u)` of the inversion integrand.
#[inline]
fn phase<T: Scalar>(lambda: &[T], x: T, u: T) -> T {
    let half = T::lit(0.5);
    lambda.iter().fold(T::zero(), |acc, &l| acc + (l * u).atan()) * half - half * x * u
}

#[inline]
fn integrand<T: Scalar>(lambda: &[T], x: T, u: T) -> T {
    let half = T::lit(0.5);
    if u.is_zero() {
        return half * (lambda.iter().fold(T::zero(), |a, &l| a + l) - x);
    }
    let mut theta = T::zero();
    let mut log_rho = T::zero();
    for &l in lambda {
        let lu = l * u;
        theta = theta + lu.atan();
        log_rho = log_rho + (lu * lu).ln_1p();
    }
    theta = theta * half - half * x * u;
    theta.sin() / (u * (log_rho * T::lit(0.25)).exp())
}

/// Integral of the integrand over `[e^lo, e^hi]` in the variable `t = ln u`.
fn log_segment<T: Scalar>(lambda: &[T], x: T, lo: T, hi: T, tol: T) -> Estimate<T> {
    integrate(
        |t: T| {
            let u = t.exp();
            integrand(lambda, x, u) * u
        },
        lo,
        hi,
        tol,
        MAX_INTERVALS,
    )
}

/// `u` with `θ(u) = target` on `[lo, ∞)` where `θ` is decreasing.
fn solve_phase<T: Scalar>(lambda: &[T], x: T, lo: T, target: T) -> T {
    let mut a = lo;
    let mut step = T::lit(2.0) * T::PI() / x;
    let mut b = lo + step;
    while phase(lambda, x, b) > target {
        a = b;
        step = step * T::lit(2.0);
        b = b + step;
    }
    for _ in 0..200 {
        let mid = (a + b) * T::lit(0.5);
        if mid <= a || mid >= b {
            break;
        }
        if phase(lambda, x, mid) > target {
            a = mid;
        } else {
            b = mid;
        }
    }
    (a + b) * T::lit(0.5)
}

/// Imhof inversion for weights normalised to `max |λ| = 1` and `x ≥ 0`.
fn imhof<T: Scalar>(lambda: &[T], x: T, tolerance: T) -> Estimate<T> {
    let pi = T::PI();
    // Budget on the integral scale, split over the three regions.
    let tol = tolerance * pi * T::lit(0.05);
    let k = T::from_usize_lossy(lambda.len()) * T::lit(0.5);
    let log_prod_root = lambda.iter().fold(T::zero(), |a, &l| a + l.abs().ln()) * T::lit(0.5);
    // Truncation error of the probability beyond U: 1 / (π k U^k Π|λ|^{1/2}).
    let trunc_at = |log_u: T| (-(pi * k).ln() - k * log_u - log_prod_root).exp();
    let log_u_trunc = (-(pi * k).ln() - log_prod_root - (tolerance * T::lit(0.05)).ln()) / k;

    let head = integrate(|u: T| integrand(lambda, x, u), T::zero(), T::one(), tol, MAX_INTERVALS);
    let mut value = head.value;
    let mut error = head.error;

    let u_star = if x > T::zero() {
        let inv: T = lambda.iter().filter(|l| **l > T::zero()).fold(T::zero(), |a, &l| a + l.recip());
        (inv / x).sqrt()
    } else {
        T::infinity()
    };

    if x.is_zero() || u_star.ln() >= log_u_trunc {
        // Non-oscillating or slowly oscillating: integrate up to the
        // truncation point and add the analytic tail bound.
        let upper = log_u_trunc.max(T::zero());
        let body = log_segment(lambda, x, T::zero(), upper, tol);
        value = value + body.value;
        error = error + body.error + trunc_at(upper) * pi;
    } else {
        let start = u_star.max(T::one());
        if start > T::one() {
            let body = log_segment(lambda, x, T::zero(), start.ln(), tol);
            value = value + body.value;
            error = error + body.error;
        }
        // Beyond `start` the phase decreases monotonically; split at the
        // points where it crosses multiples of π so each panel has one sign.
        let mut level = (phase(lambda, x, start) / pi).floor() * pi;
        let mut left = start;
        let mut right = solve_phase(lambda, x, left, level);
        let first = log_segment(lambda, x, left.ln(), right.ln(), tol);
        value = value + first.value;
        error = error + first.error;
        let panel_tol = tol * T::lit(1e-3);
        let mut sums: Vec<T> = Vec::new();
        let mut acc = T::zero();
        let mut panel_err = T::zero();
        let mut tail = Estimate { value: T::zero(), error: T::infinity() };
        for i in 0..MAX_PANELS {
            left = right;
            level = level - pi;
            right = solve_phase(lambda, x, left, level);
            let p = log_segment(lambda, x, left.ln(), right.ln(), panel_tol);
            acc = acc + p.value;
            panel_err = panel_err + p.error;
            sums.push(acc);
            if p.value.abs() < tol * T::lit(1e-6) {
                tail = Estimate { value: acc, error: p.value.abs() };
                break;
            }
            if i >= 6 {
                let w = wynn_epsilon(&sums);
                if w.error <= tol {
                    tail = w;
                    break;
                }
                tail = w;
            }
        }
        value = value + tail.value;
        error = error + tail.error + panel_err;
    }
    Estimate {
        value: T::lit(0.5) - value / pi,
        error: error / pi,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() <= tol, "{a} vs {b}");
    }

    #[test]
    fn chi_square_one_dof() {
        let m = ChiSquareMixture::new(vec![1.0]).unwrap();
        close(m.cdf(3.841_458_820_694_124).unwrap(), 0.95, 1e-6);
        close(m.cdf(0.454_936_423_119_572_7).unwrap(), 0.5, 1e-6);
    }

    #[test]
    fn chi_square_two_dof_is_exponential() {
        let m = ChiSquareMixture::new(vec![1.0, 1.0]).unwrap();
        for z in [0.1, 1.0, 2.0, 5.0, 12.0] {
            close(m.cdf(z).unwrap(), 1.0 - (-z / 2.0f64).exp(), 1e-6);
        }
    }

    #[test]
    fn all_positive_weights_vanish_at_zero() {
        let m = ChiSquareMixture::<f64>::new(vec![2.0, 0.5, 0.1]).unwrap();
        assert!(m.cdf(0.0).unwrap().abs() <= 1e-6);
        assert!(m.cdf(-1.0).unwrap() <= 1e-6);
    }

    #[test]
    fn symmetric_difference_has_median_zero() {
        let m = ChiSquareMixture::new(vec![1.0, -1.0]).unwrap();
        close(m.cdf(0.0).unwrap(), 0.5, 1e-6);
        // Difference of two χ²_1 has the Laplace-like law with density
        // K_0(|z|/2)/(2π); check symmetry instead of the Bessel form.
        close(m.cdf(1.3).unwrap() + m.cdf(-1.3).unwrap(), 1.0, 2e-6);
    }

    #[test]
    fn degenerate_is_a_step() {
        assert!(ChiSquareMixture::<f64>::new(vec![0.0]).is_err());
        let m = ChiSquareMixture::with_degenerate(vec![0.0]).unwrap();
        assert_eq!(m.cdf(-1e-9).unwrap(), 0.0);
        assert_eq!(m.cdf(0.0).unwrap(), 1.0);
    }

    #[test]
    fn weights_from_scalar_model() {
        let q = QuadraticSpec::new(SymMatrix::scalar(0.5)).unwrap();
        let s = CovarianceEstimate::analytic(SymMatrix::scalar(1.0)).unwrap();
        let m = mixture_weights(&q, &s).unwrap();
        assert_eq!(m.weights(), &[0.5]);
        close(m.mean(), 0.5, 1e-15);
        close(m.median().unwrap(), 0.5 * 0.454_936_423_119_572_7, 1e-6);
    }

    #[test]
    fn weights_sum_to_trace() {
        let q = QuadraticSpec::new(SymMatrix::from_rows(vec![vec![1.0, 0.3], vec![0.3, -0.5]]).unwrap()).unwrap();
        let s = CovarianceEstimate::analytic(SymMatrix::from_rows(vec![vec![2.0, 0.4], vec![0.4, 1.0]]).unwrap())
            .unwrap();
        let m = mixture_weights(&q, &s).unwrap();
        let trace = q.q.trace_product(&s.matrix);
        close(m.mean(), trace, 1e-12 * trace.abs().max(1.0));
        assert!(m.weights()[0] >= m.weights()[1]);
    }

    #[test]
    fn f32_mixture() {
        let m = ChiSquareMixture::new(vec![1.0f32, 1.0]).unwrap().with_tolerance(1e-4);
        let v = m.cdf(2.0).unwrap();
        assert!((v - (1.0 - (-1.0f32).exp())).abs() < 1e-4);
    }

    #[test]
    fn empirical_covariance() {
        let samples = vec![vec![1.0, 0.0], vec![-1.0, 0.0], vec![0.0, 2.0], vec![0.0, -2.0]];
        let c = CovarianceEstimate::empirical(&samples).unwrap();
        close(c.matrix.get(0, 0), 2.0 / 3.0, 1e-15);
        close(c.matrix.get(1, 1), 8.0 / 3.0, 1e-15);
        assert_eq!(c.matrix.get(0, 1), 0.0);
    }
}
