//! Increment laws, the i.i.d. driving sequence and plain random-walk oracles.

use rand::Rng;
use rand_distr::{Distribution, Exp, Gamma, Normal, StandardNormal, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{config, Error, Result};
use crate::linalg::SymMatrix;
use crate::rng::{RngStream, StreamRng};
use crate::stats::{replicate, Summary};

/// Distribution of a scalar increment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum IncrementLaw {
    Exponential { rate: f64 },
    Gamma { shape: f64, rate: f64 },
    Normal { mean: f64, sd: f64 },
    Uniform { lo: f64, hi: f64 },
    /// Point mass. Arithmetic, so only admitted where a model opts in.
    Deterministic { value: f64 },
    /// Piecewise-linear quantile function through `(probabilities[i], quantiles[i])`.
    Table { probabilities: Vec<f64>, quantiles: Vec<f64> },
}

impl IncrementLaw {
    pub fn validate(&self) -> Result<()> {
        let finite = |name: &str, v: f64| {
            if v.is_finite() {
                Ok(())
            } else {
                config(format!("{name} must be finite, got {v}"))
            }
        };
        match *self {
            Self::Exponential { rate } => {
                finite("rate", rate)?;
                if rate <= 0.0 {
                    return config(format!("exponential rate must be > 0, got {rate}"));
                }
            }
            Self::Gamma { shape, rate } => {
                finite("shape", shape)?;
                finite("rate", rate)?;
                if shape <= 0.0 || rate <= 0.0 {
                    return config("gamma shape and rate must be > 0");
                }
            }
            Self::Normal { mean, sd } => {
                finite("mean", mean)?;
                finite("sd", sd)?;
                if sd <= 0.0 {
                    return config(format!("normal sd must be > 0, got {sd}"));
                }
            }
            Self::Uniform { lo, hi } => {
                finite("lo", lo)?;
                finite("hi", hi)?;
                if lo >= hi {
                    return config(format!("uniform needs lo < hi, got [{lo}, {hi}]"));
                }
            }
            Self::Deterministic { value } => finite("value", value)?,
            Self::Table { ref probabilities, ref quantiles } => {
                if probabilities.len() != quantiles.len() || probabilities.len() < 2 {
                    return config("table needs matching probability/quantile lists of length >= 2");
                }
                if probabilities[0] != 0.0 || *probabilities.last().unwrap() != 1.0 {
                    return config("table probabilities must start at 0 and end at 1");
                }
                if probabilities.windows(2).any(|w| w[1] <= w[0]) {
                    return config("table probabilities must be strictly increasing");
                }
                if quantiles.iter().any(|q| !q.is_finite()) || quantiles.windows(2).any(|w| w[1] < w[0]) {
                    return config("table quantiles must be finite and nondecreasing");
                }
                if quantiles[0] == *quantiles.last().unwrap() {
                    return config("table collapses to a point mass");
                }
            }
        }
        Ok(())
    }

    /// Parameter check plus the positive-drift requirement on an increment.
    pub fn validate_increment(&self) -> Result<()> {
        self.validate()?;
        let mu = self.mean();
        if !(mu > 0.0) {
            return config(format!("increment mean must be > 0, got {mu}"));
        }
        Ok(())
    }

    pub fn mean(&self) -> f64 {
        match *self {
            Self::Exponential { rate } => 1.0 / rate,
            Self::Gamma { shape, rate } => shape / rate,
            Self::Normal { mean, .. } => mean,
            Self::Uniform { lo, hi } => 0.5 * (lo + hi),
            Self::Deterministic { value } => value,
            Self::Table { ref probabilities, ref quantiles } => probabilities
                .windows(2)
                .zip(quantiles.windows(2))
                .map(|(p, q)| (p[1] - p[0]) * 0.5 * (q[0] + q[1]))
                .sum(),
        }
    }

    pub fn second_moment(&self) -> f64 {
        match *self {
            Self::Table { ref probabilities, ref quantiles } => probabilities
                .windows(2)
                .zip(quantiles.windows(2))
                .map(|(p, q)| (p[1] - p[0]) * (q[0] * q[0] + q[0] * q[1] + q[1] * q[1]) / 3.0)
                .sum(),
            _ => self.variance() + self.mean().powi(2),
        }
    }

    pub fn variance(&self) -> f64 {
        match *self {
            Self::Exponential { rate } => 1.0 / (rate * rate),
            Self::Gamma { shape, rate } => shape / (rate * rate),
            Self::Normal { sd, .. } => sd * sd,
            Self::Uniform { lo, hi } => (hi - lo).powi(2) / 12.0,
            Self::Deterministic { .. } => 0.0,
            Self::Table { .. } => (self.second_moment() - self.mean().powi(2)).max(0.0),
        }
    }

    pub fn is_arithmetic(&self) -> bool {
        matches!(self, Self::Deterministic { .. })
    }

    /// `sup |x|` over the support, when finite.
    pub fn sup_abs(&self) -> Option<f64> {
        match *self {
            Self::Uniform { lo, hi } => Some(lo.abs().max(hi.abs())),
            Self::Deterministic { value } => Some(value.abs()),
            Self::Table { ref quantiles, .. } => {
                Some(quantiles[0].abs().max(quantiles.last().unwrap().abs()))
            }
            _ => None,
        }
    }

    /// Rate parameter when the law is exponential.
    pub fn exponential_rate(&self) -> Option<f64> {
        match *self {
            Self::Exponential { rate } => Some(rate),
            _ => None,
        }
    }

    pub fn sampler(&self) -> Result<LawSampler> {
        self.validate()?;
        let bad = |e: &dyn std::fmt::Display| Error::Config(e.to_string());
        Ok(match *self {
            Self::Exponential { rate } => LawSampler::Exponential(Exp::new(rate).map_err(|e| bad(&e))?),
            Self::Gamma { shape, rate } => {
                LawSampler::Gamma(Gamma::new(shape, 1.0 / rate).map_err(|e| bad(&e))?)
            }
            Self::Normal { mean, sd } => LawSampler::Normal(Normal::new(mean, sd).map_err(|e| bad(&e))?),
            Self::Uniform { lo, hi } => LawSampler::Uniform(Uniform::new(lo, hi).map_err(|e| bad(&e))?),
            Self::Deterministic { value } => LawSampler::Constant(value),
            Self::Table { ref probabilities, ref quantiles } => LawSampler::Table {
                probabilities: probabilities.clone(),
                quantiles: quantiles.clone(),
            },
        })
    }
}

/// Prebuilt sampler for an [`IncrementLaw`].
#[derive(Debug, Clone)]
pub enum LawSampler {
    Exponential(Exp<f64>),
    Gamma(Gamma<f64>),
    Normal(Normal<f64>),
    Uniform(Uniform<f64>),
    Constant(f64),
    Table { probabilities: Vec<f64>, quantiles: Vec<f64> },
}

impl LawSampler {
    #[inline]
    pub fn sample(&self, rng: &mut StreamRng) -> f64 {
        match self {
            Self::Exponential(d) => d.sample(rng),
            Self::Gamma(d) => d.sample(rng),
            Self::Normal(d) => d.sample(rng),
            Self::Uniform(d) => d.sample(rng),
            Self::Constant(v) => *v,
            Self::Table { probabilities, quantiles } => {
                let u: f64 = rng.random();
                let i = probabilities.partition_point(|&p| p <= u).clamp(1, probabilities.len() - 1);
                let (p0, p1) = (probabilities[i - 1], probabilities[i]);
                let (q0, q1) = (quantiles[i - 1], quantiles[i]);
                q0 + (q1 - q0) * (u - p0) / (p1 - p0)
            }
        }
    }
}

/// Affine map `x ↦ offset + scale·x` applied to the base draw.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AffineMap {
    #[serde(default)]
    pub offset: f64,
    #[serde(default = "one")]
    pub scale: f64,
}

fn one() -> f64 {
    1.0
}

impl Default for AffineMap {
    fn default() -> Self {
        Self { offset: 0.0, scale: 1.0 }
    }
}

impl AffineMap {
    #[inline]
    pub fn apply(&self, x: f64) -> f64 {
        self.offset + self.scale * x
    }
}

/// Law of the mean-zero vector `Y_k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum VectorLaw {
    #[default]
    None,
    /// `Y_k = base_k − E(base)`, one-dimensional.
    CenteredBase,
    /// `Y_k ~ N(0, Σ)`, independent of the base draw.
    Gaussian { covariance: SymMatrix<f64> },
}

impl VectorLaw {
    pub fn dim(&self) -> usize {
        match self {
            Self::None => 0,
            Self::CenteredBase => 1,
            Self::Gaussian { covariance } => covariance.dim(),
        }
    }

    /// Analytic covariance of `Y_1` given the base law.
    pub fn covariance(&self, base: &IncrementLaw) -> SymMatrix<f64> {
        match self {
            Self::None => SymMatrix::zeros(0),
            Self::CenteredBase => SymMatrix::scalar(base.variance()),
            Self::Gaussian { covariance } => covariance.clone(),
        }
    }
}

/// One element `W_k` of the driving sequence, with the scalar features the
/// perturbation maps read from it.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Innovation {
    pub base: f64,
    pub base_centered: f64,
    /// `X_k = φ(W_k)`.
    pub increment: f64,
    pub increment_centered: f64,
    /// Auxiliary draw (inter-arrival gap in the staggered-entry model).
    pub gap: f64,
}

impl Innovation {
    /// An innovation whose base draw is also the increment.
    pub fn from_increment(x: f64) -> Self {
        Self {
            base: x,
            base_centered: x,
            increment: x,
            increment_centered: x,
            gap: 0.0,
        }
    }
}

/// Moments of the driving sequence needed to centre and scale perturbations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InnovationMoments {
    pub base_mean: f64,
    pub base_variance: f64,
    pub base_sup: Option<f64>,
    pub base_rate: Option<f64>,
    pub increment_mean: f64,
    pub increment_variance: f64,
    pub increment_sup: Option<f64>,
    pub gap_rate: Option<f64>,
}

enum VectorSampler {
    None,
    CenteredBase,
    Gaussian { root: SymMatrix<f64>, scratch_dim: usize },
}

/// Samples `W_k` and evaluates `X_k = φ(W_k)`, `Y_k = ψ(W_k)`.
pub struct Driver {
    base: LawSampler,
    map: AffineMap,
    gap: Option<LawSampler>,
    vector: VectorSampler,
    moments: InnovationMoments,
}

impl Driver {
    pub fn new(
        base: &IncrementLaw,
        map: AffineMap,
        gap: Option<&IncrementLaw>,
        vector: &VectorLaw,
    ) -> Result<Self> {
        let base_sampler = base.sampler()?;
        if !(map.offset.is_finite() && map.scale.is_finite()) {
            return config("increment map must be finite");
        }
        let gap_sampler = gap.map(IncrementLaw::sampler).transpose()?;
        if let Some(g) = gap {
            if g.mean() <= 0.0 {
                return config("gap law must have positive mean");
            }
        }
        let vector_sampler = match vector {
            VectorLaw::None => VectorSampler::None,
            VectorLaw::CenteredBase => VectorSampler::CenteredBase,
            VectorLaw::Gaussian { covariance } => VectorSampler::Gaussian {
                root: covariance.sqrt_psd(1e-10)?,
                scratch_dim: covariance.dim(),
            },
        };
        let base_mean = base.mean();
        let moments = InnovationMoments {
            base_mean,
            base_variance: base.variance(),
            base_sup: base.sup_abs(),
            base_rate: base.exponential_rate(),
            increment_mean: map.apply(base_mean),
            increment_variance: map.scale * map.scale * base.variance(),
            increment_sup: base.sup_abs().map(|s| map.offset.abs() + map.scale.abs() * s),
            gap_rate: gap.and_then(IncrementLaw::exponential_rate),
        };
        Ok(Self {
            base: base_sampler,
            map,
            gap: gap_sampler,
            vector: vector_sampler,
            moments,
        })
    }

    pub fn moments(&self) -> &InnovationMoments {
        &self.moments
    }

    pub fn dim(&self) -> usize {
        match &self.vector {
            VectorSampler::None => 0,
            VectorSampler::CenteredBase => 1,
            VectorSampler::Gaussian { scratch_dim, .. } => *scratch_dim,
        }
    }

    /// Draws the next innovation; `y` receives `Y_k` (length [`Self::dim`]).
    #[inline]
    pub fn draw(&self, rng: &mut StreamRng, y: &mut [f64]) -> Innovation {
        let base = self.base.sample(rng);
        let gap = self.gap.as_ref().map_or(0.0, |g| g.sample(rng));
        let increment = self.map.apply(base);
        let w = Innovation {
            base,
            base_centered: base - self.moments.base_mean,
            increment,
            increment_centered: increment - self.moments.increment_mean,
            gap,
        };
        match &self.vector {
            VectorSampler::None => {}
            VectorSampler::CenteredBase => y[0] = w.base_centered,
            VectorSampler::Gaussian { root, scratch_dim } => {
                let z: Vec<f64> = (0..*scratch_dim).map(|_| StandardNormal.sample(rng)).collect();
                root.mul_vec(&z, y);
            }
        }
        w
    }
}

/// Realised increments and partial sums of a walk.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct WalkPath {
    pub increments: Vec<f64>,
    pub partial_sums: Vec<f64>,
    pub vector_increments: Option<Vec<Vec<f64>>>,
    pub vector_sums: Option<Vec<Vec<f64>>>,
}

impl WalkPath {
    pub fn len(&self) -> usize {
        self.increments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.increments.is_empty()
    }
}

/// Samples `S_1..S_n` (and `T_1..T_n` when a vector law is given).
pub fn sample_walk(
    law: &IncrementLaw,
    vector_law: Option<&VectorLaw>,
    n: usize,
    stream: RngStream,
) -> Result<WalkPath> {
    law.validate_increment()?;
    let vector_law = vector_law.unwrap_or(&VectorLaw::None);
    let driver = Driver::new(law, AffineMap::default(), None, vector_law)?;
    let d = driver.dim();
    let mut rng = stream.rng();
    let mut path = WalkPath {
        increments: Vec::with_capacity(n),
        partial_sums: Vec::with_capacity(n),
        vector_increments: (d > 0).then(|| Vec::with_capacity(n)),
        vector_sums: (d > 0).then(|| Vec::with_capacity(n)),
    };
    let mut s = 0.0;
    let mut t = vec![0.0; d];
    let mut y = vec![0.0; d];
    for _ in 0..n {
        let w = driver.draw(&mut rng, &mut y);
        s += w.increment;
        path.increments.push(w.increment);
        path.partial_sums.push(s);
        if let (Some(ys), Some(ts)) = (path.vector_increments.as_mut(), path.vector_sums.as_mut()) {
            for (ti, yi) in t.iter_mut().zip(&y) {
                *ti += yi;
            }
            ys.push(y.clone());
            ts.push(t.clone());
        }
    }
    Ok(path)
}

/// Estimate of the renewal measure `V(a, a+b]`.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowCount {
    pub count: Summary,
    /// Paths whose sum at the horizon had not yet passed `a + b`.
    pub truncated_paths: usize,
    pub warning: Option<String>,
}

/// Mean number of `n ≥ 1` with `a < S_n ≤ a + b`.
pub fn renewal_window_count(
    law: &IncrementLaw,
    a: f64,
    b: f64,
    horizon: usize,
    reps: usize,
    stream: RngStream,
) -> Result<WindowCount> {
    law.validate_increment()?;
    if !(a > 0.0 && b > 0.0) {
        return config(format!("window needs a, b > 0, got a={a}, b={b}"));
    }
    let mu = law.mean();
    let needed = 3.0 * (a + b) / mu;
    if (horizon as f64) < needed {
        return config(format!("horizon {horizon} below 3(a+b)/mu = {needed:.1}"));
    }
    let sampler = law.sampler()?;
    let per_path = replicate(stream, reps, |s| {
        let mut rng = s.rng();
        let mut sum = 0.0;
        let mut count = 0usize;
        for _ in 0..horizon {
            sum += sampler.sample(&mut rng);
            if sum > a && sum <= a + b {
                count += 1;
            }
        }
        (count as f64, sum <= a + b)
    });
    let counts: Vec<f64> = per_path.iter().map(|p| p.0).collect();
    let truncated_paths = per_path.iter().filter(|p| p.1).count();
    let warning = (truncated_paths > 0).then(|| {
        format!("{truncated_paths} of {reps} paths had not passed a+b by the horizon; counts may be low")
    });
    Ok(WindowCount {
        count: Summary::of(&counts),
        truncated_paths,
        warning,
    })
}

/// Overshoots `S_t − a` of the unperturbed walk.
#[derive(Debug, Clone, PartialEq)]
pub struct Overshoots {
    pub values: Vec<f64>,
    pub non_crossing: usize,
}

/// Simulates the first passage of the plain walk over `a`; replications
/// that do not cross within `10·(a/μ + 100)` steps are counted, not kept.
pub fn plain_overshoot(law: &IncrementLaw, a: f64, reps: usize, stream: RngStream) -> Result<Overshoots> {
    law.validate_increment()?;
    if !(a > 0.0) {
        return config(format!("level must be > 0, got {a}"));
    }
    let horizon = (10.0 * (a / law.mean() + 100.0)).ceil() as usize;
    let sampler = law.sampler()?;
    let raw = replicate(stream, reps, |s| {
        let mut rng = s.rng();
        let mut sum = 0.0;
        for _ in 0..horizon {
            sum += sampler.sample(&mut rng);
            if sum > a {
                return Some(sum - a);
            }
        }
        None
    });
    let non_crossing = raw.iter().filter(|v| v.is_none()).count();
    Ok(Overshoots {
        values: raw.into_iter().flatten().collect(),
        non_crossing,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_walk_sums() {
        let law = IncrementLaw::Deterministic { value: 2.0 };
        let p = sample_walk(&law, None, 3, RngStream::new(1)).unwrap();
        assert_eq!(p.partial_sums, vec![2.0, 4.0, 6.0]);
        assert!(sample_walk(&law, None, 0, RngStream::new(1)).unwrap().is_empty());
    }

    #[test]
    fn rejects_bad_parameters() {
        for law in [
            IncrementLaw::Exponential { rate: 0.0 },
            IncrementLaw::Exponential { rate: f64::NAN },
            IncrementLaw::Normal { mean: 1.0, sd: -1.0 },
            IncrementLaw::Uniform { lo: 1.0, hi: 1.0 },
            IncrementLaw::Normal { mean: -1.0, sd: 1.0 },
        ] {
            assert!(matches!(
                sample_walk(&law, None, 5, RngStream::new(0)),
                Err(Error::Config(_))
            ));
        }
    }

    #[test]
    fn vector_sums_follow_recursion() {
        let law = IncrementLaw::Exponential { rate: 1.0 };
        let p = sample_walk(&law, Some(&VectorLaw::CenteredBase), 50, RngStream::new(3)).unwrap();
        let ys = p.vector_increments.unwrap();
        let ts = p.vector_sums.unwrap();
        for k in 0..50 {
            assert!((ys[k][0] - (p.increments[k] - 1.0)).abs() < 1e-15);
            let prev = if k == 0 { 0.0 } else { ts[k - 1][0] };
            assert_eq!(ts[k][0], prev + ys[k][0]);
        }
    }

    #[test]
    fn table_moments_match_uniform() {
        let table = IncrementLaw::Table {
            probabilities: vec![0.0, 1.0],
            quantiles: vec![0.0, 2.0],
        };
        let uniform = IncrementLaw::Uniform { lo: 0.0, hi: 2.0 };
        assert!((table.mean() - uniform.mean()).abs() < 1e-15);
        assert!((table.variance() - uniform.variance()).abs() < 1e-15);
    }

    #[test]
    fn lattice_window_count_is_exact() {
        let law = IncrementLaw::Deterministic { value: 1.0 };
        let w = renewal_window_count(&law, 50.5, 1.0, 200, 4, RngStream::new(0)).unwrap();
        assert_eq!(w.count.mean, 1.0);
        assert!(w.warning.is_none());
        assert!(renewal_window_count(&law, 50.5, 1.0, 100, 4, RngStream::new(0)).is_err());
    }

    #[test]
    fn deterministic_overshoot() {
        let law = IncrementLaw::Deterministic { value: 1.0 };
        let o = plain_overshoot(&law, 10.25, 5, RngStream::new(0)).unwrap();
        assert!(o.values.iter().all(|&v| (v - 0.75).abs() < 1e-12));
        assert_eq!(o.non_crossing, 0);
    }
}
