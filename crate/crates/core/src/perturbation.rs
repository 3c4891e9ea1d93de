//! Stationary (`ξ`) and slowly changing (`ζ`) perturbation terms.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{config, Error, Result};
use crate::linalg::SymMatrix;
use crate::scalar::Scalar;
use crate::walk::{Innovation, InnovationMoments};

/// Truncation error targeted when a geometric depth is chosen automatically.
pub const DEFAULT_TRUNCATION_TOL: f64 = 1e-8;

/// Scalar feature of `W_k` fed into a stationary perturbation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum WMap {
    Base,
    CenteredBase,
    #[default]
    Increment,
    CenteredIncrement,
}

impl WMap {
    #[inline]
    pub fn apply(self, w: &Innovation) -> f64 {
        match self {
            Self::Base => w.base,
            Self::CenteredBase => w.base_centered,
            Self::Increment => w.increment,
            Self::CenteredIncrement => w.increment_centered,
        }
    }

    fn mean(self, m: &InnovationMoments) -> f64 {
        match self {
            Self::Base => m.base_mean,
            Self::Increment => m.increment_mean,
            Self::CenteredBase | Self::CenteredIncrement => 0.0,
        }
    }

    fn variance(self, m: &InnovationMoments) -> f64 {
        match self {
            Self::Base | Self::CenteredBase => m.base_variance,
            Self::Increment | Self::CenteredIncrement => m.increment_variance,
        }
    }

    fn sup_abs(self, m: &InnovationMoments) -> Option<f64> {
        match self {
            Self::Base => m.base_sup,
            Self::CenteredBase => m.base_sup.map(|s| s + m.base_mean.abs()),
            Self::Increment => m.increment_sup,
            Self::CenteredIncrement => m.increment_sup.map(|s| s + m.increment_mean.abs()),
        }
    }

    /// Bound on `E|h(W)|`.
    fn abs_moment(self, m: &InnovationMoments) -> f64 {
        (self.variance(m) + self.mean(m).powi(2)).sqrt()
    }
}

/// Constant subtracted from the raw stationary sum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Centering {
    #[default]
    None,
    /// Subtract the exact mean; resolved against the driver's moments.
    Mean,
    Value(f64),
}

/// Stationary perturbation `ξ_n = Σ_{k<D} f_k(W_{n−k})` over the last `D` innovations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StationarySpec {
    #[default]
    Zero,
    /// `ξ_n = h(W_n)`.
    Instantaneous {
        #[serde(default)]
        map: WMap,
        #[serde(default)]
        centering: Centering,
    },
    /// `ξ_n = Σ_{k<D} β^k h(W_{n−k})`.
    GeometricMa {
        #[serde(default)]
        map: WMap,
        decay: f64,
        #[serde(default)]
        depth: Option<usize>,
        #[serde(default)]
        centering: Centering,
    },
    /// `ξ_n = c1·C_n + c2·R_n`, where with `W = (L, η)` and follow-up
    /// `F_{n,k} = η_n + … + η_{n−k}`, `C_n = #{k < D : L_{n−k} > F_{n,k}}`
    /// and `R_n = Σ_{k<D} (L_{n−k} − F_{n,k})_+`.
    StaggeredResidual {
        count_weight: f64,
        excess_weight: f64,
        depth: usize,
        #[serde(default)]
        centering: Centering,
    },
}

/// Censored count and total unexpired residual over newest-first
/// `(lifetime, gap)` pairs.
pub fn staggered_sums<T: Scalar>(pairs: impl IntoIterator<Item = (T, T)>) -> (usize, T) {
    let mut follow_up = T::zero();
    let mut count = 0usize;
    let mut residual = T::zero();
    for (lifetime, gap) in pairs {
        follow_up = follow_up + gap;
        if lifetime > follow_up {
            count += 1;
            residual = residual + (lifetime - follow_up);
        }
    }
    (count, residual)
}

/// `Σ_{k<D} β^k h_k` over newest-first values.
pub fn geometric_sum<T: Scalar>(decay: T, values: impl IntoIterator<Item = T>) -> T {
    let mut weight = T::one();
    let mut total = T::zero();
    for v in values {
        total = total + weight * v;
        weight = weight * decay;
    }
    total
}

impl StationarySpec {
    /// Number of innovations `W_n, W_{n−1}, …` read by one evaluation.
    pub fn depth(&self) -> usize {
        match *self {
            Self::Zero => 0,
            Self::Instantaneous { .. } => 1,
            Self::GeometricMa { depth, .. } => depth.unwrap_or(1),
            Self::StaggeredResidual { depth, .. } => depth,
        }
    }

    fn centering(&self) -> Centering {
        match *self {
            Self::Zero => Centering::None,
            Self::Instantaneous { centering, .. }
            | Self::GeometricMa { centering, .. }
            | Self::StaggeredResidual { centering, .. } => centering,
        }
    }

    fn with_centering(&self, c: Centering) -> Self {
        let mut out = self.clone();
        match &mut out {
            Self::Zero => {}
            Self::Instantaneous { centering, .. }
            | Self::GeometricMa { centering, .. }
            | Self::StaggeredResidual { centering, .. } => *centering = c,
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            Self::Zero | Self::Instantaneous { .. } => {}
            Self::GeometricMa { decay, depth, .. } => {
                if !(decay.is_finite() && decay.abs() < 1.0) {
                    return config(format!("geometric decay must satisfy |β| < 1, got {decay}"));
                }
                if depth == Some(0) {
                    return config("geometric depth must be >= 1");
                }
            }
            Self::StaggeredResidual { count_weight, excess_weight, depth, .. } => {
                if !(count_weight.is_finite() && excess_weight.is_finite()) {
                    return config("staggered weights must be finite");
                }
                if depth == 0 {
                    return config("staggered depth must be >= 1");
                }
            }
        }
        if let Centering::Value(v) = self.centering() {
            if !v.is_finite() {
                return config("centering value must be finite");
            }
        }
        Ok(())
    }

    /// Mean of the uncentred sum, when it is available in closed form.
    pub fn raw_mean(&self, m: &InnovationMoments) -> Option<f64> {
        match *self {
            Self::Zero => Some(0.0),
            Self::Instantaneous { map, .. } => Some(map.mean(m)),
            Self::GeometricMa { map, decay, depth, .. } => {
                let d = depth? as i32;
                Some(map.mean(m) * (1.0 - decay.powi(d)) / (1.0 - decay))
            }
            Self::StaggeredResidual { count_weight, excess_weight, depth, .. } => {
                // Memoryless lifetimes and gaps: P(L > F_k) = p^{k+1},
                // E(L − F_k)_+ = p^{k+1}/θ with p = r/(r + θ).
                let theta = m.base_rate?;
                let r = m.gap_rate?;
                let p = r / (r + theta);
                let geometric = p * (1.0 - p.powi(depth as i32)) / (1.0 - p);
                Some(count_weight * geometric + excess_weight * geometric / theta)
            }
        }
    }

    /// Fills in an automatic depth and replaces `Centering::Mean` by its value.
    pub fn resolve(&self, m: &InnovationMoments) -> Result<Self> {
        self.validate()?;
        let mut spec = self.clone();
        if let Self::GeometricMa { map, decay, depth: depth @ None, .. } = &mut spec {
            let scale = map.sup_abs(m).unwrap_or_else(|| map.abs_moment(m)).max(f64::MIN_POSITIVE);
            let b = decay.abs();
            let mut d = 1usize;
            if b > 0.0 {
                while b.powi(d as i32) * scale / (1.0 - b) > DEFAULT_TRUNCATION_TOL {
                    d += 1;
                }
            }
            *depth = Some(d);
        }
        if spec.centering() == Centering::Mean {
            let mean = spec.raw_mean(m).ok_or_else(|| {
                Error::Config("mean centering needs exponential lifetimes and gaps for this perturbation".into())
            })?;
            spec = spec.with_centering(Centering::Value(mean));
        }
        Ok(spec)
    }

    /// Bound on the neglected tail of an infinite-order sum, or `0` when the
    /// sum is finite by construction. `None` when no bound is available.
    pub fn truncation_bound(&self, m: &InnovationMoments) -> Option<f64> {
        match *self {
            Self::GeometricMa { map, decay, depth, .. } => {
                let b = decay.abs();
                let tail = b.powi(depth? as i32) / (1.0 - b);
                Some(tail * map.sup_abs(m).unwrap_or_else(|| map.abs_moment(m)))
            }
            Self::StaggeredResidual { count_weight, excess_weight, depth, .. } => {
                let theta = m.base_rate?;
                let r = m.gap_rate?;
                let p = r / (r + theta);
                let tail = p.powi(depth as i32 + 1) / (1.0 - p);
                Some(count_weight.abs() * tail + excess_weight.abs() * tail / theta)
            }
            _ => Some(0.0),
        }
    }

    /// Rough standard deviation used for scan and early-exit margins.
    pub fn scale(&self, m: &InnovationMoments) -> Option<f64> {
        match *self {
            Self::Zero => Some(0.0),
            Self::Instantaneous { map, .. } => Some(map.variance(m).sqrt()),
            Self::GeometricMa { map, decay, .. } => {
                Some(map.variance(m).sqrt() / (1.0 - decay * decay).sqrt())
            }
            Self::StaggeredResidual { .. } => None,
        }
    }

    /// Evaluates `ξ_n` from `recent = [W_n, W_{n−1}, …]`.
    pub fn evaluate(&self, recent: &[Innovation]) -> Result<f64> {
        let need = self.depth();
        if recent.len() < need {
            return Err(Error::Contract(format!(
                "stationary term needs {need} innovations, got {}",
                recent.len()
            )));
        }
        let shift = match self.centering() {
            Centering::None => 0.0,
            Centering::Value(v) => v,
            Centering::Mean => {
                return Err(Error::Contract("mean centering must be resolved before evaluation".into()))
            }
        };
        let raw = match *self {
            Self::Zero => return Ok(0.0),
            Self::Instantaneous { map, .. } => map.apply(&recent[0]),
            Self::GeometricMa { map, decay, .. } => {
                geometric_sum(decay, recent[..need].iter().map(|w| map.apply(w)))
            }
            Self::StaggeredResidual { count_weight, excess_weight, .. } => {
                let (c, r) = staggered_sums(recent[..need].iter().map(|w| (w.base, w.gap)));
                count_weight * c as f64 + excess_weight * r
            }
        };
        Ok(raw - shift)
    }
}

/// `ξ_n` from a newest-first history; see [`StationarySpec::evaluate`].
pub fn xi_value(spec: &StationarySpec, recent: &[Innovation]) -> Result<f64> {
    spec.evaluate(recent)
}

/// Symmetric weight matrix `Q` of the quadratic term `Tᵀ Q T / n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Scalar + Serialize", deserialize = "T: Scalar + Deserialize<'de>"))]
pub struct QuadraticSpec<T> {
    pub q: SymMatrix<T>,
    /// Admit `Q = 0`, which makes the slowly changing term vanish.
    #[serde(default)]
    pub allow_zero: bool,
}

impl<T: Scalar> Default for QuadraticSpec<T> {
    fn default() -> Self {
        Self {
            q: SymMatrix::zeros(0),
            allow_zero: true,
        }
    }
}

impl<T: Scalar> QuadraticSpec<T> {
    pub fn new(q: SymMatrix<T>) -> Result<Self> {
        let spec = Self { q, allow_zero: false };
        spec.validate()?;
        Ok(spec)
    }

    pub fn dim(&self) -> usize {
        self.q.dim()
    }

    pub fn validate(&self) -> Result<()> {
        if self.q.dim() > 0 && self.q.is_zero() && !self.allow_zero {
            return config("quadratic weight matrix is zero; set allow_zero to accept");
        }
        Ok(())
    }
}

/// `ζ'_n = T_nᵀ Q T_n / n`.
pub fn zeta_quadratic<T: Scalar>(t: &[T], n: usize, spec: &QuadraticSpec<T>) -> Result<T> {
    if n == 0 {
        return Err(Error::Contract("ζ' needs n >= 1".into()));
    }
    if t.len() != spec.dim() {
        return Err(Error::Contract(format!(
            "vector of length {} against {}-dimensional Q",
            t.len(),
            spec.dim()
        )));
    }
    Ok(spec.q.quadratic_form(t) / T::from_usize_lossy(n))
}

/// `ζ̃_{m,n} = T_{m,n}ᵀ Q T_{m,n} / m` with `T_{m,n} = Y_{n−m+1} + … + Y_n`.
///
/// `ys[k − 1]` holds `Y_k`.
pub fn zeta_window<T: Scalar, Y: AsRef<[T]>>(
    ys: &[Y],
    m: usize,
    n: usize,
    spec: &QuadraticSpec<T>,
) -> Result<T> {
    if m == 0 || m > n {
        return Err(Error::Contract(format!("window needs 1 <= m <= n, got m={m}, n={n}")));
    }
    if ys.len() < n {
        return Err(Error::Contract(format!("need Y_1..Y_{n}, got {}", ys.len())));
    }
    let d = spec.dim();
    let mut t = vec![T::zero(); d];
    for y in &ys[n - m..n] {
        let y = y.as_ref();
        if y.len() != d {
            return Err(Error::Contract("Y dimension does not match Q".into()));
        }
        for (ti, &yi) in t.iter_mut().zip(y) {
            *ti = *ti + yi;
        }
    }
    Ok(spec.q.quadratic_form(&t) / T::from_usize_lossy(m))
}

/// Inputs visible to a residual hook at step `n`.
#[derive(Debug)]
pub struct ResidualContext<'a> {
    pub n: usize,
    pub s: f64,
    pub t: &'a [f64],
    pub xi: f64,
    pub innovation: &'a Innovation,
}

pub type ResidualFn = Arc<dyn Fn(&ResidualContext<'_>) -> f64 + Send + Sync>;

/// Remainder `ζ_n − ζ'_n`.
#[derive(Clone, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResidualSpec {
    #[default]
    Zero,
    /// `ζ_n − ζ'_n = c / n`.
    Decaying(f64),
    /// `ζ_n − ζ'_n ≡ c`, a level shift that survives in the limit.
    Shift(f64),
    /// Caller-supplied remainder; not serialisable.
    #[serde(skip)]
    Hook(ResidualFn),
}

impl ResidualSpec {
    #[inline]
    pub fn evaluate(&self, ctx: &ResidualContext<'_>) -> f64 {
        match self {
            Self::Zero => 0.0,
            Self::Decaying(c) => c / ctx.n as f64,
            Self::Shift(c) => *c,
            Self::Hook(f) => f(ctx),
        }
    }

    /// Limit of the remainder; hooks are assumed to vanish.
    pub fn limit(&self) -> f64 {
        match self {
            Self::Shift(c) => *c,
            _ => 0.0,
        }
    }

    /// Constant appearing in the remainder, if any.
    pub fn constant(&self) -> Option<f64> {
        match self {
            Self::Decaying(c) | Self::Shift(c) => Some(*c),
            _ => None,
        }
    }
}

impl fmt::Debug for ResidualSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Zero => write!(f, "Zero"),
            Self::Decaying(c) => write!(f, "Decaying({c})"),
            Self::Shift(c) => write!(f, "Shift({c})"),
            Self::Hook(_) => write!(f, "Hook(..)"),
        }
    }
}

impl PartialEq for ResidualSpec {
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (Self::Zero, Self::Zero) => true,
            (Self::Decaying(a), Self::Decaying(b)) | (Self::Shift(a), Self::Shift(b)) => a == b,
            (Self::Hook(a), Self::Hook(b)) => Arc::ptr_eq(a, b),
            _ => false,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn w(x: f64) -> Innovation {
        Innovation::from_increment(x)
    }

    #[test]
    fn instantaneous_identity() {
        let spec = StationarySpec::Instantaneous { map: WMap::Base, centering: Centering::None };
        assert_eq!(xi_value(&spec, &[w(1.7)]).unwrap(), 1.7);
        let centred = StationarySpec::Instantaneous { map: WMap::Base, centering: Centering::Value(0.5) };
        assert!((xi_value(&centred, &[w(1.7)]).unwrap() - 1.2).abs() < 1e-15);
    }

    #[test]
    fn geometric_sum_by_hand() {
        let spec = StationarySpec::GeometricMa {
            map: WMap::Increment,
            decay: 0.5,
            depth: Some(3),
            centering: Centering::None,
        };
        let v = xi_value(&spec, &[w(1.0), w(2.0), w(4.0), w(100.0)]).unwrap();
        assert_eq!(v, 1.0 + 1.0 + 1.0);
        assert!(matches!(xi_value(&spec, &[w(1.0)]), Err(Error::Contract(_))));
    }

    #[test]
    fn unresolved_mean_is_rejected() {
        let spec = StationarySpec::Instantaneous { map: WMap::Base, centering: Centering::Mean };
        assert!(matches!(spec.evaluate(&[w(1.0)]), Err(Error::Contract(_))));
    }

    #[test]
    fn staggered_sums_by_hand() {
        // follow-ups 1, 3, 6 against lifetimes 2, 2, 10.
        let (c, r) = staggered_sums([(2.0, 1.0), (2.0, 2.0), (10.0, 3.0)]);
        assert_eq!(c, 2);
        assert_eq!(r, 1.0 + 4.0);
    }

    #[test]
    fn zeta_quadratic_example() {
        let spec = QuadraticSpec::new(SymMatrix::scalar(0.5)).unwrap();
        assert_eq!(zeta_quadratic(&[3.0], 9, &spec).unwrap(), 0.5);
        let f32spec = QuadraticSpec::new(SymMatrix::scalar(0.5f32)).unwrap();
        assert_eq!(zeta_quadratic(&[3.0f32], 9, &f32spec).unwrap(), 0.5);
        assert!(zeta_quadratic(&[3.0], 0, &spec).is_err());
    }

    #[test]
    fn zero_q_needs_opt_in() {
        assert!(QuadraticSpec::new(SymMatrix::<f64>::scalar(0.0)).is_err());
    }

    #[test]
    fn window_contract() {
        let spec = QuadraticSpec::new(SymMatrix::scalar(1.0)).unwrap();
        let ys = vec![vec![1.0], vec![2.0], vec![3.0]];
        assert_eq!(zeta_window(&ys, 2, 3, &spec).unwrap(), 25.0 / 2.0);
        assert!(zeta_window(&ys, 4, 3, &spec).is_err());
        assert!(zeta_window(&ys, 0, 3, &spec).is_err());
        assert!(zeta_window(&ys, 1, 4, &spec).is_err());
    }
}
