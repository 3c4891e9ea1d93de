//! Staggered-entry exponential survival trials.
//!
//! Patient `k` arrives at `τ_{k−1}` (Poisson arrivals, `τ_0 = 0`) and lives
//! for `L_k ~ Exp(θ)`. At `τ_n` the data are `min(L_k, τ_n − τ_{k−1})` and
//! the death indicators, summarised by the death count `K_n` and the total
//! time on test `T*_n`. Statistics of the form `Z_n = n·g(K_n/n, T*_n/n)`
//! are perturbed random walks driven by `W_k = (L_k, η_k)`,
//! `η_k = τ_k − τ_{k−1}`.
//!
//! The infinite sums over fictitious patients `0, −1, −2, …` that define
//! the stationary term are truncated after `xi_truncation` patients; their
//! summands vanish unless a lifetime outlasts a sum of that many gaps,
//! which has exponentially small probability.

use std::fmt;
use std::sync::Arc;

use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};

use crate::error::{config, Error, Result};
use crate::linalg::SymMatrix;
use crate::passage::{PerturbedWalkModel, RenewalConstants};
use crate::perturbation::{staggered_sums, Centering, QuadraticSpec, ResidualSpec, StationarySpec};
use crate::rng::{ids, RngStream, StreamRng};
use crate::scalar::Scalar;
use crate::stats::{replicate, Summary};
use crate::verification::TheoremReport;
use crate::walk::{AffineMap, IncrementLaw, VectorLaw};

/// Step used for finite-difference derivatives of a custom `g`.
pub const FD_STEP: f64 = 1e-4;

pub type CustomFn = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;

/// A caller-supplied `g(x, y)`.
#[derive(Clone)]
pub struct CustomG(pub CustomFn);

impl fmt::Debug for CustomG {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "CustomG(..)")
    }
}

impl PartialEq for CustomG {
    fn eq(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.0, &other.0)
    }
}

/// Choice of `g` in `Z_n = n·g(K_n/n, T*_n/n)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GKind {
    /// `g(x, y) = y²/x²`.
    FixedWidthCi,
    /// `g(x, y) = x log(x/y) + y − x`.
    RepeatedLrt,
    #[serde(skip)]
    Custom(CustomG),
}

/// `g` with its value and derivatives at `(1, 1/θ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GStatistic<T> {
    pub kind: GKind,
    pub theta: T,
    pub g: T,
    pub g10: T,
    pub g01: T,
    pub g20: T,
    pub g11: T,
    pub g02: T,
}

impl<T: Scalar> GStatistic<T> {
    pub fn new(kind: GKind, theta: T) -> Result<Self> {
        if !(theta > T::zero() && theta.is_finite()) {
            return config(format!("θ must be > 0, got {theta}"));
        }
        let one = T::one();
        let two = T::lit(2.0);
        let th2 = theta * theta;
        let stat = match &kind {
            GKind::FixedWidthCi => Self {
                g: one / th2,
                g10: -two / th2,
                g01: two / theta,
                g20: T::lit(6.0) / th2,
                g11: -T::lit(4.0) / theta,
                g02: two,
                kind,
                theta,
            },
            GKind::RepeatedLrt => Self {
                g: theta.ln() + one / theta - one,
                g10: theta.ln(),
                g01: one - theta,
                g20: one,
                g11: -theta,
                g02: th2,
                kind,
                theta,
            },
            GKind::Custom(f) => {
                let f = f.0.clone();
                let x = 1.0;
                let y = 1.0 / theta.to_f64().unwrap_or(f64::NAN);
                let h = FD_STEP;
                let e = |dx: f64, dy: f64| f(x + dx * h, y + dy * h);
                let lit = |v: f64| T::lit(v);
                let d = [
                    e(0.0, 0.0),
                    (e(1.0, 0.0) - e(-1.0, 0.0)) / (2.0 * h),
                    (e(0.0, 1.0) - e(0.0, -1.0)) / (2.0 * h),
                    (e(1.0, 0.0) - 2.0 * e(0.0, 0.0) + e(-1.0, 0.0)) / (h * h),
                    (e(1.0, 1.0) - e(1.0, -1.0) - e(-1.0, 1.0) + e(-1.0, -1.0)) / (4.0 * h * h),
                    (e(0.0, 1.0) - 2.0 * e(0.0, 0.0) + e(0.0, -1.0)) / (h * h),
                ];
                if d.iter().any(|v| !v.is_finite()) {
                    return config("custom g has non-finite derivatives at (1, 1/θ)");
                }
                Self {
                    g: lit(d[0]),
                    g10: lit(d[1]),
                    g01: lit(d[2]),
                    g20: lit(d[3]),
                    g11: lit(d[4]),
                    g02: lit(d[5]),
                    kind,
                    theta,
                }
            }
        };
        Ok(stat)
    }

    pub fn fixed_width_ci(theta: T) -> Result<Self> {
        Self::new(GKind::FixedWidthCi, theta)
    }

    pub fn repeated_lrt(theta: T) -> Result<Self> {
        Self::new(GKind::RepeatedLrt, theta)
    }

    /// `g(x, y)`.
    pub fn eval(&self, x: T, y: T) -> T {
        match &self.kind {
            GKind::FixedWidthCi => (y / x).powi(2),
            GKind::RepeatedLrt => {
                let log_term = if x.is_zero() { T::zero() } else { x * (x / y).ln() };
                log_term + y - x
            }
            GKind::Custom(f) => T::lit(f.0(x.to_f64().unwrap_or(f64::NAN), y.to_f64().unwrap_or(f64::NAN))),
        }
    }
}

/// Snapshot of a trial at the arrival time `τ_n`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialState<T> {
    /// `τ_0 = 0, τ_1, …, τ_n`.
    pub tau: Vec<T>,
    /// `L_1, …, L_n`.
    pub lifetimes: Vec<T>,
    /// `(L_0, η_0), (L_{−1}, η_{−1}), …`: fictitious earlier patients used by
    /// the stationary term; empty for injected fixtures.
    pub prehistory: Vec<(T, T)>,
    pub deaths: usize,
    pub total_time_on_test: T,
}

impl<T: Scalar> TrialState<T> {
    /// Builds a state from arrival times and lifetimes.
    pub fn from_arrivals(tau: Vec<T>, lifetimes: Vec<T>) -> Result<Self> {
        let n = lifetimes.len();
        if n == 0 || tau.len() != n + 1 {
            return config("need τ_0..τ_n and L_1..L_n with n >= 1");
        }
        if !tau[0].is_zero() || tau.windows(2).any(|w| w[1] < w[0]) {
            return config("arrival times must start at 0 and be nondecreasing");
        }
        if lifetimes.iter().any(|l| !(*l >= T::zero() && l.is_finite())) {
            return config("lifetimes must be finite and nonnegative");
        }
        let now = tau[n];
        let mut deaths = 0usize;
        let mut total = T::zero();
        for (k, &l) in lifetimes.iter().enumerate() {
            let follow_up = now - tau[k];
            if l <= follow_up {
                deaths += 1;
                total = total + l;
            } else {
                total = total + follow_up;
            }
        }
        Ok(Self { tau, lifetimes, prehistory: Vec::new(), deaths, total_time_on_test: total })
    }

    pub fn with_prehistory(mut self, prehistory: Vec<(T, T)>) -> Self {
        self.prehistory = prehistory;
        self
    }

    pub fn n(&self) -> usize {
        self.lifetimes.len()
    }

    /// Newest-first `(L_k, η_k)` for the enrolled patients.
    fn pairs(&self) -> impl Iterator<Item = (T, T)> + '_ {
        let n = self.n();
        (1..=n).rev().map(move |k| (self.lifetimes[k - 1], self.tau[k] - self.tau[k - 1]))
    }
}

/// `ξ°_n = Σ_k (L_k − (τ_n − τ_{k−1}))_+`, so that `T*_n = Σ L_k − ξ°_n`.
pub fn xi_staggered_residual<T: Scalar>(state: &TrialState<T>) -> T {
    staggered_sums(state.pairs()).1
}

/// `Z_n = n·g(K_n/n, T*_n/n)`; `None` while no death has been observed.
pub fn statistic_z<T: Scalar>(state: &TrialState<T>, g: &GStatistic<T>) -> Option<T> {
    if state.deaths == 0 {
        return None;
    }
    let n = T::from_usize_lossy(state.n());
    Some(n * g.eval(T::from_usize_lossy(state.deaths) / n, state.total_time_on_test / n))
}

/// `Z_n = S_n + ξ_n + ζ_{1,n} + ζ_{2,n} + ζ_{3,n}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Decomposition<T> {
    pub z: T,
    pub s: T,
    pub xi: T,
    /// Second-order Taylor term.
    pub zeta1: T,
    /// Contribution of the fictitious patients, which cancels theirs in `ξ_n`.
    pub zeta2: T,
    /// Remainder.
    pub zeta3: T,
}

impl<T: Scalar> Decomposition<T> {
    pub fn sum(&self) -> T {
        self.s + self.xi + self.zeta1 + self.zeta2 + self.zeta3
    }
}

/// Splits `Z_n` into the random walk, the stationary term and the slowly
/// changing pieces, using the true `θ` stored in `g`.
pub fn decompose<T: Scalar>(state: &TrialState<T>, g: &GStatistic<T>) -> Result<Decomposition<T>> {
    let z = statistic_z(state, g).ok_or_else(|| Error::Contract("statistic undefined with no deaths".into()))?;
    let n = T::from_usize_lossy(state.n());
    let inv_theta = T::one() / g.theta;
    let walk_sum = state.lifetimes.iter().fold(T::zero(), |acc, &l| acc + (l - inv_theta));
    let s = n * g.g + g.g01 * walk_sum;

    let (c_real, r_real) = staggered_sums(state.pairs());
    let (c_all, r_all) = staggered_sums(state.pairs().chain(state.prehistory.iter().copied()));
    let c_pre = T::from_usize_lossy(c_all - c_real);
    let r_pre = r_all - r_real;
    let xi = -(g.g10 * T::from_usize_lossy(c_all) + g.g01 * r_all);
    let zeta2 = g.g10 * c_pre + g.g01 * r_pre;

    let dy = state.total_time_on_test / n - inv_theta;
    let dx = T::from_usize_lossy(state.deaths) / n - T::one();
    let half = T::lit(0.5);
    let zeta1 = half * n * (g.g02 * dy * dy + T::lit(2.0) * g.g11 * dy * dx + g.g20 * dx * dx);
    let zeta3 = z - (s + xi + zeta1 + zeta2);
    Ok(Decomposition { z, s, xi, zeta1, zeta2, zeta3 })
}

fn default_rate() -> f64 {
    1.0
}

fn default_n0() -> usize {
    10
}

fn default_truncation() -> usize {
    200
}

fn ten() -> f64 {
    10.0
}

/// Trial design and the statistic it monitors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StaggeredExponentialModel {
    #[serde(default = "default_rate")]
    pub arrival_rate: f64,
    pub theta: f64,
    pub g: GKind,
    /// First patient count at which the stopping rule may fire.
    #[serde(default = "default_n0")]
    pub n0: usize,
    #[serde(default = "default_truncation")]
    pub xi_truncation: usize,
    #[serde(default = "ten")]
    pub horizon_factor: f64,
}

impl StaggeredExponentialModel {
    pub fn new(theta: f64, g: GKind) -> Self {
        Self {
            arrival_rate: default_rate(),
            theta,
            g,
            n0: default_n0(),
            xi_truncation: default_truncation(),
            horizon_factor: ten(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.arrival_rate > 0.0 && self.arrival_rate.is_finite()) {
            return config(format!("arrival_rate must be > 0, got {}", self.arrival_rate));
        }
        if !(self.theta > 0.0 && self.theta.is_finite()) {
            return config(format!("theta must be > 0, got {}", self.theta));
        }
        if self.n0 == 0 || self.xi_truncation == 0 {
            return config("n0 and xi_truncation must be >= 1");
        }
        if !(self.horizon_factor >= 1.0) {
            return config("horizon_factor must be >= 1");
        }
        Ok(())
    }

    pub fn statistic(&self) -> Result<GStatistic<f64>> {
        self.validate()?;
        GStatistic::new(self.g.clone(), self.theta)
    }

    /// Drift `μ = g(1, 1/θ)` of the statistic.
    pub fn drift(&self) -> Result<f64> {
        Ok(self.statistic()?.g)
    }

    /// Step cap for a boundary `a`.
    pub fn horizon(&self, a: f64) -> Result<usize> {
        let mu = self.drift()?;
        if !(mu > 0.0) {
            return config("statistic has no positive drift; give the horizon explicitly");
        }
        Ok((self.horizon_factor * (a / mu + 100.0)).ceil() as usize)
    }

    /// The perturbed random walk with the same first- and second-order
    /// structure: `X = g + g_01(L − 1/θ)`, `Y = L − 1/θ`, `Q = g_02/2` and
    /// `ξ = −(g_10 C + g_01 R)` over the last `xi_truncation` patients.
    pub fn as_perturbed_walk(&self) -> Result<PerturbedWalkModel> {
        let g = self.statistic()?;
        let theta = self.theta;
        let quadratic = if g.g02 == 0.0 {
            QuadraticSpec { q: SymMatrix::scalar(0.0), allow_zero: true }
        } else {
            QuadraticSpec::new(SymMatrix::scalar(0.5 * g.g02))?
        };
        Ok(PerturbedWalkModel {
            increment_law: IncrementLaw::Exponential { rate: theta },
            increment_map: AffineMap { offset: g.g - g.g01 / theta, scale: g.g01 },
            gap_law: Some(IncrementLaw::Exponential { rate: self.arrival_rate }),
            vector_law: VectorLaw::CenteredBase,
            stationary: StationarySpec::StaggeredResidual {
                count_weight: -g.g10,
                excess_weight: -g.g01,
                depth: self.xi_truncation,
                centering: Centering::None,
            },
            quadratic,
            residual: ResidualSpec::Zero,
            n0: self.n0,
            horizon_factor: self.horizon_factor,
            allow_arithmetic: false,
        })
    }
}

/// Draws `(L, η)` pairs in patient order.
struct PatientSampler {
    lifetime: Exp<f64>,
    gap: Exp<f64>,
}

impl PatientSampler {
    fn new(model: &StaggeredExponentialModel) -> Result<Self> {
        let bad = |e: rand_distr::ExpError| Error::Config(e.to_string());
        Ok(Self {
            lifetime: Exp::new(model.theta).map_err(bad)?,
            gap: Exp::new(model.arrival_rate).map_err(bad)?,
        })
    }

    #[inline]
    fn draw(&self, rng: &mut StreamRng) -> (f64, f64) {
        (self.lifetime.sample(rng), self.gap.sample(rng))
    }
}

/// Simulates a trial up to `τ_n`, including `xi_truncation` fictitious
/// earlier patients.
pub fn simulate_trial(model: &StaggeredExponentialModel, n: usize, stream: RngStream) -> Result<TrialState<f64>> {
    model.validate()?;
    if n == 0 {
        return config("n_patients must be >= 1");
    }
    let sampler = PatientSampler::new(model)?;
    let mut rng = stream.rng();
    let mut tau = Vec::with_capacity(n + 1);
    let mut lifetimes = Vec::with_capacity(n);
    tau.push(0.0);
    for k in 0..n {
        let (l, eta) = sampler.draw(&mut rng);
        lifetimes.push(l);
        tau.push(tau[k] + eta);
    }
    let prehistory = (0..model.xi_truncation).map(|_| sampler.draw(&mut rng)).collect();
    Ok(TrialState::from_arrivals(tau, lifetimes)?.with_prehistory(prehistory))
}

/// Incremental `(K_n, T*_n)` as patients arrive.
struct TrialProcess {
    sampler: PatientSampler,
    rng: StreamRng,
    /// Remaining lifetimes of patients still at risk.
    at_risk: Vec<f64>,
    n: usize,
    deaths: usize,
    total: f64,
}

impl TrialProcess {
    fn new(model: &StaggeredExponentialModel, stream: RngStream) -> Result<Self> {
        Ok(Self {
            sampler: PatientSampler::new(model)?,
            rng: stream.rng(),
            at_risk: Vec::new(),
            n: 0,
            deaths: 0,
            total: 0.0,
        })
    }

    /// Enrols patient `n + 1` and moves the clock to the next arrival.
    fn advance(&mut self) {
        let (l, eta) = self.sampler.draw(&mut self.rng);
        self.at_risk.push(l);
        self.n += 1;
        let mut deaths = 0usize;
        let mut total = self.total;
        self.at_risk.retain_mut(|rem| {
            if *rem <= eta {
                total += *rem;
                deaths += 1;
                false
            } else {
                total += eta;
                *rem -= eta;
                true
            }
        });
        self.deaths += deaths;
        self.total = total;
    }

    fn z(&self, g: &GStatistic<f64>) -> Option<f64> {
        if self.deaths == 0 {
            return None;
        }
        let n = self.n as f64;
        Some(n * g.eval(self.deaths as f64 / n, self.total / n))
    }
}

/// One monitored trial.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrialOutcome {
    pub stopped: bool,
    pub n: usize,
    pub deaths: usize,
    pub total_time_on_test: f64,
    pub z: f64,
}

impl TrialOutcome {
    pub fn theta_hat(&self) -> f64 {
        self.deaths as f64 / self.total_time_on_test
    }
}

fn monitor(
    model: &StaggeredExponentialModel,
    g: &GStatistic<f64>,
    a: f64,
    horizon: usize,
    stream: RngStream,
) -> Result<TrialOutcome> {
    let mut process = TrialProcess::new(model, stream)?;
    let mut z = f64::NEG_INFINITY;
    for _ in 0..horizon {
        process.advance();
        z = process.z(g).unwrap_or(f64::NEG_INFINITY);
        if process.n >= model.n0 && z > a {
            return Ok(TrialOutcome {
                stopped: true,
                n: process.n,
                deaths: process.deaths,
                total_time_on_test: process.total,
                z,
            });
        }
    }
    Ok(TrialOutcome {
        stopped: false,
        n: process.n,
        deaths: process.deaths,
        total_time_on_test: process.total,
        z,
    })
}

fn run_trials(
    model: &StaggeredExponentialModel,
    g: &GStatistic<f64>,
    a: f64,
    horizon: usize,
    reps: usize,
    stream: RngStream,
) -> Result<Vec<TrialOutcome>> {
    replicate(stream.with_stream(ids::TRIAL), reps, |s| monitor(model, g, a, horizon, s))
        .into_iter()
        .collect()
}

/// Fixed-width interval experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct Example1Summary {
    pub a: f64,
    pub half_width: f64,
    pub reps: usize,
    pub stopped: usize,
    pub noncrossing_fraction: f64,
    pub t: Summary,
    /// Share of stopped trials whose interval `K/T* ± h` covers `θ`.
    pub coverage: Summary,
    pub theta_hat: Summary,
    pub constants: Option<RenewalConstants>,
    pub prediction: Option<TheoremReport>,
    pub outcomes: Vec<TrialOutcome>,
}

/// Boundary `c²/h²` of the fixed-width interval rule.
pub fn fixed_width_boundary(c: f64, h: f64) -> Result<f64> {
    if !(c > 0.0 && h > 0.0) {
        return config(format!("need c, h > 0, got c={c}, h={h}"));
    }
    Ok(c * c / (h * h))
}

/// Runs the fixed-width rule `n(T*/K)² > c²/h²`. When `backward_reps > 0`
/// the mean stopping time is also compared with its second-order prediction.
pub fn example1_run(
    model: &StaggeredExponentialModel,
    h: f64,
    c: f64,
    reps: usize,
    backward_reps: usize,
    stream: RngStream,
) -> Result<Example1Summary> {
    if model.g != GKind::FixedWidthCi {
        return config("the fixed-width interval needs the fixed_width_ci statistic");
    }
    if reps == 0 {
        return config("reps must be >= 1");
    }
    let a = fixed_width_boundary(c, h)?;
    let g = model.statistic()?;
    let horizon = model.horizon(a)?;
    let outcomes = run_trials(model, &g, a, horizon, reps, stream)?;
    let stopped: Vec<&TrialOutcome> = outcomes.iter().filter(|o| o.stopped).collect();
    let t = Summary::of(&stopped.iter().map(|o| o.n as f64).collect::<Vec<_>>());
    let theta_hats: Vec<f64> = stopped.iter().map(|o| o.theta_hat()).collect();
    let covered: Vec<f64> = theta_hats
        .iter()
        .map(|th| if (th - model.theta).abs() <= h { 1.0 } else { 0.0 })
        .collect();
    let (constants, prediction) = if backward_reps > 0 {
        let walk = model.as_perturbed_walk()?.prepare()?;
        let constants = walk.estimate_rho_nu(None, backward_reps, stream)?;
        let predicted = constants.predicted_et(a);
        let se = (t.se.powi(2) + constants.predicted_se().powi(2)).sqrt();
        let report = TheoremReport::new("expected stopping time", t.mean, predicted, se, stopped.len());
        (Some(constants), Some(report))
    } else {
        (None, None)
    };
    Ok(Example1Summary {
        a,
        half_width: h,
        reps,
        stopped: stopped.len(),
        noncrossing_fraction: (reps - stopped.len()) as f64 / reps as f64,
        t,
        coverage: Summary::of(&covered),
        theta_hat: Summary::of(&theta_hats),
        constants,
        prediction,
        outcomes,
    })
}

/// Repeated likelihood-ratio test experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct Example2Summary {
    pub a: f64,
    pub theta: f64,
    pub horizon: usize,
    pub reps: usize,
    /// Share of trials stopped (rejecting `θ = 1`) by the horizon.
    pub rejection: Summary,
    pub t: Summary,
    pub outcomes: Vec<TrialOutcome>,
}

pub fn example2_run(
    model: &StaggeredExponentialModel,
    a: f64,
    reps: usize,
    horizon: usize,
    stream: RngStream,
) -> Result<Example2Summary> {
    if model.g != GKind::RepeatedLrt {
        return config("the repeated test needs the repeated_lrt statistic");
    }
    if !(a > 0.0) || reps == 0 || horizon == 0 {
        return config("need a > 0, reps >= 1 and horizon >= 1");
    }
    let g = model.statistic()?;
    let outcomes = run_trials(model, &g, a, horizon, reps, stream)?;
    let rejection: Vec<f64> = outcomes.iter().map(|o| if o.stopped { 1.0 } else { 0.0 }).collect();
    let t: Vec<f64> = outcomes.iter().filter(|o| o.stopped).map(|o| o.n as f64).collect();
    Ok(Example2Summary {
        a,
        theta: model.theta,
        horizon,
        reps,
        rejection: Summary::of(&rejection),
        t: Summary::of(&t),
        outcomes,
    })
}

/// Boundary at which the repeated test, run under `θ = 1` up to `horizon`,
/// rejects with probability about `alpha`: the `(1 − alpha)` quantile of
/// `max_{n0 ≤ n ≤ horizon} Z_n`.
pub fn calibrate_example2(
    model: &StaggeredExponentialModel,
    alpha: f64,
    reps: usize,
    horizon: usize,
    stream: RngStream,
) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) || reps == 0 || horizon == 0 {
        return config("need alpha in (0, 1), reps >= 1 and horizon >= 1");
    }
    let null = StaggeredExponentialModel { theta: 1.0, g: GKind::RepeatedLrt, ..model.clone() };
    let g = null.statistic()?;
    let mut maxima = replicate(stream.with_stream(ids::CALIBRATION), reps, |s| -> Result<f64> {
        let mut process = TrialProcess::new(&null, s)?;
        let mut best = f64::NEG_INFINITY;
        for _ in 0..horizon {
            process.advance();
            if process.n >= null.n0 {
                if let Some(z) = process.z(&g) {
                    best = best.max(z);
                }
            }
        }
        Ok(best)
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    maxima.sort_by(f64::total_cmp);
    let k = ((1.0 - alpha) * reps as f64).ceil() as usize;
    Ok(maxima[k.clamp(1, reps) - 1])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixture_counts() {
        let s = TrialState::from_arrivals(vec![0.0, 1.0, 2.0], vec![0.5, 3.0]).unwrap();
        assert_eq!(s.deaths, 1);
        assert_eq!(s.total_time_on_test, 1.5);
        let g = GStatistic::fixed_width_ci(1.0).unwrap();
        assert_eq!(statistic_z(&s, &g), Some(4.5));
        let lrt = GStatistic::repeated_lrt(1.0).unwrap();
        let z = statistic_z(&s, &lrt).unwrap();
        assert!((z - ((1.0f64 / 1.5).ln() + 0.5)).abs() < 1e-15);
    }

    #[test]
    fn residual_fixture() {
        let s = TrialState::from_arrivals(vec![0.0, 2.0, 3.0], vec![5.0, 1.0]).unwrap();
        assert_eq!(xi_staggered_residual(&s), 2.0);
    }

    #[test]
    fn lrt_vanishes_at_unit_rate() {
        let s = TrialState::from_arrivals(vec![0.0, 1.0, 2.0, 5.0], vec![0.5, 0.5, 2.0]).unwrap();
        assert_eq!(s.deaths as f64, s.total_time_on_test);
        assert_eq!(statistic_z(&s, &GStatistic::repeated_lrt(1.0).unwrap()), Some(0.0));
    }

    #[test]
    fn no_deaths_means_undefined() {
        let s = TrialState::from_arrivals(vec![0.0, 1.0], vec![5.0]).unwrap();
        assert_eq!(statistic_z(&s, &GStatistic::fixed_width_ci(1.0).unwrap()), None);
        assert!(decompose(&s, &GStatistic::fixed_width_ci(1.0).unwrap()).is_err());
    }

    #[test]
    fn boundary_arithmetic() {
        assert!((fixed_width_boundary(1.96, 0.2).unwrap() - 96.04).abs() < 1e-9);
        let a = fixed_width_boundary(1.96, 0.2).unwrap();
        let b = fixed_width_boundary(1.96, 0.1).unwrap();
        assert!((b / a - 4.0).abs() < 1e-12);
    }

    #[test]
    fn expired_lifetimes_give_no_stationary_term() {
        let s = TrialState::from_arrivals(vec![0.0, 5.0, 10.0], vec![0.1, 0.2]).unwrap();
        let g = GStatistic::fixed_width_ci(1.0).unwrap();
        let d = decompose(&s, &g).unwrap();
        assert_eq!(d.xi, 0.0);
        assert_eq!(d.zeta2, 0.0);
    }

    #[test]
    fn process_matches_batch_definition() {
        let model = StaggeredExponentialModel::new(1.3, GKind::FixedWidthCi);
        let stream = RngStream::new(9);
        let state = simulate_trial(&model, 40, stream).unwrap();
        let mut p = TrialProcess::new(&model, stream).unwrap();
        for _ in 0..40 {
            p.advance();
        }
        assert_eq!(p.deaths, state.deaths);
        assert!((p.total - state.total_time_on_test).abs() < 1e-9);
    }
}
