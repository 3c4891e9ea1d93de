//! The perturbed walk `Z_n = S_n + ξ_n + ζ_n`, its first passage over a
//! level, and the constants in the expansion of the expected passage time.

use serde::{Deserialize, Serialize};

use crate::error::{config, Error, Result};
use crate::linalg::SymMatrix;
use crate::mixture::{mixture_weights, ChiSquareMixture, CovarianceEstimate};
use crate::perturbation::{Centering, QuadraticSpec, ResidualContext, ResidualSpec, StationarySpec, WMap};
use crate::rng::{ids, RngStream, StreamRng};
use crate::stats::{replicate, Summary};
use crate::walk::{AffineMap, Driver, IncrementLaw, Innovation, InnovationMoments, VectorLaw};

/// Batches used for standard errors of the backward-functional means.
const BACKWARD_BATCHES: usize = 100;
/// Stationary draws used to size `ξ` when no closed form is available.
const PILOT_DRAWS: usize = 2000;

fn one_usize() -> usize {
    1
}

fn ten() -> f64 {
    10.0
}

/// Full description of a perturbed random walk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerturbedWalkModel {
    /// Law of the base draw; `X_k` is its image under `increment_map`.
    pub increment_law: IncrementLaw,
    #[serde(default)]
    pub increment_map: AffineMap,
    /// Optional auxiliary draw carried in `W_k`.
    #[serde(default)]
    pub gap_law: Option<IncrementLaw>,
    #[serde(default)]
    pub vector_law: VectorLaw,
    #[serde(default)]
    pub stationary: StationarySpec,
    #[serde(default)]
    pub quadratic: QuadraticSpec<f64>,
    #[serde(default, skip_serializing_if = "is_zero_residual")]
    pub residual: ResidualSpec,
    /// First index at which a crossing may stop the walk.
    #[serde(default = "one_usize")]
    pub n0: usize,
    /// Paths are abandoned after `horizon_factor·(a/μ + 100)` steps.
    #[serde(default = "ten")]
    pub horizon_factor: f64,
    /// Admit lattice increments.
    #[serde(default)]
    pub allow_arithmetic: bool,
}

fn is_zero_residual(r: &ResidualSpec) -> bool {
    matches!(r, ResidualSpec::Zero)
}

impl PerturbedWalkModel {
    /// Exponential(1) increments, `Y = X − 1`, `Q = 1/2` and a geometric
    /// moving average of the increments with decay 1/2, centred to mean zero.
    pub fn tm1() -> Self {
        Self {
            increment_law: IncrementLaw::Exponential { rate: 1.0 },
            increment_map: AffineMap::default(),
            gap_law: None,
            vector_law: VectorLaw::CenteredBase,
            stationary: StationarySpec::GeometricMa {
                map: WMap::Increment,
                decay: 0.5,
                depth: None,
                centering: Centering::Mean,
            },
            quadratic: QuadraticSpec { q: SymMatrix::scalar(0.5), allow_zero: false },
            residual: ResidualSpec::Zero,
            n0: 1,
            horizon_factor: 10.0,
            allow_arithmetic: false,
        }
    }

    /// A plain walk with the given increments and no perturbation.
    pub fn plain(law: IncrementLaw) -> Self {
        Self {
            increment_law: law,
            increment_map: AffineMap::default(),
            gap_law: None,
            vector_law: VectorLaw::None,
            stationary: StationarySpec::Zero,
            quadratic: QuadraticSpec::default(),
            residual: ResidualSpec::Zero,
            n0: 1,
            horizon_factor: 10.0,
            allow_arithmetic: false,
        }
    }

    pub fn mu(&self) -> f64 {
        self.increment_map.apply(self.increment_law.mean())
    }

    pub fn sigma2(&self) -> f64 {
        self.increment_map.scale.powi(2) * self.increment_law.variance()
    }

    pub fn horizon(&self, a: f64) -> usize {
        (self.horizon_factor * (a.max(0.0) / self.mu() + 100.0)).ceil() as usize
    }

    pub fn validate(&self) -> Result<()> {
        self.increment_law.validate()?;
        let mu = self.mu();
        if !(mu > 0.0 && mu.is_finite()) {
            return config(format!("increment mean must be > 0, got {mu}"));
        }
        if self.increment_law.is_arithmetic() && !self.allow_arithmetic {
            return config("increment law is arithmetic; set allow_arithmetic to accept");
        }
        if let Some(g) = &self.gap_law {
            g.validate()?;
        }
        if self.vector_law.dim() != self.quadratic.dim() {
            return config(format!(
                "vector law has dimension {} but Q has dimension {}",
                self.vector_law.dim(),
                self.quadratic.dim()
            ));
        }
        self.quadratic.validate()?;
        self.stationary.validate()?;
        if let Some(c) = self.residual.constant() {
            if !c.is_finite() {
                return config("residual constant must be finite");
            }
        }
        if self.n0 == 0 {
            return config("n0 must be >= 1");
        }
        if !(self.horizon_factor >= 1.0 && self.horizon_factor.is_finite()) {
            return config("horizon_factor must be >= 1");
        }
        Ok(())
    }

    /// Validates the model and precomputes everything a simulation needs.
    pub fn prepare(&self) -> Result<PreparedModel> {
        PreparedModel::new(self.clone())
    }
}

/// Newest-first window over the last `depth` innovations, kept contiguous
/// by writing every element twice into a buffer of length `2·depth`.
#[derive(Debug, Clone)]
pub struct History {
    buf: Vec<Innovation>,
    pos: usize,
    depth: usize,
}

impl History {
    pub fn new(depth: usize) -> Self {
        Self { buf: vec![Innovation::default(); 2 * depth], pos: 0, depth }
    }

    #[inline]
    pub fn push(&mut self, w: Innovation) {
        if self.depth == 0 {
            return;
        }
        self.pos = if self.pos == 0 { self.depth - 1 } else { self.pos - 1 };
        self.buf[self.pos] = w;
        self.buf[self.pos + self.depth] = w;
    }

    /// `[W_n, W_{n−1}, …, W_{n−depth+1}]`.
    #[inline]
    pub fn recent(&self) -> &[Innovation] {
        &self.buf[self.pos..self.pos + self.depth]
    }
}

/// A validated model with its derived quantities.
pub struct PreparedModel {
    model: PerturbedWalkModel,
    driver: Driver,
    stationary: StationarySpec,
    mixture: ChiSquareMixture<f64>,
    covariance: SymMatrix<f64>,
    mu: f64,
    sigma2: f64,
    xi_scale: f64,
}

impl PreparedModel {
    fn new(model: PerturbedWalkModel) -> Result<Self> {
        model.validate()?;
        let driver = Driver::new(
            &model.increment_law,
            model.increment_map,
            model.gap_law.as_ref(),
            &model.vector_law,
        )?;
        let stationary = model.stationary.resolve(driver.moments())?;
        let covariance = model.vector_law.covariance(&model.increment_law);
        let mixture = if model.quadratic.dim() == 0 {
            ChiSquareMixture::with_degenerate(vec![0.0])?
        } else {
            mixture_weights(&model.quadratic, &CovarianceEstimate::analytic(covariance.clone())?)?
        };
        let mut prepared = Self {
            mu: model.mu(),
            sigma2: model.sigma2(),
            model,
            driver,
            stationary,
            mixture,
            covariance,
            xi_scale: 0.0,
        };
        prepared.xi_scale = match prepared.stationary.scale(prepared.driver.moments()) {
            Some(s) => s,
            None => {
                let mut rng = RngStream::new(0).with_stream(ids::PILOT).rng();
                let draws: Vec<f64> = (0..PILOT_DRAWS)
                    .map(|_| prepared.stationary_draw(&mut rng).map(|(_, xi)| xi))
                    .collect::<Result<_>>()?;
                Summary::of(&draws).se * (PILOT_DRAWS as f64).sqrt()
            }
        };
        Ok(prepared)
    }

    pub fn model(&self) -> &PerturbedWalkModel {
        &self.model
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn sigma2(&self) -> f64 {
        self.sigma2
    }

    /// Limit law of `ζ_n`.
    pub fn mixture(&self) -> &ChiSquareMixture<f64> {
        &self.mixture
    }

    /// `λ = tr(QΣ)`, the mean of the limit of `ζ_n`.
    pub fn lambda(&self) -> f64 {
        self.mixture.mean()
    }

    pub fn covariance(&self) -> &SymMatrix<f64> {
        &self.covariance
    }

    /// Stationary perturbation with depth and centring resolved.
    pub fn stationary(&self) -> &StationarySpec {
        &self.stationary
    }

    pub fn moments(&self) -> &InnovationMoments {
        self.driver.moments()
    }

    /// Rough spread of `ξ`, used for margins.
    pub fn xi_scale(&self) -> f64 {
        self.xi_scale
    }

    pub fn truncation_bound(&self) -> Option<f64> {
        self.stationary.truncation_bound(self.driver.moments())
    }

    /// Draws `W_n` with `Y_n` written into `y`.
    #[inline]
    pub fn draw(&self, rng: &mut StreamRng, y: &mut [f64]) -> Innovation {
        self.driver.draw(rng, y)
    }

    /// A fresh stationary window `[W_n, …]` and the value of `ξ_n` on it.
    pub fn stationary_draw(&self, rng: &mut StreamRng) -> Result<(Vec<Innovation>, f64)> {
        let mut y = vec![0.0; self.driver.dim()];
        let window: Vec<Innovation> = (0..self.stationary.depth().max(1))
            .map(|_| self.driver.draw(rng, &mut y))
            .collect();
        let xi = self.stationary.evaluate(&window)?;
        Ok((window, xi))
    }

    /// Scale of `ξ + ζ` used for scan margins.
    pub fn perturbation_scale(&self) -> f64 {
        let zeta = self.mixture.mean().abs() + self.mixture.variance().sqrt();
        let residual = self.model.residual.constant().map_or(0.0, f64::abs);
        self.xi_scale + zeta + residual
    }

    /// Last index worth scanning for visits to `(−∞, level]`, with an
    /// approximate bound on the expected number of visits beyond it.
    pub fn scan_end(&self, level: f64) -> (usize, f64) {
        let sigma = self.sigma2.sqrt();
        let pert = self.perturbation_scale();
        let margin = |n: f64| n * self.mu - level - 8.0 * (sigma * n.sqrt() + pert);
        let mut n = 1usize;
        while margin(n as f64) < 0.0 {
            n = (n as f64 * 1.1).ceil() as usize + 1;
        }
        let horizon = self.model.horizon(level);
        let end = n.min(horizon);
        let mut tail = 0.0;
        if sigma > 0.0 {
            for k in end + 1..end + 100_000 {
                let x = (k as f64 * self.mu - level - pert) / (sigma * (k as f64).sqrt());
                if x <= 0.0 {
                    continue;
                }
                let term = (-0.5 * x * x).exp() / (x * (2.0 * std::f64::consts::PI).sqrt());
                tail += term;
                if term < 1e-18 {
                    break;
                }
            }
        }
        (end, tail)
    }

    pub fn simulator(&self, stream: RngStream) -> PathSimulator<'_> {
        PathSimulator::new(self, stream)
    }

    /// First passage of `Z_n` over `a` for one replication.
    pub fn simulate_passage(&self, a: f64, stream: RngStream) -> Result<FirstPassageSample> {
        let horizon = self.model.horizon(a);
        let mut sim = self.simulator(stream);
        let mut last = None;
        for _ in 0..horizon {
            let step = sim.step()?;
            if step.n >= self.model.n0 && step.z > a {
                return Ok(FirstPassageSample::crossed(&step, a));
            }
            last = Some(step);
        }
        let step = last.ok_or_else(|| Error::Contract("empty horizon".into()))?;
        Ok(FirstPassageSample {
            crossed: false,
            ..FirstPassageSample::crossed(&step, a)
        })
    }

    /// Monte Carlo summary of the first passage over `a`.
    pub fn estimate_et(&self, a: f64, reps: usize, stream: RngStream) -> Result<PassageSummary> {
        if !(a.is_finite() && a > 0.0) {
            return config(format!("level must be > 0, got {a}"));
        }
        if reps == 0 {
            return config("reps must be >= 1");
        }
        let samples = replicate(stream.with_stream(ids::PATH), reps, |s| self.simulate_passage(a, s))
            .into_iter()
            .collect::<Result<Vec<_>>>()?;
        Ok(PassageSummary::new(a, samples))
    }

    /// Samples of `I = inf_{j ≤ −1} Z*_j` and `ξ_0` from the backward walk.
    pub fn backward_min_functional(
        &self,
        depth: Option<usize>,
        reps: usize,
        stream: RngStream,
    ) -> Result<BackwardRun> {
        if reps == 0 {
            return config("reps must be >= 1");
        }
        let cap = depth.unwrap_or_else(|| self.default_backward_depth());
        if cap == 0 {
            return config("backward depth must be >= 1");
        }
        let samples = replicate(stream.with_stream(ids::BACKWARD), reps, |s| self.backward_one(cap, s))
            .into_iter()
            .collect::<Result<Vec<_>>>()?;
        let capped = samples.iter().filter(|s| s.capped).count();
        let warning = (capped > 0).then(|| {
            format!("{capped} of {reps} backward paths reached the depth cap {cap}")
        });
        Ok(BackwardRun { samples, depth_cap: cap, capped, warning })
    }

    /// Depth at which a dyadic maximal bound puts the chance that the
    /// infimum is attained later below `1e-4`.
    pub fn default_backward_depth(&self) -> usize {
        let ratio = self.sigma2 / (self.mu * self.mu);
        ((1.6e5 * ratio).ceil() as usize).max(1000)
    }

    fn backward_one(&self, cap: usize, stream: RngStream) -> Result<BackwardFunctionalSample> {
        let mut rng = stream.rng();
        let d = self.stationary.depth();
        let mut y = vec![0.0; self.driver.dim()];
        // buf[i] = W_{−i}.
        let mut buf: Vec<Innovation> = (0..d.max(1)).map(|_| self.driver.draw(&mut rng, &mut y)).collect();
        let xi0 = self.stationary.evaluate(&buf[..d])?;
        let sigma = self.sigma2.sqrt();
        let mut partial = 0.0;
        let mut inf = f64::INFINITY;
        let mut argmin = -1i64;
        let mut capped = true;
        let mut used = 0usize;
        for k in 1..=cap {
            while buf.len() < k + d.max(1) {
                buf.push(self.driver.draw(&mut rng, &mut y));
            }
            partial += buf[k - 1].increment;
            let z = partial + xi0 - self.stationary.evaluate(&buf[k..k + d])?;
            if z < inf {
                inf = z;
                argmin = -(k as i64);
            }
            used = k;
            let margin = 10.0 * (sigma * (k as f64).sqrt() + self.xi_scale);
            if z - inf >= margin && z > inf {
                capped = false;
                break;
            }
        }
        Ok(BackwardFunctionalSample { inf, xi0, argmin, depth_used: used, capped })
    }

    /// `ρ`, `ν` and the normalisation check from backward samples.
    pub fn estimate_rho_nu(&self, depth: Option<usize>, reps: usize, stream: RngStream) -> Result<RenewalConstants> {
        let run = self.backward_min_functional(depth, reps, stream)?;
        Ok(RenewalConstants::from_backward(self, &run))
    }
}

/// One step of a simulated path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Step {
    pub n: usize,
    pub innovation: Innovation,
    pub s: f64,
    pub xi: f64,
    /// `T_nᵀ Q T_n / n`.
    pub zeta_quadratic: f64,
    /// `ζ_n`, including any residual.
    pub zeta: f64,
    pub z: f64,
}

/// Incremental simulator of `(S_n, ξ_n, ζ_n)`.
pub struct PathSimulator<'p> {
    model: &'p PreparedModel,
    rng: StreamRng,
    history: History,
    n: usize,
    s: f64,
    t: Vec<f64>,
    y: Vec<f64>,
}

impl<'p> PathSimulator<'p> {
    fn new(model: &'p PreparedModel, stream: RngStream) -> Self {
        let mut rng = stream.rng();
        let depth = model.stationary.depth();
        let dim = model.driver.dim();
        let mut history = History::new(depth);
        let mut y = vec![0.0; dim];
        // Innovations W_{2−D}, …, W_0 so that ξ_1 sees a full window.
        for _ in 1..depth {
            history.push(model.driver.draw(&mut rng, &mut y));
        }
        Self { model, rng, history, n: 0, s: 0.0, t: vec![0.0; dim], y }
    }

    pub fn step(&mut self) -> Result<Step> {
        let m = self.model;
        let w = m.driver.draw(&mut self.rng, &mut self.y);
        self.n += 1;
        self.history.push(w);
        self.s += w.increment;
        for (ti, yi) in self.t.iter_mut().zip(&self.y) {
            *ti += yi;
        }
        let xi = m.stationary.evaluate(self.history.recent())?;
        let zeta_quadratic = if self.t.is_empty() {
            0.0
        } else {
            m.model.quadratic.q.quadratic_form(&self.t) / self.n as f64
        };
        let residual = m.model.residual.evaluate(&ResidualContext {
            n: self.n,
            s: self.s,
            t: &self.t,
            xi,
            innovation: &w,
        });
        let zeta = zeta_quadratic + residual;
        Ok(Step { n: self.n, innovation: w, s: self.s, xi, zeta_quadratic, zeta, z: self.s + xi + zeta })
    }

    /// `T_n`.
    pub fn vector_sum(&self) -> &[f64] {
        &self.t
    }
}

/// Outcome of one first-passage replication.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FirstPassageSample {
    /// Stopping index, or the horizon when the level was not crossed.
    pub t_a: usize,
    /// `Z_{t_a} − a`.
    pub excess: f64,
    pub xi_at_stop: f64,
    pub zeta_at_stop: f64,
    pub crossed: bool,
}

impl FirstPassageSample {
    fn crossed(step: &Step, a: f64) -> Self {
        Self {
            t_a: step.n,
            excess: step.z - a,
            xi_at_stop: step.xi,
            zeta_at_stop: step.zeta,
            crossed: true,
        }
    }
}

/// Monte Carlo summary of first-passage replications.
#[derive(Debug, Clone, PartialEq)]
pub struct PassageSummary {
    pub a: f64,
    pub reps: usize,
    pub crossed: usize,
    pub noncrossing_fraction: f64,
    /// Stopping times of crossed replications.
    pub t: Summary,
    pub excess: Summary,
    /// Fewer than 1% of replications failed to cross.
    pub usable: bool,
    pub samples: Vec<FirstPassageSample>,
}

impl PassageSummary {
    pub fn new(a: f64, samples: Vec<FirstPassageSample>) -> Self {
        let crossed: Vec<&FirstPassageSample> = samples.iter().filter(|s| s.crossed).collect();
        let t: Vec<f64> = crossed.iter().map(|s| s.t_a as f64).collect();
        let excess: Vec<f64> = crossed.iter().map(|s| s.excess).collect();
        let reps = samples.len();
        let noncrossing_fraction = (reps - crossed.len()) as f64 / reps.max(1) as f64;
        Self {
            a,
            reps,
            crossed: crossed.len(),
            noncrossing_fraction,
            t: Summary::of(&t),
            excess: Summary::of(&excess),
            usable: noncrossing_fraction <= 0.01,
            samples,
        }
    }

    /// Values of `field` over crossed replications.
    pub fn crossed_values(&self, field: impl Fn(&FirstPassageSample) -> f64) -> Vec<f64> {
        self.samples.iter().filter(|s| s.crossed).map(field).collect()
    }
}

/// One draw of the backward functional.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BackwardFunctionalSample {
    /// `I = inf_{j ≤ −1} Z*_j`.
    pub inf: f64,
    pub xi0: f64,
    /// Index `j` attaining the infimum.
    pub argmin: i64,
    pub depth_used: usize,
    /// The scan reached the depth cap without the early-exit test firing.
    pub capped: bool,
}

impl BackwardFunctionalSample {
    pub fn positive_part(&self) -> f64 {
        self.inf.max(0.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BackwardRun {
    pub samples: Vec<BackwardFunctionalSample>,
    pub depth_cap: usize,
    pub capped: usize,
    pub warning: Option<String>,
}

impl BackwardRun {
    pub fn positive_parts(&self) -> Vec<f64> {
        self.samples.iter().map(BackwardFunctionalSample::positive_part).collect()
    }

    /// Estimated limit law of the excess: `G(r) = E min(I₊, r) / E I₊`.
    pub fn excess_cdf(&self) -> impl Fn(f64) -> f64 + '_ {
        let total: f64 = self.samples.iter().map(|s| s.positive_part()).sum();
        move |r: f64| {
            if r <= 0.0 || total <= 0.0 {
                return 0.0;
            }
            self.samples.iter().map(|s| s.positive_part().min(r)).sum::<f64>() / total
        }
    }

    /// Estimated limit law of `ξ` at the crossing: `H(x) = E[I₊; ξ_0 ≤ x] / E I₊`.
    pub fn xi_cdf(&self) -> impl Fn(f64) -> f64 + '_ {
        let total: f64 = self.samples.iter().map(|s| s.positive_part()).sum();
        move |x: f64| {
            if total <= 0.0 {
                return 0.0;
            }
            self.samples.iter().filter(|s| s.xi0 <= x).map(|s| s.positive_part()).sum::<f64>() / total
        }
    }
}

/// How a constant was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Analytic,
    BackwardFunctional,
    Eigenvalues,
}

/// Constants in `E t_a = (a + ρ − ν − λ)/μ + o(1)`, with `λ` augmented by
/// any constant shift in the remainder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RenewalConstants {
    pub mu: f64,
    pub sigma2: f64,
    pub rho: f64,
    pub se_rho: f64,
    pub nu: f64,
    pub se_nu: f64,
    /// Standard error of `ρ − ν`, which shares one sample.
    pub se_rho_minus_nu: f64,
    pub lambda: f64,
    /// Limit of the remainder `ζ_n − ζ'_n`.
    pub shift: f64,
    /// `E I₊ / μ`, which should be 1.
    pub normalization: f64,
    pub se_normalization: f64,
    pub consistent: bool,
    pub reps: usize,
    pub capped: usize,
    pub mu_method: Method,
    pub rho_method: Method,
    pub nu_method: Method,
    pub lambda_method: Method,
}

impl RenewalConstants {
    pub fn from_backward(model: &PreparedModel, run: &BackwardRun) -> Self {
        let mu = model.mu();
        let pos = run.positive_parts();
        let sq: Vec<f64> = pos.iter().map(|p| p * p / (2.0 * mu)).collect();
        let cross: Vec<f64> = run.samples.iter().map(|s| s.xi0 * s.positive_part() / mu).collect();
        let diff: Vec<f64> = sq.iter().zip(&cross).map(|(a, b)| a - b).collect();
        let norm: Vec<f64> = pos.iter().map(|p| p / mu).collect();
        let rho = Summary::batched(&sq, BACKWARD_BATCHES);
        let nu = Summary::batched(&cross, BACKWARD_BATCHES);
        let rho_nu = Summary::batched(&diff, BACKWARD_BATCHES);
        let normalization = Summary::batched(&norm, BACKWARD_BATCHES);
        let consistent = (normalization.mean - 1.0).abs() <= 5.0 * normalization.se;
        Self {
            mu,
            sigma2: model.sigma2(),
            rho: rho.mean,
            se_rho: rho.se,
            nu: nu.mean,
            se_nu: nu.se,
            se_rho_minus_nu: rho_nu.se,
            lambda: model.lambda(),
            shift: model.model().residual.limit(),
            normalization: normalization.mean,
            se_normalization: normalization.se,
            consistent,
            reps: run.samples.len(),
            capped: run.capped,
            mu_method: Method::Analytic,
            rho_method: Method::BackwardFunctional,
            nu_method: Method::BackwardFunctional,
            lambda_method: Method::Eigenvalues,
        }
    }

    /// Second-order approximation of `E t_a`.
    pub fn predicted_et(&self, a: f64) -> f64 {
        (a + self.rho - self.nu - self.lambda - self.shift) / self.mu
    }

    /// Standard error of [`Self::predicted_et`].
    pub fn predicted_se(&self) -> f64 {
        self.se_rho_minus_nu / self.mu
    }
}

/// First passage of `Z_n` over `a` for one replication.
pub fn simulate_passage(model: &PerturbedWalkModel, a: f64, stream: RngStream) -> Result<FirstPassageSample> {
    model.prepare()?.simulate_passage(a, stream)
}

/// Monte Carlo estimate of `E t_a`.
pub fn estimate_et(model: &PerturbedWalkModel, a: f64, reps: usize, stream: RngStream) -> Result<PassageSummary> {
    model.prepare()?.estimate_et(a, reps, stream)
}

/// Samples of the backward functional.
pub fn backward_min_functional(
    model: &PerturbedWalkModel,
    depth: Option<usize>,
    reps: usize,
    stream: RngStream,
) -> Result<BackwardRun> {
    model.prepare()?.backward_min_functional(depth, reps, stream)
}

/// `μ, σ², ρ, ν, λ` for the model.
pub fn estimate_rho_nu(
    model: &PerturbedWalkModel,
    depth: Option<usize>,
    reps: usize,
    stream: RngStream,
) -> Result<RenewalConstants> {
    model.prepare()?.estimate_rho_nu(depth, reps, stream)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn history_is_newest_first() {
        let mut h = History::new(3);
        for x in 1..=5 {
            h.push(Innovation::from_increment(x as f64));
        }
        let got: Vec<f64> = h.recent().iter().map(|w| w.increment).collect();
        assert_eq!(got, vec![5.0, 4.0, 3.0]);
    }

    #[test]
    fn deterministic_unperturbed_passage() {
        let mut m = PerturbedWalkModel::plain(IncrementLaw::Deterministic { value: 1.0 });
        assert!(m.validate().is_err());
        m.allow_arithmetic = true;
        let s = simulate_passage(&m, 10.0, RngStream::new(0)).unwrap();
        assert_eq!(s.t_a, 11);
        assert_eq!(s.excess, 1.0);
    }

    #[test]
    fn n0_delays_stopping() {
        let mut m = PerturbedWalkModel::plain(IncrementLaw::Deterministic { value: 1.0 });
        m.allow_arithmetic = true;
        m.n0 = 20;
        assert_eq!(simulate_passage(&m, 10.0, RngStream::new(0)).unwrap().t_a, 20);
    }

    #[test]
    fn rejects_mismatched_dimensions() {
        let mut m = PerturbedWalkModel::tm1();
        m.vector_law = VectorLaw::None;
        assert!(matches!(m.prepare(), Err(Error::Config(_))));
    }

    #[test]
    fn tm1_constants() {
        let p = PerturbedWalkModel::tm1().prepare().unwrap();
        assert_eq!(p.mu(), 1.0);
        assert_eq!(p.sigma2(), 1.0);
        assert!((p.lambda() - 0.5).abs() < 1e-15);
        assert!(p.truncation_bound().unwrap() < 1e-8);
    }

    #[test]
    fn backward_functional_of_positive_walk_is_first_increment() {
        let m = PerturbedWalkModel::plain(IncrementLaw::Exponential { rate: 2.0 });
        let run = backward_min_functional(&m, None, 50, RngStream::new(4)).unwrap();
        for s in &run.samples {
            assert_eq!(s.argmin, -1);
            assert!(s.inf > 0.0);
        }
        assert_eq!(run.capped, 0);
    }
}
