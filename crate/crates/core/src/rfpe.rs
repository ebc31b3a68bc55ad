//! Rejection filtering phase estimation.
//!
//! The belief over the eigenphase is a Gaussian `N(μ, σ)` on the circle. Each
//! update draws particles from it, keeps each with probability proportional
//! to the likelihood of the observed outcome, and refits a Gaussian to the
//! survivors. Experiments are chosen by the particle guess heuristic.

use std::f64::consts::{PI, TAU};
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::oracle::ExperimentOracle;
use crate::phase::{circular_distance, likelihood_raw, reduce, wrap_phase, ExperimentSetting, Outcome, Phase};

/// Largest evolution length the heuristic will request (exact in `f64`).
pub const MAX_M: u64 = 1 << 53;

/// Fresh-particle retries before the prior is widened.
pub const UPDATE_RETRIES: usize = 10;

/// Widening factor applied to `σ` once the retries are exhausted.
pub const SIGMA_INFLATION: f64 = 1.5;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussianBelief {
    mu: Phase,
    sigma: f64,
}

impl GaussianBelief {
    pub fn new(mu: f64, sigma: f64) -> Result<Self> {
        if !(sigma.is_finite() && sigma > 0.0) {
            return Err(Error::domain(format!("belief sigma must be finite and > 0, got {sigma}")));
        }
        Ok(Self { mu: wrap_phase(mu)?, sigma })
    }

    /// `N(π, π²)`, a broad stand-in for the uniform prior.
    pub fn broad() -> Self {
        Self { mu: Phase::new(PI).expect("finite"), sigma: PI }
    }

    pub fn mu(&self) -> Phase {
        self.mu
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }
}

/// How the accepted particles are turned into a standard deviation.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VarianceEstimator {
    /// Unbiased sample variance in each frame; the lower-variance frame wins.
    #[default]
    Unbiased,
    /// The expression `√((V − S²)/(N − 1))` with `S` the raw sum, kept for
    /// comparison. It is negative for any `N > 1` and therefore always fails.
    LiteralSum,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RfpeConfig {
    pub n_particles: usize,
    pub kappa_e: f64,
    pub n_steps: usize,
    /// Caps the evolution length at `⌊t2_cap⌋` when set.
    pub t2_cap: Option<f64>,
    pub rng_seed: u64,
    pub variance: VarianceEstimator,
}

impl Default for RfpeConfig {
    fn default() -> Self {
        Self {
            n_particles: 1000,
            kappa_e: 1.0,
            n_steps: 50,
            t2_cap: None,
            rng_seed: 0,
            variance: VarianceEstimator::Unbiased,
        }
    }
}

impl RfpeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_particles < 2 {
            return Err(Error::Config("n_particles must be >= 2".into()));
        }
        if !(self.kappa_e > 0.0 && self.kappa_e <= 1.0) {
            return Err(Error::Config(format!("kappa_e must lie in (0, 1], got {}", self.kappa_e)));
        }
        if let Some(t2) = self.t2_cap {
            if !(t2.is_finite() && t2 > 0.0) {
                return Err(Error::Config(format!("t2_cap must be > 0, got {t2}")));
            }
        }
        Ok(())
    }
}

fn heuristic_m(sigma: f64) -> u64 {
    let m = (1.25 / sigma).ceil();
    if m >= MAX_M as f64 {
        MAX_M
    } else {
        (m as u64).max(1)
    }
}

fn draw_theta<R: Rng + ?Sized>(belief: &GaussianBelief, rng: &mut R) -> Phase {
    let z: f64 = StandardNormal.sample(rng);
    Phase::new(belief.mu.value() + belief.sigma * z).expect("finite draw")
}

/// Particle guess heuristic: `M = ⌈1.25/σ⌉`, `θ ~ N(μ, σ)`.
pub fn pgh<R: Rng + ?Sized>(belief: &GaussianBelief, rng: &mut R) -> ExperimentSetting {
    let theta = draw_theta(belief, rng);
    ExperimentSetting::new(heuristic_m(belief.sigma), theta).expect("m >= 1")
}

/// Heuristic with the evolution length capped by the decoherence time.
pub fn pgh_capped<R: Rng + ?Sized>(belief: &GaussianBelief, t2: f64, rng: &mut R) -> ExperimentSetting {
    let cap = t2.floor().max(1.0);
    let m = heuristic_m(belief.sigma).min(if cap >= MAX_M as f64 { MAX_M } else { cap as u64 });
    let theta = draw_theta(belief, rng);
    ExperimentSetting::new(m.max(1), theta).expect("m >= 1")
}

/// Particle bookkeeping of one rejection pass.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RejectionStats {
    pub accepted: usize,
    pub proposed: usize,
}

impl RejectionStats {
    pub fn acceptance_fraction(&self) -> f64 {
        self.accepted as f64 / self.proposed as f64
    }
}

#[derive(Clone, Copy, Default)]
struct Welford {
    n: usize,
    mean: f64,
    m2: f64,
}

impl Welford {
    #[inline]
    fn push(&mut self, x: f64) {
        self.n += 1;
        let d = x - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (x - self.mean);
    }

    fn variance(&self) -> f64 {
        self.m2 / (self.n - 1) as f64
    }
}

/// Picks the frame (original or shifted by π) with the smaller spread and
/// returns the mean mapped back to the original frame with that spread.
fn dual_frame(direct: (f64, f64), shifted: (f64, f64)) -> (f64, f64) {
    if shifted.1 < direct.1 {
        (reduce(shifted.0 - PI), shifted.1)
    } else {
        direct
    }
}

/// One rejection-filtering pass; returns the refit belief and particle counts.
pub fn rejection_update_with_stats<R: Rng + ?Sized>(
    outcome: Outcome,
    belief: &GaussianBelief,
    setting: &ExperimentSetting,
    config: &RfpeConfig,
    rng: &mut R,
) -> (Result<GaussianBelief>, RejectionStats) {
    let (mu, sigma) = (belief.mu.value(), belief.sigma);
    let (m, theta) = (setting.m() as f64, setting.theta().value());
    let kappa = config.kappa_e;

    let mut direct = Welford::default();
    let mut shifted = Welford::default();
    let (mut sum, mut sum_sq, mut sum_sq_shifted) = (0.0, 0.0, 0.0);
    for _ in 0..config.n_particles {
        let z: f64 = StandardNormal.sample(rng);
        let x = reduce(mu + sigma * z);
        let u: f64 = rng.random();
        if likelihood_raw(outcome, x, m, theta) >= kappa * u {
            let xs = reduce(x + PI);
            match config.variance {
                VarianceEstimator::Unbiased => {
                    direct.push(x);
                    shifted.push(xs);
                }
                VarianceEstimator::LiteralSum => {
                    direct.n += 1;
                    sum += x;
                    sum_sq += x * x;
                    sum_sq_shifted += xs * xs;
                }
            }
        }
    }

    let stats = RejectionStats { accepted: direct.n, proposed: config.n_particles };
    let failure = Error::UpdateFailure { accepted: stats.accepted, proposed: stats.proposed };
    if direct.n < 2 {
        return (Err(failure), stats);
    }

    let (mean, var) = match config.variance {
        VarianceEstimator::Unbiased => dual_frame((direct.mean, direct.variance()), (shifted.mean, shifted.variance())),
        VarianceEstimator::LiteralSum => {
            let dof = (direct.n - 1) as f64;
            let a = (sum_sq - sum * sum) / dof;
            let b = (sum_sq_shifted - sum * sum) / dof;
            (sum / direct.n as f64, a.min(b))
        }
    };
    let sd = var.sqrt();
    if !(sd.is_finite() && sd > 0.0) {
        return (Err(failure), stats);
    }
    (GaussianBelief::new(mean, sd), stats)
}

/// Bayesian update of a Gaussian belief by rejection filtering.
pub fn rejection_update<R: Rng + ?Sized>(
    outcome: Outcome,
    belief: &GaussianBelief,
    setting: &ExperimentSetting,
    config: &RfpeConfig,
    rng: &mut R,
) -> Result<GaussianBelief> {
    rejection_update_with_stats(outcome, belief, setting, config, rng).0
}

/// [`rejection_update`] with the retry policy: up to [`UPDATE_RETRIES`] fresh
/// attempts, then one attempt from a prior widened by [`SIGMA_INFLATION`].
pub fn robust_update<R: Rng + ?Sized>(
    outcome: Outcome,
    belief: &GaussianBelief,
    setting: &ExperimentSetting,
    config: &RfpeConfig,
    rng: &mut R,
) -> Result<GaussianBelief> {
    let mut last = None;
    for _ in 0..=UPDATE_RETRIES {
        match rejection_update(outcome, belief, setting, config, rng) {
            Ok(b) => return Ok(b),
            Err(e) => last = Some(e),
        }
    }
    let widened = GaussianBelief::new(belief.mu.value(), belief.sigma * SIGMA_INFLATION)?;
    rejection_update(outcome, &widened, setting, config, rng).map_err(|e| last.unwrap_or(e))
}

/// Wrapped-normal density (unnormalized) of `N(mu, sigma)` at `x`.
fn wrapped_normal(x: f64, mu: f64, sigma: f64, wraps: i32) -> f64 {
    (-wraps..=wraps)
        .map(|k| {
            let d = x - mu + TAU * k as f64;
            (-0.5 * (d / sigma).powi(2)).exp()
        })
        .sum()
}

fn weighted_moments(points: impl Iterator<Item = (f64, f64)> + Clone, total: f64) -> (f64, f64) {
    let mean = points.clone().map(|(x, w)| x * w).sum::<f64>() / total;
    let var = points.map(|(x, w)| w * (x - mean).powi(2)).sum::<f64>() / total;
    (mean, var)
}

/// Exact Bayes update on a uniform grid of the circle, summarized with the
/// same dual-frame moment rule as [`rejection_update`].
///
/// Priors narrower than eight grid spacings cannot be resolved on the circle
/// grid; those are integrated on a uniform grid over `μ ± 12σ` instead.
pub fn grid_posterior(
    outcome: Outcome,
    belief: &GaussianBelief,
    setting: &ExperimentSetting,
    n_grid: usize,
) -> Result<GaussianBelief> {
    if n_grid < 1024 {
        return Err(Error::domain("grid_posterior needs at least 1024 grid points"));
    }
    let (mu, sigma) = (belief.mu.value(), belief.sigma);
    let (m, theta) = (setting.m() as f64, setting.theta().value());
    let h = TAU / n_grid as f64;

    let (mean, var) = if sigma < 8.0 * h {
        let step = 24.0 * sigma / (n_grid - 1) as f64;
        let pts: Vec<(f64, f64)> = (0..n_grid)
            .map(|i| {
                let off = -12.0 * sigma + i as f64 * step;
                let w = (-0.5 * (off / sigma).powi(2)).exp() * likelihood_raw(outcome, mu + off, m, theta);
                (off, w)
            })
            .collect();
        let total: f64 = pts.iter().map(|p| p.1).sum();
        if !(total > 0.0) {
            return Err(Error::DegenerateUpdate);
        }
        let (off, var) = weighted_moments(pts.iter().copied(), total);
        (mu + off, var)
    } else {
        let wraps = (8.0 * sigma / TAU).ceil() as i32 + 1;
        let pts: Vec<(f64, f64)> = (0..n_grid)
            .map(|i| {
                let x = i as f64 * h;
                (x, wrapped_normal(x, mu, sigma, wraps) * likelihood_raw(outcome, x, m, theta))
            })
            .collect();
        let total: f64 = pts.iter().map(|p| p.1).sum();
        if !(total > 0.0) {
            return Err(Error::DegenerateUpdate);
        }
        let direct = weighted_moments(pts.iter().copied(), total);
        let shifted = weighted_moments(pts.iter().map(|&(x, w)| (reduce(x + PI), w)), total);
        dual_frame(direct, shifted)
    };
    if !(var > 0.0) {
        return Err(Error::DegenerateUpdate);
    }
    GaussianBelief::new(mean, var.sqrt())
}

/// One Bayesian update in an RFPE run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InferenceTraceRow {
    /// 1-based experiment index; strategies returning several outcomes per
    /// experiment produce several rows with the same step.
    pub step: usize,
    pub setting: ExperimentSetting,
    pub outcome: Outcome,
    pub posterior: GaussianBelief,
    pub error: Option<f64>,
}

/// Full RFPE loop; rows are appended to `trace` as they are produced so a
/// failure leaves the completed prefix in place.
pub fn rfpe_run_into<O: ExperimentOracle + ?Sized>(
    oracle: &mut O,
    initial: GaussianBelief,
    config: &RfpeConfig,
    truth: Option<Phase>,
    trace: &mut Vec<InferenceTraceRow>,
) -> Result<GaussianBelief> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed);
    let mut belief = initial;
    for step in 1..=config.n_steps {
        let setting = match config.t2_cap {
            Some(t2) => pgh_capped(&belief, t2, &mut rng),
            None => pgh(&belief, &mut rng),
        };
        for outcome in oracle.query(&setting)? {
            belief = robust_update(outcome, &belief, &setting, config, &mut rng)?;
            trace.push(InferenceTraceRow {
                step,
                setting,
                outcome,
                posterior: belief,
                error: truth.map(|t| circular_distance(belief.mu, t)),
            });
        }
    }
    Ok(belief)
}

pub fn rfpe_run<O: ExperimentOracle + ?Sized>(
    oracle: &mut O,
    initial: GaussianBelief,
    config: &RfpeConfig,
    truth: Option<Phase>,
) -> Result<Vec<InferenceTraceRow>> {
    let mut trace = Vec::with_capacity(config.n_steps);
    rfpe_run_into(oracle, initial, config, truth, &mut trace)?;
    Ok(trace)
}

/// Final estimate of a trace, or the prior when the trace is empty.
pub fn final_belief(trace: &[InferenceTraceRow], prior: GaussianBelief) -> GaussianBelief {
    trace.last().map_or(prior, |r| r.posterior)
}

/// Last row of every experiment step, in step order.
pub fn per_step(trace: &[InferenceTraceRow]) -> Vec<&InferenceTraceRow> {
    let mut out: Vec<&InferenceTraceRow> = Vec::new();
    for row in trace {
        match out.last_mut() {
            Some(last) if last.step == row.step => *last = row,
            _ => out.push(row),
        }
    }
    out
}

pub fn write_trace_csv<W: Write>(trace: &[InferenceTraceRow], w: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["step", "m", "theta", "outcome", "mu", "sigma", "error"])?;
    for r in trace {
        wtr.write_record([
            r.step.to_string(),
            r.setting.m().to_string(),
            r.setting.theta().to_string(),
            r.outcome.as_u8().to_string(),
            r.posterior.mu().to_string(),
            r.posterior.sigma().to_string(),
            r.error.map(|e| e.to_string()).unwrap_or_default(),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn write_trace_json<W: Write>(trace: &[InferenceTraceRow], w: W) -> Result<()> {
    serde_json::to_writer_pretty(w, trace)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::LikelihoodOracle;
    use crate::phase::likelihood;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    fn belief(mu: f64, sigma: f64) -> GaussianBelief {
        GaussianBelief::new(mu, sigma).unwrap()
    }

    #[test]
    fn pgh_lengths() {
        let mut r = rng(0);
        assert_eq!(pgh(&belief(1.0, 1.25), &mut r).m(), 1);
        assert_eq!(pgh(&belief(1.0, 0.01), &mut r).m(), 125);
        assert_eq!(pgh(&belief(1.0, 0.5), &mut r).m(), 3);
        assert_eq!(pgh(&belief(1.0, 10.0), &mut r).m(), 1);
        assert_eq!(pgh(&belief(1.0, 1e-300), &mut r).m(), MAX_M);
    }

    #[test]
    fn pgh_capped_lengths() {
        let mut r = rng(0);
        assert_eq!(pgh_capped(&belief(1.0, 0.01), 16.0, &mut r).m(), 16);
        assert_eq!(pgh_capped(&belief(1.0, 1.25), 100.0, &mut r).m(), 1);
        assert_eq!(pgh_capped(&belief(1.0, 0.001), 0.5, &mut r).m(), 1);
    }

    #[test]
    fn pgh_theta_follows_belief() {
        let mut r = rng(1);
        let b = belief(2.0, 0.1);
        let n = 20_000;
        let mean = (0..n).map(|_| pgh(&b, &mut r).theta().value()).sum::<f64>() / n as f64;
        assert!((mean - 2.0).abs() < 4.0 * 0.1 / (n as f64).sqrt());
    }

    #[test]
    fn belief_validation() {
        assert!(GaussianBelief::new(1.0, 0.0).is_err());
        assert!(GaussianBelief::new(1.0, f64::NAN).is_err());
        assert!(GaussianBelief::new(f64::INFINITY, 1.0).is_err());
        assert!((GaussianBelief::new(-1.0, 1.0).unwrap().mu().value() - (TAU - 1.0)).abs() < 1e-15);
    }

    #[test]
    fn near_delta_prior_is_a_fixed_point() {
        let prior = belief(4.8741, 1e-9);
        let setting = ExperimentSetting::new(3, Phase::new(4.8).unwrap()).unwrap();
        let cfg = RfpeConfig::default();
        let post = rejection_update(Outcome::Zero, &prior, &setting, &cfg, &mut rng(2)).unwrap();
        assert!(circular_distance(post.mu(), prior.mu()) < 1e-6);
        // the refit is a sample standard deviation of ~N_acc draws; its
        // relative spread is 1/sqrt(2(N_acc - 1))
        let rel_se = 1.0 / (2.0 * 999.0f64).sqrt();
        assert!((post.sigma() / prior.sigma() - 1.0).abs() < 5.0 * rel_se);
    }

    #[test]
    fn acceptance_fraction_matches_quadrature() {
        let prior = belief(PI, 0.5);
        let setting = ExperimentSetting::new(1, Phase::new(PI).unwrap()).unwrap();
        // ∫ cos²((x − π)/2) N(x; π, 0.5) dx by composite Simpson over ±12σ
        let n = 20_000;
        let (a, b) = (PI - 6.0, PI + 6.0);
        let hh = (b - a) / n as f64;
        let f = |x: f64| {
            ((x - PI) / 2.0).cos().powi(2) * (-0.5 * ((x - PI) / 0.5).powi(2)).exp() / (0.5 * TAU.sqrt())
        };
        let mut s = f(a) + f(b);
        for i in 1..n {
            s += f(a + i as f64 * hh) * if i % 2 == 1 { 4.0 } else { 2.0 };
        }
        let expected = s * hh / 3.0;
        // closed form: (1 + e^{-σ²/2}) / 2
        assert!((expected - 0.5 * (1.0 + (-0.125f64).exp())).abs() < 1e-10);

        let cfg = RfpeConfig { n_particles: 100_000, ..Default::default() };
        let (_, stats) = rejection_update_with_stats(Outcome::Zero, &prior, &setting, &cfg, &mut rng(3));
        let se = (expected * (1.0 - expected) / cfg.n_particles as f64).sqrt();
        assert!((stats.acceptance_fraction() - expected).abs() < 3.0 * se);
    }

    #[test]
    fn rejection_matches_grid_on_reference_case() {
        let prior = belief(PI, 0.5);
        let setting = ExperimentSetting::new(2, Phase::new(PI).unwrap()).unwrap();
        let exact = grid_posterior(Outcome::Zero, &prior, &setting, 1 << 16).unwrap();
        let cfg = RfpeConfig::default();
        let mut r = rng(4);
        let reps = 30;
        let runs: Vec<GaussianBelief> = (0..reps)
            .map(|_| rejection_update(Outcome::Zero, &prior, &setting, &cfg, &mut r).unwrap())
            .collect();
        let stat = |v: Vec<f64>| {
            let m = v.iter().sum::<f64>() / reps as f64;
            let sd = (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (reps - 1) as f64).sqrt();
            (m, sd / (reps as f64).sqrt())
        };
        let (mu, mu_se) = stat(runs.iter().map(|b| b.mu().value()).collect());
        let (sd, sd_se) = stat(runs.iter().map(|b| b.sigma()).collect());
        assert!((mu - exact.mu().value()).abs() < 3.0 * mu_se);
        assert!((sd - exact.sigma()).abs() < 3.0 * sd_se);
    }

    #[test]
    fn grid_posterior_symmetry_and_refinement() {
        let setting = ExperimentSetting::new(1, Phase::ZERO).unwrap();
        let post = grid_posterior(Outcome::Zero, &GaussianBelief::broad(), &setting, 1 << 16).unwrap();
        assert!(circular_distance(post.mu(), Phase::ZERO) < 1e-3);

        let prior = belief(2.0, 0.3);
        let s = ExperimentSetting::new(4, Phase::new(1.7).unwrap()).unwrap();
        let a = grid_posterior(Outcome::One, &prior, &s, 1 << 15).unwrap();
        let b = grid_posterior(Outcome::One, &prior, &s, 1 << 16).unwrap();
        assert!(circular_distance(a.mu(), b.mu()) < 1e-9);
        assert!((a.sigma() - b.sigma()).abs() < 1e-9);
    }

    #[test]
    fn grid_posterior_near_delta_and_errors() {
        let prior = belief(4.8741, 1e-9);
        let s = ExperimentSetting::new(3, Phase::new(4.8).unwrap()).unwrap();
        let post = grid_posterior(Outcome::Zero, &prior, &s, 1 << 12).unwrap();
        assert!(circular_distance(post.mu(), prior.mu()) < 1e-12);
        assert!((post.sigma() / prior.sigma() - 1.0).abs() < 1e-6);
        assert!(grid_posterior(Outcome::Zero, &prior, &s, 100).is_err());

        // likelihood vanishes only at the prior mean; the posterior stays proper
        let tight = belief(1.0, 1e-9);
        let s = ExperimentSetting::new(1, Phase::new(1.0).unwrap()).unwrap();
        let post = grid_posterior(Outcome::One, &tight, &s, 4096).unwrap();
        assert!(post.sigma().is_finite() && post.sigma() > 0.0);
        assert!(circular_distance(post.mu(), tight.mu()) < 1e-8);
    }

    #[test]
    fn dual_frame_handles_the_seam() {
        let prior = belief(0.02, 0.2);
        let s = ExperimentSetting::new(2, Phase::new(0.0).unwrap()).unwrap();
        let exact = grid_posterior(Outcome::Zero, &prior, &s, 1 << 16).unwrap();
        assert!(exact.sigma() < 0.25);
        let post = rejection_update(Outcome::Zero, &prior, &s, &RfpeConfig::default(), &mut rng(5)).unwrap();
        assert!(circular_distance(post.mu(), exact.mu()) < 0.05);
        assert!(post.sigma() < 0.3);
    }

    #[test]
    fn impossible_outcome_fails_then_recovers_with_widening() {
        let prior = belief(1.0, 1e-9);
        let s = ExperimentSetting::new(1, Phase::new(1.0).unwrap()).unwrap();
        let cfg = RfpeConfig::default();
        assert!(matches!(
            rejection_update(Outcome::One, &prior, &s, &cfg, &mut rng(6)),
            Err(Error::UpdateFailure { accepted: 0, .. })
        ));
        assert!(robust_update(Outcome::One, &prior, &s, &cfg, &mut rng(6)).is_err());
    }

    #[test]
    fn literal_variance_always_fails() {
        let cfg = RfpeConfig { variance: VarianceEstimator::LiteralSum, ..Default::default() };
        let s = ExperimentSetting::new(1, Phase::ZERO).unwrap();
        let r = rejection_update(Outcome::Zero, &GaussianBelief::broad(), &s, &cfg, &mut rng(7));
        assert!(matches!(r, Err(Error::UpdateFailure { .. })));
    }

    #[test]
    fn zero_steps_returns_prior() {
        let mut oracle = LikelihoodOracle::seeded(Phase::new(1.0).unwrap(), 0);
        let cfg = RfpeConfig { n_steps: 0, ..Default::default() };
        let trace = rfpe_run(&mut oracle, GaussianBelief::broad(), &cfg, None).unwrap();
        assert!(trace.is_empty());
        assert_eq!(final_belief(&trace, GaussianBelief::broad()), GaussianBelief::broad());
    }

    #[test]
    fn adversarial_oracle_keeps_belief_valid() {
        let truth = Phase::new(4.8741).unwrap();
        let mut oracle = |s: &ExperimentSetting| -> Result<Vec<Outcome>> {
            let worst = if likelihood(Outcome::Zero, truth, s) < 0.5 { Outcome::Zero } else { Outcome::One };
            Ok(vec![worst])
        };
        let cfg = RfpeConfig { n_steps: 60, ..Default::default() };
        let mut trace = Vec::new();
        let res = rfpe_run_into(&mut oracle, GaussianBelief::broad(), &cfg, Some(truth), &mut trace);
        assert!(res.is_ok() || matches!(res, Err(Error::UpdateFailure { .. })));
        for row in &trace {
            let b = row.posterior;
            assert!(b.sigma().is_finite() && b.sigma() > 0.0 && b.sigma() < 10.0);
            assert!((0.0..TAU).contains(&b.mu().value()));
        }
    }

    #[test]
    fn seeded_runs_are_identical() {
        let truth = Phase::new(4.8741).unwrap();
        let cfg = RfpeConfig { n_steps: 30, rng_seed: 11, ..Default::default() };
        let run = || {
            let mut o = LikelihoodOracle::seeded(truth, 5);
            let t = rfpe_run(&mut o, GaussianBelief::broad(), &cfg, Some(truth)).unwrap();
            let mut buf = Vec::new();
            write_trace_csv(&t, &mut buf).unwrap();
            buf
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn trace_csv_header() {
        let mut buf = Vec::new();
        write_trace_csv(&[], &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "step,m,theta,outcome,mu,sigma,error\n");
    }

    #[test]
    fn per_step_keeps_last_row() {
        let truth = Phase::new(1.0).unwrap();
        let mut o = |_: &ExperimentSetting| -> Result<Vec<Outcome>> { Ok(vec![Outcome::Zero, Outcome::One, Outcome::Zero]) };
        let cfg = RfpeConfig { n_steps: 4, ..Default::default() };
        let trace = rfpe_run(&mut o, GaussianBelief::broad(), &cfg, Some(truth)).unwrap();
        assert_eq!(trace.len(), 12);
        let steps = per_step(&trace);
        assert_eq!(steps.len(), 4);
        assert!(std::ptr::eq(steps[3], trace.last().unwrap()));
    }
}
