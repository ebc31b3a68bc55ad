//! Noise channels and the reduction of photon counts to binary outcomes.

use rand::Rng;
use rand_distr::{Binomial, Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::phase::Outcome;

/// Coincidence counts for the two control-qubit projectors.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CountPair {
    pub n0: u64,
    pub n1: u64,
}

impl CountPair {
    pub fn total(&self) -> u64 {
        self.n0 + self.n1
    }
}

/// How a count pair is collapsed to data for the inference loop.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    SingleShot,
    Sampled(u32),
    MajorityVote,
}

impl Strategy {
    pub fn label(&self) -> String {
        match self {
            Strategy::SingleShot => "single_shot".into(),
            Strategy::Sampled(n) => format!("sampled_{n}"),
            Strategy::MajorityVote => "majority_vote".into(),
        }
    }
}

/// Every noise knob of the simulated device.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseConfig {
    /// Standard deviation (radians) of the Gaussian error on each physical phase.
    pub sigma_phase: f64,
    /// Decoherence time in units of one controlled-`U` application.
    pub t2: Option<f64>,
    /// Target count per measurement.
    pub shots: u64,
    pub strategy: Strategy,
    /// Fluctuate the total count (Poisson) instead of fixing it (binomial).
    pub poissonian: bool,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            sigma_phase: 0.0,
            t2: None,
            shots: 2000,
            strategy: Strategy::MajorityVote,
            poissonian: false,
        }
    }
}

impl NoiseConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma_phase.is_finite() && self.sigma_phase >= 0.0) {
            return Err(Error::Config(format!(
                "sigma_phase must be a finite value >= 0, got {}",
                self.sigma_phase
            )));
        }
        if let Some(t2) = self.t2 {
            if !(t2.is_finite() && t2 > 0.0) {
                return Err(Error::Config(format!("t2 must be > 0, got {t2}")));
            }
        }
        if self.shots == 0 {
            return Err(Error::Config("shots must be >= 1".into()));
        }
        if self.strategy == Strategy::Sampled(0) {
            return Err(Error::Config("sampled strategy needs n >= 1".into()));
        }
        Ok(())
    }
}

/// Mixes `p` toward 1/2 with weight `1 − e^{−m/t2}`.
pub fn depolarize(p: f64, m: u64, t2: f64) -> f64 {
    let keep = (-(m as f64) / t2).exp();
    keep * p + (1.0 - keep) / 2.0
}

/// Replaces each nominal phase with a draw from `N(nominal, sigma_phase)`.
pub fn perturb_phases<R: Rng + ?Sized>(nominal: &[f64], sigma_phase: f64, rng: &mut R) -> Vec<f64> {
    let mut out = nominal.to_vec();
    perturb_in_place(&mut out, sigma_phase, rng);
    out
}

pub(crate) fn perturb_in_place<R: Rng + ?Sized>(phases: &mut [f64], sigma_phase: f64, rng: &mut R) {
    if sigma_phase == 0.0 {
        return;
    }
    let normal = Normal::new(0.0, sigma_phase).expect("sigma_phase validated finite and >= 0");
    for p in phases.iter_mut() {
        *p += normal.sample(rng);
    }
}

/// Draws a count pair for outcome-0 probability `p`.
pub fn sample_counts<R: Rng + ?Sized>(p: f64, shots: u64, poissonian: bool, rng: &mut R) -> CountPair {
    let p = p.clamp(0.0, 1.0);
    loop {
        let counts = if poissonian {
            CountPair {
                n0: poisson(shots as f64 * p, rng),
                n1: poisson(shots as f64 * (1.0 - p), rng),
            }
        } else {
            let n0 = Binomial::new(shots, p).expect("p clamped to [0, 1]").sample(rng);
            CountPair { n0, n1: shots - n0 }
        };
        if counts.total() > 0 {
            return counts;
        }
    }
}

fn poisson<R: Rng + ?Sized>(lambda: f64, rng: &mut R) -> u64 {
    if lambda <= 0.0 {
        return 0;
    }
    let v: f64 = Poisson::new(lambda).expect("positive finite rate").sample(rng);
    v as u64
}

/// Collapses counts into the outcome list fed to the inference loop.
pub fn reduce_outcome<R: Rng + ?Sized>(counts: CountPair, strategy: Strategy, rng: &mut R) -> Vec<Outcome> {
    match strategy {
        Strategy::MajorityVote => vec![majority(counts, rng)],
        Strategy::SingleShot => resample(counts, 1, rng),
        Strategy::Sampled(n) => resample(counts, n, rng),
    }
}

fn majority<R: Rng + ?Sized>(counts: CountPair, rng: &mut R) -> Outcome {
    use std::cmp::Ordering;
    match counts.n0.cmp(&counts.n1) {
        Ordering::Greater => Outcome::Zero,
        Ordering::Less => Outcome::One,
        Ordering::Equal => {
            if rng.random_bool(0.5) {
                Outcome::Zero
            } else {
                Outcome::One
            }
        }
    }
}

fn resample<R: Rng + ?Sized>(counts: CountPair, n: u32, rng: &mut R) -> Vec<Outcome> {
    let p0 = counts.n0 as f64 / counts.total() as f64;
    (0..n)
        .map(|_| if rng.random::<f64>() < p0 { Outcome::Zero } else { Outcome::One })
        .collect()
}
