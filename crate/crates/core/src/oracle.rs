//! Sources of measurement outcomes for the inference loops.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::device::{simulate_probability, DeviceModel};
use crate::error::Result;
use crate::noise::{self, NoiseConfig};
use crate::phase::{likelihood, ExperimentSetting, Outcome, Phase};

/// Maps an experiment setting to one or more observed outcomes.
pub trait ExperimentOracle {
    fn query(&mut self, setting: &ExperimentSetting) -> Result<Vec<Outcome>>;
}

impl<F> ExperimentOracle for F
where
    F: FnMut(&ExperimentSetting) -> Result<Vec<Outcome>>,
{
    fn query(&mut self, setting: &ExperimentSetting) -> Result<Vec<Outcome>> {
        self(setting)
    }
}

/// The simulated device under a noise configuration.
///
/// Per query: circuit probability under phase noise, optional `T2`
/// depolarization, count sampling, then the outcome strategy.
#[derive(Clone, Debug)]
pub struct DeviceOracle {
    pub device: DeviceModel,
    pub noise: NoiseConfig,
    rng: ChaCha8Rng,
}

impl DeviceOracle {
    pub fn new(device: DeviceModel, noise: NoiseConfig, rng: ChaCha8Rng) -> Result<Self> {
        noise.validate()?;
        Ok(Self { device, noise, rng })
    }

    pub fn seeded(device: DeviceModel, noise: NoiseConfig, seed: u64) -> Result<Self> {
        Self::new(device, noise, ChaCha8Rng::seed_from_u64(seed))
    }

    /// Outcome-0 probability after phase noise and decoherence, before counting.
    pub fn outcome_probability(&mut self, setting: &ExperimentSetting) -> Result<f64> {
        let p = simulate_probability(&self.device.instance(*setting), self.noise.sigma_phase, &mut self.rng)?;
        Ok(match self.noise.t2 {
            Some(t2) => noise::depolarize(p, setting.m(), t2),
            None => p,
        })
    }
}

impl ExperimentOracle for DeviceOracle {
    fn query(&mut self, setting: &ExperimentSetting) -> Result<Vec<Outcome>> {
        let p = self.outcome_probability(setting)?;
        let counts = noise::sample_counts(p, self.noise.shots, self.noise.poissonian, &mut self.rng);
        Ok(noise::reduce_outcome(counts, self.noise.strategy, &mut self.rng))
    }
}

/// Ideal single-shot sampler straight from the likelihood.
#[derive(Clone, Debug)]
pub struct LikelihoodOracle {
    pub truth: Phase,
    rng: ChaCha8Rng,
}

impl LikelihoodOracle {
    pub fn seeded(truth: Phase, seed: u64) -> Self {
        Self { truth, rng: ChaCha8Rng::seed_from_u64(seed) }
    }
}

impl ExperimentOracle for LikelihoodOracle {
    fn query(&mut self, setting: &ExperimentSetting) -> Result<Vec<Outcome>> {
        let p0 = likelihood(Outcome::Zero, self.truth, setting);
        let o = if self.rng.random::<f64>() < p0 { Outcome::Zero } else { Outcome::One };
        Ok(vec![o])
    }
}
