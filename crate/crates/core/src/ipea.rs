//! Kitaev-style iterative phase estimation with majority voting per bit.
//!
//! Bits of `φ/2π = 0.b₁b₂…bₙ` are inferred least significant first. Round `j`
//! uses `M = 2^{n−j}` and feeds back the already-known lower bits as the
//! control phase `ω = 2π·0.0b_{n−j+2}…bₙ`, so that the measured bit is
//! deterministic when the expansion terminates after `n` bits.

use std::f64::consts::TAU;
use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::noise::{self, CountPair, Strategy};
use crate::oracle::ExperimentOracle;
use crate::phase::{wrap_phase, ExperimentSetting, Outcome, Phase};

pub const MAX_BITS: u32 = 52;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IpeaConfig {
    pub n_bits: u32,
    pub shots_per_bit: u32,
    pub rng_seed: u64,
}

impl Default for IpeaConfig {
    fn default() -> Self {
        Self { n_bits: 16, shots_per_bit: 1, rng_seed: 0 }
    }
}

impl IpeaConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_bits == 0 || self.n_bits > MAX_BITS {
            return Err(Error::Config(format!("n_bits must lie in 1..={MAX_BITS}, got {}", self.n_bits)));
        }
        if self.shots_per_bit == 0 {
            return Err(Error::Config("shots_per_bit must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BitRecord {
    /// Position in the binary fraction, 1 = most significant.
    pub k: u32,
    pub m: u64,
    /// Control feedback phase `ω` used for this round.
    pub theta: Phase,
    pub n0: u64,
    pub n1: u64,
    pub bit: u8,
}

/// Feedback phase `2π·0.0b₁b₂…` for the known lower bits (least significant last).
pub fn theta_feedback(known_low_bits: &[u8]) -> Phase {
    let frac: f64 = known_low_bits
        .iter()
        .enumerate()
        .map(|(i, &b)| f64::from(b & 1) * 0.5f64.powi(i as i32 + 2))
        .sum();
    wrap_phase(TAU * frac).expect("finite")
}

/// Runs `n_bits` rounds against `oracle`; returns the estimate and one record
/// per bit, ordered by round (least significant bit first).
pub fn ipea_run<O: ExperimentOracle + ?Sized>(oracle: &mut O, config: &IpeaConfig) -> Result<(Phase, Vec<BitRecord>)> {
    config.validate()?;
    let n = config.n_bits;
    let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed);
    // bits[i] = b_{n−i}: least significant first, as inferred
    let mut bits: Vec<u8> = Vec::with_capacity(n as usize);
    let mut records = Vec::with_capacity(n as usize);
    for j in 1..=n {
        let m = 1u64 << (n - j);
        let known: Vec<u8> = bits.iter().rev().copied().collect();
        let omega = theta_feedback(&known);
        // reference phase whose M-fold multiple is the feedback angle
        let setting = ExperimentSetting::new(m, Phase::new(omega.value() / m as f64)?)?;
        let mut counts = CountPair { n0: 0, n1: 0 };
        for _ in 0..config.shots_per_bit {
            for o in oracle.query(&setting)? {
                match o {
                    Outcome::Zero => counts.n0 += 1,
                    Outcome::One => counts.n1 += 1,
                }
            }
        }
        let bit = noise::reduce_outcome(counts, Strategy::MajorityVote, &mut rng)[0].as_u8();
        records.push(BitRecord { k: n - j + 1, m, theta: omega, n0: counts.n0, n1: counts.n1, bit });
        bits.push(bit);
    }
    let frac: f64 = bits
        .iter()
        .rev()
        .enumerate()
        .map(|(i, &b)| f64::from(b) * 0.5f64.powi(i as i32 + 1))
        .sum();
    Ok((wrap_phase(TAU * frac)?, records))
}

/// Single-shot probability of inferring bit `k` correctly, evaluated exactly
/// as `(1 + e^{−Δx² − a·2^k·T₂})/2`.
pub fn bit_success_probability(delta_x: f64, t2: f64, k: i32, a: f64) -> f64 {
    0.5 * (1.0 + (-delta_x * delta_x - a * 2f64.powi(k) * t2).exp())
}

/// Variant with the decoherence term `a·2^k/T₂`, which decays as `T₂` shrinks.
pub fn bit_success_probability_inverse_t2(delta_x: f64, t2: f64, k: i32, a: f64) -> f64 {
    0.5 * (1.0 + (-delta_x * delta_x - a * 2f64.powi(k) / t2).exp())
}

pub fn write_bit_records_csv<W: Write>(records: &[BitRecord], w: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["k", "m", "theta", "n0", "n1", "bit"])?;
    for r in records {
        wtr.write_record([
            r.k.to_string(),
            r.m.to_string(),
            r.theta.to_string(),
            r.n0.to_string(),
            r.n1.to_string(),
            r.bit.to_string(),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::LikelihoodOracle;
    use crate::phase::circular_distance;
    use std::f64::consts::PI;

    #[test]
    fn feedback_examples() {
        assert_eq!(theta_feedback(&[]).value(), 0.0);
        assert!((theta_feedback(&[1]).value() - PI / 2.0).abs() < 1e-15);
        assert!((theta_feedback(&[1, 1]).value() - 3.0 * PI / 4.0).abs() < 1e-15);
        assert!((theta_feedback(&[0, 1]).value() - PI / 4.0).abs() < 1e-15);
    }

    #[test]
    fn three_bit_truth_is_exact() {
        let truth = Phase::new(TAU * 0.625).unwrap();
        let mut oracle = LikelihoodOracle::seeded(truth, 1);
        let (est, records) = ipea_run(&mut oracle, &IpeaConfig { n_bits: 3, shots_per_bit: 1, rng_seed: 0 }).unwrap();
        assert_eq!(est, truth);
        let bits: Vec<u8> = records.iter().rev().map(|r| r.bit).collect();
        assert_eq!(bits, vec![1, 0, 1]);
        assert_eq!(records.iter().map(|r| r.m).collect::<Vec<_>>(), vec![4, 2, 1]);
        assert!(records.iter().all(|r| r.n0 + r.n1 == 1));
    }

    #[test]
    fn finite_expansions_recovered_for_any_shot_count() {
        for (numer, n_bits) in [(0u64, 4u32), (13, 4), (1, 8), (255, 8), (40_503, 16)] {
            let truth = Phase::new(TAU * numer as f64 / (1u64 << n_bits) as f64).unwrap();
            for shots in [1, 2, 5] {
                let mut oracle = LikelihoodOracle::seeded(truth, numer + shots as u64);
                let cfg = IpeaConfig { n_bits, shots_per_bit: shots, rng_seed: 3 };
                let (est, _) = ipea_run(&mut oracle, &cfg).unwrap();
                assert!(circular_distance(est, truth) < 1e-12, "numer={numer} shots={shots}");
            }
        }
    }

    #[test]
    fn success_probability_formula() {
        assert_eq!(bit_success_probability(0.0, 5.0, 3, 0.0), 1.0);
        assert!((bit_success_probability(1e3, 1.0, 2, 0.1) - 0.5).abs() < 1e-15);
        let v = bit_success_probability(1.0, 2.0, 4, 0.01);
        assert!((v - 0.5 * (1.0 + (-1.32f64).exp())).abs() < 1e-15);
        assert!((v - 0.6335).abs() < 1e-4);
        assert!(bit_success_probability_inverse_t2(0.0, 1e12, 3, 1.0) > 0.999_999);
    }

    #[test]
    fn config_validation() {
        assert!(IpeaConfig { n_bits: 0, ..Default::default() }.validate().is_err());
        assert!(IpeaConfig { shots_per_bit: 0, ..Default::default() }.validate().is_err());
        assert!(IpeaConfig { n_bits: 53, ..Default::default() }.validate().is_err());
    }

    #[test]
    fn records_csv() {
        let truth = Phase::new(1.0).unwrap();
        let mut oracle = LikelihoodOracle::seeded(truth, 1);
        let (_, recs) = ipea_run(&mut oracle, &IpeaConfig { n_bits: 4, ..Default::default() }).unwrap();
        let mut buf = Vec::new();
        write_bit_records_csv(&recs, &mut buf).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert!(s.starts_with("k,m,theta,n0,n1,bit\n"));
        assert_eq!(s.lines().count(), 5);
    }
}
