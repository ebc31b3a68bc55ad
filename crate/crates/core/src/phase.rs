//! Phases on the circle and the single-ancilla measurement likelihood.
//!
//! All angles are radians. The controlled-`U^M` interferometer with reference
//! phase `theta` returns outcome 0 with probability `cos²(M(φ − θ)/2)`, which
//! is the cycle-unit expression `cos²(πM[φ − θ])` with `φ_cycles = φ / 2π`.

use std::f64::consts::TAU;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// An angle reduced to the canonical range `[0, 2π)`.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct Phase(f64);

impl Phase {
    pub const ZERO: Phase = Phase(0.0);

    /// Wraps any finite angle into `[0, 2π)`.
    pub fn new(radians: f64) -> Result<Self> {
        wrap_phase(radians)
    }

    /// Accepts only values already in `[0, 2π)`.
    pub fn from_canonical(radians: f64) -> Result<Self> {
        if radians.is_finite() && (0.0..TAU).contains(&radians) {
            Ok(Phase(radians))
        } else {
            Err(Error::domain(format!("phase {radians} is outside [0, 2π)")))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }

    /// Rotates by `delta` radians, staying canonical.
    pub fn shifted(self, delta: f64) -> Self {
        Phase(reduce(self.0 + delta))
    }

    pub fn distance(self, other: Phase) -> f64 {
        circular_distance(self, other)
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

impl TryFrom<f64> for Phase {
    type Error = Error;

    fn try_from(value: f64) -> Result<Self> {
        wrap_phase(value)
    }
}

impl From<Phase> for f64 {
    fn from(p: Phase) -> f64 {
        p.0
    }
}

// `rem_euclid` can round up to exactly 2π for tiny negative inputs.
#[inline]
pub(crate) fn reduce(x: f64) -> f64 {
    let r = x.rem_euclid(TAU);
    if r >= TAU {
        0.0
    } else {
        r
    }
}

/// Reduces `x` modulo 2π into `[0, 2π)`.
pub fn wrap_phase(x: f64) -> Result<Phase> {
    if !x.is_finite() {
        return Err(Error::domain(format!("cannot wrap non-finite angle {x}")));
    }
    Ok(Phase(reduce(x)))
}

/// Shortest arc between two phases, in `[0, π]`.
pub fn circular_distance(a: Phase, b: Phase) -> f64 {
    let d = (a.0 - b.0).abs();
    d.min(TAU - d)
}

/// Binary measurement result of the control qubit.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(into = "u8", try_from = "u8")]
pub enum Outcome {
    Zero,
    One,
}

impl Outcome {
    pub fn as_u8(self) -> u8 {
        match self {
            Outcome::Zero => 0,
            Outcome::One => 1,
        }
    }

    pub fn flipped(self) -> Self {
        match self {
            Outcome::Zero => Outcome::One,
            Outcome::One => Outcome::Zero,
        }
    }
}

impl From<Outcome> for u8 {
    fn from(o: Outcome) -> u8 {
        o.as_u8()
    }
}

impl TryFrom<u8> for Outcome {
    type Error = Error;

    fn try_from(v: u8) -> Result<Self> {
        match v {
            0 => Ok(Outcome::Zero),
            1 => Ok(Outcome::One),
            other => Err(Error::domain(format!("outcome must be 0 or 1, got {other}"))),
        }
    }
}

/// One interferometric experiment: `m` applications of `U` and reference phase `theta`.
///
/// The physical feedback phase on the control qubit is `m·theta` (mod 2π).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSetting {
    m: u64,
    theta: Phase,
}

impl ExperimentSetting {
    pub fn new(m: u64, theta: Phase) -> Result<Self> {
        if m == 0 {
            return Err(Error::domain("experiment needs at least one application of U"));
        }
        Ok(Self { m, theta })
    }

    pub fn m(&self) -> u64 {
        self.m
    }

    pub fn theta(&self) -> Phase {
        self.theta
    }

    /// Control-qubit feedback angle `m·θ` reduced to `[0, 2π)`.
    pub fn feedback_angle(&self) -> f64 {
        reduce(self.m as f64 * self.theta.0)
    }
}

/// Probability of `outcome` when the eigenphase is `phi`.
#[inline]
pub fn likelihood(outcome: Outcome, phi: Phase, setting: &ExperimentSetting) -> f64 {
    likelihood_raw(outcome, phi.0, setting.m as f64, setting.theta.0)
}

/// Same as [`likelihood`] on raw radians; used in the particle loops.
#[inline]
pub(crate) fn likelihood_raw(outcome: Outcome, phi: f64, m: f64, theta: f64) -> f64 {
    let c = (m * (phi - theta)).cos();
    match outcome {
        Outcome::Zero => 0.5 * (1.0 + c),
        Outcome::One => 0.5 * (1.0 - c),
    }
}
