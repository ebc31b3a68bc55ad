//! Closed-form breakdown analysis of majority voting and T2 unit conversion.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Majority-vote inference of `n_bits` bits with `n` shots each, under a
/// time-independent depolarizing error of probability `pe`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VotingScenario {
    pub p0: f64,
    pub pe: f64,
    pub n: u64,
    pub n_bits: u64,
}

impl VotingScenario {
    pub fn new(p0: f64, pe: f64, n: u64, n_bits: u64) -> Result<Self> {
        if !(p0 > 0.5 && p0 <= 1.0) {
            return Err(Error::domain(format!("p0 must lie in (1/2, 1], got {p0}")));
        }
        if !(0.0..1.0).contains(&pe) {
            return Err(Error::domain(format!("pe must lie in [0, 1), got {pe}")));
        }
        Ok(Self { p0, pe, n, n_bits })
    }
}

/// `P = P₀(1 − Pₑ) + Pₑ/2`.
pub fn effective_probability(s: &VotingScenario) -> f64 {
    s.p0 * (1.0 - s.pe) + s.pe / 2.0
}

/// Chernoff bound `exp(−n(p − ½)²/(2p))` on a wrong majority.
pub fn chernoff_bound(p: f64, n: u64) -> Result<f64> {
    if !(p > 0.5 && p <= 1.0) {
        return Err(Error::domain(format!("Chernoff bound needs 1/2 < p <= 1, got {p}")));
    }
    Ok((-(n as f64) * (p - 0.5).powi(2) / (2.0 * p)).exp())
}

/// Mean number of wrongly inferred bits.
pub fn expected_bad_bits(s: &VotingScenario) -> Result<f64> {
    Ok(s.n_bits as f64 * chernoff_bound(effective_probability(s), s.n)?)
}

fn check_critical_args(n_bits: u64, n: u64, pe: f64) -> Result<()> {
    if n == 0 || n_bits < 2 {
        return Err(Error::domain("critical signal needs n >= 1 and n_bits >= 2"));
    }
    if !(0.0..1.0).contains(&pe) {
        return Err(Error::domain(format!("pe must lie in [0, 1), got {pe}")));
    }
    Ok(())
}

/// Critical noiseless signal `½ + (√(n_bits·ln n_bits + ln² n_bits) − ln n_bits)/(n·|1 − pe|)`.
pub fn critical_signal(n_bits: u64, n: u64, pe: f64) -> Result<f64> {
    check_critical_args(n_bits, n, pe)?;
    let l = (n_bits as f64).ln();
    Ok(0.5 + ((n_bits as f64 * l + l * l).sqrt() - l) / (n as f64 * (1.0 - pe).abs()))
}

/// Same expression with the denominator `n·(pe − 1)` as printed; it lies
/// below ½ for every `pe < 1`.
pub fn critical_signal_literal(n_bits: u64, n: u64, pe: f64) -> Result<f64> {
    check_critical_args(n_bits, n, pe)?;
    let l = (n_bits as f64).ln();
    Ok(0.5 + ((n_bits as f64 * l + l * l).sqrt() - l) / (n as f64 * (pe - 1.0)))
}

/// Smallest `p0` for which `expected_bad_bits` equals one, solved from the
/// quadratic `y² − 2yL/n − L/n = 0` in `y = P − ½`, `L = ln n_bits`.
pub fn critical_signal_solved(n_bits: u64, n: u64, pe: f64) -> Result<f64> {
    check_critical_args(n_bits, n, pe)?;
    let l = (n_bits as f64).ln();
    let nf = n as f64;
    let y = (l + (l * l + nf * l).sqrt()) / nf;
    Ok(0.5 + y / (1.0 - pe))
}

/// `P(Bin(n, p) ≤ n/2)` by direct summation with log-space coefficients.
pub fn exact_minority_tail(p: f64, n: u64) -> f64 {
    if n == 0 {
        return 1.0;
    }
    let (lp, lq) = (p.ln(), (1.0 - p).ln());
    let mut log_binom = 0.0f64; // ln C(n, 0)
    let mut total = 0.0;
    for k in 0..=n / 2 {
        if k > 0 {
            log_binom += ((n - k + 1) as f64).ln() - (k as f64).ln();
        }
        let term = log_binom + k as f64 * lp + (n - k) as f64 * lq;
        total += term.exp();
    }
    total.min(1.0)
}

/// Decoherence time in seconds from per-gate units.
pub fn physical_t2(t2_units: f64, gate_time: f64) -> Result<f64> {
    if !(t2_units > 0.0 && gate_time > 0.0) {
        return Err(Error::domain("T2 and gate time must both be positive"));
    }
    Ok(t2_units * gate_time)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn effective_probability_examples() {
        let s = VotingScenario::new(0.8, 0.0, 10, 4).unwrap();
        assert_eq!(effective_probability(&s), 0.8);
        let s = VotingScenario::new(2.0 / 3.0, 0.3, 10, 4).unwrap();
        assert!((effective_probability(&s) - 0.616_666_666_666_666_7).abs() < 1e-15);
        let s = VotingScenario::new(0.9, 1.0 - 1e-12, 10, 4).unwrap();
        assert!((effective_probability(&s) - 0.5).abs() < 1e-11);
        assert!(VotingScenario::new(0.5, 0.1, 1, 1).is_err());
        assert!(VotingScenario::new(0.7, 1.0, 1, 1).is_err());
    }

    #[test]
    fn chernoff_examples() {
        let b = chernoff_bound(2.0 / 3.0, 500).unwrap();
        let expected = (-125.0f64 / 12.0).exp();
        assert!((b / expected - 1.0).abs() < 1e-12);
        assert!(chernoff_bound(0.5 + 1e-9, 100).unwrap() > 0.999_999);
        assert_eq!(chernoff_bound(0.7, 0).unwrap(), 1.0);
        assert!(chernoff_bound(0.5, 10).is_err());
        assert!(chernoff_bound(0.3, 10).is_err());
        assert!(exact_minority_tail(2.0 / 3.0, 500) <= b);
    }

    #[test]
    fn expected_bad_bits_examples() {
        let s = VotingScenario::new(2.0 / 3.0, 0.0, 500, 16).unwrap();
        let v = expected_bad_bits(&s).unwrap();
        assert!((v - 16.0 * (-125.0f64 / 12.0).exp()).abs() < 1e-15);
        assert!((v - 4.78e-4).abs() < 1e-6);
        assert_eq!(expected_bad_bits(&VotingScenario { n_bits: 0, ..s }).unwrap(), 0.0);
        let noisy = VotingScenario::new(2.0 / 3.0, 1.0 - 1e-9, 500, 16).unwrap();
        assert!((expected_bad_bits(&noisy).unwrap() - 16.0).abs() < 1e-6);
    }

    #[test]
    fn critical_signal_examples() {
        let l = 16f64.ln();
        let expected = 0.5 + ((16.0 * l + l * l).sqrt() - l) / 500.0;
        let v = critical_signal(16, 500, 0.0).unwrap();
        assert!((v - expected).abs() < 1e-15);
        assert!((v - 0.508_884).abs() < 1e-6);
        assert!(critical_signal(16, 1_000_000_000, 0.0).unwrap() - 0.5 < 1e-8);
        assert!(critical_signal(16, 500, 1.0).is_err());
        assert!(critical_signal_literal(16, 500, 0.0).unwrap() < 0.5);
        let mut prev = 0.0;
        for i in 0..=99 {
            let c = critical_signal(16, 500, i as f64 * 0.01).unwrap();
            assert!(c > prev);
            prev = c;
        }
    }

    #[test]
    fn solved_threshold_gives_one_bad_bit() {
        for (nb, n, pe) in [(16u64, 500u64, 0.0), (8, 2000, 0.2), (32, 100, 0.5)] {
            let p0 = critical_signal_solved(nb, n, pe).unwrap();
            if p0 <= 1.0 {
                let s = VotingScenario::new(p0, pe, n, nb).unwrap();
                assert!((expected_bad_bits(&s).unwrap() - 1.0).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn bound_dominates_exact_tail_on_grid() {
        for pi in 0..=8 {
            let p = 0.55 + 0.05 * pi as f64;
            for n in (10..=1000).step_by(10) {
                let bound = chernoff_bound(p, n).unwrap();
                let tail = exact_minority_tail(p, n);
                assert!(tail <= bound * (1.0 + 1e-12), "p={p} n={n} tail={tail} bound={bound}");
            }
        }
    }

    #[test]
    fn exact_tail_small_case() {
        // P(Bin(3, 0.7) <= 1) = 0.3³ + 3·0.7·0.3²
        let v = exact_minority_tail(0.7, 3);
        assert!((v - (0.027 + 3.0 * 0.7 * 0.09)).abs() < 1e-14);
    }

    #[test]
    fn monotonicity_properties() {
        let base = VotingScenario::new(0.7, 0.1, 100, 8).unwrap();
        let mut prev = f64::INFINITY;
        for pe in [0.0, 0.1, 0.3, 0.6, 0.9] {
            let p = effective_probability(&VotingScenario { pe, ..base });
            assert!(p < prev);
            prev = p;
        }
        let mut prev = f64::INFINITY;
        for n in [1, 10, 100, 1000] {
            let v = expected_bad_bits(&VotingScenario { n, ..base }).unwrap();
            assert!(v <= prev);
            prev = v;
        }
        let mut prev = 0.0;
        for n_bits in [1, 4, 16, 64] {
            let v = expected_bad_bits(&VotingScenario { n_bits, ..base }).unwrap();
            assert!(v >= prev);
            prev = v;
        }
    }

    #[test]
    fn physical_t2_examples() {
        assert!((physical_t2(32.0, 1.5e-6).unwrap() - 48e-6).abs() < 1e-18);
        assert!((physical_t2(32.0, 50e-6).unwrap() - 1.6e-3).abs() < 1e-15);
        assert_eq!(physical_t2(1.0, 2.5e-6).unwrap(), 2.5e-6);
        assert!(physical_t2(1.0, 0.0).is_err());
    }
}
