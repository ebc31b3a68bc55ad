//! Seeded Monte-Carlo trials and the order statistics used to summarize them.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::device::DeviceModel;
use crate::error::Result;
use crate::ipea::{ipea_run, IpeaConfig};
use crate::noise::NoiseConfig;
use crate::oracle::DeviceOracle;
use crate::phase::{circular_distance, Phase};
use crate::rfpe::{per_step, rfpe_run, GaussianBelief, RfpeConfig};

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of the stream owned by `(lane, trial)` under the scenario seed.
pub fn trial_seed(seed: u64, lane: u64, trial: u64) -> u64 {
    splitmix(splitmix(splitmix(seed) ^ lane) ^ trial)
}

pub fn trial_rng(seed: u64, lane: u64, trial: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(trial_seed(seed, lane, trial))
}

/// Lane numbering: one block of lanes per sweep point.
pub fn lane(point: usize, purpose: u64) -> u64 {
    point as u64 * 16 + purpose
}

pub const LANE_RFPE_ORACLE: u64 = 0;
pub const LANE_RFPE_INFERENCE: u64 = 1;
pub const LANE_IPEA_ORACLE: u64 = 2;
pub const LANE_IPEA_VOTE: u64 = 3;

/// Runs `n` independent trials on the current rayon pool; results keep trial order.
pub fn run_trials<T, F>(n: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(u64) -> Result<T> + Sync + Send,
{
    (0..n as u64).into_par_iter().map(f).collect()
}

/// Error and reported uncertainty after each experiment step of one run.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepStat {
    pub mu: Phase,
    pub error: f64,
    pub sigma: f64,
}

/// One RFPE run against the simulated device.
pub fn rfpe_trial(
    truth: Phase,
    noise: &NoiseConfig,
    cfg: &RfpeConfig,
    seed: u64,
    point: usize,
    trial: u64,
) -> Result<Vec<StepStat>> {
    let device = DeviceModel::with_eigenphase(truth)?;
    let mut oracle = DeviceOracle::seeded(device, noise.clone(), trial_seed(seed, lane(point, LANE_RFPE_ORACLE), trial))?;
    let cfg = RfpeConfig { rng_seed: trial_seed(seed, lane(point, LANE_RFPE_INFERENCE), trial), ..cfg.clone() };
    let trace = rfpe_run(&mut oracle, GaussianBelief::broad(), &cfg, Some(truth))?;
    Ok(per_step(&trace)
        .into_iter()
        .map(|r| StepStat { mu: r.posterior.mu(), error: circular_distance(r.posterior.mu(), truth), sigma: r.posterior.sigma() })
        .collect())
}

/// Final circular error of one IPEA run against the simulated device.
pub fn ipea_trial(truth: Phase, noise: &NoiseConfig, cfg: &IpeaConfig, seed: u64, point: usize, trial: u64) -> Result<f64> {
    let device = DeviceModel::with_eigenphase(truth)?;
    let mut oracle = DeviceOracle::seeded(device, noise.clone(), trial_seed(seed, lane(point, LANE_IPEA_ORACLE), trial))?;
    let cfg = IpeaConfig { rng_seed: trial_seed(seed, lane(point, LANE_IPEA_VOTE), trial), ..cfg.clone() };
    let (est, _) = ipea_run(&mut oracle, &cfg)?;
    Ok(circular_distance(est, truth))
}

/// Linear-interpolation percentile (`q` in percent) of sorted data.
pub fn percentile_sorted(sorted: &[f64], q: f64) -> f64 {
    match sorted.len() {
        0 => f64::NAN,
        1 => sorted[0],
        n => {
            let pos = (q / 100.0).clamp(0.0, 1.0) * (n - 1) as f64;
            let i = pos.floor() as usize;
            let frac = pos - i as f64;
            if i + 1 >= n {
                sorted[n - 1]
            } else {
                sorted[i] + frac * (sorted[i + 1] - sorted[i])
            }
        }
    }
}

pub fn sorted(values: &[f64]) -> Vec<f64> {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

pub fn median(values: &[f64]) -> f64 {
    percentile_sorted(&sorted(values), 50.0)
}

/// Median with a lower and upper percentile.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Band {
    pub median: f64,
    pub lo: f64,
    pub hi: f64,
}

impl Band {
    pub fn of(values: &[f64], pct: [f64; 2]) -> Self {
        let s = sorted(values);
        Band { median: percentile_sorted(&s, 50.0), lo: percentile_sorted(&s, pct[0]), hi: percentile_sorted(&s, pct[1]) }
    }
}

/// Per-step error band and median reported sigma across runs.
pub fn step_bands(runs: &[Vec<StepStat>], pct: [f64; 2]) -> Vec<(Band, f64)> {
    let steps = runs.iter().map(Vec::len).min().unwrap_or(0);
    (0..steps)
        .map(|k| {
            let errs: Vec<f64> = runs.iter().map(|r| r[k].error).collect();
            let sig: Vec<f64> = runs.iter().map(|r| r[k].sigma).collect();
            (Band::of(&errs, pct), median(&sig))
        })
        .collect()
}

/// Least-squares line; returns `(slope, intercept, sse)`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let icpt = my - slope * mx;
    let sse = x.iter().zip(y).map(|(a, b)| (b - icpt - slope * a).powi(2)).sum();
    (slope, icpt, sse)
}

/// Slope of `ln(error)` against step over the 1-based inclusive step range.
pub fn log_error_slope(median_errors: &[f64], first: usize, last: usize) -> f64 {
    let last = last.min(median_errors.len());
    let (x, y): (Vec<f64>, Vec<f64>) = (first..=last)
        .map(|s| (s as f64, median_errors[s - 1].max(f64::MIN_POSITIVE).ln()))
        .unzip();
    linear_fit(&x, &y).0
}

/// Two-segment fit of `ln(error)` against step; returns the 1-based step at
/// which the slope changes, or `None` when the series is too short.
pub fn slope_change_step(median_errors: &[f64], min_segment: usize) -> Option<usize> {
    let n = median_errors.len();
    if n < 2 * min_segment + 1 {
        return None;
    }
    let x: Vec<f64> = (1..=n).map(|s| s as f64).collect();
    let y: Vec<f64> = median_errors.iter().map(|e| e.max(f64::MIN_POSITIVE).ln()).collect();
    (min_segment..=n - min_segment)
        .map(|k| {
            let left = linear_fit(&x[..k], &y[..k]).2;
            let right = linear_fit(&x[k - 1..], &y[k - 1..]).2;
            (k, left + right)
        })
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .map(|(k, _)| k)
}

/// Bootstrap standard error of the median.
pub fn bootstrap_median_se<R: Rng + ?Sized>(values: &[f64], reps: usize, rng: &mut R) -> f64 {
    let n = values.len();
    if n < 2 {
        return 0.0;
    }
    let meds: Vec<f64> = (0..reps)
        .map(|_| {
            let sample: Vec<f64> = (0..n).map(|_| values[rng.random_range(0..n)]).collect();
            median(&sample)
        })
        .collect();
    let m = meds.iter().sum::<f64>() / reps as f64;
    (meds.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (reps - 1) as f64).sqrt()
}
