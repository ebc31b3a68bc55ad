//! Thermo-optic fringe calibration.
//!
//! Optical output power versus heater electrical power follows
//! `P_op = B + A·cos(2π(P_el − P_Φ)/T)`. The fit seeds the period from a
//! least-squares frequency scan, runs damped Gauss-Newton from several random
//! starts and keeps the best, then reports linearized standard errors and
//! t-tests the way regression tables usually do.

use std::f64::consts::TAU;
use std::io::{Read, Write};

use nalgebra::{Matrix3, Matrix4, Vector3, Vector4};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};
use crate::phase::{wrap_phase, Phase};

pub const PARAM_NAMES: [&str; 4] = ["B", "A", "T", "P_Phi"];

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FringeSample {
    /// Electrical power, mW.
    pub p_el: f64,
    /// Optical power, arbitrary units.
    pub p_op: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FringeFit {
    pub b: f64,
    pub a: f64,
    pub t: f64,
    pub p_phi: f64,
    pub std_errors: [f64; 4],
    pub t_stats: [f64; 4],
    pub p_values: [f64; 4],
    pub r_squared: f64,
    pub sse: f64,
    pub n_samples: usize,
    pub dof: usize,
    /// False when the background was pinned to zero.
    pub fitted_background: bool,
}

impl FringeFit {
    pub fn params(&self) -> [f64; 4] {
        [self.b, self.a, self.t, self.p_phi]
    }

    pub fn predict(&self, p_el: f64) -> f64 {
        model(&Vector4::from(self.params()), p_el)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    pub restarts: usize,
    pub fit_background: bool,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self { restarts: 16, fit_background: true }
    }
}

fn model(p: &Vector4<f64>, x: f64) -> f64 {
    p[0] + p[1] * (TAU * (x - p[3]) / p[2]).cos()
}

/// Residuals `y − f` and the Jacobian of `f`, accumulated as `JᵀJ`, `Jᵀr`.
fn normal_equations(data: &[FringeSample], p: &Vector4<f64>, fit_b: bool) -> (Matrix4<f64>, Vector4<f64>, f64) {
    let mut jtj = Matrix4::zeros();
    let mut jtr = Vector4::zeros();
    let mut sse = 0.0;
    let (a, t, phi) = (p[1], p[2], p[3]);
    for s in data {
        let u = TAU * (s.p_el - phi) / t;
        let (sin_u, cos_u) = u.sin_cos();
        let r = s.p_op - (p[0] + a * cos_u);
        let j = Vector4::new(
            if fit_b { 1.0 } else { 0.0 },
            cos_u,
            a * sin_u * u / t,
            a * sin_u * TAU / t,
        );
        jtj += j * j.transpose();
        jtr += j * r;
        sse += r * r;
    }
    (jtj, jtr, sse)
}

fn sse_at(data: &[FringeSample], p: &Vector4<f64>) -> f64 {
    data.iter().map(|s| (s.p_op - model(p, s.p_el)).powi(2)).sum()
}

fn levenberg_marquardt(data: &[FringeSample], start: Vector4<f64>, fit_b: bool) -> (Vector4<f64>, f64) {
    let mut p = start;
    let mut lambda = 1e-3;
    let (mut jtj, mut jtr, mut sse) = normal_equations(data, &p, fit_b);
    for _ in 0..1000 {
        let mut damped = jtj;
        for i in 0..4 {
            damped[(i, i)] += lambda * jtj[(i, i)].max(1e-12);
        }
        if !fit_b {
            damped[(0, 0)] = 1.0;
        }
        let Some(step) = damped.lu().solve(&jtr) else {
            lambda *= 10.0;
            continue;
        };
        let candidate = p + step;
        let cand_sse = sse_at(data, &candidate);
        if cand_sse.is_finite() && cand_sse <= sse {
            let converged = (0..4).all(|i| step[i].abs() <= 1e-15 * (candidate[i].abs() + 1e-300));
            p = candidate;
            (jtj, jtr, sse) = normal_equations(data, &p, fit_b);
            lambda = (lambda / 3.0).max(1e-15);
            if converged || sse == 0.0 {
                break;
            }
        } else {
            lambda *= 4.0;
            if lambda > 1e20 {
                break;
            }
        }
    }
    (p, sse)
}

/// Best single-frequency linear fit `B + C cos(2πfx) + S sin(2πfx)` over a
/// frequency scan; returns `(B, A, T, P_Φ)` as a starting point.
fn spectral_seed(data: &[FringeSample], span: f64, fit_b: bool) -> Option<Vector4<f64>> {
    let n = data.len();
    let f_lo = 0.5 / span;
    let f_hi = (n - 1) as f64 / (2.0 * span);
    let steps = (((f_hi - f_lo) * span) / 0.01).ceil().max(50.0) as usize;
    let mut best: Option<(f64, Vector4<f64>)> = None;
    for i in 0..=steps {
        let f = f_lo + (f_hi - f_lo) * i as f64 / steps as f64;
        let mut ata = Matrix3::zeros();
        let mut aty = Vector3::zeros();
        for s in data {
            let (sn, cs) = (TAU * f * s.p_el).sin_cos();
            let row = Vector3::new(if fit_b { 1.0 } else { 0.0 }, cs, sn);
            ata += row * row.transpose();
            aty += row * s.p_op;
        }
        if !fit_b {
            ata[(0, 0)] = 1.0;
        }
        let Some(coef) = ata.lu().solve(&aty) else { continue };
        let params = Vector4::new(
            coef[0],
            coef[1].hypot(coef[2]),
            1.0 / f,
            coef[2].atan2(coef[1]) / (TAU * f),
        );
        let sse = sse_at(data, &params);
        if best.as_ref().is_none_or(|(b, _)| sse < *b) {
            best = Some((sse, params));
        }
    }
    best.map(|(_, p)| p)
}

fn canonicalize(p: &mut Vector4<f64>) {
    if p[2] < 0.0 {
        p[2] = -p[2];
    }
    if p[1] < 0.0 {
        p[1] = -p[1];
        p[3] += p[2] / 2.0;
    }
    p[3] = p[3].rem_euclid(p[2]);
    if p[3] >= p[2] {
        p[3] = 0.0;
    }
}

fn validate_data(data: &[FringeSample]) -> Result<f64> {
    if data.len() < 8 {
        return Err(Error::Unidentifiable(format!("need at least 8 samples, got {}", data.len())));
    }
    if let Some(s) = data.iter().find(|s| !(s.p_el.is_finite() && s.p_op.is_finite() && s.p_el >= 0.0)) {
        return Err(Error::domain(format!("invalid sample ({}, {})", s.p_el, s.p_op)));
    }
    let mean = data.iter().map(|s| s.p_op).sum::<f64>() / data.len() as f64;
    let sst: f64 = data.iter().map(|s| (s.p_op - mean).powi(2)).sum();
    if sst <= f64::EPSILON * mean.abs().max(1.0) * data.len() as f64 {
        return Err(Error::Unidentifiable("optical power is constant".into()));
    }
    let (lo, hi) = data.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), s| (lo.min(s.p_el), hi.max(s.p_el)));
    if hi - lo <= 0.0 {
        return Err(Error::Unidentifiable("electrical power does not vary".into()));
    }
    Ok(hi - lo)
}

/// Fits the fringe model with `restarts` random starts around the spectral seed.
pub fn fit_fringe<R: Rng + ?Sized>(data: &[FringeSample], restarts: usize, rng: &mut R) -> Result<FringeFit> {
    fit_fringe_with(data, &FitOptions { restarts, fit_background: true }, rng)
}

pub fn fit_fringe_with<R: Rng + ?Sized>(data: &[FringeSample], opts: &FitOptions, rng: &mut R) -> Result<FringeFit> {
    let span = validate_data(data)?;
    let fit_b = opts.fit_background;
    let seed = spectral_seed(data, span, fit_b).ok_or_else(|| Error::Unidentifiable("frequency scan failed".into()))?;

    let mut best = levenberg_marquardt(data, seed, fit_b);
    for _ in 1..opts.restarts.max(1) {
        let z: [f64; 3] = std::array::from_fn(|_| StandardNormal.sample(rng));
        let t = seed[2] * (0.05 * z[0]).exp();
        let start = Vector4::new(
            if fit_b { seed[0] + 0.1 * seed[1] * z[1] } else { 0.0 },
            seed[1] * rng.random_range(0.5..1.5),
            t,
            rng.random_range(0.0..t),
        );
        let _ = z[2];
        let cand = levenberg_marquardt(data, start, fit_b);
        if cand.1 < best.1 {
            best = cand;
        }
    }
    let (mut p, sse) = best;
    canonicalize(&mut p);
    if !(p[2].is_finite() && p[2] > 0.0 && p[1] > 0.0) {
        return Err(Error::Unidentifiable("fit did not converge to a fringe".into()));
    }
    if span < p[2] * (1.0 - 1e-9) {
        return Err(Error::Unidentifiable(format!(
            "data span {span} covers less than one period (T = {})",
            p[2]
        )));
    }

    let n = data.len();
    let n_params = if fit_b { 4 } else { 3 };
    let dof = n - n_params;
    let (mut jtj, _, _) = normal_equations(data, &p, fit_b);
    if !fit_b {
        jtj[(0, 0)] = 1.0;
    }
    let s2 = sse / dof as f64;
    let std_errors: [f64; 4] = match jtj.try_inverse() {
        Some(inv) => std::array::from_fn(|i| {
            if i == 0 && !fit_b {
                0.0
            } else {
                (s2 * inv[(i, i)]).max(0.0).sqrt()
            }
        }),
        None => [f64::INFINITY; 4],
    };
    let student = StudentsT::new(0.0, 1.0, dof as f64).expect("dof >= 4");
    let params: [f64; 4] = p.into();
    let t_stats: [f64; 4] = std::array::from_fn(|i| {
        let (est, se) = (params[i], std_errors[i]);
        if i == 0 && !fit_b {
            f64::NAN
        } else if se == 0.0 {
            if est == 0.0 {
                0.0
            } else {
                f64::INFINITY.copysign(est)
            }
        } else {
            est / se
        }
    });
    let p_values: [f64; 4] = std::array::from_fn(|i| {
        let t = t_stats[i];
        if t.is_nan() {
            f64::NAN
        } else if t.is_infinite() {
            0.0
        } else {
            2.0 * (1.0 - student.cdf(t.abs()))
        }
    });
    let mean = data.iter().map(|s| s.p_op).sum::<f64>() / n as f64;
    let sst: f64 = data.iter().map(|s| (s.p_op - mean).powi(2)).sum();
    Ok(FringeFit {
        b: params[0],
        a: params[1],
        t: params[2],
        p_phi: params[3],
        std_errors,
        t_stats,
        p_values,
        r_squared: 1.0 - sse / sst,
        sse,
        n_samples: n,
        dof,
        fitted_background: fit_b,
    })
}

/// Gradient of the squared-residual objective at the fitted parameters.
pub fn objective_gradient(data: &[FringeSample], fit: &FringeFit) -> [f64; 4] {
    let (_, jtr, _) = normal_equations(data, &Vector4::from(fit.params()), fit.fitted_background);
    std::array::from_fn(|i| -2.0 * jtr[i])
}

/// Implemented phase `2π(P_el − P_Φ)/T` for a heater power.
pub fn phase_power_map(fit: &FringeFit, p_el: f64) -> Result<Phase> {
    wrap_phase(TAU * (p_el - fit.p_phi) / fit.t)
}

/// Smallest non-negative heater power that implements `phi` (mod 2π).
pub fn power_for_phase(fit: &FringeFit, phi: Phase) -> f64 {
    let p = (fit.p_phi + fit.t * phi.value() / TAU).rem_euclid(fit.t);
    if p >= fit.t {
        0.0
    } else {
        p
    }
}

/// First-order standard deviation of the implemented phase from the errors
/// on `T` and `P_Φ`, averaged uniformly over `[lo, hi]` mW.
pub fn propagate_phase_uncertainty(fit: &FringeFit, p_el_range: (f64, f64)) -> Result<f64> {
    let (lo, hi) = p_el_range;
    if !(lo.is_finite() && hi.is_finite() && hi > lo) {
        return Err(Error::domain(format!("invalid power interval [{lo}, {hi}]")));
    }
    let (sigma_t, sigma_phi) = (fit.std_errors[2], fit.std_errors[3]);
    let t = fit.t;
    let sd = |p: f64| {
        let d_phi = TAU / t * sigma_phi;
        let d_t = TAU * (p - fit.p_phi) / (t * t) * sigma_t;
        d_phi.hypot(d_t)
    };
    // composite Simpson
    let n = 2000;
    let h = (hi - lo) / n as f64;
    let mut acc = sd(lo) + sd(hi);
    for i in 1..n {
        acc += sd(lo + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    Ok(acc * h / 3.0 / (hi - lo))
}

pub fn read_fringe_csv<R: Read>(r: R) -> Result<Vec<FringeSample>> {
    let mut rdr = csv::Reader::from_reader(r);
    let headers = rdr.headers()?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| Error::UnknownColumn(name.to_string()))
    };
    let (ie, io) = (col("p_el")?, col("p_op")?);
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = i + 2;
        let parse = |idx: usize, name: &str| -> Result<f64> {
            rec.get(idx)
                .and_then(|v| v.trim().parse::<f64>().ok())
                .ok_or_else(|| Error::Load { row, message: format!("cannot parse `{name}`") })
        };
        let s = FringeSample { p_el: parse(ie, "p_el")?, p_op: parse(io, "p_op")? };
        if s.p_el < 0.0 {
            return Err(Error::Load { row, message: "p_el must be >= 0".into() });
        }
        out.push(s);
    }
    Ok(out)
}

pub fn write_fit_json<W: Write>(fit: &FringeFit, w: W) -> Result<()> {
    serde_json::to_writer_pretty(w, fit)?;
    Ok(())
}

/// Human-readable parameter table.
pub fn write_fit_table<W: Write>(fit: &FringeFit, mut w: W) -> Result<()> {
    writeln!(w, "{:<8} {:>14} {:>14} {:>14} {:>12}", "", "Estimate", "Standard Error", "t-Statistic", "P-Value")?;
    let params = fit.params();
    for i in 0..4 {
        writeln!(
            w,
            "{:<8} {:>14.6} {:>14.6e} {:>14.4} {:>12.4e}",
            PARAM_NAMES[i], params[i], fit.std_errors[i], fit.t_stats[i], fit.p_values[i]
        )?;
    }
    writeln!(w, "R^2 = {:.10}  (n = {}, dof = {})", fit.r_squared, fit.n_samples, fit.dof)?;
    Ok(())
}

/// Noise-free samples of the model, evenly spaced over `[lo, hi]`.
pub fn synthetic_fringe(params: [f64; 4], lo: f64, hi: f64, n: usize) -> Vec<FringeSample> {
    let p = Vector4::from(params);
    (0..n)
        .map(|i| {
            let x = lo + (hi - lo) * i as f64 / (n - 1) as f64;
            FringeSample { p_el: x, p_op: model(&p, x) }
        })
        .collect()
}
