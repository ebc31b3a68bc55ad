//! State-vector simulation of the single-ancilla controlled-`U^M` circuit.
//!
//! Two qubits, control first: `|c t⟩` has index `2c + t`. The circuit is
//! `H_c · P_c(−ω) · CU · H_c` acting on `|0⟩_c ⊗ |ψ⟩_t`, where `|ψ⟩` is prepared
//! as `Rz(θz)·Ry(θy)|0⟩`, `U = e^{iδ}Rz(α)Ry(β)Rz(γ)` is the composite `V^M`
//! and `ω = M·θ` is the feedback phase. Every one of those seven angles is a
//! physical phase shifter and receives the Gaussian phase noise.

use std::io::Write;

use nalgebra::{Matrix2, Matrix4, Vector2, Vector4};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::noise;
use crate::phase::{reduce, ExperimentSetting, Phase};

type C = Complex64;

const UNITARITY_TOL: f64 = 1e-12;
const RECONSTRUCTION_TOL: f64 = 1e-9;

fn c(re: f64, im: f64) -> C {
    C::new(re, im)
}

fn rz(a: f64) -> Matrix2<C> {
    Matrix2::new(C::from_polar(1.0, -a / 2.0), C::ZERO, C::ZERO, C::from_polar(1.0, a / 2.0))
}

fn ry(b: f64) -> Matrix2<C> {
    let (s, co) = (b / 2.0).sin_cos();
    Matrix2::new(c(co, 0.0), c(-s, 0.0), c(s, 0.0), c(co, 0.0))
}

/// Euler parametrization `e^{iδ}·Rz(α)·Ry(β)·Rz(γ)` of a 2×2 unitary.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct UnitarySpec {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub delta: f64,
}

impl UnitarySpec {
    pub const IDENTITY: UnitarySpec = UnitarySpec { alpha: 0.0, beta: 0.0, gamma: 0.0, delta: 0.0 };

    pub fn matrix(&self) -> Matrix2<C> {
        rz(self.alpha) * ry(self.beta) * rz(self.gamma) * C::from_polar(1.0, self.delta)
    }

    pub fn phases(&self) -> [f64; 4] {
        [self.alpha, self.beta, self.gamma, self.delta]
    }

    pub fn from_phases(p: [f64; 4]) -> Self {
        Self { alpha: p[0], beta: p[1], gamma: p[2], delta: p[3] }
    }

    /// Z–Y–Z decomposition of a unitary. Fails if the input is not unitary.
    pub fn from_matrix(u: &Matrix2<C>) -> Result<Self> {
        let dev = unitarity_defect(u);
        if dev > 1e-10 {
            return Err(Error::Consistency(format!("matrix is not unitary (defect {dev:e})")));
        }
        let det = u[(0, 0)] * u[(1, 1)] - u[(0, 1)] * u[(1, 0)];
        let delta = det.arg() / 2.0;
        let w = u * C::from_polar(1.0, -delta);
        let (co, s) = (w[(1, 1)].norm(), w[(1, 0)].norm());
        let beta = 2.0 * s.atan2(co);
        let sum = if co > 1e-14 { 2.0 * w[(1, 1)].arg() } else { 0.0 };
        let diff = if s > 1e-14 { 2.0 * w[(1, 0)].arg() } else { 0.0 };
        let spec = Self { alpha: (sum + diff) / 2.0, beta, gamma: (sum - diff) / 2.0, delta };
        let err = max_abs_diff(&spec.matrix(), u);
        if err > RECONSTRUCTION_TOL {
            return Err(Error::Consistency(format!("Euler reconstruction off by {err:e}")));
        }
        Ok(spec)
    }

    /// Unitary with eigenvector `prep` (eigenphase `phi0`) and its orthogonal
    /// complement (eigenphase `phi1`).
    pub fn with_eigenstate(prep: &StatePrepSpec, phi0: f64, phi1: f64) -> Result<Self> {
        let v = prep.state();
        let perp = Vector2::new(-v[1].conj(), v[0].conj());
        let m = v * v.adjoint() * C::from_polar(1.0, phi0) + perp * perp.adjoint() * C::from_polar(1.0, phi1);
        Self::from_matrix(&m)
    }
}

/// Preparation angles: `|ψ⟩ = Rz(theta_z)·Ry(theta_y)|0⟩`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StatePrepSpec {
    pub theta_z: f64,
    pub theta_y: f64,
}

impl StatePrepSpec {
    pub fn state(&self) -> Vector2<C> {
        rz(self.theta_z) * ry(self.theta_y) * Vector2::new(C::ONE, C::ZERO)
    }
}

/// A fully specified run of the circuit at one experiment setting.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CircuitInstance {
    /// The base unitary `V` (one application).
    pub unitary: UnitarySpec,
    pub prep: StatePrepSpec,
    pub setting: ExperimentSetting,
}

impl CircuitInstance {
    /// The seven nominal physical phases: prep (2), composite `V^M` (4), feedback (1).
    pub fn phases(&self) -> Result<[f64; 7]> {
        let comp = composite_power(&self.unitary, self.setting.m())?;
        Ok([
            self.prep.theta_z,
            self.prep.theta_y,
            comp.alpha,
            comp.beta,
            comp.gamma,
            comp.delta,
            self.setting.feedback_angle(),
        ])
    }
}

fn max_abs_diff<const N: usize>(
    a: &nalgebra::SMatrix<C, N, N>,
    b: &nalgebra::SMatrix<C, N, N>,
) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

fn unitarity_defect<const N: usize>(u: &nalgebra::SMatrix<C, N, N>) -> f64 {
    let prod = u.adjoint() * u;
    max_abs_diff(&prod, &nalgebra::SMatrix::<C, N, N>::identity())
}

/// Euler phases of `V^m`, computed from the rotation angle of `V` so that
/// large powers keep full precision.
pub fn composite_power(v: &UnitarySpec, m: u64) -> Result<UnitarySpec> {
    if m == 1 {
        return Ok(*v);
    }
    // V = e^{iδ} W with W ∈ SU(2): W = cos h · I + K, K anti-Hermitian.
    let w = rz(v.alpha) * ry(v.beta) * rz(v.gamma);
    let cos_h = w.trace().re / 2.0;
    let k = (w - w.adjoint()) * c(0.5, 0.0);
    let sin_h = (k[(0, 0)].norm_sqr() + k[(0, 1)].norm_sqr()).sqrt();
    let h = sin_h.atan2(cos_h);
    let mh = reduce(m as f64 * h);
    let wm = if sin_h > 0.0 {
        Matrix2::identity() * c(mh.cos(), 0.0) + k * c(mh.sin() / sin_h, 0.0)
    } else {
        Matrix2::identity() * c(mh.cos(), 0.0)
    };
    let um = wm * C::from_polar(1.0, reduce(m as f64 * v.delta));
    if unitarity_defect(&um) > UNITARITY_TOL {
        return Err(Error::Consistency(format!("composite V^{m} lost unitarity")));
    }
    UnitarySpec::from_matrix(&um)
}

fn hadamard_control() -> Matrix4<C> {
    let r = std::f64::consts::FRAC_1_SQRT_2;
    let h = Matrix2::new(c(r, 0.0), c(r, 0.0), c(r, 0.0), c(-r, 0.0));
    h.kronecker(&Matrix2::identity())
}

fn controlled(u: &Matrix2<C>) -> Matrix4<C> {
    let mut m = Matrix4::identity();
    m.fixed_view_mut::<2, 2>(2, 2).copy_from(u);
    m
}

fn control_phase(omega: f64) -> Matrix4<C> {
    let p = Matrix2::new(C::ONE, C::ZERO, C::ZERO, C::from_polar(1.0, -omega));
    p.kronecker(&Matrix2::identity())
}

/// Outcome-0 probability of the circuit for explicit physical phases.
pub fn probability_from_phases(phases: &[f64; 7]) -> Result<f64> {
    let prep = StatePrepSpec { theta_z: phases[0], theta_y: phases[1] };
    let u = UnitarySpec::from_phases([phases[2], phases[3], phases[4], phases[5]]).matrix();
    let cu = controlled(&u);
    if unitarity_defect(&cu) > UNITARITY_TOL {
        return Err(Error::Consistency("controlled unitary is not unitary".into()));
    }
    let psi = prep.state();
    let input = Vector4::new(psi[0], psi[1], C::ZERO, C::ZERO);
    let h = hadamard_control();
    let out = h * control_phase(phases[6]) * cu * h * input;
    Ok((out[0].norm_sqr() + out[1].norm_sqr()).clamp(0.0, 1.0))
}

/// Outcome-0 probability with every physical phase perturbed by `N(0, sigma_phase)`.
pub fn simulate_probability<R: Rng + ?Sized>(
    instance: &CircuitInstance,
    sigma_phase: f64,
    rng: &mut R,
) -> Result<f64> {
    let mut phases = instance.phases()?;
    noise::perturb_in_place(&mut phases, sigma_phase, rng);
    probability_from_phases(&phases)
}

/// Monte-Carlo fidelities at one noise level.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FidelityPoint {
    pub sigma: f64,
    pub state_fidelity: f64,
    pub state_stderr: f64,
    /// Average gate fidelity of the entangling part `C-(Rz Ry Rz)`; the
    /// controlled global phase `δ` acts as a phase on the control qubit.
    pub gate_fidelity: f64,
    pub gate_stderr: f64,
    /// Same as `gate_fidelity` with the noisy control phase `δ` included.
    pub full_gate_fidelity: f64,
    pub full_gate_stderr: f64,
}

fn mean_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    (mean, (var / n).sqrt())
}

fn average_gate_fidelity(ideal: &Matrix4<C>, actual: &Matrix4<C>) -> f64 {
    let d = 4.0;
    let tr = (ideal.adjoint() * actual).trace();
    (tr.norm_sqr() + d) / (d * (d + 1.0))
}

/// State-preparation and controlled-gate fidelity versus phase noise.
///
/// The same standard-normal draws are reused at every `sigma`, so the curves
/// are smooth in `sigma`.
pub fn fidelity_vs_noise<R: Rng + ?Sized>(
    unitary: &UnitarySpec,
    prep: &StatePrepSpec,
    sigma_grid: &[f64],
    samples: usize,
    rng: &mut R,
) -> Result<Vec<FidelityPoint>> {
    if samples < 1000 {
        return Err(Error::domain("fidelity estimates need at least 1000 samples"));
    }
    if let Some(s) = sigma_grid.iter().find(|s| !(s.is_finite() && **s >= 0.0)) {
        return Err(Error::domain(format!("invalid sigma {s}")));
    }
    let z: Vec<[f64; 6]> = (0..samples)
        .map(|_| std::array::from_fn(|_| StandardNormal.sample(rng)))
        .collect();

    let psi = prep.state();
    let ideal_gate = controlled(&UnitarySpec { delta: 0.0, ..*unitary }.matrix());
    let ideal_full = controlled(&unitary.matrix());

    let mut out = Vec::with_capacity(sigma_grid.len());
    let (mut fs, mut fg, mut ff) = (Vec::new(), Vec::new(), Vec::new());
    for &sigma in sigma_grid {
        fs.clear();
        fg.clear();
        ff.clear();
        for d in &z {
            let noisy_prep = StatePrepSpec {
                theta_z: prep.theta_z + sigma * d[0],
                theta_y: prep.theta_y + sigma * d[1],
            };
            fs.push(psi.dotc(&noisy_prep.state()).norm_sqr());

            let noisy = UnitarySpec {
                alpha: unitary.alpha + sigma * d[2],
                beta: unitary.beta + sigma * d[3],
                gamma: unitary.gamma + sigma * d[4],
                delta: unitary.delta + sigma * d[5],
            };
            let gate = controlled(&UnitarySpec { delta: 0.0, ..noisy }.matrix());
            fg.push(average_gate_fidelity(&ideal_gate, &gate));
            ff.push(average_gate_fidelity(&ideal_full, &controlled(&noisy.matrix())));
        }
        let (state_fidelity, state_stderr) = mean_stderr(&fs);
        let (gate_fidelity, gate_stderr) = mean_stderr(&fg);
        let (full_gate_fidelity, full_gate_stderr) = mean_stderr(&ff);
        out.push(FidelityPoint {
            sigma,
            state_fidelity,
            state_stderr,
            gate_fidelity,
            gate_stderr,
            full_gate_fidelity,
            full_gate_stderr,
        });
    }
    Ok(out)
}

pub fn write_fidelity_csv<W: Write>(points: &[FidelityPoint], w: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record([
        "sigma",
        "state_fidelity",
        "gate_fidelity",
        "state_stderr",
        "gate_stderr",
        "full_gate_fidelity",
        "full_gate_stderr",
    ])?;
    for p in points {
        wtr.write_record([
            p.sigma.to_string(),
            p.state_fidelity.to_string(),
            p.gate_fidelity.to_string(),
            p.state_stderr.to_string(),
            p.gate_stderr.to_string(),
            p.full_gate_fidelity.to_string(),
            p.full_gate_stderr.to_string(),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

/// A simulated device: base unitary `V` and the prepared target state.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeviceModel {
    pub unitary: UnitarySpec,
    pub prep: StatePrepSpec,
}

impl DeviceModel {
    /// Default preparation angles used when only eigenphases are given.
    pub const DEFAULT_PREP: StatePrepSpec = StatePrepSpec { theta_z: 0.6, theta_y: 0.4 };

    /// Device whose prepared state is the eigenvector of `V` with eigenphase
    /// `truth`; the other eigenphase sits a quarter turn away.
    pub fn with_eigenphase(truth: Phase) -> Result<Self> {
        Self::with_eigenphases(Self::DEFAULT_PREP, truth.value(), truth.value() + std::f64::consts::FRAC_PI_2)
    }

    pub fn with_eigenphases(prep: StatePrepSpec, phi0: f64, phi1: f64) -> Result<Self> {
        Ok(Self { unitary: UnitarySpec::with_eigenstate(&prep, phi0, phi1)?, prep })
    }

    pub fn instance(&self, setting: ExperimentSetting) -> CircuitInstance {
        CircuitInstance { unitary: self.unitary, prep: self.prep, setting }
    }
}
