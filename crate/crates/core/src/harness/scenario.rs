//! Declarative scenario files (`rfpe-lab/1`).

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ipea::IpeaConfig;
use crate::noise::{NoiseConfig, Strategy};
use crate::phase::Phase;
use crate::rfpe::RfpeConfig;

pub const SCHEMA: &str = "rfpe-lab/1";
pub const DEFAULT_TRUTH: f64 = 4.8741;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    Convergence,
    PhaseNoiseSweep,
    T2Sweep,
    T2Convergence,
    StrategyComparison,
    MolecularScan,
    FidelityCurve,
    ChernoffCurve,
    CalibrationFit,
}

impl ScenarioKind {
    pub const ALL: [ScenarioKind; 9] = [
        Self::Convergence,
        Self::PhaseNoiseSweep,
        Self::T2Sweep,
        Self::T2Convergence,
        Self::StrategyComparison,
        Self::MolecularScan,
        Self::FidelityCurve,
        Self::ChernoffCurve,
        Self::CalibrationFit,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::Convergence => "convergence",
            Self::PhaseNoiseSweep => "phase_noise_sweep",
            Self::T2Sweep => "t2_sweep",
            Self::T2Convergence => "t2_convergence",
            Self::StrategyComparison => "strategy_comparison",
            Self::MolecularScan => "molecular_scan",
            Self::FidelityCurve => "fidelity_curve",
            Self::ChernoffCurve => "chernoff_curve",
            Self::CalibrationFit => "calibration_fit",
        }
    }

    /// Acceptance criteria whose evidence this kind produces.
    pub fn criteria(self) -> &'static [u32] {
        match self {
            Self::Convergence => &[1, 2, 11],
            Self::PhaseNoiseSweep => &[4, 11],
            Self::T2Sweep | Self::T2Convergence => &[6, 11],
            Self::StrategyComparison => &[7, 11],
            Self::MolecularScan => &[10, 11],
            Self::FidelityCurve => &[5, 11],
            Self::ChernoffCurve => &[8, 11],
            Self::CalibrationFit => &[9, 11],
        }
    }

    fn default_steps(self) -> usize {
        match self {
            Self::PhaseNoiseSweep | Self::T2Sweep | Self::T2Convergence => 100,
            Self::StrategyComparison => 10,
            _ => 50,
        }
    }

    fn default_ensemble(self) -> usize {
        match self {
            Self::StrategyComparison => 200,
            Self::MolecularScan => 1,
            _ => 100,
        }
    }

    fn default_grid(self) -> Vec<f64> {
        match self {
            Self::PhaseNoiseSweep | Self::FidelityCurve => (0..=11).map(|i| i as f64 * 0.05).collect(),
            Self::T2Sweep => (0..=8).map(|i| 2f64.powi(i)).collect(),
            Self::T2Convergence => vec![16.0, 32.0, 64.0, 128.0],
            Self::ChernoffCurve => (0..100).map(|i| i as f64 * 0.01).collect(),
            _ => Vec::new(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Rfpe,
    Ipea,
    Both,
}

impl Algorithm {
    pub fn rfpe(self) -> bool {
        matches!(self, Self::Rfpe | Self::Both)
    }
    pub fn ipea(self) -> bool {
        matches!(self, Self::Ipea | Self::Both)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticFringe {
    pub b: f64,
    pub a: f64,
    pub t: f64,
    pub p_phi: f64,
    pub lo: f64,
    pub hi: f64,
    pub n: usize,
    /// Gaussian noise added to optical power, absolute units.
    #[serde(default)]
    pub noise: f64,
}

impl Default for SyntheticFringe {
    fn default() -> Self {
        Self { b: 1.0, a: 0.9, t: 40.0, p_phi: 5.0, lo: 0.0, hi: 80.0, n: 50, noise: 0.018 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CalibrationSpec {
    /// CSV with `p_el,p_op`; synthetic data is generated when absent.
    pub data: Option<PathBuf>,
    pub synthetic: SyntheticFringe,
    pub restarts: usize,
    pub fit_background: bool,
    /// Interval of electrical power the propagated uncertainty is averaged over.
    pub range: [f64; 2],
    /// Optional override `[σ_PΦ / P_max, σ_T / T]` replacing the fitted errors.
    pub relative_errors: Option<[f64; 2]>,
}

impl Default for CalibrationSpec {
    fn default() -> Self {
        Self {
            data: None,
            synthetic: SyntheticFringe::default(),
            restarts: 16,
            fit_background: true,
            range: [5.0, 80.0],
            relative_errors: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FidelitySpec {
    pub samples: usize,
    pub theta_z: f64,
    pub theta_y: f64,
}

impl Default for FidelitySpec {
    fn default() -> Self {
        Self { samples: 4000, theta_z: 0.6, theta_y: 0.4 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChernoffSpec {
    pub p0: f64,
    pub n: u64,
    pub n_bits: u64,
}

impl Default for ChernoffSpec {
    fn default() -> Self {
        Self { p0: 2.0 / 3.0, n: 500, n_bits: 16 }
    }
}

fn default_schema() -> String {
    SCHEMA.to_string()
}

fn default_band() -> [f64; 2] {
    [16.0, 84.0]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default = "default_schema")]
    pub schema: String,
    pub kind: ScenarioKind,
    #[serde(default)]
    pub truth: Option<f64>,
    /// Molecular eigenphase table, resolved against the config's directory.
    #[serde(default)]
    pub table: Option<PathBuf>,
    #[serde(default)]
    pub algorithm: Option<Algorithm>,
    #[serde(default)]
    pub noise: NoiseConfig,
    #[serde(default)]
    pub rfpe: RfpeConfig,
    #[serde(default)]
    pub ipea: IpeaConfig,
    #[serde(default)]
    pub steps: Option<usize>,
    #[serde(default)]
    pub ensemble: Option<usize>,
    #[serde(default)]
    pub ipea_ensemble: Option<usize>,
    #[serde(default)]
    pub rng_seed: u64,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub grid: Option<Vec<f64>>,
    #[serde(default)]
    pub strategies: Option<Vec<Strategy>>,
    #[serde(default = "default_band")]
    pub band: [f64; 2],
    #[serde(default)]
    pub calibration: CalibrationSpec,
    #[serde(default)]
    pub fidelity: FidelitySpec,
    #[serde(default)]
    pub chernoff: ChernoffSpec,
    #[serde(default)]
    pub plot: bool,
}

/// 1-based line of the first occurrence of `"key"` in the source, if any.
fn line_of(text: &str, key: &str) -> Option<usize> {
    let needle = format!("\"{key}\"");
    text.lines().position(|l| l.contains(&needle)).map(|i| i + 1)
}

impl Scenario {
    pub fn new(kind: ScenarioKind) -> Self {
        Self {
            schema: default_schema(),
            kind,
            truth: None,
            table: None,
            algorithm: None,
            noise: NoiseConfig::default(),
            rfpe: RfpeConfig::default(),
            ipea: IpeaConfig::default(),
            steps: None,
            ensemble: None,
            ipea_ensemble: None,
            rng_seed: 0,
            output_dir: None,
            grid: None,
            strategies: None,
            band: default_band(),
            calibration: CalibrationSpec::default(),
            fidelity: FidelitySpec::default(),
            chernoff: ChernoffSpec::default(),
            plot: false,
        }
    }

    /// Parses and validates; errors carry `line L, column C` of the source.
    pub fn from_json_str(text: &str) -> Result<Self> {
        let sc: Scenario = serde_json::from_str(text).map_err(|e| {
            Error::Config(format!("line {}, column {}: {}", e.line(), e.column(), strip_location(&e.to_string())))
        })?;
        sc.validate().map_err(|(key, msg)| match key.and_then(|k| line_of(text, k)) {
            Some(line) => Error::Config(format!("line {line}: {msg}")),
            None => Error::Config(msg),
        })?;
        Ok(sc)
    }

    /// Reads a scenario file; relative `table` and `calibration.data` paths
    /// are resolved against the file's directory.
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut sc = Self::from_json_str(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        if let Some(t) = sc.table.as_mut() {
            if t.is_relative() {
                *t = base.join(&*t);
            }
        }
        if let Some(d) = sc.calibration.data.as_mut() {
            if d.is_relative() {
                *d = base.join(&*d);
            }
        }
        Ok(sc)
    }

    pub fn check(&self) -> Result<()> {
        self.validate().map_err(|(_, m)| Error::Config(m))
    }

    fn validate(&self) -> std::result::Result<(), (Option<&'static str>, String)> {
        let err = |k: &'static str, m: String| Err((Some(k), m));
        if self.schema != SCHEMA {
            return err("schema", format!("unsupported schema `{}`, expected `{SCHEMA}`", self.schema));
        }
        if let Some(t) = self.truth {
            if Phase::from_canonical(t).is_err() {
                return err("truth", format!("truth must lie in [0, 2π), got {t}"));
            }
        }
        self.noise.validate().map_err(|e| (Some("noise"), e.to_string()))?;
        self.rfpe.validate().map_err(|e| (Some("rfpe"), e.to_string()))?;
        self.ipea.validate().map_err(|e| (Some("ipea"), e.to_string()))?;
        if self.steps == Some(0) {
            return err("steps", "steps must be >= 1".into());
        }
        if self.ensemble == Some(0) {
            return err("ensemble", "ensemble must be >= 1".into());
        }
        if self.ipea_ensemble == Some(0) {
            return err("ipea_ensemble", "ipea_ensemble must be >= 1".into());
        }
        let [lo, hi] = self.band;
        if !(0.0..50.0).contains(&lo) || !(hi > 50.0 && hi <= 100.0) {
            return err("band", format!("band must satisfy 0 <= lo < 50 < hi <= 100, got [{lo}, {hi}]"));
        }
        if let Some(g) = &self.grid {
            if g.is_empty() {
                return err("grid", "grid must not be empty".into());
            }
            let ok = match self.kind {
                ScenarioKind::PhaseNoiseSweep | ScenarioKind::FidelityCurve => g.iter().all(|v| v.is_finite() && *v >= 0.0),
                ScenarioKind::T2Sweep | ScenarioKind::T2Convergence => g.iter().all(|v| v.is_finite() && *v > 0.0),
                ScenarioKind::ChernoffCurve => g.iter().all(|v| (0.0..1.0).contains(v)),
                _ => return err("grid", format!("`grid` is not used by {}", self.kind.name())),
            };
            if !ok {
                return err("grid", format!("grid value out of range for {}", self.kind.name()));
            }
        }
        if let Some(s) = &self.strategies {
            if self.kind != ScenarioKind::StrategyComparison {
                return err("strategies", "`strategies` is only used by strategy_comparison".into());
            }
            if s.is_empty() || s.iter().any(|st| matches!(st, Strategy::Sampled(0))) {
                return err("strategies", "strategies must be non-empty with sampled(n >= 1)".into());
            }
        }
        if self.kind == ScenarioKind::MolecularScan && self.table.is_none() {
            return err("kind", "molecular_scan needs a `table`".into());
        }
        if self.kind == ScenarioKind::FidelityCurve && self.fidelity.samples < 1000 {
            return err("samples", "fidelity samples must be >= 1000".into());
        }
        if self.kind == ScenarioKind::ChernoffCurve {
            let c = &self.chernoff;
            if !(c.p0 > 0.5 && c.p0 <= 1.0) || c.n_bits < 2 || c.n == 0 {
                return err("chernoff", "chernoff needs 1/2 < p0 <= 1, n >= 1, n_bits >= 2".into());
            }
        }
        if self.kind == ScenarioKind::CalibrationFit {
            let c = &self.calibration;
            let s = &c.synthetic;
            if c.data.is_none() && !(s.n >= 8 && s.hi > s.lo && s.lo >= 0.0 && s.t > 0.0 && s.noise >= 0.0) {
                return err("synthetic", "synthetic fringe needs n >= 8, 0 <= lo < hi, t > 0, noise >= 0".into());
            }
            if !(c.range[1] > c.range[0]) {
                return err("range", "calibration range must be increasing".into());
            }
            if let Some([a, b]) = c.relative_errors {
                if !(a >= 0.0 && b >= 0.0) {
                    return err("relative_errors", "relative errors must be >= 0".into());
                }
            }
        }
        Ok(())
    }

    pub fn truth_phase(&self) -> Phase {
        Phase::from_canonical(self.truth.unwrap_or(DEFAULT_TRUTH)).expect("validated")
    }

    pub fn algorithm(&self) -> Algorithm {
        self.algorithm.unwrap_or(match self.kind {
            ScenarioKind::PhaseNoiseSweep | ScenarioKind::T2Sweep => Algorithm::Both,
            _ => Algorithm::Rfpe,
        })
    }

    pub fn steps(&self) -> usize {
        self.steps.unwrap_or(self.kind.default_steps())
    }

    pub fn ensemble(&self) -> usize {
        self.ensemble.unwrap_or(self.kind.default_ensemble())
    }

    pub fn ipea_ensemble(&self) -> usize {
        self.ipea_ensemble.unwrap_or(10)
    }

    pub fn grid(&self) -> Vec<f64> {
        self.grid.clone().unwrap_or_else(|| self.kind.default_grid())
    }

    pub fn strategies(&self) -> Vec<Strategy> {
        self.strategies
            .clone()
            .unwrap_or_else(|| vec![Strategy::SingleShot, Strategy::MajorityVote, Strategy::Sampled(3)])
    }

    pub fn rfpe_config(&self) -> RfpeConfig {
        RfpeConfig { n_steps: self.steps(), ..self.rfpe.clone() }
    }
}

fn strip_location(msg: &str) -> String {
    match msg.rfind(" at line ") {
        Some(i) => msg[..i].to_string(),
        None => msg.to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_uses_kind_defaults() {
        let sc = Scenario::from_json_str(r#"{"kind": "phase_noise_sweep"}"#).unwrap();
        assert_eq!(sc.steps(), 100);
        assert_eq!(sc.grid().len(), 12);
        assert_eq!(sc.algorithm(), Algorithm::Both);
        assert_eq!(sc.ipea_ensemble(), 10);
        assert_eq!(sc.noise.shots, 2000);
    }

    #[test]
    fn unknown_field_is_line_anchored() {
        let text = "{\n  \"kind\": \"convergence\",\n  \"ensembel\": 3\n}";
        let e = Scenario::from_json_str(text).unwrap_err().to_string();
        assert!(e.contains("line 3"), "{e}");
        assert!(e.contains("ensembel"), "{e}");
    }

    #[test]
    fn semantic_errors_point_at_the_key() {
        let text = "{\n  \"kind\": \"convergence\",\n  \"truth\": 7.0\n}";
        let e = Scenario::from_json_str(text).unwrap_err().to_string();
        assert!(e.contains("line 3") && e.contains("truth"), "{e}");
        let text = "{\"kind\": \"molecular_scan\"}";
        assert!(Scenario::from_json_str(text).is_err());
        let text = "{\"kind\": \"convergence\", \"schema\": \"rfpe-lab/2\"}";
        assert!(Scenario::from_json_str(text).is_err());
        let text = "{\"kind\": \"convergence\", \"grid\": [1]}";
        assert!(Scenario::from_json_str(text).is_err());
    }

    #[test]
    fn strategies_parse() {
        let text = r#"{"kind": "strategy_comparison", "strategies": ["single_shot", {"sampled": 3}, "majority_vote"]}"#;
        let sc = Scenario::from_json_str(text).unwrap();
        assert_eq!(sc.strategies()[1], Strategy::Sampled(3));
    }
}
