//! Execution of each scenario kind, CSV persistence and the run manifest.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::analysis::{
    chernoff_bound, critical_signal, critical_signal_solved, effective_probability, exact_minority_tail, expected_bad_bits,
    VotingScenario,
};
use crate::calibration::{
    fit_fringe_with, phase_power_map, propagate_phase_uncertainty, read_fringe_csv, synthetic_fringe, write_fit_json,
    write_fit_table, FitOptions, FringeFit, FringeSample,
};
use crate::device::{fidelity_vs_noise, DeviceModel, FidelityPoint, StatePrepSpec};
use crate::error::{Error, Result};
use crate::harness::ensemble::{
    bootstrap_median_se, ipea_trial, lane, log_error_slope, median, rfpe_trial, run_trials, slope_change_step, step_bands,
    trial_rng, Band, StepStat,
};
use crate::harness::molecular::{load_molecular_table, MolecularRecord};
use crate::harness::plot::{emit_plot, Mark, PlotSpec, SeriesSpec};
use crate::harness::scenario::{Scenario, ScenarioKind, SCHEMA};
use crate::noise::{NoiseConfig, Strategy};
use crate::phase::Phase;
use crate::rfpe::RfpeConfig;

pub const OUT_DIR_ENV: &str = "RFPE_LAB_OUT_DIR";

fn num(v: f64) -> String {
    format!("{v}")
}

/// One CSV data series.
#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    pub name: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(name: impl Into<String>, header: &[&str]) -> Self {
        Self { name: name.into(), header: header.iter().map(|s| s.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push_nums(&mut self, cells: &[f64]) {
        self.rows.push(cells.iter().map(|v| num(*v)).collect());
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let i = self.header.iter().position(|h| h == name)?;
        Some(self.rows.iter().map(|r| r[i].parse().unwrap_or(f64::NAN)).collect())
    }

    pub fn to_csv(&self) -> Result<Vec<u8>> {
        let mut wtr = csv::Writer::from_writer(Vec::new());
        wtr.write_record(&self.header)?;
        for r in &self.rows {
            wtr.write_record(r)?;
        }
        wtr.into_inner().map_err(|e| Error::Io(e.into_error()))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FileEntry {
    pub name: String,
    pub file: String,
    pub rows: usize,
}

/// Collects series in memory and, when given a directory, writes each CSV
/// as soon as it is produced.
#[derive(Debug, Default)]
pub struct Sink {
    dir: Option<PathBuf>,
    pub tables: Vec<Table>,
    pub files: Vec<FileEntry>,
}

impl Sink {
    pub fn memory() -> Self {
        Self::default()
    }

    pub fn to_dir(dir: &Path) -> Self {
        Self { dir: Some(dir.to_path_buf()), ..Self::default() }
    }

    pub fn dir(&self) -> Option<&Path> {
        self.dir.as_deref()
    }

    pub fn emit(&mut self, table: Table) -> Result<()> {
        let file = format!("{}.csv", table.name);
        if let Some(d) = &self.dir {
            std::fs::write(d.join(&file), table.to_csv()?)?;
        }
        self.files.push(FileEntry { name: table.name.clone(), file, rows: table.rows.len() });
        self.tables.push(table);
        Ok(())
    }

    pub fn write_text(&mut self, file: &str, contents: &[u8]) -> Result<()> {
        if let Some(d) = &self.dir {
            std::fs::write(d.join(file), contents)?;
        }
        Ok(())
    }

    pub fn table(&self, name: &str) -> Option<&Table> {
        self.tables.iter().find(|t| t.name == name)
    }
}

/// Inputs loaded and checked before anything is written.
#[derive(Clone, Debug)]
pub struct Prepared {
    pub scenario: Scenario,
    pub molecules: Vec<MolecularRecord>,
    pub fringe: Vec<FringeSample>,
}

pub fn prepare(scenario: Scenario) -> Result<Prepared> {
    scenario.check()?;
    let molecules = match (&scenario.table, scenario.kind) {
        (Some(p), ScenarioKind::MolecularScan) => {
            let recs = load_molecular_table(p)?;
            if recs.is_empty() {
                return Err(Error::Config(format!("molecular table {} has no records", p.display())));
            }
            recs
        }
        _ => Vec::new(),
    };
    let fringe = match (&scenario.calibration.data, scenario.kind) {
        (Some(p), ScenarioKind::CalibrationFit) => read_fringe_csv(std::fs::File::open(p)?)?,
        (None, ScenarioKind::CalibrationFit) => {
            let s = &scenario.calibration.synthetic;
            let mut data = synthetic_fringe([s.b, s.a, s.t, s.p_phi], s.lo, s.hi, s.n);
            if s.noise > 0.0 {
                use rand_distr::{Distribution, StandardNormal};
                let mut rng = trial_rng(scenario.rng_seed, lane(0, 9), 0);
                for d in &mut data {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    d.p_op += s.noise * z;
                }
            }
            data
        }
        _ => Vec::new(),
    };
    Ok(Prepared { scenario, molecules, fringe })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceSummary {
    pub runs: usize,
    pub steps: usize,
    pub final_error: Band,
    pub median_final_sigma: f64,
    /// Slope of ln(median error) per step, from step 5 to the last step.
    pub log_error_slope: f64,
    /// Fraction of runs whose final error is at most twice the final sigma.
    pub fraction_within_two_sigma: f64,
}

fn step_table(name: &str, runs: &[Vec<StepStat>], pct: [f64; 2]) -> (Table, Vec<(Band, f64)>) {
    let bands = step_bands(runs, pct);
    let mut t = Table::new(name, &["step", "median_error", "lo_error", "hi_error", "median_sigma"]);
    for (i, (b, s)) in bands.iter().enumerate() {
        t.push_nums(&[(i + 1) as f64, b.median, b.lo, b.hi, *s]);
    }
    (t, bands)
}

pub fn convergence(sc: &Scenario, sink: &mut Sink) -> Result<ConvergenceSummary> {
    let truth = sc.truth_phase();
    let cfg = sc.rfpe_config();
    let runs = run_trials(sc.ensemble(), |t| rfpe_trial(truth, &sc.noise, &cfg, sc.rng_seed, 0, t))?;
    let (table, bands) = step_table("convergence", &runs, sc.band);
    sink.emit(table)?;
    let mut fin = Table::new("final", &["run", "error", "sigma"]);
    let mut within = 0;
    let mut errs = Vec::new();
    let mut sigs = Vec::new();
    for (i, r) in runs.iter().enumerate() {
        let last = r.last().copied().unwrap_or(StepStat { mu: Phase::ZERO, error: f64::NAN, sigma: f64::NAN });
        fin.push_nums(&[i as f64, last.error, last.sigma]);
        within += usize::from(last.error <= 2.0 * last.sigma);
        errs.push(last.error);
        sigs.push(last.sigma);
    }
    sink.emit(fin)?;
    let med: Vec<f64> = bands.iter().map(|b| b.0.median).collect();
    Ok(ConvergenceSummary {
        runs: runs.len(),
        steps: cfg.n_steps,
        final_error: Band::of(&errs, sc.band),
        median_final_sigma: median(&sigs),
        log_error_slope: if med.len() >= 6 { log_error_slope(&med, 5, med.len()) } else { f64::NAN },
        fraction_within_two_sigma: within as f64 / runs.len() as f64,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub x: f64,
    pub rfpe: Option<Band>,
    pub ipea: Option<Band>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    pub variable: String,
    pub points: Vec<SweepPoint>,
    /// Largest ratio between median errors at adjacent grid points.
    pub max_adjacent_jump_rfpe: Option<f64>,
    pub max_adjacent_jump_ipea: Option<f64>,
}

pub fn max_adjacent_ratio(values: &[f64]) -> f64 {
    values.windows(2).map(|w| (w[0] / w[1]).max(w[1] / w[0])).fold(1.0, f64::max)
}

fn sweep(sc: &Scenario, sink: &mut Sink, variable: &str, apply: impl Fn(f64) -> (NoiseConfig, RfpeConfig) + Sync) -> Result<SweepSummary> {
    let truth = sc.truth_phase();
    let algo = sc.algorithm();
    let grid = sc.grid();
    let header = [variable, "median_error", "lo_error", "hi_error"];
    let mut points: Vec<SweepPoint> = grid.iter().map(|&x| SweepPoint { x, rfpe: None, ipea: None }).collect();
    if algo.rfpe() {
        let mut t = Table::new("rfpe", &header);
        for (i, &x) in grid.iter().enumerate() {
            let (noise, cfg) = apply(x);
            let runs = run_trials(sc.ensemble(), |k| rfpe_trial(truth, &noise, &cfg, sc.rng_seed, i, k))?;
            let errs: Vec<f64> = runs.iter().filter_map(|r| r.last().map(|s| s.error)).collect();
            let b = Band::of(&errs, sc.band);
            t.push_nums(&[x, b.median, b.lo, b.hi]);
            points[i].rfpe = Some(b);
        }
        sink.emit(t)?;
    }
    if algo.ipea() {
        let mut t = Table::new("ipea", &header);
        for (i, &x) in grid.iter().enumerate() {
            let (noise, _) = apply(x);
            let errs = run_trials(sc.ipea_ensemble(), |k| ipea_trial(truth, &noise, &sc.ipea, sc.rng_seed, i, k))?;
            let b = Band::of(&errs, sc.band);
            t.push_nums(&[x, b.median, b.lo, b.hi]);
            points[i].ipea = Some(b);
        }
        sink.emit(t)?;
    }
    let jump = |f: fn(&SweepPoint) -> Option<Band>| {
        let v: Option<Vec<f64>> = points.iter().map(|p| f(p).map(|b| b.median)).collect();
        v.map(|v| max_adjacent_ratio(&v))
    };
    Ok(SweepSummary {
        variable: variable.to_string(),
        max_adjacent_jump_rfpe: jump(|p| p.rfpe),
        max_adjacent_jump_ipea: jump(|p| p.ipea),
        points,
    })
}

pub fn phase_noise_sweep(sc: &Scenario, sink: &mut Sink) -> Result<SweepSummary> {
    let cfg = sc.rfpe_config();
    sweep(sc, sink, "sigma_phase", |s| (NoiseConfig { sigma_phase: s, ..sc.noise.clone() }, cfg.clone()))
}

/// RFPE runs with the evolution length capped at `T₂`.
pub fn t2_sweep(sc: &Scenario, sink: &mut Sink) -> Result<SweepSummary> {
    let cfg = sc.rfpe_config();
    sweep(sc, sink, "t2", |t2| (NoiseConfig { t2: Some(t2), ..sc.noise.clone() }, RfpeConfig { t2_cap: Some(t2), ..cfg.clone() }))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct T2Curve {
    pub t2: f64,
    pub final_error: Band,
    /// Step at which the log-error slope changes, from a two-segment fit.
    pub break_step: Option<usize>,
    /// `1/σ` (median reported sigma) at the break.
    pub inverse_sigma_at_break: Option<f64>,
    /// `(1/σ) / T₂` at the break.
    pub ratio: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct T2ConvergenceSummary {
    pub curves: Vec<T2Curve>,
}

pub fn t2_series_name(t2: f64) -> String {
    format!("t2_{}", num(t2).replace('.', "p"))
}

pub fn t2_convergence(sc: &Scenario, sink: &mut Sink) -> Result<T2ConvergenceSummary> {
    let truth = sc.truth_phase();
    let mut curves = Vec::new();
    for (i, &t2) in sc.grid().iter().enumerate() {
        let noise = NoiseConfig { t2: Some(t2), ..sc.noise.clone() };
        let cfg = RfpeConfig { t2_cap: Some(t2), ..sc.rfpe_config() };
        let runs = run_trials(sc.ensemble(), |k| rfpe_trial(truth, &noise, &cfg, sc.rng_seed, i, k))?;
        let (table, bands) = step_table(&t2_series_name(t2), &runs, sc.band);
        sink.emit(table)?;
        let med: Vec<f64> = bands.iter().map(|b| b.0.median).collect();
        let break_step = slope_change_step(&med, 5);
        let inv = break_step.map(|k| 1.0 / bands[k - 1].1);
        let errs: Vec<f64> = runs.iter().filter_map(|r| r.last().map(|s| s.error)).collect();
        curves.push(T2Curve {
            t2,
            final_error: Band::of(&errs, sc.band),
            break_step,
            inverse_sigma_at_break: inv,
            ratio: inv.map(|v| v / t2),
        });
    }
    Ok(T2ConvergenceSummary { curves })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StrategyEntry {
    pub strategy: Strategy,
    pub label: String,
    /// Median error at the last step.
    pub median_error: f64,
    pub bootstrap_se: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StrategySummary {
    pub step: usize,
    pub entries: Vec<StrategyEntry>,
}

pub fn strategy_comparison(sc: &Scenario, sink: &mut Sink) -> Result<StrategySummary> {
    let truth = sc.truth_phase();
    let cfg = sc.rfpe_config();
    let mut entries = Vec::new();
    for (i, strategy) in sc.strategies().into_iter().enumerate() {
        let noise = NoiseConfig { strategy, ..sc.noise.clone() };
        let runs = run_trials(sc.ensemble(), |k| rfpe_trial(truth, &noise, &cfg, sc.rng_seed, i, k))?;
        let label = strategy.label();
        let (table, _) = step_table(&format!("strategy_{label}"), &runs, sc.band);
        sink.emit(table)?;
        let errs: Vec<f64> = runs.iter().filter_map(|r| r.last().map(|s| s.error)).collect();
        let mut rng = trial_rng(sc.rng_seed, lane(i, 7), 0);
        entries.push(StrategyEntry {
            strategy,
            label,
            median_error: median(&errs),
            bootstrap_se: bootstrap_median_se(&errs, 1000, &mut rng),
        });
    }
    Ok(StrategySummary { step: cfg.n_steps, entries })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MolecularSummary {
    pub records: usize,
    pub runs_per_record: usize,
    pub fraction_within_chemical_accuracy: f64,
    pub mean_error_kcal_mol: f64,
    pub median_error_kcal_mol: f64,
}

pub fn molecular_scan(sc: &Scenario, records: &[MolecularRecord], sink: &mut Sink) -> Result<MolecularSummary> {
    if records.is_empty() {
        return Err(Error::Config("molecular table has no records".into()));
    }
    let cfg = sc.rfpe_config();
    let runs = sc.ensemble();
    let mut t = Table::new(
        "molecular",
        &["distance", "run", "reference_energy", "true_phase", "estimated_phase", "estimated_energy", "error_kcal_mol"],
    );
    let mut errors = Vec::new();
    for (i, rec) in records.iter().enumerate() {
        let finals = run_trials(runs, |k| {
            let trace = rfpe_trial(rec.eigenphase, &sc.noise, &cfg, sc.rng_seed, i, k)?;
            Ok(trace.last().copied())
        })?;
        for (k, last) in finals.into_iter().enumerate() {
            let est = last.map_or(Phase::ZERO, |s| s.mu);
            let err = rec.error_kcal_mol(est);
            errors.push(err);
            t.push_nums(&[
                rec.bond_distance,
                k as f64,
                rec.reference_energy,
                rec.eigenphase.value(),
                est.value(),
                rec.energy(est),
                err,
            ]);
        }
    }
    sink.emit(t)?;
    let within = errors.iter().filter(|e| **e < 1.0).count();
    Ok(MolecularSummary {
        records: records.len(),
        runs_per_record: runs,
        fraction_within_chemical_accuracy: within as f64 / errors.len() as f64,
        mean_error_kcal_mol: errors.iter().sum::<f64>() / errors.len() as f64,
        median_error_kcal_mol: median(&errors),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FidelitySummary {
    pub points: Vec<FidelityPoint>,
}

pub fn fidelity_curve(sc: &Scenario, sink: &mut Sink) -> Result<FidelitySummary> {
    let prep = StatePrepSpec { theta_z: sc.fidelity.theta_z, theta_y: sc.fidelity.theta_y };
    let truth = sc.truth_phase().value();
    let device = DeviceModel::with_eigenphases(prep, truth, truth + std::f64::consts::FRAC_PI_2)?;
    let mut rng = trial_rng(sc.rng_seed, lane(0, 8), 0);
    let points = fidelity_vs_noise(&device.unitary, &prep, &sc.grid(), sc.fidelity.samples, &mut rng)?;
    let mut t = Table::new(
        "fidelity",
        &["sigma", "state_fidelity", "gate_fidelity", "state_stderr", "gate_stderr", "full_gate_fidelity", "full_gate_stderr"],
    );
    for p in &points {
        t.push_nums(&[p.sigma, p.state_fidelity, p.gate_fidelity, p.state_stderr, p.gate_stderr, p.full_gate_fidelity, p.full_gate_stderr]);
    }
    sink.emit(t)?;
    Ok(FidelitySummary { points })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChernoffSummary {
    pub p0: f64,
    pub n: u64,
    pub n_bits: u64,
    pub bound_noiseless: f64,
    pub critical_signal: f64,
    pub critical_signal_solved: f64,
    /// Largest exact-tail / bound ratio on the curve; at most 1.
    pub max_tail_over_bound: f64,
}

pub fn chernoff_curve(sc: &Scenario, sink: &mut Sink) -> Result<ChernoffSummary> {
    let c = &sc.chernoff;
    let mut t = Table::new("chernoff", &["pe", "effective_probability", "bound", "expected_bad_bits", "exact_tail"]);
    let mut worst: f64 = 0.0;
    for &pe in &sc.grid() {
        let s = VotingScenario::new(c.p0, pe, c.n, c.n_bits)?;
        let p = effective_probability(&s);
        let bound = chernoff_bound(p, c.n)?;
        let tail = exact_minority_tail(p, c.n);
        worst = worst.max(tail / bound);
        t.push_nums(&[pe, p, bound, expected_bad_bits(&s)?, tail]);
    }
    sink.emit(t)?;
    let mut crit = Table::new("critical", &["n", "critical_signal", "critical_signal_solved"]);
    for n in [10u64, 20, 50, 100, 200, 500, 1000, 2000, 5000, 10_000, 100_000] {
        crit.push_nums(&[n as f64, critical_signal(c.n_bits, n, 0.0)?, critical_signal_solved(c.n_bits, n, 0.0)?]);
    }
    sink.emit(crit)?;
    Ok(ChernoffSummary {
        p0: c.p0,
        n: c.n,
        n_bits: c.n_bits,
        bound_noiseless: chernoff_bound(c.p0, c.n)?,
        critical_signal: critical_signal(c.n_bits, c.n, 0.0)?,
        critical_signal_solved: critical_signal_solved(c.n_bits, c.n, 0.0)?,
        max_tail_over_bound: worst,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibrationSummary {
    pub fit: FringeFit,
    pub range: [f64; 2],
    /// Average first-order phase uncertainty over `range`, radians.
    pub propagated_sigma: f64,
    pub relative_errors: Option<[f64; 2]>,
}

/// Replaces the fitted `P_Φ` and `T` errors by `[σ_PΦ/P_max, σ_T/T]`, with
/// `P_max` the top of the power range.
pub fn with_relative_errors(fit: &FringeFit, rel: [f64; 2], p_max: f64) -> FringeFit {
    let mut f = fit.clone();
    f.std_errors[3] = rel[0] * p_max;
    f.std_errors[2] = rel[1] * fit.t;
    f
}

pub fn calibration_fit(sc: &Scenario, data: &[FringeSample], sink: &mut Sink) -> Result<CalibrationSummary> {
    let c = &sc.calibration;
    let mut rng = trial_rng(sc.rng_seed, lane(0, 10), 0);
    let fit = fit_fringe_with(data, &FitOptions { restarts: c.restarts, fit_background: c.fit_background }, &mut rng)?;
    let mut fringe = Table::new("fringe", &["p_el", "p_op", "fitted"]);
    for s in data {
        fringe.push_nums(&[s.p_el, s.p_op, fit.predict(s.p_el)]);
    }
    sink.emit(fringe)?;
    let mut buf = Vec::new();
    write_fit_json(&fit, &mut buf)?;
    buf.push(b'\n');
    sink.write_text("fit.json", &buf)?;
    let mut txt = Vec::new();
    write_fit_table(&fit, &mut txt)?;
    sink.write_text("fit.txt", &txt)?;

    let used = match c.relative_errors {
        Some(rel) => with_relative_errors(&fit, rel, c.range[1]),
        None => fit.clone(),
    };
    let mut map = Table::new("phase_map", &["p_el", "phase", "sigma_phase"]);
    let n = 151;
    for i in 0..n {
        let p = c.range[0] + (c.range[1] - c.range[0]) * i as f64 / (n - 1) as f64;
        let sd = propagate_phase_uncertainty(&used, (p - 1e-9, p + 1e-9))?;
        map.push_nums(&[p, phase_power_map(&fit, p)?.value(), sd]);
    }
    sink.emit(map)?;
    Ok(CalibrationSummary {
        propagated_sigma: propagate_phase_uncertainty(&used, (c.range[0], c.range[1]))?,
        fit,
        range: c.range,
        relative_errors: c.relative_errors,
    })
}

/// Any kind's summary, serialized into the manifest.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Summary {
    Convergence(ConvergenceSummary),
    Sweep(SweepSummary),
    T2Convergence(T2ConvergenceSummary),
    Strategy(StrategySummary),
    Molecular(MolecularSummary),
    Fidelity(FidelitySummary),
    Chernoff(ChernoffSummary),
    Calibration(CalibrationSummary),
}

pub fn run_kind(p: &Prepared, sink: &mut Sink) -> Result<Summary> {
    let sc = &p.scenario;
    Ok(match sc.kind {
        ScenarioKind::Convergence => Summary::Convergence(convergence(sc, sink)?),
        ScenarioKind::PhaseNoiseSweep => Summary::Sweep(phase_noise_sweep(sc, sink)?),
        ScenarioKind::T2Sweep => Summary::Sweep(t2_sweep(sc, sink)?),
        ScenarioKind::T2Convergence => Summary::T2Convergence(t2_convergence(sc, sink)?),
        ScenarioKind::StrategyComparison => Summary::Strategy(strategy_comparison(sc, sink)?),
        ScenarioKind::MolecularScan => Summary::Molecular(molecular_scan(sc, &p.molecules, sink)?),
        ScenarioKind::FidelityCurve => Summary::Fidelity(fidelity_curve(sc, sink)?),
        ScenarioKind::ChernoffCurve => Summary::Chernoff(chernoff_curve(sc, sink)?),
        ScenarioKind::CalibrationFit => Summary::Calibration(calibration_fit(sc, &p.fringe, sink)?),
    })
}

fn series(dir: &Path, name: &str, label: &str, x: &str, y: &str, band: Option<[&str; 2]>, mark: Mark) -> SeriesSpec {
    SeriesSpec {
        csv: dir.join(format!("{name}.csv")),
        label: label.into(),
        x: x.into(),
        y: y.into(),
        band: band.map(|[a, b]| [a.into(), b.into()]),
        mark,
    }
}

/// Figure layout for a finished run; one SVG per entry.
pub fn plot_specs(kind: ScenarioKind, dir: &Path, tables: &[Table]) -> Vec<(String, PlotSpec)> {
    let band = Some(["lo_error", "hi_error"]);
    let has = |n: &str| tables.iter().any(|t| t.name == n);
    let spec = |title: &str, xl: &str, yl: &str, x_log: bool, y_log: bool, s: Vec<SeriesSpec>| PlotSpec {
        title: title.into(),
        x_label: xl.into(),
        y_label: yl.into(),
        x_log,
        y_log,
        series: s,
    };
    match kind {
        ScenarioKind::Convergence => vec![(
            "convergence".into(),
            spec("RFPE convergence", "step", "circular error (rad)", false, true, vec![
                series(dir, "convergence", "median error", "step", "median_error", band, Mark::Line),
                series(dir, "convergence", "median sigma", "step", "median_sigma", None, Mark::Line),
            ]),
        )],
        ScenarioKind::PhaseNoiseSweep | ScenarioKind::T2Sweep => {
            let (x, xl, xlog) = if kind == ScenarioKind::T2Sweep { ("t2", "T2 (gate units)", true) } else { ("sigma_phase", "sigma_phase (rad)", false) };
            let s = ["rfpe", "ipea"]
                .iter()
                .filter(|n| has(n))
                .map(|n| series(dir, n, &n.to_uppercase(), x, "median_error", band, Mark::Line))
                .collect();
            vec![(kind.name().into(), spec("median final error", xl, "circular error (rad)", xlog, true, s))]
        }
        ScenarioKind::T2Convergence | ScenarioKind::StrategyComparison => {
            let s = tables
                .iter()
                .map(|t| series(dir, &t.name, &t.name, "step", "median_error", band, Mark::Line))
                .collect();
            vec![(kind.name().into(), spec("RFPE convergence", "step", "circular error (rad)", false, true, s))]
        }
        ScenarioKind::MolecularScan => vec![(
            "molecular_scan".into(),
            spec("energy error", "bond distance (Å)", "error (kcal/mol)", false, true, vec![series(
                dir, "molecular", "RFPE", "distance", "error_kcal_mol", None, Mark::Points,
            )]),
        )],
        ScenarioKind::FidelityCurve => vec![(
            "fidelity_curve".into(),
            spec("fidelity versus phase noise", "sigma_phase (rad)", "fidelity", false, false, vec![
                series(dir, "fidelity", "state", "sigma", "state_fidelity", None, Mark::Line),
                series(dir, "fidelity", "gate", "sigma", "gate_fidelity", None, Mark::Line),
            ]),
        )],
        ScenarioKind::ChernoffCurve => vec![(
            "chernoff_curve".into(),
            spec("wrong-majority probability", "pe", "probability", false, true, vec![
                series(dir, "chernoff", "Chernoff bound", "pe", "bound", None, Mark::Line),
                series(dir, "chernoff", "exact tail", "pe", "exact_tail", None, Mark::Line),
            ]),
        )],
        ScenarioKind::CalibrationFit => vec![
            (
                "fringe".into(),
                spec("fringe fit", "P_el (mW)", "P_op", false, false, vec![
                    series(dir, "fringe", "data", "p_el", "p_op", None, Mark::Points),
                    series(dir, "fringe", "fit", "p_el", "fitted", None, Mark::Line),
                ]),
            ),
            (
                "phase_sigma".into(),
                spec("propagated phase uncertainty", "P_el (mW)", "sigma (rad)", false, false, vec![series(
                    dir, "phase_map", "sigma", "p_el", "sigma_phase", None, Mark::Line,
                )]),
            ),
        ],
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema: String,
    pub kind: ScenarioKind,
    pub seed: u64,
    pub complete: bool,
    pub error: Option<String>,
    pub criteria: Vec<u32>,
    pub config: Scenario,
    pub series: Vec<FileEntry>,
    pub plots: Vec<String>,
    pub summary: Option<Summary>,
}

/// Output directory: explicit flag, then the scenario, then the environment.
pub fn resolve_out_dir(flag: Option<&Path>, sc: &Scenario) -> PathBuf {
    if let Some(p) = flag {
        return p.to_path_buf();
    }
    if let Some(p) = &sc.output_dir {
        return p.clone();
    }
    let base = std::env::var_os(OUT_DIR_ENV).map(PathBuf::from).unwrap_or_else(|| PathBuf::from("rfpe-lab-out"));
    base.join(sc.kind.name())
}

/// Runs a prepared scenario into `dir`. The manifest is always written; a
/// failure leaves the series produced so far and `complete: false`.
pub fn execute(p: &Prepared, dir: &Path, plot: bool) -> Result<Manifest> {
    std::fs::create_dir_all(dir)?;
    let mut sink = Sink::to_dir(dir);
    let result = run_kind(p, &mut sink);
    let mut plots = Vec::new();
    let mut error = result.as_ref().err().map(|e| e.to_string());
    if result.is_ok() && (plot || p.scenario.plot) {
        for (name, spec) in plot_specs(p.scenario.kind, dir, &sink.tables) {
            let file = format!("{name}.svg");
            match emit_plot(&spec, &dir.join(&file)) {
                Ok(()) => plots.push(file),
                Err(e) => {
                    error = Some(e.to_string());
                    break;
                }
            }
        }
    }
    let manifest = Manifest {
        schema: SCHEMA.into(),
        kind: p.scenario.kind,
        seed: p.scenario.rng_seed,
        complete: error.is_none(),
        error: error.clone(),
        criteria: p.scenario.kind.criteria().to_vec(),
        config: p.scenario.clone(),
        series: sink.files.clone(),
        plots,
        summary: result.as_ref().ok().cloned(),
    };
    let mut text = serde_json::to_vec_pretty(&manifest)?;
    text.push(b'\n');
    std::fs::write(dir.join("manifest.json"), text)?;
    match (result, error) {
        (Err(e), _) => Err(e),
        (Ok(_), Some(msg)) => Err(Error::Consistency(msg)),
        (Ok(_), None) => Ok(manifest),
    }
}

/// Parses, validates and runs a scenario file.
pub fn run_scenario(path: &Path, out_dir: Option<&Path>, seed: Option<u64>, plot: bool) -> Result<Manifest> {
    let mut sc = Scenario::from_path(path)?;
    if let Some(s) = seed {
        sc.rng_seed = s;
    }
    let prepared = prepare(sc)?;
    let dir = resolve_out_dir(out_dir, &prepared.scenario);
    execute(&prepared, &dir, plot)
}
