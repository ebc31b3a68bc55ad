use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use rfpe_lab::harness::run::{execute, prepare, resolve_out_dir, run_scenario, Manifest};
use rfpe_lab::harness::{emit_plot, PlotSpec, Scenario, ScenarioKind};
use rfpe_lab::{Error, Result};

#[derive(Parser)]
#[command(name = "rfpe-lab", version, about = "Bayesian and iterative phase estimation experiments on a simulated device")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Master seed; overrides the scenario's rng_seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (default: scenario output_dir, then $RFPE_LAB_OUT_DIR/<kind>).
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// Worker threads for Monte-Carlo trials (default: all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Also write SVG figures.
    #[arg(long, global = true)]
    plot: bool,
}

#[derive(Args, Clone, Default)]
struct Overrides {
    /// True eigenphase in radians.
    #[arg(long)]
    truth: Option<f64>,
    /// Monte-Carlo runs per point.
    #[arg(long)]
    ensemble: Option<usize>,
    /// RFPE steps per run.
    #[arg(long)]
    steps: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario file.
    Run { config: PathBuf },
    /// Render a plot spec (JSON) to SVG.
    Plot {
        spec: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
    },
    Convergence(Overrides),
    PhaseNoiseSweep(Overrides),
    T2Sweep(Overrides),
    T2Convergence(Overrides),
    StrategyComparison(Overrides),
    MolecularScan {
        /// CSV with distance, eigenphase, reference_energy, scale, offset.
        table: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
    FidelityCurve,
    ChernoffCurve,
    CalibrationFit {
        /// CSV with p_el, p_op; synthetic data when omitted.
        #[arg(long)]
        data: Option<PathBuf>,
    },
}

fn scenario_for(cmd: &Command) -> Option<Scenario> {
    let (kind, ov) = match cmd {
        Command::Run { .. } | Command::Plot { .. } => return None,
        Command::Convergence(o) => (ScenarioKind::Convergence, o.clone()),
        Command::PhaseNoiseSweep(o) => (ScenarioKind::PhaseNoiseSweep, o.clone()),
        Command::T2Sweep(o) => (ScenarioKind::T2Sweep, o.clone()),
        Command::T2Convergence(o) => (ScenarioKind::T2Convergence, o.clone()),
        Command::StrategyComparison(o) => (ScenarioKind::StrategyComparison, o.clone()),
        Command::MolecularScan { overrides, .. } => (ScenarioKind::MolecularScan, overrides.clone()),
        Command::FidelityCurve => (ScenarioKind::FidelityCurve, Overrides::default()),
        Command::ChernoffCurve => (ScenarioKind::ChernoffCurve, Overrides::default()),
        Command::CalibrationFit { .. } => (ScenarioKind::CalibrationFit, Overrides::default()),
    };
    let mut sc = Scenario::new(kind);
    sc.truth = ov.truth;
    sc.ensemble = ov.ensemble;
    sc.steps = ov.steps;
    match cmd {
        Command::MolecularScan { table, .. } => sc.table = Some(table.clone()),
        Command::CalibrationFit { data } => sc.calibration.data = data.clone(),
        _ => {}
    }
    Some(sc)
}

fn run(cli: Cli) -> Result<Option<Manifest>> {
    let c = &cli.common;
    match &cli.command {
        Command::Run { config } => run_scenario(config, c.out_dir.as_deref(), c.seed, c.plot).map(Some),
        Command::Plot { spec, output } => {
            let text = std::fs::read_to_string(spec)?;
            let spec: PlotSpec = serde_json::from_str(&text)
                .map_err(|e| Error::Config(format!("{}: line {}, column {}: {e}", spec.display(), e.line(), e.column())))?;
            emit_plot(&spec, output)?;
            Ok(None)
        }
        cmd => {
            let mut sc = scenario_for(cmd).expect("scenario subcommand");
            if let Some(s) = c.seed {
                sc.rng_seed = s;
            }
            let prepared = prepare(sc)?;
            let dir = resolve_out_dir(c.out_dir.as_deref(), &prepared.scenario);
            execute(&prepared, &dir, c.plot).map(Some)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.common.workers {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot start {n} workers: {e}");
            return ExitCode::from(2);
        }
    }
    match run(cli) {
        Ok(Some(m)) => {
            println!("{}: {} series written, criteria {:?}", m.kind.name(), m.series.len(), m.criteria);
            ExitCode::SUCCESS
        }
        Ok(None) => ExitCode::SUCCESS,
        Err(e @ (Error::Config(_) | Error::Load { .. } | Error::UnknownColumn(_))) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
