//! Scenario files, seeded Monte-Carlo ensembles, CSV/JSON/SVG outputs.

pub mod ensemble;
pub mod molecular;
pub mod plot;
pub mod run;
pub mod scenario;

pub use molecular::{load_molecular_table, MolecularRecord};
pub use plot::{emit_plot, PlotSpec, SeriesSpec};
pub use run::{execute, prepare, run_scenario, Manifest, Summary};
pub use scenario::{Scenario, ScenarioKind};
