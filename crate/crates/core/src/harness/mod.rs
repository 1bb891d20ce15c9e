//! Scenario generation, the closed-loop slot simulation and experiment
//! sweeps with their CSV/JSON output.

pub mod config;
pub mod experiment;
pub mod report;
pub mod scenario;
pub mod slot;

pub use config::ScenarioConfig;
pub use experiment::{Estimate, ResultRow, Sweep};
pub use report::{emit_report, read_csv, summarize, write_csv, Summary, SummaryCell};
pub use scenario::{generate_scenario, Scenario, Vehicle};
pub use slot::{Method, PairRecord, RsuRecord, Simulation, SlotRecord, VehicleRecord};
