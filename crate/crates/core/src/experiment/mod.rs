//! Scenario runs and the command-line verbs.
//!
//! [`run_experiment`] boots a bus, a coordinator and a fleet under a
//! virtual clock, issues the scenario's events (or replays its supply
//! trace) and measures what the fleet actually curtailed. The `cmd_*`
//! functions in [`commands`] back the binary's verbs.

pub mod commands;
mod harness;
mod report;
mod scenario;

pub use harness::{run_experiment, ExperimentOutput, STEP_MS};
pub use report::{
    averages, fleet_summary, fmt2, mean, render_table, write_demand_csv, write_events_csv, Averages, DemandRow,
    EventRow, ExperimentReport, FleetSummary, ModelRow, CSV_SCHEMA, REPORT_FORMAT,
};
pub use scenario::{
    Scenario, ScenarioAgent, ScenarioEvent, ScenarioSupply, ScenarioSupplyPoint, DEFAULT_START, SCENARIO_FORMAT,
};

use thiserror::Error;

use crate::agent::AgentError;
use crate::bus::BusError;
use crate::coordinator::CoordinatorError;
use crate::power_model::ModelError;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("invalid scenario:\n  {}", .0.join("\n  "))]
    Scenario(Vec<String>),
    #[error("usage: {0}")]
    Usage(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error(transparent)]
    Coordinator(#[from] CoordinatorError),
    #[error(transparent)]
    Bus(#[from] BusError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl ExperimentError {
    /// Process exit code: 2 for bad input (schema, scenario, usage), 1 for
    /// everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            ExperimentError::Scenario(_)
            | ExperimentError::Usage(_)
            | ExperimentError::Json(_)
            | ExperimentError::Model(ModelError::Schema(_))
            | ExperimentError::Model(ModelError::UnknownName(_))
            | ExperimentError::Model(ModelError::InvalidSpec(_))
            | ExperimentError::Model(ModelError::TooManyCandidates { .. }) => 2,
            _ => 1,
        }
    }
}
