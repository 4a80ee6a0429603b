//! Simulated laptops running the demand-side manager.
//!
//! [`AgentNode`] is a sans-IO state machine: feed it bus deliveries and
//! clock ticks, collect the messages it wants published. [`spawn_agent`]
//! drives one on a real clock against any [`BusHandle`](crate::bus::BusHandle).

mod driver;
mod node;
mod schedule;
mod workload;

pub use driver::{spawn_agent, AgentRunner};
pub use node::{AgentConfig, AgentCounters, AgentNode};
pub use schedule::ScheduleBook;
pub use workload::{
    apply_power_mode, sample_interval_ms, synthetic_training_log, Battery, GeneratedSample, MetricsGenerator,
    PowerLaw, WorkloadPhase,
};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bus::BusError;
use crate::geo::GeoFix;
use crate::power_model::Os;
use crate::profiles::ProfileError;

#[derive(Debug, Error)]
pub enum AgentError {
    #[error("invalid workload phase: {0}")]
    InvalidPhase(String),
    #[error("invalid agent: {0}")]
    InvalidAgent(String),
    #[error(transparent)]
    Profile(#[from] ProfileError),
    #[error(transparent)]
    Bus(#[from] BusError),
}

/// Average measured power drop of power-save mode.
pub fn default_save_drop(os: Os) -> f64 {
    match os {
        Os::Windows => 0.2646,
        Os::Ubuntu => 0.0695,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentDescriptor {
    pub agent_id: String,
    pub os: Os,
    pub save_drop_fraction: f64,
    /// Where the laptop is outside office hours.
    pub home: GeoFix,
    /// Where the laptop is on weekdays 09:00 to 17:00 local time.
    pub work: GeoFix,
    pub utc_offset_min: i32,
    /// The user's "no DR on this laptop" switch.
    pub opt_out: bool,
}

impl AgentDescriptor {
    pub fn new(agent_id: impl Into<String>, os: Os, home: GeoFix, work: GeoFix) -> Self {
        Self {
            agent_id: agent_id.into(),
            os,
            save_drop_fraction: default_save_drop(os),
            home,
            work,
            utc_offset_min: 0,
            opt_out: false,
        }
    }

    pub fn validate(&self) -> Result<(), AgentError> {
        crate::bus::validate_topic(&self.agent_id)
            .map_err(|_| AgentError::InvalidAgent(format!("agent id `{}`", self.agent_id)))?;
        if self.agent_id.contains('/') {
            return Err(AgentError::InvalidAgent(format!("agent id `{}`", self.agent_id)));
        }
        if !(0.0..=1.0).contains(&self.save_drop_fraction) {
            return Err(AgentError::InvalidAgent(format!(
                "save_drop_fraction {}",
                self.save_drop_fraction
            )));
        }
        self.home.validate().map_err(ProfileError::from)?;
        self.work.validate().map_err(ProfileError::from)?;
        Ok(())
    }
}
