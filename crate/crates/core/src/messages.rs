//! Payloads exchanged over the bus and the topics they travel on.

use serde::{Deserialize, Serialize};

use crate::clock::Millis;
use crate::power_model::{Os, PowerMode};

pub mod topics {
    use crate::power_model::{Os, PowerMode};

    pub fn agent(id: &str) -> String {
        format!("agents/{id}")
    }
    pub fn heartbeat(id: &str) -> String {
        format!("heartbeats/{id}")
    }
    pub fn profile(id: &str) -> String {
        format!("profiles/{id}")
    }
    pub fn status(id: &str) -> String {
        format!("status/{id}")
    }
    pub fn schedule(id: &str) -> String {
        format!("schedules/{id}")
    }
    pub fn model(os: Os, mode: PowerMode) -> String {
        format!("models/{os}/{mode}")
    }
    pub fn event(id: &str) -> String {
        format!("events/{id}")
    }

    pub const ALL_AGENTS: &str = "agents/*";
    pub const ALL_HEARTBEATS: &str = "heartbeats/*";
    pub const ALL_PROFILES: &str = "profiles/*";
    pub const ALL_STATUS: &str = "status/*";
}

/// A message a sans-IO component wants published.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Outgoing {
    pub topic: String,
    pub payload: serde_json::Value,
}

impl Outgoing {
    pub fn new<T: Serialize>(topic: String, payload: &T) -> Self {
        Self {
            topic,
            payload: serde_json::to_value(payload).expect("message serializes"),
        }
    }
}

/// Published once by an agent when it comes up.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentHello {
    pub agent_id: String,
    pub os: Os,
    pub utc_offset_min: i32,
    pub save_drop_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Heartbeat {
    pub agent_id: String,
    pub at_ms: Millis,
    pub mode: PowerMode,
    pub plugged: bool,
}

/// Instruction for one agent to run in power-save mode for a window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DRSchedule {
    pub schedule_id: String,
    pub event_id: String,
    pub agent_id: String,
    pub start: Millis,
    pub duration_s: u64,
    pub estimated_contribution: f64,
    pub issued_at: Millis,
}

impl DRSchedule {
    pub fn end(&self) -> Millis {
        self.start + self.duration_s as Millis * 1000
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StatusKind {
    Joined,
    Left,
    Declined,
    Stale,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StatusMessage {
    pub agent_id: String,
    pub event_id: String,
    pub status: StatusKind,
    pub at_ms: Millis,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn status_wire_form() {
        let s = StatusMessage {
            agent_id: "a".into(),
            event_id: "e".into(),
            status: StatusKind::Joined,
            at_ms: 5,
        };
        assert_eq!(
            serde_json::to_string(&s).unwrap(),
            r#"{"agent_id":"a","event_id":"e","status":"joined","at_ms":5}"#
        );
        assert_eq!(topics::model(Os::Ubuntu, PowerMode::Save), "models/ubuntu/save");
    }
}
