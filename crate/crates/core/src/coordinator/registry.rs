//! What the coordinator knows about each agent.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::clock::{Millis, LOCATION_SLOTS, POWER_SLOTS};
use crate::messages::{AgentHello, Heartbeat};
use crate::power_model::{Os, PowerMode};
use crate::profiles::{
    AgentProfiles, LocationProfile, LocationProfileSlot, PowerProfile, PowerProfileSlot, ProfileError,
    ProfileSnapshot,
};

/// An agent is online while its last heartbeat is this recent: two missed
/// 90 s heartbeats take it offline.
pub const ONLINE_WINDOW_MS: Millis = 180_000;

/// Profiles rebuilt from patches. Usable once every slot has been received.
#[derive(Debug, Clone)]
pub struct ProfileMirror {
    profiles: AgentProfiles,
    seen_power: Vec<bool>,
    seen_location: Vec<bool>,
    missing: usize,
}

impl ProfileMirror {
    pub fn new(agent_id: &str, utc_offset_min: i32) -> Self {
        let power = PowerProfile::filled(|weekday, minute_of_day| PowerProfileSlot {
            weekday,
            minute_of_day,
            p_running: 0.0,
            p_app_running: 0.0,
            p_plugged: 0.0,
            mean_power_normal: 0.0,
            mean_power_save: 0.0,
        });
        let location = LocationProfile::filled(|weekday, quarter_of_day| LocationProfileSlot {
            weekday,
            quarter_of_day,
            latitude: 0.0,
            longitude: 0.0,
            accuracy: 0.0,
            zip: String::new(),
            p_present: 0.0,
        });
        Self {
            profiles: AgentProfiles {
                agent_id: agent_id.to_string(),
                utc_offset_min,
                power,
                location,
                updated_at: 0,
            },
            seen_power: vec![false; POWER_SLOTS],
            seen_location: vec![false; LOCATION_SLOTS],
            missing: POWER_SLOTS + LOCATION_SLOTS,
        }
    }

    pub fn apply(&mut self, patch: &ProfileSnapshot) -> Result<(), ProfileError> {
        self.profiles.apply_patch(patch)?;
        for s in &patch.power_slots {
            if !std::mem::replace(&mut self.seen_power[s.index()], true) {
                self.missing -= 1;
            }
        }
        for s in &patch.location_slots {
            if !std::mem::replace(&mut self.seen_location[s.index()], true) {
                self.missing -= 1;
            }
        }
        Ok(())
    }

    pub fn is_complete(&self) -> bool {
        self.missing == 0
    }

    pub fn profiles(&self) -> Option<&AgentProfiles> {
        self.is_complete().then_some(&self.profiles)
    }
}

#[derive(Debug, Clone)]
pub struct AgentRecord {
    pub agent_id: String,
    pub os: Os,
    pub utc_offset_min: i32,
    pub save_drop_fraction: f64,
    pub last_heartbeat: Option<Millis>,
    pub mode: PowerMode,
    pub plugged: bool,
    pub mirror: ProfileMirror,
}

impl AgentRecord {
    pub fn is_online(&self, now: Millis) -> bool {
        self.last_heartbeat.is_some_and(|t| now - t <= ONLINE_WINDOW_MS)
    }

    pub fn summary(&self, now: Millis) -> AgentSummary {
        AgentSummary {
            agent_id: self.agent_id.clone(),
            os: self.os,
            online: self.is_online(now),
            last_heartbeat: self.last_heartbeat,
            mode: self.mode,
            plugged: self.plugged,
            utc_offset_min: self.utc_offset_min,
            profile_complete: self.mirror.is_complete(),
        }
    }
}

/// Row of `GET /agents`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentSummary {
    pub agent_id: String,
    pub os: Os,
    pub online: bool,
    pub last_heartbeat: Option<Millis>,
    pub mode: PowerMode,
    pub plugged: bool,
    pub utc_offset_min: i32,
    pub profile_complete: bool,
}

#[derive(Debug, Clone, Default)]
pub struct Registry {
    agents: BTreeMap<String, AgentRecord>,
}

impl Registry {
    pub fn hello(&mut self, h: &AgentHello) {
        let rec = self.agents.entry(h.agent_id.clone()).or_insert_with(|| AgentRecord {
            agent_id: h.agent_id.clone(),
            os: h.os,
            utc_offset_min: h.utc_offset_min,
            save_drop_fraction: h.save_drop_fraction,
            last_heartbeat: None,
            mode: PowerMode::Normal,
            plugged: false,
            mirror: ProfileMirror::new(&h.agent_id, h.utc_offset_min),
        });
        rec.os = h.os;
        rec.utc_offset_min = h.utc_offset_min;
        rec.save_drop_fraction = h.save_drop_fraction;
    }

    /// Heartbeats from agents that never said hello are ignored.
    pub fn heartbeat(&mut self, hb: &Heartbeat) -> bool {
        let Some(rec) = self.agents.get_mut(&hb.agent_id) else {
            return false;
        };
        if rec.last_heartbeat.is_some_and(|t| t > hb.at_ms) {
            return false;
        }
        rec.last_heartbeat = Some(hb.at_ms);
        rec.mode = hb.mode;
        rec.plugged = hb.plugged;
        true
    }

    pub fn profile_patch(&mut self, patch: &ProfileSnapshot) -> Result<bool, ProfileError> {
        match self.agents.get_mut(&patch.agent_id) {
            Some(rec) => rec.mirror.apply(patch).map(|_| true),
            None => Ok(false),
        }
    }

    pub fn get(&self, id: &str) -> Option<&AgentRecord> {
        self.agents.get(id)
    }

    pub fn iter(&self) -> impl Iterator<Item = &AgentRecord> {
        self.agents.values()
    }

    pub fn len(&self) -> usize {
        self.agents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.agents.is_empty()
    }

    pub fn summaries(&self, now: Millis) -> Vec<AgentSummary> {
        self.agents.values().map(|a| a.summary(now)).collect()
    }
}
