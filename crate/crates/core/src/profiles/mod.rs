//! Weekly probabilistic profiles of a laptop.
//!
//! A power profile has one slot per minute of the week (10,080 slots); a
//! location profile has one per quarter hour (672 slots). Slots are keyed in
//! the agent's local civil time. Updates only ever overwrite slots in place.

mod store;
mod update;

pub use store::{ProfileStore, RETENTION_MS};
pub use update::{
    init_profiles, record_activity_and_backfill, update_location_profile, update_power_profile,
    update_running_probability, ACTIVITY_INTERVAL_MS,
};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clock::{Millis, WeekTime, LOCATION_SLOTS, MINUTES_PER_DAY, POWER_SLOTS, QUARTERS_PER_DAY};
use crate::geo::{GeoError, GeoFix};
use crate::power_model::ModelError;

#[derive(Debug, Error)]
pub enum ProfileError {
    #[error(transparent)]
    Geo(#[from] GeoError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("normal and save models disagree on OS ({normal} vs {save})")]
    OsMismatch { normal: String, save: String },
    #[error("clock regression: now {now} is before last record {last}")]
    ClockRegression { last: Millis, now: Millis },
    #[error("invalid slot: {0}")]
    InvalidSlot(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerProfileSlot {
    pub weekday: u8,
    pub minute_of_day: u16,
    pub p_running: f64,
    pub p_app_running: f64,
    pub p_plugged: f64,
    pub mean_power_normal: f64,
    pub mean_power_save: f64,
}

impl PowerProfileSlot {
    pub fn index(&self) -> usize {
        self.weekday as usize * MINUTES_PER_DAY + self.minute_of_day as usize
    }

    fn validate(&self) -> Result<(), ProfileError> {
        if self.weekday > 6 || self.minute_of_day as usize >= MINUTES_PER_DAY {
            return Err(ProfileError::InvalidSlot(format!(
                "power slot ({}, {})",
                self.weekday, self.minute_of_day
            )));
        }
        for p in [self.p_running, self.p_app_running, self.p_plugged] {
            if !(0.0..=1.0).contains(&p) {
                return Err(ProfileError::InvalidSlot(format!("probability {p}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocationProfileSlot {
    pub weekday: u8,
    pub quarter_of_day: u8,
    pub latitude: f64,
    pub longitude: f64,
    pub accuracy: f64,
    pub zip: String,
    pub p_present: f64,
}

impl LocationProfileSlot {
    pub fn index(&self) -> usize {
        self.weekday as usize * QUARTERS_PER_DAY + self.quarter_of_day as usize
    }

    pub fn position(&self) -> crate::geo::LatLon {
        crate::geo::LatLon {
            lat: self.latitude,
            lon: self.longitude,
        }
    }

    fn validate(&self) -> Result<(), ProfileError> {
        if self.weekday > 6 || self.quarter_of_day as usize >= QUARTERS_PER_DAY {
            return Err(ProfileError::InvalidSlot(format!(
                "location slot ({}, {})",
                self.weekday, self.quarter_of_day
            )));
        }
        self.position().validate()?;
        if !(0.0..=1.0).contains(&self.p_present) {
            return Err(ProfileError::InvalidSlot(format!("probability {}", self.p_present)));
        }
        Ok(())
    }
}

/// Dense 10,080-slot power profile.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerProfile {
    slots: Vec<PowerProfileSlot>,
}

impl PowerProfile {
    /// Every slot initialized from `fill(weekday, minute_of_day)`.
    pub fn filled(mut fill: impl FnMut(u8, u16) -> PowerProfileSlot) -> Self {
        let slots = (0..POWER_SLOTS)
            .map(|i| fill((i / MINUTES_PER_DAY) as u8, (i % MINUTES_PER_DAY) as u16))
            .collect();
        Self { slots }
    }

    pub fn slots(&self) -> &[PowerProfileSlot] {
        &self.slots
    }

    pub fn slot(&self, index: usize) -> &PowerProfileSlot {
        &self.slots[index]
    }

    pub fn slot_at(&self, utc: Millis, utc_offset_min: i32) -> &PowerProfileSlot {
        &self.slots[WeekTime::at(utc, utc_offset_min).power_slot()]
    }

    /// Overwrites the slot at the position the slot names.
    pub fn set(&mut self, slot: PowerProfileSlot) -> Result<(), ProfileError> {
        slot.validate()?;
        let i = slot.index();
        self.slots[i] = slot;
        Ok(())
    }

    pub fn slot_mut(&mut self, index: usize) -> &mut PowerProfileSlot {
        &mut self.slots[index]
    }
}

/// Dense 672-slot location profile.
#[derive(Debug, Clone, PartialEq)]
pub struct LocationProfile {
    slots: Vec<LocationProfileSlot>,
}

impl LocationProfile {
    pub fn filled(mut fill: impl FnMut(u8, u8) -> LocationProfileSlot) -> Self {
        let slots = (0..LOCATION_SLOTS)
            .map(|i| fill((i / QUARTERS_PER_DAY) as u8, (i % QUARTERS_PER_DAY) as u8))
            .collect();
        Self { slots }
    }

    pub fn slots(&self) -> &[LocationProfileSlot] {
        &self.slots
    }

    pub fn slot(&self, index: usize) -> &LocationProfileSlot {
        &self.slots[index]
    }

    pub fn slot_at(&self, utc: Millis, utc_offset_min: i32) -> &LocationProfileSlot {
        &self.slots[WeekTime::at(utc, utc_offset_min).location_slot()]
    }

    pub fn set(&mut self, slot: LocationProfileSlot) -> Result<(), ProfileError> {
        slot.validate()?;
        let i = slot.index();
        self.slots[i] = slot;
        Ok(())
    }
}

/// Timestamped power estimates in both modes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerReading {
    pub timestamp: Millis,
    pub power_normal: f64,
    pub power_save: f64,
    pub plugged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocationRecord {
    pub timestamp: Millis,
    pub fix: GeoFix,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActivityRecord {
    pub timestamp: Millis,
    pub running: bool,
}

/// Profile snapshot / patch wire form.
///
/// A snapshot is dense (all slots in `(weekday, slot)` order). The same
/// shape with a sparse subset of slots is used as an incremental patch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileSnapshot {
    pub agent_id: String,
    pub utc_offset_min: i32,
    pub power_slots: Vec<PowerProfileSlot>,
    pub location_slots: Vec<LocationProfileSlot>,
    pub updated_at: Millis,
}

impl ProfileSnapshot {
    pub fn is_dense(&self) -> bool {
        self.power_slots.len() == POWER_SLOTS && self.location_slots.len() == LOCATION_SLOTS
    }
}

/// The two profiles of one agent.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentProfiles {
    pub agent_id: String,
    pub utc_offset_min: i32,
    pub power: PowerProfile,
    pub location: LocationProfile,
    pub updated_at: Millis,
}

impl AgentProfiles {
    pub fn snapshot(&self) -> ProfileSnapshot {
        ProfileSnapshot {
            agent_id: self.agent_id.clone(),
            utc_offset_min: self.utc_offset_min,
            power_slots: self.power.slots.clone(),
            location_slots: self.location.slots.clone(),
            updated_at: self.updated_at,
        }
    }

    pub fn from_snapshot(snap: ProfileSnapshot) -> Result<Self, ProfileError> {
        if !snap.is_dense() {
            return Err(ProfileError::InvalidSlot(format!(
                "snapshot has {} power / {} location slots",
                snap.power_slots.len(),
                snap.location_slots.len()
            )));
        }
        for (i, s) in snap.power_slots.iter().enumerate() {
            s.validate()?;
            if s.index() != i {
                return Err(ProfileError::InvalidSlot(format!("power slot {i} out of order")));
            }
        }
        for (i, s) in snap.location_slots.iter().enumerate() {
            s.validate()?;
            if s.index() != i {
                return Err(ProfileError::InvalidSlot(format!("location slot {i} out of order")));
            }
        }
        Ok(Self {
            agent_id: snap.agent_id,
            utc_offset_min: snap.utc_offset_min,
            power: PowerProfile {
                slots: snap.power_slots,
            },
            location: LocationProfile {
                slots: snap.location_slots,
            },
            updated_at: snap.updated_at,
        })
    }

    /// Overwrites the slots carried by `patch`.
    pub fn apply_patch(&mut self, patch: &ProfileSnapshot) -> Result<(), ProfileError> {
        for s in &patch.power_slots {
            self.power.set(s.clone())?;
        }
        for s in &patch.location_slots {
            self.location.set(s.clone())?;
        }
        self.utc_offset_min = patch.utc_offset_min;
        self.updated_at = self.updated_at.max(patch.updated_at);
        Ok(())
    }

    /// Dense snapshot split into patches of at most `chunk` slots each, for
    /// transports with a payload limit.
    pub fn chunked_patches(&self, chunk: usize) -> Vec<ProfileSnapshot> {
        let patch = |power: &[PowerProfileSlot], location: &[LocationProfileSlot]| ProfileSnapshot {
            agent_id: self.agent_id.clone(),
            utc_offset_min: self.utc_offset_min,
            power_slots: power.to_vec(),
            location_slots: location.to_vec(),
            updated_at: self.updated_at,
        };
        let mut out: Vec<ProfileSnapshot> = self.power.slots.chunks(chunk).map(|c| patch(c, &[])).collect();
        out.extend(self.location.slots.chunks(chunk).map(|c| patch(&[], c)));
        out
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::geo::LatLon;

    pub(crate) fn blank(agent: &str) -> AgentProfiles {
        let fix = GeoFix::new(LatLon::new(48.0, 11.0).unwrap(), 20.0, "80333");
        AgentProfiles {
            agent_id: agent.into(),
            utc_offset_min: 60,
            power: PowerProfile::filled(|weekday, minute_of_day| PowerProfileSlot {
                weekday,
                minute_of_day,
                p_running: 0.5,
                p_app_running: 0.5,
                p_plugged: 0.5,
                mean_power_normal: 20.0,
                mean_power_save: 15.0,
            }),
            location: LocationProfile::filled(|weekday, quarter_of_day| LocationProfileSlot {
                weekday,
                quarter_of_day,
                latitude: fix.latitude,
                longitude: fix.longitude,
                accuracy: fix.accuracy,
                zip: fix.zip.clone(),
                p_present: 1.0,
            }),
            updated_at: 0,
        }
    }

    #[test]
    fn snapshot_round_trips_through_json() {
        let p = blank("a1");
        let json = serde_json::to_string(&p.snapshot()).unwrap();
        let back: ProfileSnapshot = serde_json::from_str(&json).unwrap();
        assert_eq!(AgentProfiles::from_snapshot(back).unwrap(), p);
    }

    #[test]
    fn sparse_snapshot_is_not_a_profile() {
        let mut s = blank("a1").snapshot();
        s.power_slots.pop();
        assert!(AgentProfiles::from_snapshot(s).is_err());
    }

    #[test]
    fn chunked_patches_rebuild_the_profile() {
        let mut src = blank("a1");
        src.power.slot_mut(77).mean_power_normal = 33.0;
        let mut dst = blank("a1");
        for p in src.chunked_patches(1000) {
            dst.apply_patch(&p).unwrap();
        }
        assert_eq!(dst, src);
        assert_eq!(src.chunked_patches(1000).len(), 11 + 1);
    }

    #[test]
    fn patch_rejects_bad_slots() {
        let mut p = blank("a1");
        let mut bad = p.snapshot();
        bad.location_slots.clear();
        bad.power_slots.truncate(1);
        bad.power_slots[0].p_plugged = 1.5;
        assert!(p.apply_patch(&bad).is_err());
    }
}
