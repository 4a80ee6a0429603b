//! Raw record history of one agent, bucketed by slot, plus the profiles
//! derived from it.

use std::collections::{BTreeMap, BTreeSet};

use super::update::{
    record_activity_and_backfill, update_location_profile, update_power_profile, update_running_probability,
};
use super::{ActivityRecord, AgentProfiles, LocationRecord, PowerReading, ProfileError, ProfileSnapshot};
use crate::clock::{Millis, WeekTime, WEEK_MS};

/// Raw records older than this are dropped by [`ProfileStore::prune`].
pub const RETENTION_MS: Millis = 8 * WEEK_MS;

#[derive(Debug, Clone)]
pub struct ProfileStore {
    profiles: AgentProfiles,
    power: BTreeMap<usize, Vec<PowerReading>>,
    location: BTreeMap<usize, Vec<LocationRecord>>,
    activity: BTreeMap<usize, Vec<ActivityRecord>>,
    last_activity: Option<Millis>,
    dirty_power: BTreeSet<usize>,
    dirty_location: BTreeSet<usize>,
}

impl ProfileStore {
    pub fn new(profiles: AgentProfiles) -> Self {
        Self {
            profiles,
            power: BTreeMap::new(),
            location: BTreeMap::new(),
            activity: BTreeMap::new(),
            last_activity: None,
            dirty_power: BTreeSet::new(),
            dirty_location: BTreeSet::new(),
        }
    }

    pub fn profiles(&self) -> &AgentProfiles {
        &self.profiles
    }

    fn offset(&self) -> i32 {
        self.profiles.utc_offset_min
    }

    fn touch(&mut self, at: Millis) {
        self.profiles.updated_at = self.profiles.updated_at.max(at);
    }

    /// Returns the updated power slot index.
    pub fn record_power(&mut self, reading: PowerReading) -> usize {
        let off = self.offset();
        let i = WeekTime::at(reading.timestamp, off).power_slot();
        let bucket = self.power.entry(i).or_default();
        let slot = update_power_profile(self.profiles.power.slot(i), bucket, &reading, off);
        bucket.push(reading.clone());
        *self.profiles.power.slot_mut(i) = slot;
        self.dirty_power.insert(i);
        self.touch(reading.timestamp);
        i
    }

    /// Returns the updated location slot index.
    pub fn record_location(&mut self, record: LocationRecord) -> Result<usize, ProfileError> {
        let off = self.offset();
        let i = WeekTime::at(record.timestamp, off).location_slot();
        let bucket = self.location.entry(i).or_default();
        let slot = update_location_profile(bucket, &record, off)?;
        bucket.push(record.clone());
        self.profiles.location.set(slot)?;
        self.dirty_location.insert(i);
        self.touch(record.timestamp);
        Ok(i)
    }

    /// Activity tick at `now`; returns the records inserted (backfill first).
    pub fn record_activity(&mut self, now: Millis) -> Result<Vec<ActivityRecord>, ProfileError> {
        let last: Vec<ActivityRecord> = self
            .last_activity
            .map(|timestamp| ActivityRecord {
                timestamp,
                running: true,
            })
            .into_iter()
            .collect();
        let inserted = record_activity_and_backfill(&last, now)?;
        let off = self.offset();
        let mut touched = BTreeSet::new();
        for r in &inserted {
            let i = WeekTime::at(r.timestamp, off).power_slot();
            self.activity.entry(i).or_default().push(*r);
            touched.insert(i);
        }
        self.last_activity = Some(now);
        self.refresh_running(&touched);
        self.touch(now);
        Ok(inserted)
    }

    fn refresh_running(&mut self, slots: &BTreeSet<usize>) {
        let records: Vec<ActivityRecord> = slots
            .iter()
            .filter_map(|i| self.activity.get(i))
            .flatten()
            .copied()
            .collect();
        let updates = update_running_probability(&records, self.offset());
        self.profiles.power.apply_running(&updates);
        self.dirty_power.extend(updates.iter().map(|(i, _)| *i));
    }

    pub fn activity_records(&self) -> impl Iterator<Item = &ActivityRecord> {
        self.activity.values().flatten()
    }

    pub fn last_activity(&self) -> Option<Millis> {
        self.last_activity
    }

    /// Drops raw records older than the retention window. Slots keep their
    /// last derived values.
    pub fn prune(&mut self, now: Millis) -> usize {
        let cutoff = now - RETENTION_MS;
        let mut dropped = 0;
        fn sweep<T>(m: &mut BTreeMap<usize, Vec<T>>, keep: impl Fn(&T) -> bool, dropped: &mut usize) {
            for v in m.values_mut() {
                let before = v.len();
                v.retain(&keep);
                *dropped += before - v.len();
            }
            m.retain(|_, v| !v.is_empty());
        }
        sweep(&mut self.power, |r| r.timestamp >= cutoff, &mut dropped);
        sweep(&mut self.location, |r| r.timestamp >= cutoff, &mut dropped);
        sweep(&mut self.activity, |r| r.timestamp >= cutoff, &mut dropped);
        dropped
    }

    /// Recomputes every slot that has raw history. A no-op on a store that
    /// was built incrementally; used to check replay consistency.
    pub fn recompute_all(&mut self) -> Result<(), ProfileError> {
        let off = self.offset();
        for (&i, bucket) in &self.power {
            let (last, prior) = bucket.split_last().expect("buckets are never empty");
            let slot = update_power_profile(self.profiles.power.slot(i), prior, last, off);
            *self.profiles.power.slot_mut(i) = slot;
        }
        for bucket in self.location.values() {
            let (last, prior) = bucket.split_last().expect("buckets are never empty");
            self.profiles.location.set(update_location_profile(prior, last, off)?)?;
        }
        let all: Vec<ActivityRecord> = self.activity.values().flatten().copied().collect();
        self.profiles
            .power
            .apply_running(&update_running_probability(&all, off));
        Ok(())
    }

    /// Slots changed since the last call, as a sparse snapshot.
    pub fn take_patch(&mut self) -> Option<ProfileSnapshot> {
        if self.dirty_power.is_empty() && self.dirty_location.is_empty() {
            return None;
        }
        let p = &self.profiles;
        let patch = ProfileSnapshot {
            agent_id: p.agent_id.clone(),
            utc_offset_min: p.utc_offset_min,
            power_slots: self.dirty_power.iter().map(|&i| p.power.slot(i).clone()).collect(),
            location_slots: self.dirty_location.iter().map(|&i| p.location.slot(i).clone()).collect(),
            updated_at: p.updated_at,
        };
        self.dirty_power.clear();
        self.dirty_location.clear();
        Some(patch)
    }

    pub fn has_pending_patch(&self) -> bool {
        !(self.dirty_power.is_empty() && self.dirty_location.is_empty())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clock::{MINUTE_MS, SECOND_MS};
    use crate::geo::{GeoFix, LatLon};
    use crate::profiles::tests::blank;

    #[test]
    fn pause_is_backfilled() {
        let mut s = ProfileStore::new(blank("a"));
        s.record_activity(0).unwrap();
        let out = s.record_activity(10 * MINUTE_MS).unwrap();
        // 600 s gap: 5 whole intervals fit strictly before now
        assert_eq!(out.iter().filter(|r| !r.running).count(), 5);
        assert_eq!(s.activity_records().count(), 7);
        let off = s.profiles().utc_offset_min;
        let i = WeekTime::at(90 * SECOND_MS, off).power_slot();
        assert_eq!(s.profiles().power.slot(i).p_running, 0.0);
        let j = WeekTime::at(0, off).power_slot();
        assert_eq!(s.profiles().power.slot(j).p_running, 1.0);
        assert!(s.record_activity(MINUTE_MS).is_err());
    }

    #[test]
    fn patch_carries_dirty_slots_once() {
        let mut s = ProfileStore::new(blank("a"));
        s.record_power(PowerReading {
            timestamp: 0,
            power_normal: 30.0,
            power_save: 20.0,
            plugged: true,
        });
        s.record_location(LocationRecord {
            timestamp: 0,
            fix: GeoFix::new(LatLon::new(1.0, 1.0).unwrap(), 5.0, "1"),
        })
        .unwrap();
        let p = s.take_patch().unwrap();
        assert_eq!((p.power_slots.len(), p.location_slots.len()), (1, 1));
        assert!(s.take_patch().is_none());
        let mut mirror = blank("a");
        mirror.apply_patch(&p).unwrap();
        assert_eq!(&mirror, s.profiles());
    }

    #[test]
    fn prune_drops_old_records_only() {
        let mut s = ProfileStore::new(blank("a"));
        s.record_activity(0).unwrap();
        s.record_activity(RETENTION_MS + MINUTE_MS).unwrap();
        let dropped = s.prune(RETENTION_MS + 2 * MINUTE_MS);
        assert!(dropped > 0);
        assert!(s.activity_records().all(|r| r.timestamp >= 2 * MINUTE_MS));
    }
}
