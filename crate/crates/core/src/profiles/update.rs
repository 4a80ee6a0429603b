//! Pure profile update procedures. Each returns the new slot contents as a
//! function of the raw history; callers decide where to store them.

use std::collections::BTreeMap;

use super::{
    ActivityRecord, LocationProfile, LocationProfileSlot, LocationRecord, PowerProfile, PowerProfileSlot,
    PowerReading, ProfileError,
};
use crate::clock::{Millis, WeekTime, SECOND_MS};
use crate::geo::GeoFix;
use crate::power_model::{MetricsSample, PowerModel};

/// Activity, heartbeat and location cadence.
pub const ACTIVITY_INTERVAL_MS: Millis = 90 * SECOND_MS;

/// Fresh profiles: every power slot gets the current estimate and even odds,
/// every location slot gets the current fix with certain presence.
pub fn init_profiles(
    model_normal: &PowerModel,
    model_save: &PowerModel,
    sample: &MetricsSample,
    fix: &GeoFix,
) -> Result<(PowerProfile, LocationProfile), ProfileError> {
    let (os_n, os_s) = (model_normal.spec.os, model_save.spec.os);
    if os_n != os_s {
        return Err(ProfileError::OsMismatch {
            normal: os_n.to_string(),
            save: os_s.to_string(),
        });
    }
    fix.validate()?;
    let normal = model_normal.predict(sample)?;
    let save = model_save.predict(sample)?;
    let power = PowerProfile::filled(|weekday, minute_of_day| PowerProfileSlot {
        weekday,
        minute_of_day,
        p_running: 0.5,
        p_app_running: 0.5,
        p_plugged: 0.5,
        mean_power_normal: normal,
        mean_power_save: save,
    });
    let location = LocationProfile::filled(|weekday, quarter_of_day| LocationProfileSlot {
        weekday,
        quarter_of_day,
        latitude: fix.latitude,
        longitude: fix.longitude,
        accuracy: fix.accuracy,
        zip: fix.zip.clone(),
        p_present: 1.0,
    });
    Ok((power, location))
}

/// Location slot for the quarter hour of `new`, rebuilt from every record
/// of `history` in that quarter hour plus `new`.
///
/// The most frequent zip wins (smallest zip on ties); the slot takes the
/// centroid of that group and `p_present` is its share of the records.
pub fn update_location_profile(
    history: &[LocationRecord],
    new: &LocationRecord,
    utc_offset_min: i32,
) -> Result<LocationProfileSlot, ProfileError> {
    new.fix.validate()?;
    let at = WeekTime::at(new.timestamp, utc_offset_min);
    let slot = at.location_slot();
    let group: Vec<&GeoFix> = history
        .iter()
        .filter(|r| WeekTime::at(r.timestamp, utc_offset_min).location_slot() == slot)
        .map(|r| &r.fix)
        .chain(std::iter::once(&new.fix))
        .collect();

    let mut by_zip: BTreeMap<&str, Vec<&GeoFix>> = BTreeMap::new();
    for f in &group {
        by_zip.entry(f.zip.as_str()).or_default().push(f);
    }
    // BTreeMap iterates zips ascending, so max_by keeps the first on ties
    // only if we compare with reversed zip order.
    let (zip, winners) = by_zip
        .iter()
        .max_by(|a, b| a.1.len().cmp(&b.1.len()).then_with(|| b.0.cmp(a.0)))
        .expect("group contains the new record");
    let k = winners.len() as f64;
    let mean = |f: fn(&GeoFix) -> f64| winners.iter().map(|w| f(w)).sum::<f64>() / k;
    Ok(LocationProfileSlot {
        weekday: at.weekday,
        quarter_of_day: at.quarter_of_day(),
        latitude: mean(|f| f.latitude),
        longitude: mean(|f| f.longitude),
        accuracy: mean(|f| f.accuracy),
        zip: zip.to_string(),
        p_present: k / group.len() as f64,
    })
}

/// Power slot for the minute of `new`, rebuilt from every reading of
/// `history` in that minute plus `new`.
///
/// `p_plugged` is the plugged share; the means are taken over the readings
/// that share `new`'s plugged state. Running probabilities carry over from
/// `previous`.
pub fn update_power_profile(
    previous: &PowerProfileSlot,
    history: &[PowerReading],
    new: &PowerReading,
    utc_offset_min: i32,
) -> PowerProfileSlot {
    let at = WeekTime::at(new.timestamp, utc_offset_min);
    let slot = at.power_slot();
    let group: Vec<&PowerReading> = history
        .iter()
        .filter(|r| WeekTime::at(r.timestamp, utc_offset_min).power_slot() == slot)
        .chain(std::iter::once(new))
        .collect();
    let plugged = group.iter().filter(|r| r.plugged).count();
    let same: Vec<&&PowerReading> = group.iter().filter(|r| r.plugged == new.plugged).collect();
    let n = same.len() as f64;
    PowerProfileSlot {
        weekday: at.weekday,
        minute_of_day: at.minute_of_day,
        p_running: previous.p_running,
        p_app_running: previous.p_app_running,
        p_plugged: plugged as f64 / group.len() as f64,
        mean_power_normal: same.iter().map(|r| r.power_normal).sum::<f64>() / n,
        mean_power_save: same.iter().map(|r| r.power_save).sum::<f64>() / n,
    }
}

/// Records to insert for an activity tick at `now`.
///
/// When the previous record is more than one interval back, one not-running
/// record is placed at every whole interval after it that still leaves room
/// before `now`, i.e. `max(0, ⌊gap/90 s⌋ − 1)` of them. The running record
/// at `now` comes last.
pub fn record_activity_and_backfill(
    history: &[ActivityRecord],
    now: Millis,
) -> Result<Vec<ActivityRecord>, ProfileError> {
    let mut out = Vec::new();
    if let Some(last) = history.iter().map(|r| r.timestamp).max() {
        if now < last {
            return Err(ProfileError::ClockRegression { last, now });
        }
        let missed = ((now - last) / ACTIVITY_INTERVAL_MS - 1).max(0);
        out.extend((1..=missed).map(|k| ActivityRecord {
            timestamp: last + k * ACTIVITY_INTERVAL_MS,
            running: false,
        }));
    }
    out.push(ActivityRecord {
        timestamp: now,
        running: true,
    });
    Ok(out)
}

/// Running share per minute-of-week slot that has at least one record.
/// Returned as `(slot index, p_running)` in slot order.
pub fn update_running_probability(activity: &[ActivityRecord], utc_offset_min: i32) -> Vec<(usize, f64)> {
    let mut groups: BTreeMap<usize, (usize, usize)> = BTreeMap::new();
    for r in activity {
        let g = groups
            .entry(WeekTime::at(r.timestamp, utc_offset_min).power_slot())
            .or_default();
        g.0 += r.running as usize;
        g.1 += 1;
    }
    groups
        .into_iter()
        .map(|(slot, (running, total))| (slot, running as f64 / total as f64))
        .collect()
}

impl PowerProfile {
    /// Writes running shares into `p_running` and `p_app_running`.
    pub fn apply_running(&mut self, updates: &[(usize, f64)]) {
        for &(i, p) in updates {
            let s = self.slot_mut(i);
            s.p_running = p;
            s.p_app_running = p;
        }
    }
}
