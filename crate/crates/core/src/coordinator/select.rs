//! Candidate filtering, contribution estimates and selection strategies.

use std::collections::BTreeSet;

use super::registry::Registry;
use crate::clock::{Millis, WeekTime, MINUTE_MS};
use crate::geo::{geo_distance, LatLon};
use crate::profiles::PowerProfile;

/// Minutes of profile looked at before an event starts.
pub const CONTRIBUTION_WINDOW_MIN: u32 = 20;

#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub agent_id: String,
    pub distance_m: f64,
    pub contribution_w: f64,
}

/// Online agents with complete profiles whose profiled location for the
/// quarter hour of `at` lies within `radius_m` of `center`. Agents in
/// `exclude` are skipped. Sorted by agent id.
pub fn select_candidates(
    registry: &Registry,
    center: LatLon,
    radius_m: f64,
    at: Millis,
    now: Millis,
    exclude: &BTreeSet<String>,
) -> Vec<Candidate> {
    let mut out = Vec::new();
    for a in registry.iter() {
        if !a.is_online(now) || exclude.contains(&a.agent_id) {
            continue;
        }
        let Some(p) = a.mirror.profiles() else { continue };
        let slot = p.location.slot_at(at, p.utc_offset_min);
        let Ok(d) = geo_distance(center, slot.position()) else { continue };
        if d <= radius_m {
            out.push(Candidate {
                agent_id: a.agent_id.clone(),
                distance_m: d,
                contribution_w: estimate_contribution(&p.power, p.utc_offset_min, at, CONTRIBUTION_WINDOW_MIN),
            });
        }
    }
    out
}

/// Expected curtailable watts: over the minute slots of
/// `[start − window, start)`, the mean of
/// `(mean_power_normal − mean_power_save) · p_running · p_plugged`,
/// floored at zero.
pub fn estimate_contribution(profile: &PowerProfile, utc_offset_min: i32, start: Millis, window_min: u32) -> f64 {
    let window = window_min.max(1);
    let total: f64 = (1..=window)
        .map(|m| {
            let s = profile.slot(WeekTime::at(start - m as Millis * MINUTE_MS, utc_offset_min).power_slot());
            (s.mean_power_normal - s.mean_power_save) * s.p_running * s.p_plugged
        })
        .sum();
    (total / window as f64).max(0.0)
}

/// Outcome of a selection strategy: indices into the candidate list.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Choice {
    pub picked: Vec<usize>,
    pub under_supplied: bool,
}

/// Decides which candidates take part in an event.
pub trait SelectionStrategy: Send + Sync {
    fn choose(&self, candidates: &[Candidate], requested_w: f64) -> Choice;
}

/// Largest contributions first until the request is covered; everyone,
/// flagged as under-supplied, if it never is.
#[derive(Debug, Clone, Copy, Default)]
pub struct Greedy;

impl SelectionStrategy for Greedy {
    fn choose(&self, candidates: &[Candidate], requested_w: f64) -> Choice {
        let mut order: Vec<usize> = (0..candidates.len()).collect();
        order.sort_by(|&a, &b| {
            candidates[b]
                .contribution_w
                .total_cmp(&candidates[a].contribution_w)
                .then_with(|| candidates[a].agent_id.cmp(&candidates[b].agent_id))
        });
        let mut sum = 0.0;
        let mut picked = Vec::new();
        for i in order {
            if sum >= requested_w {
                break;
            }
            sum += candidates[i].contribution_w;
            picked.push(i);
        }
        Choice {
            under_supplied: sum < requested_w,
            picked,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::profiles::PowerProfileSlot;
    use proptest::prelude::*;

    fn flat(normal: f64, save: f64, pr: f64, pp: f64) -> PowerProfile {
        PowerProfile::filled(|weekday, minute_of_day| PowerProfileSlot {
            weekday,
            minute_of_day,
            p_running: pr,
            p_app_running: pr,
            p_plugged: pp,
            mean_power_normal: normal,
            mean_power_save: save,
        })
    }

    fn cand(id: &str, w: f64) -> Candidate {
        Candidate {
            agent_id: id.into(),
            distance_m: 0.0,
            contribution_w: w,
        }
    }

    #[test]
    fn contribution_examples() {
        let t = 1_767_600_000_000;
        assert_eq!(estimate_contribution(&flat(30.0, 30.0, 1.0, 1.0), 0, t, 20), 0.0);
        assert_eq!(estimate_contribution(&flat(40.0, 30.0, 1.0, 1.0), 0, t, 20), 10.0);
        assert_eq!(estimate_contribution(&flat(40.0, 30.0, 1.0, 0.0), 0, t, 20), 0.0);
        assert_eq!(estimate_contribution(&flat(30.0, 40.0, 1.0, 1.0), 0, t, 20), 0.0);
    }

    #[test]
    fn window_covers_minutes_before_start() {
        let t = 1_767_600_000_000; // Monday 08:00 UTC
        let mut p = flat(30.0, 30.0, 1.0, 1.0);
        let i = WeekTime::at(t - 20 * MINUTE_MS, 0).power_slot();
        p.slot_mut(i).mean_power_normal = 50.0;
        assert_eq!(estimate_contribution(&p, 0, t, 20), 1.0);
        // the start minute itself is outside the window
        let j = WeekTime::at(t, 0).power_slot();
        p.slot_mut(j).mean_power_normal = 500.0;
        assert_eq!(estimate_contribution(&p, 0, t, 20), 1.0);
    }

    #[test]
    fn greedy_examples() {
        let c = vec![cand("a", 3.0), cand("b", 7.0), cand("c", 5.0)];
        let ch = Greedy.choose(&c, 10.0);
        assert_eq!(ch.picked, vec![1, 2]);
        assert!(!ch.under_supplied);
        let ch = Greedy.choose(&c, 100.0);
        assert_eq!(ch.picked.len(), 3);
        assert!(ch.under_supplied);
        assert!(Greedy.choose(&[], 1.0).under_supplied);
    }

    proptest! {
        #[test]
        fn greedy_is_minimal_prefix(ws in proptest::collection::vec(0.0f64..20.0, 1..12), req in 0.1f64..100.0) {
            let c: Vec<Candidate> = ws.iter().enumerate().map(|(i, w)| cand(&format!("a{i:02}"), *w)).collect();
            let ch = Greedy.choose(&c, req);
            let sum: f64 = ch.picked.iter().map(|&i| c[i].contribution_w).sum();
            if !ch.under_supplied {
                prop_assert!(sum >= req);
                let without_last: f64 = ch.picked[..ch.picked.len() - 1].iter().map(|&i| c[i].contribution_w).sum();
                prop_assert!(without_last < req);
            } else {
                prop_assert_eq!(ch.picked.len(), c.len());
            }
        }

        #[test]
        fn contribution_is_monotone_in_normal_mean(slot in 0usize..20, bump in 0.0f64..50.0) {
            let t = 1_767_600_000_000;
            let base = flat(30.0, 25.0, 0.7, 0.8);
            let mut raised = base.clone();
            let i = WeekTime::at(t - (slot as i64 + 1) * MINUTE_MS, 0).power_slot();
            raised.slot_mut(i).mean_power_normal += bump;
            prop_assert!(estimate_contribution(&raised, 0, t, 20) >= estimate_contribution(&base, 0, t, 20));
        }
    }
}
