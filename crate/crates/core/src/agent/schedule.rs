//! Schedule bookkeeping on the agent side.

use std::collections::{BTreeMap, HashSet};

use crate::clock::Millis;
use crate::messages::{DRSchedule, StatusKind, StatusMessage};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Phase {
    Pending,
    Joined,
    Done,
}

/// Accepted schedules and their join/leave progress. Save mode is on while
/// any joined window is open, so overlapping windows behave as their union.
#[derive(Debug, Clone, Default)]
pub struct ScheduleBook {
    seen: HashSet<String>,
    accepted: BTreeMap<String, (DRSchedule, Phase)>,
}

impl ScheduleBook {
    /// Takes a delivered schedule. Repeats of a known id are ignored.
    pub fn receive(&mut self, agent_id: &str, s: DRSchedule, now: Millis, opt_out: bool) -> Vec<StatusMessage> {
        if s.agent_id != agent_id || !self.seen.insert(s.schedule_id.clone()) {
            return Vec::new();
        }
        let status = |status| StatusMessage {
            agent_id: agent_id.to_string(),
            event_id: s.event_id.clone(),
            status,
            at_ms: now,
        };
        if s.end() <= now {
            return vec![status(StatusKind::Stale)];
        }
        if opt_out {
            return vec![status(StatusKind::Declined)];
        }
        self.accepted.insert(s.schedule_id.clone(), (s, Phase::Pending));
        self.advance(agent_id, now, opt_out)
    }

    /// Joins windows that have opened and leaves windows that have closed,
    /// as of `now`. A pending window that opens while opted out is declined.
    pub fn advance(&mut self, agent_id: &str, now: Millis, opt_out: bool) -> Vec<StatusMessage> {
        let mut out = Vec::new();
        for (s, phase) in self.accepted.values_mut() {
            let msg = |status| StatusMessage {
                agent_id: agent_id.to_string(),
                event_id: s.event_id.clone(),
                status,
                at_ms: now,
            };
            match *phase {
                Phase::Pending if s.start <= now => {
                    if opt_out {
                        out.push(msg(StatusKind::Declined));
                        *phase = Phase::Done;
                    } else if now < s.end() {
                        out.push(msg(StatusKind::Joined));
                        *phase = Phase::Joined;
                    } else {
                        out.push(msg(StatusKind::Stale));
                        *phase = Phase::Done;
                    }
                }
                Phase::Joined if s.end() <= now => {
                    out.push(msg(StatusKind::Left));
                    *phase = Phase::Done;
                }
                _ => {}
            }
        }
        self.accepted.retain(|_, (_, p)| *p != Phase::Done);
        out
    }

    pub fn save_mode(&self) -> bool {
        self.accepted.values().any(|(_, p)| *p == Phase::Joined)
    }

    /// Earliest future instant at which [`advance`](Self::advance) would act.
    pub fn next_transition(&self) -> Option<Millis> {
        self.accepted
            .values()
            .map(|(s, p)| if *p == Phase::Pending { s.start } else { s.end() })
            .min()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sched(id: &str, start: Millis, dur_s: u64) -> DRSchedule {
        DRSchedule {
            schedule_id: id.into(),
            event_id: format!("ev-{id}"),
            agent_id: "a".into(),
            start,
            duration_s: dur_s,
            estimated_contribution: 1.0,
            issued_at: 0,
        }
    }

    fn kinds(v: &[StatusMessage]) -> Vec<StatusKind> {
        v.iter().map(|m| m.status).collect()
    }

    #[test]
    fn active_exactly_during_window() {
        let mut b = ScheduleBook::default();
        assert!(b.receive("a", sched("s", 10_000, 300), 0, false).is_empty());
        assert!(!b.save_mode());
        assert!(b.advance("a", 9_999, false).is_empty());
        assert_eq!(kinds(&b.advance("a", 10_000, false)), [StatusKind::Joined]);
        assert!(b.save_mode());
        assert!(b.advance("a", 309_999, false).is_empty());
        assert_eq!(kinds(&b.advance("a", 310_000, false)), [StatusKind::Left]);
        assert!(!b.save_mode());
    }

    #[test]
    fn duplicates_are_ignored() {
        let mut b = ScheduleBook::default();
        let mut all = b.receive("a", sched("s", 0, 60), 0, false);
        all.extend(b.receive("a", sched("s", 0, 60), 1, false));
        all.extend(b.advance("a", 60_000, false));
        all.extend(b.receive("a", sched("s", 0, 60), 61_000, false));
        assert_eq!(kinds(&all), [StatusKind::Joined, StatusKind::Left]);
    }

    #[test]
    fn opt_out_and_stale() {
        let mut b = ScheduleBook::default();
        assert_eq!(kinds(&b.receive("a", sched("x", 0, 60), 0, true)), [StatusKind::Declined]);
        assert!(!b.save_mode());
        assert_eq!(kinds(&b.receive("a", sched("y", 0, 60), 60_000, false)), [StatusKind::Stale]);
        b.receive("a", sched("z", 5_000, 60), 0, false);
        assert_eq!(kinds(&b.advance("a", 5_000, true)), [StatusKind::Declined]);
        assert!(b.receive("a", DRSchedule { agent_id: "other".into(), ..sched("w", 0, 9) }, 0, false).is_empty());
    }

    #[test]
    fn overlapping_windows_union() {
        let mut b = ScheduleBook::default();
        b.receive("a", sched("1", 0, 100), 0, false);
        b.receive("a", sched("2", 50_000, 100), 0, false);
        b.advance("a", 50_000, false);
        b.advance("a", 100_000, false);
        assert!(b.save_mode());
        assert_eq!(b.next_transition(), Some(150_000));
        b.advance("a", 150_000, false);
        assert!(!b.save_mode());
        assert_eq!(b.next_transition(), None);
    }
}
