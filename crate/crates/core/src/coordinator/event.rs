//! DR events and their lifecycle.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::CoordinatorError;
use crate::clock::{Millis, MINUTE_MS};
use crate::geo::LatLon;
use crate::messages::{StatusKind, StatusMessage};

/// Default candidate radius around the renewable source.
pub const DEFAULT_RADIUS_M: f64 = 1000.0;
/// Time after an event's end allowed for leave statuses to arrive.
pub const COMPLETION_GRACE_MS: Millis = 5_000;

/// Event start: `"immediate"` or epoch milliseconds on the wire.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StartSpec {
    Immediate,
    At(Millis),
}

impl Serialize for StartSpec {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            StartSpec::Immediate => s.serialize_str("immediate"),
            StartSpec::At(t) => s.serialize_i64(*t),
        }
    }
}

impl<'de> Deserialize<'de> for StartSpec {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        match serde_json::Value::deserialize(d)? {
            serde_json::Value::String(s) if s == "immediate" => Ok(StartSpec::Immediate),
            serde_json::Value::Number(n) if n.as_i64().is_some() => Ok(StartSpec::At(n.as_i64().unwrap_or(0))),
            other => Err(serde::de::Error::custom(format!(
                "start must be \"immediate\" or epoch ms, got {other}"
            ))),
        }
    }
}

/// What an administrator (or the supply monitor) asks for.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventRequest {
    pub lat: f64,
    pub lon: f64,
    pub reduction_w: f64,
    pub duration_min: u32,
    pub start: StartSpec,
    #[serde(default = "default_radius")]
    pub radius_m: f64,
}

fn default_radius() -> f64 {
    DEFAULT_RADIUS_M
}

impl EventRequest {
    pub fn immediate(at: LatLon, reduction_w: f64, duration_min: u32) -> Self {
        Self {
            lat: at.lat,
            lon: at.lon,
            reduction_w,
            duration_min,
            start: StartSpec::Immediate,
            radius_m: DEFAULT_RADIUS_M,
        }
    }

    pub fn location(&self) -> LatLon {
        LatLon {
            lat: self.lat,
            lon: self.lon,
        }
    }

    pub fn validate(&self) -> Result<(), CoordinatorError> {
        let bad = |m: &str| Err(CoordinatorError::InvalidRequest(m.to_string()));
        self.location().validate()?;
        if !(self.reduction_w > 0.0 && self.reduction_w.is_finite()) {
            return bad("reduction_w must be positive");
        }
        if self.duration_min == 0 {
            return bad("duration_min must be positive");
        }
        if !(self.radius_m > 0.0 && self.radius_m.is_finite()) {
            return bad("radius_m must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EventState {
    Scheduled,
    Active,
    Completed,
    Aborted,
}

impl EventState {
    pub fn is_open(self) -> bool {
        matches!(self, EventState::Scheduled | EventState::Active)
    }

    /// scheduled → active → completed, and scheduled/active → aborted.
    pub fn can_become(self, next: EventState) -> bool {
        use EventState::*;
        matches!(
            (self, next),
            (Scheduled, Active) | (Active, Completed) | (Scheduled, Aborted) | (Active, Aborted)
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Selected {
    pub agent_id: String,
    pub estimated_contribution: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DREvent {
    pub event_id: String,
    pub turbine_location: LatLon,
    pub requested_reduction: f64,
    pub duration_min: u32,
    pub radius_m: f64,
    pub requested_at: Millis,
    pub start: Millis,
    pub selected: Vec<Selected>,
    pub under_supplied: bool,
    pub state: EventState,
    /// Why the event was aborted, if it was.
    pub outcome: Option<String>,
    /// When the last schedule was acknowledged by the bus.
    pub published_at: Option<Millis>,
    pub schedule_latency_ms: Option<Millis>,
    pub join_latency_ms: Option<Millis>,
    pub partial_participation: bool,
    pub joined: BTreeMap<String, Millis>,
    pub left: BTreeMap<String, Millis>,
    pub declined: BTreeMap<String, Millis>,
}

impl DREvent {
    pub fn end(&self) -> Millis {
        self.start + self.duration_min as Millis * MINUTE_MS
    }

    pub fn estimated_total(&self) -> f64 {
        self.selected.iter().map(|s| s.estimated_contribution).sum()
    }

    pub fn is_selected(&self, agent_id: &str) -> bool {
        self.selected.iter().any(|s| s.agent_id == agent_id)
    }

    fn transition(&mut self, next: EventState) -> bool {
        if self.state.can_become(next) {
            self.state = next;
            true
        } else {
            false
        }
    }

    pub fn abort(&mut self, why: impl Into<String>) -> bool {
        let ok = self.transition(EventState::Aborted);
        if ok {
            self.outcome = Some(why.into());
        }
        ok
    }

    pub fn mark_published(&mut self, at: Millis) {
        self.published_at = Some(at);
        self.schedule_latency_ms = Some(at - self.requested_at);
        self.update_join_latency();
    }

    /// Last join minus publish time, once every selected agent has joined.
    /// Joins that raced ahead of the final publish ack count as zero.
    fn update_join_latency(&mut self) {
        if self.selected.is_empty() || self.joined.len() < self.selected.len() {
            return;
        }
        if let (Some(p), Some(last)) = (self.published_at, self.joined.values().copied().max()) {
            self.join_latency_ms = Some((last - p).max(0));
        }
    }

    /// Records a status from a selected agent. Returns whether anything
    /// changed.
    pub fn on_status(&mut self, s: &StatusMessage, now: Millis) -> bool {
        if s.event_id != self.event_id || !self.is_selected(&s.agent_id) {
            return false;
        }
        let book = match s.status {
            StatusKind::Joined => &mut self.joined,
            StatusKind::Left => &mut self.left,
            StatusKind::Declined | StatusKind::Stale => &mut self.declined,
        };
        if book.contains_key(&s.agent_id) {
            return false;
        }
        book.insert(s.agent_id.clone(), s.at_ms);
        if s.status == StatusKind::Declined || s.status == StatusKind::Stale {
            self.partial_participation = true;
        }
        self.update_join_latency();
        self.advance(now);
        true
    }

    /// Time-driven transitions. Returns whether the state changed.
    pub fn advance(&mut self, now: Millis) -> bool {
        let before = self.state;
        if self.state == EventState::Scheduled
            && (now >= self.start || (!self.selected.is_empty() && self.joined.len() == self.selected.len()))
        {
            self.transition(EventState::Active);
        }
        if self.state == EventState::Active && now >= self.end() + COMPLETION_GRACE_MS {
            if self.joined.len() < self.selected.len() {
                self.partial_participation = true;
            }
            self.transition(EventState::Completed);
        }
        before != self.state
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn event() -> DREvent {
        DREvent {
            event_id: "ev-1".into(),
            turbine_location: LatLon { lat: 48.0, lon: 11.0 },
            requested_reduction: 10.0,
            duration_min: 5,
            radius_m: 1000.0,
            requested_at: 0,
            start: 1_000,
            selected: ["a", "b"]
                .iter()
                .map(|id| Selected {
                    agent_id: id.to_string(),
                    estimated_contribution: 5.0,
                })
                .collect(),
            under_supplied: false,
            state: EventState::Scheduled,
            outcome: None,
            published_at: None,
            schedule_latency_ms: None,
            join_latency_ms: None,
            partial_participation: false,
            joined: BTreeMap::new(),
            left: BTreeMap::new(),
            declined: BTreeMap::new(),
        }
    }

    fn st(agent: &str, status: StatusKind, at: Millis) -> StatusMessage {
        StatusMessage {
            agent_id: agent.into(),
            event_id: "ev-1".into(),
            status,
            at_ms: at,
        }
    }

    #[test]
    fn request_json_forms() {
        let r: EventRequest =
            serde_json::from_str(r#"{"lat":1,"lon":2,"reduction_w":5,"duration_min":10,"start":"immediate"}"#).unwrap();
        assert_eq!(r.start, StartSpec::Immediate);
        assert_eq!(r.radius_m, 1000.0);
        let r: EventRequest =
            serde_json::from_str(r#"{"lat":1,"lon":2,"reduction_w":5,"duration_min":10,"start":1234}"#).unwrap();
        assert_eq!(r.start, StartSpec::At(1234));
        assert!(serde_json::from_str::<EventRequest>(
            r#"{"lat":1,"lon":2,"reduction_w":5,"duration_min":10,"start":"later"}"#
        )
        .is_err());
        assert_eq!(serde_json::to_string(&StartSpec::Immediate).unwrap(), "\"immediate\"");
        assert!(EventRequest { reduction_w: 0.0, ..r.clone() }.validate().is_err());
        assert!(EventRequest { duration_min: 0, ..r.clone() }.validate().is_err());
        assert!(EventRequest { lat: 99.0, ..r }.validate().is_err());
    }

    #[test]
    fn join_latency_is_last_join() {
        let mut e = event();
        e.mark_published(40);
        assert_eq!(e.schedule_latency_ms, Some(40));
        e.on_status(&st("a", StatusKind::Joined, 100), 100);
        assert_eq!(e.state, EventState::Scheduled);
        e.on_status(&st("b", StatusKind::Joined, 250), 250);
        assert_eq!(e.join_latency_ms, Some(210));
        assert_eq!(e.state, EventState::Active);
        assert!(!e.advance(e.end()));
        assert!(e.advance(e.end() + COMPLETION_GRACE_MS));
        assert_eq!(e.state, EventState::Completed);
        assert!(!e.partial_participation);
    }

    #[test]
    fn decline_flags_partial() {
        let mut e = event();
        e.mark_published(0);
        e.on_status(&st("a", StatusKind::Joined, 10), 10);
        e.on_status(&st("b", StatusKind::Declined, 10), 10);
        assert!(e.partial_participation);
        e.advance(1_000);
        assert_eq!(e.state, EventState::Active);
        e.advance(e.end() + COMPLETION_GRACE_MS);
        assert_eq!(e.state, EventState::Completed);
        assert_eq!(e.join_latency_ms, None);
    }

    #[test]
    fn only_legal_transitions() {
        use EventState::*;
        let all = [Scheduled, Active, Completed, Aborted];
        let legal: Vec<(EventState, EventState)> = all
            .iter()
            .flat_map(|a| all.iter().map(move |b| (*a, *b)))
            .filter(|(a, b)| a.can_become(*b))
            .collect();
        assert_eq!(
            legal,
            vec![(Scheduled, Active), (Scheduled, Aborted), (Active, Completed), (Active, Aborted)]
        );
        let mut e = event();
        e.state = Completed;
        assert!(!e.abort("late"));
    }

    #[test]
    fn strangers_are_ignored() {
        let mut e = event();
        assert!(!e.on_status(&st("zzz", StatusKind::Joined, 5), 5));
        let mut other = st("a", StatusKind::Joined, 5);
        other.event_id = "ev-2".into();
        assert!(!e.on_status(&other, 5));
    }
}
