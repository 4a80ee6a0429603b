use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::event::{DREvent, EventRequest, EventState, Selected, StartSpec};
use super::registry::{AgentSummary, Registry};
use super::select::{select_candidates, Greedy, SelectionStrategy, CONTRIBUTION_WINDOW_MIN};
use super::supply::{SupplyMonitor, SupplyPolicy, SupplyTrace};
use super::CoordinatorError;
use crate::bus::{BusHandle, Envelope};
use crate::clock::Millis;
use crate::messages::{topics, AgentHello, DRSchedule, Heartbeat, Outgoing, StatusMessage};
use crate::profiles::ProfileSnapshot;

/// Outcome recorded on events that found nobody to curtail.
pub const NO_CANDIDATES: &str = "no-candidates";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CoordinatorConfig {
    pub contribution_window_min: u32,
    /// Used for supply traces loaded without their own policy.
    pub supply: Option<SupplyPolicy>,
}

impl Default for CoordinatorConfig {
    fn default() -> Self {
        Self {
            contribution_window_min: CONTRIBUTION_WINDOW_MIN,
            supply: None,
        }
    }
}

/// A message to publish. When `completes` is set, the ack time of this
/// publish is the event's schedule publish time.
#[derive(Debug, Clone, PartialEq)]
pub struct Dispatch {
    pub msg: Outgoing,
    pub completes: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum StreamEvent {
    Event { event: DREvent },
    AgentStatus { status: StatusMessage },
    Agent { agent: AgentSummary },
}

/// One frame of the `/stream` WebSocket.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreamFrame {
    pub seq: u64,
    pub at: Millis,
    #[serde(flatten)]
    pub event: StreamEvent,
}

struct LoadedTrace {
    monitor: SupplyMonitor,
    points: std::vec::IntoIter<super::supply::SupplyPoint>,
}

pub struct Coordinator {
    config: CoordinatorConfig,
    strategy: Box<dyn SelectionStrategy>,
    registry: Registry,
    events: BTreeMap<String, DREvent>,
    next_event: u64,
    /// Events created by this instance.
    live: BTreeSet<String>,
    outbox: Vec<Dispatch>,
    frames: Vec<StreamFrame>,
    frame_seq: u64,
    trace: Option<LoadedTrace>,
}

impl Coordinator {
    pub fn new(config: CoordinatorConfig) -> Self {
        Self::with_strategy(config, Box::new(Greedy))
    }

    pub fn with_strategy(config: CoordinatorConfig, strategy: Box<dyn SelectionStrategy>) -> Self {
        Self {
            config,
            strategy,
            registry: Registry::default(),
            events: BTreeMap::new(),
            next_event: 1,
            live: BTreeSet::new(),
            outbox: Vec::new(),
            frames: Vec::new(),
            frame_seq: 0,
            trace: None,
        }
    }

    /// Bus patterns the coordinator consumes.
    pub fn subscriptions() -> Vec<String> {
        ["agents/*", "heartbeats/*", "profiles/*", "status/*", "events/*"]
            .map(String::from)
            .to_vec()
    }

    pub fn registry(&self) -> &Registry {
        &self.registry
    }

    pub fn event(&self, id: &str) -> Option<&DREvent> {
        self.events.get(id)
    }

    pub fn events(&self) -> impl Iterator<Item = &DREvent> {
        self.events.values()
    }

    pub fn agents(&self, now: Millis) -> Vec<AgentSummary> {
        self.registry.summaries(now)
    }

    /// Dense profiles of one agent, once all of them have arrived.
    pub fn agent_profiles(&self, id: &str) -> Result<ProfileSnapshot, CoordinatorError> {
        let rec = self
            .registry
            .get(id)
            .ok_or_else(|| CoordinatorError::NotFound(format!("agent {id}")))?;
        rec.mirror
            .profiles()
            .map(|p| p.snapshot())
            .ok_or_else(|| CoordinatorError::ProfileIncomplete(id.to_string()))
    }

    fn frame(&mut self, at: Millis, event: StreamEvent) {
        self.frame_seq += 1;
        self.frames.push(StreamFrame {
            seq: self.frame_seq,
            at,
            event,
        });
    }

    fn event_changed(&mut self, id: &str, now: Millis) {
        let ev = self.events[id].clone();
        self.outbox.push(Dispatch {
            msg: Outgoing::new(topics::event(id), &ev),
            completes: None,
        });
        self.frame(now, StreamEvent::Event { event: ev });
    }

    /// Ingests one bus delivery. Malformed payloads are dropped.
    pub fn handle(&mut self, env: &Envelope, now: Millis) {
        let kind = env.topic.split('/').next().unwrap_or("");
        match kind {
            "agents" => {
                if let Ok(h) = env.decode::<AgentHello>() {
                    self.registry.hello(&h);
                    let agent = self.registry.get(&h.agent_id).map(|a| a.summary(now));
                    if let Some(agent) = agent {
                        self.frame(now, StreamEvent::Agent { agent });
                    }
                }
            }
            "heartbeats" => {
                if let Ok(hb) = env.decode::<Heartbeat>() {
                    if self.registry.heartbeat(&hb) {
                        if let Some(agent) = self.registry.get(&hb.agent_id).map(|a| a.summary(now)) {
                            self.frame(now, StreamEvent::Agent { agent });
                        }
                    }
                }
            }
            "profiles" => {
                if let Ok(p) = env.decode::<ProfileSnapshot>() {
                    let _ = self.registry.profile_patch(&p);
                }
            }
            "status" => {
                if let Ok(s) = env.decode::<StatusMessage>() {
                    self.on_status(&s, now);
                }
            }
            "events" => {
                // Our own records echo back and are ignored; records of events
                // created before a restart are adopted, latest wins.
                if let Ok(ev) = env.decode::<DREvent>() {
                    if self.live.contains(&ev.event_id) {
                        return;
                    }
                    if let Some(n) = ev.event_id.strip_prefix("ev-").and_then(|n| n.parse::<u64>().ok()) {
                        self.next_event = self.next_event.max(n + 1);
                    }
                    self.events.insert(ev.event_id.clone(), ev);
                }
            }
            _ => {}
        }
    }

    fn on_status(&mut self, s: &StatusMessage, now: Millis) {
        let Some(ev) = self.events.get_mut(&s.event_id) else { return };
        let before = ev.state;
        if !ev.on_status(s, now) {
            return;
        }
        let changed = before != ev.state;
        self.frame(now, StreamEvent::AgentStatus { status: s.clone() });
        let id = s.event_id.clone();
        if changed || self.events[&id].join_latency_ms.is_some() {
            self.event_changed(&id, now);
        }
    }

    fn committed_agents(&self) -> BTreeSet<String> {
        self.events
            .values()
            .filter(|e| e.state.is_open())
            .flat_map(|e| e.selected.iter().map(|s| s.agent_id.clone()))
            .collect()
    }

    /// Selects participants and queues their schedules. Requests without
    /// candidates produce an aborted event rather than an error.
    pub fn create_event(&mut self, req: &EventRequest, now: Millis) -> Result<DREvent, CoordinatorError> {
        req.validate()?;
        let start = match req.start {
            StartSpec::Immediate => now,
            StartSpec::At(t) => t,
        };
        let end = start + req.duration_min as Millis * crate::clock::MINUTE_MS;
        if end <= now {
            return Err(CoordinatorError::InvalidRequest(format!("event would end at {end}, before now ({now})")));
        }
        let mut candidates = select_candidates(
            &self.registry,
            req.location(),
            req.radius_m,
            start,
            now,
            &self.committed_agents(),
        );
        if self.config.contribution_window_min != CONTRIBUTION_WINDOW_MIN {
            for c in &mut candidates {
                if let Some(p) = self.registry.get(&c.agent_id).and_then(|a| a.mirror.profiles()) {
                    c.contribution_w = super::estimate_contribution(
                        &p.power,
                        p.utc_offset_min,
                        start,
                        self.config.contribution_window_min,
                    );
                }
            }
        }
        let choice = self.strategy.choose(&candidates, req.reduction_w);
        let event_id = format!("ev-{:04}", self.next_event);
        self.next_event += 1;
        let mut ev = DREvent {
            event_id: event_id.clone(),
            turbine_location: req.location(),
            requested_reduction: req.reduction_w,
            duration_min: req.duration_min,
            radius_m: req.radius_m,
            requested_at: now,
            start,
            selected: choice
                .picked
                .iter()
                .map(|&i| Selected {
                    agent_id: candidates[i].agent_id.clone(),
                    estimated_contribution: candidates[i].contribution_w,
                })
                .collect(),
            under_supplied: choice.under_supplied,
            state: EventState::Scheduled,
            outcome: None,
            published_at: None,
            schedule_latency_ms: None,
            join_latency_ms: None,
            partial_participation: false,
            joined: BTreeMap::new(),
            left: BTreeMap::new(),
            declined: BTreeMap::new(),
        };
        if ev.selected.is_empty() {
            ev.abort(NO_CANDIDATES);
        } else {
            let n = ev.selected.len();
            for (i, s) in ev.selected.iter().enumerate() {
                let sched = DRSchedule {
                    schedule_id: format!("{event_id}-{}", s.agent_id),
                    event_id: event_id.clone(),
                    agent_id: s.agent_id.clone(),
                    start,
                    duration_s: req.duration_min as u64 * 60,
                    estimated_contribution: s.estimated_contribution,
                    issued_at: now,
                };
                self.outbox.push(Dispatch {
                    msg: Outgoing::new(topics::schedule(&s.agent_id), &sched),
                    completes: (i + 1 == n).then(|| event_id.clone()),
                });
            }
        }
        self.live.insert(event_id.clone());
        self.events.insert(event_id.clone(), ev.clone());
        self.event_changed(&event_id, now);
        Ok(ev)
    }

    /// Records the ack time of an event's last schedule.
    pub fn mark_published(&mut self, event_id: &str, at: Millis) {
        if let Some(ev) = self.events.get_mut(event_id) {
            ev.mark_published(at);
            self.event_changed(event_id, at);
        }
    }

    /// Loads a supply trace. Its points are replayed as the clock passes
    /// their timestamps.
    pub fn load_trace(&mut self, trace: SupplyTrace, policy: Option<SupplyPolicy>) -> Result<(), CoordinatorError> {
        trace.validate()?;
        let policy = policy
            .or_else(|| self.config.supply.clone())
            .ok_or_else(|| CoordinatorError::InvalidRequest("no supply policy configured".into()))?;
        policy.turbine.validate()?;
        if policy.duration_min == 0 {
            return Err(CoordinatorError::InvalidRequest("duration_min must be positive".into()));
        }
        self.trace = Some(LoadedTrace {
            monitor: SupplyMonitor::new(trace.threshold_w, policy),
            points: trace.points.into_iter(),
        });
        Ok(())
    }

    /// Time-driven work: supply replay and event transitions. Returns the
    /// events created from supply drops.
    pub fn tick(&mut self, now: Millis) -> Vec<DREvent> {
        let mut requests = Vec::new();
        if let Some(tr) = &mut self.trace {
            while tr.points.as_slice().first().is_some_and(|p| p.t <= now) {
                let p = tr.points.next().expect("peeked");
                if let Some(e) = tr.monitor.observe(p) {
                    requests.push(e.request);
                }
            }
        }
        let created = requests
            .iter()
            .filter_map(|r| self.create_event(r, now).ok())
            .collect();
        let ids: Vec<String> = self
            .events
            .values()
            .filter(|e| e.state.is_open())
            .map(|e| e.event_id.clone())
            .collect();
        for id in ids {
            if self.events.get_mut(&id).is_some_and(|e| e.advance(now)) {
                self.event_changed(&id, now);
            }
        }
        created
    }

    pub fn take_outbox(&mut self) -> Vec<Dispatch> {
        std::mem::take(&mut self.outbox)
    }

    pub fn requeue(&mut self, mut unsent: Vec<Dispatch>) {
        unsent.append(&mut self.outbox);
        self.outbox = unsent;
    }

    pub fn take_frames(&mut self) -> Vec<StreamFrame> {
        std::mem::take(&mut self.frames)
    }

    /// Publishes the outbox in order, stamping publish times on events.
    /// Stops at the first failure and keeps the rest queued.
    pub fn flush(&mut self, bus: &dyn BusHandle) -> Result<(), CoordinatorError> {
        let msgs = self.take_outbox();
        for (i, d) in msgs.iter().enumerate() {
            match bus.publish(&d.msg.topic, d.msg.payload.clone()) {
                Ok(ack) => {
                    if let Some(id) = &d.completes {
                        self.mark_published(id, ack.published_at);
                    }
                }
                Err(e) => {
                    self.requeue(msgs[i..].to_vec());
                    return Err(e.into());
                }
            }
        }
        Ok(())
    }
}
