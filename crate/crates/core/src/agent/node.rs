//! The demand-side manager of one laptop, without IO.

use std::collections::VecDeque;

use serde::Serialize;

use super::schedule::ScheduleBook;
use super::workload::{apply_power_mode, Battery, GeneratedSample, MetricsGenerator, WorkloadPhase};
use super::{AgentDescriptor, AgentError};
use crate::bus::Envelope;
use crate::clock::{Millis, WeekTime, SECOND_MS};
use crate::geo::GeoFix;
use crate::messages::{topics, AgentHello, DRSchedule, Heartbeat, Outgoing, StatusMessage};
use crate::power_model::{PowerMode, PowerModel};
use crate::profiles::{
    init_profiles, AgentProfiles, LocationRecord, PowerReading, ProfileStore, ACTIVITY_INTERVAL_MS,
};

/// Slots per profile patch when a full profile is sent; keeps every patch
/// far below the bus payload limit.
const SNAPSHOT_CHUNK: usize = 1000;

#[derive(Debug, Clone)]
pub struct AgentConfig {
    pub descriptor: AgentDescriptor,
    /// Cycled for as long as the agent runs.
    pub phases: Vec<WorkloadPhase>,
    pub battery: Battery,
    pub brightness: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct AgentCounters {
    pub samples: u64,
    pub power_updates: u64,
    pub location_updates: u64,
    pub activity_records: u64,
    pub heartbeats: u64,
}

pub struct AgentNode {
    desc: AgentDescriptor,
    phases: Vec<WorkloadPhase>,
    cycle_ms: Millis,
    epoch: Millis,
    generator: MetricsGenerator,
    model_normal: Option<PowerModel>,
    model_save: Option<PowerModel>,
    store: Option<ProfileStore>,
    book: ScheduleBook,
    outbox: VecDeque<Outgoing>,
    connected: bool,
    paused: bool,
    next_sample: Millis,
    next_loop: Millis,
    last: Option<GeneratedSample>,
    status_log: Vec<StatusMessage>,
    counters: AgentCounters,
}

impl AgentNode {
    pub fn new(config: AgentConfig, now: Millis) -> Result<Self, AgentError> {
        let desc = config.descriptor;
        desc.validate()?;
        if config.phases.is_empty() {
            return Err(AgentError::InvalidPhase("an agent needs at least one phase".into()));
        }
        for p in &config.phases {
            p.validate()?;
        }
        let cycle_ms = config.phases.iter().map(|p| p.duration_s as Millis * SECOND_MS).sum();
        let generator = MetricsGenerator::new(
            desc.os,
            desc.save_drop_fraction,
            config.battery,
            config.brightness,
            config.seed,
        );
        let mut node = Self {
            phases: config.phases,
            cycle_ms,
            epoch: now,
            generator,
            model_normal: None,
            model_save: None,
            store: None,
            book: ScheduleBook::default(),
            outbox: VecDeque::new(),
            connected: true,
            paused: false,
            next_sample: now,
            next_loop: now,
            last: None,
            status_log: Vec::new(),
            counters: AgentCounters::default(),
            desc,
        };
        let hello = AgentHello {
            agent_id: node.desc.agent_id.clone(),
            os: node.desc.os,
            utc_offset_min: node.desc.utc_offset_min,
            save_drop_fraction: node.desc.save_drop_fraction,
        };
        node.emit(topics::agent(&node.desc.agent_id), &hello);
        Ok(node)
    }

    pub fn id(&self) -> &str {
        &self.desc.agent_id
    }

    pub fn descriptor(&self) -> &AgentDescriptor {
        &self.desc
    }

    /// Topic patterns this agent listens on.
    pub fn subscriptions(&self) -> Vec<String> {
        vec![
            topics::schedule(&self.desc.agent_id),
            format!("models/{}/*", self.desc.os),
        ]
    }

    fn emit<T: Serialize>(&mut self, topic: String, payload: &T) {
        let payload = serde_json::to_value(payload).expect("message serializes");
        self.outbox.push_back(Outgoing { topic, payload });
    }

    fn emit_statuses(&mut self, statuses: Vec<StatusMessage>) {
        for s in statuses {
            self.emit(topics::status(&self.desc.agent_id), &s);
            self.status_log.push(s);
        }
    }

    /// Processes one delivery. Unknown or malformed payloads are ignored.
    pub fn handle(&mut self, env: &Envelope, now: Millis) {
        if env.topic == topics::schedule(&self.desc.agent_id) {
            if let Ok(s) = env.decode::<DRSchedule>() {
                let out = self.book.receive(&self.desc.agent_id, s, now, self.desc.opt_out);
                self.emit_statuses(out);
            }
        } else if env.topic.starts_with("models/") {
            if let Ok(m) = env.decode::<PowerModel>() {
                if m.spec.os == self.desc.os {
                    match m.spec.mode {
                        PowerMode::Normal => self.model_normal = Some(m),
                        PowerMode::Save => self.model_save = Some(m),
                    }
                }
            }
        }
    }

    fn phase_at(&self, t: Millis) -> &WorkloadPhase {
        let mut offset = (t - self.epoch).rem_euclid(self.cycle_ms);
        for p in &self.phases {
            let d = p.duration_s as Millis * SECOND_MS;
            if offset < d {
                return p;
            }
            offset -= d;
        }
        self.phases.last().expect("non-empty")
    }

    /// Location at `t`: office on weekday working hours, home otherwise.
    pub fn fix_at(&self, t: Millis) -> &GeoFix {
        let w = WeekTime::at(t, self.desc.utc_offset_min);
        if w.weekday < 5 && (9 * 60..17 * 60).contains(&w.minute_of_day) {
            &self.desc.work
        } else {
            &self.desc.home
        }
    }

    pub fn mode(&self) -> PowerMode {
        if self.book.save_mode() {
            PowerMode::Save
        } else {
            PowerMode::Normal
        }
    }

    /// Earliest instant at which [`tick`](Self::tick) has work to do.
    pub fn next_wakeup(&self) -> Millis {
        let mut t = self.next_sample.min(self.next_loop);
        if let Some(x) = self.book.next_transition() {
            t = t.min(x);
        }
        t
    }

    /// Runs every sample, profiling loop and schedule transition due at or
    /// before `now`, in time order.
    pub fn tick(&mut self, now: Millis) {
        if self.paused {
            return;
        }
        loop {
            let transition = self.book.next_transition().filter(|t| *t <= now);
            let due = [Some(self.next_sample), Some(self.next_loop), transition]
                .into_iter()
                .flatten()
                .filter(|t| *t <= now)
                .min();
            let Some(t) = due else { break };
            if transition == Some(t) {
                let out = self.book.advance(&self.desc.agent_id, t, self.desc.opt_out);
                self.emit_statuses(out);
            } else if self.next_sample == t {
                self.sample(t);
                self.next_sample += self.generator.interval_ms();
            } else {
                self.profiling_loop(t);
                self.next_loop += ACTIVITY_INTERVAL_MS;
            }
        }
    }

    fn sample(&mut self, t: Millis) {
        let phase = self.phase_at(t).clone();
        let g = self.generator.next(t, &phase, self.mode());
        self.counters.samples += 1;
        self.ensure_profiles(&g);
        if let (Some(store), Some(n), Some(s)) = (self.store.as_mut(), &self.model_normal, &self.model_save) {
            if let (Ok(pn), Ok(ps)) = (n.predict(&g.sample), s.predict(&g.sample)) {
                store.record_power(PowerReading {
                    timestamp: t,
                    power_normal: pn,
                    power_save: ps,
                    plugged: g.plugged,
                });
                self.counters.power_updates += 1;
            }
        }
        self.last = Some(g);
    }

    /// Builds the initial profiles once both models are known.
    fn ensure_profiles(&mut self, g: &GeneratedSample) {
        if self.store.is_some() {
            return;
        }
        let (Some(n), Some(s)) = (&self.model_normal, &self.model_save) else {
            return;
        };
        let fix = self.fix_at(g.sample.timestamp).clone();
        let Ok((power, location)) = init_profiles(n, s, &g.sample, &fix) else {
            return;
        };
        let profiles = AgentProfiles {
            agent_id: self.desc.agent_id.clone(),
            utc_offset_min: self.desc.utc_offset_min,
            power,
            location,
            updated_at: g.sample.timestamp,
        };
        for patch in profiles.chunked_patches(SNAPSHOT_CHUNK) {
            self.emit(topics::profile(&self.desc.agent_id), &patch);
        }
        self.store = Some(ProfileStore::new(profiles));
    }

    fn profiling_loop(&mut self, t: Millis) {
        let hb = Heartbeat {
            agent_id: self.desc.agent_id.clone(),
            at_ms: t,
            mode: self.mode(),
            plugged: self.last.as_ref().map(|g| g.plugged).unwrap_or(false),
        };
        self.emit(topics::heartbeat(&self.desc.agent_id), &hb);
        self.counters.heartbeats += 1;
        let fix = self.fix_at(t).clone();
        let Some(store) = self.store.as_mut() else { return };
        if store.record_location(LocationRecord { timestamp: t, fix }).is_ok() {
            self.counters.location_updates += 1;
        }
        if let Ok(recs) = store.record_activity(t) {
            self.counters.activity_records += recs.len() as u64;
        }
        store.prune(t);
        self.push_patch();
    }

    /// Laptop switched off or suspended: nothing runs until [`resume`].
    ///
    /// [`resume`]: Self::resume
    pub fn pause(&mut self) {
        self.paused = true;
    }

    /// Restarts the loops at `now`; the next activity record backfills the gap.
    pub fn resume(&mut self, now: Millis) {
        self.paused = false;
        self.next_sample = self.next_sample.max(now);
        self.next_loop = self.next_loop.max(now);
    }

    pub fn is_paused(&self) -> bool {
        self.paused
    }

    /// While disconnected, outgoing messages stay queued. Reconnecting
    /// also queues a patch with every slot changed since the last one.
    pub fn set_connected(&mut self, connected: bool) {
        if connected && !self.connected {
            self.push_patch();
        }
        self.connected = connected;
    }

    /// Queues a patch with the slots changed since the last patch, if any.
    pub fn push_patch(&mut self) {
        if let Some(patch) = self.store.as_mut().and_then(|s| s.take_patch()) {
            self.emit(topics::profile(&self.desc.agent_id), &patch);
        }
    }

    pub fn is_connected(&self) -> bool {
        self.connected
    }

    pub fn set_opt_out(&mut self, opt_out: bool) {
        self.desc.opt_out = opt_out;
    }

    /// Queued messages in order, if connected.
    pub fn take_outbox(&mut self) -> Vec<Outgoing> {
        if !self.connected {
            return Vec::new();
        }
        self.outbox.drain(..).collect()
    }

    /// Puts unsent messages back at the front of the queue.
    pub fn requeue(&mut self, unsent: Vec<Outgoing>) {
        for m in unsent.into_iter().rev() {
            self.outbox.push_front(m);
        }
    }

    pub fn pending(&self) -> usize {
        self.outbox.len()
    }

    /// Ground-truth grid draw right now: the meter reading in the current
    /// mode while plugged in, zero on battery.
    pub fn demand_w(&self) -> f64 {
        match &self.last {
            Some(g) if g.plugged => apply_power_mode(self.desc.save_drop_fraction, self.mode(), g.normal_w),
            _ => 0.0,
        }
    }

    pub fn last_sample(&self) -> Option<&GeneratedSample> {
        self.last.as_ref()
    }

    pub fn profiles(&self) -> Option<&AgentProfiles> {
        self.store.as_ref().map(|s| s.profiles())
    }

    pub fn store(&self) -> Option<&ProfileStore> {
        self.store.as_ref()
    }

    pub fn status_log(&self) -> &[StatusMessage] {
        &self.status_log
    }

    pub fn counters(&self) -> AgentCounters {
        self.counters
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agent::{synthetic_training_log, AgentDescriptor};
    use crate::clock::MINUTE_MS;
    use crate::geo::LatLon;
    use crate::messages::StatusKind;
    use crate::power_model::{fit_pipeline, FeatureSpec, Os, TRAIN_FRACTION};
    use crate::profiles::{record_activity_and_backfill, ActivityRecord};

    const T0: Millis = 1_767_600_000_000; // a Monday, 08:00 UTC

    fn config(os: Os) -> AgentConfig {
        let home = GeoFix::new(LatLon::new(48.15, 11.56).unwrap(), 15.0, "80333");
        let work = GeoFix::new(LatLon::new(48.26, 11.67).unwrap(), 15.0, "85748");
        AgentConfig {
            descriptor: AgentDescriptor::new("lap-1", os, home, work),
            phases: vec![WorkloadPhase {
                duration_s: 3600,
                cpu: 30.0,
                mem: 50.0,
                net_kb: 50.0,
                disk_req: 4.0,
                plugged: true,
            }],
            battery: Battery::new(50.0, 100.0),
            brightness: 70.0,
            seed: 9,
        }
    }

    fn model_env(os: Os, mode: PowerMode, seq: u64) -> Envelope {
        let log = synthetic_training_log(os, mode, 0.2, 3000, 1);
        let m = fit_pipeline(log, &FeatureSpec::builtin(os, mode), TRAIN_FRACTION, 1).unwrap().model;
        Envelope {
            topic: topics::model(os, mode),
            seq,
            payload: serde_json::to_value(&m).unwrap(),
            published_at: 0,
        }
    }

    fn with_models(os: Os) -> AgentNode {
        let mut n = AgentNode::new(config(os), T0).unwrap();
        n.handle(&model_env(os, PowerMode::Normal, 1), T0);
        n.handle(&model_env(os, PowerMode::Save, 1), T0);
        n
    }

    fn run(n: &mut AgentNode, from: Millis, to: Millis) {
        let mut t = from;
        while t < to {
            n.tick(t);
            t += SECOND_MS;
        }
    }

    #[test]
    fn cadence_per_os() {
        for (os, want) in [(Os::Ubuntu, 60), (Os::Windows, 20)] {
            let mut n = AgentNode::new(config(os), T0).unwrap();
            run(&mut n, T0, T0 + MINUTE_MS);
            assert_eq!(n.counters().samples, want);
        }
    }

    #[test]
    fn nine_minutes_of_loops() {
        let mut n = with_models(Os::Windows);
        run(&mut n, T0, T0 + 9 * MINUTE_MS);
        let c = n.counters();
        assert_eq!(c.location_updates, 6);
        assert_eq!(c.activity_records, 6);
        assert_eq!(c.heartbeats, 6);
    }

    #[test]
    fn pause_backfills_gap() {
        let mut n = with_models(Os::Ubuntu);
        run(&mut n, T0, T0 + 3 * MINUTE_MS);
        let before: Vec<ActivityRecord> = n.store().unwrap().activity_records().copied().collect();
        let last = before.iter().map(|r| r.timestamp).max().unwrap();
        n.pause();
        run(&mut n, T0 + 3 * MINUTE_MS, T0 + 13 * MINUTE_MS);
        n.resume(T0 + 13 * MINUTE_MS);
        n.tick(T0 + 13 * MINUTE_MS);
        let expected = record_activity_and_backfill(&before, T0 + 13 * MINUTE_MS).unwrap();
        let after: Vec<ActivityRecord> = n.store().unwrap().activity_records().copied().collect();
        for r in &expected {
            assert!(after.contains(r), "{r:?}");
        }
        assert_eq!(expected.iter().filter(|r| !r.running).count() as i64, (T0 + 13 * MINUTE_MS - last) / 90_000 - 1);
    }

    #[test]
    fn offline_buffer_rebuilds_profile() {
        let mut n = with_models(Os::Ubuntu);
        let mut mirror: Option<AgentProfiles> = None;
        let apply = |msgs: Vec<Outgoing>, mirror: &mut Option<AgentProfiles>, base: &AgentNode| {
            for m in msgs.into_iter().filter(|m| m.topic.starts_with("profiles/")) {
                let patch: crate::profiles::ProfileSnapshot = serde_json::from_value(m.payload).unwrap();
                let p = mirror.get_or_insert_with(|| base.profiles().unwrap().clone());
                p.apply_patch(&patch).unwrap();
            }
        };
        run(&mut n, T0, T0 + 2 * MINUTE_MS);
        let first = n.take_outbox();
        apply(first, &mut mirror, &n);
        n.set_connected(false);
        run(&mut n, T0 + 2 * MINUTE_MS, T0 + 20 * MINUTE_MS);
        assert!(n.take_outbox().is_empty());
        assert!(n.pending() > 0);
        n.set_connected(true);
        let rest = n.take_outbox();
        apply(rest, &mut mirror, &n);
        assert_eq!(mirror.as_ref(), n.profiles());
    }

    #[test]
    fn schedule_drives_save_mode_and_demand() {
        let mut n = with_models(Os::Windows);
        run(&mut n, T0, T0 + MINUTE_MS);
        let s = DRSchedule {
            schedule_id: "s1".into(),
            event_id: "e1".into(),
            agent_id: "lap-1".into(),
            start: T0 + 2 * MINUTE_MS,
            duration_s: 300,
            estimated_contribution: 3.0,
            issued_at: T0 + MINUTE_MS,
        };
        let env = Envelope {
            topic: topics::schedule("lap-1"),
            seq: 1,
            payload: serde_json::to_value(&s).unwrap(),
            published_at: T0 + MINUTE_MS,
        };
        n.handle(&env, T0 + MINUTE_MS);
        n.handle(&env, T0 + MINUTE_MS);
        run(&mut n, T0 + MINUTE_MS, T0 + 2 * MINUTE_MS);
        assert_eq!(n.mode(), PowerMode::Normal);
        let normal = n.last_sample().unwrap().normal_w;
        n.tick(T0 + 2 * MINUTE_MS);
        assert_eq!(n.mode(), PowerMode::Save);
        let d = n.demand_w();
        let g = n.last_sample().unwrap();
        assert!((d - g.normal_w * (1.0 - 0.2646)).abs() < 1e-9);
        assert!(normal > 0.0);
        run(&mut n, T0 + 2 * MINUTE_MS, T0 + 8 * MINUTE_MS);
        assert_eq!(n.mode(), PowerMode::Normal);
        let kinds: Vec<StatusKind> = n.status_log().iter().map(|s| s.status).collect();
        assert_eq!(kinds, [StatusKind::Joined, StatusKind::Left]);
        assert_eq!(n.status_log()[0].at_ms, T0 + 2 * MINUTE_MS);
        assert_eq!(n.status_log()[1].at_ms, T0 + 7 * MINUTE_MS);
    }

    #[test]
    fn location_follows_office_hours() {
        let n = AgentNode::new(config(Os::Ubuntu), T0).unwrap();
        assert_eq!(n.fix_at(T0).zip, "80333");
        assert_eq!(n.fix_at(T0 + 60 * MINUTE_MS).zip, "85748");
        assert_eq!(n.fix_at(T0 + 5 * 24 * 60 * MINUTE_MS + 60 * MINUTE_MS).zip, "80333");
    }
}
