//! Virtual-clock runs: every component talks only through the bus.

use std::collections::VecDeque;
use std::fs;
use std::io::BufWriter;
use std::path::Path;
use std::sync::Arc;

use super::report::{
    averages, fleet_summary, mean, write_demand_csv, write_events_csv, DemandRow, EventRow, ExperimentReport,
    ModelRow, CSV_SCHEMA, REPORT_FORMAT,
};
use super::scenario::Scenario;
use super::ExperimentError;
use crate::agent::{default_save_drop, synthetic_training_log, AgentNode};
use crate::bus::{Bus, BusHandle, Subscription};
use crate::clock::{Millis, VirtualClock, MINUTE_MS, SECOND_MS};
use crate::coordinator::{
    Coordinator, CoordinatorConfig, DREvent, EventRequest, EventState, SupplyPoint, SupplyPolicy, SupplyTrace,
};
use crate::geo::geo_distance;
use crate::messages::{topics, StatusMessage};
use crate::power_model::{fit_pipeline, FeatureSpec, Os, PowerMode, TRAIN_FRACTION};

/// Simulation step.
pub const STEP_MS: Millis = SECOND_MS;

pub struct ExperimentOutput {
    pub report: ExperimentReport,
    pub demand: Vec<DemandRow>,
    pub statuses: Vec<StatusMessage>,
}

impl ExperimentOutput {
    /// Writes `report.json`, `events.csv`, `demand.csv` and `status.jsonl`.
    pub fn write(&self, dir: &Path) -> Result<(), ExperimentError> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("report.json"), serde_json::to_string_pretty(&self.report)? + "\n")?;
        write_events_csv(BufWriter::new(fs::File::create(dir.join("events.csv"))?), &self.report)?;
        write_demand_csv(BufWriter::new(fs::File::create(dir.join("demand.csv"))?), &self.demand)?;
        let mut lines = String::new();
        for s in &self.statuses {
            lines += &serde_json::to_string(s)?;
            lines.push('\n');
        }
        fs::write(dir.join("status.jsonl"), lines)?;
        Ok(())
    }
}

struct Member {
    node: AgentNode,
    sub: Subscription,
    /// Ground-truth draw and mode after every step.
    trace: Vec<(f64, PowerMode)>,
}

fn publish_all(bus: &Bus, node: &mut AgentNode) -> Result<(), ExperimentError> {
    for m in node.take_outbox() {
        bus.publish(&m.topic, m.payload)?;
    }
    Ok(())
}

/// Trains the four models on synthetic logs and publishes them.
fn train_models(sc: &Scenario, bus: &Bus) -> Result<Vec<ModelRow>, ExperimentError> {
    let mut rows = Vec::new();
    for (i, os) in Os::ALL.into_iter().enumerate() {
        for (j, mode) in PowerMode::ALL.into_iter().enumerate() {
            let seed = sc.seed.wrapping_add(1000 + 10 * i as u64 + j as u64);
            let log = synthetic_training_log(os, mode, default_save_drop(os), sc.training_samples, seed);
            let out = fit_pipeline(log, &FeatureSpec::builtin(os, mode), TRAIN_FRACTION, sc.seed)?;
            bus.publish_json(&topics::model(os, mode), &out.model)?;
            rows.push(ModelRow {
                os,
                mode,
                n_train: out.n_train,
                report: out.report,
            });
        }
    }
    Ok(rows)
}

/// Runs a scenario to completion. Deterministic for a given scenario.
pub fn run_experiment(sc: &Scenario) -> Result<ExperimentOutput, ExperimentError> {
    sc.validate()?;
    let clock = VirtualClock::new(sc.start);
    let bus = Bus::in_memory(Arc::new(clock.clone()));
    let models = train_models(sc, &bus)?;

    let mut fleet = Vec::new();
    for (i, a) in sc.agents.iter().enumerate() {
        let node = AgentNode::new(a.config(sc.agent_seed(i)), sc.start)?;
        let patterns = node.subscriptions();
        let refs: Vec<&str> = patterns.iter().map(String::as_str).collect();
        let sub = bus.subscribe(&refs, 1)?;
        fleet.push(Member {
            node,
            sub,
            trace: Vec::new(),
        });
    }

    let policy = sc.supply.as_ref().map(|s| SupplyPolicy {
        turbine: sc.turbine,
        duration_min: s.duration_min,
        radius_m: sc.radius_m,
    });
    let mut coord = Coordinator::new(CoordinatorConfig {
        supply: policy,
        ..Default::default()
    });
    if let Some(s) = &sc.supply {
        let points = s
            .points
            .iter()
            .map(|p| SupplyPoint {
                t: sc.start + p.at_s as Millis * SECOND_MS,
                output_w: p.output_w,
            })
            .collect();
        coord.load_trace(
            SupplyTrace {
                points,
                threshold_w: s.threshold_w,
            },
            None,
        )?;
    }
    let patterns = Coordinator::subscriptions();
    let refs: Vec<&str> = patterns.iter().map(String::as_str).collect();
    let csub = bus.subscribe(&refs, 1)?;

    let mut requests: Vec<(Millis, EventRequest)> = sc
        .events
        .iter()
        .map(|e| {
            let mut r = EventRequest::immediate(sc.turbine, e.reduction_w, e.duration_min);
            r.radius_m = sc.radius_m;
            (sc.start + e.at_min as Millis * MINUTE_MS, r)
        })
        .collect();
    requests.sort_by_key(|(t, _)| *t);
    let mut requests = VecDeque::from(requests);

    let end = sc.end();
    let mut t = sc.start;
    while t <= end {
        clock.set(t);
        while requests.front().is_some_and(|(at, _)| *at <= t) {
            let (_, req) = requests.pop_front().expect("peeked");
            coord.create_event(&req, t)?;
        }
        coord.flush(&bus)?;
        // deliver until quiet, so one step is one instant
        loop {
            let mut moved = false;
            let envs = csub.drain();
            moved |= !envs.is_empty();
            for env in &envs {
                coord.handle(env, t);
            }
            coord.tick(t);
            coord.flush(&bus)?;
            for m in &mut fleet {
                let envs = m.sub.drain();
                moved |= !envs.is_empty();
                for env in &envs {
                    m.node.handle(env, t);
                }
                m.node.tick(t);
                publish_all(&bus, &mut m.node)?;
            }
            if !moved {
                break;
            }
        }
        for m in &mut fleet {
            m.trace.push((m.node.demand_w(), m.node.mode()));
        }
        t += STEP_MS;
    }

    let events: Vec<DREvent> = coord.events().cloned().collect();
    let mut rows = Vec::new();
    let mut demand = Vec::new();
    for ev in &events {
        let (row, series) = measure(sc, ev, &fleet);
        rows.push(row);
        demand.extend(series);
    }
    let mut statuses: Vec<StatusMessage> = fleet
        .iter()
        .flat_map(|m| bus.read(&topics::status(m.node.id()), 1))
        .filter_map(|e| e.decode().ok())
        .collect();
    statuses.sort_by(|a: &StatusMessage, b| (a.at_ms, &a.agent_id).cmp(&(b.at_ms, &b.agent_id)));

    let report = ExperimentReport {
        format: REPORT_FORMAT,
        csv_schema: CSV_SCHEMA,
        scenario: sc.name.clone(),
        seed: sc.seed,
        start: sc.start,
        end,
        window_min: sc.window_min,
        models,
        averages: averages(&rows),
        fleet: fleet_summary(&rows),
        events: rows,
    };
    Ok(ExperimentOutput {
        report,
        demand,
        statuses,
    })
}

fn step_of(sc: &Scenario, t: Millis) -> usize {
    ((t - sc.start) / STEP_MS).max(0) as usize
}

/// Baseline, measured and expected reduction of one event from the
/// per-second ground truth, plus its demand rows.
fn measure(sc: &Scenario, ev: &DREvent, fleet: &[Member]) -> (EventRow, Vec<DemandRow>) {
    let mut row = EventRow {
        event_id: ev.event_id.clone(),
        requested_at: ev.requested_at,
        start: ev.start,
        duration_min: ev.duration_min,
        requested_w: ev.requested_reduction,
        state: ev.state,
        outcome: ev.outcome.clone(),
        under_supplied: ev.under_supplied,
        partial_participation: ev.partial_participation,
        selected: ev.selected.iter().map(|s| s.agent_id.clone()).collect(),
        participants: ev.joined.keys().cloned().collect(),
        estimated_w: ev.estimated_total(),
        baseline_w: None,
        measured_w: None,
        expected_w: None,
        measured_fraction: None,
        expected_fraction: None,
        schedule_latency_ms: ev.schedule_latency_ms,
        join_latency_ms: ev.join_latency_ms,
        max_distance_m: None,
    };
    if ev.state == EventState::Aborted {
        return (row, Vec::new());
    }
    row.max_distance_m = fleet
        .iter()
        .filter(|m| ev.is_selected(m.node.id()))
        .filter_map(|m| geo_distance(ev.turbine_location, m.node.fix_at(ev.start).position()).ok())
        .reduce(f64::max);

    let w = sc.window_min as Millis * MINUTE_MS;
    let (pre_a, start, end) = (step_of(sc, ev.start - w), step_of(sc, ev.start), step_of(sc, ev.end()));
    let mut demand = Vec::new();
    let (mut baseline, mut measured, mut expected) = (0.0, 0.0, 0.0);
    let mut complete = true;
    for m in fleet {
        let participant = ev.joined.contains_key(m.node.id());
        let last = step_of(sc, ev.end() + w).min(m.trace.len());
        for (k, (d, mode)) in m.trace.iter().enumerate().take(last).skip(pre_a) {
            let t_ms = sc.start + k as Millis * STEP_MS;
            demand.push(super::report::DemandRow {
                event_id: ev.event_id.clone(),
                agent_id: m.node.id().to_string(),
                participant,
                t_ms,
                rel_s: (t_ms - ev.start) / SECOND_MS,
                mode: *mode,
                demand_w: *d,
            });
        }
        if !participant {
            continue;
        }
        if end > m.trace.len() {
            complete = false;
            continue;
        }
        let pre = mean(m.trace[pre_a..start].iter().map(|x| x.0)).unwrap_or(0.0);
        let during = mean(m.trace[start..end].iter().map(|x| x.0)).unwrap_or(0.0);
        baseline += pre;
        measured += pre - during;
        expected += m.node.descriptor().save_drop_fraction * pre;
    }
    if complete && !row.participants.is_empty() {
        row.baseline_w = Some(baseline);
        row.measured_w = Some(measured);
        row.expected_w = Some(expected);
        if baseline > 0.0 {
            row.measured_fraction = Some(measured / baseline);
            row.expected_fraction = Some(expected / baseline);
        }
    }
    (row, demand)
}
