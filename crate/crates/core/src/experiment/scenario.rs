//! Experiment scenarios: the fleet, the site and what happens when.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::ExperimentError;
use crate::agent::{default_save_drop, AgentConfig, AgentDescriptor, Battery, WorkloadPhase};
use crate::clock::{Millis, MINUTE_MS, SECOND_MS};
use crate::geo::{GeoFix, LatLon};
use crate::power_model::Os;

pub const SCENARIO_FORMAT: u32 = 1;
/// Monday 2026-01-05 09:00 UTC.
pub const DEFAULT_START: Millis = 1_767_603_600_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioAgent {
    pub agent_id: String,
    pub os: Os,
    pub home: GeoFix,
    pub work: GeoFix,
    #[serde(default)]
    pub utc_offset_min: i32,
    #[serde(default)]
    pub opt_out: bool,
    /// Defaults to the OS's measured save-mode drop.
    #[serde(default)]
    pub save_drop_fraction: Option<f64>,
    /// Defaults to one steady, plugged office load.
    #[serde(default)]
    pub phases: Option<Vec<WorkloadPhase>>,
    #[serde(default = "default_brightness")]
    pub brightness: f64,
}

fn default_brightness() -> f64 {
    60.0
}

impl ScenarioAgent {
    pub fn steady_phase() -> WorkloadPhase {
        WorkloadPhase {
            duration_s: 86_400,
            cpu: 30.0,
            mem: 45.0,
            net_kb: 80.0,
            disk_req: 4.0,
            plugged: true,
        }
    }

    pub fn descriptor(&self) -> AgentDescriptor {
        AgentDescriptor {
            agent_id: self.agent_id.clone(),
            os: self.os,
            save_drop_fraction: self.save_drop_fraction.unwrap_or(default_save_drop(self.os)),
            home: self.home.clone(),
            work: self.work.clone(),
            utc_offset_min: self.utc_offset_min,
            opt_out: self.opt_out,
        }
    }

    /// Runs on AC with a full battery so the meter reads the load alone.
    pub fn config(&self, seed: u64) -> AgentConfig {
        AgentConfig {
            descriptor: self.descriptor(),
            phases: self.phases.clone().unwrap_or_else(|| vec![Self::steady_phase()]),
            battery: Battery::new(50.0, 100.0),
            brightness: self.brightness,
            seed,
        }
    }
}

/// An administrator request issued `at_min` minutes into the run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioEvent {
    pub at_min: u32,
    pub duration_min: u32,
    pub reduction_w: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSupplyPoint {
    pub at_s: u64,
    pub output_w: f64,
}

/// A turbine output trace replayed through the supply monitor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSupply {
    pub threshold_w: f64,
    pub duration_min: u32,
    pub points: Vec<ScenarioSupplyPoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    #[serde(default = "default_format")]
    pub format: u32,
    #[serde(default = "default_name")]
    pub name: String,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_start")]
    pub start: Millis,
    pub turbine: LatLon,
    #[serde(default = "default_radius")]
    pub radius_m: f64,
    pub agents: Vec<ScenarioAgent>,
    #[serde(default)]
    pub events: Vec<ScenarioEvent>,
    #[serde(default)]
    pub supply: Option<ScenarioSupply>,
    /// Samples per synthetic training log (four logs, one per model).
    #[serde(default = "default_training")]
    pub training_samples: usize,
    /// Minutes of demand kept before activation and after the end.
    #[serde(default = "default_window")]
    pub window_min: u32,
}

fn default_format() -> u32 {
    SCENARIO_FORMAT
}
fn default_name() -> String {
    "scenario".into()
}
fn default_start() -> Millis {
    DEFAULT_START
}
fn default_radius() -> f64 {
    crate::coordinator::DEFAULT_RADIUS_M
}
fn default_training() -> usize {
    4000
}
fn default_window() -> u32 {
    10
}

impl Scenario {
    /// Three office laptops (two Windows, one Ubuntu) near a turbine and
    /// five events: two of ten minutes and three of five. Requests exceed the
    /// fleet's capacity so every laptop takes part in every event.
    pub fn three_laptops(seed: u64) -> Self {
        let turbine = LatLon { lat: 48.2620, lon: 11.6680 };
        let home = |n: f64| GeoFix::new(turbine.offset_m(-8000.0 - 1000.0 * n, 2000.0 * n), 20.0, "80331");
        let work = |n: f64| GeoFix::new(turbine.offset_m(150.0 * n, -120.0 * n), 15.0, "85748");
        let agent = |id: &str, os: Os, n: f64, cpu: f64| ScenarioAgent {
            agent_id: id.into(),
            os,
            home: home(n),
            work: work(n),
            utc_offset_min: 0,
            opt_out: false,
            save_drop_fraction: None,
            phases: Some(vec![WorkloadPhase {
                cpu,
                ..ScenarioAgent::steady_phase()
            }]),
            brightness: 60.0,
        };
        let ev = |at_min, duration_min| ScenarioEvent {
            at_min,
            duration_min,
            reduction_w: 1000.0,
        };
        Scenario {
            format: SCENARIO_FORMAT,
            name: "three-laptops".into(),
            seed,
            start: DEFAULT_START,
            turbine,
            radius_m: 1000.0,
            agents: vec![
                agent("win-1", Os::Windows, 1.0, 35.0),
                agent("win-2", Os::Windows, 2.0, 20.0),
                agent("ubu-1", Os::Ubuntu, 3.0, 45.0),
            ],
            events: vec![ev(15, 10), ev(45, 10), ev(75, 5), ev(100, 5), ev(125, 5)],
            supply: None,
            training_samples: 4000,
            window_min: 10,
        }
    }

    /// Every schema violation, not only the first.
    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        if self.format != SCENARIO_FORMAT {
            v.push(format!("format {} is not supported (expected {SCENARIO_FORMAT})", self.format));
        }
        if let Err(e) = self.turbine.validate() {
            v.push(format!("turbine: {e}"));
        }
        if !(self.radius_m > 0.0 && self.radius_m.is_finite()) {
            v.push("radius_m must be positive".into());
        }
        if self.training_samples < 2000 {
            v.push("training_samples must be at least 2000".into());
        }
        if self.window_min == 0 {
            v.push("window_min must be positive".into());
        }
        let mut ids = BTreeSet::new();
        for (i, a) in self.agents.iter().enumerate() {
            if !ids.insert(a.agent_id.as_str()) {
                v.push(format!("agents[{i}]: duplicate id `{}`", a.agent_id));
            }
            if let Err(e) = a.descriptor().validate() {
                v.push(format!("agents[{i}]: {e}"));
            }
            if let Some(phases) = &a.phases {
                if phases.is_empty() {
                    v.push(format!("agents[{i}]: phases must not be empty"));
                }
                for (j, p) in phases.iter().enumerate() {
                    if let Err(e) = p.validate() {
                        v.push(format!("agents[{i}].phases[{j}]: {e}"));
                    }
                }
            }
            if !(0.0..=100.0).contains(&a.brightness) {
                v.push(format!("agents[{i}]: brightness must be a percentage"));
            }
        }
        let w = self.window_min;
        let mut prev_end: Option<(usize, u32)> = None;
        let mut order: Vec<usize> = (0..self.events.len()).collect();
        order.sort_by_key(|&i| self.events[i].at_min);
        for i in order {
            let e = &self.events[i];
            if e.duration_min == 0 {
                v.push(format!("events[{i}]: duration_min must be positive"));
            }
            if !(e.reduction_w > 0.0 && e.reduction_w.is_finite()) {
                v.push(format!("events[{i}]: reduction_w must be positive"));
            }
            if e.at_min < w {
                v.push(format!("events[{i}]: at_min must leave {w} minutes of baseline"));
            }
            if let Some((j, end)) = prev_end {
                if e.at_min < end + 2 * w {
                    v.push(format!("events[{i}]: its window overlaps events[{j}]"));
                }
            }
            prev_end = Some((i, e.at_min + e.duration_min));
        }
        if let Some(s) = &self.supply {
            if !(s.threshold_w >= 0.0 && s.threshold_w.is_finite()) {
                v.push("supply: threshold_w must be non-negative".into());
            }
            if s.duration_min == 0 {
                v.push("supply: duration_min must be positive".into());
            }
            for (i, p) in s.points.iter().enumerate() {
                if !(p.output_w >= 0.0 && p.output_w.is_finite()) {
                    v.push(format!("supply.points[{i}]: output must be non-negative"));
                }
                if i > 0 && p.at_s <= s.points[i - 1].at_s {
                    v.push(format!("supply.points[{i}]: times must increase"));
                }
            }
        }
        if self.events.is_empty() && self.supply.as_ref().is_none_or(|s| s.points.is_empty()) {
            v.push("nothing to run: no events and no supply trace".into());
        }
        v
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(ExperimentError::Scenario(v))
        }
    }

    /// Last instant the harness simulates.
    pub fn end(&self) -> Millis {
        let w = self.window_min as Millis * MINUTE_MS;
        let grace = crate::coordinator::COMPLETION_GRACE_MS + SECOND_MS;
        let events = self
            .events
            .iter()
            .map(|e| (e.at_min + e.duration_min) as Millis * MINUTE_MS + w);
        let supply = self.supply.iter().flat_map(|s| {
            s.points
                .last()
                .map(|p| p.at_s as Millis * SECOND_MS + s.duration_min as Millis * MINUTE_MS + w)
        });
        self.start + events.chain(supply).max().unwrap_or(0) + grace
    }

    /// Seed for one agent's generator.
    pub fn agent_seed(&self, index: usize) -> u64 {
        self.seed ^ (index as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
    }
}
