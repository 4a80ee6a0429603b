//! Experiment outputs: the JSON report and the CSV tables.

use std::io::Write;

use serde::{Deserialize, Serialize};

use super::ExperimentError;
use crate::clock::Millis;
use crate::coordinator::EventState;
use crate::power_model::{EvalReport, Os, PowerMode};

pub const REPORT_FORMAT: u32 = 1;
/// Column layout version of `events.csv` and `demand.csv`.
pub const CSV_SCHEMA: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelRow {
    pub os: Os,
    pub mode: PowerMode,
    pub n_train: usize,
    pub report: EvalReport,
}

/// Estimated against measured curtailment and latencies of one event.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventRow {
    pub event_id: String,
    pub requested_at: Millis,
    pub start: Millis,
    pub duration_min: u32,
    pub requested_w: f64,
    pub state: EventState,
    pub outcome: Option<String>,
    pub under_supplied: bool,
    pub partial_participation: bool,
    pub selected: Vec<String>,
    pub participants: Vec<String>,
    /// Sum of the coordinator's contribution estimates.
    pub estimated_w: f64,
    /// Participants' mean demand over the baseline window, summed.
    pub baseline_w: Option<f64>,
    /// Baseline minus mean demand during the event, summed over participants.
    pub measured_w: Option<f64>,
    /// What the configured save-mode drops predict for the baseline load.
    pub expected_w: Option<f64>,
    pub measured_fraction: Option<f64>,
    pub expected_fraction: Option<f64>,
    pub schedule_latency_ms: Option<Millis>,
    pub join_latency_ms: Option<Millis>,
    /// Largest distance between the turbine and a selected laptop's true
    /// position at the event start.
    pub max_distance_m: Option<f64>,
}

/// Column means over the events that have a value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Averages {
    pub estimated_w: Option<f64>,
    pub measured_w: Option<f64>,
    pub schedule_latency_ms: Option<f64>,
    pub join_latency_ms: Option<f64>,
}

/// Totals over every event with measurements.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FleetSummary {
    pub baseline_w: f64,
    pub measured_w: f64,
    pub expected_w: f64,
    pub measured_fraction: Option<f64>,
    pub expected_fraction: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub format: u32,
    pub csv_schema: u32,
    pub scenario: String,
    pub seed: u64,
    pub start: Millis,
    pub end: Millis,
    pub window_min: u32,
    pub models: Vec<ModelRow>,
    pub events: Vec<EventRow>,
    pub averages: Averages,
    pub fleet: FleetSummary,
}

/// One row of `demand.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemandRow {
    pub event_id: String,
    pub agent_id: String,
    pub participant: bool,
    pub t_ms: Millis,
    /// Seconds relative to activation.
    pub rel_s: i64,
    pub mode: PowerMode,
    pub demand_w: f64,
}

pub fn mean(values: impl IntoIterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.into_iter().fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

/// Two decimals, as in the printed tables.
pub fn fmt2(v: f64) -> String {
    format!("{v:.2}")
}

fn opt2(v: Option<f64>) -> String {
    v.map(fmt2).unwrap_or_default()
}

pub fn averages(rows: &[EventRow]) -> Averages {
    let live = || rows.iter().filter(|r| r.state != EventState::Aborted);
    Averages {
        estimated_w: mean(live().map(|r| r.estimated_w)),
        measured_w: mean(live().filter_map(|r| r.measured_w)),
        schedule_latency_ms: mean(live().filter_map(|r| r.schedule_latency_ms.map(|v| v as f64))),
        join_latency_ms: mean(live().filter_map(|r| r.join_latency_ms.map(|v| v as f64))),
    }
}

pub fn fleet_summary(rows: &[EventRow]) -> FleetSummary {
    let with = || rows.iter().filter(|r| r.measured_w.is_some());
    let baseline_w: f64 = with().filter_map(|r| r.baseline_w).sum();
    let measured_w: f64 = with().filter_map(|r| r.measured_w).sum();
    let expected_w: f64 = with().filter_map(|r| r.expected_w).sum();
    let frac = |x: f64| (baseline_w > 0.0).then(|| x / baseline_w);
    FleetSummary {
        baseline_w,
        measured_w,
        expected_w,
        measured_fraction: frac(measured_w),
        expected_fraction: frac(expected_w),
    }
}

/// `events.csv`: one row per event, then an `average` row.
pub fn write_events_csv<W: Write>(out: W, report: &ExperimentReport) -> Result<(), ExperimentError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "event_id",
        "state",
        "start",
        "duration_min",
        "requested_w",
        "selected",
        "estimated_w",
        "measured_w",
        "measured_fraction",
        "expected_fraction",
        "schedule_latency_ms",
        "join_latency_ms",
        "under_supplied",
        "partial_participation",
    ])?;
    for r in &report.events {
        w.write_record([
            r.event_id.clone(),
            serde_json::to_value(r.state)?.as_str().unwrap_or_default().to_string(),
            r.start.to_string(),
            r.duration_min.to_string(),
            fmt2(r.requested_w),
            r.selected.join(";"),
            fmt2(r.estimated_w),
            opt2(r.measured_w),
            r.measured_fraction.map(|f| format!("{f:.4}")).unwrap_or_default(),
            r.expected_fraction.map(|f| format!("{f:.4}")).unwrap_or_default(),
            r.schedule_latency_ms.map(|v| v.to_string()).unwrap_or_default(),
            r.join_latency_ms.map(|v| v.to_string()).unwrap_or_default(),
            r.under_supplied.to_string(),
            r.partial_participation.to_string(),
        ])?;
    }
    let a = &report.averages;
    w.write_record([
        "average".to_string(),
        String::new(),
        String::new(),
        String::new(),
        String::new(),
        String::new(),
        opt2(a.estimated_w),
        opt2(a.measured_w),
        report.fleet.measured_fraction.map(|f| format!("{f:.4}")).unwrap_or_default(),
        report.fleet.expected_fraction.map(|f| format!("{f:.4}")).unwrap_or_default(),
        opt2(a.schedule_latency_ms),
        opt2(a.join_latency_ms),
        String::new(),
        String::new(),
    ])?;
    w.flush()?;
    Ok(())
}

pub fn write_demand_csv<W: Write>(out: W, rows: &[DemandRow]) -> Result<(), ExperimentError> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Renders the event table for the terminal.
pub fn render_table(report: &ExperimentReport) -> String {
    let mut s = format!(
        "{:<9} {:<10} {:>4} {:>10} {:>10} {:>8} {:>8} {:>9} {:>9}\n",
        "event", "state", "min", "estimated", "measured", "meas%", "exp%", "sched_ms", "join_ms"
    );
    let pct = |v: Option<f64>| v.map(|f| format!("{:.2}", f * 100.0)).unwrap_or_else(|| "-".into());
    let ms = |v: Option<Millis>| v.map(|x| x.to_string()).unwrap_or_else(|| "-".into());
    for r in &report.events {
        s += &format!(
            "{:<9} {:<10} {:>4} {:>10} {:>10} {:>8} {:>8} {:>9} {:>9}\n",
            r.event_id,
            format!("{:?}", r.state).to_lowercase(),
            r.duration_min,
            fmt2(r.estimated_w),
            r.measured_w.map(fmt2).unwrap_or_else(|| "-".into()),
            pct(r.measured_fraction),
            pct(r.expected_fraction),
            ms(r.schedule_latency_ms),
            ms(r.join_latency_ms),
        );
    }
    let a = &report.averages;
    let dash = |v: Option<f64>| v.map(fmt2).unwrap_or_else(|| "-".into());
    s += &format!(
        "{:<9} {:<10} {:>4} {:>10} {:>10} {:>8} {:>8} {:>9} {:>9}\n",
        "average",
        "",
        "",
        dash(a.estimated_w),
        dash(a.measured_w),
        pct(report.fleet.measured_fraction),
        pct(report.fleet.expected_fraction),
        dash(a.schedule_latency_ms),
        dash(a.join_latency_ms),
    );
    s
}
