//! Metrics samples and the metrics-log CSV format.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::ModelError;
use crate::clock::Millis;

/// One timestamped utilization reading. `real_power` is only present in
/// training logs (ground-truth meter readings).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsSample {
    pub timestamp: Millis,
    pub cpu: f64,
    pub brightness: f64,
    /// Watts; negative while discharging.
    pub batt_rate: f64,
    pub charging: bool,
    pub batt_remaining: f64,
    pub mem: f64,
    pub disk_req: f64,
    pub disk_kb: f64,
    pub net_kb: f64,
    pub real_power: Option<f64>,
}

impl MetricsSample {
    /// Checks the field ranges. NaN is tolerated (it marks a missing metric).
    pub fn validate(&self) -> Result<(), String> {
        let pct = [
            ("cpu_pct", self.cpu),
            ("brightness_pct", self.brightness),
            ("batt_remaining_pct", self.batt_remaining),
            ("mem_pct", self.mem),
        ];
        for (name, v) in pct {
            if !v.is_nan() && !(0.0..=100.0).contains(&v) {
                return Err(format!("{name}={v} outside [0,100]"));
            }
        }
        let rates = [
            ("disk_req_s", self.disk_req),
            ("disk_kb_s", self.disk_kb),
            ("net_kb_s", self.net_kb),
        ];
        for (name, v) in rates {
            if !v.is_nan() && v < 0.0 {
                return Err(format!("{name}={v} is negative"));
            }
        }
        if self.batt_rate.is_infinite() {
            return Err("batt_rate_w is infinite".into());
        }
        if let Some(p) = self.real_power {
            if !p.is_finite() {
                return Err(format!("real_power_w={p} is not finite"));
            }
        }
        Ok(())
    }
}

/// Exact, ordered metrics-log header.
pub const LOG_HEADER: [&str; 11] = [
    "timestamp_ms",
    "cpu_pct",
    "brightness_pct",
    "batt_rate_w",
    "charging",
    "batt_remaining_pct",
    "mem_pct",
    "disk_req_s",
    "disk_kb_s",
    "net_kb_s",
    "real_power_w",
];

/// Whether a log must carry the ground-truth power column.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LogKind {
    /// `real_power_w` required on every row.
    Training,
    /// `real_power_w` column optional; empty cells allowed.
    Inference,
}

#[derive(Debug, Clone, Default)]
pub struct IngestReport {
    pub samples: Vec<MetricsSample>,
    /// Rows dropped for parse errors, range violations or non-increasing
    /// timestamps.
    pub skipped: usize,
}

/// Streams a metrics log. Malformed rows are skipped and counted.
pub fn ingest_metrics_log<R: Read>(source: R, kind: LogKind) -> Result<IngestReport, ModelError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(source);

    let header = reader.headers()?.clone();
    if header.is_empty() || (header.len() == 1 && header[0].is_empty()) {
        return Err(ModelError::EmptyDataset);
    }
    let required = match kind {
        LogKind::Training => LOG_HEADER.len(),
        LogKind::Inference => LOG_HEADER.len() - 1,
    };
    for (i, want) in LOG_HEADER.iter().enumerate() {
        match header.get(i) {
            Some(got) if got == *want => {}
            Some(got) if i < required || !got.is_empty() => {
                return Err(ModelError::Schema(format!(
                    "expected column `{want}` at position {i}, found `{got}`"
                )))
            }
            None if i < required => {
                return Err(ModelError::Schema(format!("missing required column `{want}`")))
            }
            _ => {}
        }
    }
    if header.len() > LOG_HEADER.len() {
        return Err(ModelError::Schema(format!(
            "unexpected extra column `{}`",
            &header[LOG_HEADER.len()]
        )));
    }
    let has_power = header.len() == LOG_HEADER.len();

    let mut report = IngestReport::default();
    let mut last_ts: Option<Millis> = None;
    let mut record = csv::StringRecord::new();
    loop {
        match reader.read_record(&mut record) {
            Ok(false) => break,
            Ok(true) => {}
            Err(e) if e.is_io_error() => return Err(e.into()),
            Err(_) => {
                report.skipped += 1;
                continue;
            }
        }
        match parse_row(&record, has_power, kind) {
            Some(s) if last_ts.is_none_or(|t| s.timestamp > t) => {
                last_ts = Some(s.timestamp);
                report.samples.push(s);
            }
            _ => report.skipped += 1,
        }
    }
    if report.samples.is_empty() && report.skipped == 0 {
        return Err(ModelError::EmptyDataset);
    }
    Ok(report)
}

fn parse_row(r: &csv::StringRecord, has_power: bool, kind: LogKind) -> Option<MetricsSample> {
    let expected = if has_power { 11 } else { 10 };
    if r.len() != expected {
        return None;
    }
    let num = |i: usize| r[i].parse::<f64>().ok().filter(|v| v.is_finite());
    let charging = match &r[4] {
        "1" | "true" => true,
        "0" | "false" => false,
        _ => return None,
    };
    let real_power = if has_power && !r[10].is_empty() {
        Some(num(10)?)
    } else {
        None
    };
    if kind == LogKind::Training && real_power.is_none() {
        return None;
    }
    let s = MetricsSample {
        timestamp: r[0].parse().ok()?,
        cpu: num(1)?,
        brightness: num(2)?,
        batt_rate: num(3)?,
        charging,
        batt_remaining: num(5)?,
        mem: num(6)?,
        disk_req: num(7)?,
        disk_kb: num(8)?,
        net_kb: num(9)?,
        real_power,
    };
    s.validate().ok()?;
    Some(s)
}

/// Writes samples in the metrics-log format. The power column is written
/// when `with_power` is set (empty cells for samples without a reading).
pub fn write_metrics_log<W: Write>(
    out: W,
    samples: &[MetricsSample],
    with_power: bool,
) -> Result<(), ModelError> {
    let mut w = csv::Writer::from_writer(out);
    let cols = if with_power { 11 } else { 10 };
    w.write_record(&LOG_HEADER[..cols])?;
    for s in samples {
        let mut row = vec![
            s.timestamp.to_string(),
            s.cpu.to_string(),
            s.brightness.to_string(),
            s.batt_rate.to_string(),
            if s.charging { "1" } else { "0" }.to_string(),
            s.batt_remaining.to_string(),
            s.mem.to_string(),
            s.disk_req.to_string(),
            s.disk_kb.to_string(),
            s.net_kb.to_string(),
        ];
        if with_power {
            row.push(s.real_power.map(|p| p.to_string()).unwrap_or_default());
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Lowest plausible wall power reading, in watts.
pub const MIN_PLAUSIBLE_W: f64 = 8.0;
/// Charger rating; readings above it are measurement artifacts.
pub const MAX_PLAUSIBLE_W: f64 = 65.0;

/// Drops samples whose reading lies strictly outside `[8, 65]` W (or that
/// carry no reading at all). Order is preserved.
pub fn filter_outliers(samples: Vec<MetricsSample>) -> Vec<MetricsSample> {
    samples
        .into_iter()
        .filter(|s| {
            s.real_power
                .is_some_and(|p| (MIN_PLAUSIBLE_W..=MAX_PLAUSIBLE_W).contains(&p))
        })
        .collect()
}
