//! Synthetic utilization and ground-truth power for a simulated laptop.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::AgentError;
use crate::clock::{Millis, SECOND_MS};
use crate::power_model::{MetricsSample, Os, PowerMode, MAX_PLAUSIBLE_W, MIN_PLAUSIBLE_W};

/// Sampling cadence of the metrics collector.
pub fn sample_interval_ms(os: Os) -> Millis {
    match os {
        Os::Ubuntu => SECOND_MS,
        Os::Windows => 3 * SECOND_MS,
    }
}

/// A stretch of steady load.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkloadPhase {
    pub duration_s: u64,
    pub cpu: f64,
    pub mem: f64,
    pub net_kb: f64,
    pub disk_req: f64,
    pub plugged: bool,
}

impl WorkloadPhase {
    pub fn idle(duration_s: u64, plugged: bool) -> Self {
        Self {
            duration_s,
            cpu: 0.0,
            mem: 0.0,
            net_kb: 0.0,
            disk_req: 0.0,
            plugged,
        }
    }

    pub fn validate(&self) -> Result<(), AgentError> {
        let pct_ok = |v: f64| (0.0..=100.0).contains(&v);
        if self.duration_s == 0 {
            return Err(AgentError::InvalidPhase("duration must be positive".into()));
        }
        if !pct_ok(self.cpu) || !pct_ok(self.mem) {
            return Err(AgentError::InvalidPhase("cpu and mem are percentages".into()));
        }
        if !(self.net_kb >= 0.0 && self.disk_req >= 0.0) {
            return Err(AgentError::InvalidPhase("rates must be non-negative".into()));
        }
        Ok(())
    }
}

/// Hidden linear law that the simulated meter follows in normal mode.
/// Every agent of one OS shares it; the fitted models try to recover it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerLaw {
    pub base_w: f64,
    pub per_cpu: f64,
    pub per_mem: f64,
    pub per_net_kb: f64,
    pub per_disk_req: f64,
    /// Share of the charger input that shows up at the wall.
    pub charge_gain: f64,
    pub noise_sd: f64,
}

impl PowerLaw {
    pub fn for_os(os: Os) -> Self {
        match os {
            Os::Windows => Self {
                base_w: 14.0,
                per_cpu: 0.22,
                per_mem: 0.05,
                per_net_kb: 0.01,
                per_disk_req: 0.12,
                charge_gain: 1.0,
                noise_sd: 1.0,
            },
            Os::Ubuntu => Self {
                base_w: 10.0,
                per_cpu: 0.18,
                per_mem: 0.03,
                per_net_kb: 0.008,
                per_disk_req: 0.10,
                charge_gain: 1.0,
                noise_sd: 0.6,
            },
        }
    }

    fn load_w(&self, cpu: f64, mem: f64, net_kb: f64, disk_req: f64) -> f64 {
        self.base_w + self.per_cpu * cpu + self.per_mem * mem + self.per_net_kb * net_kb + self.per_disk_req * disk_req
    }
}

/// Watts drawn in `mode`: save mode scales consumption by `1 − drop`.
pub fn apply_power_mode(save_drop_fraction: f64, mode: PowerMode, watts: f64) -> f64 {
    match mode {
        PowerMode::Normal => watts,
        PowerMode::Save => watts * (1.0 - save_drop_fraction),
    }
}

/// Linear charge/discharge battery.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Battery {
    pub capacity_wh: f64,
    pub remaining_pct: f64,
    pub charge_w: f64,
}

impl Battery {
    pub fn new(capacity_wh: f64, remaining_pct: f64) -> Self {
        Self {
            capacity_wh,
            remaining_pct: remaining_pct.clamp(0.0, 100.0),
            charge_w: 20.0,
        }
    }

    pub fn charging(&self, plugged: bool) -> bool {
        plugged && self.remaining_pct < 100.0
    }

    /// Signed battery power for the next interval: charger input while
    /// charging, minus the load while unplugged, zero when full on AC.
    pub fn rate_w(&self, plugged: bool, load_w: f64) -> f64 {
        if self.charging(plugged) {
            self.charge_w
        } else if plugged {
            0.0
        } else if self.remaining_pct > 0.0 {
            -load_w
        } else {
            0.0
        }
    }

    pub fn step(&mut self, rate_w: f64, dt_ms: Millis) {
        let wh = rate_w * dt_ms as f64 / 3_600_000.0;
        self.remaining_pct = (self.remaining_pct + 100.0 * wh / self.capacity_wh).clamp(0.0, 100.0);
    }
}

/// What the simulated meter reads alongside the observed metrics.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedSample {
    /// Observed utilization; `real_power` carries the wall power in the mode
    /// the sample was generated under.
    pub sample: MetricsSample,
    /// Wall power the laptop would draw in normal mode.
    pub normal_w: f64,
    pub plugged: bool,
}

/// Utilization noise around the phase levels plus the ground-truth meter.
#[derive(Debug, Clone)]
pub struct MetricsGenerator {
    os: Os,
    law: PowerLaw,
    save_drop_fraction: f64,
    pub brightness: f64,
    pub battery: Battery,
    rng: ChaCha8Rng,
}

impl MetricsGenerator {
    pub fn new(os: Os, save_drop_fraction: f64, battery: Battery, brightness: f64, seed: u64) -> Self {
        Self {
            os,
            law: PowerLaw::for_os(os),
            save_drop_fraction,
            brightness,
            battery,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn os(&self) -> Os {
        self.os
    }

    pub fn law(&self) -> &PowerLaw {
        &self.law
    }

    pub fn interval_ms(&self) -> Millis {
        sample_interval_ms(self.os)
    }

    fn jitter(&mut self, level: f64, sd: f64, hi: f64) -> f64 {
        if level == 0.0 {
            return 0.0;
        }
        let n = Normal::new(0.0, sd).expect("positive sd");
        (level + n.sample(&mut self.rng)).clamp(0.0, hi)
    }

    /// One sample at `at` under `phase` and `mode`, advancing the battery by
    /// one collector interval.
    pub fn next(&mut self, at: Millis, phase: &WorkloadPhase, mode: PowerMode) -> GeneratedSample {
        let cpu = self.jitter(phase.cpu, 3.0, 100.0);
        let mem = self.jitter(phase.mem, 1.0, 100.0);
        let net_kb = self.jitter(phase.net_kb, phase.net_kb * 0.1 + 1.0, f64::MAX);
        let disk_req = self.jitter(phase.disk_req, phase.disk_req * 0.1 + 0.5, f64::MAX);
        let disk_kb = disk_req * 16.0;
        let noise = Normal::new(0.0, self.law.noise_sd).expect("positive sd").sample(&mut self.rng);
        let load = self.law.load_w(cpu, mem, net_kb, disk_req) + noise;

        let charging = self.battery.charging(phase.plugged);
        let remaining = self.battery.remaining_pct;
        let draw_normal = load + if charging { self.law.charge_gain * self.battery.charge_w } else { 0.0 };
        let normal_w = draw_normal.clamp(MIN_PLAUSIBLE_W, MAX_PLAUSIBLE_W);
        let actual = apply_power_mode(self.save_drop_fraction, mode, normal_w);
        let rate = self.battery.rate_w(phase.plugged, apply_power_mode(self.save_drop_fraction, mode, load));
        self.battery.step(rate, self.interval_ms());

        GeneratedSample {
            sample: MetricsSample {
                timestamp: at,
                cpu,
                brightness: self.brightness,
                batt_rate: rate,
                charging,
                batt_remaining: remaining,
                mem,
                disk_req,
                disk_kb,
                net_kb,
                real_power: Some(actual),
            },
            normal_w,
            plugged: phase.plugged,
        }
    }

    /// Draws a random phase, for training logs.
    pub fn random_phase(&mut self) -> WorkloadPhase {
        let heavy = self.rng.random_bool(0.3);
        WorkloadPhase {
            duration_s: self.rng.random_range(300..1800),
            cpu: if heavy { self.rng.random_range(50.0..95.0) } else { self.rng.random_range(2.0..40.0) },
            mem: self.rng.random_range(20.0..85.0),
            net_kb: self.rng.random_range(0.0..400.0),
            disk_req: self.rng.random_range(0.0..40.0),
            plugged: self.rng.random_bool(0.6),
        }
    }

    /// Resets battery and brightness to random values, for training logs.
    pub fn shuffle_state(&mut self) {
        self.brightness = self.rng.random_range(20.0..100.0);
        self.battery.remaining_pct = if self.rng.random_bool(0.3) {
            100.0
        } else {
            self.rng.random_range(15.0..95.0)
        };
    }
}

/// Longest run of samples drawn under one training phase.
const TRAINING_SEGMENT: Millis = 120;

/// A synthetic metrics log with meter readings, generated in `mode` under
/// random phases. Used to train and test the power models.
pub fn synthetic_training_log(os: Os, mode: PowerMode, save_drop_fraction: f64, n: usize, seed: u64) -> Vec<MetricsSample> {
    let mut g = MetricsGenerator::new(os, save_drop_fraction, Battery::new(50.0, 60.0), 60.0, seed);
    let dt = g.interval_ms();
    let mut out = Vec::with_capacity(n);
    let mut t: Millis = 1_700_000_000_000;
    while out.len() < n {
        g.shuffle_state();
        let phase = g.random_phase();
        // short segments, so even small logs cover many battery and
        // brightness states
        let steps = (phase.duration_s as Millis * SECOND_MS / dt).clamp(1, TRAINING_SEGMENT) as usize;
        for _ in 0..steps.min(n - out.len()) {
            out.push(g.next(t, &phase, mode).sample);
            t += dt;
        }
    }
    out
}
