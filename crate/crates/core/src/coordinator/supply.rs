//! Renewable output traces and drop detection.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::event::{EventRequest, DEFAULT_RADIUS_M};
use super::CoordinatorError;
use crate::clock::{Millis, MINUTE_MS};
use crate::geo::LatLon;

/// Length of the trailing window whose maximum is the drop reference.
pub const REFERENCE_WINDOW_MS: Millis = 5 * MINUTE_MS;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SupplyPoint {
    pub t: Millis,
    pub output_w: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupplyTrace {
    pub points: Vec<SupplyPoint>,
    pub threshold_w: f64,
}

impl SupplyTrace {
    pub fn validate(&self) -> Result<(), CoordinatorError> {
        let bad = |m: String| Err(CoordinatorError::InvalidRequest(m));
        if !(self.threshold_w >= 0.0 && self.threshold_w.is_finite()) {
            return bad(format!("threshold_w {} must be non-negative", self.threshold_w));
        }
        for (i, p) in self.points.iter().enumerate() {
            if !(p.output_w >= 0.0 && p.output_w.is_finite()) {
                return bad(format!("point {i}: output {} must be non-negative", p.output_w));
            }
            if i > 0 && p.t <= self.points[i - 1].t {
                return bad(format!("point {i}: timestamps must increase"));
            }
        }
        Ok(())
    }
}

/// How detected drops become DR requests.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupplyPolicy {
    pub turbine: LatLon,
    pub duration_min: u32,
    #[serde(default = "default_radius")]
    pub radius_m: f64,
}

fn default_radius() -> f64 {
    DEFAULT_RADIUS_M
}

/// A request emitted by the monitor at trace time `at`.
#[derive(Debug, Clone, PartialEq)]
pub struct Emitted {
    pub at: Millis,
    pub request: EventRequest,
}

/// Streaming drop detector. The reference is the maximum output over the
/// trailing five minutes; after a request the window restarts at the point
/// that triggered it, so one drop yields one request.
#[derive(Debug, Clone)]
pub struct SupplyMonitor {
    threshold_w: f64,
    policy: SupplyPolicy,
    window: VecDeque<SupplyPoint>,
}

impl SupplyMonitor {
    pub fn new(threshold_w: f64, policy: SupplyPolicy) -> Self {
        Self {
            threshold_w,
            policy,
            window: VecDeque::new(),
        }
    }

    pub fn observe(&mut self, p: SupplyPoint) -> Option<Emitted> {
        while self.window.front().is_some_and(|q| p.t - q.t > REFERENCE_WINDOW_MS) {
            self.window.pop_front();
        }
        let reference = self.window.iter().map(|q| q.output_w).fold(f64::NEG_INFINITY, f64::max);
        let drop = reference - p.output_w;
        if drop > self.threshold_w {
            self.window.clear();
            self.window.push_back(p);
            return Some(Emitted {
                at: p.t,
                request: EventRequest {
                    radius_m: self.policy.radius_m,
                    ..EventRequest::immediate(self.policy.turbine, drop, self.policy.duration_min)
                },
            });
        }
        self.window.push_back(p);
        None
    }
}

/// Runs a whole trace through a fresh monitor.
pub fn monitor_supply(trace: &SupplyTrace, policy: &SupplyPolicy) -> Result<Vec<Emitted>, CoordinatorError> {
    trace.validate()?;
    let mut m = SupplyMonitor::new(trace.threshold_w, policy.clone());
    Ok(trace.points.iter().filter_map(|p| m.observe(*p)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn policy() -> SupplyPolicy {
        SupplyPolicy {
            turbine: LatLon { lat: 48.15, lon: 11.5667 },
            duration_min: 10,
            radius_m: 1000.0,
        }
    }

    fn trace(outputs: &[f64], step_ms: Millis) -> SupplyTrace {
        SupplyTrace {
            points: outputs
                .iter()
                .enumerate()
                .map(|(i, w)| SupplyPoint {
                    t: i as Millis * step_ms,
                    output_w: *w,
                })
                .collect(),
            threshold_w: 50.0,
        }
    }

    /// Brute force: rescan the trailing window at every point.
    fn oracle(tr: &SupplyTrace) -> Vec<(Millis, f64)> {
        let mut out = Vec::new();
        let mut since = Millis::MIN;
        for (i, p) in tr.points.iter().enumerate() {
            let reference = tr.points[..i]
                .iter()
                .filter(|q| q.t >= since && p.t - q.t <= REFERENCE_WINDOW_MS)
                .map(|q| q.output_w)
                .fold(f64::NEG_INFINITY, f64::max);
            if reference - p.output_w > tr.threshold_w {
                out.push((p.t, reference - p.output_w));
                since = p.t;
            }
        }
        out
    }

    #[test]
    fn flat_trace_is_quiet() {
        assert!(monitor_supply(&trace(&[500.0; 30], MINUTE_MS), &policy()).unwrap().is_empty());
    }

    #[test]
    fn single_step() {
        let tr = trace(&[500.0, 500.0, 500.0, 430.0, 430.0, 430.0], MINUTE_MS);
        let got = monitor_supply(&tr, &policy()).unwrap();
        assert_eq!(got.len(), 1);
        assert_eq!(got[0].request.reduction_w, 70.0);
        assert_eq!(got[0].request.duration_min, 10);
        assert_eq!(got[0].at, 3 * MINUTE_MS);
        assert_eq!(oracle(&tr), vec![(3 * MINUTE_MS, 70.0)]);
    }

    #[test]
    fn two_separated_drops() {
        let mut w = vec![500.0; 5];
        w.extend([420.0; 10]);
        w.extend([330.0; 5]);
        let tr = trace(&w, MINUTE_MS);
        let got: Vec<(Millis, f64)> = monitor_supply(&tr, &policy())
            .unwrap()
            .iter()
            .map(|e| (e.at, e.request.reduction_w))
            .collect();
        assert_eq!(got, vec![(5 * MINUTE_MS, 80.0), (15 * MINUTE_MS, 90.0)]);
        assert_eq!(got, oracle(&tr));
    }

    #[test]
    fn slow_decline_outside_window_is_ignored() {
        // 10 W per minute never exceeds 50 W within five minutes
        let w: Vec<f64> = (0..40).map(|i| 500.0 - 9.0 * i as f64).collect();
        let tr = trace(&w, MINUTE_MS);
        assert!(monitor_supply(&tr, &policy()).unwrap().is_empty());
        assert!(oracle(&tr).is_empty());
    }

    #[test]
    fn matches_oracle_on_random_walks() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let mut w = 400.0;
            let outs: Vec<f64> = (0..120)
                .map(|_| {
                    w = (w + rng.random_range(-40.0..40.0f64)).max(0.0);
                    w
                })
                .collect();
            let tr = trace(&outs, 30_000);
            let got: Vec<(Millis, f64)> = monitor_supply(&tr, &policy())
                .unwrap()
                .iter()
                .map(|e| (e.at, e.request.reduction_w))
                .collect();
            assert_eq!(got, oracle(&tr));
        }
    }

    #[test]
    fn validation() {
        let mut tr = trace(&[1.0, 2.0], 1000);
        tr.points[1].t = 0;
        assert!(tr.validate().is_err());
        let tr = trace(&[1.0, -2.0], 1000);
        assert!(tr.validate().is_err());
    }
}
