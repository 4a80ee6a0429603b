//! Fixtures shared by the integration tests.

#![allow(dead_code)]

use std::sync::{Arc, OnceLock};
use std::time::{Duration, Instant};

use laptop_dr::agent::{default_save_drop, synthetic_training_log};
use laptop_dr::bus::BusHandle;
use laptop_dr::experiment::ScenarioAgent;
use laptop_dr::geo::{GeoFix, LatLon};
use laptop_dr::messages::topics;
use laptop_dr::power_model::{fit_pipeline, FeatureSpec, Os, PowerMode, PowerModel, TRAIN_FRACTION};

pub const TURBINE: LatLon = LatLon { lat: 48.2620, lon: 11.6680 };

/// The four models, trained once per test binary.
pub fn models() -> &'static [PowerModel] {
    static MODELS: OnceLock<Vec<PowerModel>> = OnceLock::new();
    MODELS.get_or_init(|| {
        let mut out = Vec::new();
        for os in Os::ALL {
            for mode in PowerMode::ALL {
                let log = synthetic_training_log(os, mode, default_save_drop(os), 3000, 17);
                out.push(fit_pipeline(log, &FeatureSpec::builtin(os, mode), TRAIN_FRACTION, 17).unwrap().model);
            }
        }
        out
    })
}

pub fn publish_models(bus: &dyn BusHandle) {
    for m in models() {
        bus.publish(&topics::model(m.spec.os, m.spec.mode), serde_json::to_value(m).unwrap())
            .unwrap();
    }
}

/// A laptop that never leaves the office next to [`TURBINE`], whatever the
/// hour.
pub fn office_agent(i: usize, os: Os) -> ScenarioAgent {
    let fix = GeoFix::new(TURBINE.offset_m(20.0 * i as f64, -15.0 * i as f64), 10.0, "85748");
    let mut a = laptop_dr::experiment::Scenario::three_laptops(0).agents.remove(0);
    a.agent_id = format!("laptop-{i:02}");
    a.os = os;
    a.home = fix.clone();
    a.work = fix;
    a
}

/// Polls `f` until it yields a value or `limit` passes.
pub fn wait_for<T>(limit: Duration, mut f: impl FnMut() -> Option<T>) -> Option<T> {
    let until = Instant::now() + limit;
    loop {
        if let Some(v) = f() {
            return Some(v);
        }
        if Instant::now() >= until {
            return None;
        }
        std::thread::sleep(Duration::from_millis(20));
    }
}

pub fn arc_bus<B: BusHandle + 'static>(b: B) -> Arc<dyn BusHandle> {
    Arc::new(b)
}
