//! Runs one simulated laptop for an hour of virtual time and prints the
//! profile slots it learned.
//!
//! cargo run --example agent_profiles

use laptop_dr::agent::{default_save_drop, synthetic_training_log, AgentNode};
use laptop_dr::bus::Envelope;
use laptop_dr::clock::{WeekTime, MINUTE_MS, SECOND_MS};
use laptop_dr::experiment::{Scenario, DEFAULT_START};
use laptop_dr::messages::topics;
use laptop_dr::power_model::{fit_pipeline, FeatureSpec, PowerMode, TRAIN_FRACTION};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let spec = Scenario::three_laptops(1).agents.remove(0);
    let os = spec.os;
    let mut node = AgentNode::new(spec.config(11), DEFAULT_START)?;
    for (seq, mode) in PowerMode::ALL.into_iter().enumerate() {
        let log = synthetic_training_log(os, mode, default_save_drop(os), 3000, 5);
        let model = fit_pipeline(log, &FeatureSpec::builtin(os, mode), TRAIN_FRACTION, 5)?.model;
        let env = Envelope {
            topic: topics::model(os, mode),
            seq: seq as u64 + 1,
            payload: serde_json::to_value(&model)?,
            published_at: DEFAULT_START,
        };
        node.handle(&env, DEFAULT_START);
    }

    let end = DEFAULT_START + 60 * MINUTE_MS;
    let mut t = DEFAULT_START;
    while t < end {
        node.tick(t);
        t += SECOND_MS;
    }
    let sent = node.take_outbox();
    println!("{} messages queued for the bus", sent.len());

    let profiles = node.profiles().ok_or("no models received")?;
    for minutes in [0, 15, 30, 45] {
        let at = DEFAULT_START + minutes * MINUTE_MS;
        let p = profiles.power.slot_at(at, profiles.utc_offset_min);
        let l = profiles.location.slot_at(at, profiles.utc_offset_min);
        let w = WeekTime::at(at, profiles.utc_offset_min);
        println!(
            "day {} {:02}:{:02}  normal {:>6.2} W  save {:>6.2} W  p_running {:.2}  at ({:.4}, {:.4})",
            w.weekday,
            w.minute_of_day / 60,
            w.minute_of_day % 60,
            p.mean_power_normal,
            p.mean_power_save,
            p.p_running,
            l.latitude,
            l.longitude
        );
    }
    Ok(())
}
