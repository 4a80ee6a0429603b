//! Replays a turbine output trace through the supply monitor and prints the
//! curtailment requests it would issue.
//!
//! cargo run --example supply_monitor

use laptop_dr::clock::SECOND_MS;
use laptop_dr::coordinator::{monitor_supply, SupplyPoint, SupplyPolicy, SupplyTrace, DEFAULT_RADIUS_M};
use laptop_dr::geo::LatLon;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    // ten seconds per point: steady, a sharp gust drop, recovery, a slow fade
    let mut output = vec![500.0; 30];
    output.extend([430.0; 30]);
    output.extend([520.0; 30]);
    output.extend((0..60).map(|i| 520.0 - i as f64));
    let trace = SupplyTrace {
        points: output
            .iter()
            .enumerate()
            .map(|(i, w)| SupplyPoint {
                t: i as i64 * 10 * SECOND_MS,
                output_w: *w,
            })
            .collect(),
        threshold_w: 50.0,
    };
    let policy = SupplyPolicy {
        turbine: LatLon::new(48.262, 11.668)?,
        duration_min: 10,
        radius_m: DEFAULT_RADIUS_M,
    };
    for e in monitor_supply(&trace, &policy)? {
        println!(
            "t={:>4}s  request {:.1} W for {} min within {} m",
            e.at / SECOND_MS,
            e.request.reduction_w,
            e.request.duration_min,
            e.request.radius_m
        );
    }
    Ok(())
}
