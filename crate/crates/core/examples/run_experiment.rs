//! The three-laptop office scenario under a virtual clock: five curtailment
//! events near a turbine, with estimated and measured reductions.
//!
//! cargo run --release --example run_experiment [seed]

use laptop_dr::experiment::{render_table, run_experiment, Scenario};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let seed = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(7);
    let out = run_experiment(&Scenario::three_laptops(seed))?;
    for m in &out.report.models {
        println!(
            "{:<8} {:<6} adj R² {:.3}  MAPE {:.3}",
            m.os.as_str(),
            m.mode.as_str(),
            m.report.adj_r2,
            m.report.mape
        );
    }
    println!();
    print!("{}", render_table(&out.report));
    for e in &out.report.events {
        println!(
            "{}: {} participants, farthest {:.0} m from the turbine",
            e.event_id,
            e.participants.len(),
            e.max_distance_m.unwrap_or(f64::NAN)
        );
    }
    Ok(())
}
