//! Exhaustive subset search over a handful of candidate terms, ranked by
//! adjusted R² and by BIC.
//!
//! cargo run --example subset_search

use laptop_dr::agent::{default_save_drop, synthetic_training_log};
use laptop_dr::power_model::{best_subset_search, Os, PowerMode, Term};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let os = Os::Ubuntu;
    let log = synthetic_training_log(os, PowerMode::Normal, default_save_drop(os), 4000, 3);
    let candidates: Vec<Term> = ["cpu", "brightness", "mem", "net_kb", "disk_req", "charging", "cpu^2"]
        .iter()
        .map(|s| s.parse())
        .collect::<Result<_, _>>()?;
    let search = best_subset_search(&log, &candidates, 3)?;
    print!("{}", search.render());

    let best = search.all.iter().min_by(|a, b| a.bic.total_cmp(&b.bic)).expect("non-empty");
    let names: Vec<String> = best.terms.iter().map(ToString::to_string).collect();
    println!("\nlowest BIC overall: {} ({:.2})", names.join(" + "), best.bic);
    Ok(())
}
