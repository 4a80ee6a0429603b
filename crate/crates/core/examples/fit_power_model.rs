//! Fits the Windows normal-mode model on a synthetic metrics log and prints
//! the hold-out scores and the coefficients in raw units.
//!
//! cargo run --example fit_power_model

use laptop_dr::agent::{default_save_drop, synthetic_training_log};
use laptop_dr::power_model::{fit_pipeline, EvalReport, FeatureSpec, Os, PowerMode, TRAIN_FRACTION};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let (os, mode) = (Os::Windows, PowerMode::Normal);
    let log = synthetic_training_log(os, mode, default_save_drop(os), 5000, 42);
    let out = fit_pipeline(log, &FeatureSpec::builtin(os, mode), TRAIN_FRACTION, 42)?;

    println!("{}", EvalReport::table_header());
    println!("{}", out.report.table_row(os.as_str(), mode.as_str()));
    println!("trained on {} samples, {} outliers removed", out.n_train, out.outliers_removed);

    let (intercept, coefs) = out.model.raw_coefficients();
    println!("\nintercept {intercept:>10.4}");
    for (term, c) in out.model.spec.terms().iter().zip(coefs) {
        println!("{:<22} {c:>10.5}", term.to_string());
    }
    Ok(())
}
