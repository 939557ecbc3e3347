//! Fits the default profile against the reference latency/cost figures and
//! writes it as JSON.
//!
//! ```bash
//! cargo run -p faaslab --example calibrate -- crates/core/profiles/calibrated-v1.json
//! ```

use faaslab::perfmodel::{calibrate, estimate_pipeline, CalibrationTargets, Exchange, ProfileBundle};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let targets = CalibrationTargets::reference();
    let fitted = calibrate(&ProfileBundle::calibration_priors(), &targets)?;

    for exchange in [Exchange::Serverless, Exchange::Vm] {
        let est = estimate_pipeline(exchange, targets.bytes, targets.workers, targets.inputs, targets.ratio, &fitted)?;
        eprintln!(
            "{:<10} {:>8.2} s  ${:.5}",
            exchange.label(),
            est.end_to_end_s,
            est.cost.total
        );
    }

    let json = serde_json::to_string_pretty(&fitted)? + "\n";
    match std::env::args().nth(1) {
        Some(path) => std::fs::write(&path, json)?,
        None => print!("{json}"),
    }
    Ok(())
}
