//! Modeled latency and cost of both exchange strategies at 3.5 GB.
//!
//! ```bash
//! cargo run -p faaslab --example reference_model
//! ```

use faaslab::cli::{render_compare, CompareRow};
use faaslab::engine::{run_workflow, Mode, RunOptions};
use faaslab::perfmodel::Exchange;
use faaslab::workflow::parse_workflow;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/examples/workflows/reference-3.5gb.json");
    let spec = parse_workflow(&std::fs::read_to_string(path)?)?;
    let mut rows = Vec::new();
    for exchange in [Exchange::Serverless, Exchange::Vm] {
        let report = run_workflow(&spec.with_exchange(exchange), Mode::Modeled, 0, &RunOptions::default())?;
        for st in &report.stages {
            println!("{:<10} {:<6} {:>8.2} s", exchange.label(), st.id, st.latency.total);
        }
        rows.push(CompareRow::from_report(&report));
    }
    println!();
    print!("{}", render_compare(&rows));
    Ok(())
}
