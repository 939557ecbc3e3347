//! Runs the 64 MB desk workflow through the emulator, in memory, under
//! both exchange strategies.
//!
//! ```bash
//! cargo run --release -p faaslab --example desk_emulation
//! ```

use faaslab::blobstore::BlobStore;
use faaslab::cli::render_report;
use faaslab::engine::{run_workflow, Mode, RunOptions};
use faaslab::perfmodel::Exchange;
use faaslab::workflow::parse_workflow;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/examples/workflows/desk-64mb.json");
    let spec = parse_workflow(&std::fs::read_to_string(path)?)?;
    // One store, so the synthetic input is generated once and reused.
    let opts = RunOptions {
        store: Some(BlobStore::in_memory(&spec.input.bucket)),
        ..RunOptions::default()
    };
    for exchange in [Exchange::Serverless, Exchange::Vm] {
        let report = run_workflow(&spec.with_exchange(exchange), Mode::Emulated, 0, &opts)?;
        println!("== {}", exchange.label());
        print!("{}", render_report(&report));
        let wall: f64 = report.stages.iter().map(|s| s.wall_s).sum();
        println!("host time: {wall:.1} s\n");
    }
    Ok(())
}
