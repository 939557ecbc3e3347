//! Validates workflow files and lists every problem found.
//!
//! ```bash
//! cargo run -p faaslab --example validate_workflow -- crates/core/examples/workflows/*.json
//! ```

use faaslab::workflow::parse_workflow;

fn main() {
    let mut paths: Vec<String> = std::env::args().skip(1).collect();
    if paths.is_empty() {
        let dir = concat!(env!("CARGO_MANIFEST_DIR"), "/examples/workflows");
        paths = std::fs::read_dir(dir)
            .unwrap()
            .map(|e| e.unwrap().path().display().to_string())
            .collect();
        paths.sort();
    }
    let mut bad = 0;
    for p in &paths {
        let text = match std::fs::read_to_string(p) {
            Ok(t) => t,
            Err(e) => {
                println!("{p}: {e}");
                bad += 1;
                continue;
            }
        };
        match parse_workflow(&text) {
            Ok(spec) => println!("{p}: ok ({}, {} stages)", spec.name, spec.stages.len()),
            Err(e) => {
                bad += 1;
                println!("{p}: {e}");
            }
        }
    }
    std::process::exit(if bad > 0 { 1 } else { 0 });
}
