//! Sweeps the worker count for a fixed input size and marks the optimum.
//!
//! ```bash
//! cargo run -p faaslab --example optimizer_sweep -- 3.5e9
//! ```

use faaslab::perfmodel::{encode_latency_model, optimal_worker_count, shuffle_latency_model, ProfileBundle};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let s: f64 = std::env::args().nth(1).map(|v| v.parse()).transpose()?.unwrap_or(3.5e9);
    let b = ProfileBundle::calibrated();
    let (n_in, ratio, w_max) = (8, 10.0, 64);
    let best = optimal_worker_count(s, n_in, ratio, &b.store, &b.compute, w_max)?;
    println!("{:>4} {:>10} {:>10} {:>10}", "w", "sort", "encode", "total");
    for w in (1..=w_max).filter(|w| w.is_power_of_two() || *w == best) {
        let sort = shuffle_latency_model(s, w, n_in, &b.store, &b.compute)?.total;
        let enc = encode_latency_model(s, w, ratio, &b.store, &b.compute)?.total;
        let mark = if w == best { "  <- optimum" } else { "" };
        println!("{w:>4} {sort:>10.2} {enc:>10.2} {:>10.2}{mark}", sort + enc);
    }
    Ok(())
}
