//! Wall-clock shaping: eight threads read through a shared aggregate cap,
//! then the same requests are replayed in virtual time.
//!
//! ```bash
//! cargo run --release -p faaslab --example shaped_store
//! ```

use std::time::Instant;

use faaslab::blobstore::{simulate_phase, BlobStore, Shaping, StoreProfile};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let profile = StoreProfile {
        req_latency: 0.01,
        conn_bandwidth: 16e6,
        aggregate_bandwidth: 64e6,
        ..StoreProfile::unshaped()
    };
    let store = BlobStore::open("shaped", profile.clone(), Shaping::WallClock)?;
    let seed = BlobStore::in_memory("shaped");
    let obj = vec![0u8; 4_000_000];
    for i in 0..16 {
        store.put_object(&format!("o/{i}"), &obj)?;
        seed.put_object(&format!("o/{i}"), &obj)?;
    }

    let t = Instant::now();
    let traces: Vec<_> = std::thread::scope(|s| {
        let handles: Vec<_> = (0..8)
            .map(|th| {
                let store = store.clone();
                s.spawn(move || {
                    let mut conn = store.connect();
                    for i in (th..16).step_by(8) {
                        conn.get_object(&format!("o/{i}"), None).unwrap();
                    }
                    conn.take_trace()
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().unwrap()).collect()
    });
    let wall = t.elapsed().as_secs_f64();
    let replay = simulate_phase(&profile, &traces);
    println!("64 MB over 8 connections, A = 64 MB/s");
    println!("wall clock   {wall:.2} s");
    println!("virtual      {:.2} s", replay.makespan);
    Ok(())
}
