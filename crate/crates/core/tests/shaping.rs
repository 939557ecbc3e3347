//! Wall-clock shaping against real time, and replay bounds.

use std::sync::{Arc, Mutex};
use std::time::Instant;

use faaslab::blobstore::{simulate_phase, BlobStore, ConnTrace, OpKind, Shaping, StoreProfile, TraceOp};
use proptest::prelude::*;

fn shaped(profile: StoreProfile) -> BlobStore {
    BlobStore::open("shaped", profile, Shaping::WallClock).unwrap()
}

#[test]
fn single_stream_runs_at_connection_bandwidth() {
    let store = shaped(StoreProfile {
        conn_bandwidth: 100e6,
        ..StoreProfile::unshaped()
    });
    let payload = vec![7u8; 100_000_000];
    let t = Instant::now();
    store.put_object("big", &payload).unwrap();
    let secs = t.elapsed().as_secs_f64();
    assert!((0.9..=1.1).contains(&secs), "{secs}");
}

#[test]
fn aggregate_cap_binds_parallel_readers() {
    let store = shaped(StoreProfile {
        conn_bandwidth: 32e6,
        aggregate_bandwidth: 32e6,
        ..StoreProfile::unshaped()
    });
    let obj = vec![1u8; 1_000_000];
    for i in 0..64 {
        store.put_object(&format!("o/{i}"), &obj).unwrap();
    }
    let t = Instant::now();
    std::thread::scope(|s| {
        for th in 0..8 {
            let store = store.clone();
            s.spawn(move || {
                for i in (th..64).step_by(8) {
                    store.get_object(&format!("o/{i}"), None).unwrap();
                }
            });
        }
    });
    let secs = t.elapsed().as_secs_f64();
    assert!(secs >= 2.0 - 1e-3, "{secs}");
}

/// Completed requests and bytes over sliding one-second windows stay
/// within 10% of the caps, allowing for transfers already in flight when
/// a window opens.
#[test]
fn observed_throughput_respects_caps() {
    let rate = 400.0;
    let aggregate = 16e6;
    let obj_size = 200_000usize;
    let threads = 8;
    let store = BlobStore::open(
        "sound",
        StoreProfile {
            req_latency: 0.002,
            conn_bandwidth: 8e6,
            aggregate_bandwidth: aggregate,
            ops_rate_cap: rate,
            ..StoreProfile::unshaped()
        },
        Shaping::WallClock,
    )
    .unwrap();
    let t0 = Instant::now();
    let log = Arc::new(Mutex::new(Vec::<(f64, u64)>::new()));
    std::thread::scope(|s| {
        for th in 0..threads {
            let store = store.clone();
            let log = log.clone();
            s.spawn(move || {
                let mut conn = store.connect();
                let body = vec![th as u8; obj_size];
                for i in 0..60 {
                    let n = if i % 3 == 0 {
                        conn.put_object(&format!("t{th}/{i}"), &body).unwrap()
                    } else {
                        conn.list_prefix("none/").unwrap();
                        0
                    };
                    log.lock().unwrap().push((t0.elapsed().as_secs_f64(), n));
                }
            });
        }
    });
    let mut log = log.lock().unwrap().clone();
    log.sort_by(|a, b| a.0.total_cmp(&b.0));
    let end = log.last().unwrap().0;
    let total_bytes: u64 = log.iter().map(|e| e.1).sum();
    assert!(total_bytes as f64 / end <= aggregate * 1.1);
    assert!(log.len() as f64 / end <= rate * 1.1);

    let window = 1.0;
    let slack_bytes = (threads * obj_size) as f64;
    let mut start = 0.0;
    while start + window <= end {
        let inside = log.iter().filter(|e| e.0 >= start && e.0 < start + window);
        let (count, bytes) = inside.fold((0usize, 0u64), |(c, b), e| (c + 1, b + e.1));
        assert!(count as f64 <= rate * window * 1.1 + 1.0, "window {start}: {count} requests");
        assert!(bytes as f64 <= aggregate * window * 1.1 + slack_bytes, "window {start}: {bytes} bytes");
        start += 0.1;
    }
}

fn trace_strategy() -> impl Strategy<Value = Vec<ConnTrace>> {
    prop::collection::vec(
        (
            1e5f64..1e8,
            prop::collection::vec((0u64..2_000_000, any::<bool>()), 0..12),
        ),
        1..10,
    )
    .prop_map(|conns| {
        conns
            .into_iter()
            .map(|(bw, ops)| ConnTrace {
                bandwidth: bw,
                ops: ops
                    .into_iter()
                    .map(|(bytes, put)| TraceOp::Request {
                        kind: if put { OpKind::Put } else { OpKind::Get },
                        bytes,
                    })
                    .collect(),
            })
            .collect()
    })
}

proptest! {
    /// Replayed phases can never beat any of the caps.
    #[test]
    fn replay_respects_every_cap(
        traces in trace_strategy(),
        latency in 0.0f64..0.1,
        aggregate in 1e6f64..1e9,
        rate in 10.0f64..5000.0,
    ) {
        let profile = StoreProfile {
            req_latency: latency,
            conn_bandwidth: aggregate,
            aggregate_bandwidth: aggregate,
            ops_rate_cap: rate,
            ..StoreProfile::unshaped()
        };
        let timing = simulate_phase(&profile, &traces);
        let requests: usize = traces.iter().map(ConnTrace::requests).sum();
        let bytes: u64 = traces.iter().map(ConnTrace::bytes).sum();
        let eps = 1e-9 * (1.0 + timing.makespan);
        prop_assert!(timing.makespan + eps >= bytes as f64 / aggregate);
        if requests > 0 {
            prop_assert!(timing.makespan + eps >= (requests - 1) as f64 / rate + latency);
        }
        for (t, f) in traces.iter().zip(&timing.finish) {
            let own = t.bytes() as f64 / t.bandwidth + t.requests() as f64 * latency;
            prop_assert!(*f + eps >= own);
        }
    }
}
