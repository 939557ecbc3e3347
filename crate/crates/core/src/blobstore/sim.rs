//! Virtual-clock replay of connection traces through the store's token
//! buckets.
//!
//! A phase is a set of connections starting together at t = 0. Each
//! connection runs its operations sequentially: a request takes one token
//! from the shared request bucket, waits the fixed request latency, then
//! streams its bytes through its own bucket and the shared aggregate
//! bucket. Events are processed in virtual-time order with ties broken by
//! connection index, so replays are bit-for-bit reproducible.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

use super::bucket::TokenBucket;
use super::profile::StoreProfile;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OpKind {
    Put,
    Get,
    List,
    Delete,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum TraceOp {
    Request { kind: OpKind, bytes: u64 },
    /// Local work or an injected delay, in seconds.
    Busy(f64),
}

/// The operations one connection performed, in order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ConnTrace {
    /// Bandwidth of this connection's own bucket.
    pub bandwidth: f64,
    pub ops: Vec<TraceOp>,
}

impl ConnTrace {
    pub fn new(bandwidth: f64) -> Self {
        ConnTrace {
            bandwidth,
            ops: Vec::new(),
        }
    }

    pub fn requests(&self) -> usize {
        self.ops.iter().filter(|op| matches!(op, TraceOp::Request { .. })).count()
    }

    pub fn bytes(&self) -> u64 {
        self.ops
            .iter()
            .map(|op| match op {
                TraceOp::Request { bytes, .. } => *bytes,
                TraceOp::Busy(_) => 0,
            })
            .sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhaseTiming {
    /// Virtual finish time of every connection.
    pub finish: Vec<f64>,
    /// Time at which the last connection finished.
    pub makespan: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Step {
    Issue,
    Transfer,
}

#[derive(Debug, Clone, Copy)]
struct Event {
    time: f64,
    conn: usize,
    step: Step,
}

impl PartialEq for Event {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Event {}

impl Ord for Event {
    // Reversed so the max-heap pops the earliest event.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .time
            .total_cmp(&self.time)
            .then(other.conn.cmp(&self.conn))
            .then((other.step == Step::Issue).cmp(&(self.step == Step::Issue)))
    }
}

impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Builds the shared request bucket for a profile. A burst of one lets an
/// isolated request through without waiting.
pub(crate) fn request_bucket(profile: &StoreProfile) -> TokenBucket {
    TokenBucket::new(profile.ops_rate_cap, 1.0)
}

pub(crate) fn aggregate_bucket(profile: &StoreProfile) -> TokenBucket {
    TokenBucket::new(profile.aggregate_bandwidth, 0.0)
}

/// Replays `traces` as one phase and returns per-connection finish times.
pub fn simulate_phase(profile: &StoreProfile, traces: &[ConnTrace]) -> PhaseTiming {
    let mut requests = request_bucket(profile);
    let mut aggregate = aggregate_bucket(profile);
    let mut conn_buckets: Vec<TokenBucket> = traces.iter().map(|t| TokenBucket::new(t.bandwidth, 0.0)).collect();
    let mut cursor = vec![0usize; traces.len()];
    let mut finish = vec![0.0f64; traces.len()];

    let mut heap = BinaryHeap::new();
    for conn in 0..traces.len() {
        heap.push(Event {
            time: 0.0,
            conn,
            step: Step::Issue,
        });
    }

    while let Some(ev) = heap.pop() {
        let ops = &traces[ev.conn].ops;
        match ev.step {
            Step::Issue => match ops.get(cursor[ev.conn]) {
                None => finish[ev.conn] = ev.time,
                Some(TraceOp::Busy(secs)) => {
                    cursor[ev.conn] += 1;
                    heap.push(Event {
                        time: ev.time + secs.max(0.0),
                        conn: ev.conn,
                        step: Step::Issue,
                    });
                }
                Some(TraceOp::Request { .. }) => {
                    let admitted = requests.reserve(ev.time, 1.0);
                    heap.push(Event {
                        time: admitted + profile.req_latency,
                        conn: ev.conn,
                        step: Step::Transfer,
                    });
                }
            },
            Step::Transfer => {
                let bytes = match ops[cursor[ev.conn]] {
                    TraceOp::Request { bytes, .. } => bytes as f64,
                    TraceOp::Busy(_) => unreachable!("transfer step on a busy op"),
                };
                cursor[ev.conn] += 1;
                let done = if bytes > 0.0 {
                    let own = conn_buckets[ev.conn].reserve(ev.time, bytes);
                    let shared = aggregate.reserve(ev.time, bytes);
                    own.max(shared)
                } else {
                    ev.time
                };
                heap.push(Event {
                    time: done,
                    conn: ev.conn,
                    step: Step::Issue,
                });
            }
        }
    }

    let makespan = finish.iter().copied().fold(0.0, f64::max);
    PhaseTiming { finish, makespan }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MB: f64 = 1e6;

    fn profile(l: f64, b: f64, a: f64, r: f64) -> StoreProfile {
        StoreProfile {
            req_latency: l,
            conn_bandwidth: b,
            aggregate_bandwidth: a,
            ops_rate_cap: r,
            ..StoreProfile::unshaped()
        }
    }

    fn get(bytes: u64) -> TraceOp {
        TraceOp::Request {
            kind: OpKind::Get,
            bytes,
        }
    }

    #[test]
    fn single_put_is_size_over_bandwidth() {
        let p = profile(0.0, 100.0 * MB, f64::INFINITY, f64::INFINITY);
        let mut t = ConnTrace::new(p.conn_bandwidth);
        t.ops.push(TraceOp::Request {
            kind: OpKind::Put,
            bytes: 100_000_000,
        });
        let timing = simulate_phase(&p, &[t]);
        assert!((timing.makespan - 1.0).abs() < 1e-12);
    }

    #[test]
    fn aggregate_cap_binds_concurrent_gets() {
        let p = profile(0.0, 32.0 * MB, 32.0 * MB, f64::INFINITY);
        let traces: Vec<ConnTrace> = (0..64)
            .map(|_| ConnTrace {
                bandwidth: p.conn_bandwidth,
                ops: vec![get(1_000_000)],
            })
            .collect();
        let timing = simulate_phase(&p, &traces);
        assert!(timing.makespan >= 2.0 - 1e-9, "{}", timing.makespan);
        assert!(timing.makespan <= 2.0 + 1e-9);
    }

    #[test]
    fn request_cap_spaces_admissions() {
        let p = profile(0.0, f64::INFINITY, f64::INFINITY, 10.0);
        let traces: Vec<ConnTrace> = (0..4)
            .map(|_| ConnTrace {
                bandwidth: f64::INFINITY,
                ops: vec![get(0); 5],
            })
            .collect();
        // 20 requests, first one free from the burst.
        let timing = simulate_phase(&p, &traces);
        assert!((timing.makespan - 1.9).abs() < 1e-9, "{}", timing.makespan);
    }

    #[test]
    fn latency_and_busy_accumulate_per_connection() {
        let p = profile(0.5, f64::INFINITY, f64::INFINITY, f64::INFINITY);
        let t = ConnTrace {
            bandwidth: f64::INFINITY,
            ops: vec![get(10), TraceOp::Busy(2.0), get(10)],
        };
        let timing = simulate_phase(&p, &[t.clone(), t]);
        assert_eq!(timing.finish, vec![3.0, 3.0]);
    }

    #[test]
    fn empty_phase() {
        let timing = simulate_phase(&StoreProfile::unshaped(), &[]);
        assert_eq!(timing.makespan, 0.0);
        let timing = simulate_phase(&StoreProfile::unshaped(), &[ConnTrace::new(1.0)]);
        assert_eq!(timing.finish, vec![0.0]);
    }

    #[test]
    fn replay_is_deterministic() {
        let p = profile(0.01, 5.0 * MB, 12.0 * MB, 300.0);
        let traces: Vec<ConnTrace> = (0..9)
            .map(|i| ConnTrace {
                bandwidth: p.conn_bandwidth,
                ops: (0..9).map(|j| get(10_000 * (i + j + 1))).collect(),
            })
            .collect();
        let a = simulate_phase(&p, &traces);
        let b = simulate_phase(&p, &traces);
        assert_eq!(a, b);
        let total_bytes: u64 = traces.iter().map(ConnTrace::bytes).sum();
        // Aggregate byte throughput never exceeds A.
        assert!(total_bytes as f64 / a.makespan <= p.aggregate_bandwidth * (1.0 + 1e-9));
        // Request throughput never exceeds R (plus the one-token burst).
        assert!((81.0 - 1.0) / a.makespan <= p.ops_rate_cap);
    }
}
