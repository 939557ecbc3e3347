//! Analytic latency and cost model for both exchange strategies, and the
//! worker-count optimizer built on it.
//!
//! All functions here are pure. Breakdown totals are summed in a fixed
//! phase order so `total` equals the component sum exactly.

mod calibrate;
mod pipeline;
mod profiles;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::blobstore::StoreProfile;

pub use calibrate::{calibrate, CalibrationTargets, REFERENCE_BYTES, REFERENCE_WORKERS};
pub use pipeline::{
    cost_inputs, estimate_encode_stage, estimate_pipeline, estimate_sort_stage, serverless_sort_waves, Exchange,
    PipelineEstimate, StageEstimate,
};
pub use profiles::{ComputeProfile, PriceSheet, ProfileBundle, CALIBRATED_V1, CALIBRATED_V1_NAME};

/// Compression ratio assumed for encode-stage output sizing when none is
/// configured.
pub const DEFAULT_RATIO: f64 = 10.0;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("model domain error: {0}")]
pub struct DomainError(pub String);

fn domain(msg: impl Into<String>) -> DomainError {
    DomainError(msg.into())
}

fn check_profiles(store: &StoreProfile, compute: &ComputeProfile) -> Result<(), DomainError> {
    let mut v = store.violations();
    v.extend(compute.violations());
    if v.is_empty() {
        Ok(())
    } else {
        Err(domain(v.join("; ")))
    }
}

fn check_bytes(s: f64) -> Result<(), DomainError> {
    if s > 0.0 && s.is_finite() {
        Ok(())
    } else {
        Err(domain(format!("data size must be finite and > 0, got {s}")))
    }
}

/// Seconds spent in each phase of a stage.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LatencyBreakdown {
    pub startup: f64,
    pub input_read: f64,
    pub sort_compute: f64,
    pub partition_write: f64,
    pub partition_read: f64,
    pub output_write: f64,
    pub encode: f64,
    pub total: f64,
}

pub const PHASES: [&str; 7] = [
    "startup",
    "input_read",
    "sort_compute",
    "partition_write",
    "partition_read",
    "output_write",
    "encode",
];

impl LatencyBreakdown {
    /// Builds a breakdown from phases in [`PHASES`] order.
    pub fn from_phases(p: [f64; 7]) -> Self {
        let mut b = LatencyBreakdown {
            startup: p[0],
            input_read: p[1],
            sort_compute: p[2],
            partition_write: p[3],
            partition_read: p[4],
            output_write: p[5],
            encode: p[6],
            total: 0.0,
        };
        b.total = b.phase_sum();
        b
    }

    pub fn phases(&self) -> [f64; 7] {
        [
            self.startup,
            self.input_read,
            self.sort_compute,
            self.partition_write,
            self.partition_read,
            self.output_write,
            self.encode,
        ]
    }

    pub fn phase_sum(&self) -> f64 {
        self.phases().iter().fold(0.0, |acc, p| acc + p)
    }

    pub fn startup_only(startup: f64) -> Self {
        Self::from_phases([startup, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0])
    }

    /// Busy time excluding startup.
    pub fn busy(&self) -> f64 {
        self.phases()[1..].iter().fold(0.0, |acc, p| acc + p)
    }
}

/// Sort stage through object storage with `w` functions reading `n_in`
/// input objects totalling `s` bytes.
///
/// With `e = min(b, A/w)`: every pass moves `s/w` bytes per worker at `e`;
/// the two all-to-all passes also pay `w` request latencies per worker or
/// the `w²/R` request-rate floor, whichever is larger.
pub fn shuffle_latency_model(
    s: f64,
    w: u32,
    n_in: u32,
    store: &StoreProfile,
    compute: &ComputeProfile,
) -> Result<LatencyBreakdown, DomainError> {
    check_bytes(s)?;
    if w == 0 || n_in == 0 {
        return Err(domain(format!("worker count ({w}) and input count ({n_in}) must be >= 1")));
    }
    check_profiles(store, compute)?;
    let l = store.req_latency;
    let wf = w as f64;
    let per = s / wf;
    let pass = per / store.effective_bandwidth(w);
    let reads_per_worker = n_in.div_ceil(w) as f64;
    let exchange = (pass + wf * l).max(wf * wf / store.ops_rate_cap);
    Ok(LatencyBreakdown::from_phases([
        compute.fn_startup,
        pass + reads_per_worker * l,
        per / compute.fn_sort_rate,
        exchange,
        exchange,
        pass + l,
        0.0,
    ]))
}

/// Sort stage gathered into one VM: read everything, sort in memory, write
/// `w_out` range partitions.
pub fn vm_exchange_latency_model(
    s: f64,
    n_in: u32,
    w_out: u32,
    store: &StoreProfile,
    compute: &ComputeProfile,
) -> Result<LatencyBreakdown, DomainError> {
    check_bytes(s)?;
    if n_in == 0 || w_out == 0 {
        return Err(domain(format!("input count ({n_in}) and output count ({w_out}) must be >= 1")));
    }
    check_profiles(store, compute)?;
    let bw = compute.vm_bandwidth.min(store.aggregate_bandwidth);
    let l = store.req_latency;
    Ok(LatencyBreakdown::from_phases([
        compute.vm_provision,
        s / bw + n_in as f64 * l,
        s / compute.vm_sort_rate,
        0.0,
        0.0,
        s / bw + w_out as f64 * l,
        0.0,
    ]))
}

/// Embarrassingly parallel encode stage over `w` sorted partitions.
/// Output objects are `ratio` times smaller than the input.
pub fn encode_latency_model(
    s: f64,
    w: u32,
    ratio: f64,
    store: &StoreProfile,
    compute: &ComputeProfile,
) -> Result<LatencyBreakdown, DomainError> {
    check_bytes(s)?;
    if w == 0 {
        return Err(domain("worker count must be >= 1"));
    }
    if !(ratio >= 1.0) {
        return Err(domain(format!("compression ratio must be >= 1, got {ratio}")));
    }
    check_profiles(store, compute)?;
    let e = store.effective_bandwidth(w);
    let per = s / w as f64;
    let l = store.req_latency;
    Ok(LatencyBreakdown::from_phases([
        compute.fn_startup,
        per / e + l,
        0.0,
        0.0,
        0.0,
        (per / ratio) / e + l,
        per / compute.fn_encode_rate,
    ]))
}

/// Worker count in `1..=w_max` minimizing modeled shuffle + encode
/// latency; the smallest `w` wins ties.
pub fn optimal_worker_count(
    s: f64,
    n_in: u32,
    ratio: f64,
    store: &StoreProfile,
    compute: &ComputeProfile,
    w_max: u32,
) -> Result<u32, DomainError> {
    if w_max == 0 {
        return Err(domain("w_max must be >= 1"));
    }
    let mut best = (1u32, f64::INFINITY);
    for w in 1..=w_max {
        let t = shuffle_latency_model(s, w, n_in, store, compute)?.total
            + encode_latency_model(s, w, ratio, store, compute)?.total;
        if t < best.1 {
            best = (w, t);
        }
    }
    Ok(best.0)
}

/// One wave of function invocations: `workers` functions each billed for
/// `busy_s` seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FnWave {
    pub workers: u32,
    pub busy_s: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CostInputs {
    pub fn_waves: Vec<FnWave>,
    pub puts: u64,
    pub gets: u64,
    pub vm_seconds: f64,
    pub vol_gb: f64,
}

/// Dollar cost by component.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct CostBreakdown {
    pub fn_compute: f64,
    pub storage_requests: f64,
    pub vm_time: f64,
    pub vm_volume: f64,
    pub invocations: f64,
    pub total: f64,
}

impl CostBreakdown {
    pub fn component_sum(&self) -> f64 {
        self.fn_compute + self.storage_requests + self.vm_time + self.vm_volume + self.invocations
    }
}

pub fn compute_cost(inputs: &CostInputs, prices: &PriceSheet, compute: &ComputeProfile) -> CostBreakdown {
    let fn_compute = inputs.fn_waves.iter().fold(0.0, |acc, wave| {
        acc + wave.workers as f64 * wave.busy_s * compute.fn_mem_gb * prices.price_gb_s
    });
    let calls: u64 = inputs.fn_waves.iter().map(|w| w.workers as u64).sum();
    let mut c = CostBreakdown {
        fn_compute,
        storage_requests: inputs.puts as f64 * prices.price_put + inputs.gets as f64 * prices.price_get,
        vm_time: inputs.vm_seconds * prices.price_vm_s,
        vm_volume: inputs.vol_gb * inputs.vm_seconds * prices.price_vol_gb_s,
        invocations: calls as f64 * prices.price_invocation,
        total: 0.0,
    };
    c.total = c.component_sum();
    c
}

#[cfg(test)]
mod tests {
    use super::*;

    fn open_store() -> StoreProfile {
        StoreProfile {
            req_latency: 0.0,
            conn_bandwidth: 50e6,
            ..StoreProfile::unshaped()
        }
    }

    fn compute() -> ComputeProfile {
        ProfileBundle::calibrated().compute
    }

    #[test]
    fn unshaped_closed_form() {
        let (s, w) = (4e9, 8);
        let c = compute();
        let b = shuffle_latency_model(s, w, 8, &open_store(), &c).unwrap();
        let expected = c.fn_startup + 4.0 * s / (w as f64 * 50e6) + s / (w as f64 * c.fn_sort_rate);
        assert!((b.total - expected).abs() <= 1e-9 * expected);
        assert_eq!(b.total, b.phase_sum());
    }

    #[test]
    fn single_worker_pays_one_request_floor() {
        let mut store = open_store();
        store.ops_rate_cap = 0.5;
        let b = shuffle_latency_model(1e6, 1, 1, &store, &compute()).unwrap();
        assert_eq!(b.partition_write, (1e6 / 50e6f64).max(2.0));
        assert_eq!(b.partition_write, 2.0);
    }

    #[test]
    fn vm_closed_forms() {
        let mut c = compute();
        c.vm_provision = 0.0;
        let store = StoreProfile {
            aggregate_bandwidth: c.vm_bandwidth,
            ..open_store()
        };
        let s = 1e9;
        let b = vm_exchange_latency_model(s, 4, 4, &store, &c).unwrap();
        assert_eq!(b.input_read, s / store.aggregate_bandwidth);
        assert_eq!(b.output_write, s / store.aggregate_bandwidth);
        let expected = 2.0 * s / c.vm_bandwidth + s / c.vm_sort_rate;
        assert!((b.total - expected).abs() <= 1e-12 * expected);
        assert_eq!(b.partition_read + b.partition_write, 0.0);
    }

    #[test]
    fn encode_limits() {
        let mut store = open_store();
        store.req_latency = 0.02;
        let c = compute();
        let b = encode_latency_model(1e9, 4, f64::INFINITY, &store, &c).unwrap();
        assert_eq!(b.output_write, 0.02);
        let one = encode_latency_model(1e9, 4, 10.0, &open_store(), &c).unwrap();
        let two = encode_latency_model(1e9, 8, 10.0, &open_store(), &c).unwrap();
        assert!((one.input_read - 2.0 * two.input_read).abs() < 1e-12);
    }

    #[test]
    fn domain_errors() {
        let c = compute();
        let s = open_store();
        assert!(shuffle_latency_model(0.0, 1, 1, &s, &c).is_err());
        assert!(shuffle_latency_model(1.0, 0, 1, &s, &c).is_err());
        assert!(shuffle_latency_model(1.0, 1, 0, &s, &c).is_err());
        assert!(vm_exchange_latency_model(-1.0, 1, 1, &s, &c).is_err());
        assert!(encode_latency_model(1.0, 1, 0.5, &s, &c).is_err());
        assert!(optimal_worker_count(1.0, 1, 10.0, &s, &c, 0).is_err());
        let mut bad = c.clone();
        bad.fn_sort_rate = 0.0;
        assert!(shuffle_latency_model(1.0, 1, 1, &s, &bad).is_err());
    }

    #[test]
    fn optimizer_limits() {
        let c = compute();
        let store = open_store();
        assert_eq!(optimal_worker_count(3.5e9, 8, 10.0, &store, &c, 64).unwrap(), 64);
        let request_bound = StoreProfile {
            ops_rate_cap: 1e-3,
            ..StoreProfile::unshaped()
        };
        assert_eq!(optimal_worker_count(3.5e9, 8, 10.0, &request_bound, &c, 64).unwrap(), 1);
    }

    #[test]
    fn cost_arithmetic() {
        let c = ComputeProfile {
            fn_mem_gb: 2.0,
            ..compute()
        };
        let prices = PriceSheet {
            price_gb_s: 0.000017,
            ..PriceSheet::free()
        };
        let inputs = CostInputs {
            fn_waves: vec![FnWave {
                workers: 8,
                busy_s: 30.0,
            }],
            ..Default::default()
        };
        let cost = compute_cost(&inputs, &prices, &c);
        assert!((cost.fn_compute - 0.00816).abs() < 1e-15);
        assert_eq!(cost.total, cost.fn_compute);

        let zero = compute_cost(
            &CostInputs {
                fn_waves: vec![FnWave { workers: 3, busy_s: 9.0 }],
                puts: 10,
                gets: 10,
                vm_seconds: 100.0,
                vol_gb: 5.0,
            },
            &PriceSheet::free(),
            &c,
        );
        assert_eq!(zero.total, 0.0);
    }
}
