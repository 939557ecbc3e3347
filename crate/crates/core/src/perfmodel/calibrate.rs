//! Fits the default profile so modeled 3.5 GB runs land on the
//! reference latency and cost figures.
//!
//! Most parameters are fixed priors (plausible public-cloud values, not
//! measurements). Four are solved for, one per target, each entering its
//! target affinely:
//!
//! | parameter              | target                    |
//! |------------------------|---------------------------|
//! | `1 / fn_encode_rate`   | serverless end-to-end (s) |
//! | `vm_provision`         | VM end-to-end (s)         |
//! | `price_gb_s`           | serverless cost ($)       |
//! | `price_vm_s`           | VM cost ($)               |

use crate::blobstore::{Backing, StoreProfile};

use super::profiles::{ComputeProfile, PriceSheet, ProfileBundle};
use super::{estimate_pipeline, DomainError, Exchange, DEFAULT_RATIO};

/// Input size of the reference dataset, in bytes.
pub const REFERENCE_BYTES: f64 = 3.5e9;
pub const REFERENCE_WORKERS: u32 = 8;

#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationTargets {
    pub serverless_latency: f64,
    pub vm_latency: f64,
    pub serverless_cost: f64,
    pub vm_cost: f64,
    pub bytes: f64,
    pub workers: u32,
    pub inputs: u32,
    pub ratio: f64,
}

impl CalibrationTargets {
    /// The reference measurements: 83.32 s / $0.008 serverless and
    /// 142.77 s / $0.010 VM-supported for 3.5 GB at 8 workers.
    pub fn reference() -> Self {
        CalibrationTargets {
            serverless_latency: 83.32,
            vm_latency: 142.77,
            serverless_cost: 0.008,
            vm_cost: 0.010,
            bytes: REFERENCE_BYTES,
            workers: REFERENCE_WORKERS,
            inputs: REFERENCE_WORKERS,
            ratio: DEFAULT_RATIO,
        }
    }
}

impl ProfileBundle {
    /// Starting point for [`calibrate`]. The four fitted fields hold
    /// placeholders that calibration overwrites.
    pub fn calibration_priors() -> Self {
        ProfileBundle {
            store: StoreProfile {
                req_latency: 0.05,
                conn_bandwidth: 80e6,
                aggregate_bandwidth: 10e9,
                ops_rate_cap: 3000.0,
                backing: Backing::InMemory,
            },
            compute: ComputeProfile {
                fn_startup: 2.0,
                fn_mem_gb: 2.0,
                fn_sort_rate: 20e6,
                fn_encode_rate: 20e6,
                vm_provision: 30.0,
                vm_bandwidth: 150e6,
                vm_sort_rate: 100e6,
                vm_mem_gb: 32.0,
                vm_volume_gb: 100.0,
            },
            prices: PriceSheet {
                price_gb_s: 0.000017,
                price_invocation: 0.0,
                price_put: 0.005 / 1000.0,
                price_get: 0.0004 / 1000.0,
                price_vm_s: 0.38 / 3600.0,
                price_vol_gb_s: 0.10 / (30.0 * 24.0 * 3600.0),
            },
        }
    }
}

/// Solves `f(u) = target` for a quantity `u` that `f` depends on affinely.
fn solve_affine(f: impl Fn(f64) -> Result<f64, DomainError>, target: f64) -> Result<f64, DomainError> {
    let f0 = f(0.0)?;
    let f1 = f(1.0)?;
    let slope = f1 - f0;
    if slope == 0.0 || !slope.is_finite() {
        return Err(DomainError("target does not depend on the fitted parameter".into()));
    }
    Ok((target - f0) / slope)
}

fn fitted(name: &str, value: f64) -> Result<f64, DomainError> {
    if value > 0.0 && value.is_finite() {
        Ok(value)
    } else {
        Err(DomainError(format!(
            "fitted {name} = {value} is not positive; the priors leave no room for the target"
        )))
    }
}

/// Returns `priors` with the four fitted parameters solved so the modeled
/// pipeline hits `targets` exactly (up to rounding).
pub fn calibrate(priors: &ProfileBundle, t: &CalibrationTargets) -> Result<ProfileBundle, DomainError> {
    let mut p = priors.clone();
    let run = |p: &ProfileBundle, exchange| estimate_pipeline(exchange, t.bytes, t.workers, t.inputs, t.ratio, p);

    let inv_rate = solve_affine(
        |u| {
            let mut q = p.clone();
            q.compute.fn_encode_rate = 1.0 / u;
            Ok(run(&q, Exchange::Serverless)?.end_to_end_s)
        },
        t.serverless_latency,
    )?;
    p.compute.fn_encode_rate = 1.0 / fitted("1/fn_encode_rate", inv_rate)?;

    let provision = solve_affine(
        |u| {
            let mut q = p.clone();
            q.compute.vm_provision = u;
            Ok(run(&q, Exchange::Vm)?.end_to_end_s)
        },
        t.vm_latency,
    )?;
    p.compute.vm_provision = fitted("vm_provision", provision)?;

    let gb_s = solve_affine(
        |u| {
            let mut q = p.clone();
            q.prices.price_gb_s = u;
            Ok(run(&q, Exchange::Serverless)?.cost.total)
        },
        t.serverless_cost,
    )?;
    p.prices.price_gb_s = fitted("price_gb_s", gb_s)?;

    let vm_s = solve_affine(
        |u| {
            let mut q = p.clone();
            q.prices.price_vm_s = u;
            Ok(run(&q, Exchange::Vm)?.cost.total)
        },
        t.vm_cost,
    )?;
    p.prices.price_vm_s = fitted("price_vm_s", vm_s)?;
    Ok(p)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn calibration_hits_targets() {
        let t = CalibrationTargets::reference();
        let p = calibrate(&ProfileBundle::calibration_priors(), &t).unwrap();
        let s = estimate_pipeline(Exchange::Serverless, t.bytes, t.workers, t.inputs, t.ratio, &p).unwrap();
        let v = estimate_pipeline(Exchange::Vm, t.bytes, t.workers, t.inputs, t.ratio, &p).unwrap();
        assert!((s.end_to_end_s - 83.32).abs() < 1e-6);
        assert!((v.end_to_end_s - 142.77).abs() < 1e-6);
        assert!((s.cost.total - 0.008).abs() < 1e-12);
        assert!((v.cost.total - 0.010).abs() < 1e-12);
    }

    #[test]
    fn committed_profile_matches_fit() {
        let fit = calibrate(&ProfileBundle::calibration_priors(), &CalibrationTargets::reference()).unwrap();
        let committed = ProfileBundle::calibrated();
        let close = |a: f64, b: f64| (a - b).abs() <= 1e-9 * a.abs().max(b.abs());
        assert!(close(fit.compute.fn_encode_rate, committed.compute.fn_encode_rate));
        assert!(close(fit.compute.vm_provision, committed.compute.vm_provision));
        assert!(close(fit.prices.price_gb_s, committed.prices.price_gb_s));
        assert!(close(fit.prices.price_vm_s, committed.prices.price_vm_s));
        assert_eq!(fit.store, committed.store);
    }

    #[test]
    fn impossible_target_is_reported() {
        let mut t = CalibrationTargets::reference();
        t.serverless_latency = 1.0;
        assert!(calibrate(&ProfileBundle::calibration_priors(), &t).is_err());
    }
}
