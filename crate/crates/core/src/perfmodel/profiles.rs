use serde::{Deserialize, Serialize};

use crate::blobstore::StoreProfile;

pub const CALIBRATED_V1_NAME: &str = "calibrated-v1";
/// The committed default profile (`profiles/calibrated-v1.json`).
pub const CALIBRATED_V1: &str = include_str!("../../profiles/calibrated-v1.json");

/// Function and VM performance parameters. Rates are bytes/s, times are
/// seconds, memory and volume sizes are GB.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComputeProfile {
    /// Cold start charged once per stage wave.
    pub fn_startup: f64,
    pub fn_mem_gb: f64,
    pub fn_sort_rate: f64,
    pub fn_encode_rate: f64,
    pub vm_provision: f64,
    pub vm_bandwidth: f64,
    pub vm_sort_rate: f64,
    /// VM memory available to the in-memory sort.
    #[serde(default = "default_vm_mem_gb")]
    pub vm_mem_gb: f64,
    /// Size of the VM's attached volume, billed per GB-second.
    #[serde(default)]
    pub vm_volume_gb: f64,
}

fn default_vm_mem_gb() -> f64 {
    32.0
}

impl ComputeProfile {
    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        let positive = [
            ("fn_mem_gb", self.fn_mem_gb),
            ("fn_sort_rate", self.fn_sort_rate),
            ("fn_encode_rate", self.fn_encode_rate),
            ("vm_bandwidth", self.vm_bandwidth),
            ("vm_sort_rate", self.vm_sort_rate),
            ("vm_mem_gb", self.vm_mem_gb),
        ];
        for (name, value) in positive {
            if !(value > 0.0) {
                v.push(format!("compute.{name} must be > 0, got {value}"));
            }
        }
        for (name, value) in [
            ("fn_startup", self.fn_startup),
            ("vm_provision", self.vm_provision),
            ("vm_volume_gb", self.vm_volume_gb),
        ] {
            if !(value >= 0.0 && value.is_finite()) {
                v.push(format!("compute.{name} must be finite and >= 0, got {value}"));
            }
        }
        v
    }

    /// Function memory budget in bytes.
    pub fn fn_mem_bytes(&self) -> u64 {
        (self.fn_mem_gb * 1e9) as u64
    }

    pub fn vm_mem_bytes(&self) -> u64 {
        (self.vm_mem_gb * 1e9) as u64
    }
}

/// Unit prices in dollars.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriceSheet {
    pub price_gb_s: f64,
    pub price_invocation: f64,
    pub price_put: f64,
    pub price_get: f64,
    pub price_vm_s: f64,
    pub price_vol_gb_s: f64,
}

impl PriceSheet {
    pub fn free() -> Self {
        PriceSheet {
            price_gb_s: 0.0,
            price_invocation: 0.0,
            price_put: 0.0,
            price_get: 0.0,
            price_vm_s: 0.0,
            price_vol_gb_s: 0.0,
        }
    }

    pub fn violations(&self) -> Vec<String> {
        [
            ("price_gb_s", self.price_gb_s),
            ("price_invocation", self.price_invocation),
            ("price_put", self.price_put),
            ("price_get", self.price_get),
            ("price_vm_s", self.price_vm_s),
            ("price_vol_gb_s", self.price_vol_gb_s),
        ]
        .into_iter()
        .filter(|(_, v)| !(*v >= 0.0 && v.is_finite()))
        .map(|(n, v)| format!("prices.{n} must be finite and >= 0, got {v}"))
        .collect()
    }
}

/// Store, compute and price parameters that travel together.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProfileBundle {
    pub store: StoreProfile,
    pub compute: ComputeProfile,
    pub prices: PriceSheet,
}

impl ProfileBundle {
    pub fn calibrated() -> Self {
        serde_json::from_str(CALIBRATED_V1).expect("committed calibrated profile parses")
    }

    pub fn violations(&self) -> Vec<String> {
        let mut v = self.store.violations();
        v.extend(self.compute.violations());
        v.extend(self.prices.violations());
        v
    }

    /// Scales every bandwidth and processing rate by `factor`. Latencies,
    /// the request cap, startup times and prices are unchanged, so a
    /// dataset `factor` times smaller keeps the same phase durations.
    pub fn scale_rates(&self, factor: f64) -> Self {
        let mut out = self.clone();
        out.store = self.store.scale_bandwidth(factor);
        out.compute.fn_sort_rate *= factor;
        out.compute.fn_encode_rate *= factor;
        out.compute.vm_bandwidth *= factor;
        out.compute.vm_sort_rate *= factor;
        out
    }
}
