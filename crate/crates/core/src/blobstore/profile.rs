use std::path::PathBuf;

use serde::{Deserialize, Serialize};

/// Traffic-shaping parameters of the emulated object store. Rates are in
/// bytes/s or requests/s, latency in seconds. Infinite rates serialize as
/// `null`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StoreProfile {
    /// Fixed latency added to every request (L).
    pub req_latency: f64,
    /// Bandwidth of a single connection (b).
    #[serde(with = "unbounded")]
    pub conn_bandwidth: f64,
    /// Bandwidth shared by all connections (A).
    #[serde(with = "unbounded")]
    pub aggregate_bandwidth: f64,
    /// Requests admitted per second across all connections (R).
    #[serde(with = "unbounded")]
    pub ops_rate_cap: f64,
    #[serde(default)]
    pub backing: Backing,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum Backing {
    #[default]
    InMemory,
    OnDisk {
        root: PathBuf,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        capacity_bytes: Option<u64>,
    },
}

impl StoreProfile {
    /// A store with no latency and no rate limits.
    pub fn unshaped() -> Self {
        StoreProfile {
            req_latency: 0.0,
            conn_bandwidth: f64::INFINITY,
            aggregate_bandwidth: f64::INFINITY,
            ops_rate_cap: f64::INFINITY,
            backing: Backing::InMemory,
        }
    }

    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        if !(self.req_latency >= 0.0 && self.req_latency.is_finite()) {
            v.push(format!("store.req_latency must be finite and >= 0, got {}", self.req_latency));
        }
        if !(self.conn_bandwidth > 0.0) {
            v.push(format!("store.conn_bandwidth must be > 0, got {}", self.conn_bandwidth));
        }
        if !(self.aggregate_bandwidth >= self.conn_bandwidth) {
            v.push(format!(
                "store.aggregate_bandwidth ({}) must be >= conn_bandwidth ({})",
                self.aggregate_bandwidth, self.conn_bandwidth
            ));
        }
        if !(self.ops_rate_cap > 0.0) {
            v.push(format!("store.ops_rate_cap must be > 0, got {}", self.ops_rate_cap));
        }
        v
    }

    /// Per-connection throughput when `w` connections stream concurrently:
    /// `min(b, A / w)`.
    pub fn effective_bandwidth(&self, w: u32) -> f64 {
        self.conn_bandwidth.min(self.aggregate_bandwidth / w.max(1) as f64)
    }

    /// Multiplies both bandwidths by `factor`, leaving latency and the
    /// request cap alone.
    pub fn scale_bandwidth(&self, factor: f64) -> Self {
        StoreProfile {
            conn_bandwidth: self.conn_bandwidth * factor,
            aggregate_bandwidth: self.aggregate_bandwidth * factor,
            ..self.clone()
        }
    }
}

/// Serde adapter mapping `f64::INFINITY` to JSON `null`.
pub(crate) mod unbounded {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_infinite() && *v > 0.0 {
            s.serialize_none()
        } else {
            s.serialize_f64(*v)
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
    }
}
