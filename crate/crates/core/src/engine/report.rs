use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::blobstore::StoreMetrics;
use crate::perfmodel::{
    compute_cost, serverless_sort_waves, ComputeProfile, CostBreakdown, CostInputs, Exchange, FnWave,
    LatencyBreakdown, PriceSheet,
};
use crate::workflow::StageKind;

pub const REPORT_FORMAT: &str = "faaslab-run-report/1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Real bytes through the store, timing from trace replay.
    Emulated,
    /// Timing and counts from the analytic model only.
    Modeled,
}

impl std::str::FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "emulate" | "emulated" => Ok(Mode::Emulated),
            "model" | "modeled" => Ok(Mode::Modeled),
            other => Err(format!("unknown mode {other:?} (expected emulate or model)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StageReport {
    pub id: String,
    pub kind: StageKind,
    pub workers: u32,
    pub latency: LatencyBreakdown,
    /// Store counter deltas over the stage.
    pub requests: StoreMetrics,
    pub fn_waves: Vec<FnWave>,
    pub vm_seconds: f64,
    pub input_bytes: u64,
    pub output_bytes: u64,
    /// Output objects with sizes; empty in modeled mode.
    pub outputs: Vec<(String, u64)>,
    /// Largest input chunk a task sorted in memory at once.
    pub peak_chunk_bytes: u64,
    /// True if the VM fell back to an on-disk merge.
    pub spilled: bool,
    /// Host time spent executing the stage.
    pub wall_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunReport {
    pub format: String,
    pub workflow: String,
    pub mode: Mode,
    pub exchange: Exchange,
    pub seed: u64,
    pub parallelism: u32,
    pub parallelism_auto: bool,
    pub input_bytes: u64,
    pub input_objects: u32,
    pub stages: Vec<StageReport>,
    pub end_to_end_s: f64,
    pub cost: CostBreakdown,
    /// Store counter differences across the whole run.
    pub store_metrics: StoreMetrics,
}

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("report JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("unsupported report format {0:?}")]
    Format(String),
}

/// Function waves and VM seconds billed for a stage with the given phase
/// durations.
pub fn stage_billing(kind: StageKind, exchange: Exchange, latency: &LatencyBreakdown, workers: u32) -> (Vec<FnWave>, f64) {
    match (kind, exchange) {
        (StageKind::SortExchange, Exchange::Serverless) => (serverless_sort_waves(latency, workers), 0.0),
        (StageKind::SortExchange, Exchange::Vm) => (Vec::new(), latency.total),
        (StageKind::Encode, _) => (
            vec![FnWave {
                workers,
                busy_s: latency.busy(),
            }],
            0.0,
        ),
    }
}

/// Billing inputs over stages; the VM volume is billed while the VM runs.
pub fn billing_inputs<'a>(
    stages: impl IntoIterator<Item = (&'a [FnWave], f64, &'a StoreMetrics)>,
    compute: &ComputeProfile,
) -> CostInputs {
    let mut inputs = CostInputs::default();
    for (waves, vm_seconds, requests) in stages {
        inputs.fn_waves.extend_from_slice(waves);
        inputs.vm_seconds += vm_seconds;
        inputs.gets += requests.get_count;
        inputs.puts += requests.put_count;
    }
    if inputs.vm_seconds > 0.0 {
        inputs.vol_gb = compute.vm_volume_gb;
    }
    inputs
}

pub(crate) fn sum_stage_totals<'a>(latencies: impl IntoIterator<Item = &'a LatencyBreakdown>) -> f64 {
    latencies.into_iter().fold(0.0, |acc, l| acc + l.total)
}

impl RunReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, ReportError> {
        let report: RunReport = serde_json::from_str(text)?;
        if report.format != REPORT_FORMAT {
            return Err(ReportError::Format(report.format));
        }
        Ok(report)
    }

    pub fn stage(&self, id: &str) -> Option<&StageReport> {
        self.stages.iter().find(|s| s.id == id)
    }

    /// Recomputes the cost from the per-stage billing records.
    pub fn recompute_cost(&self, prices: &PriceSheet, compute: &ComputeProfile) -> CostBreakdown {
        let inputs = billing_inputs(
            self.stages.iter().map(|s| (s.fn_waves.as_slice(), s.vm_seconds, &s.requests)),
            compute,
        );
        compute_cost(&inputs, prices, compute)
    }

    /// Lists broken accounting identities; empty when the report is
    /// self-consistent.
    pub fn conservation_violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        let summed = self
            .stages
            .iter()
            .fold(StoreMetrics::default(), |acc, s| acc.add(&s.requests));
        if summed != self.store_metrics {
            v.push(format!(
                "stage request deltas {summed:?} differ from store counters {:?}",
                self.store_metrics
            ));
        }
        if self.cost.component_sum() != self.cost.total {
            v.push(format!(
                "cost components sum to {} but total is {}",
                self.cost.component_sum(),
                self.cost.total
            ));
        }
        let e2e = sum_stage_totals(self.stages.iter().map(|s| &s.latency));
        if e2e != self.end_to_end_s {
            v.push(format!("stage totals sum to {e2e} but end_to_end_s is {}", self.end_to_end_s));
        }
        for s in &self.stages {
            if s.latency.phase_sum() != s.latency.total {
                v.push(format!("stage {}: phases sum to {} but total is {}", s.id, s.latency.phase_sum(), s.latency.total));
            }
        }
        v
    }
}
