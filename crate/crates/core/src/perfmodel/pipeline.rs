use serde::{Deserialize, Serialize};

use crate::shuffle::{serverless_sort_requests, vm_sort_requests, RequestCounts};

use super::{
    compute_cost, encode_latency_model, shuffle_latency_model, vm_exchange_latency_model, CostBreakdown, CostInputs,
    DomainError, FnWave, LatencyBreakdown, ProfileBundle,
};

/// How the sort stage exchanges intermediate data.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Exchange {
    /// Functions shuffle all-to-all through object storage.
    Serverless,
    /// One VM gathers, sorts and scatters the data.
    Vm,
}

impl Exchange {
    pub fn label(self) -> &'static str {
        match self {
            Exchange::Serverless => "serverless",
            Exchange::Vm => "vm",
        }
    }
}

impl std::str::FromStr for Exchange {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "serverless" => Ok(Exchange::Serverless),
            "vm" => Ok(Exchange::Vm),
            other => Err(format!("unknown exchange {other:?} (expected serverless or vm)")),
        }
    }
}

/// Modeled latency, billing and request counts of one stage.
#[derive(Debug, Clone, PartialEq)]
pub struct StageEstimate {
    pub latency: LatencyBreakdown,
    pub fn_waves: Vec<FnWave>,
    pub vm_seconds: f64,
    pub requests: RequestCounts,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineEstimate {
    pub sort: StageEstimate,
    pub encode: StageEstimate,
    pub end_to_end_s: f64,
    pub cost: CostBreakdown,
}

/// Billing waves of a serverless sort stage: the map wave runs through
/// partition writes, the reduce wave reads partitions and writes outputs.
pub fn serverless_sort_waves(latency: &LatencyBreakdown, w: u32) -> Vec<FnWave> {
    vec![
        FnWave {
            workers: w,
            busy_s: latency.input_read + latency.sort_compute + latency.partition_write,
        },
        FnWave {
            workers: w,
            busy_s: latency.partition_read + latency.output_write,
        },
    ]
}

pub fn estimate_sort_stage(
    exchange: Exchange,
    s: f64,
    w: u32,
    n_in: u32,
    profiles: &ProfileBundle,
) -> Result<StageEstimate, DomainError> {
    Ok(match exchange {
        Exchange::Serverless => {
            let latency = shuffle_latency_model(s, w, n_in, &profiles.store, &profiles.compute)?;
            StageEstimate {
                fn_waves: serverless_sort_waves(&latency, w),
                latency,
                vm_seconds: 0.0,
                requests: serverless_sort_requests(n_in as u64, w as u64),
            }
        }
        Exchange::Vm => {
            let latency = vm_exchange_latency_model(s, n_in, w, &profiles.store, &profiles.compute)?;
            StageEstimate {
                fn_waves: Vec::new(),
                vm_seconds: latency.total,
                latency,
                requests: vm_sort_requests(n_in as u64, w as u64),
            }
        }
    })
}

pub fn estimate_encode_stage(s: f64, w: u32, ratio: f64, profiles: &ProfileBundle) -> Result<StageEstimate, DomainError> {
    let latency = encode_latency_model(s, w, ratio, &profiles.store, &profiles.compute)?;
    Ok(StageEstimate {
        fn_waves: vec![FnWave {
            workers: w,
            busy_s: latency.busy(),
        }],
        latency,
        vm_seconds: 0.0,
        requests: RequestCounts {
            gets: w as u64,
            puts: w as u64,
        },
    })
}

/// Collects billing inputs across stages. Volume is billed for as long as
/// the VM runs.
pub fn cost_inputs<'a>(stages: impl IntoIterator<Item = &'a StageEstimate>, profiles: &ProfileBundle) -> CostInputs {
    let mut inputs = CostInputs::default();
    for st in stages {
        inputs.fn_waves.extend(st.fn_waves.iter().copied());
        inputs.gets += st.requests.gets;
        inputs.puts += st.requests.puts;
        inputs.vm_seconds += st.vm_seconds;
    }
    if inputs.vm_seconds > 0.0 {
        inputs.vol_gb = profiles.compute.vm_volume_gb;
    }
    inputs
}

/// Sort followed by one encode stage, both at parallelism `w`.
pub fn estimate_pipeline(
    exchange: Exchange,
    s: f64,
    w: u32,
    n_in: u32,
    ratio: f64,
    profiles: &ProfileBundle,
) -> Result<PipelineEstimate, DomainError> {
    let sort = estimate_sort_stage(exchange, s, w, n_in, profiles)?;
    let encode = estimate_encode_stage(s, w, ratio, profiles)?;
    let cost = compute_cost(&cost_inputs([&sort, &encode], profiles), &profiles.prices, &profiles.compute);
    Ok(PipelineEstimate {
        end_to_end_s: sort.latency.total + encode.latency.total,
        sort,
        encode,
        cost,
    })
}
