//! Runs workflows end to end.
//!
//! Emulated runs move real bytes through a [`BlobStore`] with a bounded
//! worker pool. Every task records a trace of its store requests and
//! compute, and phase durations come from replaying those traces against
//! the shaping profile with `w` concurrent workers, one phase at a time.
//! Modeled runs take the same durations from the analytic model.

mod report;
mod tasks;

use std::collections::HashMap;
use std::path::PathBuf;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::blobstore::{BlobStore, Shaping, StoreError, StoreMetrics};
use crate::methpipe::{
    estimate_text_bytes, generate_synthetic, records_for_bytes, split_into_objects, CodecError, RecordOrder,
};
use crate::perfmodel::{
    compute_cost, estimate_encode_stage, estimate_sort_stage, optimal_worker_count, CostBreakdown, DomainError,
    Exchange, FnWave, LatencyBreakdown, ProfileBundle, DEFAULT_RATIO,
};
use crate::shuffle::{RequestCounts, ShuffleError};
use crate::workflow::{
    validate_workflow, DataRef, Parallelism, StageInput, StageKind, StageSpec, WorkflowError, WorkflowSpec,
};

pub use report::{billing_inputs, stage_billing, Mode, ReportError, RunReport, StageReport, REPORT_FORMAT};

#[derive(Debug, Error)]
pub enum TaskError {
    #[error(transparent)]
    Shuffle(#[from] ShuffleError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error("{key}: {source}")]
    Parse {
        key: String,
        source: crate::methpipe::ParseError,
    },
    #[error("memory budget exceeded: task needs {needed} bytes, budget is {budget}")]
    MemoryBudget { needed: u64, budget: u64 },
    #[error("injected failure")]
    Injected,
}

#[derive(Debug, Error)]
pub enum EngineError {
    #[error(transparent)]
    Workflow(#[from] WorkflowError),
    #[error("invalid profiles: {}", .0.join("; "))]
    Profiles(Vec<String>),
    #[error("input: {0}")]
    Input(String),
    #[error("model: {0}")]
    Model(#[from] DomainError),
    #[error("store: {0}")]
    Store(#[from] StoreError),
    #[error("stage {stage} failed in worker {worker}: {source}")]
    Task {
        stage: String,
        worker: u32,
        #[source]
        source: TaskError,
    },
}

impl EngineError {
    /// The stage that failed, for task failures.
    pub fn stage(&self) -> Option<&str> {
        match self {
            EngineError::Task { stage, .. } => Some(stage),
            _ => None,
        }
    }
}

/// One line of the progress stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProgressEvent {
    pub stage: String,
    pub phase: String,
    /// Fraction of the stage's phases completed.
    pub fraction: f64,
    /// Cost of everything completed so far, in dollars.
    pub cost_so_far: f64,
}

/// Execution settings that are not part of the workflow document.
#[derive(Clone)]
pub struct RunOptions {
    /// Store to run against. Defaults to a fresh store opened from the
    /// profile's backing.
    pub store: Option<BlobStore>,
    /// Replaces the workflow's profiles; `rate_scale` still applies.
    pub profiles: Option<ProfileBundle>,
    /// Base directory for relative profile paths.
    pub profile_dir: PathBuf,
    /// Host threads per stage; defaults to the available parallelism.
    pub threads: Option<usize>,
    /// Charge `fn_startup` once per stage.
    pub cold_start: bool,
    /// Per-function memory budget in bytes; defaults to `fn_mem_gb`.
    pub task_memory_budget: Option<u64>,
    /// Makes `(stage id, worker)` fail after writing its outputs.
    pub fail_task: Option<(String, u32)>,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            store: None,
            profiles: None,
            profile_dir: PathBuf::from("."),
            threads: None,
            cold_start: true,
            task_memory_budget: None,
            fail_task: None,
        }
    }
}

pub fn run_workflow(spec: &WorkflowSpec, mode: Mode, seed: u64, opts: &RunOptions) -> Result<RunReport, EngineError> {
    run_workflow_with_progress(spec, mode, seed, opts, &mut |_| {})
}

pub fn run_workflow_with_progress(
    spec: &WorkflowSpec,
    mode: Mode,
    seed: u64,
    opts: &RunOptions,
    on_event: &mut dyn FnMut(&ProgressEvent),
) -> Result<RunReport, EngineError> {
    let violations = validate_workflow(spec);
    if !violations.is_empty() {
        return Err(WorkflowError::Semantic(violations).into());
    }
    let bundle = resolve_profiles(spec, opts)?;
    let mut ledger = Ledger {
        bundle: &bundle,
        exchange: spec.exchange,
        done: Vec::new(),
        sink: on_event,
    };
    let report = match mode {
        Mode::Modeled => run_modeled(spec, seed, opts, &bundle, &mut ledger)?,
        Mode::Emulated => run_emulated(spec, seed, opts, &bundle, &mut ledger)?,
    };
    let last = report.stages.last().map(|s| s.id.clone()).unwrap_or_default();
    (ledger.sink)(&ProgressEvent {
        stage: last,
        phase: "done".into(),
        fraction: 1.0,
        cost_so_far: report.cost.total,
    });
    Ok(report)
}

/// The profiles a run of `spec` uses, after overrides and scaling.
pub fn resolve_profiles(spec: &WorkflowSpec, opts: &RunOptions) -> Result<ProfileBundle, EngineError> {
    let mut bundle = match &opts.profiles {
        Some(b) if spec.profiles.rate_scale == 1.0 => b.clone(),
        Some(b) => b.scale_rates(spec.profiles.rate_scale),
        None => spec.profiles.resolve(&opts.profile_dir)?,
    };
    if !opts.cold_start {
        bundle.compute.fn_startup = 0.0;
    }
    let violations = bundle.violations();
    if !violations.is_empty() {
        return Err(EngineError::Profiles(violations));
    }
    Ok(bundle)
}

/// Writes `objects` shuffled synthetic objects as `<prefix><i:05>.tsv`.
pub fn generate_input(
    store: &BlobStore,
    prefix: &str,
    records: u64,
    seed: u64,
    chroms: u32,
    objects: u32,
) -> Result<DataRef, StoreError> {
    let recs = generate_synthetic(records as usize, seed, chroms as usize, RecordOrder::Shuffled);
    let mut out = Vec::with_capacity(objects as usize);
    for (i, body) in split_into_objects(&recs, objects as usize).into_iter().enumerate() {
        let key = format!("{prefix}{i:05}.tsv");
        let size = store.put_object(&key, &body)?;
        out.push((key, size));
    }
    Ok(DataRef {
        bucket: store.bucket().to_string(),
        prefix: prefix.to_string(),
        objects: out,
    })
}

pub fn output_key(stage: &str, index: u32) -> String {
    format!("out/{stage}/{index:05}")
}

pub fn output_prefix(stage: &str) -> String {
    format!("out/{stage}/")
}

pub fn partition_prefix(stage: &str) -> String {
    format!("part/{stage}/")
}

/// Phase indices (into [`crate::perfmodel::PHASES`]) a stage passes
/// through, in execution order.
fn stage_phases(kind: StageKind, exchange: Exchange) -> &'static [usize] {
    match (kind, exchange) {
        (StageKind::SortExchange, Exchange::Serverless) => &[0, 1, 2, 3, 4, 5],
        (StageKind::SortExchange, Exchange::Vm) => &[0, 1, 2, 5],
        (StageKind::Encode, _) => &[0, 1, 6, 5],
    }
}

/// Tracks billed work for progress events.
struct Ledger<'a> {
    bundle: &'a ProfileBundle,
    exchange: Exchange,
    done: Vec<(Vec<FnWave>, f64, StoreMetrics)>,
    sink: &'a mut dyn FnMut(&ProgressEvent),
}

impl Ledger<'_> {
    fn cost(&self, partial: Option<(&[FnWave], f64, &StoreMetrics)>) -> CostBreakdown {
        let stages = self
            .done
            .iter()
            .map(|(w, vm, r)| (w.as_slice(), *vm, r))
            .chain(partial);
        let inputs = billing_inputs(stages, &self.bundle.compute);
        compute_cost(&inputs, &self.bundle.prices, &self.bundle.compute)
    }

    /// Emits one event per phase in `upto`, given the stage's phase
    /// durations and the requests it has made by the end of those phases.
    fn phases(
        &mut self,
        stage: &StageSpec,
        workers: u32,
        durations: &[f64; 7],
        upto: std::ops::Range<usize>,
        requests: &StoreMetrics,
    ) {
        let order = stage_phases(stage.kind, self.exchange);
        for k in upto {
            let mut partial = [0.0; 7];
            for &p in &order[..=k] {
                partial[p] = durations[p];
            }
            let latency = LatencyBreakdown::from_phases(partial);
            let (waves, vm) = stage_billing(stage.kind, self.exchange, &latency, workers);
            let cost = self.cost(Some((&waves, vm, requests)));
            (self.sink)(&ProgressEvent {
                stage: stage.id.clone(),
                phase: crate::perfmodel::PHASES[order[k]].to_string(),
                fraction: (k + 1) as f64 / order.len() as f64,
                cost_so_far: cost.total,
            });
        }
    }

    fn stage_done(&mut self, report: &StageReport) {
        self.done.push((report.fn_waves.clone(), report.vm_seconds, report.requests));
    }
}

fn finish_report(
    spec: &WorkflowSpec,
    mode: Mode,
    seed: u64,
    (w, auto): (u32, bool),
    input: (u64, u32),
    stages: Vec<StageReport>,
    store_metrics: StoreMetrics,
    bundle: &ProfileBundle,
) -> RunReport {
    let inputs = billing_inputs(
        stages.iter().map(|s| (s.fn_waves.as_slice(), s.vm_seconds, &s.requests)),
        &bundle.compute,
    );
    RunReport {
        format: REPORT_FORMAT.to_string(),
        workflow: spec.name.clone(),
        mode,
        exchange: spec.exchange,
        seed,
        parallelism: w,
        parallelism_auto: auto,
        input_bytes: input.0,
        input_objects: input.1,
        end_to_end_s: report::sum_stage_totals(stages.iter().map(|s| &s.latency)),
        cost: compute_cost(&inputs, &bundle.prices, &bundle.compute),
        stages,
        store_metrics,
    }
}

fn resolve_parallelism(spec: &WorkflowSpec, s: u64, n_in: u32, bundle: &ProfileBundle) -> Result<(u32, bool), EngineError> {
    match spec.parallelism {
        Parallelism::Fixed(w) => Ok((w, false)),
        Parallelism::Auto if s == 0 => Ok((1, true)),
        Parallelism::Auto => {
            let ratio = spec
                .stages
                .iter()
                .find(|st| st.kind == StageKind::Encode)
                .map(|st| st.encode_options().ratio)
                .unwrap_or(DEFAULT_RATIO);
            let w = optimal_worker_count(
                s as f64,
                n_in.max(1),
                ratio,
                &bundle.store,
                &bundle.compute,
                spec.max_workers,
            )?;
            Ok((w, true))
        }
    }
}

fn startup_for(kind: StageKind, exchange: Exchange, bundle: &ProfileBundle) -> f64 {
    match (kind, exchange) {
        (StageKind::SortExchange, Exchange::Vm) => bundle.compute.vm_provision,
        _ => bundle.compute.fn_startup,
    }
}

fn modeled_input(spec: &WorkflowSpec, store: Option<&BlobStore>, seed: u64) -> Result<(u64, u32), EngineError> {
    let input = &spec.input;
    let synthetic_objects = input.synthetic.as_ref().map(|s| s.objects);
    if let Some(s) = input.size_bytes {
        return Ok((s, input.object_count.or(synthetic_objects).unwrap_or(1)));
    }
    if let Some(syn) = &input.synthetic {
        let bytes = match (syn.bytes, syn.records) {
            (Some(b), _) => b,
            (None, Some(r)) => estimate_text_bytes(r, syn.seed.unwrap_or(seed), syn.chroms as usize),
            (None, None) => 0,
        };
        return Ok((bytes, input.object_count.unwrap_or(syn.objects)));
    }
    if let Some(store) = store {
        let objects = store.list_prefix(&input.prefix)?;
        if !objects.is_empty() {
            return Ok((objects.iter().map(|(_, s)| s).sum(), objects.len() as u32));
        }
    }
    Err(EngineError::Input(
        "modeled runs need input.size_bytes, input.synthetic, or stored input objects".into(),
    ))
}

fn modeled_requests(counts: RequestCounts, bytes_out: u64, bytes_in: u64) -> StoreMetrics {
    StoreMetrics {
        get_count: counts.gets,
        put_count: counts.puts,
        bytes_out,
        bytes_in,
        ..StoreMetrics::default()
    }
}

fn run_modeled(
    spec: &WorkflowSpec,
    seed: u64,
    opts: &RunOptions,
    bundle: &ProfileBundle,
    ledger: &mut Ledger<'_>,
) -> Result<RunReport, EngineError> {
    let (s, n_in) = modeled_input(spec, opts.store.as_ref(), seed)?;
    let (w, auto) = resolve_parallelism(spec, s, n_in, bundle)?;
    let sf = s as f64;
    let mut stages = Vec::with_capacity(spec.stages.len());
    for st in &spec.stages {
        let (latency, requests) = if s == 0 {
            (LatencyBreakdown::startup_only(startup_for(st.kind, spec.exchange, bundle)), StoreMetrics::default())
        } else {
            match st.kind {
                StageKind::SortExchange => {
                    let est = estimate_sort_stage(spec.exchange, sf, w, n_in.max(1), bundle)?;
                    let moved = match spec.exchange {
                        Exchange::Serverless => 2 * s,
                        Exchange::Vm => s,
                    };
                    (est.latency, modeled_requests(est.requests, moved, moved))
                }
                StageKind::Encode => {
                    let ratio = st.encode_options().ratio;
                    let est = estimate_encode_stage(sf, w, ratio, bundle)?;
                    (est.latency, modeled_requests(est.requests, s, (sf / ratio).round() as u64))
                }
            }
        };
        let (fn_waves, vm_seconds) = stage_billing(st.kind, spec.exchange, &latency, w);
        let n_phases = stage_phases(st.kind, spec.exchange).len();
        ledger.phases(st, w, &latency.phases(), 0..n_phases - 1, &StoreMetrics::default());
        ledger.phases(st, w, &latency.phases(), n_phases - 1..n_phases, &requests);
        let report = StageReport {
            id: st.id.clone(),
            kind: st.kind,
            workers: w,
            latency,
            requests,
            fn_waves,
            vm_seconds,
            input_bytes: s,
            output_bytes: match st.kind {
                StageKind::SortExchange => s,
                StageKind::Encode => (sf / st.encode_options().ratio).round() as u64,
            },
            outputs: Vec::new(),
            peak_chunk_bytes: 0,
            spilled: false,
            wall_s: 0.0,
        };
        ledger.stage_done(&report);
        stages.push(report);
    }
    let metrics = stages.iter().fold(StoreMetrics::default(), |acc, s| acc.add(&s.requests));
    Ok(finish_report(spec, Mode::Modeled, seed, (w, auto), (s, n_in), stages, metrics, bundle))
}

/// Lists the input, generating it first when the prefix is empty and the
/// workflow declares a synthetic input. The flag reports generation.
fn emulated_input(spec: &WorkflowSpec, store: &BlobStore, seed: u64) -> Result<(DataRef, bool), EngineError> {
    let input = &spec.input;
    let objects = store.list_prefix(&input.prefix)?;
    if !objects.is_empty() {
        let found = DataRef {
            bucket: input.bucket.clone(),
            prefix: input.prefix.clone(),
            objects,
        };
        return Ok((found, false));
    }
    let Some(syn) = &input.synthetic else {
        return Err(EngineError::Input(format!(
            "no objects under {}/{} and no synthetic input declared",
            input.bucket, input.prefix
        )));
    };
    let seed = syn.seed.unwrap_or(seed);
    let records = match (syn.records, syn.bytes) {
        (Some(r), _) => r,
        (None, Some(b)) => records_for_bytes(b, seed, syn.chroms as usize) as u64,
        (None, None) => 0,
    };
    Ok((generate_input(store, &input.prefix, records, seed, syn.chroms, syn.objects)?, true))
}

fn run_emulated(
    spec: &WorkflowSpec,
    seed: u64,
    opts: &RunOptions,
    bundle: &ProfileBundle,
    ledger: &mut Ledger<'_>,
) -> Result<RunReport, EngineError> {
    let store = match &opts.store {
        Some(s) => s.clone(),
        None => BlobStore::open(&spec.input.bucket, bundle.store.clone(), Shaping::Virtual)?,
    };
    // Every request from here on lands in some stage's delta. The input
    // listing is charged to the first stage; generated input is staging and
    // stays outside the run.
    let mut before = store.store_metrics();
    let (input, generated) = emulated_input(spec, &store, seed)?;
    if generated {
        before = store.store_metrics();
    }
    let run_start = before;
    let s = input.total_bytes();
    let n_in = input.objects.len() as u32;
    let (w, auto) = resolve_parallelism(spec, s, n_in, bundle)?;

    let ctx = tasks::Ctx {
        store: &store,
        bundle,
        threads: opts
            .threads
            .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get())),
        fn_budget: opts.task_memory_budget.unwrap_or(bundle.compute.fn_mem_bytes()),
        fail_task: opts.fail_task.clone(),
    };
    let mut outputs: HashMap<usize, DataRef> = HashMap::new();
    let mut stages = Vec::with_capacity(spec.stages.len());
    for (i, st) in spec.stages.iter().enumerate() {
        let stage_input = match spec.stage_input(i) {
            Some(StageInput::Workflow) => input.clone(),
            Some(StageInput::Stage(j)) => outputs[&j].clone(),
            None => unreachable!("validated"),
        };
        if i > 0 {
            before = store.store_metrics();
        }
        let started = Instant::now();
        store.delete_prefix(&output_prefix(&st.id))?;
        store.delete_prefix(&partition_prefix(&st.id))?;
        let result = tasks::run_stage(&ctx, st, spec.exchange, &stage_input, w, before, ledger);
        let out = match result {
            Ok(out) => out,
            Err((worker, source)) => {
                store.delete_prefix(&output_prefix(&st.id))?;
                store.delete_prefix(&partition_prefix(&st.id))?;
                return Err(EngineError::Task {
                    stage: st.id.clone(),
                    worker,
                    source,
                });
            }
        };
        let requests = store.store_metrics().since(&before);
        let (fn_waves, vm_seconds) = stage_billing(st.kind, spec.exchange, &out.latency, out.workers);
        let report = StageReport {
            id: st.id.clone(),
            kind: st.kind,
            workers: out.workers,
            latency: out.latency,
            requests,
            fn_waves,
            vm_seconds,
            input_bytes: stage_input.total_bytes(),
            output_bytes: out.outputs.iter().map(|(_, s)| s).sum(),
            outputs: out.outputs.clone(),
            peak_chunk_bytes: out.peak_chunk_bytes,
            spilled: out.spilled,
            wall_s: started.elapsed().as_secs_f64(),
        };
        ledger.stage_done(&report);
        outputs.insert(
            i,
            DataRef {
                bucket: store.bucket().to_string(),
                prefix: output_prefix(&st.id),
                objects: out.outputs,
            },
        );
        stages.push(report);
    }
    let metrics = store.store_metrics().since(&run_start);
    Ok(finish_report(spec, Mode::Emulated, seed, (w, auto), (s, n_in), stages, metrics, bundle))
}

