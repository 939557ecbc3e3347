//! Stage execution for emulated runs.

use rayon::prelude::*;

use super::{output_key, startup_for, stage_phases, Ledger, TaskError};
use crate::blobstore::{simulate_phase, BlobStore, ConnTrace, Connection, OpKind, StoreMetrics, TraceOp};
use crate::methpipe::{encode_block, parse_tsv, MethRecord, SortKey};
use crate::perfmodel::{Exchange, LatencyBreakdown, ProfileBundle};
use crate::shuffle::{
    merge_partition, partition_and_write, plan_partitions, sample_object, vm_sort_exchange, KMerge, ShufflePlan,
    VmSortOptions,
};
use crate::workflow::{DataRef, StageKind, StageSpec};

pub(super) struct Ctx<'a> {
    pub store: &'a BlobStore,
    pub bundle: &'a ProfileBundle,
    pub threads: usize,
    pub fn_budget: u64,
    pub fail_task: Option<(String, u32)>,
}

pub(super) struct StageOutput {
    pub workers: u32,
    pub latency: LatencyBreakdown,
    pub outputs: Vec<(String, u64)>,
    pub peak_chunk_bytes: u64,
    pub spilled: bool,
}

type TaskResult<T> = Result<T, (u32, TaskError)>;

/// Requests, compute and writes of one task, each replayed as its own
/// phase.
#[derive(Default)]
struct Split {
    reads: Vec<ConnTrace>,
    busy: Vec<ConnTrace>,
    writes: Vec<ConnTrace>,
}

impl Split {
    fn push(&mut self, trace: ConnTrace) {
        let mut reads = ConnTrace::new(trace.bandwidth);
        let mut busy = ConnTrace::new(trace.bandwidth);
        let mut writes = ConnTrace::new(trace.bandwidth);
        for op in trace.ops {
            match op {
                TraceOp::Busy(_) => busy.ops.push(op),
                TraceOp::Request { kind: OpKind::Put, .. } => writes.ops.push(op),
                TraceOp::Request { .. } => reads.ops.push(op),
            }
        }
        self.reads.push(reads);
        self.busy.push(busy);
        self.writes.push(writes);
    }
}

impl Ctx<'_> {
    fn fn_conn(&self) -> Connection {
        self.store.connect_with_bandwidth(self.bundle.store.conn_bandwidth)
    }

    fn makespan(&self, traces: &[ConnTrace]) -> f64 {
        simulate_phase(&self.bundle.store, traces).makespan
    }

    fn check_fail(&self, stage: &str, worker: u32) -> Result<(), TaskError> {
        match &self.fail_task {
            Some((s, w)) if s == stage && *w == worker => Err(TaskError::Injected),
            _ => Ok(()),
        }
    }

    /// Runs `f` for workers `0..n` on at most `threads` host threads and
    /// reports the lowest failing worker.
    fn pool_map<T: Send>(&self, n: u32, f: impl Fn(u32) -> Result<T, TaskError> + Sync + Send) -> TaskResult<Vec<T>> {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(self.threads.min(n as usize).max(1))
            .build()
            .expect("thread pool");
        let results: Vec<Result<T, TaskError>> = pool.install(|| (0..n).into_par_iter().map(&f).collect());
        let mut out = Vec::with_capacity(n as usize);
        for (i, r) in results.into_iter().enumerate() {
            out.push(r.map_err(|e| (i as u32, e))?);
        }
        Ok(out)
    }
}

pub(super) fn run_stage(
    ctx: &Ctx<'_>,
    st: &StageSpec,
    exchange: Exchange,
    input: &DataRef,
    w: u32,
    before: StoreMetrics,
    ledger: &mut Ledger<'_>,
) -> TaskResult<StageOutput> {
    let mut d = [0.0; 7];
    d[0] = startup_for(st.kind, exchange, ctx.bundle);
    let since = |store: &BlobStore| store.store_metrics().since(&before);
    if input.total_bytes() == 0 {
        let n = stage_phases(st.kind, exchange).len();
        ledger.phases(st, w, &d, 0..n, &since(ctx.store));
        return Ok(StageOutput {
            workers: w,
            latency: LatencyBreakdown::from_phases(d),
            outputs: Vec::new(),
            peak_chunk_bytes: 0,
            spilled: false,
        });
    }
    ledger.phases(st, w, &d, 0..1, &since(ctx.store));
    match (st.kind, exchange) {
        (StageKind::SortExchange, Exchange::Serverless) => serverless_sort(ctx, st, input, w, d, &since, ledger),
        (StageKind::SortExchange, Exchange::Vm) => vm_sort(ctx, st, input, w, d, &since, ledger),
        (StageKind::Encode, _) => encode(ctx, st, input, d, &since, ledger),
    }
}

/// Cuts `bytes` at line ends into pieces of at most `limit` bytes (a
/// single longer line forms its own piece).
fn line_chunks(bytes: &[u8], limit: usize) -> Vec<&[u8]> {
    let mut out = Vec::new();
    let mut rest = bytes;
    while !rest.is_empty() {
        if rest.len() <= limit {
            out.push(rest);
            break;
        }
        let cut = match rest[..limit].iter().rposition(|&b| b == b'\n') {
            Some(i) => i + 1,
            None => rest.iter().position(|&b| b == b'\n').map_or(rest.len(), |i| i + 1),
        };
        out.push(&rest[..cut]);
        rest = &rest[cut..];
    }
    out
}

struct MapOut {
    trace: ConnTrace,
    peak_chunk: u64,
}

/// Reads the mapper's objects, sorts them in runs of at most a quarter of
/// the budget, and writes the merged stream as `w` range fragments.
fn map_task(ctx: &Ctx<'_>, stage: &str, objects: &[(String, u64)], plan: &ShufflePlan, m: u32) -> Result<MapOut, TaskError> {
    let total: u64 = objects.iter().map(|(_, s)| s).sum();
    if total > ctx.fn_budget {
        return Err(TaskError::MemoryBudget {
            needed: total,
            budget: ctx.fn_budget,
        });
    }
    let limit = (ctx.fn_budget / 4).max(1) as usize;
    let mut conn = ctx.fn_conn();
    let mut runs = Vec::new();
    let mut peak = 0u64;
    for (key, _) in objects {
        let bytes = conn.get_object(key, None)?;
        for chunk in line_chunks(&bytes, limit) {
            peak = peak.max(chunk.len() as u64);
            let mut records = parse_tsv(chunk, false).map_err(|source| TaskError::Parse {
                key: key.clone(),
                source,
            })?;
            records.sort_unstable();
            runs.push(records.into_iter());
        }
    }
    conn.busy(total as f64 / ctx.bundle.compute.fn_sort_rate);
    partition_and_write(KMerge::new(runs), plan, stage, m, &mut conn)?;
    Ok(MapOut {
        trace: conn.take_trace(),
        peak_chunk: peak,
    })
}

fn serverless_sort(
    ctx: &Ctx<'_>,
    st: &StageSpec,
    input: &DataRef,
    w: u32,
    mut d: [f64; 7],
    since: &dyn Fn(&BlobStore) -> StoreMetrics,
    ledger: &mut Ledger<'_>,
) -> TaskResult<StageOutput> {
    let opts = st.sort_options();
    let assigned: Vec<Vec<(String, u64)>> = (0..w as usize)
        .map(|m| input.objects.iter().skip(m).step_by(w as usize).cloned().collect())
        .collect();

    let sampled = ctx.pool_map(w, |m| {
        let mut conn = ctx.fn_conn();
        let mut keys = Vec::new();
        for (key, size) in &assigned[m as usize] {
            keys.extend(sample_object(&mut conn, key, *size, opts.sample_bytes)?);
        }
        Ok((keys, conn.take_trace()))
    })?;
    let (samples, traces): (Vec<Vec<SortKey>>, Vec<ConnTrace>) = sampled.into_iter().unzip();
    let sample_time = ctx.makespan(&traces);
    let samples: Vec<SortKey> = samples.into_iter().flatten().collect();
    let plan = if samples.is_empty() {
        ShufflePlan {
            w,
            boundaries: Vec::new(),
        }
    } else {
        plan_partitions(&samples, w).map_err(|e| (0, e.into()))?
    };

    let mapped = ctx.pool_map(w, |m| map_task(ctx, &st.id, &assigned[m as usize], &plan, m))?;
    let peak_chunk_bytes = mapped.iter().map(|o| o.peak_chunk).max().unwrap_or(0);
    let mut split = Split::default();
    mapped.into_iter().for_each(|o| split.push(o.trace));
    d[1] = sample_time + ctx.makespan(&split.reads);
    d[2] = ctx.makespan(&split.busy);
    d[3] = ctx.makespan(&split.writes);
    ledger.phases(st, w, &d, 1..4, &since(ctx.store));

    let reduced = ctx.pool_map(w, |r| {
        let mut conn = ctx.fn_conn();
        let out = merge_partition(&st.id, r, w, &output_key(&st.id, r), ctx.fn_budget, &mut conn)?;
        ctx.check_fail(&st.id, r)?;
        Ok(((out.key, out.bytes), conn.take_trace()))
    })?;
    let mut split = Split::default();
    let mut outputs = Vec::with_capacity(w as usize);
    for (out, trace) in reduced {
        outputs.push(out);
        split.push(trace);
    }
    d[4] = ctx.makespan(&split.reads);
    d[5] = ctx.makespan(&split.writes);
    ledger.phases(st, w, &d, 4..6, &since(ctx.store));
    Ok(StageOutput {
        workers: w,
        latency: LatencyBreakdown::from_phases(d),
        outputs,
        peak_chunk_bytes,
        spilled: false,
    })
}

fn vm_sort(
    ctx: &Ctx<'_>,
    st: &StageSpec,
    input: &DataRef,
    w: u32,
    mut d: [f64; 7],
    since: &dyn Fn(&BlobStore) -> StoreMetrics,
    ledger: &mut Ledger<'_>,
) -> TaskResult<StageOutput> {
    let opts = st.sort_options();
    let compute = &ctx.bundle.compute;
    let mut conn = ctx.store.connect_with_bandwidth(compute.vm_bandwidth);
    let out_keys: Vec<String> = (0..w).map(|r| output_key(&st.id, r)).collect();
    let vm_opts = VmSortOptions {
        sample_bytes: opts.sample_bytes,
        memory_budget: compute.vm_mem_bytes(),
        external_fallback: opts.external_sort,
    };
    let result = vm_sort_exchange(&input.objects, &out_keys, &vm_opts, &mut conn).map_err(|e| (0, e.into()))?;
    conn.busy(result.input_bytes as f64 / compute.vm_sort_rate);
    ctx.check_fail(&st.id, 0).map_err(|e| (0, e))?;
    let mut split = Split::default();
    split.push(conn.take_trace());
    d[1] = ctx.makespan(&split.reads);
    d[2] = ctx.makespan(&split.busy);
    d[5] = ctx.makespan(&split.writes);
    ledger.phases(st, w, &d, 1..4, &since(ctx.store));
    let peak_chunk_bytes = if result.spilled {
        input.objects.iter().map(|(_, s)| *s).max().unwrap_or(0)
    } else {
        result.input_bytes
    };
    Ok(StageOutput {
        workers: w,
        latency: LatencyBreakdown::from_phases(d),
        outputs: result.outputs,
        peak_chunk_bytes,
        spilled: result.spilled,
    })
}

fn encode(
    ctx: &Ctx<'_>,
    st: &StageSpec,
    input: &DataRef,
    mut d: [f64; 7],
    since: &dyn Fn(&BlobStore) -> StoreMetrics,
    ledger: &mut Ledger<'_>,
) -> TaskResult<StageOutput> {
    let n = input.objects.len() as u32;
    let done = ctx.pool_map(n, |i| {
        let (key, size) = &input.objects[i as usize];
        if *size > ctx.fn_budget {
            return Err(TaskError::MemoryBudget {
                needed: *size,
                budget: ctx.fn_budget,
            });
        }
        let mut conn = ctx.fn_conn();
        let bytes = conn.get_object(key, None)?;
        let records: Vec<MethRecord> = parse_tsv(&bytes, false).map_err(|source| TaskError::Parse {
            key: key.clone(),
            source,
        })?;
        let block = encode_block(&records)?;
        conn.busy(*size as f64 / ctx.bundle.compute.fn_encode_rate);
        let out = output_key(&st.id, i);
        let written = conn.put_object(&out, &block)?;
        ctx.check_fail(&st.id, i)?;
        Ok(((out, written), conn.take_trace(), *size))
    })?;
    let mut split = Split::default();
    let mut outputs = Vec::with_capacity(n as usize);
    let mut peak = 0;
    for (out, trace, size) in done {
        outputs.push(out);
        split.push(trace);
        peak = peak.max(size);
    }
    d[1] = ctx.makespan(&split.reads);
    d[6] = ctx.makespan(&split.busy);
    d[5] = ctx.makespan(&split.writes);
    ledger.phases(st, n, &d, 1..4, &since(ctx.store));
    Ok(StageOutput {
        workers: n,
        latency: LatencyBreakdown::from_phases(d),
        outputs,
        peak_chunk_bytes: peak,
        spilled: false,
    })
}
