//! The two exchange strategies for the sort stage.
//!
//! Serverless: sample the head of every input object, derive range
//! boundaries, let each of `w` mappers write one sorted fragment per
//! reducer (`part/<stage>/<m>-<r>`), then let each reducer merge its `w`
//! fragments into one output object. VM: one node reads everything, sorts,
//! and writes `w_out` range partitions cut at the same boundaries.
//!
//! Request-count laws for `n_in` inputs and `w` workers:
//! serverless GET = 2·n_in + w², PUT = w² + w; VM GET = n_in, PUT = w_out.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap};
use std::io::{BufRead, BufReader, BufWriter, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::blobstore::{Connection, StoreError};
use crate::methpipe::{parse_meth_record, parse_tsv, MethRecord, ParseError, ParsedLine, SortKey};

/// Bytes read from the head of each input object for sampling.
pub const DEFAULT_SAMPLE_BYTES: u64 = 64 * 1024;

#[derive(Debug, Error)]
pub enum ShuffleError {
    #[error("{0}")]
    Domain(String),
    #[error("missing partition object {0}")]
    MissingPartition(String),
    #[error("object {key} is not sorted at record {index}")]
    Unsorted { key: String, index: usize },
    #[error("object {key}: {source}")]
    Parse { key: String, source: ParseError },
    #[error("memory budget exceeded: {needed} bytes needed, budget {budget}")]
    MemoryBudget { needed: u64, budget: u64 },
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("spill file error: {0}")]
    Spill(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct RequestCounts {
    pub gets: u64,
    pub puts: u64,
}

pub fn serverless_sort_requests(n_in: u64, w: u64) -> RequestCounts {
    RequestCounts {
        gets: 2 * n_in + w * w,
        puts: w * w + w,
    }
}

pub fn vm_sort_requests(n_in: u64, w_out: u64) -> RequestCounts {
    RequestCounts { gets: n_in, puts: w_out }
}

pub fn partition_key(stage: &str, mapper: u32, reducer: u32) -> String {
    format!("part/{stage}/{mapper}-{reducer}")
}

/// Range boundaries for `w` reducers. Range `r` holds keys in
/// `(boundaries[r-1], boundaries[r]]`; the first and last ranges are open.
/// When the sample has too few distinct keys there are fewer boundaries
/// and the trailing ranges stay empty.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ShufflePlan {
    pub w: u32,
    pub boundaries: Vec<SortKey>,
}

impl ShufflePlan {
    /// Index of the range owning `record`'s key (closed upper bounds).
    pub fn range_of(&self, record: &MethRecord) -> u32 {
        self.boundaries.partition_point(|b| record.cmp_to_key(b).is_gt()) as u32
    }

    pub fn range_of_key(&self, key: &SortKey) -> u32 {
        self.boundaries.partition_point(|b| b < key) as u32
    }

    /// Ranges that can receive keys; the rest are always empty.
    pub fn effective_ranges(&self) -> u32 {
        self.boundaries.len() as u32 + 1
    }
}

/// Picks the `(i·n/w)`-th order statistics of the sample as boundaries.
/// Repeated boundaries are moved up to the next distinct sample key.
pub fn plan_partitions(samples: &[SortKey], w: u32) -> Result<ShufflePlan, ShuffleError> {
    if w == 0 {
        return Err(ShuffleError::Domain("worker count must be >= 1".into()));
    }
    if w > 1 && samples.is_empty() {
        return Err(ShuffleError::Domain(format!("cannot plan {w} ranges from an empty sample")));
    }
    let mut sorted = samples.to_vec();
    sorted.sort();
    let n = sorted.len();
    let mut boundaries: Vec<SortKey> = Vec::with_capacity(w as usize - 1);
    for i in 1..w as usize {
        let rank = (i * n / w as usize).max(1);
        let mut idx = rank - 1;
        if let Some(prev) = boundaries.last() {
            if sorted[idx] <= *prev {
                idx = sorted.partition_point(|k| k <= prev);
                if idx == n {
                    break;
                }
            }
        }
        boundaries.push(sorted[idx].clone());
    }
    Ok(ShufflePlan { w, boundaries })
}

/// Sort keys of the complete records within the first `sample_bytes` of
/// one input object, fetched with a single ranged GET.
pub fn sample_object(conn: &mut Connection, key: &str, size: u64, sample_bytes: u64) -> Result<Vec<SortKey>, ShuffleError> {
    let end = size.min(sample_bytes);
    let head = conn.get_object(key, Some(0..end))?;
    let records = parse_tsv(&head, end < size).map_err(|source| ShuffleError::Parse {
        key: key.to_string(),
        source,
    })?;
    Ok(records.iter().map(MethRecord::sort_key).collect())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PartitionEntry {
    pub reducer: u32,
    pub key: String,
    pub records: u64,
    pub bytes: u64,
}

/// Which partition objects each mapper wrote.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PartitionManifest {
    pub mappers: BTreeMap<u32, Vec<PartitionEntry>>,
}

impl PartitionManifest {
    pub fn insert(&mut self, mapper: u32, entries: Vec<PartitionEntry>) {
        self.mappers.insert(mapper, entries);
    }

    pub fn object_count(&self) -> usize {
        self.mappers.values().map(Vec::len).sum()
    }
}

/// Splits an already sorted record stream into `plan.w` fragments and
/// writes every fragment, empty or not, as `part/<stage>/<mapper>-<r>`.
pub fn partition_and_write(
    records: impl IntoIterator<Item = MethRecord>,
    plan: &ShufflePlan,
    stage: &str,
    mapper: u32,
    conn: &mut Connection,
) -> Result<Vec<PartitionEntry>, ShuffleError> {
    let mut buffers: Vec<Vec<u8>> = vec![Vec::new(); plan.w as usize];
    let mut counts = vec![0u64; plan.w as usize];
    let mut prev: Option<MethRecord> = None;
    for (index, r) in records.into_iter().enumerate() {
        if prev.as_ref().is_some_and(|p| p > &r) {
            return Err(ShuffleError::Unsorted {
                key: format!("mapper {mapper} input"),
                index,
            });
        }
        let range = plan.range_of(&r) as usize;
        r.write_tsv(&mut buffers[range]);
        counts[range] += 1;
        prev = Some(r);
    }
    let mut entries = Vec::with_capacity(plan.w as usize);
    for (reducer, buf) in buffers.into_iter().enumerate() {
        let key = partition_key(stage, mapper, reducer as u32);
        let bytes = conn.put_object(&key, &buf)?;
        entries.push(PartitionEntry {
            reducer: reducer as u32,
            key,
            records: counts[reducer],
            bytes,
        });
    }
    Ok(entries)
}

/// Streams the k-way merge of sorted runs.
pub struct KMerge<I: Iterator<Item = MethRecord>> {
    sources: Vec<I>,
    heap: BinaryHeap<Reverse<(MethRecord, usize)>>,
}

impl<I: Iterator<Item = MethRecord>> KMerge<I> {
    pub fn new(sources: Vec<I>) -> Self {
        let mut sources = sources;
        let mut heap = BinaryHeap::with_capacity(sources.len());
        for (i, src) in sources.iter_mut().enumerate() {
            if let Some(r) = src.next() {
                heap.push(Reverse((r, i)));
            }
        }
        KMerge { sources, heap }
    }
}

impl<I: Iterator<Item = MethRecord>> Iterator for KMerge<I> {
    type Item = MethRecord;

    fn next(&mut self) -> Option<MethRecord> {
        let Reverse((rec, src)) = self.heap.pop()?;
        if let Some(next) = self.sources[src].next() {
            self.heap.push(Reverse((next, src)));
        }
        Some(rec)
    }
}

fn check_sorted(key: &str, records: &[MethRecord]) -> Result<(), ShuffleError> {
    match records.windows(2).position(|w| w[0] > w[1]) {
        Some(i) => Err(ShuffleError::Unsorted {
            key: key.to_string(),
            index: i + 1,
        }),
        None => Ok(()),
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MergeOutput {
    pub key: String,
    pub records: u64,
    pub bytes: u64,
    /// Largest number of fragment bytes held at once.
    pub fragment_bytes: u64,
}

/// Reads reducer `reducer`'s fragment from each of the `w` mappers, merges
/// them and writes the sorted result to `out_key`. Fails with
/// [`ShuffleError::MemoryBudget`] if the fragments exceed `budget` bytes.
pub fn merge_partition(
    stage: &str,
    reducer: u32,
    w: u32,
    out_key: &str,
    budget: u64,
    conn: &mut Connection,
) -> Result<MergeOutput, ShuffleError> {
    let mut runs = Vec::with_capacity(w as usize);
    let mut held = 0u64;
    for mapper in 0..w {
        let key = partition_key(stage, mapper, reducer);
        let bytes = match conn.get_object(&key, None) {
            Ok(b) => b,
            Err(StoreError::NotFound(_)) => return Err(ShuffleError::MissingPartition(key)),
            Err(e) => return Err(e.into()),
        };
        held += bytes.len() as u64;
        if held > budget {
            return Err(ShuffleError::MemoryBudget { needed: held, budget });
        }
        let records = parse_tsv(&bytes, false).map_err(|source| ShuffleError::Parse {
            key: key.clone(),
            source,
        })?;
        check_sorted(&key, &records)?;
        runs.push(records.into_iter());
    }
    let mut out = Vec::with_capacity(held as usize);
    let mut count = 0u64;
    for r in KMerge::new(runs) {
        r.write_tsv(&mut out);
        count += 1;
    }
    let bytes = conn.put_object(out_key, &out)?;
    Ok(MergeOutput {
        key: out_key.to_string(),
        records: count,
        bytes,
        fragment_bytes: held,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct VmSortOutput {
    pub outputs: Vec<(String, u64)>,
    pub records: u64,
    pub input_bytes: u64,
    /// True if the in-memory budget was exceeded and runs were spilled.
    pub spilled: bool,
}

/// Options for [`vm_sort_exchange`].
#[derive(Debug, Clone)]
pub struct VmSortOptions {
    pub sample_bytes: u64,
    pub memory_budget: u64,
    /// Spill sorted runs to local disk when the input exceeds the budget.
    pub external_fallback: bool,
}

/// Gathers every input object into one node, sorts globally and writes
/// `out_keys.len()` range partitions. Boundaries come from the same
/// object-head sample the serverless path uses, taken from the bytes
/// already read, so both strategies cut identical ranges.
pub fn vm_sort_exchange(
    inputs: &[(String, u64)],
    out_keys: &[String],
    opts: &VmSortOptions,
    conn: &mut Connection,
) -> Result<VmSortOutput, ShuffleError> {
    let w_out = out_keys.len() as u32;
    if w_out == 0 {
        return Err(ShuffleError::Domain("at least one output partition is required".into()));
    }
    let total: u64 = inputs.iter().map(|(_, s)| s).sum();
    let spill = total > opts.memory_budget;
    if spill && !opts.external_fallback {
        return Err(ShuffleError::MemoryBudget {
            needed: total,
            budget: opts.memory_budget,
        });
    }

    let mut samples = Vec::new();
    let mut in_memory: Vec<MethRecord> = Vec::new();
    let mut runs: Vec<tempfile::NamedTempFile> = Vec::new();
    for (key, size) in inputs {
        let bytes = conn.get_object(key, None)?;
        let head_end = (*size).min(opts.sample_bytes) as usize;
        let head = parse_tsv(&bytes[..head_end], head_end < bytes.len()).map_err(|source| ShuffleError::Parse {
            key: key.clone(),
            source,
        })?;
        samples.extend(head.iter().map(MethRecord::sort_key));
        let mut records = parse_tsv(&bytes, false).map_err(|source| ShuffleError::Parse {
            key: key.clone(),
            source,
        })?;
        if spill {
            // One input object per run; objects are far smaller than the VM.
            records.sort_unstable();
            let mut file = tempfile::NamedTempFile::new()?;
            {
                let mut w = BufWriter::new(file.as_file_mut());
                let mut line = Vec::with_capacity(64);
                for r in &records {
                    line.clear();
                    r.write_tsv(&mut line);
                    w.write_all(&line)?;
                }
                w.flush()?;
            }
            runs.push(file);
        } else {
            in_memory.append(&mut records);
        }
    }
    let plan = plan_partitions(&samples, w_out).or_else(|e| {
        if samples.is_empty() {
            // No records at all: every range is empty.
            Ok(ShufflePlan {
                w: w_out,
                boundaries: Vec::new(),
            })
        } else {
            Err(e)
        }
    })?;

    let mut buffers: Vec<Vec<u8>> = vec![Vec::new(); w_out as usize];
    let mut count = 0u64;
    let mut route = |r: MethRecord| {
        let range = plan.range_of(&r) as usize;
        r.write_tsv(&mut buffers[range]);
        count += 1;
    };
    if spill {
        let readers = runs
            .iter()
            .map(|f| {
                let reader = BufReader::new(f.reopen()?);
                Ok(reader.lines().map_while(Result::ok).filter_map(|l| match parse_meth_record(&l) {
                    Ok(ParsedLine::Record(r)) => Some(r),
                    _ => None,
                }))
            })
            .collect::<Result<Vec<_>, std::io::Error>>()?;
        KMerge::new(readers).for_each(&mut route);
    } else {
        in_memory.sort_unstable();
        in_memory.into_iter().for_each(&mut route);
    }

    let mut outputs = Vec::with_capacity(out_keys.len());
    for (key, buf) in out_keys.iter().zip(buffers) {
        let size = conn.put_object(key, &buf)?;
        outputs.push((key.clone(), size));
    }
    Ok(VmSortOutput {
        outputs,
        records: count,
        input_bytes: total,
        spilled: spill,
    })
}
