//! In-process object store with traffic shaping and exact request metrics.
//!
//! A [`BlobStore`] holds one bucket. Clients talk to it through
//! [`Connection`]s; every connection records a trace of what it did so a
//! phase can later be replayed on a virtual clock ([`simulate_phase`]).
//! With [`Shaping::WallClock`] the same token buckets also throttle the
//! calling threads in real time.

mod bucket;
mod profile;
mod sim;

use std::collections::BTreeMap;
use std::fs;
use std::io::{self, Write};
use std::ops::Range;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, RwLock};
use std::time::{Duration, Instant};

use percent_encoding::{percent_decode_str, utf8_percent_encode, AsciiSet, NON_ALPHANUMERIC};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use bucket::TokenBucket;
pub use profile::{Backing, StoreProfile};
pub use sim::{simulate_phase, ConnTrace, OpKind, PhaseTiming, TraceOp};

/// Largest single object the store accepts.
pub const MAX_OBJECT_BYTES: u64 = 512 * 1024 * 1024;

/// Wall-clock transfers are paced in chunks of this size so concurrent
/// connections interleave on the shared bucket.
const WALL_CHUNK: u64 = 1 << 20;

const KEY_ESCAPES: &AsciiSet = &NON_ALPHANUMERIC.remove(b'-').remove(b'_').remove(b'.');

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("no such object: {0}")]
    NotFound(String),
    #[error("range {start}..{end} exceeds object {key} of length {len}")]
    Range { key: String, start: u64, end: u64, len: u64 },
    #[error("store is full: {needed} bytes needed, {capacity} capacity")]
    Capacity { needed: u64, capacity: u64 },
    #[error("object of {0} bytes exceeds the {MAX_OBJECT_BYTES}-byte limit")]
    TooLarge(u64),
    #[error("invalid key: {0:?}")]
    InvalidKey(String),
    #[error("invalid store profile: {0}")]
    Profile(String),
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
}

pub type Result<T, E = StoreError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StoreMetrics {
    pub put_count: u64,
    pub get_count: u64,
    pub list_count: u64,
    pub delete_count: u64,
    pub bytes_in: u64,
    pub bytes_out: u64,
}

impl StoreMetrics {
    /// Counter differences `self - earlier`.
    pub fn since(&self, earlier: &StoreMetrics) -> StoreMetrics {
        StoreMetrics {
            put_count: self.put_count - earlier.put_count,
            get_count: self.get_count - earlier.get_count,
            list_count: self.list_count - earlier.list_count,
            delete_count: self.delete_count - earlier.delete_count,
            bytes_in: self.bytes_in - earlier.bytes_in,
            bytes_out: self.bytes_out - earlier.bytes_out,
        }
    }

    pub fn add(&self, other: &StoreMetrics) -> StoreMetrics {
        StoreMetrics {
            put_count: self.put_count + other.put_count,
            get_count: self.get_count + other.get_count,
            list_count: self.list_count + other.list_count,
            delete_count: self.delete_count + other.delete_count,
            bytes_in: self.bytes_in + other.bytes_in,
            bytes_out: self.bytes_out + other.bytes_out,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Shaping {
    /// Operations complete immediately; timing comes from trace replay.
    #[default]
    Virtual,
    /// Calling threads sleep according to the token buckets.
    WallClock,
}

enum Backend {
    Memory(RwLock<BTreeMap<String, Arc<Vec<u8>>>>),
    Disk {
        dir: PathBuf,
        capacity: Option<u64>,
        // Guards directory contents and the byte total together.
        state: RwLock<u64>,
    },
}

struct WallShaper {
    epoch: Instant,
    requests: Mutex<TokenBucket>,
    aggregate: Mutex<TokenBucket>,
}

impl WallShaper {
    fn now(&self) -> f64 {
        self.epoch.elapsed().as_secs_f64()
    }

    fn sleep_until(&self, t: f64) {
        let now = self.now();
        if t > now {
            std::thread::sleep(Duration::from_secs_f64(t - now));
        }
    }
}

struct Inner {
    bucket: String,
    profile: StoreProfile,
    backend: Backend,
    metrics: Mutex<StoreMetrics>,
    wall: Option<WallShaper>,
    next_conn: AtomicU64,
}

/// A handle to one emulated bucket. Cloning shares the same store.
#[derive(Clone)]
pub struct BlobStore {
    inner: Arc<Inner>,
}

impl std::fmt::Debug for BlobStore {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("BlobStore")
            .field("bucket", &self.inner.bucket)
            .field("profile", &self.inner.profile)
            .finish()
    }
}

fn encode_key(key: &str) -> String {
    utf8_percent_encode(key, KEY_ESCAPES).to_string()
}

fn decode_key(name: &str) -> Option<String> {
    percent_decode_str(name).decode_utf8().ok().map(|s| s.into_owned())
}

fn disk_usage(dir: &Path) -> io::Result<u64> {
    let mut total = 0;
    for entry in fs::read_dir(dir)? {
        let entry = entry?;
        if entry.file_name().to_string_lossy().starts_with('.') {
            continue;
        }
        total += entry.metadata()?.len();
    }
    Ok(total)
}

impl BlobStore {
    /// Opens (or creates) `bucket` with the given profile.
    pub fn open(bucket: &str, profile: StoreProfile, shaping: Shaping) -> Result<Self> {
        let problems = profile.violations();
        if !problems.is_empty() {
            return Err(StoreError::Profile(problems.join("; ")));
        }
        if bucket.is_empty() || bucket.contains('/') {
            return Err(StoreError::InvalidKey(bucket.to_string()));
        }
        let backend = match &profile.backing {
            Backing::InMemory => Backend::Memory(RwLock::new(BTreeMap::new())),
            Backing::OnDisk { root, capacity_bytes } => {
                let dir = root.join(bucket);
                fs::create_dir_all(&dir)?;
                let used = disk_usage(&dir)?;
                Backend::Disk {
                    dir,
                    capacity: *capacity_bytes,
                    state: RwLock::new(used),
                }
            }
        };
        let wall = (shaping == Shaping::WallClock).then(|| WallShaper {
            epoch: Instant::now(),
            requests: Mutex::new(sim::request_bucket(&profile)),
            aggregate: Mutex::new(sim::aggregate_bucket(&profile)),
        });
        Ok(BlobStore {
            inner: Arc::new(Inner {
                bucket: bucket.to_string(),
                profile,
                backend,
                metrics: Mutex::new(StoreMetrics::default()),
                wall,
                next_conn: AtomicU64::new(0),
            }),
        })
    }

    /// An unshaped in-memory bucket.
    pub fn in_memory(bucket: &str) -> Self {
        Self::open(bucket, StoreProfile::unshaped(), Shaping::Virtual).expect("unshaped profile is valid")
    }

    pub fn bucket(&self) -> &str {
        &self.inner.bucket
    }

    pub fn profile(&self) -> &StoreProfile {
        &self.inner.profile
    }

    pub fn shaping(&self) -> Shaping {
        if self.inner.wall.is_some() {
            Shaping::WallClock
        } else {
            Shaping::Virtual
        }
    }

    /// Opens a connection with the profile's per-connection bandwidth.
    pub fn connect(&self) -> Connection {
        self.connect_with_bandwidth(self.inner.profile.conn_bandwidth)
    }

    /// Opens a connection with a custom bandwidth, e.g. a VM's NIC.
    pub fn connect_with_bandwidth(&self, bandwidth: f64) -> Connection {
        Connection {
            store: self.clone(),
            id: self.inner.next_conn.fetch_add(1, Ordering::Relaxed),
            own: Mutex::new(TokenBucket::new(bandwidth, 0.0)),
            trace: ConnTrace::new(bandwidth),
        }
    }

    pub fn put_object(&self, key: &str, payload: &[u8]) -> Result<u64> {
        self.connect().put_object(key, payload)
    }

    pub fn get_object(&self, key: &str, range: Option<Range<u64>>) -> Result<Vec<u8>> {
        self.connect().get_object(key, range)
    }

    pub fn list_prefix(&self, prefix: &str) -> Result<Vec<(String, u64)>> {
        self.connect().list_prefix(prefix)
    }

    pub fn delete_object(&self, key: &str) -> Result<bool> {
        self.connect().delete_object(key)
    }

    /// Deletes every key under `prefix`, returning how many were removed.
    pub fn delete_prefix(&self, prefix: &str) -> Result<usize> {
        let mut conn = self.connect();
        let keys = conn.list_prefix(prefix)?;
        for (key, _) in &keys {
            conn.delete_object(key)?;
        }
        Ok(keys.len())
    }

    /// A consistent snapshot of all counters.
    pub fn store_metrics(&self) -> StoreMetrics {
        *self.inner.metrics.lock().unwrap()
    }

    /// Counters as a flat JSON object.
    pub fn metrics_json(&self) -> String {
        serde_json::to_string(&self.store_metrics()).expect("metrics serialize")
    }

    fn record(&self, f: impl FnOnce(&mut StoreMetrics)) {
        f(&mut self.inner.metrics.lock().unwrap());
    }

    fn raw_put(&self, key: &str, payload: &[u8]) -> Result<()> {
        match &self.inner.backend {
            Backend::Memory(map) => {
                map.write().unwrap().insert(key.to_string(), Arc::new(payload.to_vec()));
            }
            Backend::Disk { dir, capacity, state } => {
                let mut used = state.write().unwrap();
                let path = dir.join(encode_key(key));
                let old = fs::metadata(&path).map(|m| m.len()).unwrap_or(0);
                let needed = *used - old + payload.len() as u64;
                if let Some(cap) = capacity {
                    if needed > *cap {
                        return Err(StoreError::Capacity { needed, capacity: *cap });
                    }
                }
                let tmp = dir.join(format!(".tmp-{}", encode_key(key)));
                let write = (|| -> io::Result<()> {
                    let mut f = fs::File::create(&tmp)?;
                    f.write_all(payload)?;
                    f.sync_data()?;
                    fs::rename(&tmp, &path)
                })();
                if let Err(e) = write {
                    let _ = fs::remove_file(&tmp);
                    return Err(match e.kind() {
                        io::ErrorKind::StorageFull => StoreError::Capacity {
                            needed,
                            capacity: capacity.unwrap_or(*used),
                        },
                        _ => StoreError::Io(e),
                    });
                }
                *used = needed;
            }
        }
        Ok(())
    }

    fn raw_get(&self, key: &str) -> Result<Arc<Vec<u8>>> {
        match &self.inner.backend {
            Backend::Memory(map) => map
                .read()
                .unwrap()
                .get(key)
                .cloned()
                .ok_or_else(|| StoreError::NotFound(key.to_string())),
            Backend::Disk { dir, state, .. } => {
                let _guard = state.read().unwrap();
                match fs::read(dir.join(encode_key(key))) {
                    Ok(bytes) => Ok(Arc::new(bytes)),
                    Err(e) if e.kind() == io::ErrorKind::NotFound => Err(StoreError::NotFound(key.to_string())),
                    Err(e) => Err(e.into()),
                }
            }
        }
    }

    fn raw_list(&self, prefix: &str) -> Result<Vec<(String, u64)>> {
        match &self.inner.backend {
            Backend::Memory(map) => Ok(map
                .read()
                .unwrap()
                .range(prefix.to_string()..)
                .take_while(|(k, _)| k.starts_with(prefix))
                .map(|(k, v)| (k.clone(), v.len() as u64))
                .collect()),
            Backend::Disk { dir, state, .. } => {
                let _guard = state.read().unwrap();
                let mut out = Vec::new();
                for entry in fs::read_dir(dir)? {
                    let entry = entry?;
                    let name = entry.file_name();
                    let name = name.to_string_lossy();
                    if name.starts_with('.') {
                        continue;
                    }
                    if let Some(key) = decode_key(&name) {
                        if key.starts_with(prefix) {
                            out.push((key, entry.metadata()?.len()));
                        }
                    }
                }
                out.sort();
                Ok(out)
            }
        }
    }

    fn raw_delete(&self, key: &str) -> Result<bool> {
        match &self.inner.backend {
            Backend::Memory(map) => Ok(map.write().unwrap().remove(key).is_some()),
            Backend::Disk { dir, state, .. } => {
                let mut used = state.write().unwrap();
                let path = dir.join(encode_key(key));
                match fs::metadata(&path) {
                    Ok(meta) => {
                        fs::remove_file(&path)?;
                        *used -= meta.len();
                        Ok(true)
                    }
                    Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(false),
                    Err(e) => Err(e.into()),
                }
            }
        }
    }
}

/// A client connection. Operations are recorded in [`Connection::trace`]
/// and, under wall-clock shaping, throttled in real time.
pub struct Connection {
    store: BlobStore,
    id: u64,
    own: Mutex<TokenBucket>,
    trace: ConnTrace,
}

impl Connection {
    pub fn id(&self) -> u64 {
        self.id
    }

    pub fn trace(&self) -> &ConnTrace {
        &self.trace
    }

    /// Takes the recorded trace, leaving an empty one behind.
    pub fn take_trace(&mut self) -> ConnTrace {
        let bandwidth = self.trace.bandwidth;
        std::mem::replace(&mut self.trace, ConnTrace::new(bandwidth))
    }

    /// Appends local work to the trace (and sleeps for it under wall-clock
    /// shaping).
    pub fn busy(&mut self, seconds: f64) {
        if let Some(wall) = &self.store.inner.wall {
            wall.sleep_until(wall.now() + seconds);
        }
        self.trace.ops.push(TraceOp::Busy(seconds));
    }

    fn shape(&self, bytes: u64) {
        let Some(wall) = &self.store.inner.wall else { return };
        let admitted = wall.requests.lock().unwrap().reserve(wall.now(), 1.0);
        wall.sleep_until(admitted + self.store.inner.profile.req_latency);
        let mut left = bytes;
        while left > 0 {
            let chunk = left.min(WALL_CHUNK);
            let now = wall.now();
            let own = self.own.lock().unwrap().reserve(now, chunk as f64);
            let shared = wall.aggregate.lock().unwrap().reserve(now, chunk as f64);
            wall.sleep_until(own.max(shared));
            left -= chunk;
        }
    }

    fn log(&mut self, kind: OpKind, bytes: u64) {
        self.trace.ops.push(TraceOp::Request { kind, bytes });
    }

    pub fn put_object(&mut self, key: &str, payload: &[u8]) -> Result<u64> {
        if key.is_empty() {
            return Err(StoreError::InvalidKey(key.to_string()));
        }
        let size = payload.len() as u64;
        if size > MAX_OBJECT_BYTES {
            return Err(StoreError::TooLarge(size));
        }
        self.shape(size);
        self.store.raw_put(key, payload)?;
        self.log(OpKind::Put, size);
        self.store.record(|m| {
            m.put_count += 1;
            m.bytes_in += size;
        });
        Ok(size)
    }

    /// Reads an object, or the half-open byte `range` of it.
    pub fn get_object(&mut self, key: &str, range: Option<Range<u64>>) -> Result<Vec<u8>> {
        let data = self.store.raw_get(key)?;
        let len = data.len() as u64;
        let range = range.unwrap_or(0..len);
        if range.start > range.end || range.end > len {
            return Err(StoreError::Range {
                key: key.to_string(),
                start: range.start,
                end: range.end,
                len,
            });
        }
        let out = data[range.start as usize..range.end as usize].to_vec();
        let n = out.len() as u64;
        self.shape(n);
        self.log(OpKind::Get, n);
        self.store.record(|m| {
            m.get_count += 1;
            m.bytes_out += n;
        });
        Ok(out)
    }

    /// Keys under `prefix` with their sizes, in lexicographic order.
    pub fn list_prefix(&mut self, prefix: &str) -> Result<Vec<(String, u64)>> {
        self.shape(0);
        let out = self.store.raw_list(prefix)?;
        self.log(OpKind::List, 0);
        self.store.record(|m| m.list_count += 1);
        Ok(out)
    }

    pub fn delete_object(&mut self, key: &str) -> Result<bool> {
        self.shape(0);
        let existed = self.store.raw_delete(key)?;
        self.log(OpKind::Delete, 0);
        self.store.record(|m| m.delete_count += 1);
        Ok(existed)
    }
}
