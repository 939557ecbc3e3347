//! The `faaslab` command line.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 usage or validation error.
//! Tables go to stdout and progress to stderr.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use crate::blobstore::{Backing, BlobStore, Shaping};
use crate::engine::{generate_input, resolve_profiles, run_workflow_with_progress, EngineError, Mode, RunOptions, RunReport};
use crate::perfmodel::{Exchange, ProfileBundle, PHASES};
use crate::workflow::{parse_workflow, WorkflowError, WorkflowSpec};

/// Store root for emulated runs and generated data.
pub const STORE_ENV: &str = "FAASLAB_STORE";
/// Profile bundle replacing the workflow's profiles.
pub const PROFILE_ENV: &str = "FAASLAB_PROFILE";
pub const DEFAULT_STORE_ROOT: &str = "faaslab-store";

#[derive(Debug, Parser)]
#[command(name = "faaslab", version, about = "Serverless shuffle vs VM-gathered sort, emulated and modeled")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write synthetic methylation records as near-equal TSV objects.
    Generate {
        #[arg(long)]
        records: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 8, value_parser = clap::value_parser!(u32).range(1..))]
        objects: u32,
        /// Destination as `bucket/prefix`.
        #[arg(long)]
        out: String,
        #[arg(long, default_value_t = 4, value_parser = clap::value_parser!(u32).range(1..))]
        chroms: u32,
    },
    /// Run a workflow and print its report.
    Run {
        #[arg(long)]
        workflow: PathBuf,
        #[arg(long)]
        mode: Mode,
        /// Override the workflow's exchange strategy.
        #[arg(long)]
        exchange: Option<Exchange>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Print the report as JSON instead of a table.
        #[arg(long)]
        json: bool,
    },
    /// Run both exchange strategies and print a two-row table.
    Compare {
        #[arg(long)]
        workflow: PathBuf,
        #[arg(long)]
        mode: Mode,
    },
}

/// A failure with its exit code.
struct Failure {
    code: i32,
    message: String,
}

impl From<EngineError> for Failure {
    fn from(e: EngineError) -> Self {
        let code = match &e {
            EngineError::Workflow(_) | EngineError::Profiles(_) => 2,
            _ => 1,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

impl From<WorkflowError> for Failure {
    fn from(e: WorkflowError) -> Self {
        Failure {
            code: 2,
            message: e.to_string(),
        }
    }
}

fn runtime(message: impl std::fmt::Display) -> Failure {
    Failure {
        code: 1,
        message: message.to_string(),
    }
}

/// Parses `args` (including the program name), runs the command and
/// returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let result = match cli.command {
        Command::Generate {
            records,
            seed,
            objects,
            out,
            chroms,
        } => cmd_generate(records, seed, objects, &out, chroms),
        Command::Run {
            workflow,
            mode,
            exchange,
            seed,
            json,
        } => cmd_run(&workflow, mode, exchange, seed, json),
        Command::Compare { workflow, mode } => cmd_compare(&workflow, mode),
    };
    match result {
        Ok(()) => 0,
        Err(f) => {
            eprintln!("faaslab: {}", f.message);
            f.code
        }
    }
}

fn store_root() -> PathBuf {
    std::env::var_os(STORE_ENV).map_or_else(|| PathBuf::from(DEFAULT_STORE_ROOT), PathBuf::from)
}

fn open_store(bucket: &str, bundle: &ProfileBundle) -> Result<BlobStore, Failure> {
    let mut profile = bundle.store.clone();
    profile.backing = Backing::OnDisk {
        root: store_root(),
        capacity_bytes: None,
    };
    BlobStore::open(bucket, profile, Shaping::Virtual).map_err(runtime)
}

fn cmd_generate(records: u64, seed: u64, objects: u32, out: &str, chroms: u32) -> Result<(), Failure> {
    let (bucket, prefix) = out.split_once('/').unwrap_or((out, ""));
    if bucket.is_empty() {
        return Err(Failure {
            code: 2,
            message: format!("--out {out:?} must be bucket/prefix"),
        });
    }
    let store = open_store(bucket, &ProfileBundle::calibrated())?;
    store.delete_prefix(prefix).map_err(runtime)?;
    let data = generate_input(&store, prefix, records, seed, chroms, objects).map_err(runtime)?;
    let manifest = serde_json::json!({
        "bucket": data.bucket,
        "prefix": data.prefix,
        "records": records,
        "seed": seed,
        "total_bytes": data.total_bytes(),
        "objects": data.objects,
    });
    println!("{}", serde_json::to_string_pretty(&manifest).expect("manifest serializes"));
    Ok(())
}

fn load_workflow(path: &Path) -> Result<(WorkflowSpec, RunOptions), Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| Failure {
        code: 2,
        message: format!("{}: {e}", path.display()),
    })?;
    let spec = parse_workflow(&text)?;
    let mut opts = RunOptions {
        profile_dir: path.parent().map_or_else(|| PathBuf::from("."), Path::to_path_buf),
        ..RunOptions::default()
    };
    if let Some(p) = std::env::var_os(PROFILE_ENV) {
        let p = PathBuf::from(p);
        let text = std::fs::read_to_string(&p).map_err(|e| Failure {
            code: 2,
            message: format!("{PROFILE_ENV}={}: {e}", p.display()),
        })?;
        let bundle: ProfileBundle = serde_json::from_str(&text).map_err(|e| Failure {
            code: 2,
            message: format!("{PROFILE_ENV}={}: {e}", p.display()),
        })?;
        opts.profiles = Some(bundle);
    }
    Ok((spec, opts))
}

fn execute(spec: &WorkflowSpec, mode: Mode, seed: u64, opts: &RunOptions) -> Result<RunReport, Failure> {
    let mut opts = opts.clone();
    let sized = spec.input.size_bytes.is_some() || spec.input.synthetic.is_some();
    if mode == Mode::Emulated || !sized {
        let bundle = resolve_profiles(spec, &opts)?;
        opts.store = Some(open_store(&spec.input.bucket, &bundle)?);
    }
    let mut stderr = std::io::stderr().lock();
    let label = spec.exchange.label();
    run_workflow_with_progress(spec, mode, seed, &opts, &mut |e| {
        let _ = writeln!(
            stderr,
            "[{label}] {:<8} {:<16} {:>4.0}%  cost so far ${:.6}",
            e.stage,
            e.phase,
            e.fraction * 100.0,
            e.cost_so_far
        );
    })
    .map_err(Failure::from)
}

fn cmd_run(path: &Path, mode: Mode, exchange: Option<Exchange>, seed: u64, json: bool) -> Result<(), Failure> {
    let (mut spec, opts) = load_workflow(path)?;
    if let Some(x) = exchange {
        spec = spec.with_exchange(x);
    }
    let report = execute(&spec, mode, seed, &opts)?;
    if json {
        println!("{}", report.to_json());
    } else {
        print!("{}", render_report(&report));
    }
    Ok(())
}

fn cmd_compare(path: &Path, mode: Mode) -> Result<(), Failure> {
    let (spec, opts) = load_workflow(path)?;
    let mut rows = Vec::new();
    for exchange in [Exchange::Serverless, Exchange::Vm] {
        let report = execute(&spec.with_exchange(exchange), mode, 0, &opts)?;
        rows.push(CompareRow::from_report(&report));
    }
    print!("{}", render_compare(&rows));
    Ok(())
}

/// One row of the strategy comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct CompareRow {
    pub configuration: String,
    pub latency_s: f64,
    pub cost: f64,
}

impl CompareRow {
    pub fn from_report(report: &RunReport) -> Self {
        CompareRow {
            configuration: match report.exchange {
                Exchange::Serverless => "Serverless".into(),
                Exchange::Vm => "VM-supported".into(),
            },
            latency_s: report.end_to_end_s,
            cost: report.cost.total,
        }
    }
}

pub fn render_compare(rows: &[CompareRow]) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{:<14} {:>12} {:>10}", "Configuration", "Latency (s)", "Cost ($)");
    for r in rows {
        let _ = writeln!(out, "{:<14} {:>12.2} {:>10.4}", r.configuration, r.latency_s, r.cost);
    }
    out
}

pub fn render_report(r: &RunReport) -> String {
    let mut out = String::new();
    let mode = match r.mode {
        Mode::Emulated => "emulated",
        Mode::Modeled => "modeled",
    };
    let _ = writeln!(
        out,
        "workflow {} ({}, {mode}, w={}{}, input {} bytes in {} objects)",
        r.workflow,
        r.exchange.label(),
        r.parallelism,
        if r.parallelism_auto { " auto" } else { "" },
        r.input_bytes,
        r.input_objects
    );
    let _ = write!(out, "{:<10} {:>7}", "stage", "workers");
    for p in PHASES {
        let _ = write!(out, " {:>15}", p);
    }
    let _ = writeln!(out, " {:>10} {:>7} {:>7}", "total", "GET", "PUT");
    for s in &r.stages {
        let _ = write!(out, "{:<10} {:>7}", s.id, s.workers);
        for p in s.latency.phases() {
            let _ = write!(out, " {:>15.3}", p);
        }
        let _ = writeln!(
            out,
            " {:>10.3} {:>7} {:>7}",
            s.latency.total, s.requests.get_count, s.requests.put_count
        );
    }
    let _ = writeln!(out, "end-to-end latency: {:.3} s", r.end_to_end_s);
    let c = &r.cost;
    let _ = writeln!(out, "cost breakdown ($):");
    for (name, v) in [
        ("functions", c.fn_compute),
        ("storage requests", c.storage_requests),
        ("vm time", c.vm_time),
        ("vm volume", c.vm_volume),
        ("invocations", c.invocations),
        ("total", c.total),
    ] {
        let _ = writeln!(out, "  {name:<18} {v:.6}");
    }
    out
}
