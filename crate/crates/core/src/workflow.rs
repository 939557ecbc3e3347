//! Workflow declarations: the data model, the v1 JSON schema, and
//! validation.
//!
//! A workflow is one sort stage followed by one or more encode stages. See
//! `docs/workflow-schema.md` for the document format.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::blobstore::StoreProfile;
use crate::perfmodel::{ComputeProfile, Exchange, PriceSheet, ProfileBundle, CALIBRATED_V1, CALIBRATED_V1_NAME};

pub const SCHEMA_VERSION: &str = "v1";
pub const DEFAULT_MAX_WORKERS: u32 = 256;
/// Reserved stage-input name for the workflow's own input data.
pub const WORKFLOW_INPUT: &str = "input";

#[derive(Debug, Error)]
pub enum WorkflowError {
    #[error("malformed JSON at line {line}, column {column}: {message}")]
    Syntax { line: usize, column: usize, message: String },
    #[error("schema error at {path}: {message}")]
    Schema { path: String, message: String },
    #[error("invalid workflow: {}", .0.join("; "))]
    Semantic(Vec<String>),
    #[error("profile {path}: {message}")]
    Profile { path: PathBuf, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum StageKind {
    #[serde(rename = "sort")]
    SortExchange,
    #[serde(rename = "encode")]
    Encode,
}

impl fmt::Display for StageKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StageKind::SortExchange => "SortExchange",
            StageKind::Encode => "Encode",
        })
    }
}

/// A flat stage option value. Arrays and objects are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OptionValue {
    Bool(bool),
    Int(i64),
    Float(f64),
    Text(String),
}

impl OptionValue {
    fn as_f64(&self) -> Option<f64> {
        match self {
            OptionValue::Int(i) => Some(*i as f64),
            OptionValue::Float(f) => Some(*f),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StageSpec {
    pub id: String,
    pub kind: StageKind,
    /// `"input"` or the id of an earlier stage; defaults to the previous
    /// stage (or the workflow input for the first stage).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input: Option<String>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub options: BTreeMap<String, OptionValue>,
}

/// Typed view of a sort stage's options.
#[derive(Debug, Clone, PartialEq)]
pub struct SortOptions {
    pub sample_bytes: u64,
    pub external_sort: bool,
}

/// Typed view of an encode stage's options.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodeOptions {
    /// Compression ratio assumed by the latency model.
    pub ratio: f64,
}

impl StageSpec {
    fn option_errors(&self) -> Vec<String> {
        let mut errs = Vec::new();
        let id = &self.id;
        for (key, value) in &self.options {
            let ok = match (self.kind, key.as_str()) {
                (StageKind::SortExchange, "sample_bytes") => matches!(value, OptionValue::Int(i) if *i > 0),
                (StageKind::SortExchange, "external_sort") => matches!(value, OptionValue::Bool(_)),
                (StageKind::Encode, "ratio") => value.as_f64().is_some_and(|r| r >= 1.0),
                _ => {
                    errs.push(format!("stage {id}: unknown option {key:?} for {}", self.kind));
                    continue;
                }
            };
            if !ok {
                errs.push(format!("stage {id}: invalid value for option {key:?}"));
            }
        }
        errs
    }

    pub fn sort_options(&self) -> SortOptions {
        SortOptions {
            sample_bytes: match self.options.get("sample_bytes") {
                Some(OptionValue::Int(i)) if *i > 0 => *i as u64,
                _ => crate::shuffle::DEFAULT_SAMPLE_BYTES,
            },
            external_sort: matches!(self.options.get("external_sort"), Some(OptionValue::Bool(true))),
        }
    }

    pub fn encode_options(&self) -> EncodeOptions {
        EncodeOptions {
            ratio: self
                .options
                .get("ratio")
                .and_then(OptionValue::as_f64)
                .unwrap_or(crate::perfmodel::DEFAULT_RATIO),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Parallelism {
    Auto,
    Fixed(u32),
}

impl Serialize for Parallelism {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Parallelism::Auto => s.serialize_str("auto"),
            Parallelism::Fixed(w) => s.serialize_u32(*w),
        }
    }
}

impl<'de> Deserialize<'de> for Parallelism {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Count(u32),
            Word(String),
        }
        match Raw::deserialize(d).map_err(|_| serde::de::Error::custom("expected \"auto\" or a worker count"))? {
            Raw::Count(w) => Ok(Parallelism::Fixed(w)),
            Raw::Word(w) if w == "auto" => Ok(Parallelism::Auto),
            Raw::Word(w) => Err(serde::de::Error::custom(format!(
                "expected \"auto\" or a worker count, got {w:?}"
            ))),
        }
    }
}

/// Parameters for generating the input when it is not already stored.
/// Exactly one of `records` and `bytes` sets the size; `seed` defaults to
/// the run seed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticInput {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub records: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bytes: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default = "default_chroms")]
    pub chroms: u32,
    #[serde(default = "default_objects")]
    pub objects: u32,
}

fn default_chroms() -> u32 {
    4
}

fn default_objects() -> u32 {
    8
}

/// Where the workflow input lives. `size_bytes` and `object_count` let
/// modeled runs proceed without the data being present.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputSpec {
    pub bucket: String,
    pub prefix: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub size_bytes: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub object_count: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synthetic: Option<SyntheticInput>,
}

/// A set of objects resolved at run time.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DataRef {
    pub bucket: String,
    pub prefix: String,
    pub objects: Vec<(String, u64)>,
}

impl DataRef {
    pub fn total_bytes(&self) -> u64 {
        self.objects.iter().map(|(_, s)| s).sum()
    }
}

/// A profile given inline, by file path, or by built-in name.
#[derive(Debug, Clone, PartialEq)]
pub enum ProfileSource<T> {
    Builtin(String),
    File(PathBuf),
    Inline(T),
}

impl<T: Serialize> Serialize for ProfileSource<T> {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            ProfileSource::Builtin(name) => s.serialize_str(name),
            ProfileSource::File(path) => s.serialize_str(&path.to_string_lossy()),
            ProfileSource::Inline(v) => v.serialize(s),
        }
    }
}

impl<'de, T: DeserializeOwned> Deserialize<'de> for ProfileSource<T> {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let v = serde_json::Value::deserialize(d)?;
        match v {
            serde_json::Value::String(s) => Ok(ProfileSource::from_name(&s)),
            other => serde_json::from_value(other)
                .map(ProfileSource::Inline)
                .map_err(serde::de::Error::custom),
        }
    }
}

impl<T> ProfileSource<T> {
    fn from_name(s: &str) -> Self {
        if s == CALIBRATED_V1_NAME {
            ProfileSource::Builtin(s.to_string())
        } else {
            ProfileSource::File(PathBuf::from(s))
        }
    }
}

impl<T> Default for ProfileSource<T> {
    fn default() -> Self {
        ProfileSource::Builtin(CALIBRATED_V1_NAME.to_string())
    }
}

/// Store, compute and price profiles for a workflow, plus a factor applied
/// to every bandwidth and processing rate (for running at reduced data
/// sizes).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProfileSet {
    #[serde(default)]
    pub store: ProfileSource<StoreProfile>,
    #[serde(default)]
    pub compute: ProfileSource<ComputeProfile>,
    #[serde(default)]
    pub prices: ProfileSource<PriceSheet>,
    #[serde(default = "one")]
    pub rate_scale: f64,
}

fn one() -> f64 {
    1.0
}

impl Default for ProfileSet {
    fn default() -> Self {
        ProfileSet {
            store: ProfileSource::default(),
            compute: ProfileSource::default(),
            prices: ProfileSource::default(),
            rate_scale: 1.0,
        }
    }
}

fn deserialize_profile_set<'de, D: Deserializer<'de>>(d: D) -> Result<ProfileSet, D::Error> {
    match serde_json::Value::deserialize(d)? {
        serde_json::Value::String(name) => Ok(ProfileSet {
            store: ProfileSource::from_name(&name),
            compute: ProfileSource::from_name(&name),
            prices: ProfileSource::from_name(&name),
            rate_scale: 1.0,
        }),
        other => serde_json::from_value::<ProfileSet>(other).map_err(serde::de::Error::custom),
    }
}

impl ProfileSet {
    /// Loads every profile, resolving relative file paths against
    /// `base_dir`, and applies `rate_scale`.
    pub fn resolve(&self, base_dir: &Path) -> Result<ProfileBundle, WorkflowError> {
        let bundle = ProfileBundle {
            store: load(&self.store, "store", base_dir)?,
            compute: load(&self.compute, "compute", base_dir)?,
            prices: load(&self.prices, "prices", base_dir)?,
        };
        Ok(if self.rate_scale == 1.0 {
            bundle
        } else {
            bundle.scale_rates(self.rate_scale)
        })
    }

    fn inline_violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        if let ProfileSource::Inline(p) = &self.store {
            v.extend(p.violations());
        }
        if let ProfileSource::Inline(p) = &self.compute {
            v.extend(p.violations());
        }
        if let ProfileSource::Inline(p) = &self.prices {
            v.extend(p.violations());
        }
        if let ProfileSource::Builtin(name) = &self.store {
            if name != CALIBRATED_V1_NAME {
                v.push(format!("unknown built-in profile {name:?}"));
            }
        }
        if !(self.rate_scale > 0.0 && self.rate_scale.is_finite()) {
            v.push(format!("profiles.rate_scale must be finite and > 0, got {}", self.rate_scale));
        }
        v
    }
}

/// Reads `section` of a profile: either the whole document is that
/// profile, or it is a bundle containing it.
fn load<T: DeserializeOwned + Clone>(src: &ProfileSource<T>, section: &str, base: &Path) -> Result<T, WorkflowError> {
    let (text, path) = match src {
        ProfileSource::Inline(v) => return Ok(v.clone()),
        ProfileSource::Builtin(_) => (CALIBRATED_V1.to_string(), PathBuf::from(CALIBRATED_V1_NAME)),
        ProfileSource::File(p) => {
            let path = if p.is_absolute() { p.clone() } else { base.join(p) };
            let text = std::fs::read_to_string(&path).map_err(|e| WorkflowError::Profile {
                path: path.clone(),
                message: e.to_string(),
            })?;
            (text, path)
        }
    };
    load_profile_text(&text, section).map_err(|message| WorkflowError::Profile { path, message })
}

pub(crate) fn load_profile_text<T: DeserializeOwned>(text: &str, section: &str) -> Result<T, String> {
    let doc: serde_json::Value = serde_json::from_str(text).map_err(|e| e.to_string())?;
    let part = doc.get(section).cloned().unwrap_or(doc);
    serde_json::from_value(part).map_err(|e| format!("{section}: {e}"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorkflowSpec {
    pub version: String,
    pub name: String,
    pub input: InputSpec,
    pub exchange: Exchange,
    #[serde(default = "auto")]
    pub parallelism: Parallelism,
    #[serde(default = "default_max_workers")]
    pub max_workers: u32,
    pub stages: Vec<StageSpec>,
    #[serde(default, deserialize_with = "deserialize_profile_set")]
    pub profiles: ProfileSet,
}

fn auto() -> Parallelism {
    Parallelism::Auto
}

fn default_max_workers() -> u32 {
    DEFAULT_MAX_WORKERS
}

/// Where a stage reads from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StageInput {
    Workflow,
    Stage(usize),
}

impl WorkflowSpec {
    /// Resolves stage `i`'s input reference, if it names the workflow input
    /// or an earlier stage.
    pub fn stage_input(&self, i: usize) -> Option<StageInput> {
        match self.stages[i].input.as_deref() {
            None if i == 0 => Some(StageInput::Workflow),
            None => Some(StageInput::Stage(i - 1)),
            Some(WORKFLOW_INPUT) => Some(StageInput::Workflow),
            Some(name) => self.stages[..i].iter().position(|s| s.id == name).map(StageInput::Stage),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("workflow serializes")
    }

    /// The same workflow with a different exchange strategy.
    pub fn with_exchange(&self, exchange: Exchange) -> Self {
        WorkflowSpec {
            exchange,
            ..self.clone()
        }
    }
}

/// Parses and validates a v1 workflow document.
pub fn parse_workflow(text: &str) -> Result<WorkflowSpec, WorkflowError> {
    let value: serde_json::Value = serde_json::from_str(text).map_err(|e| WorkflowError::Syntax {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    if let Some(v) = value.get("version") {
        if v != SCHEMA_VERSION {
            return Err(WorkflowError::Schema {
                path: "version".into(),
                message: format!("unsupported version {v}, expected \"{SCHEMA_VERSION}\""),
            });
        }
    }
    let spec: WorkflowSpec = serde_path_to_error::deserialize(value).map_err(|e| WorkflowError::Schema {
        path: e.path().to_string(),
        message: e.inner().to_string(),
    })?;
    let violations = validate_workflow(&spec);
    if violations.is_empty() {
        Ok(spec)
    } else {
        Err(WorkflowError::Semantic(violations))
    }
}

/// Lists every invariant the spec breaks; empty means valid.
pub fn validate_workflow(spec: &WorkflowSpec) -> Vec<String> {
    let mut v = Vec::new();
    if spec.version != SCHEMA_VERSION {
        v.push(format!("unsupported version {:?}", spec.version));
    }
    if spec.name.trim().is_empty() {
        v.push("workflow name is empty".into());
    }
    if spec.input.bucket.is_empty() || spec.input.bucket.contains('/') {
        v.push(format!("invalid input bucket {:?}", spec.input.bucket));
    }
    let prefix = &spec.input.prefix;
    if prefix.is_empty() || ["out/", "part/"].iter().any(|ns| prefix.starts_with(ns) || ns.starts_with(prefix.as_str())) {
        v.push(format!("input prefix {prefix:?} must be non-empty and outside out/ and part/"));
    }
    if let Some(syn) = &spec.input.synthetic {
        if syn.records.is_some() == syn.bytes.is_some() {
            v.push("input.synthetic needs exactly one of records and bytes".into());
        }
        if syn.objects == 0 || syn.chroms == 0 {
            v.push("input.synthetic objects and chroms must be >= 1".into());
        }
    }
    if spec.max_workers == 0 {
        v.push("max_workers must be >= 1".into());
    }
    if let Parallelism::Fixed(w) = spec.parallelism {
        if w == 0 || w > spec.max_workers {
            v.push("parallelism out of range".into());
        }
    }

    let mut seen = HashSet::new();
    for s in &spec.stages {
        if s.id.is_empty() || s.id == WORKFLOW_INPUT || s.id.contains('/') {
            v.push(format!("invalid stage id {:?}", s.id));
        }
        if !seen.insert(s.id.as_str()) {
            v.push(format!("duplicate stage id: {}", s.id));
        }
    }

    let sorts: Vec<usize> = (0..spec.stages.len())
        .filter(|&i| spec.stages[i].kind == StageKind::SortExchange)
        .collect();
    if sorts.len() != 1 {
        v.push(format!("expected exactly one SortExchange stage, found {}", sorts.len()));
    }
    if let Some(&first_sort) = sorts.first() {
        if spec.stages[..first_sort].iter().any(|s| s.kind == StageKind::Encode) {
            v.push("Encode precedes SortExchange".into());
        }
    }
    if !spec.stages.iter().any(|s| s.kind == StageKind::Encode) {
        v.push("workflow has no Encode stage".into());
    }

    for (i, s) in spec.stages.iter().enumerate() {
        match (s.kind, spec.stage_input(i)) {
            (_, None) => v.push(format!(
                "stage {}: input {:?} does not name the workflow input or an earlier stage",
                s.id,
                s.input.as_deref().unwrap_or_default()
            )),
            (StageKind::SortExchange, Some(StageInput::Stage(_))) => {
                v.push(format!("stage {}: SortExchange must read the workflow input", s.id))
            }
            (StageKind::Encode, Some(StageInput::Workflow)) => {
                v.push(format!("stage {}: Encode must read the SortExchange output", s.id))
            }
            (StageKind::Encode, Some(StageInput::Stage(j))) if spec.stages[j].kind != StageKind::SortExchange => {
                v.push(format!("stage {}: Encode must read the SortExchange output", s.id))
            }
            _ => {}
        }
        v.extend(s.option_errors());
    }
    v.extend(spec.profiles.inline_violations());
    v
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "version": "v1",
        "name": "methcomp",
        "input": {"bucket": "genomics", "prefix": "in/"},
        "exchange": "serverless",
        "stages": [{"id": "sort", "kind": "sort"}, {"id": "encode", "kind": "encode"}]
    }"#;

    #[test]
    fn minimal_document_defaults() {
        let spec = parse_workflow(MINIMAL).unwrap();
        assert_eq!(spec.parallelism, Parallelism::Auto);
        assert_eq!(spec.max_workers, DEFAULT_MAX_WORKERS);
        assert_eq!(spec.profiles, ProfileSet::default());
        assert_eq!(spec.stage_input(1), Some(StageInput::Stage(0)));
        assert_eq!(spec.stages[0].sort_options().sample_bytes, 64 * 1024);
        assert_eq!(spec.stages[1].encode_options().ratio, 10.0);
    }

    #[test]
    fn encode_before_sort() {
        let text = MINIMAL.replace(
            r#"[{"id": "sort", "kind": "sort"}, {"id": "encode", "kind": "encode"}]"#,
            r#"[{"id": "encode", "kind": "encode"}, {"id": "sort", "kind": "sort"}]"#,
        );
        match parse_workflow(&text) {
            Err(WorkflowError::Semantic(v)) => assert!(v.contains(&"Encode precedes SortExchange".to_string()), "{v:?}"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn hybrid_configuration() {
        let text = MINIMAL
            .replace(r#""exchange": "serverless""#, r#""exchange": "vm", "parallelism": 8"#);
        let spec = parse_workflow(&text).unwrap();
        assert_eq!(spec.exchange, Exchange::Vm);
        assert_eq!(spec.parallelism, Parallelism::Fixed(8));
    }

    #[test]
    fn syntax_and_schema_errors() {
        assert!(matches!(parse_workflow("{\"version\": "), Err(WorkflowError::Syntax { .. })));
        match parse_workflow(&MINIMAL.replace(r#""name": "methcomp","#, r#""name": "m", "colour": 1,"#)) {
            Err(WorkflowError::Schema { message, .. }) => assert!(message.contains("colour")),
            other => panic!("unexpected {other:?}"),
        }
        match parse_workflow(&MINIMAL.replace(r#""kind": "encode""#, r#""kind": "zip""#)) {
            Err(WorkflowError::Schema { path, .. }) => assert_eq!(path, "stages[1].kind"),
            other => panic!("unexpected {other:?}"),
        }
        match parse_workflow(&MINIMAL.replace(r#""version": "v1","#, r#""version": "v2","#)) {
            Err(WorkflowError::Schema { path, .. }) => assert_eq!(path, "version"),
            other => panic!("unexpected {other:?}"),
        }
        match parse_workflow(&MINIMAL.replace(r#""version": "v1","#, "")) {
            Err(WorkflowError::Schema { message, .. }) => assert!(message.contains("version")),
            other => panic!("unexpected {other:?}"),
        }
        let nested = MINIMAL.replace(r#""kind": "sort""#, r#""kind": "sort", "options": {"sample_bytes": [1]}"#);
        assert!(matches!(parse_workflow(&nested), Err(WorkflowError::Schema { .. })));
        let bad_w = MINIMAL.replace(r#""exchange": "serverless""#, r#""exchange": "serverless", "parallelism": "many""#);
        assert!(matches!(parse_workflow(&bad_w), Err(WorkflowError::Schema { .. })));
    }

    #[test]
    fn validation_examples() {
        let spec = parse_workflow(MINIMAL).unwrap();
        assert!(validate_workflow(&spec).is_empty());

        let mut zero = spec.clone();
        zero.parallelism = Parallelism::Fixed(0);
        assert_eq!(validate_workflow(&zero), vec!["parallelism out of range"]);

        let mut overlap = spec.clone();
        overlap.input.prefix = "out/x/".into();
        assert_eq!(validate_workflow(&overlap).len(), 1);
        overlap.input.prefix = "ou".into();
        assert_eq!(validate_workflow(&overlap).len(), 1);

        let mut dup = spec.clone();
        dup.stages[1].id = "sort".into();
        assert_eq!(validate_workflow(&dup), vec!["duplicate stage id: sort"]);
    }

    #[test]
    fn option_checks() {
        let mut spec = parse_workflow(MINIMAL).unwrap();
        spec.stages[0].options.insert("ratio".into(), OptionValue::Int(2));
        spec.stages[1].options.insert("ratio".into(), OptionValue::Float(0.5));
        let v = validate_workflow(&spec);
        assert_eq!(v.len(), 2, "{v:?}");
        spec.stages[0].options.clear();
        spec.stages[1].options.insert("ratio".into(), OptionValue::Int(4));
        spec.stages[1].options.insert("external_sort".into(), OptionValue::Bool(true));
        assert_eq!(validate_workflow(&spec).len(), 1);
        spec.stages[1].options.remove("external_sort");
        assert!(validate_workflow(&spec).is_empty());
        assert_eq!(spec.stages[1].encode_options().ratio, 4.0);
    }

    #[test]
    fn input_references() {
        let mut spec = parse_workflow(MINIMAL).unwrap();
        spec.stages[1].input = Some("nope".into());
        assert_eq!(validate_workflow(&spec).len(), 1);
        spec.stages[1].input = Some(WORKFLOW_INPUT.into());
        assert_eq!(validate_workflow(&spec).len(), 1);
        spec.stages[1].input = Some("sort".into());
        assert!(validate_workflow(&spec).is_empty());
        spec.stages.push(StageSpec {
            id: "again".into(),
            kind: StageKind::Encode,
            input: None,
            options: BTreeMap::new(),
        });
        assert_eq!(validate_workflow(&spec).len(), 1);
        spec.stages[2].input = Some("sort".into());
        assert!(validate_workflow(&spec).is_empty());
    }

    #[test]
    fn profile_forms() {
        let named = MINIMAL.replace(r#""exchange": "serverless""#, r#""exchange": "serverless", "profiles": "calibrated-v1""#);
        let spec = parse_workflow(&named).unwrap();
        assert_eq!(spec.profiles, ProfileSet::default());
        let bundle = spec.profiles.resolve(Path::new(".")).unwrap();
        assert_eq!(bundle, ProfileBundle::calibrated());

        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("p.json"), CALIBRATED_V1).unwrap();
        let mixed = MINIMAL.replace(
            r#""exchange": "serverless""#,
            r#""exchange": "serverless", "profiles": {"store": "p.json", "prices": {"price_gb_s": 1, "price_invocation": 0,
               "price_put": 0, "price_get": 0, "price_vm_s": 0, "price_vol_gb_s": 0}, "rate_scale": 0.5}"#,
        );
        let spec = parse_workflow(&mixed).unwrap();
        let bundle = spec.profiles.resolve(dir.path()).unwrap();
        let base = ProfileBundle::calibrated();
        assert_eq!(bundle.store.conn_bandwidth, base.store.conn_bandwidth * 0.5);
        assert_eq!(bundle.prices.price_gb_s, 1.0);
        let missing = ProfileSet {
            store: ProfileSource::File("missing.json".into()),
            ..ProfileSet::default()
        };
        assert!(matches!(missing.resolve(dir.path()), Err(WorkflowError::Profile { .. })));
    }
}
