use faaslab::blobstore::BlobStore;
use faaslab::engine::{run_workflow, Mode, RunOptions, RunReport};
use faaslab::methpipe::{parse_tsv, records_to_tsv, MethRecord, Strand};
use faaslab::perfmodel::Exchange;
use faaslab::shuffle::{serverless_sort_requests, vm_sort_requests};
use faaslab::workflow::{parse_workflow, WorkflowSpec};
use proptest::prelude::*;

fn spec(exchange: Exchange, w: u32, sample_bytes: u64) -> WorkflowSpec {
    parse_workflow(&format!(
        r#"{{"version": "v1", "name": "sort-check",
            "input": {{"bucket": "lab", "prefix": "in/"}},
            "exchange": "{}", "parallelism": {w},
            "stages": [{{"id": "sort", "kind": "sort", "options": {{"sample_bytes": {sample_bytes}}}}},
                       {{"id": "encode", "kind": "encode"}}]}}"#,
        exchange.label()
    ))
    .unwrap()
}

fn load(objects: &[Vec<MethRecord>]) -> BlobStore {
    let store = BlobStore::in_memory("lab");
    for (i, recs) in objects.iter().enumerate() {
        store.put_object(&format!("in/{i:03}"), &records_to_tsv(recs)).unwrap();
    }
    store
}

fn outputs(store: &BlobStore, report: &RunReport) -> Vec<Vec<MethRecord>> {
    report
        .stage("sort")
        .unwrap()
        .outputs
        .iter()
        .map(|(k, _)| parse_tsv(&store.get_object(k, None).unwrap(), false).unwrap())
        .collect()
}

fn record() -> impl Strategy<Value = MethRecord> {
    (0usize..3, 0u64..400, 1u64..4, any::<bool>(), 0u32..60, 0u8..=100).prop_map(|(c, start, len, plus, coverage, pct)| {
        MethRecord {
            chrom: ["chr1", "chr10", "chr2"][c].to_string(),
            start,
            end: start + len,
            strand: if plus { Strand::Plus } else { Strand::Minus },
            coverage,
            meth_pct: pct,
        }
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    /// Both strategies produce the single-node sort, split into ordered,
    /// non-overlapping ranges, with exactly the law's request counts.
    #[test]
    fn strategies_match_single_node_sort(
        objects in prop::collection::vec(prop::collection::vec(record(), 0..80), 1..6),
        w in 1u32..6,
        sample_bytes in prop::sample::select(vec![64u64, 1024, 1 << 20]),
    ) {
        let mut oracle: Vec<MethRecord> = objects.iter().flatten().cloned().collect();
        oracle.sort();
        let n_in = objects.len() as u64;
        let mut results = Vec::new();
        for exchange in [Exchange::Serverless, Exchange::Vm] {
            let store = load(&objects);
            let opts = RunOptions { store: Some(store.clone()), threads: Some(3), ..RunOptions::default() };
            let report = run_workflow(&spec(exchange, w, sample_bytes), Mode::Emulated, 0, &opts).unwrap();
            let parts = outputs(&store, &report);
            let sort = report.stage("sort").unwrap();
            if oracle.is_empty() {
                prop_assert!(parts.is_empty());
                prop_assert_eq!(sort.requests.get_count + sort.requests.put_count, 0);
            } else {
                prop_assert_eq!(parts.len() as u32, w);
                for pair in parts.iter().filter(|p| !p.is_empty()).collect::<Vec<_>>().windows(2) {
                    prop_assert!(pair[0].last().unwrap().sort_key() < pair[1].first().unwrap().sort_key());
                }
                let law = match exchange {
                    Exchange::Serverless => serverless_sort_requests(n_in, w as u64),
                    Exchange::Vm => vm_sort_requests(n_in, w as u64),
                };
                prop_assert_eq!((sort.requests.get_count, sort.requests.put_count), (law.gets, law.puts));
            }
            let flat: Vec<MethRecord> = parts.into_iter().flatten().collect();
            prop_assert_eq!(&flat, &oracle);
            results.push(flat);
        }
        prop_assert_eq!(&results[0], &results[1]);
    }
}

#[test]
fn hundred_thousand_records_sort_identically() {
    let records = faaslab::methpipe::generate_synthetic(100_000, 77, 5, faaslab::methpipe::RecordOrder::Shuffled);
    let objects: Vec<Vec<MethRecord>> = records.chunks(12_500).map(<[MethRecord]>::to_vec).collect();
    let mut oracle = records.clone();
    oracle.sort();
    for exchange in [Exchange::Serverless, Exchange::Vm] {
        let store = load(&objects);
        let opts = RunOptions {
            store: Some(store.clone()),
            ..RunOptions::default()
        };
        let report = run_workflow(&spec(exchange, 8, 65536), Mode::Emulated, 0, &opts).unwrap();
        let flat: Vec<MethRecord> = outputs(&store, &report).into_iter().flatten().collect();
        assert_eq!(flat, oracle, "{exchange:?}");
    }
}

#[test]
fn vm_external_sort_matches() {
    let records = faaslab::methpipe::generate_synthetic(20_000, 5, 3, faaslab::methpipe::RecordOrder::Shuffled);
    let objects: Vec<Vec<MethRecord>> = records.chunks(5_000).map(<[MethRecord]>::to_vec).collect();
    let store = load(&objects);
    let mut sp = spec(Exchange::Vm, 4, 65536);
    sp.stages[0]
        .options
        .insert("external_sort".into(), faaslab::workflow::OptionValue::Bool(true));
    let mut bundle = faaslab::perfmodel::ProfileBundle::calibrated();
    bundle.compute.vm_mem_gb = 1e-4;
    let opts = RunOptions {
        store: Some(store.clone()),
        profiles: Some(bundle),
        ..RunOptions::default()
    };
    let report = run_workflow(&sp, Mode::Emulated, 0, &opts).unwrap();
    assert!(report.stage("sort").unwrap().spilled);
    let mut oracle = records;
    oracle.sort();
    let flat: Vec<MethRecord> = outputs(&store, &report).into_iter().flatten().collect();
    assert_eq!(flat, oracle);
}
