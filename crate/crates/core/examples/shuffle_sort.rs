//! Sorts shuffled records across objects with one sample, map and reduce
//! round, driving the shuffle primitives by hand.
//!
//! ```bash
//! cargo run -p faaslab --example shuffle_sort
//! ```

use faaslab::blobstore::BlobStore;
use faaslab::methpipe::{generate_synthetic, parse_tsv, split_into_objects, RecordOrder};
use faaslab::shuffle::{merge_partition, partition_and_write, plan_partitions, sample_object};

const W: u32 = 4;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let store = BlobStore::in_memory("demo");
    let records = generate_synthetic(20_000, 7, 3, RecordOrder::Shuffled);
    for (i, body) in split_into_objects(&records, W as usize).iter().enumerate() {
        store.put_object(&format!("in/{i}"), body)?;
    }
    let inputs = store.list_prefix("in/")?;

    let mut conn = store.connect();
    let mut samples = Vec::new();
    for (key, size) in &inputs {
        samples.extend(sample_object(&mut conn, key, *size, 8192)?);
    }
    let plan = plan_partitions(&samples, W)?;
    println!("{} samples, boundaries:", samples.len());
    for b in &plan.boundaries {
        println!("  {b}");
    }

    for (m, (key, _)) in inputs.iter().enumerate() {
        let mut recs = parse_tsv(&store.get_object(key, None)?, false)?;
        recs.sort();
        partition_and_write(recs, &plan, "demo", m as u32, &mut conn)?;
    }
    let mut merged = Vec::new();
    for r in 0..W {
        let out = format!("out/{r}");
        merge_partition("demo", r, W, &out, u64::MAX, &mut conn)?;
        let part = parse_tsv(&store.get_object(&out, None)?, false)?;
        println!("reducer {r}: {} records", part.len());
        merged.extend(part);
    }

    let mut oracle = records;
    oracle.sort();
    assert_eq!(merged, oracle);
    println!("output equals a single-node sort");
    let m = store.store_metrics();
    println!("{} GET, {} PUT", m.get_count, m.put_count);
    Ok(())
}
