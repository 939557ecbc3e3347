//! Encodes sorted records into a compressed block and compares its size
//! with the text form.
//!
//! ```bash
//! cargo run -p faaslab --example codec -- 100000
//! ```

use faaslab::methpipe::{decode_block, encode_block, generate_synthetic, records_to_tsv, RecordOrder};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let n: usize = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(100_000);
    let records = generate_synthetic(n, 1, 4, RecordOrder::Sorted);
    let text = records_to_tsv(&records);
    let block = encode_block(&records)?;
    assert_eq!(decode_block(&block)?, records);
    println!("{n} records");
    println!("text   {:>10} bytes", text.len());
    println!("block  {:>10} bytes  ({:.1}x)", block.len(), text.len() as f64 / block.len() as f64);
    println!("header {:02x?}", &block[..8.min(block.len())]);
    Ok(())
}
