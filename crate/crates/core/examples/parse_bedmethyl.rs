//! Parses bedMethyl or native TSV lines from a file (or a built-in
//! sample) and prints them in native form.
//!
//! ```bash
//! cargo run -p faaslab --example parse_bedmethyl -- calls.bed
//! ```

use faaslab::methpipe::{parse_meth_record, ParsedLine};

const SAMPLE: &str = "track name=cpg\n\
chr1\t10468\t10469\t.\t11\t+\t10468\t10469\t0,255,0\t11\t81\n\
chr1\t10470\t10471\t.\t9\t-\t10470\t10471\t0,255,0\t9\t77\n\
chr2\t500\t501\t+\t14\t92\n";

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let text = match std::env::args().nth(1) {
        Some(path) => std::fs::read_to_string(path)?,
        None => SAMPLE.to_string(),
    };
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        match parse_meth_record(line) {
            Ok(ParsedLine::Record(r)) => r.write_tsv(&mut out),
            Ok(ParsedLine::Skip) => {}
            Err(e) => eprintln!("line {}: {e}", n + 1),
        }
    }
    print!("{}", String::from_utf8(out)?);
    Ok(())
}
