//! The genomics payload: methylation records, synthetic data and the
//! `MCP1` block codec used by the encode stage.

mod codec;
mod rangecoder;
mod record;
mod synth;

pub use codec::{decode_block, encode_block, is_encoded_block, CodecError, MAGIC as CODEC_MAGIC};
pub use record::{
    parse_meth_record, parse_tsv, records_to_tsv, MethRecord, ParseError, ParsedLine, SortKey, Strand,
};
pub use synth::{estimate_text_bytes, generate_synthetic, records_for_bytes, split_into_objects, RecordOrder};
