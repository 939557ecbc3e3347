//! `MCP1` block codec for sorted methylation records.
//!
//! Records are grouped into chromosome runs and split into five columnar
//! streams (start deltas, interval lengths, strand run lengths, coverage,
//! methylation percentage), each written as LEB128 varints and then
//! entropy-coded with its own adaptive model. The byte layout is described
//! in `docs/codec.md`.

use thiserror::Error;

use super::rangecoder::{ByteModel, RangeDecoder, RangeEncoder};
use super::record::{MethRecord, Strand};

pub const MAGIC: &[u8; 4] = b"MCP1";
pub const VERSION: u8 = 1;
const HEADER_LEN: usize = 6;
const CHECKSUM_LEN: usize = 4;
const STREAMS: usize = 5;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CodecError {
    #[error("input is not sorted at record {index}")]
    UnsortedInput { index: usize },
    #[error("field out of encodable range: {0}")]
    Overflow(String),
    #[error("bad magic or unsupported version")]
    BadMagic,
    #[error("checksum mismatch: stored {stored:08x}, computed {computed:08x}")]
    ChecksumMismatch { stored: u32, computed: u32 },
    #[error("block is truncated")]
    Truncated,
    #[error("block is malformed: {0}")]
    Corrupt(String),
}

pub fn put_varint(out: &mut Vec<u8>, mut v: u64) {
    while v >= 0x80 {
        out.push((v as u8) | 0x80);
        v >>= 7;
    }
    out.push(v as u8);
}

/// Reads a LEB128 varint at `*pos`, advancing it.
pub fn get_varint(buf: &[u8], pos: &mut usize) -> Result<u64, CodecError> {
    let mut v: u64 = 0;
    for shift in (0..64).step_by(7) {
        let byte = *buf.get(*pos).ok_or(CodecError::Truncated)?;
        *pos += 1;
        let bits = (byte & 0x7F) as u64;
        if shift == 63 && bits > 1 {
            return Err(CodecError::Corrupt("varint overflows u64".into()));
        }
        v |= bits << shift;
        if byte & 0x80 == 0 {
            return Ok(v);
        }
    }
    Err(CodecError::Corrupt("varint longer than 10 bytes".into()))
}

#[derive(Default)]
struct Streams {
    start: Vec<u8>,
    length: Vec<u8>,
    strand: Vec<u8>,
    coverage: Vec<u8>,
    meth: Vec<u8>,
}

impl Streams {
    fn all(&self) -> [&Vec<u8>; STREAMS] {
        [&self.start, &self.length, &self.strand, &self.coverage, &self.meth]
    }
}

/// Encodes records already sorted by [`SortKey`](super::SortKey).
pub fn encode_block(records: &[MethRecord]) -> Result<Vec<u8>, CodecError> {
    if let Some(i) = records.windows(2).position(|w| w[0].cmp_key(&w[1]).is_gt()) {
        return Err(CodecError::UnsortedInput { index: i + 1 });
    }
    for r in records {
        if r.end <= r.start {
            return Err(CodecError::Overflow(format!("empty interval at {}:{}", r.chrom, r.start)));
        }
        if r.meth_pct > 100 {
            return Err(CodecError::Overflow(format!("methylation {} > 100", r.meth_pct)));
        }
    }

    // Chromosome runs; sortedness guarantees each chromosome forms one run.
    let mut chroms: Vec<&str> = Vec::new();
    let mut runs: Vec<(usize, usize)> = Vec::new();
    for r in records {
        match chroms.last() {
            Some(&last) if last == r.chrom => runs.last_mut().unwrap().1 += 1,
            _ => {
                chroms.push(&r.chrom);
                runs.push((chroms.len() - 1, 1));
            }
        }
    }

    let mut s = Streams::default();
    let mut offset = 0;
    for &(_, count) in &runs {
        let run = &records[offset..offset + count];
        offset += count;
        let mut prev_start = 0;
        let mut strand = Strand::Plus;
        let mut strand_len: u64 = 0;
        for r in run {
            put_varint(&mut s.start, r.start - prev_start);
            prev_start = r.start;
            put_varint(&mut s.length, r.end - r.start);
            if r.strand != strand {
                put_varint(&mut s.strand, strand_len);
                strand = r.strand;
                strand_len = 0;
            }
            strand_len += 1;
            put_varint(&mut s.coverage, r.coverage as u64);
            s.meth.push(r.meth_pct);
        }
        put_varint(&mut s.strand, strand_len);
    }

    let mut out = Vec::with_capacity(64 + records.len() * 2);
    out.extend_from_slice(MAGIC);
    out.push(VERSION);
    out.push(0);
    put_varint(&mut out, records.len() as u64);
    put_varint(&mut out, chroms.len() as u64);
    for c in &chroms {
        put_varint(&mut out, c.len() as u64);
        out.extend_from_slice(c.as_bytes());
    }
    put_varint(&mut out, runs.len() as u64);
    for &(chrom, count) in &runs {
        put_varint(&mut out, chrom as u64);
        put_varint(&mut out, count as u64);
    }
    for stream in s.all() {
        put_varint(&mut out, stream.len() as u64);
    }
    let mut enc = RangeEncoder::new();
    for stream in s.all() {
        let mut model = ByteModel::default();
        for &b in stream.iter() {
            enc.encode_byte(&mut model, b);
        }
    }
    let coded = enc.finish();
    put_varint(&mut out, coded.len() as u64);
    out.extend_from_slice(&coded);
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    Ok(out)
}

/// True if `bytes` starts with the `MCP1` magic.
pub fn is_encoded_block(bytes: &[u8]) -> bool {
    bytes.starts_with(MAGIC)
}

pub fn decode_block(bytes: &[u8]) -> Result<Vec<MethRecord>, CodecError> {
    if bytes.len() < HEADER_LEN {
        return if MAGIC.starts_with(bytes) {
            Err(CodecError::Truncated)
        } else {
            Err(CodecError::BadMagic)
        };
    }
    if &bytes[..4] != MAGIC || bytes[4] != VERSION {
        return Err(CodecError::BadMagic);
    }
    if bytes.len() < HEADER_LEN + CHECKSUM_LEN {
        return Err(CodecError::Truncated);
    }
    let (body, tail) = bytes.split_at(bytes.len() - CHECKSUM_LEN);
    let stored = u32::from_le_bytes(tail.try_into().unwrap());
    let computed = crc32fast::hash(body);
    if stored != computed {
        return Err(CodecError::ChecksumMismatch { stored, computed });
    }

    let mut pos = HEADER_LEN;
    let count = get_varint(body, &mut pos)? as usize;
    let n_chroms = get_varint(body, &mut pos)? as usize;
    let mut chroms = Vec::with_capacity(n_chroms.min(1 << 16));
    for _ in 0..n_chroms {
        let len = get_varint(body, &mut pos)? as usize;
        let raw = body.get(pos..pos + len).ok_or(CodecError::Truncated)?;
        pos += len;
        let name = std::str::from_utf8(raw).map_err(|_| CodecError::Corrupt("chromosome name is not UTF-8".into()))?;
        chroms.push(name.to_string());
    }
    let n_runs = get_varint(body, &mut pos)? as usize;
    let mut runs = Vec::with_capacity(n_runs.min(1 << 16));
    for _ in 0..n_runs {
        let chrom = get_varint(body, &mut pos)? as usize;
        let len = get_varint(body, &mut pos)? as usize;
        if chrom >= chroms.len() {
            return Err(CodecError::Corrupt(format!("run references chromosome {chrom}")));
        }
        runs.push((chrom, len));
    }
    if runs.iter().map(|r| r.1).sum::<usize>() != count {
        return Err(CodecError::Corrupt("run lengths disagree with record count".into()));
    }
    let mut raw_lens = [0usize; STREAMS];
    for len in raw_lens.iter_mut() {
        *len = get_varint(body, &mut pos)? as usize;
    }
    let coded_len = get_varint(body, &mut pos)? as usize;
    let coded = body.get(pos..pos + coded_len).ok_or(CodecError::Truncated)?;
    if pos + coded_len != body.len() {
        return Err(CodecError::Corrupt("trailing bytes after payload".into()));
    }

    let mut dec = RangeDecoder::new(coded);
    let mut streams: Vec<Vec<u8>> = Vec::with_capacity(STREAMS);
    for &len in &raw_lens {
        if len > coded_len.saturating_mul(64) + 64 {
            return Err(CodecError::Corrupt("stream length implausible for payload".into()));
        }
        let mut model = ByteModel::default();
        streams.push((0..len).map(|_| dec.decode_byte(&mut model)).collect());
    }
    if dec.overrun() {
        return Err(CodecError::Truncated);
    }

    let mut cursors = [0usize; STREAMS];
    let mut out = Vec::with_capacity(count);
    for &(chrom, len) in &runs {
        let mut prev_start = 0u64;
        let mut strand = Strand::Plus;
        let mut strand_left = get_varint(&streams[2], &mut cursors[2])?;
        for _ in 0..len {
            while strand_left == 0 {
                strand = if strand == Strand::Plus { Strand::Minus } else { Strand::Plus };
                strand_left = get_varint(&streams[2], &mut cursors[2])?;
            }
            strand_left -= 1;
            let start = prev_start
                .checked_add(get_varint(&streams[0], &mut cursors[0])?)
                .ok_or_else(|| CodecError::Corrupt("start overflows".into()))?;
            prev_start = start;
            let length = get_varint(&streams[1], &mut cursors[1])?;
            let end = start
                .checked_add(length)
                .filter(|_| length > 0)
                .ok_or_else(|| CodecError::Corrupt("invalid interval length".into()))?;
            let coverage = u32::try_from(get_varint(&streams[3], &mut cursors[3])?)
                .map_err(|_| CodecError::Corrupt("coverage overflows u32".into()))?;
            let meth_pct = *streams[4].get(cursors[4]).ok_or(CodecError::Truncated)?;
            cursors[4] += 1;
            if meth_pct > 100 {
                return Err(CodecError::Corrupt(format!("methylation {meth_pct} > 100")));
            }
            out.push(MethRecord {
                chrom: chroms[chrom].clone(),
                start,
                end,
                strand,
                coverage,
                meth_pct,
            });
        }
        if strand_left != 0 {
            return Err(CodecError::Corrupt("strand runs exceed run length".into()));
        }
    }
    Ok(out)
}
