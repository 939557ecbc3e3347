//! Methylation records and their text forms.

use std::cmp::Ordering;
use std::fmt;

use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Strand {
    Plus,
    Minus,
}

impl Strand {
    pub fn as_char(self) -> char {
        match self {
            Strand::Plus => '+',
            Strand::Minus => '-',
        }
    }

    pub fn bit(self) -> u8 {
        match self {
            Strand::Plus => 0,
            Strand::Minus => 1,
        }
    }

    pub fn from_bit(bit: u8) -> Strand {
        if bit == 0 {
            Strand::Plus
        } else {
            Strand::Minus
        }
    }
}

/// One methylation call: an interval on a chromosome strand, its read
/// coverage and the percentage of methylated reads.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct MethRecord {
    pub chrom: String,
    pub start: u64,
    pub end: u64,
    pub strand: Strand,
    pub coverage: u32,
    pub meth_pct: u8,
}

/// Ordering key of a record. Chromosomes compare by raw bytes, so `chr10`
/// sorts before `chr2`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SortKey {
    pub chrom: Vec<u8>,
    pub start: u64,
    pub end: u64,
    pub strand: u8,
}

impl fmt::Display for SortKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}:{}-{}{}",
            String::from_utf8_lossy(&self.chrom),
            self.start,
            self.end,
            Strand::from_bit(self.strand).as_char()
        )
    }
}

impl MethRecord {
    pub fn sort_key(&self) -> SortKey {
        SortKey {
            chrom: self.chrom.as_bytes().to_vec(),
            start: self.start,
            end: self.end,
            strand: self.strand.bit(),
        }
    }

    /// Compares by sort key only, ignoring coverage and methylation.
    pub fn cmp_key(&self, other: &MethRecord) -> Ordering {
        self.chrom
            .as_bytes()
            .cmp(other.chrom.as_bytes())
            .then(self.start.cmp(&other.start))
            .then(self.end.cmp(&other.end))
            .then(self.strand.cmp(&other.strand))
    }

    /// Compares this record's key against a partition boundary.
    pub fn cmp_to_key(&self, key: &SortKey) -> Ordering {
        self.chrom
            .as_bytes()
            .cmp(&key.chrom)
            .then(self.start.cmp(&key.start))
            .then(self.end.cmp(&key.end))
            .then(self.strand.bit().cmp(&key.strand))
    }

    /// Appends the 6-column TSV form, newline included.
    pub fn write_tsv(&self, out: &mut Vec<u8>) {
        use std::io::Write;
        // Writing into a Vec cannot fail.
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}\t{}",
            self.chrom,
            self.start,
            self.end,
            self.strand.as_char(),
            self.coverage,
            self.meth_pct
        );
    }

    pub fn tsv_len(&self) -> usize {
        let mut buf = Vec::with_capacity(48);
        self.write_tsv(&mut buf);
        buf.len()
    }
}

// Records order by key first; coverage and methylation only break ties so
// that every strategy produces byte-identical output for duplicate keys.
impl Ord for MethRecord {
    fn cmp(&self, other: &Self) -> Ordering {
        self.cmp_key(other)
            .then(self.coverage.cmp(&other.coverage))
            .then(self.meth_pct.cmp(&other.meth_pct))
    }
}

impl PartialOrd for MethRecord {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("column {column}: {reason}")]
pub struct ParseError {
    /// 1-based column index, 0 when the line as a whole is malformed.
    pub column: usize,
    pub reason: String,
}

impl ParseError {
    fn new(column: usize, reason: impl Into<String>) -> Self {
        ParseError {
            column,
            reason: reason.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ParsedLine {
    Record(MethRecord),
    Skip,
}

fn parse_int<T: std::str::FromStr>(fields: &[&str], column: usize, what: &str) -> Result<T, ParseError> {
    fields[column - 1]
        .trim()
        .parse::<T>()
        .map_err(|_| ParseError::new(column, format!("invalid {what}: {:?}", fields[column - 1])))
}

fn parse_strand(fields: &[&str], column: usize) -> Result<Strand, ParseError> {
    match fields[column - 1].trim() {
        "+" => Ok(Strand::Plus),
        "-" => Ok(Strand::Minus),
        other => Err(ParseError::new(column, format!("invalid strand: {other:?}"))),
    }
}

/// Parses one line of either the native 6-column TSV
/// (`chrom start end strand coverage meth_pct`) or an 11-column bedMethyl
/// line (strand in column 6, coverage in 10, percentage in 11).
///
/// Blank lines, `#` comments and `track`/`browser` headers yield
/// [`ParsedLine::Skip`].
pub fn parse_meth_record(line: &str) -> Result<ParsedLine, ParseError> {
    let line = line.trim_end_matches(['\n', '\r']);
    if line.trim().is_empty()
        || line.starts_with('#')
        || line.starts_with("track")
        || line.starts_with("browser")
    {
        return Ok(ParsedLine::Skip);
    }
    let fields: Vec<&str> = line.split('\t').collect();
    if fields.len() < 6 {
        return Err(ParseError::new(
            0,
            format!("expected at least 6 tab-separated columns, found {}", fields.len()),
        ));
    }
    let chrom = fields[0].trim();
    if chrom.is_empty() {
        return Err(ParseError::new(1, "empty chromosome"));
    }
    let start: u64 = parse_int(&fields, 2, "start")?;
    let end: u64 = parse_int(&fields, 3, "end")?;
    if end <= start {
        return Err(ParseError::new(3, format!("end {end} <= start {start}")));
    }
    let (strand, coverage, pct) = match fields.len() {
        6 => (
            parse_strand(&fields, 4)?,
            parse_int::<u32>(&fields, 5, "coverage")?,
            parse_int::<u32>(&fields, 6, "methylation percentage")?,
            // Native layout keeps percentages integral.
        ),
        n if n >= 11 => {
            let strand = parse_strand(&fields, 6)?;
            let coverage = parse_int::<u32>(&fields, 10, "coverage")?;
            // Some producers write fractional percentages; round half up.
            let raw = fields[10].trim();
            let pct = raw
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite() && *v >= 0.0)
                .map(|v| (v + 0.5).floor() as u32)
                .ok_or_else(|| ParseError::new(11, format!("invalid methylation percentage: {raw:?}")))?;
            (strand, coverage, pct)
        }
        n => {
            return Err(ParseError::new(
                0,
                format!("expected 6 or at least 11 columns, found {n}"),
            ))
        }
    };
    let pct_col = if fields.len() == 6 { 6 } else { 11 };
    if pct > 100 {
        return Err(ParseError::new(pct_col, format!("methylation percentage {pct} > 100")));
    }
    Ok(ParsedLine::Record(MethRecord {
        chrom: chrom.to_string(),
        start,
        end,
        strand,
        coverage,
        meth_pct: pct as u8,
    }))
}

/// Parses every complete line in `bytes`. A trailing fragment without a
/// newline is parsed too unless `drop_partial_tail` is set.
pub fn parse_tsv(bytes: &[u8], drop_partial_tail: bool) -> Result<Vec<MethRecord>, ParseError> {
    let mut body = bytes;
    if drop_partial_tail {
        match bytes.iter().rposition(|&b| b == b'\n') {
            Some(pos) => body = &bytes[..=pos],
            None => return Ok(Vec::new()),
        }
    }
    let text = std::str::from_utf8(body).map_err(|e| ParseError::new(0, format!("invalid UTF-8: {e}")))?;
    let mut out = Vec::new();
    for line in text.lines() {
        if let ParsedLine::Record(r) = parse_meth_record(line)? {
            out.push(r);
        }
    }
    Ok(out)
}

pub fn records_to_tsv(records: &[MethRecord]) -> Vec<u8> {
    let mut out = Vec::with_capacity(records.len() * 32);
    for r in records {
        r.write_tsv(&mut out);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(chrom: &str, start: u64, strand: Strand) -> MethRecord {
        MethRecord {
            chrom: chrom.into(),
            start,
            end: start + 1,
            strand,
            coverage: 3,
            meth_pct: 50,
        }
    }

    #[test]
    fn parses_bedmethyl_line() {
        let got = parse_meth_record("chr1\t100\t101\t.\t0\t+\t100\t101\t0,0,0\t25\t80").unwrap();
        assert_eq!(
            got,
            ParsedLine::Record(MethRecord {
                chrom: "chr1".into(),
                start: 100,
                end: 101,
                strand: Strand::Plus,
                coverage: 25,
                meth_pct: 80,
            })
        );
    }

    #[test]
    fn rejects_empty_interval() {
        let err = parse_meth_record("chr1\t5\t5\t.\t0\t+").unwrap_err();
        assert_eq!(err.column, 3);
        assert!(err.reason.contains("end 5 <= start 5"));
    }

    #[test]
    fn skips_comments_and_blank_lines() {
        assert_eq!(parse_meth_record("#comment").unwrap(), ParsedLine::Skip);
        assert_eq!(parse_meth_record("   \t ").unwrap(), ParsedLine::Skip);
        assert_eq!(parse_meth_record("track name=x").unwrap(), ParsedLine::Skip);
    }

    #[test]
    fn reports_bad_columns() {
        assert_eq!(parse_meth_record("chr1\tx\t5\t+\t1\t1").unwrap_err().column, 2);
        assert_eq!(parse_meth_record("chr1\t1\t5\t*\t1\t1").unwrap_err().column, 4);
        assert_eq!(parse_meth_record("chr1\t1\t5\t+\t1\t101").unwrap_err().column, 6);
        assert_eq!(parse_meth_record("chr1\t1\t5").unwrap_err().column, 0);
        assert_eq!(parse_meth_record("chr1\t1\t5\t+\t1\t1\t7").unwrap_err().column, 0);
    }

    #[test]
    fn tsv_round_trip() {
        let r = rec("chrX", 42, Strand::Minus);
        let text = records_to_tsv(std::slice::from_ref(&r));
        assert_eq!(text, b"chrX\t42\t43\t-\t3\t50\n");
        assert_eq!(parse_tsv(&text, false).unwrap(), vec![r]);
    }

    #[test]
    fn partial_tail_is_dropped_on_request() {
        let text = b"chr1\t1\t2\t+\t1\t0\nchr1\t5\t6\t+\t1";
        assert_eq!(parse_tsv(text, true).unwrap().len(), 1);
        assert!(parse_tsv(text, false).is_err());
    }

    #[test]
    fn chromosomes_compare_bytewise() {
        assert!(rec("chr10", 5, Strand::Plus).sort_key() < rec("chr2", 1, Strand::Plus).sort_key());
        let a = rec("chr1", 5, Strand::Plus);
        let mut b = a.clone();
        b.coverage = 99;
        assert_eq!(a.sort_key(), b.sort_key());
        assert_eq!(a.cmp_key(&b), Ordering::Equal);
        assert_eq!(a.cmp_to_key(&b.sort_key()), Ordering::Equal);
        assert!(rec("chr1", 5, Strand::Plus) < rec("chr1", 5, Strand::Minus));
    }
}
