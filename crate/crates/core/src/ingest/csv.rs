//! Minimal comma-separated readers and writers for the three input tables.
//!
//! Fields are never quoted, so a field containing a comma shows up as a row
//! with too many columns and is rejected.

use std::collections::HashMap;
use std::io::{self, BufRead, Write};

use serde::{Deserialize, Serialize};

use super::tokenize::{tokenize_title, TokenizerMode};
use super::{BookCatalogEntry, CustomerProfileRecord, Gender, IngestError, TransactionRecord};

pub const TRANSACTIONS_HEADER: &str = "customer_id,book_id,timestamp";
pub const CATALOG_HEADER: &str = "book_id,title,book_type";
pub const PROFILES_HEADER: &str = "customer_id,card_type,age,gender,contact";

pub const MAX_AGE: u32 = 150;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RowError {
    /// 1-based line number in the source; the header is line 1.
    pub line: usize,
    pub message: String,
}

/// Output of one table parse: good records plus the rows that were skipped.
#[derive(Debug, Clone, PartialEq)]
pub struct Parsed<T> {
    pub records: Vec<T>,
    pub row_errors: Vec<RowError>,
    /// Rows whose key repeated an earlier row (last one wins).
    pub duplicates: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CsvOptions {
    /// Row failures above this fraction of data rows abort the parse.
    /// A single bad row is never fatal on its own.
    pub max_error_fraction: f64,
}

impl Default for CsvOptions {
    fn default() -> Self {
        CsvOptions {
            max_error_fraction: 0.1,
        }
    }
}

struct Rows {
    rows: Vec<(usize, String)>,
}

fn read_rows<R: BufRead>(source: R, header: &'static str) -> Result<Rows, IngestError> {
    let mut lines = source.lines();
    let first = match lines.next() {
        Some(line) => line?,
        None => return Err(IngestError::MissingHeader { expected: header }),
    };
    let first = first.trim_start_matches('\u{feff}').trim_end_matches('\r');
    if first.trim() != header {
        return Err(IngestError::MissingHeader { expected: header });
    }
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line?;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        rows.push((i + 2, line.to_string()));
    }
    Ok(Rows { rows })
}

fn fields(line: &str, expected: usize) -> Result<Vec<&str>, String> {
    let f: Vec<&str> = line.split(',').map(str::trim).collect();
    if f.len() != expected {
        return Err(format!(
            "expected {expected} fields, found {} (commas are not allowed inside fields)",
            f.len()
        ));
    }
    Ok(f)
}

fn check_error_rate(total: usize, errors: &[RowError], opts: &CsvOptions) -> Result<(), IngestError> {
    let n = errors.len();
    if n > 1 && n as f64 > opts.max_error_fraction * total as f64 {
        return Err(IngestError::TooManyRowErrors {
            failed: n,
            total,
            first: errors[0].clone(),
        });
    }
    Ok(())
}

fn parse_table<R, T, F>(
    source: R,
    header: &'static str,
    opts: &CsvOptions,
    mut parse_row: F,
) -> Result<(Vec<T>, Vec<RowError>), IngestError>
where
    R: BufRead,
    F: FnMut(&str) -> Result<T, String>,
{
    let rows = read_rows(source, header)?;
    let mut records = Vec::with_capacity(rows.rows.len());
    let mut errors = Vec::new();
    for (line, text) in &rows.rows {
        match parse_row(text) {
            Ok(r) => records.push(r),
            Err(message) => errors.push(RowError { line: *line, message }),
        }
    }
    check_error_rate(rows.rows.len(), &errors, opts)?;
    Ok((records, errors))
}

pub fn parse_transactions<R: BufRead>(source: R, opts: &CsvOptions) -> Result<Parsed<TransactionRecord>, IngestError> {
    let (records, row_errors) = parse_table(source, TRANSACTIONS_HEADER, opts, |line| {
        let f = fields(line, 3)?;
        if f[0].is_empty() || f[1].is_empty() {
            return Err("empty customer_id or book_id".into());
        }
        let ts: i64 = f[2].parse().map_err(|_| format!("unparsable timestamp {:?}", f[2]))?;
        if ts < 0 {
            return Err(format!("negative timestamp {ts}"));
        }
        Ok(TransactionRecord {
            customer_id: f[0].to_string(),
            book_id: f[1].to_string(),
            timestamp: ts as u64,
        })
    })?;
    Ok(Parsed {
        records,
        row_errors,
        duplicates: 0,
    })
}

/// Keeps the last record per key at the position of its first occurrence.
fn last_wins<T>(records: Vec<T>, key: impl Fn(&T) -> &str) -> (Vec<T>, usize) {
    let mut pos: HashMap<String, usize> = HashMap::new();
    let mut out: Vec<T> = Vec::with_capacity(records.len());
    let mut dups = 0;
    for r in records {
        match pos.get(key(&r)) {
            Some(&p) => {
                out[p] = r;
                dups += 1;
            }
            None => {
                pos.insert(key(&r).to_string(), out.len());
                out.push(r);
            }
        }
    }
    (out, dups)
}

pub fn parse_catalog<R: BufRead>(
    source: R,
    mode: TokenizerMode,
    opts: &CsvOptions,
) -> Result<Parsed<BookCatalogEntry>, IngestError> {
    let (records, row_errors) = parse_table(source, CATALOG_HEADER, opts, |line| {
        let f = fields(line, 3)?;
        if f[0].is_empty() {
            return Err("empty book_id".into());
        }
        if f[1].is_empty() {
            return Err("empty title".into());
        }
        let title_tokens = tokenize_title(f[1], mode).map_err(|e| e.to_string())?;
        Ok(BookCatalogEntry {
            book_id: f[0].to_string(),
            title: f[1].to_string(),
            book_type: f[2].to_lowercase(),
            title_tokens,
        })
    })?;
    let (records, duplicates) = last_wins(records, |b| &b.book_id);
    if duplicates > 0 {
        log::warn!("catalog: {duplicates} duplicate book_id rows, last row wins");
    }
    Ok(Parsed {
        records,
        row_errors,
        duplicates,
    })
}

fn optional_category(s: &str) -> Option<String> {
    let s = s.trim().to_lowercase();
    (!s.is_empty() && s != "unknown").then_some(s)
}

pub fn parse_profiles<R: BufRead>(source: R, opts: &CsvOptions) -> Result<Parsed<CustomerProfileRecord>, IngestError> {
    let (records, row_errors) = parse_table(source, PROFILES_HEADER, opts, |line| {
        let f = fields(line, 5)?;
        if f[0].is_empty() {
            return Err("empty customer_id".into());
        }
        let age = f[2].parse::<u32>().ok().filter(|a| *a <= MAX_AGE);
        Ok(CustomerProfileRecord {
            customer_id: f[0].to_string(),
            card_type: optional_category(f[1]),
            age,
            gender: Gender::parse(f[3]),
            contact: optional_category(f[4]),
        })
    })?;
    let (records, duplicates) = last_wins(records, |p| &p.customer_id);
    if duplicates > 0 {
        log::warn!("profiles: {duplicates} duplicate customer_id rows, last row wins");
    }
    Ok(Parsed {
        records,
        row_errors,
        duplicates,
    })
}

pub fn write_transactions<W: Write>(mut out: W, records: &[TransactionRecord]) -> io::Result<()> {
    writeln!(out, "{TRANSACTIONS_HEADER}")?;
    for r in records {
        writeln!(out, "{},{},{}", r.customer_id, r.book_id, r.timestamp)?;
    }
    Ok(())
}

pub fn write_catalog<W: Write>(mut out: W, records: &[BookCatalogEntry]) -> io::Result<()> {
    writeln!(out, "{CATALOG_HEADER}")?;
    for r in records {
        writeln!(out, "{},{},{}", r.book_id, r.title, r.book_type)?;
    }
    Ok(())
}

pub fn write_profiles<W: Write>(mut out: W, records: &[CustomerProfileRecord]) -> io::Result<()> {
    writeln!(out, "{PROFILES_HEADER}")?;
    for r in records {
        let age = r.age.map(|a| a.to_string()).unwrap_or_default();
        writeln!(
            out,
            "{},{},{},{},{}",
            r.customer_id,
            r.card_type.as_deref().unwrap_or(""),
            age,
            r.gender.as_str(),
            r.contact.as_deref().unwrap_or("")
        )?;
    }
    Ok(())
}
