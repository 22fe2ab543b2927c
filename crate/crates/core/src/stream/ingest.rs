//! CSV rows to interned records.

use std::io::Read;

use chrono::{DateTime, NaiveDate, NaiveDateTime};
use csv::StringRecord;

use super::discretize::{discretize_location, discretize_timestamp, tokenize};
use super::schema::{ColumnKind, StreamSchema};
use super::vocab::{AttrId, UnitKey, Vocabulary};
use crate::error::Result;

/// One stream event: a timestamp and its unit occurrences.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Record {
    pub timestamp: i64,
    pub units: Vec<UnitKey>,
}

impl Record {
    pub fn new(timestamp: i64, units: Vec<UnitKey>) -> Self {
        Record { timestamp, units }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SkipReason {
    Malformed(String),
    TooFewUnits,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct IngestStats {
    pub accepted: u64,
    pub malformed: u64,
    pub too_few_units: u64,
}

pub fn parse_timestamp(raw: &str) -> Option<i64> {
    let raw = raw.trim();
    if let Ok(secs) = raw.parse::<i64>() {
        return Some(secs);
    }
    if let Ok(dt) = DateTime::parse_from_rfc3339(raw) {
        return Some(dt.timestamp());
    }
    for fmt in [
        "%Y-%m-%dT%H:%M:%S",
        "%Y-%m-%d %H:%M:%S",
        "%Y-%m-%dT%H:%M:%S%.f",
    ] {
        if let Ok(dt) = NaiveDateTime::parse_from_str(raw, fmt) {
            return Some(dt.and_utc().timestamp());
        }
    }
    NaiveDate::parse_from_str(raw, "%Y-%m-%d")
        .ok()
        .and_then(|d| d.and_hms_opt(0, 0, 0))
        .map(|dt| dt.and_utc().timestamp())
}

/// Turns CSV rows into records, interning symbols as it goes.
pub struct Ingestor<'a> {
    schema: &'a StreamSchema,
    vocab: &'a mut Vocabulary,
    stats: IngestStats,
}

impl<'a> Ingestor<'a> {
    pub fn new(schema: &'a StreamSchema, vocab: &'a mut Vocabulary) -> Self {
        assert_eq!(
            vocab.n_attributes(),
            schema.n_attributes(),
            "vocabulary does not match schema"
        );
        Ingestor {
            schema,
            vocab,
            stats: IngestStats::default(),
        }
    }

    pub fn stats(&self) -> IngestStats {
        self.stats
    }

    pub fn ingest_line(&mut self, line: &str) -> std::result::Result<Record, SkipReason> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(false)
            .flexible(true)
            .from_reader(line.as_bytes());
        let mut row = StringRecord::new();
        match reader.read_record(&mut row) {
            Ok(true) => self.ingest_fields(&row),
            Ok(false) => self.skip(SkipReason::Malformed("empty line".into())),
            Err(e) => self.skip(SkipReason::Malformed(e.to_string())),
        }
    }

    /// Read every row of `input`; malformed rows are counted and skipped.
    pub fn ingest_reader<R: Read>(&mut self, input: R, has_header: bool) -> Result<Vec<Record>> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(has_header)
            .flexible(true)
            .from_reader(input);
        let mut records = Vec::new();
        let mut row = StringRecord::new();
        loop {
            match reader.read_record(&mut row) {
                Ok(true) => {
                    if let Ok(r) = self.ingest_fields(&row) {
                        records.push(r);
                    }
                }
                Ok(false) => break,
                Err(e) if e.is_io_error() => return Err(e.into()),
                Err(e) => {
                    let _ = self.skip(SkipReason::Malformed(e.to_string()));
                }
            }
        }
        Ok(records)
    }

    fn skip(&mut self, reason: SkipReason) -> std::result::Result<Record, SkipReason> {
        match reason {
            SkipReason::Malformed(_) => self.stats.malformed += 1,
            SkipReason::TooFewUnits => self.stats.too_few_units += 1,
        }
        Err(reason)
    }

    pub fn ingest_fields(&mut self, row: &StringRecord) -> std::result::Result<Record, SkipReason> {
        match self.parse_symbols(row) {
            Ok((ts, symbols)) => {
                if symbols.len() < 2 {
                    return self.skip(SkipReason::TooFewUnits);
                }
                let units = symbols
                    .iter()
                    .map(|(attr, sym)| self.vocab.intern(*attr, sym))
                    .collect();
                self.stats.accepted += 1;
                Ok(Record::new(ts, units))
            }
            Err(msg) => self.skip(SkipReason::Malformed(msg)),
        }
    }

    /// Everything is validated before anything is interned, so a bad row
    /// leaves the vocabulary untouched.
    fn parse_symbols(
        &self,
        row: &StringRecord,
    ) -> std::result::Result<(i64, Vec<(AttrId, String)>), String> {
        let schema = self.schema;
        if row.len() != schema.columns().len() {
            return Err(format!(
                "expected {} fields, got {}",
                schema.columns().len(),
                row.len()
            ));
        }
        let ts_raw = &row[schema.timestamp_column()];
        let ts = parse_timestamp(ts_raw).ok_or_else(|| format!("bad timestamp '{ts_raw}'"))?;

        let opts = schema.options();
        let mut symbols: Vec<(AttrId, String)> = Vec::new();
        let mut lat: Vec<(AttrId, Option<f64>)> = Vec::new();
        let mut lon: Vec<(AttrId, Option<f64>)> = Vec::new();
        for (i, col) in schema.columns().iter().enumerate() {
            let Some(attr) = schema.column_attribute(i) else {
                continue;
            };
            let cell = row[i].trim();
            match col.kind {
                ColumnKind::Categorical => {
                    if !cell.is_empty() {
                        symbols.push((attr, cell.to_owned()));
                    }
                }
                ColumnKind::Set => {
                    for item in cell
                        .split(opts.set_separator)
                        .map(str::trim)
                        .filter(|s| !s.is_empty())
                    {
                        push_unique(&mut symbols, attr, item.to_owned());
                    }
                }
                ColumnKind::Text => {
                    for token in tokenize(cell) {
                        push_unique(&mut symbols, attr, token);
                    }
                }
                ColumnKind::Latitude | ColumnKind::Longitude => {
                    let value = if cell.is_empty() {
                        None
                    } else {
                        Some(
                            cell.parse::<f64>()
                                .map_err(|_| format!("bad coordinate '{cell}'"))?,
                        )
                    };
                    if col.kind == ColumnKind::Latitude {
                        lat.push((attr, value));
                    } else {
                        lon.push((attr, value));
                    }
                }
                ColumnKind::Timestamp | ColumnKind::Ignore => {}
            }
        }
        for (attr, la) in lat {
            let lo = lon.iter().find(|(a, _)| *a == attr).and_then(|(_, v)| *v);
            match (la, lo) {
                (Some(la), Some(lo)) => {
                    let cell = discretize_location(la, lo, opts.location_origin, opts.cell_m)
                        .map_err(|e| e.to_string())?;
                    symbols.push((attr, cell));
                }
                (None, None) => {}
                _ => return Err("only one of latitude/longitude present".into()),
            }
        }
        if let (Some(attr), Some(g)) = (schema.time_attribute(), opts.timestamp_granularity) {
            symbols.push((
                attr,
                discretize_timestamp(ts, g).map_err(|e| e.to_string())?,
            ));
        }
        Ok((ts, symbols))
    }
}

fn push_unique(symbols: &mut Vec<(AttrId, String)>, attr: AttrId, sym: String) {
    if !symbols.iter().any(|(a, s)| *a == attr && *s == sym) {
        symbols.push((attr, sym));
    }
}
