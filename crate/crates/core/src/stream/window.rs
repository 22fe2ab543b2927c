use std::collections::HashSet;
use std::io::Write;

use super::ingest::Record;
use super::vocab::{AttrId, UnitKey};
use crate::error::{Error, Result};

/// A half-open time slice `[start, start + span)` of the stream.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UpdatingWindow {
    pub id: u64,
    pub start: i64,
    pub span: i64,
    pub records: Vec<Record>,
}

impl UpdatingWindow {
    pub fn end(&self) -> i64 {
        self.start + self.span
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Distinct units in first-occurrence order.
    pub fn distinct_units(&self) -> Vec<UnitKey> {
        let mut seen = HashSet::new();
        self.records
            .iter()
            .flat_map(|r| r.units.iter().copied())
            .filter(|u| seen.insert(*u))
            .collect()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Segmentation {
    pub windows: Vec<UpdatingWindow>,
    /// Records dropped for arriving out of chronological order.
    pub late: u64,
}

/// Cut a chronological record stream into consecutive windows of `span` seconds.
///
/// Windows are aligned to multiples of `span` since the epoch; ids count from
/// the window holding the first record, and empty windows in between are kept.
pub fn segment_windows<I>(records: I, span: i64) -> Result<Segmentation>
where
    I: IntoIterator<Item = Record>,
{
    if span <= 0 {
        return Err(Error::Parameter(format!(
            "window length must be positive, got {span}"
        )));
    }
    let mut out = Segmentation::default();
    let mut first_bucket: Option<i64> = None;
    let mut last_ts = i64::MIN;
    for record in records {
        if record.timestamp < last_ts {
            out.late += 1;
            continue;
        }
        last_ts = record.timestamp;
        let bucket = record.timestamp.div_euclid(span);
        let first = *first_bucket.get_or_insert(bucket);
        let id = (bucket - first) as u64;
        while out.windows.len() as u64 <= id {
            let next = out.windows.len() as i64;
            out.windows.push(UpdatingWindow {
                id: next as u64,
                start: (first + next) * span,
                span,
                records: Vec::new(),
            });
        }
        out.windows[id as usize].records.push(record);
    }
    Ok(out)
}

/// For each window: distinct `attr` units in the window over distinct units
/// seen up to and including it. Windows before the attribute first appears
/// yield `None`.
pub fn window_novelty_stats(windows: &[UpdatingWindow], attr: AttrId) -> Vec<(u64, Option<f64>)> {
    let mut seen: HashSet<u32> = HashSet::new();
    windows
        .iter()
        .map(|w| {
            let local: HashSet<u32> = w
                .records
                .iter()
                .flat_map(|r| r.units.iter())
                .filter(|u| u.attr == attr)
                .map(|u| u.id)
                .collect();
            seen.extend(local.iter().copied());
            let frac = if seen.is_empty() {
                None
            } else {
                Some(local.len() as f64 / seen.len() as f64)
            };
            (w.id, frac)
        })
        .collect()
}

/// Write novelty fractions as CSV `window_id,fraction`.
pub fn write_novelty_csv<W: Write>(out: W, stats: &[(u64, Option<f64>)]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["window_id", "fraction"])?;
    for (id, frac) in stats {
        if let Some(f) = frac {
            w.write_record([id.to_string(), f.to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}
