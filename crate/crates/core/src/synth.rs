//! Planted synthetic streams.
//!
//! Units of every attribute are split into `groups` blocks. Each record picks
//! a group, then one unit per attribute from that group's block; with
//! probability `rho` an attribute's unit is instead drawn uniformly from all
//! of its units. Inter-arrival times are exponential, so arrivals form a
//! Poisson process.

use std::io::Write;

use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;
use rand_distr::Exp;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed::{rng_for, tag};
use crate::stream::{
    ColumnKind, ColumnSpec, Ingestor, Record, SchemaOptions, StreamSchema, Vocabulary,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub groups: usize,
    pub attributes: usize,
    pub units_per_attr: usize,
    pub rho: f64,
    pub records: usize,
    /// Mean seconds between records.
    pub mean_gap_s: f64,
    pub start_ts: i64,
    /// Group `g` gets a share of units proportional to `(g + 1)^-group_skew`.
    pub group_skew: f64,
    /// Within a group, unit `r` (by rank) is drawn with weight `(r + 1)^-popularity_skew`.
    pub popularity_skew: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            groups: 8,
            attributes: 2,
            units_per_attr: 200,
            rho: 0.1,
            records: 50_000,
            mean_gap_s: 60.0,
            start_ts: 1_600_000_000,
            group_skew: 0.0,
            popularity_skew: 0.0,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.groups == 0 || self.attributes < 2 || self.units_per_attr < self.groups {
            return Err(Error::Config(
                "synth needs >= 1 group, >= 2 attributes and at least one unit per group".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.rho) || !(self.mean_gap_s > 0.0) {
            return Err(Error::Config(
                "synth rho must lie in [0, 1] and mean gap be positive".into(),
            ));
        }
        if !(self.group_skew >= 0.0) || !(self.popularity_skew >= 0.0) {
            return Err(Error::Config("synth skews must be >= 0".into()));
        }
        Ok(())
    }

    pub fn attribute_name(&self, a: usize) -> String {
        format!("a{a}")
    }

    pub fn unit_symbol(&self, a: usize, id: usize) -> String {
        format!("a{a}_u{id}")
    }

    pub fn schema(&self) -> StreamSchema {
        let mut cols = vec![ColumnSpec::new("timestamp", ColumnKind::Timestamp)];
        cols.extend(
            (0..self.attributes)
                .map(|a| ColumnSpec::new(&self.attribute_name(a), ColumnKind::Categorical)),
        );
        StreamSchema::new(cols, SchemaOptions::default()).expect("synthetic schema is valid")
    }
}

/// Sizes of the `groups` blocks over `units` units.
pub fn group_sizes(units: usize, groups: usize, skew: f64) -> Vec<usize> {
    let w: Vec<f64> = (0..groups).map(|g| ((g + 1) as f64).powf(-skew)).collect();
    let total: f64 = w.iter().sum();
    let spare = units - groups;
    let mut sizes: Vec<usize> = w
        .iter()
        .map(|x| 1 + (spare as f64 * x / total).floor() as usize)
        .collect();
    let mut left = units - sizes.iter().sum::<usize>();
    let mut g = 0;
    while left > 0 {
        sizes[g % groups] += 1;
        left -= 1;
        g += 1;
    }
    sizes
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthStream {
    pub config: SynthConfig,
    /// `(timestamp, one unit id per attribute)`.
    pub rows: Vec<(i64, Vec<usize>)>,
    /// Planted group of every unit, per attribute.
    pub group_of: Vec<Vec<usize>>,
}

pub fn generate(cfg: &SynthConfig) -> Result<SynthStream> {
    cfg.validate()?;
    let mut rng = rng_for(cfg.seed, &[tag::SYNTH]);
    let sizes = group_sizes(cfg.units_per_attr, cfg.groups, cfg.group_skew);
    let mut group_of = vec![0usize; cfg.units_per_attr];
    let mut blocks: Vec<Vec<usize>> = Vec::with_capacity(cfg.groups);
    let mut next = 0;
    for (g, &s) in sizes.iter().enumerate() {
        blocks.push((next..next + s).collect());
        group_of[next..next + s].iter_mut().for_each(|x| *x = g);
        next += s;
    }
    let group_pick = WeightedIndex::new(&sizes).expect("group sizes are positive");
    let unit_pick: Vec<WeightedIndex<f64>> = blocks
        .iter()
        .map(|b| {
            WeightedIndex::new((0..b.len()).map(|r| ((r + 1) as f64).powf(-cfg.popularity_skew)))
                .unwrap()
        })
        .collect();
    let gap = Exp::new(1.0 / cfg.mean_gap_s).map_err(|e| Error::Config(e.to_string()))?;

    let mut t = 0.0f64;
    let mut rows = Vec::with_capacity(cfg.records);
    for _ in 0..cfg.records {
        t += gap.sample(&mut rng);
        let g = group_pick.sample(&mut rng);
        let units = (0..cfg.attributes)
            .map(|_| {
                if rng.gen::<f64>() < cfg.rho {
                    rng.gen_range(0..cfg.units_per_attr)
                } else {
                    blocks[g][unit_pick[g].sample(&mut rng)]
                }
            })
            .collect();
        rows.push((cfg.start_ts + t.floor() as i64, units));
    }
    Ok(SynthStream {
        config: cfg.clone(),
        rows,
        group_of: vec![group_of; cfg.attributes],
    })
}

impl SynthStream {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let cfg = &self.config;
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["timestamp".to_owned()];
        header.extend((0..cfg.attributes).map(|a| cfg.attribute_name(a)));
        w.write_record(&header)?;
        for (ts, units) in &self.rows {
            let mut row = vec![ts.to_string()];
            row.extend(
                units
                    .iter()
                    .enumerate()
                    .map(|(a, &u)| cfg.unit_symbol(a, u)),
            );
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    /// `unit_symbol,category_symbol` rows naming each unit's planted group.
    pub fn write_categories<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["unit_symbol", "category_symbol"])?;
        for (a, groups) in self.group_of.iter().enumerate() {
            for (u, g) in groups.iter().enumerate() {
                w.write_record([self.config.unit_symbol(a, u), format!("g{g}")])?;
            }
        }
        w.flush()?;
        Ok(())
    }

    /// Ingest the stream in memory, as if its CSV had been read.
    pub fn ingest(&self) -> Result<(StreamSchema, Vocabulary, Vec<Record>)> {
        let schema = self.config.schema();
        let mut vocab = Vocabulary::new(schema.n_attributes());
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        let records = Ingestor::new(&schema, &mut vocab).ingest_reader(buf.as_slice(), true)?;
        Ok((schema, vocab, records))
    }

    /// Planted group of a unit symbol, if it belongs to this stream.
    pub fn group_of_symbol(&self, symbol: &str) -> Option<usize> {
        let (a, u) = symbol.strip_prefix('a')?.split_once("_u")?;
        let (a, u): (usize, usize) = (a.parse().ok()?, u.parse().ok()?);
        self.group_of.get(a)?.get(u).copied()
    }
}
