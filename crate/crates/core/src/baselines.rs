//! Memory-reduction baselines: post-hoc uniform quantization and the
//! hashing trick. A narrower dense table is the third baseline and needs no
//! code of its own.

use std::collections::BTreeMap;

use rand::Rng;

use crate::error::{Error, Result};
use crate::stream::{AttrId, Record, UnitKey};
use crate::trainer::{hydrate_missing, train_window, EmbeddingTable, TrainConfig, TrainReport};

/// Value range and bin count shared by every entry of one attribute.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bins {
    pub min: f64,
    pub max: f64,
    pub bits: u32,
}

impl Bins {
    pub fn n_bins(&self) -> u32 {
        1 << self.bits
    }

    pub fn width(&self) -> f64 {
        (self.max - self.min) / self.n_bins() as f64
    }

    /// Bin of `x`; the maximum falls in the last bin.
    pub fn index(&self, x: f64) -> u16 {
        if !(self.max > self.min) {
            return 0;
        }
        let i = ((x - self.min) / self.width()).floor();
        i.clamp(0.0, (self.n_bins() - 1) as f64) as u16
    }

    pub fn midpoint(&self, i: u16) -> f64 {
        if !(self.max > self.min) {
            return self.min;
        }
        self.min + (i as f64 + 0.5) * self.width()
    }
}

/// A dense table whose entries are replaced by `m`-bit bin indices.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantizedTable {
    dim: usize,
    bits: u32,
    bins: BTreeMap<AttrId, Bins>,
    keys: Vec<UnitKey>,
    slots: std::collections::HashMap<UnitKey, usize>,
    codes: Vec<u16>,
}

pub fn quantize_table(table: &EmbeddingTable, bits: u32) -> Result<QuantizedTable> {
    if !(1..=16).contains(&bits) {
        return Err(Error::Parameter(format!(
            "quantization needs 1..=16 bits, got {bits}"
        )));
    }
    if table.is_empty() {
        return Err(Error::Parameter("cannot quantize an empty table".into()));
    }
    let mut bins: BTreeMap<AttrId, Bins> = BTreeMap::new();
    for (k, v) in table.iter() {
        let b = bins.entry(k.attr).or_insert(Bins {
            min: f64::INFINITY,
            max: f64::NEG_INFINITY,
            bits,
        });
        for &x in v {
            b.min = b.min.min(x);
            b.max = b.max.max(x);
        }
    }
    let mut q = QuantizedTable {
        dim: table.dim(),
        bits,
        bins,
        keys: Vec::with_capacity(table.len()),
        slots: Default::default(),
        codes: Vec::with_capacity(table.len() * table.dim()),
    };
    for (k, v) in table.iter() {
        let b = q.bins[&k.attr];
        q.slots.insert(k, q.keys.len());
        q.keys.push(k);
        q.codes.extend(v.iter().map(|&x| b.index(x)));
    }
    Ok(q)
}

impl QuantizedTable {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn bits(&self) -> u32 {
        self.bits
    }

    pub fn bins(&self, attr: AttrId) -> Option<Bins> {
        self.bins.get(&attr).copied()
    }

    pub fn indices(&self, key: UnitKey) -> Option<&[u16]> {
        let s = *self.slots.get(&key)?;
        Some(&self.codes[s * self.dim..(s + 1) * self.dim])
    }

    /// Bin midpoints of a unit's entries.
    pub fn get(&self, key: UnitKey) -> Option<Vec<f64>> {
        let b = self.bins.get(&key.attr)?;
        Some(self.indices(key)?.iter().map(|&i| b.midpoint(i)).collect())
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    /// `units·d·m` bits rounded up to bytes, plus two 4-byte edges per attribute.
    pub fn bytes(&self) -> u64 {
        let bits = (self.keys.len() * self.dim) as u64 * self.bits as u64;
        bits.div_ceil(8) + self.bins.len() as u64 * 8
    }
}

/// Shared-vector index of a unit under modulo hashing.
pub fn hash_assign(unit_id: u32, divisor: u32) -> u32 {
    unit_id % divisor.max(1)
}

/// `max(1, round(γ·n))`.
pub fn hash_divisor(gamma: f64, n_units: usize) -> Result<u32> {
    if !(gamma > 0.0 && gamma <= 1.0) {
        return Err(Error::Parameter(format!(
            "hash ratio must lie in (0, 1], got {gamma}"
        )));
    }
    Ok(((gamma * n_units as f64).round() as u32).max(1))
}

/// Dense training where every unit reads and writes its hashed row.
#[derive(Debug, Clone, PartialEq)]
pub struct HashedTable {
    divisors: Vec<u32>,
    table: EmbeddingTable,
}

impl HashedTable {
    /// `divisors[a]` shared rows for attribute `a`.
    pub fn new(dim: usize, divisors: Vec<u32>) -> Self {
        HashedTable {
            divisors,
            table: EmbeddingTable::new(dim),
        }
    }

    pub fn with_ratio(dim: usize, gamma: f64, units_per_attr: &[usize]) -> Result<Self> {
        let divisors = units_per_attr
            .iter()
            .map(|&n| hash_divisor(gamma, n))
            .collect::<Result<_>>()?;
        Ok(Self::new(dim, divisors))
    }

    pub fn divisors(&self) -> &[u32] {
        &self.divisors
    }

    pub fn bucket(&self, key: UnitKey) -> UnitKey {
        let d = self.divisors.get(key.attr as usize).copied().unwrap_or(1);
        UnitKey::new(key.attr, hash_assign(key.id, d))
    }

    fn map_records(&self, records: &[Record]) -> Vec<Record> {
        records
            .iter()
            .map(|r| {
                Record::new(
                    r.timestamp,
                    r.units.iter().map(|&u| self.bucket(u)).collect(),
                )
            })
            .collect()
    }

    /// Run the dense trainer on `records` with every unit replaced by its
    /// bucket; colliding units share one row and its gradients.
    pub fn train<R: Rng + ?Sized>(
        &mut self,
        records: &[Record],
        cfg: &TrainConfig,
        init_seed: u64,
        rng: &mut R,
    ) -> Result<TrainReport> {
        let mapped = self.map_records(records);
        hydrate_missing(&mapped, &mut self.table, init_seed);
        self.table.reset_accumulators();
        train_window(&mapped, &mut self.table, cfg, rng)
    }

    pub fn get(&self, key: UnitKey) -> Option<&[f64]> {
        self.table.get(self.bucket(key))
    }

    pub fn table(&self) -> &EmbeddingTable {
        &self.table
    }

    /// `D·d·4` bytes per attribute, independent of the vocabulary size.
    pub fn bytes(&self) -> u64 {
        self.divisors.iter().map(|&d| d as u64).sum::<u64>() * self.table.dim() as u64 * 4
    }
}

/// Train a hashed table over a window sequence.
pub fn train_hashed<'a, I, R>(
    windows: I,
    gamma: f64,
    units_per_attr: &[usize],
    cfg: &TrainConfig,
    init_seed: u64,
    rng: &mut R,
) -> Result<HashedTable>
where
    I: IntoIterator<Item = &'a [Record]>,
    R: Rng + ?Sized,
{
    let mut h = HashedTable::with_ratio(cfg.dim, gamma, units_per_attr)?;
    for records in windows {
        h.train(records, cfg, init_seed, rng)?;
    }
    Ok(h)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::rng_for;

    #[test]
    fn one_bit_bins_over_unit_interval() {
        let b = Bins {
            min: 0.0,
            max: 1.0,
            bits: 1,
        };
        assert_eq!(b.index(0.0), 0);
        assert_eq!(b.index(0.49), 0);
        assert_eq!(b.index(0.5), 1);
        assert_eq!(b.index(1.0), 1);
        assert_eq!(b.midpoint(0), 0.25);
        assert_eq!(b.midpoint(1), 0.75);
    }

    #[test]
    fn quantization_error_within_half_bin() {
        let mut t = EmbeddingTable::new(4);
        t.insert(UnitKey::new(0, 0), &[0.0, 0.3, -0.2, 0.9]);
        t.insert(UnitKey::new(0, 1), &[-0.5, 0.1, 0.2, 0.45]);
        t.insert(UnitKey::new(1, 0), &[3.0, 3.0, 3.0, 3.0]);
        for bits in 1..=6 {
            let q = quantize_table(&t, bits).unwrap();
            let b = q.bins(0).unwrap();
            assert_eq!(q.indices(UnitKey::new(0, 1)).unwrap()[0], 0);
            assert_eq!(q.indices(UnitKey::new(0, 0)).unwrap()[3], (1 << bits) - 1);
            for (k, v) in t.iter().filter(|(k, _)| k.attr == 0) {
                for (a, x) in q.get(k).unwrap().iter().zip(v) {
                    assert!((a - x).abs() <= b.width() / 2.0 + 1e-12);
                }
            }
            // constant attribute collapses to its single value
            assert_eq!(q.get(UnitKey::new(1, 0)).unwrap(), vec![3.0; 4]);
        }
        assert!(quantize_table(&t, 0).is_err());
        assert!(quantize_table(&t, 17).is_err());
    }

    #[test]
    fn quantized_bytes() {
        let mut t = EmbeddingTable::new(10);
        for i in 0..8 {
            t.insert(UnitKey::new(0, i), &[0.1 * i as f64; 10]);
        }
        let q = quantize_table(&t, 2).unwrap();
        assert_eq!(q.bytes(), 8 * 10 * 2 / 8 + 8);
        assert!(q.bytes() < t.dense_bytes());
    }

    #[test]
    fn hashing_examples() {
        assert!((0..10).all(|u| hash_assign(u, 1) == 0));
        let idx: Vec<u32> = (0..6).map(|u| hash_assign(u, 3)).collect();
        assert_eq!(idx, vec![0, 1, 2, 0, 1, 2]);
        assert_eq!(hash_divisor(0.1, 50).unwrap(), 5);
        assert_eq!(hash_divisor(0.001, 50).unwrap(), 1);
        assert!(hash_divisor(0.0, 50).is_err());
    }

    #[test]
    fn full_ratio_matches_dense_training() {
        let recs: Vec<Record> = (0..30)
            .map(|i| {
                Record::new(
                    i,
                    vec![
                        UnitKey::new(0, (i % 5) as u32),
                        UnitKey::new(1, (i % 7) as u32),
                    ],
                )
            })
            .collect();
        let cfg = TrainConfig {
            dim: 8,
            epochs: 3,
            ..TrainConfig::default()
        };
        let mut h = HashedTable::with_ratio(8, 1.0, &[5, 7]).unwrap();
        h.train(&recs, &cfg, 3, &mut rng_for(1, &[])).unwrap();
        let mut dense = EmbeddingTable::new(8);
        hydrate_missing(&recs, &mut dense, 3);
        train_window(&recs, &mut dense, &cfg, &mut rng_for(1, &[])).unwrap();
        assert_eq!(h.table(), &dense);
        assert_eq!(h.bytes(), 12 * 8 * 4);
    }
}
