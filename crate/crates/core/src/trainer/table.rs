use std::collections::{BTreeMap, HashMap};

use rand::Rng;

use crate::seed::{rng_for, tag};
use crate::stream::{AttrId, UnitKey};

/// Dense embeddings plus AdaGrad history for the units of one window.
///
/// Rows live in a flat buffer indexed by slot; slots are handed out in
/// insertion order, which keeps iteration deterministic.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    dim: usize,
    keys: Vec<UnitKey>,
    slots: HashMap<UnitKey, usize>,
    vectors: Vec<f64>,
    accum: Vec<f64>,
    pools: BTreeMap<AttrId, Vec<usize>>,
}

impl EmbeddingTable {
    pub fn new(dim: usize) -> Self {
        assert!(dim >= 1, "embedding width must be positive");
        EmbeddingTable {
            dim,
            keys: Vec::new(),
            slots: HashMap::new(),
            vectors: Vec::new(),
            accum: Vec::new(),
            pools: BTreeMap::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    pub fn keys(&self) -> &[UnitKey] {
        &self.keys
    }

    pub fn contains(&self, key: UnitKey) -> bool {
        self.slots.contains_key(&key)
    }

    pub fn slot(&self, key: UnitKey) -> Option<usize> {
        self.slots.get(&key).copied()
    }

    /// Insert or overwrite a row; a fresh row starts with a zero accumulator.
    pub fn insert(&mut self, key: UnitKey, vector: &[f64]) -> usize {
        assert_eq!(vector.len(), self.dim, "vector width mismatch");
        if let Some(slot) = self.slot(key) {
            self.row_mut(slot).copy_from_slice(vector);
            return slot;
        }
        let slot = self.keys.len();
        self.keys.push(key);
        self.slots.insert(key, slot);
        self.vectors.extend_from_slice(vector);
        self.accum.extend(std::iter::repeat(0.0).take(self.dim));
        self.pools.entry(key.attr).or_default().push(slot);
        slot
    }

    /// Insert a brand-new unit with entries uniform in `[-0.5/d, 0.5/d]`.
    ///
    /// The draw depends only on `(seed, key)`, so the same unit gets the same
    /// start wherever it is first hydrated.
    pub fn insert_random(&mut self, key: UnitKey, seed: u64) -> usize {
        let v = random_init(key, self.dim, seed);
        self.insert(key, &v)
    }

    pub fn get(&self, key: UnitKey) -> Option<&[f64]> {
        self.slot(key).map(|s| self.row(s))
    }

    pub fn row(&self, slot: usize) -> &[f64] {
        &self.vectors[slot * self.dim..(slot + 1) * self.dim]
    }

    pub fn row_mut(&mut self, slot: usize) -> &mut [f64] {
        &mut self.vectors[slot * self.dim..(slot + 1) * self.dim]
    }

    pub fn accumulator(&self, slot: usize) -> &[f64] {
        &self.accum[slot * self.dim..(slot + 1) * self.dim]
    }

    pub(crate) fn row_and_accum_mut(&mut self, slot: usize) -> (&mut [f64], &mut [f64]) {
        let r = slot * self.dim..(slot + 1) * self.dim;
        (&mut self.vectors[r.clone()], &mut self.accum[r])
    }

    /// Slots of `attr` in insertion order, the negative-sampling pool.
    pub fn pool(&self, attr: AttrId) -> &[usize] {
        self.pools.get(&attr).map_or(&[], Vec::as_slice)
    }

    pub fn reset_accumulators(&mut self) {
        self.accum.iter_mut().for_each(|a| *a = 0.0);
    }

    pub fn iter(&self) -> impl Iterator<Item = (UnitKey, &[f64])> {
        self.keys
            .iter()
            .enumerate()
            .map(move |(s, k)| (*k, self.row(s)))
    }

    /// Bytes this table would occupy as 4-byte floats.
    pub fn dense_bytes(&self) -> u64 {
        (self.keys.len() * self.dim * 4) as u64
    }
}

pub fn random_init(key: UnitKey, dim: usize, seed: u64) -> Vec<f64> {
    let mut rng = rng_for(seed, &[tag::UNIT_INIT, key.attr as u64, key.id as u64]);
    let half = 0.5 / dim as f64;
    (0..dim).map(|_| rng.gen_range(-half..half)).collect()
}
