//! The sequential online learner: pretraining, then one
//! hydrate → train → assign → compress → discard cycle per window.

pub mod persist;
pub mod report;

pub use persist::{from_bytes, load, model_checksum, save, to_bytes, FORMAT_VERSION};
pub use report::{MemoryReport, PhaseTimes, PretrainReport, WindowReport};

use std::collections::HashSet;
use std::time::Instant;

use log::warn;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::codebook::{
    initialize_attribute, AttributeCodebook, AttributePlan, CodebookBytes, CompressionConfig,
    FitMode, FitScratch,
};
use crate::error::{Error, Result};
use crate::seed::{rng_for, tag};
use crate::stream::{AttrId, Record, UnitKey, UpdatingWindow, Vocabulary};
use crate::trainer::{
    hydrate_missing, random_init, train_window, EmbeddingTable, TrainConfig, TrainReport,
};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EngineConfig {
    pub train: TrainConfig,
    pub compression: CompressionConfig,
    pub seed: u64,
}

impl EngineConfig {
    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        self.compression.validate()
    }
}

/// Distinct units of `records` in first-occurrence order.
pub fn distinct_units(records: &[Record]) -> Vec<UnitKey> {
    let mut seen = HashSet::new();
    records
        .iter()
        .flat_map(|r| r.units.iter().copied())
        .filter(|u| seen.insert(*u))
        .collect()
}

fn ms_since(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1e3
}

/// Train one dense table that persists across `windows`, with AdaGrad
/// history reset at each window.
pub fn pretrain_table(
    windows: &[UpdatingWindow],
    cfg: &EngineConfig,
) -> Result<(EmbeddingTable, Vec<TrainReport>)> {
    cfg.validate()?;
    let mut table = EmbeddingTable::new(cfg.train.dim);
    let mut reports = Vec::with_capacity(windows.len());
    for w in windows {
        hydrate_missing(&w.records, &mut table, cfg.seed);
        table.reset_accumulators();
        let mut rng = rng_for(cfg.seed, &[tag::TRAIN, w.id]);
        reports.push(train_window(&w.records, &mut table, &cfg.train, &mut rng)?);
    }
    Ok((table, reports))
}

/// Everything the learner keeps between windows.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelState {
    vocab: Vocabulary,
    books: Vec<Option<AttributeCodebook>>,
    config: EngineConfig,
    cursor: Option<u64>,
    /// The costly table, present only while a window is being absorbed.
    costly: Option<EmbeddingTable>,
}

impl ModelState {
    /// Pretrain a dense table over `windows`, compress it, and drop it.
    pub fn pretrain(
        windows: &[UpdatingWindow],
        vocab: Vocabulary,
        plans: &[AttributePlan],
        cfg: EngineConfig,
    ) -> Result<(Self, PretrainReport)> {
        let records: usize = windows.iter().map(|w| w.records.len()).sum();
        if records == 0 {
            return Err(Error::Parameter("pretraining stream has no records".into()));
        }
        let (table, train) = pretrain_table(windows, &cfg)?;
        let cursor = windows.last().map(|w| w.id);
        let (mut state, init) = Self::from_pretrained(&table, vocab, plans, cfg)?;
        state.cursor = cursor;
        Ok((
            state,
            PretrainReport {
                windows: windows.len(),
                records,
                train,
                init,
            },
        ))
    }

    /// Build the compressed model from an already trained dense table.
    /// Attributes with no rows in `table` are left out of the model.
    pub fn from_pretrained(
        table: &EmbeddingTable,
        vocab: Vocabulary,
        plans: &[AttributePlan],
        config: EngineConfig,
    ) -> Result<(Self, Vec<Option<crate::codebook::InitReport>>)> {
        config.validate()?;
        if table.is_empty() {
            return Err(Error::Parameter(
                "nothing to compress: pretrained table is empty".into(),
            ));
        }
        let default_plan = AttributePlan::default();
        let mut books = Vec::with_capacity(vocab.n_attributes());
        let mut reports = Vec::with_capacity(vocab.n_attributes());
        for a in 0..vocab.n_attributes() {
            let attr = a as AttrId;
            if table.pool(attr).is_empty() {
                warn!(
                    "attribute {attr} never observed during pretraining; leaving it uncompressed"
                );
                books.push(None);
                reports.push(None);
                continue;
            }
            let plan = plans.get(a).unwrap_or(&default_plan);
            let (book, rep) =
                initialize_attribute(attr, table, &vocab, plan, &config.compression, config.seed)?;
            books.push(Some(book));
            reports.push(Some(rep));
        }
        Ok((
            ModelState {
                vocab,
                books,
                config,
                cursor: None,
                costly: None,
            },
            reports,
        ))
    }

    pub(crate) fn from_parts(
        vocab: Vocabulary,
        books: Vec<Option<AttributeCodebook>>,
        config: EngineConfig,
        cursor: Option<u64>,
    ) -> Self {
        ModelState {
            vocab,
            books,
            config,
            cursor,
            costly: None,
        }
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    /// Replace the vocabulary by one that extends it, e.g. after ingesting
    /// more of the stream with the model's vocabulary as the starting point.
    pub fn adopt_vocabulary(&mut self, vocab: Vocabulary) -> Result<()> {
        let compatible = vocab.n_attributes() == self.vocab.n_attributes()
            && (0..vocab.n_attributes()).all(|a| {
                let (old, new) = (self.vocab.symbols(a as AttrId), vocab.symbols(a as AttrId));
                new.len() >= old.len() && new[..old.len()] == *old
            });
        if !compatible {
            return Err(Error::Config(
                "vocabulary does not extend the model's vocabulary".into(),
            ));
        }
        self.vocab = vocab;
        Ok(())
    }

    pub fn config(&self) -> &EngineConfig {
        &self.config
    }

    /// Replace the training settings used by later windows.
    pub fn set_train_config(&mut self, train: TrainConfig) -> Result<()> {
        if train.dim != self.config.train.dim {
            return Err(Error::Config(format!(
                "cannot change embedding width from {} to {}",
                self.config.train.dim, train.dim
            )));
        }
        train.validate()?;
        self.config.train = train;
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.config.train.dim
    }

    pub fn seed(&self) -> u64 {
        self.config.seed
    }

    /// Id of the last window absorbed.
    pub fn cursor(&self) -> Option<u64> {
        self.cursor
    }

    pub fn books(&self) -> &[Option<AttributeCodebook>] {
        &self.books
    }

    pub fn book(&self, attr: AttrId) -> Option<&AttributeCodebook> {
        self.books.get(attr as usize).and_then(Option::as_ref)
    }

    pub fn knows(&self, key: UnitKey) -> bool {
        self.book(key.attr).is_some_and(|b| b.contains(key.id))
    }

    /// Reconstructed embedding of a compressed unit.
    pub fn embedding(&self, key: UnitKey) -> Result<Option<Vec<f64>>> {
        match self.book(key.attr) {
            Some(b) => b.reconstruct(key.id),
            None => Ok(None),
        }
    }

    /// Units with a code, per attribute, in id order.
    pub fn known_units(&self, attr: AttrId) -> Vec<UnitKey> {
        self.book(attr)
            .map(|b| b.codes().map(|(id, _)| UnitKey::new(attr, id)).collect())
            .unwrap_or_default()
    }

    /// Dense rows for `units`: reconstructions for compressed units, seeded
    /// random vectors for the rest.
    pub fn hydrate_costly(&self, units: &[UnitKey], init_seed: u64) -> Result<EmbeddingTable> {
        let mut table = EmbeddingTable::new(self.dim());
        for &u in units {
            match self.embedding(u)? {
                Some(v) => table.insert(u, &v),
                None => table.insert(u, &random_init(u, self.dim(), init_seed)),
            };
        }
        Ok(table)
    }

    /// Hydrate the units of `records` and train them; the model is not touched.
    pub fn train_records<R: Rng + ?Sized>(
        &self,
        records: &[Record],
        init_seed: u64,
        rng: &mut R,
    ) -> Result<(EmbeddingTable, TrainReport)> {
        let mut table = self.hydrate_costly(&distinct_units(records), init_seed)?;
        let report = train_window(records, &mut table, &self.config.train, rng)?;
        Ok((table, report))
    }

    /// Give every new unit of `table` a cluster and a code, then refit the
    /// codes of all of its units against their trained vectors. The table is
    /// dropped before returning.
    pub fn absorb(&mut self, table: EmbeddingTable, report: &mut WindowReport) -> Result<()> {
        self.costly = Some(table);
        let result = self.absorb_costly(report);
        self.costly = None;
        result
    }

    fn absorb_costly(&mut self, report: &mut WindowReport) -> Result<()> {
        let table = self
            .costly
            .as_ref()
            .expect("costly table present while absorbing");
        let t = Instant::now();
        report.new_units = vec![0; self.books.len()];
        report.window_units = table.len();
        for (key, v) in table.iter() {
            let Some(book) = self
                .books
                .get_mut(key.attr as usize)
                .and_then(Option::as_mut)
            else {
                continue;
            };
            if !book.contains(key.id) {
                let symbol = self.vocab.symbol(key).unwrap_or("");
                book.admit(key.id, symbol, v)?;
                report.new_units[key.attr as usize] += 1;
            }
        }
        report.phases.assign_ms = ms_since(t);

        let t = Instant::now();
        let mut scratch = FitScratch::default();
        let (mut before, mut after, mut fitted) = (0.0, 0.0, 0usize);
        for (key, v) in table.iter() {
            let Some(book) = self
                .books
                .get_mut(key.attr as usize)
                .and_then(Option::as_mut)
            else {
                continue;
            };
            let out = book.fit_unit(
                key.id,
                v,
                &self.config.compression,
                FitMode::CodeAndBasis,
                &mut scratch,
            )?;
            if out.skipped {
                report.skipped_fits += 1;
            } else {
                before += out.loss_before;
                after += out.loss_after;
                fitted += 1;
            }
        }
        if fitted > 0 {
            report.compression_loss_before = before / fitted as f64;
            report.compression_loss_after = after / fitted as f64;
        }
        report.phases.compress_ms = ms_since(t);
        Ok(())
    }

    /// Learn from one window. The model changes only after training has
    /// succeeded.
    pub fn process_window(&mut self, window: &UpdatingWindow) -> Result<WindowReport> {
        self.check_next(window.id)?;
        let mut report = WindowReport {
            window_id: window.id,
            records: window.records.len(),
            new_units: vec![0; self.books.len()],
            ..WindowReport::default()
        };
        if !window.is_empty() {
            let t = Instant::now();
            let mut table = self.hydrate_costly(&window.distinct_units(), self.seed())?;
            report.phases.hydrate_ms = ms_since(t);

            let t = Instant::now();
            let mut rng = rng_for(self.seed(), &[tag::TRAIN, window.id]);
            let train = train_window(&window.records, &mut table, &self.config.train, &mut rng)?;
            report.phases.train_ms = ms_since(t);
            report.absorb_train(&train);

            self.absorb(table, &mut report)?;
        }
        self.cursor = Some(window.id);
        report.model_bytes = self.memory_report().total;
        Ok(report)
    }

    pub(crate) fn check_next(&self, window_id: u64) -> Result<()> {
        match self.cursor {
            Some(c) if window_id <= c => Err(Error::Parameter(format!(
                "window {window_id} is not after the last processed window {c}"
            ))),
            _ => Ok(()),
        }
    }

    pub(crate) fn set_cursor(&mut self, id: u64) {
        self.cursor = Some(id);
    }

    pub fn memory_report(&self) -> MemoryReport {
        let mut bytes = CodebookBytes::default();
        let mut units = 0u64;
        for b in self.books.iter().flatten() {
            bytes += b.bytes();
            units += b.n_codes() as u64;
        }
        MemoryReport {
            codes: bytes.codes,
            bases: bytes.bases,
            assignments: bytes.assignments,
            total: bytes.total(),
            dense_resident: self.costly.as_ref().map_or(0, EmbeddingTable::dense_bytes),
            costly_baseline: units * self.dim() as u64 * 4,
            units,
        }
    }

    /// Fraction of code capacity holding nonzero weights, over all attributes.
    pub fn nonzero_fraction(&self) -> f64 {
        let (mut nnz, mut cap) = (0usize, 0usize);
        for b in self.books.iter().flatten() {
            for (_, c) in b.codes() {
                nnz += c.nnz();
                cap += c.n_basis();
            }
        }
        if cap == 0 {
            0.0
        } else {
            nnz as f64 / cap as f64
        }
    }
}
