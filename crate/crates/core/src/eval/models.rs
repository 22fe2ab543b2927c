//! The compressed learner and the baselines behind one streaming interface.

use super::protocol::StreamingModel;
use super::EmbeddingSource;
use crate::baselines::{quantize_table, HashedTable, QuantizedTable};
use crate::engine::{pretrain_table, EngineConfig, ModelState, WindowReport};
use crate::error::Result;
use crate::parallel::{process_window_parallel, MergePolicy};
use crate::seed::{rng_for, tag};
use crate::stream::{UnitKey, UpdatingWindow};
use crate::trainer::{hydrate_missing, train_window, EmbeddingTable, TrainConfig};

impl EmbeddingSource for QuantizedTable {
    fn vector(&self, key: UnitKey) -> Option<Vec<f64>> {
        self.get(key)
    }
}

impl EmbeddingSource for HashedTable {
    fn vector(&self, key: UnitKey) -> Option<Vec<f64>> {
        self.get(key).map(<[f64]>::to_vec)
    }
}

/// The compressed model, streamed sequentially or with `workers` workers.
#[derive(Debug, Clone)]
pub struct CompressedModel {
    pub state: ModelState,
    pub workers: usize,
    pub policy: MergePolicy,
    pub reports: Vec<WindowReport>,
}

impl CompressedModel {
    pub fn new(state: ModelState, workers: usize) -> Self {
        CompressedModel {
            state,
            workers: workers.max(1),
            policy: MergePolicy::Mean,
            reports: Vec::new(),
        }
    }
}

impl StreamingModel for CompressedModel {
    fn name(&self) -> String {
        if self.workers == 1 {
            "compressed".into()
        } else {
            format!("compressed-p{}", self.workers)
        }
    }

    fn advance(&mut self, window: &UpdatingWindow) -> Result<()> {
        let report = if self.workers == 1 {
            self.state.process_window(window)?
        } else {
            process_window_parallel(&mut self.state, window, self.workers, self.policy)?
        };
        self.reports.push(report);
        Ok(())
    }

    fn source(&self) -> Result<Box<dyn EmbeddingSource + '_>> {
        Ok(Box::new(&self.state))
    }

    fn bytes(&self) -> u64 {
        self.state.memory_report().total
    }
}

/// A dense table kept for every unit, trained window by window.
#[derive(Debug, Clone)]
pub struct DenseModel {
    pub table: EmbeddingTable,
    pub train: TrainConfig,
    pub seed: u64,
}

impl DenseModel {
    pub fn pretrain(windows: &[UpdatingWindow], cfg: &EngineConfig) -> Result<Self> {
        let (table, _) = pretrain_table(windows, cfg)?;
        Ok(DenseModel {
            table,
            train: cfg.train.clone(),
            seed: cfg.seed,
        })
    }
}

impl StreamingModel for DenseModel {
    fn name(&self) -> String {
        format!("dense-d{}", self.train.dim)
    }

    fn advance(&mut self, window: &UpdatingWindow) -> Result<()> {
        hydrate_missing(&window.records, &mut self.table, self.seed);
        self.table.reset_accumulators();
        let mut rng = rng_for(self.seed, &[tag::TRAIN, window.id]);
        train_window(&window.records, &mut self.table, &self.train, &mut rng)?;
        Ok(())
    }

    fn source(&self) -> Result<Box<dyn EmbeddingSource + '_>> {
        Ok(Box::new(&self.table))
    }

    fn bytes(&self) -> u64 {
        self.table.dense_bytes()
    }
}

/// A dense model read through `bits`-bit quantization.
#[derive(Debug, Clone)]
pub struct QuantizedModel {
    pub dense: DenseModel,
    pub bits: u32,
}

impl StreamingModel for QuantizedModel {
    fn name(&self) -> String {
        format!("quantize-{}bit", self.bits)
    }

    fn advance(&mut self, window: &UpdatingWindow) -> Result<()> {
        self.dense.advance(window)
    }

    fn source(&self) -> Result<Box<dyn EmbeddingSource + '_>> {
        Ok(Box::new(quantize_table(&self.dense.table, self.bits)?))
    }

    fn bytes(&self) -> u64 {
        quantize_table(&self.dense.table, self.bits).map_or(0, |q| q.bytes())
    }
}

/// Units share rows by modulo hashing of their ids.
#[derive(Debug, Clone)]
pub struct HashedModel {
    pub hashed: HashedTable,
    pub gamma: f64,
    pub train: TrainConfig,
    pub seed: u64,
}

impl HashedModel {
    /// Size the buckets from the units seen in `windows`, then train on them.
    pub fn pretrain(windows: &[UpdatingWindow], gamma: f64, cfg: &EngineConfig) -> Result<Self> {
        let mut per_attr: Vec<std::collections::HashSet<u32>> = Vec::new();
        for u in windows
            .iter()
            .flat_map(|w| w.records.iter().flat_map(|r| &r.units))
        {
            let a = u.attr as usize;
            if per_attr.len() <= a {
                per_attr.resize_with(a + 1, Default::default);
            }
            per_attr[a].insert(u.id);
        }
        let counts: Vec<usize> = per_attr.iter().map(|s| s.len()).collect();
        let mut model = HashedModel {
            hashed: HashedTable::with_ratio(cfg.train.dim, gamma, &counts)?,
            gamma,
            train: cfg.train.clone(),
            seed: cfg.seed,
        };
        for w in windows {
            model.advance(w)?;
        }
        Ok(model)
    }
}

impl StreamingModel for HashedModel {
    fn name(&self) -> String {
        format!("hash-{:.3}", self.gamma)
    }

    fn advance(&mut self, window: &UpdatingWindow) -> Result<()> {
        let mut rng = rng_for(self.seed, &[tag::TRAIN, window.id]);
        self.hashed
            .train(&window.records, &self.train, self.seed, &mut rng)?;
        Ok(())
    }

    fn source(&self) -> Result<Box<dyn EmbeddingSource + '_>> {
        Ok(Box::new(&self.hashed))
    }

    fn bytes(&self) -> u64 {
        self.hashed.bytes()
    }
}
