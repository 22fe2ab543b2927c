//! Dense per-window embeddings trained by negative-sampling attribute recovery.

pub mod config;
pub mod ops;
pub mod sampler;
pub mod table;
pub mod train;

pub use config::TrainConfig;
pub use ops::{
    adagrad_step, adagrad_step_unit, adaptive_lr, context_mean, intra_agreement, recon_loss,
    record_agreement, score, sigmoid, ReconLoss,
};
pub use sampler::sample_negatives;
pub use table::{random_init, EmbeddingTable};
pub use train::{train_window, TrainReport};

use rand::Rng;

use crate::stream::{Record, UnitKey};

/// Add seeded random rows for any unit of `records` missing from `table`.
pub fn hydrate_missing(records: &[Record], table: &mut EmbeddingTable, seed: u64) -> Vec<UnitKey> {
    let mut added = Vec::new();
    for r in records {
        for &u in &r.units {
            if !table.contains(u) {
                table.insert_random(u, seed);
                added.push(u);
            }
        }
    }
    added
}

/// Train a table that persists across `windows`, with AdaGrad history
/// reset at every window boundary.
pub fn train_persistent<'a, I, R>(
    windows: I,
    table: &mut EmbeddingTable,
    cfg: &TrainConfig,
    seed: u64,
    rng: &mut R,
) -> crate::Result<Vec<TrainReport>>
where
    I: IntoIterator<Item = &'a [Record]>,
    R: Rng + ?Sized,
{
    let mut reports = Vec::new();
    for records in windows {
        hydrate_missing(records, table, seed);
        table.reset_accumulators();
        reports.push(train_window(records, table, cfg, rng)?);
    }
    Ok(reports)
}
