use std::io::Write;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::config::TrainConfig;
use super::ops::{adagrad_step, adaptive_lr, intra_agreement, recon_loss_into, ReconLoss};
use super::sampler::sample_negatives;
use super::table::EmbeddingTable;
use crate::error::{Error, Result};
use crate::stream::Record;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Mean recovery loss per epoch.
    pub epoch_loss: Vec<f64>,
    pub pairs: u64,
    /// Positive pairs with no context or no eligible negative.
    pub skipped_pairs: u64,
    /// Pairs that got fewer negatives than configured.
    pub short_negatives: u64,
    /// Updates dropped because of a non-finite gradient.
    pub skipped_steps: u64,
}

impl TrainReport {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["epoch", "mean_loss"])?;
        for (e, l) in self.epoch_loss.iter().enumerate() {
            w.write_record([(e + 1).to_string(), l.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Optimize the recovery loss over `records` for `cfg.epochs` epochs.
///
/// Every unit of every record must already have a row in `table`. Within a
/// record the agreement and learning rate are computed once from the
/// pre-update vectors; each unit of the record then takes one negative
/// sampling step that updates itself, its negatives and its context.
pub fn train_window<R: Rng + ?Sized>(
    records: &[Record],
    table: &mut EmbeddingTable,
    cfg: &TrainConfig,
    rng: &mut R,
) -> Result<TrainReport> {
    let mut report = TrainReport::default();
    if records.is_empty() {
        return Ok(report);
    }
    let slotted: Vec<Vec<usize>> = records
        .iter()
        .map(|r| {
            r.units
                .iter()
                .map(|u| table.slot(*u).ok_or(Error::MissingUnit(*u)))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;

    let dim = table.dim();
    let mut order: Vec<usize> = (0..slotted.len()).collect();
    let mut h = vec![0.0; dim];
    let mut share = vec![0.0; dim];
    let mut grads = ReconLoss::default();
    let mut negatives: Vec<usize> = Vec::with_capacity(cfg.negatives);

    for _ in 0..cfg.epochs {
        if cfg.shuffle {
            order.shuffle(rng);
        }
        let mut loss_sum = 0.0;
        let mut pairs = 0u64;
        for &ri in &order {
            let slots = &slotted[ri];
            if slots.len() < 2 {
                report.skipped_pairs += slots.len() as u64;
                continue;
            }
            let psi = {
                let rows: Vec<&[f64]> = slots.iter().map(|&s| table.row(s)).collect();
                intra_agreement(&rows).unwrap_or(0.5)
            };
            let lr = adaptive_lr(psi, cfg.learning_rate, cfg.tau);

            for (i, &x) in slots.iter().enumerate() {
                let attr = table.keys()[x].attr;
                negatives.clear();
                negatives.extend(sample_negatives(
                    table.pool(attr),
                    slots,
                    cfg.negatives,
                    rng,
                ));
                if negatives.is_empty() {
                    report.skipped_pairs += 1;
                    continue;
                }
                if negatives.len() < cfg.negatives {
                    report.short_negatives += 1;
                }

                h.iter_mut().for_each(|v| *v = 0.0);
                for (j, &c) in slots.iter().enumerate() {
                    if j != i {
                        h.iter_mut().zip(table.row(c)).for_each(|(a, b)| *a += b);
                    }
                }
                let n_ctx = slots.len() - 1;
                let inv = 1.0 / n_ctx as f64;
                h.iter_mut().for_each(|v| *v *= inv);

                {
                    let neg_rows: Vec<&[f64]> = negatives.iter().map(|&n| table.row(n)).collect();
                    recon_loss_into(table.row(x), &neg_rows, &h, &mut grads);
                }
                loss_sum += grads.loss;
                pairs += 1;

                let mut step = |slot: usize, g: &[f64], table: &mut EmbeddingTable| {
                    let (v, a) = table.row_and_accum_mut(slot);
                    if !adagrad_step(v, a, g, lr, cfg.epsilon) {
                        report.skipped_steps += 1;
                    }
                };
                step(x, &grads.grad_target, table);
                for (k, &n) in negatives.iter().enumerate() {
                    step(n, &grads.grad_negatives[k], table);
                }
                share
                    .iter_mut()
                    .zip(&grads.grad_context)
                    .for_each(|(s, g)| *s = g * inv);
                for (j, &c) in slots.iter().enumerate() {
                    if j != i {
                        step(c, &share, table);
                    }
                }
            }
        }
        report.pairs += pairs;
        report.epoch_loss.push(if pairs > 0 {
            loss_sum / pairs as f64
        } else {
            0.0
        });
    }
    Ok(report)
}
