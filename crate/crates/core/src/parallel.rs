//! Fork-join window processing: shared-nothing workers train shards of a
//! window against a read-only model, then one writer merges and compresses.
//!
//! Workers exchange data with the driver only by value (the model snapshot
//! in, a [`WorkerResult`] out), so they could as well run in other processes.

use std::collections::HashMap;
use std::thread;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::engine::{distinct_units, ModelState, WindowReport};
use crate::error::{Error, Result};
use crate::eval::{run_protocol, CompressedModel, ProtocolConfig};
use crate::seed::{derive_seed, rng_for, tag};
use crate::stream::{Record, UnitKey, UpdatingWindow};
use crate::trainer::{EmbeddingTable, TrainReport};

/// Round-robin assignment of a window's records to `p` workers.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ShardPlan {
    pub p: usize,
    /// Worker of each record, by arrival index.
    pub assignment: Vec<usize>,
}

pub fn shard_window(n_records: usize, p: usize) -> Result<ShardPlan> {
    if p == 0 {
        return Err(Error::Parameter("worker count must be at least 1".into()));
    }
    Ok(ShardPlan {
        p,
        assignment: (0..n_records).map(|i| i % p).collect(),
    })
}

impl ShardPlan {
    /// Records of every worker, each in arrival order.
    pub fn split(&self, records: &[Record]) -> Vec<Vec<Record>> {
        let mut shards = vec![Vec::new(); self.p];
        for (r, &w) in records.iter().zip(&self.assignment) {
            shards[w].push(r.clone());
        }
        shards
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WorkerResult {
    pub worker: usize,
    /// Trained rows of the shard's distinct units.
    pub table: EmbeddingTable,
    /// Occurrences of each row's unit in the shard, by table slot.
    pub update_counts: Vec<u64>,
    pub train: TrainReport,
    pub elapsed_ms: f64,
}

/// Seeds of one worker. Worker 0 uses the run's own streams, which makes a
/// single worker reproduce the sequential engine exactly.
pub fn worker_seeds(
    run_seed: u64,
    window_id: u64,
    worker: usize,
) -> (u64, rand_chacha::ChaCha8Rng) {
    if worker == 0 {
        (run_seed, rng_for(run_seed, &[tag::TRAIN, window_id]))
    } else {
        let w = worker as u64;
        (
            derive_seed(run_seed, &[tag::UNIT_INIT, w]),
            rng_for(run_seed, &[tag::TRAIN, window_id, w]),
        )
    }
}

pub fn worker_run(
    worker: usize,
    records: &[Record],
    snapshot: &ModelState,
    window_id: u64,
) -> Result<WorkerResult> {
    let t = Instant::now();
    let (init_seed, mut rng) = worker_seeds(snapshot.seed(), window_id, worker);
    let (table, train) = snapshot.train_records(records, init_seed, &mut rng)?;
    let mut counts: HashMap<UnitKey, u64> = HashMap::new();
    for u in records.iter().flat_map(|r| &r.units) {
        *counts.entry(*u).or_default() += 1;
    }
    let update_counts = table.keys().iter().map(|k| counts[k]).collect();
    Ok(WorkerResult {
        worker,
        table,
        update_counts,
        train,
        elapsed_ms: t.elapsed().as_secs_f64() * 1e3,
    })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MergePolicy {
    /// Plain mean of the workers' vectors.
    #[default]
    Mean,
    /// Mean weighted by each worker's occurrence count of the unit.
    CountWeighted,
}

/// Combine worker tables. A unit trained by one worker keeps that vector;
/// a unit trained by several gets their (weighted) mean, summed in worker-id
/// order so the result does not depend on the order of `results`.
pub fn merge_updates(results: &[WorkerResult], policy: MergePolicy) -> Result<EmbeddingTable> {
    let mut ordered: Vec<&WorkerResult> = results.iter().collect();
    ordered.sort_by_key(|r| r.worker);
    let Some(first) = ordered.iter().find(|r| !r.table.is_empty()) else {
        let dim = results.first().map_or(1, |r| r.table.dim());
        return Ok(EmbeddingTable::new(dim));
    };
    let dim = first.table.dim();
    // unit -> (vector sum, total weight, contributors)
    let mut order: Vec<UnitKey> = Vec::new();
    let mut acc: HashMap<UnitKey, (Vec<f64>, f64, usize, Vec<f64>)> = HashMap::new();
    for r in &ordered {
        if r.table.dim() != dim {
            return Err(Error::CorruptResult(format!(
                "worker {} returned width {}, expected {dim}",
                r.worker,
                r.table.dim()
            )));
        }
        if r.update_counts.len() != r.table.len() {
            return Err(Error::CorruptResult(format!(
                "worker {} update counts misaligned",
                r.worker
            )));
        }
        for (slot, (key, v)) in r.table.iter().enumerate() {
            if !v.iter().all(|x| x.is_finite()) {
                return Err(Error::CorruptResult(format!(
                    "worker {} returned non-finite vector",
                    r.worker
                )));
            }
            let w = match policy {
                MergePolicy::Mean => 1.0,
                MergePolicy::CountWeighted => r.update_counts[slot] as f64,
            };
            let e = acc.entry(key).or_insert_with(|| {
                order.push(key);
                (vec![0.0; dim], 0.0, 0, v.to_vec())
            });
            e.0.iter_mut().zip(v).for_each(|(s, x)| *s += w * x);
            e.1 += w;
            e.2 += 1;
        }
    }
    let mut merged = EmbeddingTable::new(dim);
    for key in order {
        let (sum, weight, n, only) = &acc[&key];
        if *n == 1 {
            merged.insert(key, only);
        } else if *weight > 0.0 {
            let inv = 1.0 / weight;
            merged.insert(key, &sum.iter().map(|s| s * inv).collect::<Vec<_>>());
        } else {
            let inv = 1.0 / *n as f64;
            merged.insert(key, &sum.iter().map(|s| s * inv).collect::<Vec<_>>());
        }
    }
    Ok(merged)
}

/// Merge-time compression: the same assign-and-fit phase as the sequential
/// engine, with the merged table as the costly embeddings.
pub fn central_compress(
    merged: EmbeddingTable,
    state: &mut ModelState,
    report: &mut WindowReport,
) -> Result<()> {
    if merged.is_empty() {
        return Ok(());
    }
    state.absorb(merged, report)
}

/// Process one window with `p` workers. With `p = 1` the result is
/// bit-identical to [`ModelState::process_window`].
pub fn process_window_parallel(
    state: &mut ModelState,
    window: &UpdatingWindow,
    p: usize,
    policy: MergePolicy,
) -> Result<WindowReport> {
    state.check_next(window.id)?;
    let plan = shard_window(window.records.len(), p)?;
    let mut report = WindowReport {
        window_id: window.id,
        records: window.records.len(),
        new_units: vec![0; state.books().len()],
        ..WindowReport::default()
    };
    if !window.is_empty() {
        let t = Instant::now();
        let shards = plan.split(&window.records);
        let snapshot: &ModelState = state;
        let results: Vec<WorkerResult> = if p == 1 {
            vec![worker_run(0, &shards[0], snapshot, window.id)?]
        } else {
            thread::scope(|s| {
                let handles: Vec<_> = shards
                    .iter()
                    .enumerate()
                    .map(|(w, shard)| s.spawn(move || worker_run(w, shard, snapshot, window.id)))
                    .collect();
                handles
                    .into_iter()
                    .map(|h| h.join().expect("worker thread panicked"))
                    .collect::<Result<Vec<_>>>()
            })?
        };
        report.phases.train_ms = t.elapsed().as_secs_f64() * 1e3;
        report.epoch_loss = mean_epoch_loss(&results);
        report.window_units = distinct_units(&window.records).len();

        let t = Instant::now();
        let merged = merge_updates(&results, policy)?;
        report.phases.hydrate_ms = t.elapsed().as_secs_f64() * 1e3;
        central_compress(merged, state, &mut report)?;
    }
    state.set_cursor(window.id);
    report.model_bytes = state.memory_report().total;
    Ok(report)
}

/// One row of [`throughput_bench`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub p: usize,
    /// Hydrate, train, merge and compress time per streamed record.
    pub ms_per_record: f64,
    pub mrr: f64,
}

/// Stream `stream` from `pretrained` once per worker count, timing the
/// window processing and evaluating with the streaming protocol.
pub fn throughput_bench(
    prior: &[UpdatingWindow],
    stream: &[UpdatingWindow],
    pretrained: &ModelState,
    ps: &[usize],
    policy: MergePolicy,
    protocol: &ProtocolConfig,
) -> Result<Vec<BenchRow>> {
    let distinct: std::collections::BTreeSet<usize> = ps.iter().copied().collect();
    if distinct.len() < 2 {
        return Err(Error::Parameter(
            "benchmark needs at least two distinct worker counts".into(),
        ));
    }
    let mut rows = Vec::with_capacity(ps.len());
    for &p in ps {
        let mut model = CompressedModel::new(pretrained.clone(), p);
        model.policy = policy;
        let report = run_protocol(prior, stream, &mut model, protocol)?;
        let ms: f64 = model.reports.iter().map(|r| r.phases.total_ms()).sum();
        let records: usize = model.reports.iter().map(|r| r.records).sum();
        rows.push(BenchRow {
            p,
            ms_per_record: if records == 0 {
                0.0
            } else {
                ms / records as f64
            },
            mrr: report.mrr,
        });
    }
    Ok(rows)
}

/// `p,ms_per_record,mrr`.
pub fn write_bench_csv<W: std::io::Write>(rows: &[BenchRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["p", "ms_per_record", "mrr"])?;
    for r in rows {
        w.write_record([
            r.p.to_string(),
            r.ms_per_record.to_string(),
            r.mrr.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn mean_epoch_loss(results: &[WorkerResult]) -> Vec<f64> {
    let epochs = results
        .iter()
        .map(|r| r.train.epoch_loss.len())
        .max()
        .unwrap_or(0);
    (0..epochs)
        .map(|e| {
            let (mut s, mut n) = (0.0, 0.0);
            for r in results {
                if let Some(&l) = r.train.epoch_loss.get(e) {
                    s += l * r.train.pairs.max(1) as f64;
                    n += r.train.pairs.max(1) as f64;
                }
            }
            if n > 0.0 {
                s / n
            } else {
                0.0
            }
        })
        .collect()
}
