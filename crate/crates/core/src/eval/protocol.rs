use std::collections::{BTreeMap, HashSet};
use std::io::Write;

use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

use super::{
    build_queries, mrr, rank_candidates, recall_at_k, CachedSource, EmbeddingSource, QueryStats,
    TiePolicy,
};
use crate::error::{Error, Result};
use crate::seed::{rng_for, tag};
use crate::stream::{AttrId, UnitKey, UpdatingWindow};

/// A model that learns window by window and can be queried in between.
pub trait StreamingModel {
    fn name(&self) -> String;
    /// Learn from the next window.
    fn advance(&mut self, window: &UpdatingWindow) -> Result<()>;
    /// Embeddings as of the last window learned.
    fn source(&self) -> Result<Box<dyn EmbeddingSource + '_>>;
    /// Parameter bytes at 4 bytes per float (or the model's own packing).
    fn bytes(&self) -> u64;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProtocolConfig {
    pub n_query_windows: usize,
    /// Negatives per query.
    pub negatives: usize,
    /// Cutoffs reported in the summary.
    pub ks: Vec<usize>,
    /// Attributes to hide; every attribute when empty.
    pub targets: Vec<AttrId>,
    pub ties: TiePolicy,
    pub seed: u64,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        ProtocolConfig {
            n_query_windows: 5,
            negatives: 10,
            ks: vec![1, 5],
            targets: Vec::new(),
            ties: TiePolicy::Optimistic,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowMetrics {
    pub window_id: u64,
    pub n_queries: usize,
    pub mrr: Option<f64>,
    pub r_at_1: Option<f64>,
    pub r_at_5: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolReport {
    pub model: String,
    pub query_windows: Vec<u64>,
    pub rows: Vec<WindowMetrics>,
    pub n_queries: usize,
    pub mrr: f64,
    pub recall: BTreeMap<usize, f64>,
    /// Queries dropped because some unit had not been seen before the window.
    pub dropped_unseen: u64,
    /// Queries dropped because the model had no vector for some unit.
    pub dropped_unresolved: u64,
    pub query_stats: QueryStats,
    pub model_bytes: u64,
}

impl ProtocolReport {
    /// `window_id,n_queries,mrr,r_at_1,r_at_5`, blank metrics for windows
    /// without queries.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["window_id", "n_queries", "mrr", "r_at_1", "r_at_5"])?;
        let f = |x: Option<f64>| x.map(|v| v.to_string()).unwrap_or_default();
        for r in &self.rows {
            w.write_record([
                r.window_id.to_string(),
                r.n_queries.to_string(),
                f(r.mrr),
                f(r.r_at_1),
                f(r.r_at_5),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Seeded choice of `n` non-empty windows from `stream`, returned in order.
pub fn select_query_windows(stream: &[UpdatingWindow], n: usize, seed: u64) -> Result<Vec<u64>> {
    let eligible: Vec<u64> = stream
        .iter()
        .filter(|w| !w.is_empty())
        .map(|w| w.id)
        .collect();
    if n == 0 || n > eligible.len() {
        return Err(Error::Parameter(format!(
            "need {n} query windows but only {} non-empty windows are available",
            eligible.len()
        )));
    }
    let mut rng = rng_for(seed, &[tag::QUERY_WINDOWS]);
    let mut picked: Vec<u64> = sample(&mut rng, eligible.len(), n)
        .into_iter()
        .map(|i| eligible[i])
        .collect();
    picked.sort_unstable();
    Ok(picked)
}

fn observe(w: &UpdatingWindow, seen: &mut HashSet<UnitKey>, pools: &mut [Vec<UnitKey>]) {
    for u in w.records.iter().flat_map(|r| &r.units) {
        if seen.insert(*u) {
            pools[u.attr as usize].push(*u);
        }
    }
}

fn metrics(window_id: u64, ranks: &[usize]) -> WindowMetrics {
    WindowMetrics {
        window_id,
        n_queries: ranks.len(),
        mrr: mrr(ranks).ok(),
        r_at_1: recall_at_k(ranks, 1).ok(),
        r_at_5: recall_at_k(ranks, 5).ok(),
    }
}

/// Evaluate `model` on sampled windows of `stream`.
///
/// `prior` holds the windows the model has already learned (pretraining).
/// The model learns the stream in order; each query window is evaluated
/// before the model sees it, so only earlier records shape the answers.
/// Candidates and context are restricted to units seen before the window.
pub fn run_protocol(
    prior: &[UpdatingWindow],
    stream: &[UpdatingWindow],
    model: &mut dyn StreamingModel,
    cfg: &ProtocolConfig,
) -> Result<ProtocolReport> {
    let query_windows = select_query_windows(stream, cfg.n_query_windows, cfg.seed)?;
    let last_query = *query_windows.last().expect("at least one query window");
    let n_attr = prior
        .iter()
        .chain(stream)
        .flat_map(|w| {
            w.records
                .iter()
                .flat_map(|r| r.units.iter().map(|u| u.attr as usize + 1))
        })
        .max()
        .unwrap_or(0);
    let targets: Vec<AttrId> = if cfg.targets.is_empty() {
        (0..n_attr as AttrId).collect()
    } else {
        cfg.targets.clone()
    };

    let mut seen: HashSet<UnitKey> = HashSet::new();
    let mut pools: Vec<Vec<UnitKey>> = vec![Vec::new(); n_attr];
    for w in prior {
        observe(w, &mut seen, &mut pools);
    }

    let mut report = ProtocolReport {
        model: model.name(),
        query_windows: query_windows.clone(),
        rows: Vec::new(),
        n_queries: 0,
        mrr: 0.0,
        recall: BTreeMap::new(),
        dropped_unseen: 0,
        dropped_unresolved: 0,
        query_stats: QueryStats::default(),
        model_bytes: 0,
    };
    let mut all_ranks = Vec::new();
    for w in stream {
        if query_windows.binary_search(&w.id).is_ok() {
            let mut rng = rng_for(cfg.seed, &[tag::QUERIES, w.id]);
            let inner = model.source()?;
            let source = CachedSource::new(inner.as_ref());
            let mut ranks = Vec::new();
            for &attr in &targets {
                let pool = pools.get(attr as usize).map_or(&[][..], Vec::as_slice);
                let (queries, stats) =
                    build_queries(&w.records, attr, cfg.negatives, pool, &mut rng);
                report.query_stats.built += stats.built;
                report.query_stats.no_target += stats.no_target;
                report.query_stats.no_context += stats.no_context;
                report.query_stats.short_pool += stats.short_pool;
                for q in &queries {
                    if !q
                        .context
                        .iter()
                        .chain(&q.candidates)
                        .all(|u| seen.contains(u))
                    {
                        report.dropped_unseen += 1;
                        continue;
                    }
                    match rank_candidates(q, &source, cfg.ties) {
                        Some(r) => ranks.push(r.rank),
                        None => report.dropped_unresolved += 1,
                    }
                }
            }
            report.rows.push(metrics(w.id, &ranks));
            all_ranks.extend(ranks);
            if w.id == last_query {
                break;
            }
        }
        model.advance(w)?;
        observe(w, &mut seen, &mut pools);
    }
    report.n_queries = all_ranks.len();
    report.mrr = mrr(&all_ranks)?;
    for &k in &cfg.ks {
        report.recall.insert(k, recall_at_k(&all_ranks, k)?);
    }
    report.model_bytes = model.bytes();
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stream::Record;

    fn windows(n: u64) -> Vec<UpdatingWindow> {
        (0..n)
            .map(|id| UpdatingWindow {
                id,
                start: id as i64 * 10,
                span: 10,
                records: if id % 3 == 2 {
                    Vec::new()
                } else {
                    vec![Record::new(
                        id as i64 * 10,
                        vec![UnitKey::new(0, 0), UnitKey::new(1, 0)],
                    )]
                },
            })
            .collect()
    }

    #[test]
    fn query_window_selection() {
        let ws = windows(9);
        let a = select_query_windows(&ws, 3, 4).unwrap();
        assert_eq!(a, select_query_windows(&ws, 3, 4).unwrap());
        assert_eq!(a.len(), 3);
        assert!(a.windows(2).all(|p| p[0] < p[1]));
        assert!(a.iter().all(|id| id % 3 != 2));
        assert!(select_query_windows(&ws, 7, 4).is_err());
        assert!(select_query_windows(&ws, 0, 4).is_err());
    }
}
