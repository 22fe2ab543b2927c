//! Retrieval evaluation: hide one unit of a record, rank it among sampled
//! negatives by mean cosine similarity to the rest of the record.

pub mod models;
pub mod protocol;

pub use models::{CompressedModel, DenseModel, HashedModel, QuantizedModel};
pub use protocol::{
    run_protocol, select_query_windows, ProtocolConfig, ProtocolReport, StreamingModel,
    WindowMetrics,
};

use std::collections::HashMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::engine::ModelState;
use crate::error::{Error, Result};
use crate::stream::{AttrId, Record, UnitKey};
use crate::trainer::{sample_negatives, EmbeddingTable};

/// Anything that can produce an embedding for a unit.
pub trait EmbeddingSource {
    fn vector(&self, key: UnitKey) -> Option<Vec<f64>>;
}

impl EmbeddingSource for EmbeddingTable {
    fn vector(&self, key: UnitKey) -> Option<Vec<f64>> {
        self.get(key).map(<[f64]>::to_vec)
    }
}

impl EmbeddingSource for ModelState {
    fn vector(&self, key: UnitKey) -> Option<Vec<f64>> {
        self.embedding(key).ok().flatten()
    }
}

impl<T: EmbeddingSource + ?Sized> EmbeddingSource for &T {
    fn vector(&self, key: UnitKey) -> Option<Vec<f64>> {
        (**self).vector(key)
    }
}

/// Adapter for closures.
pub struct FnSource<F>(pub F);

impl<F: Fn(UnitKey) -> Option<Vec<f64>>> EmbeddingSource for FnSource<F> {
    fn vector(&self, key: UnitKey) -> Option<Vec<f64>> {
        (self.0)(key)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Query {
    pub context: Vec<UnitKey>,
    pub target: UnitKey,
    /// The target followed by the negatives.
    pub candidates: Vec<UnitKey>,
    pub attr: AttrId,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryStats {
    pub built: u64,
    /// Records with no unit of the target attribute.
    pub no_target: u64,
    /// Occurrences whose record has nothing else to serve as context.
    pub no_context: u64,
    /// Occurrences for which the pool could not supply `M` negatives.
    pub short_pool: u64,
}

/// One query per occurrence of a `target_attr` unit in `records`. The other
/// units of the record form the context; negatives are drawn from `pool`
/// without replacement, never from the record's own `target_attr` units.
pub fn build_queries<R: Rng + ?Sized>(
    records: &[Record],
    target_attr: AttrId,
    m: usize,
    pool: &[UnitKey],
    rng: &mut R,
) -> (Vec<Query>, QueryStats) {
    let mut stats = QueryStats::default();
    let mut queries = Vec::new();
    for r in records {
        let own: Vec<UnitKey> = r
            .units
            .iter()
            .copied()
            .filter(|u| u.attr == target_attr)
            .collect();
        if own.is_empty() {
            stats.no_target += 1;
            continue;
        }
        for (i, &target) in r.units.iter().enumerate() {
            if target.attr != target_attr {
                continue;
            }
            let context: Vec<UnitKey> = r
                .units
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != i)
                .map(|(_, &u)| u)
                .collect();
            if context.is_empty() {
                stats.no_context += 1;
                continue;
            }
            let negatives = sample_negatives(pool, &own, m, rng);
            if negatives.len() < m {
                stats.short_pool += 1;
                continue;
            }
            let mut candidates = Vec::with_capacity(m + 1);
            candidates.push(target);
            candidates.extend(negatives);
            queries.push(Query {
                context,
                target,
                candidates,
                attr: target_attr,
            });
            stats.built += 1;
        }
    }
    (queries, stats)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TiePolicy {
    /// Candidates scoring equal to the target rank below it.
    #[default]
    Optimistic,
    /// Candidates scoring equal to the target rank above it.
    Pessimistic,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankingResult {
    /// 1-based position of the target.
    pub rank: usize,
    /// Score of every candidate, in candidate order.
    pub scores: Vec<f64>,
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let (mut ab, mut aa, mut bb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        ab += x * y;
        aa += x * x;
        bb += y * y;
    }
    if aa == 0.0 || bb == 0.0 {
        0.0
    } else {
        ab / (aa.sqrt() * bb.sqrt())
    }
}

/// Rank of the target from candidate scores.
pub fn rank_from_scores(scores: &[f64], target: usize, ties: TiePolicy) -> usize {
    let t = scores[target];
    1 + scores
        .iter()
        .enumerate()
        .filter(|&(i, &s)| {
            i != target
                && match ties {
                    TiePolicy::Optimistic => s > t,
                    TiePolicy::Pessimistic => s >= t,
                }
        })
        .count()
}

/// Score every candidate by its mean cosine to the context. `None` if any
/// unit has no vector.
pub fn rank_candidates(
    q: &Query,
    source: &dyn EmbeddingSource,
    ties: TiePolicy,
) -> Option<RankingResult> {
    let ctx: Vec<Vec<f64>> = q
        .context
        .iter()
        .map(|&u| source.vector(u))
        .collect::<Option<_>>()?;
    let scores = q
        .candidates
        .iter()
        .map(|&c| {
            let v = source.vector(c)?;
            Some(ctx.iter().map(|u| cosine(&v, u)).sum::<f64>() / ctx.len() as f64)
        })
        .collect::<Option<Vec<f64>>>()?;
    let target = q.candidates.iter().position(|&c| c == q.target)?;
    Some(RankingResult {
        rank: rank_from_scores(&scores, target, ties),
        scores,
    })
}

/// Memoizes vectors of a source; evaluation asks for the same units often.
pub struct CachedSource<'a> {
    inner: &'a dyn EmbeddingSource,
    cache: std::cell::RefCell<HashMap<UnitKey, Option<Vec<f64>>>>,
}

impl<'a> CachedSource<'a> {
    pub fn new(inner: &'a dyn EmbeddingSource) -> Self {
        CachedSource {
            inner,
            cache: Default::default(),
        }
    }
}

impl EmbeddingSource for CachedSource<'_> {
    fn vector(&self, key: UnitKey) -> Option<Vec<f64>> {
        self.cache
            .borrow_mut()
            .entry(key)
            .or_insert_with(|| self.inner.vector(key))
            .clone()
    }
}

pub fn mrr(ranks: &[usize]) -> Result<f64> {
    if ranks.is_empty() {
        return Err(Error::EmptyMetric);
    }
    Ok(ranks.iter().map(|&r| 1.0 / r as f64).sum::<f64>() / ranks.len() as f64)
}

/// Fraction of ranks within the top `k`.
pub fn recall_at_k(ranks: &[usize], k: usize) -> Result<f64> {
    if ranks.is_empty() {
        return Err(Error::EmptyMetric);
    }
    if k == 0 {
        return Err(Error::Parameter("recall cutoff must be at least 1".into()));
    }
    Ok(ranks.iter().filter(|&&r| r <= k).count() as f64 / ranks.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::rng_for;

    fn k(a: AttrId, id: u32) -> UnitKey {
        UnitKey::new(a, id)
    }

    #[test]
    fn query_construction() {
        let pool: Vec<UnitKey> = (0..5).map(|i| k(1, i)).collect();
        let recs = [
            Record::new(0, vec![k(0, 0), k(1, 2)]),
            Record::new(1, vec![k(0, 1), k(0, 2)]),
        ];
        let (qs, stats) = build_queries(&recs, 1, 2, &pool, &mut rng_for(0, &[]));
        assert_eq!(qs.len(), 1);
        assert_eq!(stats.no_target, 1);
        let q = &qs[0];
        assert_eq!(q.context, vec![k(0, 0)]);
        assert_eq!(q.candidates.len(), 3);
        assert_eq!(q.candidates[0], k(1, 2));
        assert!(!q.candidates[1..].contains(&k(1, 2)));
    }

    #[test]
    fn baskets_give_one_query_per_item() {
        let pool: Vec<UnitKey> = (0..20).map(|i| k(1, i)).collect();
        let recs = [Record::new(0, vec![k(0, 0), k(1, 2), k(1, 3)])];
        let (qs, _) = build_queries(&recs, 1, 10, &pool, &mut rng_for(0, &[]));
        assert_eq!(qs.len(), 2);
        assert_eq!(qs[0].context, vec![k(0, 0), k(1, 3)]);
        for q in &qs {
            assert_eq!(q.candidates.len(), 11);
            assert!(!q.candidates[1..].contains(&k(1, 2)) && !q.candidates[1..].contains(&k(1, 3)));
        }
    }

    #[test]
    fn ranking_examples() {
        let mut t = EmbeddingTable::new(2);
        t.insert(k(0, 0), &[1.0, 0.0]);
        t.insert(k(1, 0), &[1.0, 0.0]);
        t.insert(k(1, 1), &[0.0, 1.0]);
        t.insert(k(1, 2), &[0.0, -1.0]);
        let q = Query {
            context: vec![k(0, 0)],
            target: k(1, 0),
            candidates: vec![k(1, 0), k(1, 1), k(1, 2)],
            attr: 1,
        };
        assert_eq!(
            rank_candidates(&q, &t, TiePolicy::Optimistic).unwrap().rank,
            1
        );

        let same = FnSource(|_: UnitKey| Some(vec![1.0, 1.0]));
        assert_eq!(
            rank_candidates(&q, &same, TiePolicy::Optimistic)
                .unwrap()
                .rank,
            1
        );
        assert_eq!(
            rank_candidates(&q, &same, TiePolicy::Pessimistic)
                .unwrap()
                .rank,
            3
        );

        assert_eq!(
            rank_from_scores(&[0.2, 0.9, 0.5], 0, TiePolicy::Optimistic),
            3
        );
        let missing = FnSource(|u: UnitKey| (u != k(1, 2)).then(|| vec![1.0, 0.0]));
        assert!(rank_candidates(&q, &missing, TiePolicy::Optimistic).is_none());
    }

    #[test]
    fn zero_vector_scores_zero() {
        assert_eq!(cosine(&[0.0, 0.0], &[1.0, 0.0]), 0.0);
        assert!((cosine(&[2.0, 0.0], &[1.0, 1.0]) - 0.5f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn metric_examples() {
        assert_eq!(mrr(&[1]).unwrap(), 1.0);
        assert!((mrr(&[1, 2, 4]).unwrap() - 0.583_333_333_333_333_4).abs() < 1e-15);
        assert!((mrr(&[11; 7]).unwrap() - 1.0 / 11.0).abs() < 1e-15);
        assert_eq!(recall_at_k(&[1], 1).unwrap(), 1.0);
        assert_eq!(recall_at_k(&[2], 1).unwrap(), 0.0);
        assert!((recall_at_k(&[1, 2, 4], 2).unwrap() - 2.0 / 3.0).abs() < 1e-15);
        assert!(matches!(mrr(&[]), Err(Error::EmptyMetric)));
        assert!(matches!(recall_at_k(&[], 1), Err(Error::EmptyMetric)));
    }
}
