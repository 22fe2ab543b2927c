//! An exhaustive-sort ranking oracle and random small pools to feed it.

use std::collections::HashMap;

use compstream::eval::{rank_candidates, FnSource, Query, TiePolicy};
use compstream::stream::UnitKey;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub struct Pool {
    pub query: Query,
    pub vectors: HashMap<UnitKey, Vec<f64>>,
}

fn oracle_cos(a: &[f64], b: &[f64]) -> f64 {
    let ab: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        ab / (na * nb)
    }
}

/// Sort all candidates by score, descending, then read off the target's
/// position. Optimistic ties put the target ahead of equal scores.
pub fn oracle_rank(pool: &Pool, ties: TiePolicy) -> usize {
    let q = &pool.query;
    let score = |c: &UnitKey| {
        q.context
            .iter()
            .map(|u| oracle_cos(&pool.vectors[c], &pool.vectors[u]))
            .sum::<f64>()
            / q.context.len() as f64
    };
    let mut scored: Vec<(f64, bool)> = q
        .candidates
        .iter()
        .map(|c| (score(c), *c == q.target))
        .collect();
    scored.sort_by(|a, b| {
        b.0.partial_cmp(&a.0).unwrap().then_with(|| match ties {
            TiePolicy::Optimistic => b.1.cmp(&a.1),
            TiePolicy::Pessimistic => a.1.cmp(&b.1),
        })
    });
    1 + scored.iter().position(|s| s.1).unwrap()
}

/// A random query over a small pool; some negatives copy the target's
/// vector so that ties occur.
pub fn random_pool(rng: &mut ChaCha8Rng) -> Pool {
    let d = rng.gen_range(2..6);
    let n_ctx = rng.gen_range(1..4);
    let m = rng.gen_range(1..10);
    let vec_of = |rng: &mut ChaCha8Rng| {
        (0..d)
            .map(|_| rng.gen_range(-1.0..1.0))
            .collect::<Vec<f64>>()
    };
    let mut vectors = HashMap::new();
    let context: Vec<UnitKey> = (0..n_ctx).map(|i| UnitKey::new(0, i)).collect();
    for &c in &context {
        vectors.insert(c, vec_of(rng));
    }
    let target = UnitKey::new(1, 0);
    let tv = vec_of(rng);
    vectors.insert(target, tv.clone());
    let mut candidates = vec![target];
    for i in 1..=m {
        let k = UnitKey::new(1, i);
        let v = if rng.gen_bool(0.2) {
            tv.clone()
        } else {
            vec_of(rng)
        };
        vectors.insert(k, v);
        candidates.push(k);
    }
    Pool {
        query: Query {
            context,
            target,
            candidates,
            attr: 1,
        },
        vectors,
    }
}

pub fn library_rank(pool: &Pool, ties: TiePolicy, scale: f64) -> usize {
    let src = FnSource(|k: UnitKey| {
        pool.vectors
            .get(&k)
            .map(|v| v.iter().map(|x| x * scale).collect())
    });
    rank_candidates(&pool.query, &src, ties).unwrap().rank
}

/// Number of mismatches between library and oracle over `n` pools, and the
/// number of pools whose rank changed under positive scaling.
pub fn oracle_mismatches(n: usize, seed: u64) -> (usize, usize) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut wrong, mut scaled) = (0, 0);
    for _ in 0..n {
        let pool = random_pool(&mut rng);
        for ties in [TiePolicy::Optimistic, TiePolicy::Pessimistic] {
            let r = library_rank(&pool, ties, 1.0);
            if r != oracle_rank(&pool, ties) {
                wrong += 1;
            }
            for s in [0.5, 4.0, 1024.0] {
                if library_rank(&pool, ties, s) != r {
                    scaled += 1;
                }
            }
        }
    }
    (wrong, scaled)
}
