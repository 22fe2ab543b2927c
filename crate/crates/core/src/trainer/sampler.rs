use rand::seq::SliceRandom;
use rand::Rng;

/// Draw up to `n` distinct entries of `pool` uniformly, never returning an
/// element of `exclude`.
///
/// Returns fewer than `n` only when the pool has fewer eligible entries; an
/// empty result means the positive pair has to be skipped.
pub fn sample_negatives<T, R>(pool: &[T], exclude: &[T], n: usize, rng: &mut R) -> Vec<T>
where
    T: Copy + PartialEq,
    R: Rng + ?Sized,
{
    let mut out = Vec::with_capacity(n);
    if n == 0 || pool.is_empty() {
        return out;
    }
    // Rejection sampling is cheap while the pool dwarfs what we reject.
    if pool.len() >= 4 * (n + exclude.len()) {
        let mut attempts = 0;
        while out.len() < n && attempts < 16 * n {
            attempts += 1;
            let cand = pool[rng.gen_range(0..pool.len())];
            if !exclude.contains(&cand) && !out.contains(&cand) {
                out.push(cand);
            }
        }
        if out.len() == n {
            return out;
        }
        out.clear();
    }
    let mut eligible: Vec<T> = pool
        .iter()
        .copied()
        .filter(|c| !exclude.contains(c))
        .collect();
    let take = n.min(eligible.len());
    let (chosen, _) = eligible.partial_shuffle(rng, take);
    out.extend_from_slice(chosen);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::rng_for;
    use proptest::prelude::*;

    #[test]
    fn exclusion_forces_the_subset() {
        let mut rng = rng_for(1, &[]);
        let mut s = sample_negatives(&['a', 'b', 'c'], &['a'], 2, &mut rng);
        s.sort();
        assert_eq!(s, vec!['b', 'c']);
    }

    #[test]
    fn nothing_eligible_signals_skip() {
        let mut rng = rng_for(1, &[]);
        assert!(sample_negatives(&['a', 'b'], &['a', 'b'], 3, &mut rng).is_empty());
        assert_eq!(
            sample_negatives(&['a', 'b', 'c'], &['a'], 5, &mut rng).len(),
            2
        );
    }

    #[test]
    fn same_seed_same_draws() {
        let pool: Vec<u32> = (0..500).collect();
        let a = sample_negatives(&pool, &[3, 4], 3, &mut rng_for(9, &[1]));
        let b = sample_negatives(&pool, &[3, 4], 3, &mut rng_for(9, &[1]));
        assert_eq!(a, b);
    }

    #[test]
    fn roughly_uniform() {
        let pool: Vec<u32> = (0..10).collect();
        let mut counts = [0u32; 10];
        let mut rng = rng_for(3, &[]);
        for _ in 0..20_000 {
            for x in sample_negatives(&pool, &[0], 1, &mut rng) {
                counts[x as usize] += 1;
            }
        }
        assert_eq!(counts[0], 0);
        for &c in &counts[1..] {
            assert!((c as f64 - 20_000.0 / 9.0).abs() < 250.0, "{counts:?}");
        }
    }

    proptest! {
        #[test]
        fn draws_are_distinct_and_eligible(size in 1usize..200, n in 1usize..6, excl in proptest::collection::vec(0u32..200, 0..5), seed: u64) {
            let pool: Vec<u32> = (0..size as u32).collect();
            let s = sample_negatives(&pool, &excl, n, &mut rng_for(seed, &[]));
            let eligible = pool.iter().filter(|p| !excl.contains(p)).count();
            prop_assert_eq!(s.len(), n.min(eligible));
            for (i, x) in s.iter().enumerate() {
                prop_assert!(!excl.contains(x));
                prop_assert!(!s[i + 1..].contains(x));
            }
        }
    }
}
