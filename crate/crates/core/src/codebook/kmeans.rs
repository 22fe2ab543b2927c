//! Lloyd's k-means with k-means++ seeding.

use rand::Rng;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansFit {
    pub assignments: Vec<usize>,
    pub centroids: Vec<Vec<f64>>,
    pub iterations: usize,
    /// Sum of squared distances of points to their centroid.
    pub distortion: f64,
}

pub fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Index of the closest centroid; ties go to the lowest index.
pub fn nearest<C: AsRef<[f64]>>(v: &[f64], centroids: &[C]) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (i, c) in centroids.iter().enumerate() {
        let d = squared_distance(v, c.as_ref());
        if d < best_d {
            best = i;
            best_d = d;
        }
    }
    best
}

fn seed_centroids<R: Rng + ?Sized>(points: &[&[f64]], k: usize, rng: &mut R) -> Vec<Vec<f64>> {
    let n = points.len();
    let mut chosen = vec![false; n];
    let first = rng.gen_range(0..n);
    chosen[first] = true;
    let mut centroids = vec![points[first].to_vec()];
    let mut d2: Vec<f64> = points
        .iter()
        .map(|p| squared_distance(p, points[first]))
        .collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.gen::<f64>() * total;
            let mut pick = None;
            for (i, &w) in d2.iter().enumerate() {
                if w > 0.0 {
                    if target < w {
                        pick = Some(i);
                        break;
                    }
                    target -= w;
                }
            }
            // rounding can run off the end; fall back to the last positive weight
            pick.unwrap_or_else(|| d2.iter().rposition(|&w| w > 0.0).unwrap())
        } else {
            // every remaining point coincides with a centroid
            chosen.iter().position(|c| !c).unwrap()
        };
        chosen[pick] = true;
        centroids.push(points[pick].to_vec());
        for (d, p) in d2.iter_mut().zip(points) {
            *d = d.min(squared_distance(p, points[pick]));
        }
        d2[pick] = 0.0;
    }
    centroids
}

/// Cluster `points` into `k` groups.
///
/// Iterates until assignments stop changing or `max_iter` rounds pass. A
/// cluster that empties takes the point farthest from the centroid of the
/// currently largest cluster.
pub fn kmeans<R: Rng + ?Sized>(
    points: &[&[f64]],
    k: usize,
    rng: &mut R,
    max_iter: usize,
) -> Result<KMeansFit> {
    if k == 0 || k > points.len() {
        return Err(Error::Parameter(format!(
            "k-means needs 1 <= k <= {} points, got k = {k}",
            points.len()
        )));
    }
    let dim = points[0].len();
    let mut centroids = seed_centroids(points, k, rng);
    let mut assignments = vec![usize::MAX; points.len()];
    let mut iterations = 0;
    while iterations < max_iter {
        iterations += 1;
        let mut changed = false;
        for (a, p) in assignments.iter_mut().zip(points) {
            let c = nearest(p, &centroids);
            if *a != c {
                *a = c;
                changed = true;
            }
        }
        changed |= repair_empty(points, &mut assignments, &centroids, k);
        update_centroids(points, &assignments, &mut centroids, dim);
        if !changed {
            break;
        }
    }
    let distortion = points
        .iter()
        .zip(&assignments)
        .map(|(p, &a)| squared_distance(p, &centroids[a]))
        .sum();
    Ok(KMeansFit {
        assignments,
        centroids,
        iterations,
        distortion,
    })
}

fn repair_empty(
    points: &[&[f64]],
    assignments: &mut [usize],
    centroids: &[Vec<f64>],
    k: usize,
) -> bool {
    let mut repaired = false;
    loop {
        let mut sizes = vec![0usize; k];
        for &a in assignments.iter() {
            sizes[a] += 1;
        }
        let Some(empty) = sizes.iter().position(|&s| s == 0) else {
            return repaired;
        };
        let largest = (0..k)
            .max_by_key(|&c| (sizes[c], std::cmp::Reverse(c)))
            .unwrap();
        let far = (0..points.len())
            .filter(|&i| assignments[i] == largest)
            .max_by(|&i, &j| {
                squared_distance(points[i], &centroids[largest])
                    .total_cmp(&squared_distance(points[j], &centroids[largest]))
                    .then(j.cmp(&i))
            })
            .unwrap();
        assignments[far] = empty;
        repaired = true;
    }
}

fn update_centroids(
    points: &[&[f64]],
    assignments: &[usize],
    centroids: &mut [Vec<f64>],
    dim: usize,
) {
    let mut counts = vec![0usize; centroids.len()];
    for c in centroids.iter_mut() {
        c.iter_mut().for_each(|x| *x = 0.0);
    }
    for (p, &a) in points.iter().zip(assignments) {
        counts[a] += 1;
        centroids[a]
            .iter_mut()
            .zip(p.iter())
            .for_each(|(c, x)| *c += x);
    }
    for (c, &n) in centroids.iter_mut().zip(&counts) {
        debug_assert!(n > 0);
        let inv = 1.0 / n as f64;
        c.iter_mut().for_each(|x| *x *= inv);
        debug_assert_eq!(c.len(), dim);
    }
}
