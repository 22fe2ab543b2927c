//! Finite-difference checks of the analytic gradients against loss
//! functions written out independently here.

use compstream::codebook::{compression_loss, ClusterBasis, SparseCode};
use compstream::trainer::recon_loss;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{numeric_grad, rel_err};

pub const STEP: f64 = 1e-6;

fn ln_sigmoid(z: f64) -> f64 {
    -(1.0 + (-z).exp()).ln()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn oracle_recon(target: &[f64], negatives: &[Vec<f64>], h: &[f64]) -> f64 {
    -ln_sigmoid(dot(target, h))
        - negatives
            .iter()
            .map(|n| ln_sigmoid(-dot(n, h)))
            .sum::<f64>()
}

fn random_vec(rng: &mut ChaCha8Rng, d: usize, scale: f64) -> Vec<f64> {
    (0..d).map(|_| rng.gen_range(-scale..scale)).collect()
}

/// Worst relative error of the negative-sampling gradients (target, every
/// negative, context) over `n` random 5-dim instances. Also returns the
/// worst absolute loss mismatch.
pub fn recon_worst(n: usize, seed: u64) -> (f64, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut worst, mut loss_err) = (0.0f64, 0.0f64);
    for _ in 0..n {
        let d = 5;
        let m = rng.gen_range(1..4);
        let t = random_vec(&mut rng, d, 1.0);
        let negs: Vec<Vec<f64>> = (0..m).map(|_| random_vec(&mut rng, d, 1.0)).collect();
        let h = random_vec(&mut rng, d, 1.0);
        let neg_refs: Vec<&[f64]> = negs.iter().map(Vec::as_slice).collect();
        let out = recon_loss(&t, &neg_refs, &h);
        loss_err = loss_err.max((out.loss - oracle_recon(&t, &negs, &h)).abs());

        let fd = numeric_grad(&t, STEP, |x| oracle_recon(x, &negs, &h));
        worst = worst.max(rel_err(&fd, &out.grad_target));
        let fd = numeric_grad(&h, STEP, |x| oracle_recon(&t, &negs, x));
        worst = worst.max(rel_err(&fd, &out.grad_context));
        for k in 0..m {
            let fd = numeric_grad(&negs[k], STEP, |x| {
                let mut ns = negs.clone();
                ns[k] = x.to_vec();
                oracle_recon(&t, &ns, &h)
            });
            worst = worst.max(rel_err(&fd, &out.grad_negatives[k]));
        }
    }
    (worst, loss_err)
}

fn oracle_quadratic(cols: &[Vec<f64>], w: &[f64], v: &[f64]) -> f64 {
    let mut r: Vec<f64> = v.iter().map(|x| -x).collect();
    for (c, &wj) in cols.iter().zip(w) {
        r.iter_mut().zip(c).for_each(|(a, b)| *a += wj * b);
    }
    r.iter().map(|x| x * x).sum()
}

/// Worst relative error of the compression-loss gradients (weights and
/// touched basis columns) over `n` random 5-dim instances, and the worst
/// absolute mismatch of the loss value including the L1 term.
pub fn compression_worst(n: usize, seed: u64) -> (f64, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut worst, mut loss_err) = (0.0f64, 0.0f64);
    for _ in 0..n {
        let d = 5;
        let k = rng.gen_range(1..7);
        // f32 storage: the check runs at the exactly representable point.
        let cols: Vec<Vec<f64>> = (0..k)
            .map(|_| {
                random_vec(&mut rng, d, 1.0)
                    .iter()
                    .map(|&x| x as f32 as f64)
                    .collect()
            })
            .collect();
        let mut pairs: Vec<(u32, f32)> = Vec::new();
        for j in 0..k as u32 {
            if rng.gen_bool(0.7) {
                pairs.push((j, rng.gen_range(-1.0f32..1.0)));
            }
        }
        let code = SparseCode::from_pairs(0, k, &pairs).unwrap();
        let w = code.to_dense();
        let v = random_vec(&mut rng, d, 1.0);
        let lambda = rng.gen_range(0.0..0.1);
        let basis = ClusterBasis::from_columns(d, &cols);
        let out = compression_loss(&code, &basis, &v, lambda).unwrap();
        let l1: f64 = w.iter().map(|x| x.abs()).sum();
        loss_err = loss_err.max((out.loss - (oracle_quadratic(&cols, &w, &v) + lambda * l1)).abs());

        let fd = numeric_grad(&w, STEP, |x| oracle_quadratic(&cols, x, &v));
        worst = worst.max(rel_err(&fd, &out.grad_weights));
        for (j, g) in &out.grad_basis {
            let j = *j as usize;
            let fd = numeric_grad(&cols[j], STEP, |x| {
                let mut cs = cols.clone();
                cs[j] = x.to_vec();
                oracle_quadratic(&cs, &w, &v)
            });
            worst = worst.max(rel_err(&fd, g));
        }
    }
    (worst, loss_err)
}
