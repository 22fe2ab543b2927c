//! Loss, gradients and update rules of the attribute-recovery objective.

use crate::error::{Error, Result};
use crate::stream::{Record, UnitKey};

use super::table::EmbeddingTable;

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^x)` without overflow.
#[inline]
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// `ln σ(z)`, finite for every finite `z`.
#[inline]
pub fn log_sigmoid(z: f64) -> f64 {
    -softplus(-z)
}

/// Mean of the embedded units of `record` other than one occurrence of `x`.
pub fn context_mean(record: &Record, x: UnitKey, table: &EmbeddingTable) -> Result<Vec<f64>> {
    let mut skipped_self = false;
    let mut sum = vec![0.0; table.dim()];
    let mut n = 0usize;
    for &u in &record.units {
        if u == x && !skipped_self {
            skipped_self = true;
            continue;
        }
        if let Some(v) = table.get(u) {
            sum.iter_mut().zip(v).for_each(|(s, a)| *s += a);
            n += 1;
        }
    }
    if n == 0 {
        return Err(Error::DegenerateContext);
    }
    let inv = 1.0 / n as f64;
    sum.iter_mut().for_each(|s| *s *= inv);
    Ok(sum)
}

/// Similarity of `x` to a context: `v_x · h`.
pub fn score(x: UnitKey, h: &[f64], table: &EmbeddingTable) -> Result<f64> {
    table.get(x).map(|v| dot(v, h)).ok_or(Error::MissingUnit(x))
}

/// Negative-sampling loss of one positive and its negatives, with gradients.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ReconLoss {
    pub loss: f64,
    pub grad_target: Vec<f64>,
    pub grad_negatives: Vec<Vec<f64>>,
    /// Gradient with respect to the context mean `h`.
    pub grad_context: Vec<f64>,
}

impl ReconLoss {
    /// Gradient reaching each of `n_context` context vectors (`h` is their mean).
    pub fn context_share(&self, n_context: usize) -> Vec<f64> {
        let inv = 1.0 / n_context as f64;
        self.grad_context.iter().map(|g| g * inv).collect()
    }
}

/// `L = -ln σ(v_x·h) - Σ_n ln σ(-v_n·h)` and its gradients.
pub fn recon_loss(target: &[f64], negatives: &[&[f64]], h: &[f64]) -> ReconLoss {
    let mut out = ReconLoss::default();
    recon_loss_into(target, negatives, h, &mut out);
    out
}

/// Allocation-reusing form of [`recon_loss`].
pub fn recon_loss_into(target: &[f64], negatives: &[&[f64]], h: &[f64], out: &mut ReconLoss) {
    let d = h.len();
    out.grad_context.clear();
    out.grad_context.resize(d, 0.0);
    out.grad_target.clear();
    out.grad_negatives.resize_with(negatives.len(), Vec::new);
    out.grad_negatives.truncate(negatives.len());

    let s = dot(target, h);
    let coef = sigmoid(s) - 1.0;
    let mut loss = -log_sigmoid(s);
    out.grad_target.extend(h.iter().map(|x| coef * x));
    for (gc, v) in out.grad_context.iter_mut().zip(target) {
        *gc = coef * v;
    }
    for (neg, grad) in negatives.iter().zip(out.grad_negatives.iter_mut()) {
        let sn = dot(neg, h);
        loss -= log_sigmoid(-sn);
        let c = sigmoid(sn);
        grad.clear();
        grad.extend(h.iter().map(|x| c * x));
        for (gc, v) in out.grad_context.iter_mut().zip(neg.iter()) {
            *gc += c * v;
        }
    }
    out.loss = loss;
}

/// Mean of `σ(v_x·v_y)` over unordered pairs; `None` with fewer than two vectors.
pub fn intra_agreement(vectors: &[&[f64]]) -> Option<f64> {
    let n = vectors.len();
    if n < 2 {
        return None;
    }
    let mut sum = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            sum += sigmoid(dot(vectors[i], vectors[j]));
        }
    }
    Some(sum / (n * (n - 1) / 2) as f64)
}

/// Agreement of a record under `table`; degenerate records count as 0.5.
pub fn record_agreement(record: &Record, table: &EmbeddingTable) -> f64 {
    let vs: Vec<&[f64]> = record.units.iter().filter_map(|u| table.get(*u)).collect();
    intra_agreement(&vs).unwrap_or(0.5)
}

/// `exp(-τ Ψ) η`.
#[inline]
pub fn adaptive_lr(psi: f64, lr: f64, tau: f64) -> f64 {
    (-tau * psi).exp() * lr
}

/// One AdaGrad update in place.
///
/// The step divides by the history *before* this gradient,
/// `sqrt(Σ_{past} g² + ε)`, and only then folds the gradient into the
/// accumulator. Non-finite gradients leave everything untouched and return
/// `false`.
pub fn adagrad_step(
    vector: &mut [f64],
    accum: &mut [f64],
    grad: &[f64],
    lr: f64,
    eps: f64,
) -> bool {
    if !grad.iter().all(|g| g.is_finite()) {
        return false;
    }
    for ((v, a), g) in vector.iter_mut().zip(accum.iter_mut()).zip(grad) {
        if *g == 0.0 {
            continue;
        }
        *v -= lr * g / (*a + eps).sqrt();
        *a += g * g;
    }
    true
}

/// [`adagrad_step`] on a table row.
pub fn adagrad_step_unit(
    table: &mut EmbeddingTable,
    unit: UnitKey,
    grad: &[f64],
    lr: f64,
    eps: f64,
) -> Result<bool> {
    let slot = table.slot(unit).ok_or(Error::MissingUnit(unit))?;
    let (v, a) = table.row_and_accum_mut(slot);
    Ok(adagrad_step(v, a, grad, lr, eps))
}
