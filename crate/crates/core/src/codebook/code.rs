//! Sparse codes over a cluster basis and the compression objective
//! `‖B·w − v‖² + λ‖w‖₁`.

use serde::{Deserialize, Serialize};

use super::basis::ClusterBasis;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CompressionConfig {
    /// Weight of the L1 term.
    pub lambda: f64,
    /// AdaGrad base rate for code weights.
    pub code_lr: f64,
    /// AdaGrad base rate for basis columns.
    pub basis_lr: f64,
    pub max_iters: usize,
    /// Stop once an iteration improves the loss by less than this fraction.
    pub rel_tol: f64,
    /// Weights smaller than this in magnitude are stored as zeros.
    pub zero_epsilon: f64,
    /// Added to the AdaGrad denominator.
    pub epsilon: f64,
    /// Alternating code/basis sweeps over the pretrained units.
    pub init_passes: usize,
}

impl Default for CompressionConfig {
    fn default() -> Self {
        CompressionConfig {
            lambda: 0.001,
            code_lr: 0.05,
            basis_lr: 0.01,
            max_iters: 100,
            rel_tol: 1e-4,
            zero_epsilon: 1e-6,
            epsilon: 1e-8,
            init_passes: 5,
        }
    }
}

impl CompressionConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("compression: {m}")));
        if !(self.lambda >= 0.0) {
            return bad("lambda must be >= 0");
        }
        if !(self.code_lr > 0.0) || !(self.basis_lr >= 0.0) {
            return bad("learning rates must be positive");
        }
        if self.max_iters == 0 {
            return bad("max_iters must be >= 1");
        }
        if !(self.rel_tol > 0.0) {
            return bad("rel_tol must be > 0");
        }
        if !(self.zero_epsilon >= 0.0) || !(self.epsilon >= 0.0) {
            return bad("epsilons must be >= 0");
        }
        Ok(())
    }
}

/// Weights of one unit over its cluster's basis, stored as sorted
/// `(index, value)` pairs, plus the AdaGrad history of every weight.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseCode {
    cluster: u32,
    indices: Vec<u32>,
    values: Vec<f32>,
    accum: Vec<f32>,
}

impl SparseCode {
    /// All-zero code for a cluster with `n_basis` vectors.
    pub fn zero(cluster: u32, n_basis: usize) -> Self {
        SparseCode {
            cluster,
            indices: Vec::new(),
            values: Vec::new(),
            accum: vec![0.0; n_basis],
        }
    }

    /// Build from explicit pairs. Indices must be strictly increasing and
    /// below `n_basis`; zero values are dropped.
    pub fn from_pairs(cluster: u32, n_basis: usize, pairs: &[(u32, f32)]) -> Result<Self> {
        let mut code = SparseCode::zero(cluster, n_basis);
        let mut last = None;
        for &(i, v) in pairs {
            if i as usize >= n_basis || last.is_some_and(|l| i <= l) {
                return Err(Error::CorruptModel(format!(
                    "code index {i} out of order or range ({n_basis} basis vectors)"
                )));
            }
            if !v.is_finite() {
                return Err(Error::CorruptModel(format!(
                    "non-finite code weight at {i}"
                )));
            }
            last = Some(i);
            if v != 0.0 {
                code.indices.push(i);
                code.values.push(v);
            }
        }
        Ok(code)
    }

    pub(crate) fn set_accumulators(&mut self, accum: Vec<f32>) {
        self.accum = accum;
    }

    pub fn cluster(&self) -> u32 {
        self.cluster
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    /// Basis size the code was built for.
    pub fn n_basis(&self) -> usize {
        self.accum.len()
    }

    pub fn indices(&self) -> &[u32] {
        &self.indices
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn accumulators(&self) -> &[f32] {
        &self.accum
    }

    pub fn pairs(&self) -> impl Iterator<Item = (u32, f32)> + '_ {
        self.indices
            .iter()
            .copied()
            .zip(self.values.iter().copied())
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let mut w = vec![0.0; self.n_basis()];
        for (i, v) in self.pairs() {
            w[i as usize] = v as f64;
        }
        w
    }

    /// Store `w`, dropping entries smaller than `zero_epsilon` in magnitude.
    fn store(&mut self, w: &[f64], zero_epsilon: f64) {
        self.indices.clear();
        self.values.clear();
        for (i, &x) in w.iter().enumerate() {
            let v = x as f32;
            if (x.abs() >= zero_epsilon) && v != 0.0 {
                self.indices.push(i as u32);
                self.values.push(v);
            }
        }
    }

    pub fn l1(&self) -> f64 {
        self.values.iter().map(|v| v.abs() as f64).sum()
    }
}

/// `B·w` over the stored nonzeros.
pub fn reconstruct(code: &SparseCode, basis: &ClusterBasis) -> Result<Vec<f64>> {
    let mut out = vec![0.0; basis.dim()];
    reconstruct_into(code, basis, &mut out)?;
    Ok(out)
}

pub fn reconstruct_into(code: &SparseCode, basis: &ClusterBasis, out: &mut [f64]) -> Result<()> {
    out.iter_mut().for_each(|x| *x = 0.0);
    for (i, w) in code.pairs() {
        if i as usize >= basis.len() {
            return Err(Error::CorruptModel(format!(
                "code index {i} exceeds basis size {}",
                basis.len()
            )));
        }
        let w = w as f64;
        out.iter_mut()
            .zip(basis.column(i as usize))
            .for_each(|(o, &b)| *o += w * b as f64);
    }
    Ok(())
}

/// Value and gradients of the compression loss at one code.
#[derive(Debug, Clone, PartialEq)]
pub struct CompressionLoss {
    pub loss: f64,
    /// The squared reconstruction error alone.
    pub quadratic: f64,
    /// Gradient of the quadratic part with respect to every weight.
    pub grad_weights: Vec<f64>,
    /// Gradient of the quadratic part with respect to each basis column the
    /// code touches (nonzero weight).
    pub grad_basis: Vec<(u32, Vec<f64>)>,
}

pub fn compression_loss(
    code: &SparseCode,
    basis: &ClusterBasis,
    target: &[f64],
    lambda: f64,
) -> Result<CompressionLoss> {
    let mut r = reconstruct(code, basis)?;
    r.iter_mut().zip(target).for_each(|(a, t)| *a -= t);
    let quadratic: f64 = r.iter().map(|x| x * x).sum();
    let grad_weights = (0..basis.len())
        .map(|j| {
            2.0 * basis
                .column(j)
                .iter()
                .zip(&r)
                .map(|(&b, x)| b as f64 * x)
                .sum::<f64>()
        })
        .collect();
    let grad_basis = code
        .pairs()
        .map(|(i, w)| (i, r.iter().map(|x| 2.0 * x * w as f64).collect()))
        .collect();
    Ok(CompressionLoss {
        loss: quadratic + lambda * code.l1(),
        quadratic,
        grad_weights,
        grad_basis,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitMode {
    CodeOnly,
    CodeAndBasis,
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct FitOutcome {
    pub loss_before: f64,
    pub loss_after: f64,
    pub iterations: usize,
    /// The target was not finite; nothing changed.
    pub skipped: bool,
}

/// Soft-thresholding operator.
#[inline]
pub fn shrink(w: f64, t: f64) -> f64 {
    w.signum() * (w.abs() - t).max(0.0)
}

/// Reusable buffers for [`fit_code`].
#[derive(Debug, Default)]
pub struct FitScratch {
    basis: Vec<f64>,
    w: Vec<f64>,
    acc: Vec<f64>,
    r: Vec<f64>,
    g: Vec<f64>,
}

fn residual(b: &[f64], w: &[f64], target: &[f64], r: &mut [f64]) {
    let d = target.len();
    r.copy_from_slice(target);
    r.iter_mut().for_each(|x| *x = -*x);
    for (j, &wj) in w.iter().enumerate() {
        if wj != 0.0 {
            r.iter_mut()
                .zip(&b[j * d..(j + 1) * d])
                .for_each(|(x, &bj)| *x += wj * bj);
        }
    }
}

fn objective(r: &[f64], w: &[f64], lambda: f64) -> f64 {
    r.iter().map(|x| x * x).sum::<f64>() + lambda * w.iter().map(|x| x.abs()).sum::<f64>()
}

/// Fit `code` to `target` by AdaGrad steps on the quadratic term, each
/// followed by soft-thresholding with the per-weight step size.
///
/// In [`FitMode::CodeAndBasis`] the touched basis columns then take one
/// AdaGrad step on the final residual.
pub fn fit_code(
    code: &mut SparseCode,
    target: &[f64],
    basis: &mut ClusterBasis,
    cfg: &CompressionConfig,
    mode: FitMode,
    scratch: &mut FitScratch,
) -> FitOutcome {
    if !target.iter().all(|x| x.is_finite()) {
        return FitOutcome {
            skipped: true,
            ..FitOutcome::default()
        };
    }
    let d = basis.dim();
    let n = basis.len();
    if code.accum.len() != n {
        code.accum.resize(n, 0.0);
    }
    let FitScratch {
        basis: b,
        w,
        acc,
        r,
        g,
    } = scratch;
    b.clear();
    b.extend(basis.raw().iter().map(|&x| x as f64));
    w.clear();
    w.extend(code.to_dense());
    acc.clear();
    acc.extend(code.accum.iter().map(|&a| a as f64));
    r.resize(d, 0.0);
    g.resize(n, 0.0);

    residual(b, w, target, r);
    let loss_before = objective(r, w, cfg.lambda);
    let mut prev = loss_before;
    let mut iterations = 0;
    while iterations < cfg.max_iters && prev > 0.0 {
        iterations += 1;
        for (j, gj) in g.iter_mut().enumerate() {
            *gj = 2.0
                * b[j * d..(j + 1) * d]
                    .iter()
                    .zip(r.iter())
                    .map(|(bj, x)| bj * x)
                    .sum::<f64>();
        }
        for j in 0..n {
            if g[j] == 0.0 && w[j] == 0.0 {
                continue;
            }
            acc[j] += g[j] * g[j];
            let step = cfg.code_lr / (acc[j].sqrt() + cfg.epsilon);
            w[j] = shrink(w[j] - step * g[j], cfg.lambda * step);
        }
        residual(b, w, target, r);
        let loss = objective(r, w, cfg.lambda);
        let improvement = prev - loss;
        prev = loss;
        if improvement >= 0.0 && improvement < cfg.rel_tol * (loss + improvement) {
            break;
        }
    }

    code.store(w, cfg.zero_epsilon);
    code.accum
        .iter_mut()
        .zip(acc.iter())
        .for_each(|(a, &x)| *a = x as f32);
    // the stored (pruned, rounded) code is what the model holds
    let stored = code.to_dense();
    residual(b, &stored, target, r);
    let loss_after = objective(r, &stored, cfg.lambda);

    if mode == FitMode::CodeAndBasis && cfg.basis_lr > 0.0 {
        let mut grad = vec![0.0; d];
        for (i, wi) in code.pairs() {
            grad.iter_mut()
                .zip(r.iter())
                .for_each(|(gc, x)| *gc = 2.0 * x * wi as f64);
            basis.step_column(i as usize, &grad, cfg.basis_lr, cfg.epsilon);
        }
    }
    FitOutcome {
        loss_before,
        loss_after,
        iterations,
        skipped: false,
    }
}
