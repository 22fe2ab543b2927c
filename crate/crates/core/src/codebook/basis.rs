use crate::error::{Error, Result};

/// Basis vector counts proportional to cluster sizes: `ceil(K·|C_i| / Σ|C_j|)`,
/// with at least one vector per cluster.
pub fn allocate_bases(cluster_sizes: &[usize], budget: usize) -> Vec<usize> {
    let total: u128 = cluster_sizes.iter().map(|&s| s as u128).sum();
    if total == 0 {
        return vec![1; cluster_sizes.len()];
    }
    cluster_sizes
        .iter()
        .map(|&s| {
            let share = (budget as u128 * s as u128).div_ceil(total);
            (share as usize).max(1)
        })
        .collect()
}

/// Even split of the budget, ignoring cluster sizes.
pub fn allocate_uniform(n_clusters: usize, budget: usize) -> Vec<usize> {
    if n_clusters == 0 {
        return Vec::new();
    }
    vec![budget.div_ceil(n_clusters).max(1); n_clusters]
}

/// The `dim × n` basis matrix of one cluster, stored column by column.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterBasis {
    dim: usize,
    columns: Vec<f32>,
    accum: Vec<f32>,
}

impl ClusterBasis {
    pub fn zeros(dim: usize, n: usize) -> Self {
        ClusterBasis {
            dim,
            columns: vec![0.0; dim * n],
            accum: vec![0.0; dim * n],
        }
    }

    pub fn from_columns(dim: usize, columns: &[Vec<f64>]) -> Self {
        let mut b = ClusterBasis::zeros(dim, columns.len());
        for (j, c) in columns.iter().enumerate() {
            assert_eq!(c.len(), dim, "basis column has wrong dimension");
            b.set_column(j, c);
        }
        b
    }

    pub(crate) fn from_raw(dim: usize, columns: Vec<f32>, accum: Vec<f32>) -> Self {
        debug_assert_eq!(columns.len(), accum.len());
        ClusterBasis {
            dim,
            columns,
            accum,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of basis vectors.
    pub fn len(&self) -> usize {
        self.columns.len() / self.dim.max(1)
    }

    pub fn is_empty(&self) -> bool {
        self.columns.is_empty()
    }

    pub fn column(&self, j: usize) -> &[f32] {
        &self.columns[j * self.dim..(j + 1) * self.dim]
    }

    pub fn set_column(&mut self, j: usize, v: &[f64]) {
        let d = self.dim;
        self.columns[j * d..(j + 1) * d]
            .iter_mut()
            .zip(v)
            .for_each(|(c, &x)| *c = x as f32);
    }

    pub fn raw(&self) -> &[f32] {
        &self.columns
    }

    pub fn accumulators(&self) -> &[f32] {
        &self.accum
    }

    /// Columns widened to `f64`, column-major.
    pub fn to_f64(&self) -> Vec<f64> {
        self.columns.iter().map(|&x| x as f64).collect()
    }

    /// One AdaGrad step on column `j`. Returns `false` (and changes nothing)
    /// if the gradient is not finite.
    pub fn step_column(&mut self, j: usize, grad: &[f64], lr: f64, eps: f64) -> bool {
        if !grad.iter().all(|g| g.is_finite()) {
            return false;
        }
        let d = self.dim;
        let col = &mut self.columns[j * d..(j + 1) * d];
        let acc = &mut self.accum[j * d..(j + 1) * d];
        for ((c, a), &g) in col.iter_mut().zip(acc.iter_mut()).zip(grad) {
            let acc_new = *a as f64 + g * g;
            *a = acc_new as f32;
            *c = (*c as f64 - lr * g / (acc_new.sqrt() + eps)) as f32;
        }
        true
    }

    pub fn is_finite(&self) -> bool {
        self.columns.iter().all(|x| x.is_finite())
    }
}

/// Basis matrices of every cluster of one attribute.
#[derive(Debug, Clone, PartialEq)]
pub struct BasisSet {
    dim: usize,
    budget: usize,
    clusters: Vec<ClusterBasis>,
}

impl BasisSet {
    pub fn new(dim: usize, budget: usize, clusters: Vec<ClusterBasis>) -> Self {
        BasisSet {
            dim,
            budget,
            clusters,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// The configured total `K`; the allocated total may exceed it by rounding.
    pub fn budget(&self) -> usize {
        self.budget
    }

    pub fn n_clusters(&self) -> usize {
        self.clusters.len()
    }

    pub fn cluster(&self, i: u32) -> Result<&ClusterBasis> {
        self.clusters
            .get(i as usize)
            .ok_or_else(|| Error::CorruptModel(format!("no basis for cluster {i}")))
    }

    pub fn cluster_mut(&mut self, i: u32) -> Result<&mut ClusterBasis> {
        self.clusters
            .get_mut(i as usize)
            .ok_or_else(|| Error::CorruptModel(format!("no basis for cluster {i}")))
    }

    pub fn clusters(&self) -> &[ClusterBasis] {
        &self.clusters
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.clusters.iter().map(ClusterBasis::len).collect()
    }

    pub fn total_vectors(&self) -> usize {
        self.clusters.iter().map(ClusterBasis::len).sum()
    }

    /// Stored bytes at 4 bytes per entry.
    pub fn bytes(&self) -> u64 {
        (self.total_vectors() * self.dim * 4) as u64
    }

    pub fn is_finite(&self) -> bool {
        self.clusters.iter().all(ClusterBasis::is_finite)
    }
}
