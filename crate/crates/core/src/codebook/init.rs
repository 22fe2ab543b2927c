//! Building a codebook from pretrained dense embeddings.

use log::warn;
use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::basis::{allocate_bases, allocate_uniform, BasisSet, ClusterBasis};
use super::clustering::{CategoryMap, NoisyFixedClustering};
use super::code::{CompressionConfig, FitMode, FitScratch, SparseCode};
use super::kmeans::kmeans;
use super::AttributeCodebook;
use crate::error::{Error, Result};
use crate::seed::{rng_for, tag};
use crate::stream::{AttrId, Vocabulary};
use crate::trainer::EmbeddingTable;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BasisAllocation {
    /// Proportional to cluster size.
    #[default]
    Weighted,
    /// Same count for every cluster.
    Uniform,
}

/// How one attribute is compressed.
#[derive(Debug, Clone, PartialEq)]
pub struct AttributePlan {
    /// Number of clusters as a fraction of the attribute's units.
    pub cluster_fraction: f64,
    /// Total basis vectors as a fraction of the attribute's units.
    pub budget_fraction: f64,
    pub allocation: BasisAllocation,
    /// Explicit clusters; k-means over the pretrained vectors when absent.
    pub categories: Option<CategoryMap>,
}

impl Default for AttributePlan {
    fn default() -> Self {
        AttributePlan {
            cluster_fraction: 0.01,
            budget_fraction: 0.1,
            allocation: BasisAllocation::Weighted,
            categories: None,
        }
    }
}

impl AttributePlan {
    pub fn validate(&self) -> Result<()> {
        for (name, f) in [
            ("cluster_fraction", self.cluster_fraction),
            ("budget_fraction", self.budget_fraction),
        ] {
            if !(f > 0.0 && f <= 1.0) {
                return Err(Error::Config(format!("{name} must lie in (0, 1], got {f}")));
            }
        }
        Ok(())
    }
}

fn fraction_count(fraction: f64, n: usize) -> usize {
    ((fraction * n as f64).round() as usize).max(1)
}

/// Top principal directions (uncentered) of `members`, padded with seeded
/// random unit vectors when the members span fewer than `n` directions.
pub fn principal_basis(members: &[&[f64]], dim: usize, n: usize, pad_seed: u64) -> Vec<Vec<f64>> {
    let m = members.len();
    let mut dirs: Vec<Vec<f64>> = Vec::with_capacity(n);
    if m > 0 {
        let x = DMatrix::from_fn(m, dim, |i, j| members[i][j]);
        // work in the smaller of the two Gram spaces
        let (vals, vecs, via_rows) = if m < dim {
            let e = SymmetricEigen::new(&x * x.transpose());
            (e.eigenvalues, e.eigenvectors, true)
        } else {
            let e = SymmetricEigen::new(x.transpose() * &x);
            (e.eigenvalues, e.eigenvectors, false)
        };
        let mut order: Vec<usize> = (0..vals.len()).collect();
        order.sort_by(|&a, &b| vals[b].total_cmp(&vals[a]).then(a.cmp(&b)));
        let top = vals.iter().cloned().fold(0.0f64, f64::max);
        for &k in order.iter().take(n) {
            if !(vals[k] > top * 1e-12) || vals[k] <= 0.0 {
                break;
            }
            let mut u: Vec<f64> = if via_rows {
                let e = vecs.column(k);
                (0..dim)
                    .map(|j| (0..m).map(|i| x[(i, j)] * e[i]).sum())
                    .collect()
            } else {
                vecs.column(k).iter().copied().collect()
            };
            let norm = u.iter().map(|a| a * a).sum::<f64>().sqrt();
            if !(norm > 0.0) {
                break;
            }
            // fix the sign so the largest-magnitude entry is positive
            let pivot = u
                .iter()
                .cloned()
                .fold(0.0f64, |a, b| if b.abs() > a.abs() { b } else { a });
            let s = if pivot < 0.0 { -1.0 } else { 1.0 } / norm;
            u.iter_mut().for_each(|a| *a *= s);
            dirs.push(u);
        }
    }
    if dirs.len() < n {
        let mut rng = rng_for(pad_seed, &[]);
        while dirs.len() < n {
            let mut u: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let norm = u
                .iter()
                .map(|a| a * a)
                .sum::<f64>()
                .sqrt()
                .max(f64::MIN_POSITIVE);
            u.iter_mut().for_each(|a| *a /= norm);
            dirs.push(u);
        }
    }
    dirs
}

/// Summary of one attribute's initialization.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct InitReport {
    pub n_units: usize,
    pub n_clusters: usize,
    pub basis_vectors: usize,
    /// Mean compression loss after each sweep.
    pub pass_loss: Vec<f64>,
}

/// Cluster the pretrained units of `attr`, allocate and initialize bases,
/// and fit every unit's code.
pub fn initialize_attribute(
    attr: AttrId,
    table: &EmbeddingTable,
    vocab: &Vocabulary,
    plan: &AttributePlan,
    cfg: &CompressionConfig,
    seed: u64,
) -> Result<(AttributeCodebook, InitReport)> {
    plan.validate()?;
    let slots = table.pool(attr);
    if slots.is_empty() {
        return Err(Error::Parameter(format!(
            "attribute {attr} has no pretrained units"
        )));
    }
    let dim = table.dim();
    let n_units = slots.len();
    let points: Vec<&[f64]> = slots.iter().map(|&s| table.row(s)).collect();
    let ids: Vec<u32> = slots.iter().map(|&s| table.keys()[s].id).collect();

    let (mut clustering, assignments) = match &plan.categories {
        Some(categories) => {
            let c = NoisyFixedClustering::explicit(attr, categories.clone());
            let a: Vec<u32> = ids
                .iter()
                .map(|&id| {
                    let sym = vocab
                        .symbol(crate::stream::UnitKey::new(attr, id))
                        .unwrap_or("");
                    categories.assign_explicit(sym)
                })
                .collect();
            (c, a)
        }
        None => {
            let wanted = fraction_count(plan.cluster_fraction, n_units);
            let k = if wanted > n_units {
                warn!("attribute {attr}: {wanted} clusters requested but only {n_units} units; clipping");
                n_units
            } else {
                wanted
            };
            let fit = kmeans(
                &points,
                k,
                &mut rng_for(seed, &[tag::KMEANS, attr as u64]),
                100,
            )?;
            let centroids = fit
                .centroids
                .iter()
                .map(|c| c.iter().map(|&x| x as f32).collect())
                .collect();
            let a = fit.assignments.iter().map(|&c| c as u32).collect();
            (NoisyFixedClustering::implicit(attr, centroids), a)
        }
    };
    for (&id, &c) in ids.iter().zip(&assignments) {
        clustering.assign(id, c)?;
    }

    let budget = fraction_count(plan.budget_fraction, n_units);
    let sizes = clustering.sizes();
    let counts = match plan.allocation {
        BasisAllocation::Weighted => allocate_bases(&sizes, budget),
        BasisAllocation::Uniform => allocate_uniform(sizes.len(), budget),
    };
    let mut members: Vec<Vec<&[f64]>> = vec![Vec::new(); sizes.len()];
    for (p, &c) in points.iter().zip(&assignments) {
        members[c as usize].push(p);
    }
    let clusters = counts
        .iter()
        .enumerate()
        .map(|(i, &n)| {
            let pad = crate::seed::derive_seed(seed, &[tag::BASIS_PAD, attr as u64, i as u64]);
            ClusterBasis::from_columns(dim, &principal_basis(&members[i], dim, n, pad))
        })
        .collect();
    let bases = BasisSet::new(dim, budget, clusters);

    let mut book = AttributeCodebook::new(attr, clustering, bases);
    for (&id, &c) in ids.iter().zip(&assignments) {
        let n = book.bases.cluster(c)?.len();
        book.set_code(id, SparseCode::zero(c, n));
    }

    let mut report = InitReport {
        n_units,
        n_clusters: book.clustering.n_clusters(),
        basis_vectors: book.bases.total_vectors(),
        pass_loss: Vec::new(),
    };
    let mut scratch = FitScratch::default();
    let mut prev = f64::INFINITY;
    for _ in 0..cfg.init_passes.max(1) {
        let mut total = 0.0;
        for (&id, p) in ids.iter().zip(&points) {
            total += book
                .fit_unit(id, p, cfg, FitMode::CodeAndBasis, &mut scratch)?
                .loss_after;
        }
        let mean = total / n_units as f64;
        report.pass_loss.push(mean);
        if prev.is_finite() && (prev - mean).abs() <= cfg.rel_tol * prev {
            break;
        }
        prev = mean;
    }
    Ok((book, report))
}

/// Fit only the codes of `ids` against fixed bases. Used when the bases
/// should not move, e.g. when sweeping the L1 weight on a fixed fixture.
pub fn refit_codes(
    book: &mut AttributeCodebook,
    targets: &[(u32, &[f64])],
    cfg: &CompressionConfig,
) -> Result<f64> {
    let mut scratch = FitScratch::default();
    let mut total = 0.0;
    for (id, t) in targets {
        total += book
            .fit_unit(*id, t, cfg, FitMode::CodeOnly, &mut scratch)?
            .loss_after;
    }
    Ok(total)
}
