//! The persistent compressed model: fixed clusters, per-cluster bases and
//! per-unit sparse codes.

pub mod basis;
pub mod clustering;
pub mod code;
pub mod init;
pub mod kmeans;

pub use basis::{allocate_bases, allocate_uniform, BasisSet, ClusterBasis};
pub use clustering::{assign_cluster, CategoryMap, ClusterMode, NoisyFixedClustering};
pub use code::{
    compression_loss, fit_code, reconstruct, shrink, CompressionConfig, CompressionLoss, FitMode,
    FitOutcome, FitScratch, SparseCode,
};
pub use init::{
    initialize_attribute, principal_basis, refit_codes, AttributePlan, BasisAllocation, InitReport,
};
pub use kmeans::{kmeans, KMeansFit};

use crate::error::{Error, Result};
use crate::stream::{AttrId, UnitKey};

/// Byte accounting of the compressed model at 4 bytes per value or index.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct CodebookBytes {
    pub codes: u64,
    pub bases: u64,
    pub assignments: u64,
}

impl CodebookBytes {
    pub fn total(&self) -> u64 {
        self.codes + self.bases + self.assignments
    }
}

impl std::ops::AddAssign for CodebookBytes {
    fn add_assign(&mut self, o: Self) {
        self.codes += o.codes;
        self.bases += o.bases;
        self.assignments += o.assignments;
    }
}

/// Per-unit header of a stored code: its nonzero count.
pub const CODE_HEADER_BYTES: u64 = 4;

/// Compressed model of one attribute.
#[derive(Debug, Clone, PartialEq)]
pub struct AttributeCodebook {
    attr: AttrId,
    pub(crate) clustering: NoisyFixedClustering,
    pub(crate) bases: BasisSet,
    codes: Vec<Option<SparseCode>>,
}

impl AttributeCodebook {
    pub fn new(attr: AttrId, clustering: NoisyFixedClustering, bases: BasisSet) -> Self {
        AttributeCodebook {
            attr,
            clustering,
            bases,
            codes: Vec::new(),
        }
    }

    pub fn attr(&self) -> AttrId {
        self.attr
    }

    pub fn clustering(&self) -> &NoisyFixedClustering {
        &self.clustering
    }

    pub fn bases(&self) -> &BasisSet {
        &self.bases
    }

    pub fn code(&self, id: u32) -> Option<&SparseCode> {
        self.codes.get(id as usize).and_then(Option::as_ref)
    }

    pub fn codes(&self) -> impl Iterator<Item = (u32, &SparseCode)> {
        self.codes
            .iter()
            .enumerate()
            .filter_map(|(i, c)| c.as_ref().map(|c| (i as u32, c)))
    }

    pub fn contains(&self, id: u32) -> bool {
        self.code(id).is_some()
    }

    pub fn n_codes(&self) -> usize {
        self.codes.iter().filter(|c| c.is_some()).count()
    }

    pub(crate) fn set_code(&mut self, id: u32, code: SparseCode) {
        let i = id as usize;
        if self.codes.len() <= i {
            self.codes.resize(i + 1, None);
        }
        self.codes[i] = Some(code);
    }

    /// Admit a unit not seen before: fix its cluster (nearest centroid or its
    /// category) and give it an all-zero code. Known units are left alone.
    pub fn admit(&mut self, id: u32, symbol: &str, vector: &[f64]) -> Result<u32> {
        if let Some(c) = self.code(id) {
            return Ok(c.cluster());
        }
        let cluster = self.clustering.resolve(symbol, vector);
        self.clustering.assign(id, cluster)?;
        let n = self.bases.cluster(cluster)?.len();
        self.set_code(id, SparseCode::zero(cluster, n));
        Ok(cluster)
    }

    pub fn reconstruct(&self, id: u32) -> Result<Option<Vec<f64>>> {
        match self.code(id) {
            Some(code) => Ok(Some(reconstruct(
                code,
                self.bases.cluster(code.cluster())?,
            )?)),
            None => Ok(None),
        }
    }

    pub fn fit_unit(
        &mut self,
        id: u32,
        target: &[f64],
        cfg: &CompressionConfig,
        mode: FitMode,
        scratch: &mut FitScratch,
    ) -> Result<FitOutcome> {
        let code = self
            .codes
            .get_mut(id as usize)
            .and_then(Option::as_mut)
            .ok_or(Error::MissingUnit(UnitKey::new(self.attr, id)))?;
        let basis = self.bases.cluster_mut(code.cluster())?;
        Ok(fit_code(code, target, basis, cfg, mode, scratch))
    }

    pub fn nnz(&self) -> usize {
        self.codes().map(|(_, c)| c.nnz()).sum()
    }

    /// Total stored weights over the total code capacity (Σ |B_i| per unit).
    pub fn nonzero_fraction(&self) -> f64 {
        let cap: usize = self.codes().map(|(_, c)| c.n_basis()).sum();
        if cap == 0 {
            0.0
        } else {
            self.nnz() as f64 / cap as f64
        }
    }

    pub fn bytes(&self) -> CodebookBytes {
        let n = self.n_codes() as u64;
        CodebookBytes {
            codes: self.nnz() as u64 * 8 + n * CODE_HEADER_BYTES,
            bases: self.bases.bytes(),
            assignments: self.clustering.n_assigned() as u64 * 4,
        }
    }

    pub(crate) fn from_parts(
        attr: AttrId,
        clustering: NoisyFixedClustering,
        bases: BasisSet,
        codes: Vec<Option<SparseCode>>,
    ) -> Self {
        AttributeCodebook {
            attr,
            clustering,
            bases,
            codes,
        }
    }
}
