use std::collections::HashMap;
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::kmeans::nearest;
use crate::error::{Error, Result};
use crate::stream::{AttrId, UnitKey};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClusterMode {
    /// Clusters come from a category file.
    Explicit,
    /// Clusters come from k-means over pretrained embeddings.
    Implicit,
}

/// Unit symbol to category mapping loaded from `unit_symbol,category_symbol` rows.
///
/// Categories are numbered in order of first appearance.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CategoryMap {
    categories: Vec<String>,
    category_index: HashMap<String, u32>,
    unit_category: HashMap<String, u32>,
}

impl CategoryMap {
    pub fn from_reader<R: Read>(input: R) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(false)
            .flexible(true)
            .from_reader(input);
        let mut map = CategoryMap::default();
        for row in reader.records() {
            let row = row?;
            if row.len() < 2 {
                continue;
            }
            let (unit, cat) = (row[0].trim(), row[1].trim());
            if unit.is_empty()
                || cat.is_empty()
                || (unit == "unit_symbol" && cat == "category_symbol")
            {
                continue;
            }
            map.insert(unit, cat);
        }
        Ok(map)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        Self::from_reader(std::fs::File::open(path)?)
    }

    pub fn insert(&mut self, unit: &str, category: &str) {
        let next = self.categories.len() as u32;
        let idx = *self
            .category_index
            .entry(category.to_owned())
            .or_insert_with(|| {
                self.categories.push(category.to_owned());
                next
            });
        self.unit_category.entry(unit.to_owned()).or_insert(idx);
    }

    pub fn n_categories(&self) -> usize {
        self.categories.len()
    }

    pub fn categories(&self) -> &[String] {
        &self.categories
    }

    /// Index of the fallback cluster for unmapped units.
    pub fn unknown_cluster(&self) -> u32 {
        self.categories.len() as u32
    }

    /// Cluster of a unit symbol; unmapped symbols land in the unknown cluster.
    pub fn assign_explicit(&self, unit_symbol: &str) -> u32 {
        self.unit_category
            .get(unit_symbol)
            .copied()
            .unwrap_or_else(|| self.unknown_cluster())
    }

    pub fn from_categories(
        categories: Vec<String>,
        assignments: impl IntoIterator<Item = (String, u32)>,
    ) -> Self {
        let category_index = categories
            .iter()
            .enumerate()
            .map(|(i, c)| (c.clone(), i as u32))
            .collect();
        CategoryMap {
            categories,
            category_index,
            unit_category: assignments.into_iter().collect(),
        }
    }

    pub fn unit_assignments(&self) -> impl Iterator<Item = (&str, u32)> {
        self.unit_category.iter().map(|(k, v)| (k.as_str(), *v))
    }
}

/// Immutable cluster membership for one attribute.
///
/// A unit, once assigned, keeps its cluster for the lifetime of the model.
#[derive(Debug, Clone, PartialEq)]
pub struct NoisyFixedClustering {
    attr: AttrId,
    mode: ClusterMode,
    n_clusters: u32,
    cluster_of: Vec<Option<u32>>,
    centroids: Vec<Vec<f32>>,
    categories: Option<CategoryMap>,
}

impl NoisyFixedClustering {
    pub fn implicit(attr: AttrId, centroids: Vec<Vec<f32>>) -> Self {
        NoisyFixedClustering {
            attr,
            mode: ClusterMode::Implicit,
            n_clusters: centroids.len() as u32,
            cluster_of: Vec::new(),
            centroids,
            categories: None,
        }
    }

    pub fn explicit(attr: AttrId, categories: CategoryMap) -> Self {
        NoisyFixedClustering {
            attr,
            mode: ClusterMode::Explicit,
            n_clusters: categories.n_categories() as u32 + 1,
            cluster_of: Vec::new(),
            centroids: Vec::new(),
            categories: Some(categories),
        }
    }

    pub fn attr(&self) -> AttrId {
        self.attr
    }

    pub fn mode(&self) -> ClusterMode {
        self.mode
    }

    pub fn n_clusters(&self) -> usize {
        self.n_clusters as usize
    }

    pub fn centroids(&self) -> &[Vec<f32>] {
        &self.centroids
    }

    pub fn categories(&self) -> Option<&CategoryMap> {
        self.categories.as_ref()
    }

    pub fn cluster_of(&self, unit_id: u32) -> Option<u32> {
        self.cluster_of.get(unit_id as usize).copied().flatten()
    }

    pub fn assignments(&self) -> &[Option<u32>] {
        &self.cluster_of
    }

    pub fn n_assigned(&self) -> usize {
        self.cluster_of.iter().filter(|c| c.is_some()).count()
    }

    /// Record the cluster of `unit_id`. Re-assigning to a different cluster is
    /// refused.
    pub fn assign(&mut self, unit_id: u32, cluster: u32) -> Result<()> {
        if cluster >= self.n_clusters {
            return Err(Error::CorruptModel(format!(
                "cluster {cluster} out of range ({} clusters)",
                self.n_clusters
            )));
        }
        let idx = unit_id as usize;
        if self.cluster_of.len() <= idx {
            self.cluster_of.resize(idx + 1, None);
        }
        match self.cluster_of[idx] {
            Some(existing) if existing != cluster => Err(Error::ClusterReassignment {
                unit: UnitKey::new(self.attr, unit_id),
                existing,
                requested: cluster,
            }),
            _ => {
                self.cluster_of[idx] = Some(cluster);
                Ok(())
            }
        }
    }

    /// Cluster a new unit would join: nearest centroid (implicit) or its
    /// category (explicit).
    pub fn resolve(&self, symbol: &str, vector: &[f64]) -> u32 {
        match self.mode {
            ClusterMode::Implicit => assign_cluster(vector, &self.centroids),
            ClusterMode::Explicit => self
                .categories
                .as_ref()
                .map_or(self.n_clusters - 1, |c| c.assign_explicit(symbol)),
        }
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.n_clusters()];
        for c in self.cluster_of.iter().flatten() {
            sizes[*c as usize] += 1;
        }
        sizes
    }

    pub(crate) fn from_parts(
        attr: AttrId,
        mode: ClusterMode,
        n_clusters: u32,
        cluster_of: Vec<Option<u32>>,
        centroids: Vec<Vec<f32>>,
        categories: Option<CategoryMap>,
    ) -> Self {
        NoisyFixedClustering {
            attr,
            mode,
            n_clusters,
            cluster_of,
            centroids,
            categories,
        }
    }
}

/// Nearest centroid by Euclidean distance, ties to the lowest index.
pub fn assign_cluster(v: &[f64], centroids: &[Vec<f32>]) -> u32 {
    let c64: Vec<Vec<f64>> = centroids
        .iter()
        .map(|c| c.iter().map(|&x| x as f64).collect())
        .collect();
    nearest(v, &c64) as u32
}
