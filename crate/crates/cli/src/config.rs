//! The run configuration: one JSON document per experiment.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use compstream::codebook::{AttributePlan, BasisAllocation, CategoryMap, CompressionConfig};
use compstream::engine::EngineConfig;
use compstream::eval::{ProtocolConfig, TiePolicy};
use compstream::parallel::MergePolicy;
use compstream::stream::{ColumnSpec, SchemaOptions, StreamSchema};
use compstream::trainer::TrainConfig;
use serde::{Deserialize, Serialize};
use serde_json::Value;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchemaConfig {
    pub columns: Vec<ColumnSpec>,
    #[serde(default)]
    pub options: SchemaOptions,
}

/// Compression settings of one attribute; unset fields fall back to the
/// run-wide values.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttributeOverride {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cluster_fraction: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub budget_fraction: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub allocation: Option<BasisAllocation>,
    /// CSV of `unit_symbol,category_symbol` defining explicit clusters.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub categories: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSettings {
    pub n_query_windows: usize,
    pub negatives: usize,
    pub ks: Vec<usize>,
    /// Attribute names to hide; all attributes when empty.
    pub targets: Vec<String>,
    pub ties: TiePolicy,
}

impl Default for EvalSettings {
    fn default() -> Self {
        let p = ProtocolConfig::default();
        EvalSettings {
            n_query_windows: p.n_query_windows,
            negatives: p.negatives,
            ks: p.ks,
            targets: Vec::new(),
            ties: p.ties,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaselineSettings {
    /// Width of the dimension-reduction baseline.
    pub reduced_dim: usize,
    pub bits: u32,
    /// Buckets per attribute as a fraction of its units.
    pub hash_ratio: f64,
}

impl Default for BaselineSettings {
    fn default() -> Self {
        BaselineSettings {
            reduced_dim: 8,
            bits: 2,
            hash_ratio: 0.2,
        }
    }
}

fn default_true() -> bool {
    true
}

fn default_pretrain_fraction() -> f64 {
    0.5
}

fn default_cluster_fraction() -> f64 {
    AttributePlan::default().cluster_fraction
}

fn default_budget_fraction() -> f64 {
    AttributePlan::default().budget_fraction
}

fn default_workers() -> usize {
    1
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub dataset: PathBuf,
    #[serde(default = "default_true")]
    pub has_header: bool,
    pub schema: SchemaConfig,
    /// Window length in seconds.
    pub window_span: i64,
    /// Leading share of the windows used for pretraining.
    #[serde(default = "default_pretrain_fraction")]
    pub pretrain_fraction: f64,
    /// Clusters per attribute as a fraction of its units.
    #[serde(default = "default_cluster_fraction")]
    pub cluster_fraction: f64,
    /// Basis vectors per attribute as a fraction of its units.
    #[serde(default = "default_budget_fraction")]
    pub budget_fraction: f64,
    #[serde(default)]
    pub allocation: BasisAllocation,
    /// Per-attribute settings keyed by attribute name.
    #[serde(default)]
    pub attributes: BTreeMap<String, AttributeOverride>,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub compression: CompressionConfig,
    #[serde(default = "default_workers")]
    pub workers: usize,
    #[serde(default)]
    pub merge: MergePolicy,
    pub seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub eval: EvalSettings,
    #[serde(default)]
    pub baselines: BaselineSettings,
}

/// Values given on the command line or in the environment.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub output_dir: Option<PathBuf>,
    pub workers: Option<usize>,
    pub window_span: Option<i64>,
    pub pretrain_fraction: Option<f64>,
}

fn absolute(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

impl RunConfig {
    /// Read `path`, apply `overrides`, and validate. Paths inside the file
    /// resolve against its directory; override paths against the working
    /// directory.
    pub fn load(path: &Path, overrides: &Overrides) -> Result<Self> {
        let text = fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let mut doc: Value = serde_json::from_str(&text)
            .with_context(|| format!("parsing config {}", path.display()))?;
        let obj = doc
            .as_object_mut()
            .context("config must be a JSON object")?;
        if let Some(s) = overrides.seed {
            obj.insert("seed".into(), s.into());
        }
        if let Some(w) = overrides.workers {
            obj.insert("workers".into(), w.into());
        }
        if let Some(s) = overrides.window_span {
            obj.insert("window_span".into(), s.into());
        }
        if let Some(f) = overrides.pretrain_fraction {
            obj.insert("pretrain_fraction".into(), f.into());
        }
        let mut cfg: RunConfig = serde_json::from_value(doc)
            .with_context(|| format!("invalid config {}", path.display()))?;

        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        let base = if base.as_os_str().is_empty() {
            PathBuf::from(".")
        } else {
            base
        };
        cfg.dataset = absolute(&base, &cfg.dataset);
        for o in cfg.attributes.values_mut() {
            if let Some(c) = &o.categories {
                o.categories = Some(absolute(&base, c));
            }
        }
        cfg.output_dir = match &overrides.output_dir {
            Some(d) => absolute(&std::env::current_dir()?, d),
            None => absolute(&base, &cfg.output_dir),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let fractions = [
            ("pretrain_fraction", self.pretrain_fraction),
            ("cluster_fraction", self.cluster_fraction),
            ("budget_fraction", self.budget_fraction),
            ("baselines.hash_ratio", self.baselines.hash_ratio),
        ];
        let per_attr = self.attributes.iter().flat_map(|(name, o)| {
            [
                ("cluster_fraction", o.cluster_fraction),
                ("budget_fraction", o.budget_fraction),
            ]
            .into_iter()
            .filter_map(move |(k, v)| v.map(|v| (format!("attributes.{name}.{k}"), v)))
        });
        for (name, f) in fractions
            .iter()
            .map(|(n, f)| (n.to_string(), *f))
            .chain(per_attr)
        {
            ensure!(f > 0.0 && f <= 1.0, "{name} must lie in (0, 1], got {f}");
        }
        ensure!(self.window_span > 0, "window_span must be positive");
        ensure!(self.workers >= 1, "workers must be >= 1");
        ensure!(
            self.baselines.reduced_dim >= 1,
            "baselines.reduced_dim must be >= 1"
        );
        ensure!(
            self.dataset.is_file(),
            "dataset {} does not exist",
            self.dataset.display()
        );
        for (name, o) in &self.attributes {
            if let Some(c) = &o.categories {
                ensure!(
                    c.is_file(),
                    "categories file {} for {name} does not exist",
                    c.display()
                );
            }
        }
        let schema = self.schema()?;
        for name in self.attributes.keys().chain(&self.eval.targets) {
            schema
                .attribute_id(name)
                .with_context(|| format!("unknown attribute {name}"))?;
        }
        self.engine().validate()?;
        Ok(())
    }

    pub fn schema(&self) -> Result<StreamSchema> {
        Ok(StreamSchema::new(
            self.schema.columns.clone(),
            self.schema.options.clone(),
        )?)
    }

    pub fn engine(&self) -> EngineConfig {
        EngineConfig {
            train: self.train.clone(),
            compression: self.compression.clone(),
            seed: self.seed,
        }
    }

    /// One compression plan per attribute of `schema`.
    pub fn plans(&self, schema: &StreamSchema) -> Result<Vec<AttributePlan>> {
        schema
            .attributes()
            .iter()
            .map(|a| {
                let o = self.attributes.get(&a.name).cloned().unwrap_or_default();
                let categories = match &o.categories {
                    Some(p) => Some(
                        CategoryMap::from_path(p)
                            .with_context(|| format!("reading {}", p.display()))?,
                    ),
                    None => None,
                };
                let plan = AttributePlan {
                    cluster_fraction: o.cluster_fraction.unwrap_or(self.cluster_fraction),
                    budget_fraction: o.budget_fraction.unwrap_or(self.budget_fraction),
                    allocation: o.allocation.unwrap_or(self.allocation),
                    categories,
                };
                plan.validate()?;
                Ok(plan)
            })
            .collect()
    }

    pub fn protocol(&self, schema: &StreamSchema) -> Result<ProtocolConfig> {
        let targets = self
            .eval
            .targets
            .iter()
            .map(|n| schema.attribute_id(n))
            .collect::<compstream::Result<Vec<_>>>()?;
        if self.eval.ks.contains(&0) {
            bail!("eval.ks must be >= 1");
        }
        Ok(ProtocolConfig {
            n_query_windows: self.eval.n_query_windows,
            negatives: self.eval.negatives,
            ks: self.eval.ks.clone(),
            targets,
            ties: self.eval.ties,
            seed: self.seed,
        })
    }

    /// Write the configuration with every default filled in.
    pub fn write_resolved(&self) -> Result<()> {
        fs::create_dir_all(&self.output_dir)
            .with_context(|| format!("creating output dir {}", self.output_dir.display()))?;
        let path = self.output_dir.join("config.resolved.json");
        fs::write(&path, serde_json::to_string_pretty(self)? + "\n")
            .with_context(|| format!("writing {}", path.display()))?;
        Ok(())
    }
}
