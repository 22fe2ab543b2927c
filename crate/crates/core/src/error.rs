use std::io;

use thiserror::Error;

use crate::stream::UnitKey;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("invalid coordinate ({lat}, {lon})")]
    InvalidCoordinate { lat: f64, lon: f64 },

    #[error("record has no other embedded unit to form a context")]
    DegenerateContext,

    #[error("unit {0:?} is not present in the embedding table")]
    MissingUnit(UnitKey),

    #[error("unit {unit:?} already belongs to cluster {existing}, refusing move to {requested}")]
    ClusterReassignment {
        unit: UnitKey,
        existing: u32,
        requested: u32,
    },

    #[error("corrupt model: {0}")]
    CorruptModel(String),

    #[error("corrupt worker result: {0}")]
    CorruptResult(String),

    #[error("model file version {found} is not supported (expected {expected})")]
    Version { found: u32, expected: u32 },

    #[error("model file checksum mismatch")]
    Checksum,

    #[error("metric undefined over an empty result set")]
    EmptyMetric,

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] io::Error),
}
