//! Records, vocabularies, ingestion and windowing of multi-modal streams.

pub mod discretize;
pub mod ingest;
pub mod schema;
pub mod vocab;
pub mod window;

pub use discretize::{discretize_location, discretize_timestamp, tokenize};
pub use ingest::{IngestStats, Ingestor, Record, SkipReason};
pub use schema::{
    AttributeKind, AttributeSchema, ColumnKind, ColumnSpec, SchemaOptions, StreamSchema,
};
pub use vocab::{AttrId, Registry, UnitKey, Vocabulary};
pub use window::{
    segment_windows, window_novelty_stats, write_novelty_csv, Segmentation, UpdatingWindow,
};
