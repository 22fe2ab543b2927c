//! Online compressed embeddings for multi-modal record streams.
//!
//! Units of every attribute are grouped into fixed clusters; each cluster
//! owns a small set of basis vectors and every unit keeps only a sparse
//! weight vector over its cluster's basis. Dense embeddings exist only
//! transiently, for the units of the window being learned.

pub mod baselines;
pub mod codebook;
pub mod engine;
pub mod error;
pub mod eval;
pub mod parallel;
pub mod seed;
pub mod stream;
pub mod synth;
pub mod trainer;

pub use error::{Error, Result};
