use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::codebook::InitReport;
use crate::error::Result;
use crate::trainer::TrainReport;

/// Wall time of each phase of a window, in milliseconds.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct PhaseTimes {
    pub hydrate_ms: f64,
    pub train_ms: f64,
    pub assign_ms: f64,
    pub compress_ms: f64,
}

impl PhaseTimes {
    pub fn total_ms(&self) -> f64 {
        self.hydrate_ms + self.train_ms + self.assign_ms + self.compress_ms
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct WindowReport {
    pub window_id: u64,
    pub records: usize,
    /// Units of each attribute seen for the first time in this window.
    pub new_units: Vec<usize>,
    /// Distinct units trained in this window.
    pub window_units: usize,
    pub epoch_loss: Vec<f64>,
    /// Mean compression loss of the window's units before and after fitting.
    pub compression_loss_before: f64,
    pub compression_loss_after: f64,
    pub skipped_fits: u64,
    pub phases: PhaseTimes,
    pub model_bytes: u64,
}

impl WindowReport {
    /// Append this report as one JSON line.
    pub fn write_jsonl<W: Write>(&self, mut out: W) -> Result<()> {
        serde_json::to_writer(&mut out, self)?;
        out.write_all(b"\n")?;
        Ok(())
    }

    pub(crate) fn absorb_train(&mut self, t: &TrainReport) {
        self.epoch_loss = t.epoch_loss.clone();
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PretrainReport {
    pub windows: usize,
    pub records: usize,
    pub train: Vec<TrainReport>,
    /// Per attribute; `None` for attributes left out of the model.
    pub init: Vec<Option<InitReport>>,
}

/// Byte breakdown of a model, against a dense table over the same units.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct MemoryReport {
    pub codes: u64,
    pub bases: u64,
    pub assignments: u64,
    pub total: u64,
    /// Dense rows currently held by the model; zero between windows.
    pub dense_resident: u64,
    /// Bytes of a dense `d`-wide table over every compressed unit.
    pub costly_baseline: u64,
    pub units: u64,
}

impl MemoryReport {
    /// Compressed size as a fraction of the dense baseline.
    pub fn ratio(&self) -> f64 {
        if self.costly_baseline == 0 {
            0.0
        } else {
            self.total as f64 / self.costly_baseline as f64
        }
    }

    /// `1 - ratio`.
    pub fn reduction(&self) -> f64 {
        if self.costly_baseline == 0 {
            0.0
        } else {
            1.0 - self.ratio()
        }
    }
}
