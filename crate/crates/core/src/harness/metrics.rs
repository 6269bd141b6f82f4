use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// One row of a metrics file: `run_id,iter,epoch,split,accuracy,episodes,seconds`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub run_id: String,
    /// Dataset-batch iteration (0 in online mode).
    pub iter: usize,
    pub epoch: usize,
    pub split: String,
    pub accuracy: f64,
    pub episodes: usize,
    /// Wall time since the run started; 0 unless wall-clock recording is on.
    pub seconds: f64,
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::file(path, io),
        other => Error::Config(format!("{}: {other:?}", path.display())),
    }
}

pub fn write_metrics(path: &Path, records: &[MetricsRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    for r in records {
        w.serialize(r).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::file(path, e))
}

pub fn read_metrics(path: &Path) -> Result<Vec<MetricsRecord>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    r.deserialize().map(|row| row.map_err(|e| csv_err(path, e))).collect()
}
