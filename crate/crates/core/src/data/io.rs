//! Canonical single-file dataset serialization (JSON).
//!
//! ```text
//! {
//!   "format": "mvts-dataset",
//!   "schema_version": 1,
//!   "partition_id": 1,
//!   "channel_names": ["TOTUSJH", ...],
//!   "timesteps": 60,               // null when empty
//!   "scaling_params": {...} | null,
//!   "samples": [
//!     {"id": "...", "label": "FLARE", "synthetic": false,
//!      "values": [[v, v, v, v], ...]}   // T rows of P values; null = missing
//!   ]
//! }
//! ```

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ClassLabel, Dataset, MvtsSample, ScalingParams};
use crate::error::{Error, Result};

pub const DATASET_FORMAT: &str = "mvts-dataset";
pub const DATASET_SCHEMA_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct DatasetFile {
    format: String,
    schema_version: u32,
    partition_id: u32,
    channel_names: Vec<String>,
    timesteps: Option<usize>,
    scaling_params: Option<ScalingParams>,
    samples: Vec<SampleRecord>,
}

#[derive(Serialize, Deserialize)]
struct SampleRecord {
    id: String,
    label: ClassLabel,
    synthetic: bool,
    values: Vec<Vec<Option<f64>>>,
}

pub fn write_dataset(ds: &Dataset, path: &Path) -> Result<()> {
    let file = DatasetFile {
        format: DATASET_FORMAT.into(),
        schema_version: DATASET_SCHEMA_VERSION,
        partition_id: ds.partition_id,
        channel_names: ds.channel_names.clone(),
        timesteps: ds.timesteps(),
        scaling_params: ds.scaling_params.clone(),
        samples: ds
            .samples
            .iter()
            .map(|s| SampleRecord {
                id: s.id.clone(),
                label: s.label,
                synthetic: s.synthetic,
                values: (0..s.timesteps())
                    .map(|t| {
                        (0..s.channels())
                            .map(|p| (!s.is_missing(t, p)).then(|| s.get(t, p)))
                            .collect()
                    })
                    .collect(),
            })
            .collect(),
    };
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    let mut w = BufWriter::new(fs::File::create(path)?);
    serde_json::to_writer(&mut w, &file)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

pub fn read_dataset(path: &Path) -> Result<Dataset> {
    let text = fs::read_to_string(path)?;
    let file: DatasetFile = serde_json::from_str(&text)?;
    if file.format != DATASET_FORMAT {
        return Err(Error::Ingest(format!(
            "{}: not a dataset file (format '{}')",
            path.display(),
            file.format
        )));
    }
    if file.schema_version != DATASET_SCHEMA_VERSION {
        return Err(Error::Ingest(format!(
            "{}: unsupported schema version {}",
            path.display(),
            file.schema_version
        )));
    }
    let p_len = file.channel_names.len();
    let mut ds = Dataset::new(file.partition_id, file.channel_names);
    ds.scaling_params = file.scaling_params;
    for rec in file.samples {
        let t_len = rec.values.len();
        let mut values = Vec::with_capacity(t_len * p_len);
        let mut missing = Vec::with_capacity(t_len * p_len);
        for row in &rec.values {
            if row.len() != p_len {
                return Err(Error::Shape(format!(
                    "sample '{}' row has {} values, expected {p_len}",
                    rec.id,
                    row.len()
                )));
            }
            for v in row {
                values.push(v.unwrap_or(f64::NAN));
                missing.push(v.is_none());
            }
        }
        let mut s = MvtsSample::with_mask(rec.id, rec.label, t_len, p_len, values, missing)?;
        s.synthetic = rec.synthetic;
        ds.push(s)?;
    }
    Ok(ds)
}
