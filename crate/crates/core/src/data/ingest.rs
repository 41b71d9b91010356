//! Reader for directories of one-file-per-sample delimited tables.
//!
//! Each sample file has a header row naming its columns followed by one
//! row per timestep. Only the configured channels are kept, in the
//! configured order. Blank or unparseable cells become missing values.
//! Labels come from a separate manifest of `sample_id,label` rows.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use super::{default_channels, ClassLabel, Dataset, MvtsSample};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct IngestOptions {
    pub channels: Vec<String>,
    /// Field delimiter of sample files.
    pub delimiter: u8,
    pub partition_id: u32,
}

impl Default for IngestOptions {
    fn default() -> Self {
        Self {
            channels: default_channels(),
            delimiter: b'\t',
            partition_id: 1,
        }
    }
}

/// A sample file that was skipped, with the reason.
#[derive(Clone, Debug, PartialEq)]
pub struct Rejection {
    pub path: PathBuf,
    pub reason: String,
}

#[derive(Clone, Debug)]
pub struct IngestReport {
    pub dataset: Dataset,
    pub rejected: Vec<Rejection>,
}

/// Reads `sample_id,label` rows. A leading header row is skipped.
pub fn read_manifest(path: &Path) -> Result<HashMap<String, ClassLabel>> {
    if !path.is_file() {
        return Err(Error::IngestFile {
            path: path.to_path_buf(),
            message: "manifest not found".into(),
        });
    }
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)?;
    let mut out = HashMap::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec?;
        if rec.len() == 0 || rec.iter().all(str::is_empty) {
            continue;
        }
        if rec.len() != 2 {
            return Err(Error::IngestFile {
                path: path.to_path_buf(),
                message: format!("line {}: expected 2 fields, found {}", line + 1, rec.len()),
            });
        }
        if line == 0 && rec[1].eq_ignore_ascii_case("label") {
            continue;
        }
        let label: ClassLabel = rec[1].parse().map_err(|e: Error| Error::IngestFile {
            path: path.to_path_buf(),
            message: format!("line {}: {e}", line + 1),
        })?;
        out.insert(rec[0].to_string(), label);
    }
    Ok(out)
}

/// Loads every regular file in `dir` (except the manifest itself) as one sample.
pub fn ingest_directory(dir: &Path, manifest: &Path, opts: &IngestOptions) -> Result<IngestReport> {
    if !dir.is_dir() {
        return Err(Error::IngestFile {
            path: dir.to_path_buf(),
            message: "sample directory not found".into(),
        });
    }
    if opts.channels.is_empty() {
        return Err(Error::Config("no channels configured".into()));
    }
    let labels = read_manifest(manifest)?;
    let manifest_canon = fs::canonicalize(manifest).ok();

    let mut files: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file())
        .filter(|p| {
            !p.file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.starts_with('.'))
        })
        .filter(|p| fs::canonicalize(p).ok() != manifest_canon)
        .collect();
    files.sort();

    let mut dataset = Dataset::new(opts.partition_id, opts.channels.clone());
    let mut rejected = Vec::new();
    for path in files {
        let id = path
            .file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or_default()
            .to_string();
        let Some(&label) = labels.get(&id) else {
            reject(&mut rejected, &path, format!("sample id '{id}' not in manifest"));
            continue;
        };
        let sample = match read_sample(&path, &id, label, opts)? {
            Ok(s) => s,
            Err(reason) => {
                reject(&mut rejected, &path, reason);
                continue;
            }
        };
        if let Some(t) = dataset.timesteps() {
            if sample.timesteps() != t {
                reject(
                    &mut rejected,
                    &path,
                    format!("{} timesteps, expected {t}", sample.timesteps()),
                );
                continue;
            }
        }
        dataset.push(sample)?;
    }
    Ok(IngestReport { dataset, rejected })
}

fn reject(list: &mut Vec<Rejection>, path: &Path, reason: String) {
    log::warn!("rejected {}: {reason}", path.display());
    list.push(Rejection {
        path: path.to_path_buf(),
        reason,
    });
}

/// Outer error aborts the ingest; inner error rejects just this sample.
fn read_sample(
    path: &Path,
    id: &str,
    label: ClassLabel,
    opts: &IngestOptions,
) -> Result<std::result::Result<MvtsSample, String>> {
    let file_err = |message: String| Error::IngestFile {
        path: path.to_path_buf(),
        message,
    };
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(opts.delimiter)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)?;
    let header = rdr.headers()?.clone();
    let columns: Vec<usize> = opts
        .channels
        .iter()
        .map(|name| {
            header
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| file_err(format!("header is missing channel {name}")))
        })
        .collect::<Result<_>>()?;

    let p_len = columns.len();
    let mut values = Vec::new();
    let mut missing = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| file_err(e.to_string()))?;
        if rec.iter().all(str::is_empty) {
            continue;
        }
        for &c in &columns {
            match rec.get(c).and_then(|cell| cell.parse::<f64>().ok()).filter(|v| v.is_finite()) {
                Some(v) => {
                    values.push(v);
                    missing.push(false);
                }
                None => {
                    values.push(f64::NAN);
                    missing.push(true);
                }
            }
        }
    }
    let t_len = values.len() / p_len;
    for (p, name) in opts.channels.iter().enumerate() {
        let valid = (0..t_len).filter(|&t| !missing[t * p_len + p]).count();
        if valid < 2 {
            return Ok(Err(format!("channel {name} has {valid} valid rows (need at least 2)")));
        }
    }
    Ok(MvtsSample::with_mask(id, label, t_len, p_len, values, missing).map_err(|e| e.to_string()))
}
