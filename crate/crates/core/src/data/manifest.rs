use std::collections::HashSet;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::text::normalize_caption;

pub const CAPTION_COLUMNS: usize = 5;

#[derive(Clone, Debug, PartialEq)]
pub struct ManifestRow {
    pub file_name: String,
    /// Resolved audio path.
    pub path: PathBuf,
    /// Normalized, non-empty captions in column order.
    pub captions: Vec<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DatasetManifest {
    pub split: String,
    pub rows: Vec<ManifestRow>,
}

impl DatasetManifest {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

fn expected_header() -> Vec<String> {
    std::iter::once("file_name".to_string())
        .chain((1..=CAPTION_COLUMNS).map(|i| format!("caption_{i}")))
        .collect()
}

/// Reads a `file_name,caption_1..caption_5` CSV. Audio paths are resolved
/// against `audio_root`; the split tag is the CSV file stem.
pub fn load_manifest(csv_path: &Path, audio_root: &Path) -> Result<DatasetManifest> {
    let mut rdr = csv::ReaderBuilder::new()
        .flexible(false)
        .from_path(csv_path)
        .map_err(|e| csv_error(csv_path, e))?;
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| csv_error(csv_path, e))?
        .iter()
        .map(|h| h.trim().trim_start_matches('\u{feff}').to_string())
        .collect();
    let expected = expected_header();
    if header != expected {
        return Err(Error::Format(format!(
            "{}: header must be {} (found {})",
            csv_path.display(),
            expected.join(","),
            header.join(",")
        )));
    }
    let mut rows = Vec::new();
    let mut missing = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| csv_error(csv_path, e))?;
        let file_name = rec[0].trim().to_string();
        if file_name.is_empty() {
            return Err(Error::Format(format!(
                "{}: row {} has no file name",
                csv_path.display(),
                line + 2
            )));
        }
        let captions: Vec<String> = (1..=CAPTION_COLUMNS)
            .map(|i| normalize_caption(&rec[i]))
            .filter(|c| !c.is_empty())
            .collect();
        if captions.is_empty() {
            return Err(Error::Format(format!(
                "{}: {file_name} has no non-empty caption",
                csv_path.display()
            )));
        }
        if captions.len() < CAPTION_COLUMNS {
            log::warn!(
                "{}: {file_name} has {} of {CAPTION_COLUMNS} captions",
                csv_path.display(),
                captions.len()
            );
        }
        let path = audio_root.join(&file_name);
        if !path.is_file() {
            missing.push(path.clone());
        }
        rows.push(ManifestRow {
            file_name,
            path,
            captions,
        });
    }
    if !missing.is_empty() {
        return Err(Error::MissingFiles(missing));
    }
    let split = csv_path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    Ok(DatasetManifest { split, rows })
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(source) => Error::io(path, source),
        other => Error::Format(format!("{}: {other:?}", path.display())),
    }
}

/// `a` followed by `b`. File names must not repeat across the two.
pub fn merge_splits(a: &DatasetManifest, b: &DatasetManifest) -> Result<DatasetManifest> {
    let names: HashSet<&str> = a.rows.iter().map(|r| r.file_name.as_str()).collect();
    let dup: Vec<&str> = b
        .rows
        .iter()
        .map(|r| r.file_name.as_str())
        .filter(|n| names.contains(n))
        .collect();
    if !dup.is_empty() {
        return Err(Error::Conflict(format!(
            "file names in both {} and {}: {}",
            a.split,
            b.split,
            dup.join(", ")
        )));
    }
    let split = match (a.split.is_empty(), b.split.is_empty()) {
        (true, _) => b.split.clone(),
        (_, true) => a.split.clone(),
        _ => format!("{}+{}", a.split, b.split),
    };
    Ok(DatasetManifest {
        split,
        rows: a.rows.iter().chain(&b.rows).cloned().collect(),
    })
}

/// Writes rows in the same CSV layout `load_manifest` reads. Missing
/// caption columns are left empty.
pub fn write_manifest(path: &Path, rows: &[ManifestRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    w.write_record(expected_header()).map_err(|e| csv_error(path, e))?;
    for r in rows {
        if r.captions.len() > CAPTION_COLUMNS {
            return Err(Error::Input(format!(
                "{} has {} captions, at most {CAPTION_COLUMNS} fit",
                r.file_name,
                r.captions.len()
            )));
        }
        let mut rec = vec![r.file_name.as_str()];
        rec.extend(r.captions.iter().map(String::as_str));
        rec.resize(CAPTION_COLUMNS + 1, "");
        w.write_record(&rec).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
