//! Manifests tying sample ids to matrix files and labels.

use std::fs::File;
use std::path::{Path, PathBuf};

use lrp_core::lrp::RelevanceMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{PipelineError, Result};
use crate::matrix_io::{export_matrix, import_matrix};

pub const MANIFEST_NAME: &str = "manifest.csv";

/// One manifest row; `file` is relative to the manifest's directory.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    pub file: String,
    pub label: Option<bool>,
    pub prompt_len: usize,
    pub response_len: usize,
    pub response: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledMatrix {
    pub id: String,
    pub matrix: RelevanceMatrix,
    /// `true` = hallucinated.
    pub label: bool,
}

pub fn write_manifest(path: &Path, entries: &[ManifestEntry]) -> Result<()> {
    let file = File::create(path).map_err(PipelineError::io(path))?;
    let mut w = csv::Writer::from_writer(file);
    for e in entries {
        w.serialize(e)?;
    }
    w.flush().map_err(PipelineError::io(path))
}

pub fn read_manifest(path: &Path) -> Result<Vec<ManifestEntry>> {
    let file = File::open(path).map_err(PipelineError::io(path))?;
    let mut entries = Vec::new();
    for (i, row) in csv::Reader::from_reader(file).deserialize().enumerate() {
        entries.push(row.map_err(|e: csv::Error| PipelineError::Manifest {
            path: path.to_path_buf(),
            message: format!("row {}: {e}", i + 1),
        })?);
    }
    Ok(entries)
}

/// Loads every matrix listed in a manifest; every row must carry a label.
pub fn load_labeled(manifest: &Path) -> Result<Vec<LabeledMatrix>> {
    let dir = manifest.parent().map(Path::to_path_buf).unwrap_or_default();
    read_manifest(manifest)?
        .into_iter()
        .map(|e| {
            let label = e.label.ok_or_else(|| PipelineError::Manifest {
                path: manifest.to_path_buf(),
                message: format!("sample {} has no label", e.id),
            })?;
            Ok(LabeledMatrix {
                matrix: import_matrix(&dir.join(&e.file))?,
                id: e.id,
                label,
            })
        })
        .collect()
}

/// Writes `sample_NNNNN.lrpm` files plus a manifest into `dir`.
pub fn write_dataset(dir: &Path, items: &[LabeledMatrix]) -> Result<PathBuf> {
    std::fs::create_dir_all(dir).map_err(PipelineError::io(dir))?;
    let entries = items
        .iter()
        .enumerate()
        .map(|(i, item)| {
            let file = format!("sample_{i:05}.lrpm");
            export_matrix(item.matrix.matrix(), &dir.join(&file))?;
            Ok(ManifestEntry {
                id: item.id.clone(),
                file,
                label: Some(item.label),
                prompt_len: item.matrix.prompt_len(),
                response_len: item.matrix.response_len(),
                response: String::new(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let path = dir.join(MANIFEST_NAME);
    write_manifest(&path, &entries)?;
    Ok(path)
}
