//! Dataset manifests: CSV rows of `path,r,g,b[,camera]`.

use std::path::{Path, PathBuf};

use super::{IlluminantRgb, ImageIoError};

/// One dataset image with its measured illuminant.
#[derive(Debug, Clone, PartialEq)]
pub struct ManifestEntry {
    /// Image location. Relative paths in the file are resolved against the
    /// manifest's directory on load.
    pub path: PathBuf,
    pub illuminant: IlluminantRgb,
    /// Optional camera/sensor tag (fifth CSV column).
    pub camera: Option<String>,
}

/// An ordered list of [`ManifestEntry`] rows.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DatasetManifest {
    entries: Vec<ManifestEntry>,
}

impl DatasetManifest {
    pub fn new(entries: Vec<ManifestEntry>) -> Self {
        Self { entries }
    }

    /// Parses a manifest CSV. Rows are `path,r,g,b` with an optional fifth
    /// `camera` column; a leading `path,r,g,b` header line is tolerated.
    /// Malformed rows are errors, not skipped.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, ImageIoError> {
        let path = path.as_ref();
        let err = |row: usize, message: String| ImageIoError::Manifest {
            path: path.to_path_buf(),
            row,
            message,
        };
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(false)
            .flexible(true)
            .from_path(path)
            .map_err(|e| err(0, e.to_string()))?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        let mut entries = Vec::new();
        for (i, record) in reader.records().enumerate() {
            let row = i + 1;
            let record = record.map_err(|e| err(row, e.to_string()))?;
            if row == 1 && record.get(0) == Some("path") {
                continue;
            }
            if record.len() != 4 && record.len() != 5 {
                return Err(err(
                    row,
                    format!("expected 4 or 5 fields, found {}", record.len()),
                ));
            }
            let rel = record.get(0).unwrap_or_default();
            if rel.is_empty() {
                return Err(err(row, "empty image path".to_string()));
            }
            let mut rgb = [0.0; 3];
            for (slot, v) in rgb.iter_mut().enumerate() {
                let field = record.get(slot + 1).unwrap_or_default();
                *v = field
                    .trim()
                    .parse()
                    .map_err(|_| err(row, format!("cannot parse {:?} as a number", field)))?;
            }
            let illuminant = IlluminantRgb::from_array(rgb)
                .map_err(|e| err(row, e.to_string()))?;
            let rel_path = Path::new(rel);
            let path = if rel_path.is_absolute() {
                rel_path.to_path_buf()
            } else {
                base.join(rel_path)
            };
            let camera = record
                .get(4)
                .map(str::trim)
                .filter(|c| !c.is_empty())
                .map(str::to_string);
            entries.push(ManifestEntry {
                path,
                illuminant,
                camera,
            });
        }
        Ok(Self { entries })
    }

    pub fn entries(&self) -> &[ManifestEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// A new manifest holding the selected rows, in the given order.
    pub fn subset(&self, indices: &[usize]) -> Self {
        Self {
            entries: indices.iter().map(|&i| self.entries[i].clone()).collect(),
        }
    }
}

/// Writes a `path,r,g,b[,camera]` header plus one row per entry; the camera
/// column appears when any entry carries one. Paths are written exactly as
/// stored, so callers that want a relocatable manifest pass entries with
/// relative paths. Illuminants use the shortest round-trip float form, so a
/// write/load cycle is value-exact.
pub fn write_manifest(path: impl AsRef<Path>, entries: &[ManifestEntry]) -> Result<(), ImageIoError> {
    let path = path.as_ref();
    let mut writer = csv::WriterBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_path(path)
        .map_err(|e| ImageIoError::Manifest {
            path: path.to_path_buf(),
            row: 0,
            message: e.to_string(),
        })?;
    let with_camera = entries.iter().any(|e| e.camera.is_some());
    let mut header = vec!["path", "r", "g", "b"];
    if with_camera {
        header.push("camera");
    }
    writer
        .write_record(&header)
        .map_err(|e| ImageIoError::Manifest {
            path: path.to_path_buf(),
            row: 0,
            message: e.to_string(),
        })?;
    for (i, e) in entries.iter().enumerate() {
        let light = e.illuminant.as_array();
        let mut row = vec![
            e.path.to_string_lossy().into_owned(),
            light[0].to_string(),
            light[1].to_string(),
            light[2].to_string(),
        ];
        if with_camera {
            row.push(e.camera.clone().unwrap_or_default());
        }
        writer.write_record(&row).map_err(|e| ImageIoError::Manifest {
            path: path.to_path_buf(),
            row: i + 1,
            message: e.to_string(),
        })?;
    }
    writer.flush().map_err(|e| ImageIoError::Manifest {
        path: path.to_path_buf(),
        row: entries.len(),
        message: e.to_string(),
    })?;
    Ok(())
}
