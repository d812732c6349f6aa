//! Labelled dataset directories: cube files plus a `labels.csv` manifest
//! with `filename,label` rows.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cube::{Label, LabeledSample};
use crate::hsio::{parse_any, write_hsc, HsioError};

pub const LABELS_FILE: &str = "labels.csv";

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Csv { path: PathBuf, source: csv::Error },
    #[error("{path}: line {line}: unknown label {value:?}")]
    BadLabel { path: PathBuf, line: usize, value: String },
    #[error("{path}: {source}")]
    Format { path: PathBuf, source: HsioError },
    #[error("{0}: no samples listed")]
    Empty(PathBuf),
    #[error("{path}: cube dims {got:?} differ from the first cube {expected:?}")]
    MixedDims { path: PathBuf, expected: (usize, usize, usize), got: (usize, usize, usize) },
}

#[derive(Debug, Serialize, Deserialize)]
struct Row {
    filename: String,
    label: String,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DatasetError + '_ {
    move |source| DatasetError::Io { path: path.to_path_buf(), source }
}

/// Writes every sample as `leaf_NNNN.hsc` and the label manifest. Returns
/// the cube paths in sample order.
pub fn write_dataset(dir: &Path, samples: &[LabeledSample<f32>]) -> Result<Vec<PathBuf>, DatasetError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let manifest = dir.join(LABELS_FILE);
    let csv_err = |source| DatasetError::Csv { path: manifest.clone(), source };
    let mut w = csv::Writer::from_path(&manifest).map_err(csv_err)?;
    let mut paths = Vec::with_capacity(samples.len());
    for (i, s) in samples.iter().enumerate() {
        let name = format!("leaf_{i:04}.hsc");
        let path = dir.join(&name);
        fs::write(&path, write_hsc(&s.cube)).map_err(io_err(&path))?;
        w.serialize(Row { filename: name, label: s.label.short().to_string() }).map_err(csv_err)?;
        paths.push(path);
    }
    w.flush().map_err(io_err(&manifest))?;
    Ok(paths)
}

/// Reads `labels.csv` and every cube it lists (HSC or MAT v5), in manifest
/// order. All cubes must share one shape.
pub fn read_dataset(dir: &Path) -> Result<Vec<LabeledSample<f32>>, DatasetError> {
    let manifest = dir.join(LABELS_FILE);
    let csv_err = |source| DatasetError::Csv { path: manifest.clone(), source };
    let mut r = csv::Reader::from_path(&manifest).map_err(csv_err)?;
    let mut out: Vec<LabeledSample<f32>> = Vec::new();
    for (i, row) in r.deserialize::<Row>().enumerate() {
        let row = row.map_err(csv_err)?;
        let label = Label::parse(&row.label).ok_or_else(|| DatasetError::BadLabel {
            path: manifest.clone(),
            line: i + 2,
            value: row.label.clone(),
        })?;
        let path = dir.join(row.filename.trim());
        let bytes = fs::read(&path).map_err(io_err(&path))?;
        let (_, cube) = parse_any(&bytes).map_err(|source| DatasetError::Format { path: path.clone(), source })?;
        if let Some(first) = out.first() {
            if first.cube.dims() != cube.dims() {
                return Err(DatasetError::MixedDims { path, expected: first.cube.dims(), got: cube.dims() });
            }
        }
        out.push(LabeledSample::new(cube, label));
    }
    if out.is_empty() {
        return Err(DatasetError::Empty(manifest));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{generate, SynthSpec};

    #[test]
    fn round_trip_through_directory() {
        let dir = tempfile::tempdir().unwrap();
        let samples = generate(&SynthSpec { n_per_class: 3, dims: (8, 8), ..SynthSpec::default() }).unwrap();
        let paths = write_dataset(dir.path(), &samples).unwrap();
        assert_eq!(paths.len(), 6);
        let text = fs::read_to_string(dir.path().join(LABELS_FILE)).unwrap();
        assert!(text.starts_with("filename,label\nleaf_0000.hsc,H\nleaf_0001.hsc,I\n"));
        assert_eq!(read_dataset(dir.path()).unwrap(), samples);
    }

    #[test]
    fn reports_bad_label_and_missing_file() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join(LABELS_FILE), "filename,label\nx.hsc,Q\n").unwrap();
        assert!(matches!(read_dataset(dir.path()), Err(DatasetError::BadLabel { line: 2, .. })));
        fs::write(dir.path().join(LABELS_FILE), "filename,label\nx.hsc,H\n").unwrap();
        assert!(matches!(read_dataset(dir.path()), Err(DatasetError::Io { .. })));
        fs::write(dir.path().join(LABELS_FILE), "filename,label\n").unwrap();
        assert!(matches!(read_dataset(dir.path()), Err(DatasetError::Empty(_))));
    }
}
