//! Dataset files.
//!
//! Per-client CSV: header `f0,...,f{d-1},label`, one sample per row, rows ordered
//! train, validation, test. Manifest: header `client_id,path,K`, one line per
//! client, paths relative to the manifest's directory.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::{ClientPartition, FederatedDataset};
use crate::error::{Error, Result};
use crate::numerics::Tensor2;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CsvSchema {
    pub features: usize,
    pub classes: usize,
}

pub fn write_csv(path: &Path, features: &Tensor2, labels: &[usize]) -> Result<()> {
    let mut out = String::new();
    let header: Vec<String> = (0..features.cols()).map(|i| format!("f{i}")).collect();
    writeln!(out, "{},label", header.join(",")).expect("String write");
    for (row, y) in features.iter_rows().zip(labels) {
        for v in row {
            write!(out, "{v},").expect("String write");
        }
        writeln!(out, "{y}").expect("String write");
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line() as usize);
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        kind => Error::Parse {
            line,
            message: format!("{}: {kind:?}", path.display()),
        },
    }
}

/// Reads one client's samples. Line numbers in errors count the header as line 1.
pub fn load_csv(path: &Path, schema: CsvSchema) -> Result<(Tensor2, Vec<usize>)> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;
    let headers = reader.headers().map_err(|e| csv_error(path, e))?.clone();
    let expected: Vec<String> = (0..schema.features)
        .map(|i| format!("f{i}"))
        .chain(std::iter::once("label".to_string()))
        .collect();
    if headers.iter().ne(expected.iter().map(String::as_str)) {
        return Err(Error::Parse {
            line: 1,
            message: format!(
                "{}: header must be `{}`",
                path.display(),
                expected.join(",")
            ),
        });
    }

    let mut data = Vec::new();
    let mut labels = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        let parse_err = |col: &str, cell: &str| Error::Parse {
            line,
            message: format!(
                "{}: column `{col}` has non-numeric value `{cell}`",
                path.display()
            ),
        };
        for (i, cell) in record.iter().take(schema.features).enumerate() {
            let v: f64 = cell
                .trim()
                .parse()
                .map_err(|_| parse_err(&format!("f{i}"), cell))?;
            if !v.is_finite() {
                return Err(parse_err(&format!("f{i}"), cell));
            }
            data.push(v);
        }
        let cell = &record[schema.features];
        let y: usize = cell.trim().parse().map_err(|_| parse_err("label", cell))?;
        if y >= schema.classes {
            return Err(Error::domain(format!(
                "{} line {line}: label {y} out of range for K = {}",
                path.display(),
                schema.classes
            )));
        }
        labels.push(y);
    }
    Ok((Tensor2::new(labels.len(), schema.features, data)?, labels))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ManifestEntry {
    pub client_id: String,
    pub path: PathBuf,
    pub classes: usize,
}

pub fn read_manifest(path: &Path) -> Result<Vec<ManifestEntry>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().unwrap_or(Path::new(""));
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, "client_id,path,K")) => {}
        _ => {
            return Err(Error::Parse {
                line: 1,
                message: format!(
                    "{}: manifest header must be `client_id,path,K`",
                    path.display()
                ),
            })
        }
    }
    lines
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            let bad = || Error::Parse {
                line: i + 1,
                message: format!("{}: expected `client_id,path,K`, got `{l}`", path.display()),
            };
            let fields: Vec<&str> = l.split(',').map(str::trim).collect();
            let [id, file, k] = fields[..] else {
                return Err(bad());
            };
            Ok(ManifestEntry {
                client_id: id.to_string(),
                path: base.join(file),
                classes: k.parse().map_err(|_| bad())?,
            })
        })
        .collect()
}

/// Loads every client listed in a manifest; the input dimension comes from the
/// first CSV header.
pub fn load_manifest(path: &Path) -> Result<FederatedDataset> {
    let entries = read_manifest(path)?;
    let mut partitions = Vec::with_capacity(entries.len());
    for entry in entries {
        let features = feature_count(&entry.path)?;
        let (x, y) = load_csv(
            &entry.path,
            CsvSchema {
                features,
                classes: entry.classes,
            },
        )?;
        partitions.push(ClientPartition::new(entry.client_id, entry.classes, x, y)?);
    }
    FederatedDataset::new(partitions)
}

fn feature_count(path: &Path) -> Result<usize> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    let headers = reader.headers().map_err(|e| csv_error(path, e))?;
    Ok(headers.len().saturating_sub(1))
}

/// Writes `<client_id>.csv` per client plus `manifest.csv` into `dir`.
pub fn write_dataset(dir: &Path, dataset: &FederatedDataset) -> Result<PathBuf> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut manifest = String::from("client_id,path,K\n");
    for p in &dataset.partitions {
        let file = format!("{}.csv", p.client_id);
        write_csv(&dir.join(&file), &p.features, &p.labels)?;
        writeln!(manifest, "{},{file},{}", p.client_id, p.classes).expect("String write");
    }
    let path = dir.join("manifest.csv");
    std::fs::write(&path, manifest).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}
