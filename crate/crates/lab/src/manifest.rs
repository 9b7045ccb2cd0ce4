//! CSV manifests coupling the pipeline stages.

use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{LabError, LabResult};

pub const GEN_MANIFEST: &str = "manifest.csv";
pub const PAIRS_MANIFEST: &str = "pairs.csv";
pub const TIMINGS_FILE: &str = "timings.csv";

/// One generated phantom.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GenRecord {
    pub id: String,
    pub file: PathBuf,
    pub preview: PathBuf,
    pub size: usize,
    pub seed: u64,
}

/// A clean image and a degraded version of it. `algorithm` names the
/// denoiser that produced `noisy`, if any.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PairRecord {
    pub id: String,
    pub clean: PathBuf,
    pub noisy: PathBuf,
    pub noise: String,
    pub params: String,
    pub seed: u64,
    pub algorithm: Option<String>,
}

fn path_str(p: &Path) -> String {
    p.to_string_lossy().into_owned()
}

/// Absolute form of `p` without touching the filesystem.
pub fn absolute(p: &Path) -> LabResult<PathBuf> {
    std::path::absolute(p).map_err(|e| LabError::io(p, e))
}

fn resolve(base: &Path, field: &str) -> PathBuf {
    let p = PathBuf::from(field);
    if p.is_absolute() {
        p
    } else {
        base.join(p)
    }
}

fn write_csv(path: &Path, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> LabResult<()> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    let fail = |e: csv::Error| LabError::format(path, e.to_string());
    w.write_record(header).map_err(fail)?;
    for r in rows {
        w.write_record(&r).map_err(fail)?;
    }
    let bytes = w.into_inner().map_err(|e| LabError::format(path, e.to_string()))?;
    fs::write(path, bytes).map_err(|e| LabError::io(path, e))
}

fn read_csv(path: &Path, required: &[&str]) -> LabResult<(Vec<String>, Vec<csv::StringRecord>)> {
    let bytes = fs::read(path).map_err(|e| LabError::io(path, e))?;
    let mut r = csv::ReaderBuilder::new().from_reader(bytes.as_slice());
    let header: Vec<String> = r
        .headers()
        .map_err(|e| LabError::format(path, e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    for col in required {
        if !header.iter().any(|h| h == col) {
            return Err(LabError::format(path, format!("missing column {col}")));
        }
    }
    let rows = r
        .records()
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| LabError::format(path, e.to_string()))?;
    Ok((header, rows))
}

fn column<'r>(header: &[String], row: &'r csv::StringRecord, name: &str) -> Option<&'r str> {
    header.iter().position(|h| h == name).and_then(|i| row.get(i))
}

fn parse_field<T: std::str::FromStr>(path: &Path, value: Option<&str>, what: &str) -> LabResult<T> {
    value
        .and_then(|v| v.trim().parse().ok())
        .ok_or_else(|| LabError::format(path, format!("bad {what} field")))
}

const GEN_HEADER: [&str; 5] = ["id", "file", "preview", "size", "seed"];
const PAIRS_HEADER: [&str; 7] = ["id", "clean", "noisy", "noise", "params", "seed", "algorithm"];

pub fn write_gen_manifest(path: &Path, records: &[GenRecord]) -> LabResult<()> {
    write_csv(
        path,
        &GEN_HEADER,
        records.iter().map(|r| {
            vec![
                r.id.clone(),
                path_str(&r.file),
                path_str(&r.preview),
                r.size.to_string(),
                r.seed.to_string(),
            ]
        }),
    )
}

pub fn read_gen_manifest(path: &Path) -> LabResult<Vec<GenRecord>> {
    let base = path.parent().unwrap_or(Path::new("."));
    let (header, rows) = read_csv(path, &["id", "file"])?;
    rows.iter()
        .map(|row| {
            let get = |name| column(&header, row, name);
            Ok(GenRecord {
                id: get("id").unwrap_or_default().to_string(),
                file: resolve(base, get("file").unwrap_or_default()),
                preview: resolve(base, get("preview").unwrap_or_default()),
                size: get("size").and_then(|v| v.parse().ok()).unwrap_or(0),
                seed: get("seed").and_then(|v| v.parse().ok()).unwrap_or(0),
            })
        })
        .collect()
}

pub fn write_pairs(path: &Path, records: &[PairRecord]) -> LabResult<()> {
    write_csv(
        path,
        &PAIRS_HEADER,
        records.iter().map(|r| {
            vec![
                r.id.clone(),
                path_str(&r.clean),
                path_str(&r.noisy),
                r.noise.clone(),
                r.params.clone(),
                r.seed.to_string(),
                r.algorithm.clone().unwrap_or_default(),
            ]
        }),
    )
}

pub fn read_pairs(path: &Path) -> LabResult<Vec<PairRecord>> {
    let base = path.parent().unwrap_or(Path::new("."));
    let (header, rows) = read_csv(path, &["clean", "noisy", "noise"])?;
    rows.iter()
        .enumerate()
        .map(|(i, row)| {
            let get = |name| column(&header, row, name);
            let clean = resolve(base, get("clean").unwrap_or_default());
            let id = match get("id") {
                Some(id) if !id.is_empty() => id.to_string(),
                _ => clean
                    .file_stem()
                    .map(|s| s.to_string_lossy().into_owned())
                    .unwrap_or_else(|| i.to_string()),
            };
            Ok(PairRecord {
                id,
                clean,
                noisy: resolve(base, get("noisy").unwrap_or_default()),
                noise: get("noise").unwrap_or_default().to_string(),
                params: get("params").unwrap_or_default().to_string(),
                seed: match get("seed") {
                    Some(s) if !s.is_empty() => parse_field(path, Some(s), "seed")?,
                    _ => 0,
                },
                algorithm: get("algorithm").filter(|a| !a.is_empty()).map(str::to_string),
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimingRecord {
    pub file: PathBuf,
    pub algorithm: String,
    pub seconds: f64,
}

pub fn write_timings(path: &Path, rows: &[TimingRecord]) -> LabResult<()> {
    write_csv(
        path,
        &["file", "algorithm", "seconds"],
        rows.iter().map(|r| vec![path_str(&r.file), r.algorithm.clone(), format!("{:.6}", r.seconds)]),
    )
}

/// Writes arbitrary CSV text, mapping IO failures.
pub fn write_text(path: &Path, text: &str) -> LabResult<()> {
    fs::write(path, text).map_err(|e| LabError::io(path, e))
}

pub fn create_dir(path: &Path) -> LabResult<()> {
    fs::create_dir_all(path).map_err(|e| LabError::io(path, e))
}
