//! CSV streams with a `# key=value` header block, snapshot round trips, and
//! the run manifest.

use std::fmt::Write as _;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::diagnostics::MomentRecord;
use crate::error::{Error, Result};
use crate::grid::{RadialGrid, Spectrum};

/// Shortest format that reads back to the same `f64`: 17 significant digits.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    let mut s = String::with_capacity(64);
    for b in digest {
        let _ = write!(s, "{b:02x}");
    }
    s
}

/// One CSV output stream.
pub struct CsvWriter {
    out: BufWriter<fs::File>,
    path: PathBuf,
}

impl CsvWriter {
    pub fn create(path: &Path, header: &[(&str, String)], columns: &[&str]) -> Result<Self> {
        let mut out = BufWriter::new(fs::File::create(path)?);
        for (k, v) in header {
            writeln!(out, "# {k}={v}")?;
        }
        writeln!(out, "{}", columns.join(","))?;
        Ok(Self {
            out,
            path: path.to_path_buf(),
        })
    }

    pub fn row(&mut self, values: &[f64]) -> Result<()> {
        let line: Vec<String> = values.iter().map(|&v| fmt_f64(v)).collect();
        writeln!(self.out, "{}", line.join(","))?;
        Ok(())
    }

    /// Row with trailing non-numeric cells.
    pub fn row_mixed(&mut self, values: &[f64], tail: &[&str]) -> Result<()> {
        let mut line: Vec<String> = values.iter().map(|&v| fmt_f64(v)).collect();
        line.extend(tail.iter().map(|s| s.to_string()));
        writeln!(self.out, "{}", line.join(","))?;
        Ok(())
    }

    pub fn finish(mut self) -> Result<PathBuf> {
        self.out.flush()?;
        Ok(self.path)
    }
}

fn grid_header(grid: &RadialGrid) -> Vec<(&'static str, String)> {
    let law = grid.law();
    vec![
        ("k_min", fmt_f64(grid.k_min())),
        ("k_max", fmt_f64(grid.k_max())),
        ("n", grid.len().to_string()),
        ("spacing", grid.spacing().name().to_string()),
        ("gamma", fmt_f64(law.gamma())),
        ("sigma", fmt_f64(law.sigma())),
        ("dim", law.dim().as_u8().to_string()),
    ]
}

pub fn write_snapshot(path: &Path, spectrum: &Spectrum, config_hash: &str) -> Result<PathBuf> {
    let mut header = vec![
        ("kind", "snapshot".to_string()),
        ("config_hash", config_hash.to_string()),
        ("time", fmt_f64(spectrum.time)),
    ];
    header.extend(grid_header(&spectrum.grid));
    let mut w = CsvWriter::create(path, &header, &["k", "f"])?;
    for (k, f) in spectrum.grid.nodes().iter().zip(&spectrum.values) {
        w.row(&[*k, *f])?;
    }
    w.finish()
}

/// Parsed snapshot file.
#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotFile {
    pub header: Vec<(String, String)>,
    pub time: f64,
    pub k: Vec<f64>,
    pub f: Vec<f64>,
}

impl SnapshotFile {
    pub fn get(&self, key: &str) -> Option<&str> {
        self.header.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    /// Values on `grid`, whose nodes must match the file's to 1e-12 relative.
    pub fn into_spectrum(self, grid: Arc<RadialGrid>, path: &Path) -> Result<Spectrum> {
        let fail = |reason: String| Error::Snapshot {
            path: path.to_path_buf(),
            reason,
        };
        if self.k.len() != grid.len() {
            return Err(fail(format!(
                "{} rows for a grid of {} nodes",
                self.k.len(),
                grid.len()
            )));
        }
        for (i, (a, b)) in self.k.iter().zip(grid.nodes()).enumerate() {
            if (a - b).abs() > 1e-12 * b {
                return Err(fail(format!("row {i}: k = {a} does not match grid node {b}")));
            }
        }
        Spectrum::new(grid, self.f, self.time).map_err(|e| fail(e.to_string()))
    }
}

pub fn read_snapshot(path: &Path) -> Result<SnapshotFile> {
    let fail = |reason: String| Error::Snapshot {
        path: path.to_path_buf(),
        reason,
    };
    let reader = BufReader::new(fs::File::open(path)?);
    let mut header = Vec::new();
    let mut k = Vec::new();
    let mut f = Vec::new();
    let mut seen_columns = false;
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('#') {
            let (key, value) = rest
                .trim()
                .split_once('=')
                .ok_or_else(|| fail(format!("line {}: header without '='", lineno + 1)))?;
            header.push((key.trim().to_string(), value.trim().to_string()));
            continue;
        }
        if !seen_columns {
            if line != "k,f" {
                return Err(fail(format!("line {}: expected column line 'k,f'", lineno + 1)));
            }
            seen_columns = true;
            continue;
        }
        let (a, b) = line
            .split_once(',')
            .ok_or_else(|| fail(format!("line {}: expected two columns", lineno + 1)))?;
        let parse = |s: &str| {
            s.trim()
                .parse::<f64>()
                .map_err(|e| fail(format!("line {}: {e}", lineno + 1)))
        };
        k.push(parse(a)?);
        f.push(parse(b)?);
    }
    if !seen_columns {
        return Err(fail("no data section".into()));
    }
    let time = header
        .iter()
        .find(|(key, _)| key == "time")
        .map(|(_, v)| v.parse::<f64>())
        .transpose()
        .map_err(|e| fail(format!("bad time: {e}")))?
        .unwrap_or(0.0);
    Ok(SnapshotFile { header, time, k, f })
}

pub fn write_moments(path: &Path, records: &[MomentRecord], config_hash: &str) -> Result<PathBuf> {
    let exponents: Vec<f64> = records
        .first()
        .map(|r| r.moments.iter().map(|m| m.0).collect())
        .unwrap_or_default();
    let mut cols = vec!["time".to_string()];
    cols.extend(exponents.iter().map(|e| format!("M_{e}")));
    cols.extend(["s2", "s4", "l2", "min_f"].map(String::from));
    let col_refs: Vec<&str> = cols.iter().map(String::as_str).collect();
    let header = [
        ("kind", "moments".to_string()),
        ("config_hash", config_hash.to_string()),
        (
            "exponents",
            exponents.iter().map(|e| fmt_f64(*e)).collect::<Vec<_>>().join(";"),
        ),
    ];
    let mut w = CsvWriter::create(path, &header, &col_refs)?;
    for r in records {
        let mut row = vec![r.time];
        row.extend(r.moments.iter().map(|m| m.1));
        row.extend([r.s2, r.s4, r.l2, r.min_f]);
        w.row(&row)?;
    }
    w.finish()
}

/// Record of what a run produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub config_hash: String,
    pub version: String,
    pub seed: u64,
    pub files: Vec<String>,
    pub complete: bool,
    pub error: Option<String>,
}

impl Manifest {
    pub fn new(command: &str, config_hash: &str, seed: u64) -> Self {
        Self {
            command: command.to_string(),
            config_hash: config_hash.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            seed,
            files: Vec::new(),
            complete: false,
            error: None,
        }
    }

    pub fn add(&mut self, path: &Path) {
        let name = path
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| path.display().to_string());
        self.files.push(name);
    }

    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        let path = dir.join("MANIFEST.json");
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        fs::write(&path, text)?;
        Ok(path)
    }
}
