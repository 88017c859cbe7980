//! Artifacts, tabular formats and run directories.

use std::collections::BTreeMap;
use std::fs;
use std::io::ErrorKind;
use std::path::{Path, PathBuf};

use clap::ValueEnum;
use serde::{Deserialize, Serialize};

use crate::config::{sha256_hex, Digest256};
use crate::error::{CliError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum, Default)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

impl Format {
    pub fn extension(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Json => "json",
        }
    }
}

/// A named output file held in memory until the run completes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Artifact {
    pub name: String,
    pub bytes: Vec<u8>,
}

impl Artifact {
    pub fn new(name: impl Into<String>, bytes: impl Into<Vec<u8>>) -> Self {
        Artifact {
            name: name.into(),
            bytes: bytes.into(),
        }
    }

    pub fn json<T: Serialize>(name: impl Into<String>, value: &T) -> Self {
        let mut s = serde_json::to_string_pretty(value).expect("artifact serializes");
        s.push('\n');
        Artifact::new(name, s)
    }
}

/// Column-oriented numeric table.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub columns: Vec<String>,
    pub data: Vec<Vec<f64>>,
}

impl Table {
    pub fn new(columns: &[&str], data: Vec<Vec<f64>>) -> Self {
        debug_assert_eq!(columns.len(), data.len());
        Table {
            columns: columns.iter().map(|c| c.to_string()).collect(),
            data,
        }
    }

    pub fn rows(&self) -> usize {
        self.data.first().map_or(0, Vec::len)
    }

    pub fn column(&self, name: &str) -> Option<&[f64]> {
        self.columns
            .iter()
            .position(|c| c == name)
            .map(|i| self.data[i].as_slice())
    }

    /// Writes `<stem>.csv` or `<stem>.json` (an object of column arrays).
    pub fn artifact(&self, stem: &str, format: Format) -> Artifact {
        let name = format!("{stem}.{}", format.extension());
        match format {
            Format::Csv => {
                let mut w = csv::Writer::from_writer(Vec::new());
                w.write_record(&self.columns).expect("in-memory csv");
                for i in 0..self.rows() {
                    w.write_record(self.data.iter().map(|c| c[i].to_string()))
                        .expect("in-memory csv");
                }
                Artifact::new(name, w.into_inner().expect("in-memory csv"))
            }
            Format::Json => {
                let map: BTreeMap<&str, &Vec<f64>> = self.columns.iter().map(String::as_str).zip(&self.data).collect();
                Artifact::json(name, &map)
            }
        }
    }

    pub fn from_csv(bytes: &[u8]) -> std::result::Result<Self, String> {
        let mut rd = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(bytes);
        let columns: Vec<String> = rd
            .headers()
            .map_err(|e| e.to_string())?
            .iter()
            .map(String::from)
            .collect();
        let mut data = vec![Vec::new(); columns.len()];
        for rec in rd.records() {
            let rec = rec.map_err(|e| e.to_string())?;
            for (i, f) in rec.iter().enumerate() {
                data[i].push(f.parse::<f64>().map_err(|e| format!("{f:?}: {e}"))?);
            }
        }
        Ok(Table { columns, data })
    }

    pub fn from_json_value(v: &serde_json::Value) -> Option<Self> {
        let obj = v.as_object()?;
        let mut columns = Vec::new();
        let mut data = Vec::new();
        for (k, col) in obj {
            let col: Vec<f64> = col.as_array()?.iter().map(|x| x.as_f64()).collect::<Option<_>>()?;
            columns.push(k.clone());
            data.push(col);
        }
        let n = data.first().map_or(0, Vec::len);
        data.iter().all(|c| c.len() == n).then_some(Table { columns, data })
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct OutputRecord {
    pub file: String,
    pub sha256: String,
    pub bytes: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command_line: Vec<String>,
    pub command: String,
    pub seed: u64,
    pub inputs: Vec<Digest256>,
    /// Every effective parameter, defaults included.
    pub parameters: serde_json::Value,
    pub outputs: Vec<OutputRecord>,
    pub started: String,
    pub finished: String,
}

pub const MANIFEST_FILE: &str = "manifest.json";

/// Creates `<out>/<command>-NNN` with the first free number.
pub fn create_run_dir(out: &Path, command: &str) -> Result<PathBuf> {
    fs::create_dir_all(out)?;
    let prefix = format!("{command}-");
    let mut next = 1 + fs::read_dir(out)?
        .filter_map(|e| e.ok())
        .filter_map(|e| e.file_name().to_str()?.strip_prefix(&prefix)?.parse::<u32>().ok())
        .max()
        .unwrap_or(0);
    loop {
        let dir = out.join(format!("{prefix}{next:03}"));
        match fs::create_dir(&dir) {
            Ok(()) => return Ok(dir),
            Err(e) if e.kind() == ErrorKind::AlreadyExists => next += 1,
            Err(e) => return Err(e.into()),
        }
    }
}

/// Writes the artifacts and the manifest into a fresh run directory.
pub fn persist(out: &Path, artifacts: &[Artifact], mut manifest: RunManifest) -> Result<PathBuf> {
    let mut seen = std::collections::HashSet::new();
    for a in artifacts {
        if a.name == MANIFEST_FILE || !seen.insert(&a.name) {
            return Err(CliError::Usage(format!("duplicate output name {}", a.name)));
        }
    }
    let dir = create_run_dir(out, &manifest.command)?;
    manifest.outputs = artifacts
        .iter()
        .map(|a| {
            fs::write(dir.join(&a.name), &a.bytes)?;
            Ok(OutputRecord {
                file: a.name.clone(),
                sha256: sha256_hex(&a.bytes),
                bytes: a.bytes.len(),
            })
        })
        .collect::<Result<_>>()?;
    manifest.finished = now();
    fs::write(
        dir.join(MANIFEST_FILE),
        serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n",
    )?;
    Ok(dir)
}

pub fn now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}
