//! Run configuration: a directory holding `material.json` and `pipeline.json`,
//! or a single JSON file with every section.

use std::path::{Path, PathBuf};

use remsim_core::afc::{CombSpec, ToothShape};
use remsim_core::echo::TimeGrid;
use remsim_core::material::MaterialConfig;
use remsim_core::stark::StarkConfig;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, Result};

pub const MATERIAL_FILE: &str = "material.json";
pub const PIPELINE_FILE: &str = "pipeline.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CombConfig {
    pub tooth_shape: ToothShape,
    pub spacing_mhz: f64,
    pub finesse: f64,
    pub bandwidth_mhz: f64,
    pub background: f64,
    /// Peak depth for H and V; `null` takes the mean depth of the prepared band.
    pub peak_depth: Option<[f64; 2]>,
}

impl Default for CombConfig {
    fn default() -> Self {
        CombConfig {
            tooth_shape: ToothShape::Gaussian,
            spacing_mhz: 2.0,
            finesse: 6.0,
            bandwidth_mhz: 10.0,
            background: 0.0,
            peak_depth: None,
        }
    }
}

impl CombConfig {
    pub fn spec(&self, peak_depth: f64) -> CombSpec {
        CombSpec {
            spacing_mhz: self.spacing_mhz,
            finesse: self.finesse,
            peak_depth,
            background: self.background,
            bandwidth_mhz: self.bandwidth_mhz,
            center_mhz: 0.0,
            tooth_shape: self.tooth_shape,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PulseConfig {
    pub grid: TimeGrid,
    pub center_ns: f64,
    pub fwhm_ns: f64,
    pub carrier_mhz: f64,
}

impl Default for PulseConfig {
    fn default() -> Self {
        PulseConfig {
            grid: TimeGrid::default(),
            center_ns: 500.0,
            fwhm_ns: 100.0,
            carrier_mhz: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GateConfig {
    pub voltage: f64,
    pub duration_ns: f64,
    /// Echo order recalled by the gate pair.
    pub order: u32,
}

impl Default for GateConfig {
    fn default() -> Self {
        GateConfig {
            voltage: 5.0,
            duration_ns: 85.0,
            order: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CountingSection {
    pub mu: f64,
    pub trials: u64,
    pub collection_efficiency: f64,
    pub bin_ns: f64,
    /// Target SNR of the recalled echo; sets the noise rate.
    pub snr: f64,
}

impl Default for CountingSection {
    fn default() -> Self {
        CountingSection {
            mu: 0.32,
            trials: 1_000_000,
            collection_efficiency: 1.0,
            bin_ns: 10.0,
            snr: 1000.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct QptSection {
    pub mu: f64,
    pub trials: u64,
    pub snr: f64,
    pub resamples: usize,
    /// Relative phase of V picked up in storage.
    pub phase_rad: f64,
}

impl Default for QptSection {
    fn default() -> Self {
        QptSection {
            mu: 0.32,
            trials: 100_000,
            snr: 1000.0,
            resamples: 200,
            phase_rad: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub material: MaterialConfig,
    pub comb: CombConfig,
    pub pulse: PulseConfig,
    pub gates: GateConfig,
    pub stark: StarkConfig,
    pub counting: CountingSection,
    pub qpt: QptSection,
}

/// A consumed input file and its SHA-256.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Digest256 {
    pub path: PathBuf,
    pub sha256: String,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn read_input(path: &Path, digests: &mut Vec<Digest256>) -> Result<Vec<u8>> {
    let bytes = std::fs::read(path).map_err(|e| CliError::config(path, e))?;
    digests.push(Digest256 {
        path: path.to_path_buf(),
        sha256: sha256_hex(&bytes),
    });
    Ok(bytes)
}

fn parse<T: for<'de> Deserialize<'de>>(path: &Path, bytes: &[u8]) -> Result<T> {
    serde_json::from_slice(bytes).map_err(|e| CliError::config(path, e))
}

/// Where a `--config` argument points: the path itself, or a directory of
/// that name under `config/`.
pub fn resolve(path: &Path) -> Result<PathBuf> {
    if path.exists() {
        return Ok(path.to_path_buf());
    }
    let under = Path::new("config").join(path);
    if under.exists() {
        return Ok(under);
    }
    Err(CliError::config(path, "no such file or directory"))
}

pub fn load(path: Option<&Path>, digests: &mut Vec<Digest256>) -> Result<RunConfig> {
    let Some(path) = path else {
        return Ok(RunConfig::default());
    };
    let path = resolve(path)?;
    let cfg = if path.is_dir() {
        let p = path.join(PIPELINE_FILE);
        let mut cfg: RunConfig = if p.exists() {
            let bytes = read_input(&p, digests)?;
            parse(&p, &bytes)?
        } else {
            RunConfig::default()
        };
        let m = path.join(MATERIAL_FILE);
        if m.exists() {
            let bytes = read_input(&m, digests)?;
            cfg.material = parse(&m, &bytes)?;
        }
        cfg
    } else {
        let bytes = read_input(&path, digests)?;
        parse(&path, &bytes)?
    };
    cfg.stark.validate().map_err(CliError::from)?;
    cfg.material.grid.check().map_err(CliError::from)?;
    cfg.pulse.grid.validate().map_err(CliError::from)?;
    Ok(cfg)
}
