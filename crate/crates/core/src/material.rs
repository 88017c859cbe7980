//! Material configuration file.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ion_ensemble::{validate_structure, GridSpec, HyperfineStructure, IonEnsemble, Table, ValidationReport};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaterialConfig {
    pub ground_offsets_mhz: [f64; 3],
    pub excited_offsets_mhz: [f64; 3],
    #[serde(default)]
    pub excited_inverted: bool,
    pub branching: Table,
    pub rel_strength_h: Table,
    pub rel_strength_v: Table,
    pub natural_depth_h: f64,
    pub natural_depth_v: f64,
    #[serde(default)]
    pub grid: GridSpec,
}

impl Default for MaterialConfig {
    fn default() -> Self {
        Self::from_structure(&HyperfineStructure::eu151_site2(), 1.46, 1.64, GridSpec::default())
    }
}

impl MaterialConfig {
    pub fn from_structure(s: &HyperfineStructure, natural_depth_h: f64, natural_depth_v: f64, grid: GridSpec) -> Self {
        MaterialConfig {
            ground_offsets_mhz: s.ground_offsets,
            excited_offsets_mhz: s.excited_offsets,
            excited_inverted: s.excited_inverted,
            branching: s.branching,
            rel_strength_h: s.rel_strength_h,
            rel_strength_v: s.rel_strength_v,
            natural_depth_h,
            natural_depth_v,
            grid,
        }
    }

    pub fn structure(&self) -> HyperfineStructure {
        HyperfineStructure {
            ground_offsets: self.ground_offsets_mhz,
            excited_offsets: self.excited_offsets_mhz,
            excited_inverted: self.excited_inverted,
            branching: self.branching,
            rel_strength_h: self.rel_strength_h,
            rel_strength_v: self.rel_strength_v,
        }
    }

    pub fn validate(&self) -> ValidationReport {
        validate_structure(&self.structure())
    }

    /// Unpumped ensemble; refuses structures that fail validation.
    pub fn ensemble(&self) -> Result<IonEnsemble> {
        let report = self.validate();
        if !report.passed() {
            return Err(Error::InvalidStructure(Box::new(report)));
        }
        IonEnsemble::new(self.structure(), self.grid, self.natural_depth_h, self.natural_depth_v)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("material config serializes")
    }
}
