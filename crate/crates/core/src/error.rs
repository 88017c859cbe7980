use thiserror::Error;

use crate::ion_ensemble::ValidationReport;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("frequency {value_mhz} MHz outside window [{min_mhz}, {max_mhz}] MHz")]
    OutOfRange { value_mhz: f64, min_mhz: f64, max_mhz: f64 },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("hyperfine structure failed validation:\n{0}")]
    InvalidStructure(Box<ValidationReport>),

    #[error("time window of {window_ns} ns cannot hold echo order {order} (needs {needed_ns} ns)")]
    Aliasing { window_ns: f64, order: u32, needed_ns: f64 },

    #[error("gate [{start_ns}, {end_ns}] ns overlaps echo window of order {order}")]
    GateOverlap { start_ns: f64, end_ns: f64, order: u32 },

    #[error("fit failed: {0}")]
    Fit(String),

    #[error("optimizer did not converge after {iterations} iterations (gradient norm {gradient_norm:.3e})")]
    NonConvergence { iterations: usize, gradient_norm: f64 },

    #[error("unphysical input: {0}")]
    Unphysical(String),

    #[error("malformed input: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}
