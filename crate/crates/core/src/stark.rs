//! Linear Stark effect along the b axis: electrode field, two-group shifts,
//! antihole splitting, coefficient fits and gate phases.

use std::f64::consts::PI;
use std::io::Read;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ion_ensemble::AbsorptionSpectrum;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StarkConfig {
    /// Shift per unit field for the two ion groups, kHz/(V/cm).
    pub coefficients_khz_per_v_cm: [f64; 2],
    pub electrode_gap_um: f64,
    pub electrode_width_um: f64,
    pub waveguide_depth_um: f64,
    /// Effective field relative to a parallel-plate gap.
    pub geometry_factor: f64,
}

impl Default for StarkConfig {
    fn default() -> Self {
        StarkConfig {
            coefficients_khz_per_v_cm: [5.69, -5.69],
            electrode_gap_um: 100.0,
            electrode_width_um: 200.0,
            waveguide_depth_um: 20.0,
            geometry_factor: 1.0,
        }
    }
}

impl StarkConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.electrode_gap_um > 0.0) {
            return Err(Error::param("electrode_gap_um", "must be positive"));
        }
        if !(self.geometry_factor > 0.0 && self.geometry_factor <= 1.5) {
            return Err(Error::param("geometry_factor", "must lie in (0, 1.5]"));
        }
        if self.coefficients_khz_per_v_cm.iter().any(|k| !k.is_finite()) {
            return Err(Error::param("coefficients_khz_per_v_cm", "must be finite"));
        }
        Ok(())
    }

    /// Field in V/cm produced by `voltage` across the electrodes.
    pub fn field_from_voltage(&self, voltage: f64) -> f64 {
        self.geometry_factor * voltage / (self.electrode_gap_um * 1e-4)
    }

    /// Frequency shift of each group in MHz at `field` V/cm.
    pub fn shifts_mhz(&self, field: f64) -> [f64; 2] {
        self.coefficients_khz_per_v_cm.map(|k| k * field * 1e-3)
    }

    /// Phase of each group accumulated over a gate pulse, rad.
    pub fn pulse_phase(&self, pulse: &ElectricPulse) -> [f64; 2] {
        let e = self.field_from_voltage(pulse.voltage);
        self.coefficients_khz_per_v_cm
            .map(|k| 2.0 * PI * k * 1e3 * e * pulse.duration_ns * 1e-9)
    }

    /// Voltage that gives the first group a phase `phase` in `duration_ns`.
    pub fn voltage_for_phase(&self, phase: f64, duration_ns: f64) -> f64 {
        let k = self.coefficients_khz_per_v_cm[0];
        let field = phase / (2.0 * PI * k * 1e3 * duration_ns * 1e-9);
        field * self.electrode_gap_um * 1e-4 / self.geometry_factor
    }

    /// Geometry factor needed for `voltage` over `duration_ns` to give `phase`.
    pub fn calibrate_geometry(&self, phase: f64, voltage: f64, duration_ns: f64) -> Result<f64> {
        let unit = StarkConfig {
            geometry_factor: 1.0,
            ..self.clone()
        };
        let p = unit.pulse_phase(&ElectricPulse::new(0.0, duration_ns, voltage)?)[0];
        if p == 0.0 {
            return Err(Error::param("voltage", "zero drive cannot be calibrated"));
        }
        let gf = phase / p;
        if !(gf > 0.0 && gf <= 1.5) {
            return Err(Error::param(
                "geometry_factor",
                format!("calibration gives {gf}, outside (0, 1.5]"),
            ));
        }
        Ok(gf)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ElectricPulse {
    pub start_ns: f64,
    pub duration_ns: f64,
    pub voltage: f64,
}

impl ElectricPulse {
    pub fn new(start_ns: f64, duration_ns: f64, voltage: f64) -> Result<Self> {
        let p = ElectricPulse {
            start_ns,
            duration_ns,
            voltage,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.duration_ns > 0.0 && self.duration_ns.is_finite()) {
            return Err(Error::param("duration_ns", "must be positive"));
        }
        if !self.start_ns.is_finite() || !self.voltage.is_finite() {
            return Err(Error::param("pulse", "start and voltage must be finite"));
        }
        Ok(())
    }

    pub fn end_ns(&self) -> f64 {
        self.start_ns + self.duration_ns
    }
}

/// Echo intensity factor for two equal groups carrying phases `phases`.
pub fn intensity_factor(phases: [f64; 2]) -> f64 {
    let a = (Complex64::from_polar(1.0, phases[0]) + Complex64::from_polar(1.0, phases[1])) * 0.5;
    a.norm_sqr()
}

/// Half the spectrum shifted by each group's Stark shift. Values beyond the
/// grid are continued with the edge depth; a warning is logged when a
/// structured region is pushed across the edge.
pub fn split_spectrum(spectrum: &AbsorptionSpectrum, config: &StarkConfig, field: f64) -> Result<AbsorptionSpectrum> {
    config.validate()?;
    let shifts = config.shifts_mhz(field);
    let x = spectrum.detunings();
    let d = spectrum.depth();
    let (lo, hi) = (spectrum.min_mhz(), spectrum.max_mhz());
    let max_shift = shifts.iter().fold(0.0f64, |m, s| m.max(s.abs()));
    if max_shift > 0.0 {
        let edge_lo = d[0];
        let edge_hi = d[d.len() - 1];
        let tol = 1e-9 * d.iter().fold(1.0f64, |m, v| m.max(*v));
        let clipped = x.iter().zip(d).any(|(&xi, &di)| {
            (xi - lo < max_shift && (di - edge_lo).abs() > tol) || (hi - xi < max_shift && (di - edge_hi).abs() > tol)
        });
        if clipped {
            log::warn!("Stark shift of {max_shift:.4} MHz moves spectral structure across the window edge");
        }
    }
    let sample = |nu: f64| {
        if nu <= lo {
            d[0]
        } else if nu >= hi {
            d[d.len() - 1]
        } else {
            spectrum.interp_or(nu, 0.0)
        }
    };
    let depth = x
        .iter()
        .map(|&nu| 0.5 * (sample(nu - shifts[0]) + sample(nu - shifts[1])))
        .collect();
    AbsorptionSpectrum::new(x.to_vec(), depth, spectrum.polarization())
}

/// One measured antihole position.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StarkPoint {
    pub field_v_per_cm: f64,
    pub detuning_khz: f64,
    /// Explicit group label (0 or 1); when absent the sign of the detuning decides.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub group: Option<u8>,
}

/// Ordinary least squares `y = a + b x`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LinearFit {
    pub slope: f64,
    pub slope_stderr: f64,
    pub intercept: f64,
    pub intercept_stderr: f64,
    pub points: usize,
    pub residual_rms: f64,
}

pub fn linear_fit(x: &[f64], y: &[f64]) -> Result<LinearFit> {
    let n = x.len();
    if n != y.len() {
        return Err(Error::Fit("x and y lengths differ".into()));
    }
    if n < 3 {
        return Err(Error::Fit(format!("need at least 3 points, got {n}")));
    }
    let nf = n as f64;
    let mx = x.iter().sum::<f64>() / nf;
    let my = y.iter().sum::<f64>() / nf;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let scale = x.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-300);
    if sxx <= 1e-24 * scale * scale * nf {
        return Err(Error::Fit("all abscissae are equal".into()));
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ssr: f64 = x.iter().zip(y).map(|(a, b)| (b - intercept - slope * a).powi(2)).sum();
    let s2 = ssr / (nf - 2.0);
    Ok(LinearFit {
        slope,
        slope_stderr: (s2 / sxx).sqrt(),
        intercept,
        intercept_stderr: (s2 * (1.0 / nf + mx * mx / sxx)).sqrt(),
        points: n,
        residual_rms: (ssr / nf).sqrt(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StarkFit {
    /// Group 0 then group 1.
    pub groups: [LinearFit; 2],
    /// Mean of the absolute slopes.
    pub mean_abs_slope: f64,
    /// RMS of the two slope standard errors.
    pub mean_stderr: f64,
}

/// Fits the Stark coefficient of each group. Without explicit labels the
/// groups are split by detuning sign and zero-detuning points join both.
pub fn fit_stark_coefficient(points: &[StarkPoint]) -> Result<StarkFit> {
    let labelled = points.iter().any(|p| p.group.is_some());
    if labelled && points.iter().any(|p| p.group.is_none()) {
        return Err(Error::Fit("either every point or none carries a group label".into()));
    }
    let mut xs: [Vec<f64>; 2] = [Vec::new(), Vec::new()];
    let mut ys: [Vec<f64>; 2] = [Vec::new(), Vec::new()];
    for p in points {
        let targets: &[usize] = match p.group {
            Some(0) => &[0],
            Some(1) => &[1],
            Some(g) => return Err(Error::Fit(format!("group label {g} is not 0 or 1"))),
            None if p.detuning_khz > 0.0 => &[0],
            None if p.detuning_khz < 0.0 => &[1],
            None => &[0, 1],
        };
        for &g in targets {
            xs[g].push(p.field_v_per_cm);
            ys[g].push(p.detuning_khz);
        }
    }
    let g0 = linear_fit(&xs[0], &ys[0]).map_err(|e| Error::Fit(format!("group 0: {e}")))?;
    let g1 = linear_fit(&xs[1], &ys[1]).map_err(|e| Error::Fit(format!("group 1: {e}")))?;
    Ok(StarkFit {
        mean_abs_slope: 0.5 * (g0.slope.abs() + g1.slope.abs()),
        mean_stderr: (0.5 * (g0.slope_stderr.powi(2) + g1.slope_stderr.powi(2))).sqrt(),
        groups: [g0, g1],
    })
}

/// Reads `field_v_per_cm,detuning_khz[,group]` CSV.
pub fn read_points_csv<R: Read>(r: R) -> Result<Vec<StarkPoint>> {
    let mut rd = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(r);
    rd.deserialize::<StarkPoint>()
        .map(|row| row.map_err(|e| Error::Parse(e.to_string())))
        .collect()
}
