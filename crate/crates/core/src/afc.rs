//! Closed-form AFC efficiencies, comb rendering and finesse fits.

use std::f64::consts::{LN_2, PI};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ion_ensemble::{AbsorptionSpectrum, GridSpec, Polarization};
use crate::optim::least_squares;

fn check_domain(d: f64, finesse: f64, order: u32) -> Result<()> {
    if !(d >= 0.0 && d.is_finite()) {
        return Err(Error::param("d", "must be finite and non-negative"));
    }
    if !(finesse >= 1.0 && finesse.is_finite()) {
        return Err(Error::param("finesse", "must be at least 1"));
    }
    if order < 1 {
        return Err(Error::param("order", "echo order starts at 1"));
    }
    Ok(())
}

fn gaussian_unchecked(d: f64, f: f64, m: f64) -> f64 {
    let x = d / f;
    PI / (4.0 * LN_2)
        * x
        * x
        * (-(PI / (4.0 * LN_2)).sqrt() * x).exp()
        * (-PI * PI * m * m / (2.0 * LN_2 * f * f)).exp()
}

/// Echo efficiency of order `order` for a comb of Gaussian teeth.
pub fn gaussian_efficiency(d: f64, finesse: f64, order: u32) -> Result<f64> {
    check_domain(d, finesse, order)?;
    Ok(gaussian_unchecked(d, finesse, order as f64))
}

/// Echo efficiency of order `order` for a comb of square teeth over a
/// background depth `d0`.
pub fn square_efficiency(d: f64, finesse: f64, order: u32, d0: f64) -> Result<f64> {
    check_domain(d, finesse, order)?;
    if !(d0 >= 0.0 && d0.is_finite()) {
        return Err(Error::param("d0", "must be finite and non-negative"));
    }
    let x = d / finesse;
    let a = order as f64 * PI / finesse;
    let sinc = if a == 0.0 { 1.0 } else { a.sin() / a };
    Ok(x * x * sinc * sinc * (-x).exp() * (-d0).exp())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ToothShape {
    Gaussian,
    Square,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CombSpec {
    pub spacing_mhz: f64,
    pub finesse: f64,
    pub peak_depth: f64,
    #[serde(default)]
    pub background: f64,
    pub bandwidth_mhz: f64,
    #[serde(default)]
    pub center_mhz: f64,
    pub tooth_shape: ToothShape,
}

impl CombSpec {
    /// Square-tooth comb centred on f0 with no background.
    pub fn square(spacing_mhz: f64, finesse: f64, peak_depth: f64, bandwidth_mhz: f64) -> Self {
        CombSpec {
            spacing_mhz,
            finesse,
            peak_depth,
            background: 0.0,
            bandwidth_mhz,
            center_mhz: 0.0,
            tooth_shape: ToothShape::Square,
        }
    }

    pub fn gaussian(spacing_mhz: f64, finesse: f64, peak_depth: f64, bandwidth_mhz: f64) -> Self {
        CombSpec {
            tooth_shape: ToothShape::Gaussian,
            ..Self::square(spacing_mhz, finesse, peak_depth, bandwidth_mhz)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.spacing_mhz > 0.0) {
            return Err(Error::param("spacing_mhz", "must be positive"));
        }
        if !(self.finesse >= 1.0) {
            return Err(Error::param("finesse", "must be at least 1"));
        }
        if !(self.peak_depth >= 0.0) || !(self.background >= 0.0) {
            return Err(Error::param("peak_depth", "depths must be non-negative"));
        }
        if !(self.bandwidth_mhz >= self.spacing_mhz) {
            return Err(Error::param("bandwidth_mhz", "must be at least one spacing"));
        }
        Ok(())
    }

    pub fn tooth_fwhm_mhz(&self) -> f64 {
        self.spacing_mhz / self.finesse
    }

    pub fn teeth(&self) -> usize {
        (self.bandwidth_mhz / self.spacing_mhz).round().max(1.0) as usize
    }

    pub fn tooth_centers(&self) -> Vec<f64> {
        let n = self.teeth();
        (0..n)
            .map(|j| self.center_mhz + (j as f64 - 0.5 * (n as f64 - 1.0)) * self.spacing_mhz)
            .collect()
    }

    pub fn band(&self) -> (f64, f64) {
        let h = 0.5 * self.bandwidth_mhz;
        (self.center_mhz - h, self.center_mhz + h)
    }

    /// Comb depth averaged over a bin of width `bin` centred on `nu`.
    pub fn depth_at(&self, nu: f64, bin: f64) -> f64 {
        let (lo, hi) = self.band();
        if nu < lo || nu > hi {
            return 0.0;
        }
        let centers = self.tooth_centers();
        let j = ((nu - centers[0]) / self.spacing_mhz)
            .round()
            .clamp(0.0, (centers.len() - 1) as f64) as usize;
        let c = centers[j];
        let w = self.tooth_fwhm_mhz();
        let tooth = match self.tooth_shape {
            ToothShape::Gaussian => (-4.0 * LN_2 * (nu - c).powi(2) / (w * w)).exp(),
            ToothShape::Square => {
                // fraction of the bin covered by the tooth keeps the duty cycle exact
                let a = (nu - 0.5 * bin).max(c - 0.5 * w);
                let b = (nu + 0.5 * bin).min(c + 0.5 * w);
                if bin > 0.0 {
                    ((b - a) / bin).clamp(0.0, 1.0)
                } else if (nu - c).abs() < 0.5 * w {
                    1.0
                } else {
                    0.0
                }
            }
        };
        self.background + self.peak_depth * tooth
    }
}

/// Comb spectrum on `grid`; zero depth outside the comb bandwidth.
pub fn render_comb(spec: &CombSpec, grid: &GridSpec, pol: Polarization) -> Result<AbsorptionSpectrum> {
    spec.validate()?;
    grid.check()?;
    let (lo, hi) = spec.band();
    if !grid.contains(lo) || !grid.contains(hi) {
        return Err(Error::param(
            "bandwidth_mhz",
            format!(
                "comb [{lo}, {hi}] MHz exceeds grid [{}, {}] MHz",
                grid.min_mhz, grid.max_mhz
            ),
        ));
    }
    let f = grid.freqs();
    let d = f.iter().map(|&nu| spec.depth_at(nu, grid.bin_mhz)).collect();
    AbsorptionSpectrum::new(f, d, pol)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EchoObservation {
    pub order: u32,
    pub efficiency: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FinesseFit {
    pub finesse: f64,
    pub finesse_stderr: f64,
    pub coupling: f64,
    pub coupling_stderr: f64,
    /// ln(model / observed) per observation.
    pub residuals: Vec<f64>,
}

/// Fits `coupling * gaussian_efficiency(d, F, m)` to the observed
/// efficiencies by least squares on the logarithms. Starts from F = 2 and the
/// supplied coupling (1 when `None`).
pub fn fit_finesse(observations: &[EchoObservation], d: f64, coupling: Option<f64>) -> Result<FinesseFit> {
    let mut orders: Vec<u32> = observations.iter().map(|o| o.order).collect();
    orders.sort_unstable();
    orders.dedup();
    if orders.len() < 3 {
        return Err(Error::Fit(format!("need at least 3 echo orders, got {}", orders.len())));
    }
    if observations.iter().any(|o| !(o.efficiency > 0.0) || o.order == 0) {
        return Err(Error::Fit("efficiencies must be positive and orders start at 1".into()));
    }
    if !(d > 0.0 && d.is_finite()) {
        return Err(Error::param("d", "must be positive for a finesse fit"));
    }
    let c0 = coupling.unwrap_or(1.0);
    if !(c0 > 0.0) {
        return Err(Error::param("coupling", "must be positive"));
    }
    // log residuals: linear in ln C and well conditioned far from the optimum
    let residuals = |p: &[f64]| -> Vec<f64> {
        let f = p[0].max(1.0);
        observations
            .iter()
            .map(|o| p[1] + gaussian_unchecked(d, f, o.order as f64).ln() - o.efficiency.ln())
            .collect()
    };
    let start = [2.0, c0.ln()];
    let fit = least_squares(&residuals, &start)?;
    let (f, c) = (fit.params[0], fit.params[1].exp());
    if !(f >= 1.0 && f.is_finite()) {
        return Err(Error::Fit(format!(
            "fitted finesse {f} is outside the model domain; residuals {:?}",
            fit.residuals
        )));
    }
    Ok(FinesseFit {
        finesse: f,
        finesse_stderr: fit.stderr[0],
        coupling: c,
        coupling_stderr: c * fit.stderr[1],
        residuals: fit.residuals,
    })
}

/// Reads `order,efficiency` CSV.
pub fn read_observations_csv<R: std::io::Read>(r: R) -> Result<Vec<EchoObservation>> {
    let mut rd = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(r);
    rd.deserialize::<EchoObservation>()
        .map(|row| row.map_err(|e| Error::Parse(e.to_string())))
        .collect()
}
