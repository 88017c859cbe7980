use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::Polarization;
use crate::error::{Error, Result};

/// Optical depth d(nu) sampled on a strictly increasing detuning grid.
#[derive(Debug, Clone, PartialEq)]
pub struct AbsorptionSpectrum {
    detunings: Vec<f64>,
    depth: Vec<f64>,
    polarization: Polarization,
}

#[derive(Serialize, Deserialize)]
struct Row {
    detuning_mhz: f64,
    depth: f64,
}

impl AbsorptionSpectrum {
    pub fn new(detunings: Vec<f64>, depth: Vec<f64>, polarization: Polarization) -> Result<Self> {
        if detunings.len() != depth.len() {
            return Err(Error::param("depth", "length differs from detunings"));
        }
        if detunings.len() < 2 {
            return Err(Error::param("detunings", "need at least two samples"));
        }
        if detunings.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::param("detunings", "must be strictly increasing"));
        }
        if let Some(bad) = depth.iter().find(|d| !(**d >= 0.0 && d.is_finite())) {
            return Err(Error::Unphysical(format!(
                "optical depth {bad} is negative or not finite"
            )));
        }
        Ok(AbsorptionSpectrum {
            detunings,
            depth,
            polarization,
        })
    }

    pub(crate) fn from_parts_unchecked(detunings: Vec<f64>, depth: Vec<f64>, polarization: Polarization) -> Self {
        AbsorptionSpectrum {
            detunings,
            depth,
            polarization,
        }
    }

    /// Constant depth `d` on a uniform grid.
    pub fn flat(min_mhz: f64, max_mhz: f64, bin_mhz: f64, d: f64, polarization: Polarization) -> Result<Self> {
        let n = ((max_mhz - min_mhz) / bin_mhz).round() as usize + 1;
        let f = (0..n).map(|i| min_mhz + i as f64 * bin_mhz).collect();
        Self::new(f, vec![d; n], polarization)
    }

    pub fn detunings(&self) -> &[f64] {
        &self.detunings
    }

    pub fn depth(&self) -> &[f64] {
        &self.depth
    }

    pub fn polarization(&self) -> Polarization {
        self.polarization
    }

    pub fn len(&self) -> usize {
        self.depth.len()
    }

    pub fn is_empty(&self) -> bool {
        self.depth.is_empty()
    }

    pub fn min_mhz(&self) -> f64 {
        self.detunings[0]
    }

    pub fn max_mhz(&self) -> f64 {
        self.detunings[self.detunings.len() - 1]
    }

    /// Mean sample spacing.
    pub fn bin_mhz(&self) -> f64 {
        (self.max_mhz() - self.min_mhz()) / (self.len() - 1) as f64
    }

    /// Linear interpolation inside the grid.
    pub fn interp(&self, nu: f64) -> Result<f64> {
        let (lo, hi) = (self.min_mhz(), self.max_mhz());
        let eps = 1e-9 * self.bin_mhz();
        if nu < lo - eps || nu > hi + eps {
            return Err(Error::OutOfRange {
                value_mhz: nu,
                min_mhz: lo,
                max_mhz: hi,
            });
        }
        Ok(self.interp_or(nu, 0.0))
    }

    /// Linear interpolation, `outside` beyond the grid.
    pub fn interp_or(&self, nu: f64, outside: f64) -> f64 {
        let x = &self.detunings;
        let eps = 1e-9 * self.bin_mhz();
        if nu < x[0] - eps || nu > x[x.len() - 1] + eps {
            return outside;
        }
        let i = x.partition_point(|&v| v <= nu).clamp(1, x.len() - 1);
        let (x0, x1) = (x[i - 1], x[i]);
        let t = ((nu - x0) / (x1 - x0)).clamp(0.0, 1.0);
        self.depth[i - 1] + t * (self.depth[i] - self.depth[i - 1])
    }

    /// Trapezoidal integral of d over the grid (MHz).
    pub fn area(&self) -> f64 {
        self.detunings
            .windows(2)
            .zip(self.depth.windows(2))
            .map(|(x, d)| 0.5 * (x[1] - x[0]) * (d[0] + d[1]))
            .sum()
    }

    /// Samples strictly inside (lo, hi).
    pub fn band(&self, lo: f64, hi: f64) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.detunings
            .iter()
            .zip(&self.depth)
            .filter(move |(&x, _)| x > lo && x < hi)
            .map(|(&x, &d)| (x, d))
    }

    /// Mean depth of the samples strictly inside (lo, hi).
    pub fn mean_over(&self, lo: f64, hi: f64) -> Result<f64> {
        let (n, s) = self.band(lo, hi).fold((0usize, 0.0), |(n, s), (_, d)| (n + 1, s + d));
        if n == 0 {
            return Err(Error::param("band", format!("no samples inside ({lo}, {hi})")));
        }
        Ok(s / n as f64)
    }

    /// (max - min) / mean over the samples strictly inside (lo, hi).
    pub fn ripple_over(&self, lo: f64, hi: f64) -> Result<f64> {
        let mean = self.mean_over(lo, hi)?;
        let (mn, mx) = self
            .band(lo, hi)
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), (_, d)| {
                (a.min(d), b.max(d))
            });
        Ok((mx - mn) / mean)
    }

    /// Same samples with each depth transformed by `f`.
    pub fn map_depth(&self, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        let depth = self.detunings.iter().zip(&self.depth).map(|(&x, &d)| f(x, d)).collect();
        Self::new(self.detunings.clone(), depth, self.polarization)
    }

    /// Convolution with a unit-area Lorentzian of FWHM `fwhm_mhz`, kernel cut at
    /// 50 FWHM. Assumes a uniform grid.
    pub fn lorentzian_broaden(&self, fwhm_mhz: f64) -> Result<Self> {
        if !(fwhm_mhz >= 0.0) {
            return Err(Error::param("fwhm_mhz", "must be non-negative"));
        }
        if fwhm_mhz == 0.0 {
            return Ok(self.clone());
        }
        let dx = self.bin_mhz();
        let g = 0.5 * fwhm_mhz;
        let half = ((50.0 * fwhm_mhz / dx).ceil() as usize).min(self.len());
        let kernel: Vec<f64> = (0..=2 * half)
            .map(|j| {
                let x = (j as f64 - half as f64) * dx;
                g / std::f64::consts::PI / (x * x + g * g) * dx
            })
            .collect();
        let norm: f64 = kernel.iter().sum();
        let n = self.len();
        let depth = (0..n)
            .map(|i| {
                let mut acc = 0.0;
                for (j, k) in kernel.iter().enumerate() {
                    let src = i as i64 + j as i64 - half as i64;
                    if (0..n as i64).contains(&src) {
                        acc += k * self.depth[src as usize];
                    }
                }
                acc / norm
            })
            .collect();
        Self::new(self.detunings.clone(), depth, self.polarization)
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        for (&x, &d) in self.detunings.iter().zip(&self.depth) {
            wr.serialize(Row {
                detuning_mhz: x,
                depth: d,
            })
            .map_err(csv_err)?;
        }
        wr.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R, polarization: Polarization) -> Result<Self> {
        let mut rd = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(r);
        let (mut f, mut d) = (Vec::new(), Vec::new());
        for row in rd.deserialize::<Row>() {
            let row = row.map_err(csv_err)?;
            f.push(row.detuning_mhz);
            d.push(row.depth);
        }
        Self::new(f, d, polarization)
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_csv(std::io::BufWriter::new(std::fs::File::create(path)?))
    }

    pub fn load_csv(path: impl AsRef<Path>, polarization: Polarization) -> Result<Self> {
        Self::read_csv(std::io::BufReader::new(std::fs::File::open(path)?), polarization)
    }
}

pub(crate) fn csv_err(e: csv::Error) -> Error {
    Error::Parse(e.to_string())
}
