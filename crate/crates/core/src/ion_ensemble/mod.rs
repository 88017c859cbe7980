//! Hyperfine structure, inhomogeneous population state and absorption spectra.

pub(crate) mod spectrum;
mod structure;

pub use spectrum::AbsorptionSpectrum;
pub use structure::{
    branching_from_strengths, validate_structure, validate_structure_against, Check, HyperfineStructure, IonClass,
    Polarization, ReferenceFrequencies, Table, Transition, ValidationReport, LEVELS, LEVEL_LABELS,
};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Uniform frequency grid, both ends inclusive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub min_mhz: f64,
    pub max_mhz: f64,
    pub bin_mhz: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            min_mhz: -150.0,
            max_mhz: 150.0,
            bin_mhz: 0.02,
        }
    }
}

impl GridSpec {
    pub fn new(min_mhz: f64, max_mhz: f64, bin_mhz: f64) -> Result<Self> {
        let g = GridSpec {
            min_mhz,
            max_mhz,
            bin_mhz,
        };
        g.check()?;
        Ok(g)
    }

    pub fn check(&self) -> Result<()> {
        if !(self.bin_mhz > 0.0 && self.bin_mhz.is_finite()) {
            return Err(Error::param("grid.bin_mhz", "must be positive"));
        }
        if !(self.max_mhz > self.min_mhz) {
            return Err(Error::param("grid", "max_mhz must exceed min_mhz"));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        ((self.max_mhz - self.min_mhz) / self.bin_mhz).round() as usize + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn freq(&self, i: usize) -> f64 {
        self.min_mhz + i as f64 * self.bin_mhz
    }

    pub fn freqs(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.freq(i)).collect()
    }

    pub fn contains(&self, nu: f64) -> bool {
        let eps = 1e-9 * self.bin_mhz;
        nu >= self.min_mhz - eps && nu <= self.max_mhz + eps
    }
}

/// Ground-state populations over a grid of reference-transition detunings.
///
/// Each bin holds the ions whose |1/2>g->|1/2>e transition sits at that
/// detuning; their other eight transitions follow from the structure. The
/// population grid extends past the probe window so that every ion with at
/// least one transition inside the window is tracked.
#[derive(Debug, Clone, PartialEq)]
pub struct IonEnsemble {
    structure: HyperfineStructure,
    window: GridSpec,
    natural_depth: [f64; 2],
    /// Reference detuning of population bin 0.
    ref_start: f64,
    pop: Vec<[f64; LEVELS]>,
}

fn pol_index(pol: Polarization) -> usize {
    match pol {
        Polarization::H => 0,
        Polarization::V => 1,
    }
}

impl IonEnsemble {
    /// Unpumped ensemble, 1/3 in each ground state.
    pub fn new(
        structure: HyperfineStructure,
        window: GridSpec,
        natural_depth_h: f64,
        natural_depth_v: f64,
    ) -> Result<Self> {
        window.check()?;
        for (name, d) in [
            ("natural_depth_h", natural_depth_h),
            ("natural_depth_v", natural_depth_v),
        ] {
            if !(d >= 0.0 && d.is_finite()) {
                return Err(Error::param(name, "must be finite and non-negative"));
            }
        }
        for pol in Polarization::BOTH {
            let total: f64 = structure.strength(pol).iter().flatten().sum();
            if !(total > 0.0) || structure.strength(pol).iter().flatten().any(|&s| s < 0.0) {
                return Err(Error::param(
                    "rel_strength",
                    format!("{pol} table must be non-negative with positive sum"),
                ));
            }
        }
        let offsets = structure.offsets();
        let lo = offsets.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = offsets.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let b = window.bin_mhz;
        // keep population bins on the window lattice, one spare bin each side
        let k0 = (-hi / b).floor() as i64 - 1;
        let k1 = ((window.max_mhz - window.min_mhz - lo) / b).ceil() as i64 + 1;
        let n = (k1 - k0 + 1) as usize;
        Ok(IonEnsemble {
            structure,
            window,
            natural_depth: [natural_depth_h, natural_depth_v],
            ref_start: window.min_mhz + k0 as f64 * b,
            pop: vec![[1.0 / 3.0; LEVELS]; n],
        })
    }

    /// Site-2 151Eu defaults: natural depths 1.46 (H) and 1.64 (V), +-150 MHz window.
    pub fn eu151_default() -> Self {
        Self::new(HyperfineStructure::eu151_site2(), GridSpec::default(), 1.46, 1.64)
            .expect("default material is valid")
    }

    pub fn structure(&self) -> &HyperfineStructure {
        &self.structure
    }

    pub fn window(&self) -> &GridSpec {
        &self.window
    }

    pub fn natural_depth(&self, pol: Polarization) -> f64 {
        self.natural_depth[pol_index(pol)]
    }

    /// Depth per unit (population x relative strength).
    pub fn peak_depth_scale(&self, pol: Polarization) -> f64 {
        let total: f64 = self.structure.strength(pol).iter().flatten().sum();
        LEVELS as f64 * self.natural_depth(pol) / total
    }

    pub fn len(&self) -> usize {
        self.pop.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pop.is_empty()
    }

    /// Reference detuning of population bin `k`.
    pub fn ref_freq(&self, k: usize) -> f64 {
        self.ref_start + k as f64 * self.window.bin_mhz
    }

    pub fn populations(&self) -> &[[f64; LEVELS]] {
        &self.pop
    }

    pub fn populations_mut(&mut self) -> &mut [[f64; LEVELS]] {
        &mut self.pop
    }

    /// Detach from the population vector for bulk rewrites.
    pub fn set_populations(&mut self, pop: Vec<[f64; LEVELS]>) -> Result<()> {
        if pop.len() != self.pop.len() {
            return Err(Error::param(
                "pop",
                format!("expected {} bins, got {}", self.pop.len(), pop.len()),
            ));
        }
        self.pop = pop;
        Ok(())
    }

    pub fn reset(&mut self) {
        self.pop.iter_mut().for_each(|p| *p = [1.0 / 3.0; LEVELS]);
    }

    /// Same grid and structure with every ground fraction set to zero.
    pub fn emptied(&self) -> Self {
        let mut e = self.clone();
        e.pop.iter_mut().for_each(|p| *p = [0.0; LEVELS]);
        e
    }

    /// Largest deviation of a per-bin population sum from 1.
    pub fn conservation_error(&self) -> f64 {
        self.pop
            .iter()
            .map(|p| (p.iter().sum::<f64>() - 1.0).abs())
            .fold(0.0, f64::max)
    }

    /// Ground-state populations of the ions whose reference transition is at `nu_ref`,
    /// linearly interpolated; clamped to the edge bins outside the grid.
    pub fn population_at(&self, nu_ref: f64) -> [f64; LEVELS] {
        let x = (nu_ref - self.ref_start) / self.window.bin_mhz;
        let last = self.pop.len() - 1;
        if x <= 0.0 {
            return self.pop[0];
        }
        if x >= last as f64 {
            return self.pop[last];
        }
        let i = x.floor() as usize;
        let t = x - i as f64;
        // snap to a bin when the position lies on the lattice
        if t < 1e-9 {
            return self.pop[i];
        }
        if t > 1.0 - 1e-9 {
            return self.pop[i + 1];
        }
        let (a, b) = (self.pop[i], self.pop[i + 1]);
        [
            a[0] + t * (b[0] - a[0]),
            a[1] + t * (b[1] - a[1]),
            a[2] + t * (b[2] - a[2]),
        ]
    }

    /// Contribution of each transition, in `Transition::all()` order, to d(nu).
    pub fn transition_terms(&self, nu: f64, pol: Polarization) -> [f64; 9] {
        let scale = self.peak_depth_scale(pol);
        let s = self.structure.strength(pol);
        let mut out = [0.0; 9];
        for t in Transition::all() {
            let p = self.population_at(nu - self.structure.offset(t));
            out[t.index()] = scale * s[t.ground][t.excited] * p[t.ground];
        }
        out
    }

    /// Optical depth at a single probe detuning.
    pub fn depth_at(&self, nu: f64, pol: Polarization) -> Result<f64> {
        if !self.window.contains(nu) {
            return Err(Error::OutOfRange {
                value_mhz: nu,
                min_mhz: self.window.min_mhz,
                max_mhz: self.window.max_mhz,
            });
        }
        Ok(self.transition_terms(nu, pol).iter().sum())
    }

    /// Spectrum over the whole probe window.
    pub fn absorption(&self, pol: Polarization) -> AbsorptionSpectrum {
        let freqs = self.window.freqs();
        let depth = freqs
            .par_iter()
            .map(|&nu| self.transition_terms(nu, pol).iter().sum::<f64>().max(0.0))
            .collect();
        AbsorptionSpectrum::from_parts_unchecked(freqs, depth, pol)
    }

    /// Spectrum at arbitrary probe detunings inside the window.
    pub fn absorption_at(&self, freqs: &[f64], pol: Polarization) -> Result<AbsorptionSpectrum> {
        let depth = freqs
            .iter()
            .map(|&nu| self.depth_at(nu, pol))
            .collect::<Result<Vec<_>>>()?;
        AbsorptionSpectrum::new(freqs.to_vec(), depth, pol)
    }
}
