//! Optical pumping primitives, sequences and the two-stage enhanced
//! absorption preparation.
//!
//! Pumping is modelled as steady-state population transfer. A bin whose
//! ground state `g` has a transition inside a pump band loses that
//! population to the ground states reached by spontaneous decay from the
//! addressed excited levels. When `saturation` is 1 the transfer is iterated
//! to its fixed point, so addressed ground states end empty whenever an
//! unaddressed state is reachable.

use std::collections::HashMap;
use std::path::Path;

use nalgebra::Matrix3;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ion_ensemble::{
    validate_structure, AbsorptionSpectrum, IonClass, IonEnsemble, Polarization, Transition, LEVELS,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PumpKind {
    /// Initialisation sweep: ions with any transition in the band are returned to 1/3 each.
    Sweep,
    /// Spectral pit: saturated transfer out of every addressed ground state.
    Pit,
    /// Weak pump with a Gaussian transfer profile; `bandwidth_mhz` is its FWHM.
    Gaussian,
    /// Pit over the band except for periodic teeth.
    CombPattern,
    /// Uniform 1/3 populations everywhere.
    Reset,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PumpPrimitive {
    pub kind: PumpKind,
    #[serde(default)]
    pub center_mhz: f64,
    #[serde(default)]
    pub bandwidth_mhz: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub duration_ms: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spacing_mhz: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub duty: Option<f64>,
    #[serde(default = "one")]
    pub saturation: f64,
}

impl PumpPrimitive {
    fn band_kind(kind: PumpKind, center_mhz: f64, bandwidth_mhz: f64) -> Self {
        PumpPrimitive {
            kind,
            center_mhz,
            bandwidth_mhz,
            duration_ms: None,
            spacing_mhz: None,
            duty: None,
            saturation: 1.0,
        }
    }

    pub fn sweep(center_mhz: f64, bandwidth_mhz: f64) -> Self {
        Self::band_kind(PumpKind::Sweep, center_mhz, bandwidth_mhz)
    }

    pub fn pit(center_mhz: f64, bandwidth_mhz: f64) -> Self {
        Self::band_kind(PumpKind::Pit, center_mhz, bandwidth_mhz)
    }

    /// Pit covering `[lo, hi]`.
    pub fn pit_between(lo_mhz: f64, hi_mhz: f64) -> Self {
        Self::pit(0.5 * (lo_mhz + hi_mhz), hi_mhz - lo_mhz)
    }

    pub fn gaussian(center_mhz: f64, fwhm_mhz: f64, saturation: f64) -> Self {
        PumpPrimitive {
            saturation,
            ..Self::band_kind(PumpKind::Gaussian, center_mhz, fwhm_mhz)
        }
    }

    pub fn comb_pattern(center_mhz: f64, bandwidth_mhz: f64, spacing_mhz: f64, duty: f64) -> Self {
        PumpPrimitive {
            spacing_mhz: Some(spacing_mhz),
            duty: Some(duty),
            ..Self::band_kind(PumpKind::CombPattern, center_mhz, bandwidth_mhz)
        }
    }

    pub fn reset() -> Self {
        Self::band_kind(PumpKind::Reset, 0.0, 0.0)
    }

    pub fn with_saturation(mut self, saturation: f64) -> Self {
        self.saturation = saturation;
        self
    }

    pub fn with_duration_ms(mut self, duration_ms: f64) -> Self {
        self.duration_ms = Some(duration_ms);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.kind == PumpKind::Reset {
            return Ok(());
        }
        if !(self.bandwidth_mhz > 0.0 && self.bandwidth_mhz.is_finite()) {
            return Err(Error::param("bandwidth_mhz", "must be positive"));
        }
        if !self.center_mhz.is_finite() {
            return Err(Error::param("center_mhz", "must be finite"));
        }
        // saturation = 0 is accepted as an explicit no-op
        if !(0.0..=1.0).contains(&self.saturation) {
            return Err(Error::param("saturation", "must lie in [0, 1]"));
        }
        if self.kind == PumpKind::CombPattern {
            let spacing = self
                .spacing_mhz
                .ok_or_else(|| Error::param("spacing_mhz", "required for comb_pattern"))?;
            let duty = self
                .duty
                .ok_or_else(|| Error::param("duty", "required for comb_pattern"))?;
            if !(spacing > 0.0) {
                return Err(Error::param("spacing_mhz", "must be positive"));
            }
            if !(duty > 0.0 && duty < 1.0) {
                return Err(Error::param("duty", "must lie in (0, 1)"));
            }
        }
        Ok(())
    }

    /// Frequency interval that the primitive can address.
    pub fn span(&self) -> (f64, f64) {
        let half = match self.kind {
            // transfer below 1e-6 is dropped
            PumpKind::Gaussian => self.bandwidth_mhz * (6.0 * 10f64.ln() / (4.0 * 2f64.ln())).sqrt(),
            _ => 0.5 * self.bandwidth_mhz,
        };
        (self.center_mhz - half, self.center_mhz + half)
    }

    fn in_tooth(&self, nu: f64) -> bool {
        let (Some(spacing), Some(duty)) = (self.spacing_mhz, self.duty) else {
            return false;
        };
        let n = (self.bandwidth_mhz / spacing).round().max(1.0);
        let first = self.center_mhz - 0.5 * (n - 1.0) * spacing;
        let j = ((nu - first) / spacing).round().clamp(0.0, n - 1.0);
        (nu - (first + j * spacing)).abs() < 0.5 * duty * spacing
    }

    fn addresses(&self, nu: f64) -> bool {
        let (lo, hi) = self.span();
        let inside = nu >= lo && nu <= hi;
        match self.kind {
            PumpKind::CombPattern => inside && !self.in_tooth(nu),
            _ => inside,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PumpSequence {
    pub primitives: Vec<PumpPrimitive>,
    #[serde(default = "one_u32")]
    pub repeat: u32,
}

fn one_u32() -> u32 {
    1
}

#[derive(Deserialize)]
#[serde(untagged)]
enum SequenceFile {
    List(Vec<PumpPrimitive>),
    Full(PumpSequence),
}

impl PumpSequence {
    pub fn new(primitives: Vec<PumpPrimitive>) -> Result<Self> {
        let s = PumpSequence { primitives, repeat: 1 };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.primitives.is_empty() {
            return Err(Error::param("primitives", "sequence is empty"));
        }
        if self.repeat == 0 {
            return Err(Error::param("repeat", "must be at least 1"));
        }
        self.primitives.iter().try_for_each(PumpPrimitive::validate)
    }

    /// Accepts either a bare JSON list of primitives or `{primitives, repeat}`.
    pub fn from_json(text: &str) -> Result<Self> {
        let s = match serde_json::from_str::<SequenceFile>(text)
            .map_err(|e| Error::Parse(format!("pump sequence: {e}")))?
        {
            SequenceFile::List(p) => PumpSequence {
                primitives: p,
                repeat: 1,
            },
            SequenceFile::Full(s) => s,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("pump sequence serializes")
    }

    /// Steps 1 to 3 of the Stark measurement: 125 MHz initialisation sweep,
    /// 6 MHz pit at f0, weak Gaussian pumps at f0 +- 57.24 MHz.
    pub fn stark_antihole() -> Self {
        PumpSequence {
            primitives: vec![
                PumpPrimitive::sweep(0.0, 125.0),
                PumpPrimitive::pit(0.0, 6.0),
                PumpPrimitive::gaussian(57.24, 0.3, 0.5).with_duration_ms(4.0),
                PumpPrimitive::gaussian(-57.24, 0.3, 0.5).with_duration_ms(4.0),
            ],
            repeat: 1,
        }
    }
}

/// Pump chirp centre offset from f0 (MHz).
pub const ENHANCED_PUMP_OFFSET_MHZ: f64 = 33.02;
/// Pump chirp bandwidth (MHz).
pub const ENHANCED_PUMP_BANDWIDTH_MHZ: f64 = 46.0;
/// Half width of the enhanced band around f0 (MHz).
pub const ENHANCED_HALF_WIDTH_MHZ: f64 = 6.34;
/// Boundary between the sub-bands fed by different classes after pump-1.
pub const ENHANCED_SPLIT_MHZ: f64 = 1.22;

pub fn pump1() -> PumpPrimitive {
    PumpPrimitive::pit(-ENHANCED_PUMP_OFFSET_MHZ, ENHANCED_PUMP_BANDWIDTH_MHZ)
}

pub fn pump2() -> PumpPrimitive {
    PumpPrimitive::pit(ENHANCED_PUMP_OFFSET_MHZ, ENHANCED_PUMP_BANDWIDTH_MHZ)
}

pub fn enhanced_profile_sequence() -> PumpSequence {
    PumpSequence {
        primitives: vec![pump1(), pump2()],
        repeat: 1,
    }
}

fn pump_strength(ens: &IonEnsemble) -> [[f64; LEVELS]; LEVELS] {
    let s = ens.structure();
    let mut out = [[0.0; LEVELS]; LEVELS];
    for g in 0..LEVELS {
        for e in 0..LEVELS {
            out[g][e] = 0.5 * (s.rel_strength_h[g][e] + s.rel_strength_v[g][e]);
        }
    }
    out
}

/// Column-stochastic redistribution: column g is where population leaving g lands.
fn decay_matrix(ens: &IonEnsemble, weights: &[[f64; LEVELS]; LEVELS]) -> ([bool; LEVELS], Matrix3<f64>) {
    let b = &ens.structure().branching;
    let mut m = Matrix3::identity();
    let mut active = [false; LEVELS];
    for g in 0..LEVELS {
        let total: f64 = weights[g].iter().sum();
        if total <= 0.0 {
            continue;
        }
        active[g] = true;
        for g2 in 0..LEVELS {
            m[(g2, g)] = (0..LEVELS).map(|e| weights[g][e] * b[e][g2]).sum::<f64>() / total;
        }
    }
    (active, m)
}

fn saturated_transfer(ens: &IonEnsemble, mask: u16, saturation: f64) -> Matrix3<f64> {
    let strength = pump_strength(ens);
    let mut w = [[0.0; LEVELS]; LEVELS];
    for t in Transition::all() {
        if mask & (1 << t.index()) != 0 {
            w[t.ground][t.excited] = strength[t.ground][t.excited];
        }
    }
    let (_, decay) = decay_matrix(ens, &w);
    let id = Matrix3::identity();
    let step = id * (1.0 - saturation) + decay * saturation;
    if saturation < 1.0 {
        return step;
    }
    // fixed point of the lazy chain: same absorption, no periodic orbits
    let mut p = (id + step) * 0.5;
    for _ in 0..64 {
        let next = p * p;
        let done = (next - p).abs().max() < 1e-16;
        p = next;
        if done {
            break;
        }
    }
    p
}

fn apply_matrix(m: &Matrix3<f64>, p: &[f64; LEVELS]) -> [f64; LEVELS] {
    let v = m * nalgebra::Vector3::new(p[0], p[1], p[2]);
    [v[0], v[1], v[2]]
}

/// Applies one primitive to a copy of `ensemble`.
pub fn apply(ensemble: &IonEnsemble, primitive: &PumpPrimitive) -> Result<IonEnsemble> {
    let mut out = ensemble.clone();
    apply_in_place(&mut out, primitive)?;
    Ok(out)
}

pub fn apply_in_place(ens: &mut IonEnsemble, p: &PumpPrimitive) -> Result<()> {
    p.validate()?;
    if p.kind == PumpKind::Reset {
        ens.reset();
        return Ok(());
    }
    let w = *ens.window();
    let (lo, hi) = p.span();
    if hi < w.min_mhz || lo > w.max_mhz {
        log::warn!(
            "{:?} pump [{lo}, {hi}] MHz lies outside the grid window [{}, {}] MHz, skipped",
            p.kind,
            w.min_mhz,
            w.max_mhz
        );
        return Ok(());
    }
    if p.saturation == 0.0 {
        return Ok(());
    }
    let offsets = ens.structure().offsets();
    let refs: Vec<f64> = (0..ens.len()).map(|k| ens.ref_freq(k)).collect();

    if p.kind == PumpKind::Gaussian {
        let strength = pump_strength(ens);
        let snapshot = ens.clone();
        let four_ln2 = 4.0 * 2f64.ln();
        let fwhm = p.bandwidth_mhz;
        let new: Vec<[f64; LEVELS]> = refs
            .par_iter()
            .zip(snapshot.populations().par_iter())
            .map(|(&r, pop)| {
                let mut prob = [[0.0; LEVELS]; LEVELS];
                let mut any = false;
                for t in Transition::all() {
                    let x = r + offsets[t.index()] - p.center_mhz;
                    let q = p.saturation * (-four_ln2 * x * x / (fwhm * fwhm)).exp();
                    if q >= 1e-6 && strength[t.ground][t.excited] > 0.0 {
                        prob[t.ground][t.excited] = q;
                        any = true;
                    }
                }
                if !any {
                    return *pop;
                }
                let mut weights = [[0.0; LEVELS]; LEVELS];
                let mut leave = [0.0; LEVELS];
                for g in 0..LEVELS {
                    leave[g] = 1.0 - prob[g].iter().map(|q| 1.0 - q).product::<f64>();
                    for e in 0..LEVELS {
                        weights[g][e] = prob[g][e] * strength[g][e];
                    }
                }
                let (active, decay) = decay_matrix(&snapshot, &weights);
                let mut m = Matrix3::identity();
                for g in 0..LEVELS {
                    if active[g] {
                        for g2 in 0..LEVELS {
                            let stay = if g2 == g { 1.0 - leave[g] } else { 0.0 };
                            m[(g2, g)] = stay + leave[g] * decay[(g2, g)];
                        }
                    }
                }
                apply_matrix(&m, pop)
            })
            .collect();
        return ens.set_populations(new);
    }

    let masks: Vec<u16> = refs
        .par_iter()
        .map(|&r| {
            Transition::all()
                .filter(|t| p.addresses(r + offsets[t.index()]))
                .fold(0u16, |m, t| m | (1 << t.index()))
        })
        .collect();

    if p.kind == PumpKind::Sweep {
        for (pop, &m) in ens.populations_mut().iter_mut().zip(&masks) {
            if m != 0 {
                *pop = [1.0 / 3.0; LEVELS];
            }
        }
        return Ok(());
    }

    let mut cache: HashMap<u16, Matrix3<f64>> = HashMap::new();
    for &m in &masks {
        if m != 0 {
            cache
                .entry(m)
                .or_insert_with(|| saturated_transfer(ens, m, p.saturation));
        }
    }
    ens.populations_mut()
        .par_iter_mut()
        .zip(masks.par_iter())
        .for_each(|(pop, m)| {
            if let Some(t) = cache.get(m) {
                *pop = apply_matrix(t, pop);
            }
        });
    Ok(())
}

/// Left fold of [`apply`] over the sequence, `repeat` times.
pub fn run_sequence(ensemble: &IonEnsemble, sequence: &PumpSequence) -> Result<IonEnsemble> {
    sequence.validate()?;
    let mut out = ensemble.clone();
    for _ in 0..sequence.repeat {
        for p in &sequence.primitives {
            apply_in_place(&mut out, p)?;
        }
    }
    Ok(out)
}

/// Ensemble after pump-1 alone and after pump-1 and pump-2.
#[derive(Debug, Clone)]
pub struct EnhancedStages {
    pub after_pump1: IonEnsemble,
    pub enhanced: IonEnsemble,
}

/// Runs pump-1 over [f0-56.02, f0-10.02] MHz then pump-2 over
/// [f0+10.02, f0+56.02] MHz, leaving an enhanced flat band centred on f0.
pub fn prepare_enhanced_profile(ensemble: &IonEnsemble) -> Result<IonEnsemble> {
    Ok(prepare_enhanced_stages(ensemble)?.enhanced)
}

pub fn prepare_enhanced_stages(ensemble: &IonEnsemble) -> Result<EnhancedStages> {
    let report = validate_structure(ensemble.structure());
    if !report.passed() {
        return Err(Error::InvalidStructure(Box::new(report)));
    }
    let w = ensemble.window();
    let reach = ENHANCED_PUMP_OFFSET_MHZ + 0.5 * ENHANCED_PUMP_BANDWIDTH_MHZ;
    if w.min_mhz > -reach || w.max_mhz < reach {
        return Err(Error::param(
            "grid",
            format!("window must cover [-{reach}, {reach}] MHz for the enhancement pumps"),
        ));
    }
    let after_pump1 = apply(ensemble, &pump1())?;
    let enhanced = apply(&after_pump1, &pump2())?;
    Ok(EnhancedStages { after_pump1, enhanced })
}

/// Figures of merit of an enhanced band centred on f0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EnhancedProfileReport {
    pub polarization: Polarization,
    pub natural_depth: f64,
    pub mean_depth: f64,
    /// (max - min) / mean inside the target band.
    pub ripple: f64,
    pub enhancement: f64,
    /// Distance between the points where d falls to 95 % of the band mean.
    pub width_mhz: f64,
    pub center_mhz: f64,
    /// Mean depth on [f0-6.34, f0+1.22] and [f0+1.22, f0+6.34].
    pub lower_subband_mean: f64,
    pub upper_subband_mean: f64,
}

impl EnhancedProfileReport {
    pub fn measure(ensemble: &IonEnsemble, pol: Polarization) -> Result<Self> {
        let sp = ensemble.absorption(pol);
        Self::from_spectrum(&sp, ensemble.natural_depth(pol))
    }

    pub fn from_spectrum(sp: &AbsorptionSpectrum, natural_depth: f64) -> Result<Self> {
        let h = ENHANCED_HALF_WIDTH_MHZ;
        let mean = sp.mean_over(-h, h)?;
        let ripple = sp.ripple_over(-h, h)?;
        let level = 0.95 * mean;
        let (lo, hi) = crossings(sp, level)?;
        Ok(EnhancedProfileReport {
            polarization: sp.polarization(),
            natural_depth,
            mean_depth: mean,
            ripple,
            enhancement: mean / natural_depth,
            width_mhz: hi - lo,
            center_mhz: 0.5 * (lo + hi),
            lower_subband_mean: sp.mean_over(-h, ENHANCED_SPLIT_MHZ)?,
            upper_subband_mean: sp.mean_over(ENHANCED_SPLIT_MHZ, h)?,
        })
    }
}

/// Mean depth below and above the sub-band boundary inside the target band.
pub fn subband_means(ensemble: &IonEnsemble, pol: Polarization) -> Result<(f64, f64)> {
    let sp = ensemble.absorption_at(&ensemble.window().freqs(), pol)?;
    let h = ENHANCED_HALF_WIDTH_MHZ;
    Ok((
        sp.mean_over(-h, ENHANCED_SPLIT_MHZ)?,
        sp.mean_over(ENHANCED_SPLIT_MHZ, h)?,
    ))
}

/// Outermost contiguous crossings of `level` around f0, linearly interpolated.
fn crossings(sp: &AbsorptionSpectrum, level: f64) -> Result<(f64, f64)> {
    let x = sp.detunings();
    let d = sp.depth();
    let mid = x.partition_point(|&v| v < 0.0).min(x.len() - 1);
    if d[mid] < level {
        return Err(Error::Fit("depth at f0 is below the band level".into()));
    }
    let interp = |i: usize, j: usize| x[i] + (level - d[i]) * (x[j] - x[i]) / (d[j] - d[i]);
    let mut hi = None;
    for i in mid..x.len() - 1 {
        if d[i + 1] < level {
            hi = Some(interp(i, i + 1));
            break;
        }
    }
    let mut lo = None;
    for i in (1..=mid).rev() {
        if d[i - 1] < level {
            lo = Some(interp(i, i - 1));
            break;
        }
    }
    match (lo, hi) {
        (Some(l), Some(h)) => Ok((l, h)),
        _ => Err(Error::Fit("enhanced band does not fall off inside the window".into())),
    }
}

/// How ions are assigned to classes when decomposing a spectrum.
///
/// With `Right` widening an ion belongs to the class whose anchor is its
/// lowest transition at or above `origin_mhz`; `Left` mirrors this with the
/// highest transition at or below the origin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassFrame {
    pub origin_mhz: f64,
    pub widening: Widening,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Widening {
    Right,
    Left,
}

impl ClassFrame {
    /// Frame of pump-1: origin at its lower band edge, widening right.
    pub fn pump1() -> Self {
        ClassFrame {
            origin_mhz: -ENHANCED_PUMP_OFFSET_MHZ - 0.5 * ENHANCED_PUMP_BANDWIDTH_MHZ,
            widening: Widening::Right,
        }
    }

    /// Mirror frame of pump-2: origin at its upper band edge, widening left.
    pub fn pump2() -> Self {
        ClassFrame {
            origin_mhz: ENHANCED_PUMP_OFFSET_MHZ + 0.5 * ENHANCED_PUMP_BANDWIDTH_MHZ,
            widening: Widening::Left,
        }
    }

    /// Class of the ion absorbing at `nu` through transition `t`.
    pub fn classify(&self, offsets: &[f64; 9], nu: f64, t: Transition) -> IonClass {
        let r = nu - offsets[t.index()];
        let mut best: Option<(f64, Transition)> = None;
        for u in Transition::all() {
            let f = r + offsets[u.index()];
            let eligible = match self.widening {
                Widening::Right => f >= self.origin_mhz - 1e-9,
                Widening::Left => f <= self.origin_mhz + 1e-9,
            };
            let better = |b: f64| match self.widening {
                Widening::Right => f < b,
                Widening::Left => f > b,
            };
            if eligible && best.is_none_or(|(b, _)| better(b)) {
                best = Some((f, u));
            }
        }
        IonClass::of_anchor(best.map_or(t, |(_, u)| u))
    }
}

/// Per-class decomposition of d(nu) over a band.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassContributions {
    pub polarization: Polarization,
    pub frame: ClassFrame,
    pub detunings: Vec<f64>,
    /// `per_class[c - 1][i]`: depth at `detunings[i]` due to class c.
    pub per_class: Vec<Vec<f64>>,
    pub total: Vec<f64>,
}

impl ClassContributions {
    pub fn class(&self, c: IonClass) -> &[f64] {
        &self.per_class[(c.index() - 1) as usize]
    }

    /// Mean contribution of each class over the samples strictly inside (lo, hi).
    pub fn band_means(&self, lo: f64, hi: f64) -> [f64; 9] {
        let idx: Vec<usize> = (0..self.detunings.len())
            .filter(|&i| self.detunings[i] > lo && self.detunings[i] < hi)
            .collect();
        let mut out = [0.0; 9];
        if idx.is_empty() {
            return out;
        }
        for (c, row) in self.per_class.iter().enumerate() {
            out[c] = idx.iter().map(|&i| row[i]).sum::<f64>() / idx.len() as f64;
        }
        out
    }

    /// Classes whose mean contribution over (lo, hi) exceeds `threshold`.
    pub fn contributing(&self, lo: f64, hi: f64, threshold: f64) -> Vec<IonClass> {
        let m = self.band_means(lo, hi);
        IonClass::all()
            .filter(|c| m[(c.index() - 1) as usize] > threshold)
            .collect()
    }

    /// Classes whose mean contribution over (lo, hi) exceeds that of
    /// `reference` (typically the unpumped ensemble) by more than `threshold`.
    pub fn enhanced_relative_to(
        &self,
        reference: &ClassContributions,
        lo: f64,
        hi: f64,
        threshold: f64,
    ) -> Vec<IonClass> {
        let m = self.band_means(lo, hi);
        let r = reference.band_means(lo, hi);
        IonClass::all()
            .filter(|c| {
                let i = (c.index() - 1) as usize;
                m[i] - r[i] > threshold
            })
            .collect()
    }
}

/// Decomposes the spectrum on the window grid inside [lo, hi] into classes.
pub fn class_contributions(
    ensemble: &IonEnsemble,
    band: (f64, f64),
    pol: Polarization,
    frame: ClassFrame,
) -> Result<ClassContributions> {
    let (lo, hi) = band;
    let w = ensemble.window();
    if !(w.contains(lo) && w.contains(hi) && hi > lo) {
        return Err(Error::OutOfRange {
            value_mhz: if w.contains(lo) { hi } else { lo },
            min_mhz: w.min_mhz,
            max_mhz: w.max_mhz,
        });
    }
    let offsets = ensemble.structure().offsets();
    let detunings: Vec<f64> = w
        .freqs()
        .into_iter()
        .filter(|&x| x >= lo - 1e-9 && x <= hi + 1e-9)
        .collect();
    let rows: Vec<([f64; 9], f64)> = detunings
        .par_iter()
        .map(|&nu| {
            let terms = ensemble.transition_terms(nu, pol);
            let mut per = [0.0; 9];
            for t in Transition::all() {
                let c = frame.classify(&offsets, nu, t);
                per[(c.index() - 1) as usize] += terms[t.index()];
            }
            (per, terms.iter().sum())
        })
        .collect();
    let mut per_class: Vec<Vec<f64>> = (0..9).map(|_| Vec::with_capacity(rows.len())).collect();
    let mut total = Vec::with_capacity(rows.len());
    for (per, t) in rows {
        for c in 0..9 {
            per_class[c].push(per[c]);
        }
        total.push(t);
    }
    Ok(ClassContributions {
        polarization: pol,
        frame,
        detunings,
        per_class,
        total,
    })
}

/// Classes raised above the natural ensemble in each half of the target band.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassMembership {
    pub lower: Vec<IonClass>,
    pub upper: Vec<IonClass>,
    pub full_band: Vec<IonClass>,
    pub lower_only: Vec<IonClass>,
    pub upper_only: Vec<IonClass>,
    pub lower_means: [f64; 9],
    pub upper_means: [f64; 9],
}

/// Splits the target band at the sub-band boundary and lists the classes
/// whose contribution exceeds the natural one by more than
/// `threshold` (as a fraction of the natural depth).
pub fn class_membership(
    prepared: &IonEnsemble,
    natural: &IonEnsemble,
    pol: Polarization,
    frame: ClassFrame,
    threshold: f64,
) -> Result<ClassMembership> {
    let h = ENHANCED_HALF_WIDTH_MHZ;
    let band = (-h, h);
    let now = class_contributions(prepared, band, pol, frame)?;
    let before = class_contributions(natural, band, pol, frame)?;
    let t = threshold * natural.natural_depth(pol);
    let lower = now.enhanced_relative_to(&before, -h, ENHANCED_SPLIT_MHZ, t);
    let upper = now.enhanced_relative_to(&before, ENHANCED_SPLIT_MHZ, h, t);
    let full_band = lower.iter().filter(|c| upper.contains(c)).copied().collect();
    let lower_only = lower.iter().filter(|c| !upper.contains(c)).copied().collect();
    let upper_only = upper.iter().filter(|c| !lower.contains(c)).copied().collect();
    Ok(ClassMembership {
        lower_means: now.band_means(-h, ENHANCED_SPLIT_MHZ),
        upper_means: now.band_means(ENHANCED_SPLIT_MHZ, h),
        lower,
        upper,
        full_band,
        lower_only,
        upper_only,
    })
}
