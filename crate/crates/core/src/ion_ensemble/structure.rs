//! Hyperfine level structure of the optical transition and the nine-class
//! view of an inhomogeneously broadened line.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of hyperfine levels in each of the ground and excited manifolds.
pub const LEVELS: usize = 3;

/// Level labels in table order.
pub const LEVEL_LABELS: [&str; LEVELS] = ["1/2", "3/2", "5/2"];

/// Probe polarization axis. `H` is parallel to D1, `V` to b.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Polarization {
    H,
    V,
}

impl Polarization {
    pub const BOTH: [Polarization; 2] = [Polarization::H, Polarization::V];
}

impl fmt::Display for Polarization {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Polarization::H => f.write_str("H"),
            Polarization::V => f.write_str("V"),
        }
    }
}

/// One ground -> excited optical transition, by level index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Transition {
    pub ground: usize,
    pub excited: usize,
}

impl Transition {
    pub fn all() -> impl Iterator<Item = Transition> {
        (0..LEVELS).flat_map(|g| (0..LEVELS).map(move |e| Transition { ground: g, excited: e }))
    }

    /// Position of this transition in `Transition::all()` order.
    pub fn index(self) -> usize {
        self.ground * LEVELS + self.excited
    }
}

impl fmt::Display for Transition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "|{}>g->|{}>e", LEVEL_LABELS[self.ground], LEVEL_LABELS[self.excited])
    }
}

/// Ion class I..IX: the sub-ensemble whose anchor transition sits at the
/// frequency of interest.
///
/// Classes are numbered ground-major; inside a ground level the excited
/// levels run from 5/2 down to 1/2. Class I is anchored on |1/2>g->|5/2>e,
/// class V on |3/2>g->|3/2>e and class IX on |5/2>g->|1/2>e.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub struct IonClass(u8);

impl IonClass {
    pub fn new(index: u8) -> Result<Self> {
        if (1..=9).contains(&index) {
            Ok(IonClass(index))
        } else {
            Err(Error::param("class_index", format!("{index} is not in 1..=9")))
        }
    }

    pub fn all() -> impl Iterator<Item = IonClass> {
        (1..=9).map(IonClass)
    }

    pub fn index(self) -> u8 {
        self.0
    }

    pub fn anchor(self) -> Transition {
        let i = (self.0 - 1) as usize;
        Transition {
            ground: i / LEVELS,
            excited: LEVELS - 1 - i % LEVELS,
        }
    }

    pub fn of_anchor(t: Transition) -> IonClass {
        IonClass((t.ground * LEVELS + (LEVELS - 1 - t.excited)) as u8 + 1)
    }

    pub fn roman(self) -> &'static str {
        ["I", "II", "III", "IV", "V", "VI", "VII", "VIII", "IX"][(self.0 - 1) as usize]
    }
}

impl TryFrom<u8> for IonClass {
    type Error = Error;
    fn try_from(v: u8) -> Result<Self> {
        IonClass::new(v)
    }
}

impl From<IonClass> for u8 {
    fn from(c: IonClass) -> u8 {
        c.0
    }
}

impl fmt::Display for IonClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.roman())
    }
}

pub type Table = [[f64; LEVELS]; LEVELS];

/// Ground and excited hyperfine ladders plus transition tables.
///
/// Offsets are level energies in MHz measured from the 1/2 level of each
/// manifold. A transition |g>->|e> sits at `s * excited[e] - ground[g]`
/// relative to |1/2>g->|1/2>e, where `s = -1` when the excited ladder is
/// inverted with respect to the ground ladder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperfineStructure {
    pub ground_offsets: [f64; LEVELS],
    pub excited_offsets: [f64; LEVELS],
    #[serde(default)]
    pub excited_inverted: bool,
    /// `branching[e][g]`: probability that decay from excited level `e` ends in ground level `g`.
    pub branching: Table,
    /// `rel_strength_h[g][e]`, relative strength of |g>->|e> for H light.
    pub rel_strength_h: Table,
    pub rel_strength_v: Table,
}

impl HyperfineStructure {
    /// Site-2 151Eu:Y2SiO5 at zero field.
    pub fn eu151_site2() -> Self {
        let rel_strength = [[0.1, 1.0, 1.0], [0.1, 1.0, 0.1], [0.1, 0.1, 0.4]];
        HyperfineStructure {
            ground_offsets: [0.0, 29.54, 86.78],
            excited_offsets: [0.0, 106.92, 169.28],
            excited_inverted: true,
            branching: branching_from_strengths(&rel_strength),
            rel_strength_h: rel_strength,
            rel_strength_v: rel_strength,
        }
    }

    /// Same ladders with every strength 1 and branching 1/3.
    pub fn eu151_site2_uniform() -> Self {
        let ones = [[1.0; LEVELS]; LEVELS];
        HyperfineStructure {
            branching: [[1.0 / 3.0; LEVELS]; LEVELS],
            rel_strength_h: ones,
            rel_strength_v: ones,
            ..Self::eu151_site2()
        }
    }

    /// All offsets zero: every transition coincides.
    pub fn degenerate() -> Self {
        HyperfineStructure {
            ground_offsets: [0.0; LEVELS],
            excited_offsets: [0.0; LEVELS],
            ..Self::eu151_site2_uniform()
        }
    }

    pub fn strength(&self, pol: Polarization) -> &Table {
        match pol {
            Polarization::H => &self.rel_strength_h,
            Polarization::V => &self.rel_strength_v,
        }
    }

    fn excited_sign(&self) -> f64 {
        if self.excited_inverted {
            -1.0
        } else {
            1.0
        }
    }

    /// Frequency of `t` relative to the |1/2>g->|1/2>e reference transition.
    pub fn offset(&self, t: Transition) -> f64 {
        self.excited_sign() * self.excited_offsets[t.excited] - self.ground_offsets[t.ground]
    }

    /// All nine offsets relative to the reference transition, in `Transition::all()` order.
    pub fn offsets(&self) -> [f64; 9] {
        let mut out = [0.0; 9];
        for t in Transition::all() {
            out[t.index()] = self.offset(t);
        }
        out
    }

    /// Detunings of all nine transitions of `class`, measured from its anchor.
    pub fn transition_offsets(&self, class: IonClass) -> [f64; 9] {
        let anchor = self.offset(class.anchor());
        let mut out = self.offsets();
        for o in &mut out {
            *o -= anchor;
        }
        // the anchor itself is exactly zero, not a rounding residue
        out[class.anchor().index()] = 0.0;
        out
    }

    /// Distance from the anchor of `class` to the nearest transition of the
    /// same ion at or below it (lines widening to higher frequency).
    /// Infinite when the anchor is the lowest transition of the ion.
    pub fn useful_bandwidth(&self, class: IonClass) -> f64 {
        let anchor = class.anchor().index();
        self.transition_offsets(class)
            .iter()
            .enumerate()
            .filter(|&(i, &o)| i != anchor && o <= 0.0)
            .map(|(_, &o)| -o)
            .fold(f64::INFINITY, f64::min)
    }
}

/// Branching ratios proportional to the transition strengths out of each excited level.
pub fn branching_from_strengths(strength: &Table) -> Table {
    let mut b = [[0.0; LEVELS]; LEVELS];
    for e in 0..LEVELS {
        let total: f64 = (0..LEVELS).map(|g| strength[g][e]).sum();
        for g in 0..LEVELS {
            b[e][g] = if total > 0.0 {
                strength[g][e] / total
            } else {
                1.0 / LEVELS as f64
            };
        }
    }
    b
}

/// Reference frequencies a site-2 structure has to reproduce, in MHz.
#[derive(Debug, Clone, Copy)]
pub struct ReferenceFrequencies {
    pub antihole_pump: f64,
    pub class_viii_bandwidth: f64,
    pub class_v_bandwidth: f64,
    /// Chirp width of the enhancement pumps.
    pub pump_bandwidth: f64,
    pub doubly_pumped_edge: f64,
    pub target_bandwidth: f64,
    pub partial_edge: f64,
    pub tolerance: f64,
}

impl Default for ReferenceFrequencies {
    fn default() -> Self {
        ReferenceFrequencies {
            antihole_pump: 57.24,
            class_viii_bandwidth: 5.12,
            class_v_bandwidth: 32.82,
            pump_bandwidth: 46.0,
            doubly_pumped_edge: 16.46,
            target_bandwidth: 12.68,
            partial_edge: 20.14,
            tolerance: 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub expected: Option<f64>,
    pub computed: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct ValidationReport {
    pub checks: Vec<Check>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.passed)
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    fn push(&mut self, name: impl Into<String>, expected: Option<f64>, computed: f64, passed: bool) {
        self.checks.push(Check {
            name: name.into(),
            expected,
            computed,
            passed,
        });
    }

    fn push_near(&mut self, name: &str, expected: f64, computed: f64, tol: f64) {
        self.push(name, Some(expected), computed, (computed - expected).abs() <= tol);
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.checks {
            let status = if c.passed { "ok  " } else { "FAIL" };
            match c.expected {
                Some(e) => writeln!(
                    f,
                    "{status} {:<28} computed {:>10.4} expected {:>10.4}",
                    c.name, c.computed, e
                )?,
                None => writeln!(f, "{status} {:<28} computed {:>10.4}", c.name, c.computed)?,
            }
        }
        Ok(())
    }
}

/// Checks ladder ordering, table normalisation and the reference
/// frequencies. Never fails; inspect the report.
pub fn validate_structure(s: &HyperfineStructure) -> ValidationReport {
    validate_structure_against(s, &ReferenceFrequencies::default())
}

pub fn validate_structure_against(s: &HyperfineStructure, r: &ReferenceFrequencies) -> ValidationReport {
    let mut rep = ValidationReport::default();

    for (name, ladder) in [("ground", &s.ground_offsets), ("excited", &s.excited_offsets)] {
        let ordered = ladder[0] == 0.0 && ladder.windows(2).all(|w| w[1] > w[0]) && ladder.iter().all(|&o| o >= 0.0);
        let worst_step = ladder.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min);
        rep.push(format!("{name}_offsets_ordered"), None, worst_step, ordered);
    }

    for e in 0..LEVELS {
        let sum: f64 = s.branching[e].iter().sum();
        let in_range = s.branching[e].iter().all(|&b| (0.0..=1.0).contains(&b));
        rep.push(
            format!("branching_row_{}", LEVEL_LABELS[e]),
            Some(1.0),
            sum,
            in_range && (sum - 1.0).abs() <= 1e-12,
        );
    }

    for pol in Polarization::BOTH {
        let table = s.strength(pol);
        let min = table.iter().flatten().copied().fold(f64::INFINITY, f64::min);
        let total: f64 = table.iter().flatten().sum();
        rep.push(
            format!("strength_{pol}_nonnegative"),
            None,
            min,
            min >= 0.0 && total > 0.0,
        );
    }

    // antihole: a pump this far from f0 must move population into a level
    // resonant at f0, i.e. match some combination of level splittings
    let diffs = |l: &[f64; LEVELS]| {
        let mut d = vec![0.0];
        for i in 0..LEVELS {
            for j in i + 1..LEVELS {
                d.push(l[j] - l[i]);
            }
        }
        d
    };
    let mut best = f64::NAN;
    for de in diffs(&s.excited_offsets) {
        for dg in diffs(&s.ground_offsets) {
            for c in [(de + dg).abs(), (de - dg).abs()] {
                if best.is_nan() || (c - r.antihole_pump).abs() < (best - r.antihole_pump).abs() {
                    best = c;
                }
            }
        }
    }
    rep.push_near("antihole_pump_offset", r.antihole_pump, best, r.tolerance);

    let class = |i| IonClass::new(i).expect("static class index");
    let class_v = class(5);
    rep.push_near(
        "class_viii_useful_bandwidth",
        r.class_viii_bandwidth,
        s.useful_bandwidth(class(8)),
        r.tolerance,
    );
    let ub_v = s.useful_bandwidth(class_v);
    rep.push_near("class_v_useful_bandwidth", r.class_v_bandwidth, ub_v, r.tolerance);

    // class-V ions: |1/2>g->|3/2>e lies at +29.54 and |5/2>g->|1/2>e at the
    // lower edge of the target band
    let v = s.transition_offsets(class_v);
    let blue = v[Transition { ground: 0, excited: 1 }.index()];
    let target_low = v[Transition { ground: 2, excited: 0 }.index()];
    rep.push_near(
        "doubly_pumped_edge",
        r.doubly_pumped_edge,
        r.pump_bandwidth - blue,
        r.tolerance,
    );
    rep.push_near("partial_edge", r.partial_edge, target_low - blue, r.tolerance);
    rep.push_near(
        "target_bandwidth",
        r.target_bandwidth,
        blue + ub_v - target_low,
        r.tolerance,
    );
    rep
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Oracle: every pairwise difference of the nine absolute transition
    /// frequencies, computed from raw level energies.
    fn all_differences(s: &HyperfineStructure) -> Vec<f64> {
        let sign = if s.excited_inverted { -1.0 } else { 1.0 };
        let mut f = Vec::new();
        for g in 0..3 {
            for e in 0..3 {
                f.push(sign * s.excited_offsets[e] - s.ground_offsets[g]);
            }
        }
        let mut d = Vec::new();
        for a in &f {
            for b in &f {
                d.push(a - b);
            }
        }
        d
    }

    #[test]
    fn class_anchor_round_trip() {
        for c in IonClass::all() {
            assert_eq!(IonClass::of_anchor(c.anchor()), c);
        }
        let i = IonClass::new(1).unwrap().anchor();
        assert_eq!((i.ground, i.excited), (0, 2));
        let ix = IonClass::new(9).unwrap().anchor();
        assert_eq!((ix.ground, ix.excited), (2, 0));
        assert!(IonClass::new(0).is_err());
        assert!(IonClass::new(10).is_err());
    }

    #[test]
    fn anchor_is_zero_and_unique() {
        let s = HyperfineStructure::eu151_site2();
        for c in IonClass::all() {
            let o = s.transition_offsets(c);
            assert_eq!(o[c.anchor().index()], 0.0);
            assert_eq!(o.iter().filter(|&&x| x == 0.0).count(), 1, "class {c}");
        }
    }

    #[test]
    fn degenerate_structure_collapses() {
        let s = HyperfineStructure::degenerate();
        for c in IonClass::all() {
            assert!(s.transition_offsets(c).iter().all(|&o| o == 0.0));
            assert_eq!(s.useful_bandwidth(c), 0.0);
        }
    }

    #[test]
    fn class_v_left_neighbour_matches_enumeration() {
        let s = HyperfineStructure::eu151_site2();
        let anchor = {
            let t = IonClass::new(5).unwrap().anchor();
            -s.ground_offsets[t.ground] - s.excited_offsets[t.excited]
        };
        // brute force: nearest absolute transition below the anchor
        let sign = -1.0;
        let mut nearest = f64::NEG_INFINITY;
        for g in 0..3 {
            for e in 0..3 {
                let f = sign * s.excited_offsets[e] - s.ground_offsets[g];
                if f < anchor - 1e-12 {
                    nearest = nearest.max(f);
                }
            }
        }
        let oracle = anchor - nearest;
        assert!((oracle - 32.82).abs() < 1e-9);
        assert!((s.useful_bandwidth(IonClass::new(5).unwrap()) - oracle).abs() < 1e-9);
    }

    #[test]
    fn useful_bandwidths_from_methods() {
        let s = HyperfineStructure::eu151_site2();
        assert!((s.useful_bandwidth(IonClass::new(8).unwrap()) - 5.12).abs() < 1e-9);
        assert!((s.useful_bandwidth(IonClass::new(5).unwrap()) - 32.82).abs() < 1e-9);
        // class VII is anchored on the lowest transition of its ions
        assert!(s.useful_bandwidth(IonClass::new(7).unwrap()).is_infinite());
    }

    #[test]
    fn antihole_difference_present_in_enumeration() {
        let s = HyperfineStructure::eu151_site2();
        assert!(all_differences(&s).iter().any(|d| (d.abs() - 57.24).abs() < 1e-9));
    }

    #[test]
    fn default_structure_passes_validation() {
        for s in [
            HyperfineStructure::eu151_site2(),
            HyperfineStructure::eu151_site2_uniform(),
        ] {
            let rep = validate_structure(&s);
            assert!(rep.passed(), "{rep}");
        }
    }

    #[test]
    fn bad_branching_row_flagged() {
        let mut s = HyperfineStructure::eu151_site2();
        s.branching[1] = [0.3, 0.3, 0.3];
        let rep = validate_structure(&s);
        assert!(!rep.passed());
        let c = rep.check("branching_row_3/2").unwrap();
        assert!(!c.passed);
        assert!((c.computed - 0.9).abs() < 1e-12);
    }

    #[test]
    fn unordered_ground_flagged() {
        let mut s = HyperfineStructure::eu151_site2();
        s.ground_offsets = [0.0, 86.78, 29.54];
        let rep = validate_structure(&s);
        assert!(!rep.check("ground_offsets_ordered").unwrap().passed);
    }

    #[test]
    fn misread_splitting_flagged() {
        let mut s = HyperfineStructure::eu151_site2();
        s.ground_offsets[2] = 90.0;
        let rep = validate_structure(&s);
        assert!(!rep.passed());
        assert!(rep.failures().any(|c| c.name == "antihole_pump_offset"));
    }

    #[test]
    fn branching_follows_strength_columns() {
        let b = branching_from_strengths(&HyperfineStructure::eu151_site2().rel_strength_h);
        for row in b {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        assert!((b[0][0] - 1.0 / 3.0).abs() < 1e-12);
    }
}
