use remsim_core::ion_ensemble::{IonClass, IonEnsemble, Polarization};
use remsim_core::pump::{
    class_contributions, class_membership, prepare_enhanced_stages, subband_means, ClassFrame, EnhancedProfileReport,
    ENHANCED_HALF_WIDTH_MHZ,
};

fn classes(ids: &[u8]) -> Vec<IonClass> {
    ids.iter().map(|&i| IonClass::new(i).unwrap()).collect()
}

#[test]
fn enhanced_band_is_flat_and_enhanced() {
    let natural = IonEnsemble::eu151_default();
    let stages = prepare_enhanced_stages(&natural).unwrap();
    for pol in Polarization::BOTH {
        let r = EnhancedProfileReport::measure(&stages.enhanced, pol).unwrap();
        assert!(r.ripple <= 0.05, "{r:?}");
        assert!((r.width_mhz - 12.68).abs() <= 0.1, "{r:?}");
        assert!(r.center_mhz.abs() < 0.1, "{r:?}");
        assert!((2.0..=3.0).contains(&r.enhancement), "{r:?}");
        assert!(r.enhancement <= 3.0);
        let asym = (r.upper_subband_mean - r.lower_subband_mean).abs() / r.mean_depth;
        assert!(asym <= 0.05, "{asym}");
    }
}

#[test]
fn pump1_alone_leaves_lower_subband_weaker() {
    let stages = prepare_enhanced_stages(&IonEnsemble::eu151_default()).unwrap();
    for pol in Polarization::BOTH {
        let (lo, hi) = subband_means(&stages.after_pump1, pol).unwrap();
        assert!(lo < 0.9 * hi, "{lo} vs {hi}");
        let r = stages.after_pump1.absorption(pol);
        let h = ENHANCED_HALF_WIDTH_MHZ;
        assert!(r.ripple_over(-h, h).unwrap() > 0.05);
    }
}

#[test]
fn pump1_class_lists() {
    let natural = IonEnsemble::eu151_default();
    let stages = prepare_enhanced_stages(&natural).unwrap();
    let m = class_membership(
        &stages.after_pump1,
        &natural,
        Polarization::H,
        ClassFrame::pump1(),
        1e-3,
    )
    .unwrap();
    assert_eq!(m.full_band, classes(&[4, 5, 6]));
    assert_eq!(m.upper_only, classes(&[7, 8, 9]));
    // The lower-only class is anchored on 1/2g -> 5/2e.
    assert_eq!(m.lower_only, classes(&[1]));
}

#[test]
fn class_decomposition_sums_to_total() {
    let natural = IonEnsemble::eu151_default();
    let stages = prepare_enhanced_stages(&natural).unwrap();
    for e in [&natural, &stages.after_pump1, &stages.enhanced, &natural.emptied()] {
        for frame in [ClassFrame::pump1(), ClassFrame::pump2()] {
            let c = class_contributions(e, (-20.0, 20.0), Polarization::V, frame).unwrap();
            for i in 0..c.detunings.len() {
                let s: f64 = (0..9).map(|k| c.per_class[k][i]).sum();
                assert!((s - c.total[i]).abs() < 1e-9);
            }
        }
    }
    let empty = class_contributions(&natural.emptied(), (-5.0, 5.0), Polarization::H, ClassFrame::pump1()).unwrap();
    assert!(empty.per_class.iter().flatten().all(|&x| x == 0.0));
}

#[test]
fn natural_band_sees_every_resonant_class() {
    let natural = IonEnsemble::eu151_default();
    let c = class_contributions(&natural, (-6.34, 6.34), Polarization::H, ClassFrame::pump1()).unwrap();
    let m = c.band_means(-6.34, 6.34);
    let present: Vec<IonClass> = IonClass::all().filter(|k| m[(k.index() - 1) as usize] > 0.0).collect();
    assert!(present.len() >= 6, "{present:?}");
}
