use proptest::prelude::*;
use proptest::test_runner::{RngAlgorithm, TestRng};
use rand::RngCore;

use remsim_core::afc::{gaussian_efficiency, render_comb, square_efficiency, CombSpec};
use remsim_core::ion_ensemble::{GridSpec, IonClass, IonEnsemble, Polarization, Transition};
use remsim_core::pump::{apply, prepare_enhanced_profile, ClassFrame, PumpPrimitive};
use remsim_core::stark::{split_spectrum, ElectricPulse, StarkConfig};
use remsim_core::tomography::{classical_bound, sigma_margin};

fn small_ensemble() -> IonEnsemble {
    let natural = IonEnsemble::eu151_default();
    let w = GridSpec::new(-150.0, 150.0, 0.1).unwrap();
    IonEnsemble::new(natural.structure().clone(), w, 1.46, 1.64).unwrap()
}

fn primitive() -> impl Strategy<Value = PumpPrimitive> {
    (0usize..4, -120.0..120.0f64, 0.5..40.0f64, 0.05..=1.0f64).prop_map(|(k, c, bw, sat)| {
        match k {
            0 => PumpPrimitive::sweep(c, bw),
            1 => PumpPrimitive::pit(c, bw),
            2 => PumpPrimitive::gaussian(c, bw, sat),
            _ => PumpPrimitive::comb_pattern(c, bw.max(4.0), 2.0, 0.3),
        }
        .with_saturation(sat)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn populations_are_conserved(seq in prop::collection::vec(primitive(), 1..6)) {
        let mut e = small_ensemble();
        for p in &seq {
            e = apply(&e, p).unwrap();
            prop_assert!(e.conservation_error() < 1e-9);
        }
    }

    #[test]
    fn saturated_pits_are_projections(c in -100.0..100.0f64, bw in 0.5..30.0f64) {
        let p = PumpPrimitive::pit(c, bw);
        let once = apply(&small_ensemble(), &p).unwrap();
        let twice = apply(&once, &p).unwrap();
        for (a, b) in once.populations().iter().zip(twice.populations()) {
            for g in 0..3 {
                prop_assert!((a[g] - b[g]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn absorption_is_linear_in_populations(a in 0.0..=1.0f64, c in -60.0..60.0f64, bw in 1.0..30.0f64) {
        let e1 = small_ensemble();
        let e2 = apply(&e1, &PumpPrimitive::pit(c, bw)).unwrap();
        let mut mix = e1.clone();
        let pop = e1
            .populations()
            .iter()
            .zip(e2.populations())
            .map(|(p, q)| [0, 1, 2].map(|g| a * p[g] + (1.0 - a) * q[g]))
            .collect();
        mix.set_populations(pop).unwrap();
        for pol in Polarization::BOTH {
            let (s1, s2, sm) = (e1.absorption(pol), e2.absorption(pol), mix.absorption(pol));
            for i in 0..sm.len() {
                let want = a * s1.depth()[i] + (1.0 - a) * s2.depth()[i];
                prop_assert!((sm.depth()[i] - want).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn stark_split_preserves_area(field in -2000.0..2000.0f64, f in 1.5..8.0f64) {
        let s = render_comb(&CombSpec::gaussian(2.0, f, 3.0, 60.0), &GridSpec::default(), Polarization::H).unwrap();
        let split = split_spectrum(&s, &StarkConfig::default(), field).unwrap();
        prop_assert!((split.area() / s.area() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn gate_phases_add(v in -20.0..20.0f64, t1 in 1.0..200.0f64, t2 in 1.0..200.0f64) {
        let k = StarkConfig::default();
        let a = k.pulse_phase(&ElectricPulse::new(0.0, t1, v).unwrap());
        let b = k.pulse_phase(&ElectricPulse::new(t1, t2, v).unwrap());
        let ab = k.pulse_phase(&ElectricPulse::new(0.0, t1 + t2, v).unwrap());
        let back = k.pulse_phase(&ElectricPulse::new(0.0, t1 * 2.0, -v / 2.0).unwrap());
        for g in 0..2 {
            prop_assert!((a[g] + b[g] - ab[g]).abs() < 1e-9 * (1.0 + ab[g].abs()));
            prop_assert!((a[g] + back[g]).abs() < 1e-9 * (1.0 + a[g].abs()));
        }
    }

    #[test]
    fn efficiencies_have_one_interior_peak_in_finesse(d in 0.5..15.0f64) {
        let fs: Vec<f64> = (0..=380).map(|i| 1.0 + 0.05 * i as f64).collect();
        for eta in [
            fs.iter().map(|&f| gaussian_efficiency(d, f, 1).unwrap()).collect::<Vec<_>>(),
            fs.iter().map(|&f| square_efficiency(d, f, 1, 0.0).unwrap()).collect::<Vec<_>>(),
        ] {
            let turns = eta.windows(3).filter(|w| w[1] > w[0] && w[1] >= w[2]).count();
            prop_assert!(turns <= 1, "d {d}: {turns} maxima");
        }
    }

    #[test]
    fn gaussian_teeth_never_beat_square_teeth(f in 1.05..5.0f64, x in 0.01..=2.0f64) {
        let d = x * f;
        prop_assert!(gaussian_efficiency(d, f, 1).unwrap() <= square_efficiency(d, f, 1, 0.0).unwrap() + 1e-12);
    }

    #[test]
    fn higher_orders_are_weaker(d in 0.1..20.0f64, f in 1.0..20.0f64) {
        let g: Vec<f64> = (1..8).map(|m| gaussian_efficiency(d, f, m).unwrap()).collect();
        prop_assert!(g.windows(2).all(|w| w[1] <= w[0]));
        let s: Vec<f64> = (1..8)
            .filter(|&m| (m as f64) < f)
            .map(|m| square_efficiency(d, f, m, 0.0).unwrap())
            .collect();
        prop_assert!(s.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn classical_bound_is_monotone(mu in 0.005..3.0f64, dmu in 0.0..1.0f64, eta in 0.001..=1.0f64, k in 0.0..=1.0f64) {
        let b = classical_bound(mu, eta).unwrap();
        prop_assert!(classical_bound(mu + dmu, eta).unwrap() >= b - 1e-12);
        prop_assert!(classical_bound(mu, eta * (1.0 - 0.99 * k)).unwrap() >= b - 1e-12);
        prop_assert!((2.0 / 3.0 - 1e-12..=1.0).contains(&b));
    }

    #[test]
    fn sigma_margin_ignores_common_scale(f in 0.5..1.0f64, s in 1e-4..0.1f64, bound in 0.5..1.0f64, c in 0.01..100.0f64) {
        let m = sigma_margin(f, s, bound).unwrap();
        let scaled = sigma_margin(bound + c * (f - bound), c * s, bound).unwrap();
        prop_assert!((m - scaled).abs() <= 1e-9 * (1.0 + m.abs()));
    }
}

#[test]
fn grid_and_class_pictures_agree_on_contributing_pairs() {
    let natural = IonEnsemble::eu151_default();
    let e = prepare_enhanced_profile(&natural).unwrap();
    let s = e.structure().clone();
    let w = *e.window();
    let offsets = s.offsets();
    let mut rng = TestRng::deterministic_rng(RngAlgorithm::ChaCha);
    for _ in 0..200 {
        let nu = -149.0 + 298.0 * (rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64;
        for pol in Polarization::BOTH {
            let terms = e.transition_terms(nu, pol);
            for t in Transition::all() {
                let from_grid = terms[t.index()] > 0.0;
                // brute force: neighbouring population bins of the absorbing ion
                let r = nu - offsets[t.index()];
                let x = ((r - w.min_mhz) / w.bin_mhz).clamp(0.0, (w.len() - 1) as f64);
                let (i, j) = (x.floor() as usize, x.ceil() as usize);
                let pops = e.populations();
                let occupied = if i == j {
                    pops[i][t.ground] > 0.0
                } else {
                    pops[i][t.ground] > 0.0 || pops[j][t.ground] > 0.0
                };
                let from_classes = s.strength(pol)[t.ground][t.excited] > 0.0 && occupied;
                assert_eq!(from_grid, from_classes, "nu {nu} {t:?}");
                for frame in [ClassFrame::pump1(), ClassFrame::pump2()] {
                    let c = frame.classify(&offsets, nu, t);
                    let anchor = r + offsets[c.anchor().index()];
                    let back = anchor + s.transition_offsets(c)[t.index()];
                    assert!((back - nu).abs() < 1e-9);
                }
            }
        }
    }
    assert_eq!(IonClass::all().count(), 9);
}
