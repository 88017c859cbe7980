use std::fs::File;
use std::path::PathBuf;

use remsim_core::afc::{fit_finesse, read_observations_csv};
use remsim_core::stark::{fit_stark_coefficient, read_points_csv};

fn fixture(name: &str) -> File {
    File::open(
        PathBuf::from(env!("CARGO_MANIFEST_DIR"))
            .join("tests/fixtures")
            .join(name),
    )
    .unwrap()
}

#[test]
fn digitized_splitting_gives_published_coefficients() {
    let fit = fit_stark_coefficient(&read_points_csv(fixture("stark_splitting.csv")).unwrap()).unwrap();
    let [g0, g1] = fit.groups;
    assert!((g0.slope - 5.66).abs() < 1e-3, "{g0:?}");
    assert!((g1.slope + 5.71).abs() < 1e-3, "{g1:?}");
    assert!((g0.slope_stderr - 0.03).abs() < 2e-3, "{g0:?}");
    assert!((g1.slope_stderr - 0.04).abs() < 2e-3, "{g1:?}");
}

#[test]
fn echo_orders_give_finesse_six() {
    for (name, d) in [("echo_orders_h.csv", 3.6), ("echo_orders_v.csv", 4.0)] {
        let obs = read_observations_csv(fixture(name)).unwrap();
        let fit = fit_finesse(&obs, d, None).unwrap();
        assert!((fit.finesse - 6.0).abs() <= 0.1, "{name}: {fit:?}");
        assert!(fit.finesse_stderr < 0.1, "{name}: {fit:?}");
    }
}
