use remsim_core::echo::PolarizationChannel;
use remsim_core::tomography::{
    classical_bound, mle_reconstruct, monte_carlo_error, noise_rate_for_snr, process_fidelity, simulate_counts,
    simulate_process_counts, ProcessMatrix, QptConfig,
};

fn channel() -> PolarizationChannel {
    PolarizationChannel::new(0.070, 0.076, 0.0).unwrap()
}

#[test]
fn diattenuation_reconstructs_near_closed_form() {
    let cfg = QptConfig {
        mu: 0.32,
        trials: 1_000_000,
        noise_rate: 0.0,
        seed: 11,
    };
    let rec = mle_reconstruct(&simulate_counts(&channel(), &cfg).unwrap()).unwrap();
    rec.process.check_physical().unwrap();
    assert!(rec.process.trace_preservation_error() < 1e-6);
    let f = process_fidelity(&rec.process, &ProcessMatrix::identity()).unwrap();
    assert!((f - 0.9997).abs() <= 0.0005, "{f}");
}

#[test]
fn noise_at_snr_one_thousand_keeps_fidelity_high() {
    let ch = channel();
    let noise_rate = noise_rate_for_snr(0.32, 0.5 * (ch.eta_h + ch.eta_v), 1000.0).unwrap();
    let cfg = QptConfig {
        mu: 0.32,
        trials: 100_000,
        noise_rate,
        seed: 5,
    };
    let counts = simulate_counts(&ch, &cfg).unwrap();
    let rec = mle_reconstruct(&counts).unwrap();
    rec.process.check_physical().unwrap();
    let f = process_fidelity(&rec.process, &ProcessMatrix::identity()).unwrap();
    assert!((0.985..=1.0).contains(&f), "{f}");
    let mc = monte_carlo_error(&counts, 200, 1).unwrap();
    assert!(mc.std_dev > 0.0 && mc.std_dev < 0.01, "{}", mc.std_dev);
    assert_eq!(mc, monte_carlo_error(&counts, 200, 1).unwrap());
}

#[test]
fn huge_counts_give_tiny_error_bars() {
    let cfg = QptConfig {
        mu: 1.0,
        trials: 100_000_000,
        noise_rate: 1e-4,
        seed: 2,
    };
    let counts = simulate_process_counts(&ProcessMatrix::identity(), &cfg).unwrap();
    let mc = monte_carlo_error(&counts, 100, 3).unwrap();
    assert!(mc.std_dev < 1e-3, "{}", mc.std_dev);
}

#[test]
fn reconstruction_is_physical_under_heavy_noise() {
    let cfg = QptConfig {
        mu: 0.32,
        trials: 2_000,
        noise_rate: 0.02,
        seed: 8,
    };
    for seed in 0..5 {
        let counts = simulate_counts(&channel(), &QptConfig { seed, ..cfg }).unwrap();
        let p = mle_reconstruct(&counts).unwrap().process;
        p.check_physical().unwrap();
        assert!(p.trace_preservation_error() < 1e-6);
    }
}

#[test]
fn estimator_error_scales_as_inverse_root_counts() {
    let mut truth = ProcessMatrix::identity();
    truth.chi[(0, 0)] = 0.85.into();
    truth.chi[(1, 1)] = 0.06.into();
    truth.chi[(2, 2)] = 0.05.into();
    truth.chi[(3, 3)] = 0.04.into();
    let f_true = process_fidelity(&truth, &ProcessMatrix::identity()).unwrap();
    let sizes = [1_000u64, 10_000, 100_000];
    let mut points = Vec::new();
    for &trials in &sizes {
        let mut sq = 0.0;
        let seeds = 40;
        for seed in 0..seeds {
            let cfg = QptConfig {
                mu: 1.0,
                trials,
                noise_rate: 0.0,
                seed,
            };
            let rec = mle_reconstruct(&simulate_process_counts(&truth, &cfg).unwrap()).unwrap();
            let f = process_fidelity(&rec.process, &ProcessMatrix::identity()).unwrap();
            sq += (f - f_true).powi(2);
        }
        points.push(((trials as f64).ln(), (sq / seeds as f64).sqrt().ln()));
    }
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let slope = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>()
        / points.iter().map(|p| (p.0 - mx).powi(2)).sum::<f64>();
    assert!((slope + 0.5).abs() <= 0.1, "slope {slope}");
}

#[test]
fn classical_bound_is_monotone() {
    let mus = [0.01, 0.05, 0.1, 0.2, 0.32, 0.5, 1.0, 2.0];
    let etas = [1.0, 0.5, 0.2, 0.1, 0.07, 0.03, 0.01, 0.001];
    for &eta in &etas {
        let row: Vec<f64> = mus.iter().map(|&mu| classical_bound(mu, eta).unwrap()).collect();
        assert!(row.windows(2).all(|w| w[1] >= w[0] - 1e-12), "eta {eta}: {row:?}");
    }
    for &mu in &mus {
        let col: Vec<f64> = etas.iter().map(|&eta| classical_bound(mu, eta).unwrap()).collect();
        assert!(col.windows(2).all(|w| w[1] >= w[0] - 1e-12), "mu {mu}: {col:?}");
    }
}
