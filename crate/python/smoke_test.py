"""Smoke test of the remsim Python module. Run after installing the wheel:

    maturin build -m crates/py/Cargo.toml -o dist && pip install dist/remsim-*.whl
    python python/smoke_test.py
"""

import json
import math
import sys
import tempfile

import remsim


def close(x, want, tol, what):
    if abs(x - want) > tol:
        raise AssertionError(f"{what}: {x} vs {want} +/- {tol}")
    print(f"ok  {what:<34} {x:.4f}")


def main():
    close(remsim.square_efficiency(3.6, 3.0), 0.296, 0.005, "square comb eta1")
    close(remsim.gaussian_efficiency(3.85, 3.0, 1), 0.216, 0.002, "gaussian comb eta1")
    close(remsim.classical_bound(0.32, 0.070), 0.7601, 1e-3, "classical bound")

    natural = remsim.Ensemble()
    _, enhanced = natural.prepare_enhanced()
    report = enhanced.enhanced_report("H")
    close(report["width_mhz"], 12.68, 0.1, "enhanced band width")
    assert 2.0 <= report["enhancement"] <= 3.0, report
    classes = enhanced.class_membership(natural, "H")
    print(f"ok  class lists                        full {classes['full_band']}")

    comb = remsim.render_comb(2.0, 3.0, 3.6, 60.0, shape="square")
    pulse = remsim.Pulse()
    trace = remsim.propagate(pulse, comb)
    close(trace.efficiency(1) / remsim.square_efficiency(3.6, 3.0), 1.0, 0.05, "time domain vs closed form")
    close(trace.centroid_ns(1) - pulse.center_ns, 500.0, 5.0, "echo delay ns")

    v = remsim.voltage_for_phase(math.pi / 2)
    gauss = remsim.render_comb(2.0, 6.0, 3.85, 60.0)
    gated = remsim.smafc_run(pulse, gauss, v)
    close(gated.efficiency(2), remsim.gaussian_efficiency(3.85, 6.0, 2), 2e-3, "gated recall eta2")

    fields = [25.0 * i for i in range(8)]
    fit = remsim.fit_stark(fields + fields, [5.69 * e for e in fields] + [-5.69 * e for e in fields], [0] * 8 + [1] * 8)
    close(fit["groups"][0]["slope"], 5.69, 1e-9, "stark slope")

    counts = remsim.simulate_counts(0.070, 0.076, trials=100_000, seed=4)
    again = remsim.Counts.from_json(counts.to_json())
    assert again.total() == counts.total() and len(again) == 18
    chi = remsim.mle_reconstruct(counts)
    close(chi.fidelity(), 0.9997, 5e-4, "diattenuation fidelity")
    mean, std = remsim.monte_carlo_error(counts, 100, 1)
    assert 0.0 < std < 0.01, std

    try:
        remsim.gaussian_efficiency(-1.0, 3.0, 1)
    except remsim.RemsimError:
        print("ok  invalid input raises RemsimError")
    else:
        raise AssertionError("negative depth accepted")

    with tempfile.TemporaryDirectory() as out:
        code = remsim.cli(["--out", out, "qpt", "bound", "--mu", "0.32", "--eta", "0.07"])
        assert code == 0, code
        with open(f"{out}/qpt-bound-001/bound.json") as f:
            close(json.load(f)["classical_bound"], 0.7601, 1e-3, "cli bound.json")
    print("all smoke checks passed")
    return 0


if __name__ == "__main__":
    sys.exit(main())
