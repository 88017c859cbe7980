use std::fs;
use std::path::{Path, PathBuf};

use remsim_cli::config::RunConfig;
use remsim_cli::main_with_args;
use remsim_core::material::MaterialConfig;
use serde_json::Value;

fn default_config() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../config/default")
}

fn remsim(out: &Path, args: &[&str]) -> i32 {
    let mut v = vec!["remsim".to_string(), "--out".into(), out.display().to_string()];
    v.extend(args.iter().map(|s| s.to_string()));
    main_with_args(v)
}

fn run_dirs(out: &Path) -> Vec<String> {
    let mut v: Vec<String> = match fs::read_dir(out) {
        Ok(rd) => rd.map(|e| e.unwrap().file_name().into_string().unwrap()).collect(),
        Err(_) => Vec::new(),
    };
    v.sort();
    v
}

fn manifest(dir: &Path) -> Value {
    serde_json::from_slice(&fs::read(dir.join("manifest.json")).unwrap()).unwrap()
}

#[test]
fn shipped_material_is_the_default_material() {
    let text = fs::read_to_string(default_config().join("material.json")).unwrap();
    assert_eq!(MaterialConfig::from_json(&text).unwrap(), MaterialConfig::default());
    let pipeline: RunConfig =
        serde_json::from_slice(&fs::read(default_config().join("pipeline.json")).unwrap()).unwrap();
    assert_eq!(
        pipeline,
        RunConfig {
            seed: 2024,
            ..RunConfig::default()
        }
    );
}

#[test]
fn efficiency_run_writes_manifest_with_digests() {
    let tmp = tempfile::tempdir().unwrap();
    let code = remsim(
        tmp.path(),
        &["afc", "efficiency", "--model", "square", "--d", "3.6", "--finesse", "3"],
    );
    assert_eq!(code, 0);
    let dir = tmp.path().join("afc-efficiency-001");
    let m = manifest(&dir);
    assert_eq!(m["command"], "afc-efficiency");
    assert_eq!(m["parameters"]["command"]["order"], 1);
    let out = &m["outputs"][0];
    assert_eq!(out["file"], "efficiency.json");
    let bytes = fs::read(dir.join("efficiency.json")).unwrap();
    assert_eq!(out["sha256"], remsim_cli::config::sha256_hex(&bytes));
    let v: Value = serde_json::from_slice(&bytes).unwrap();
    assert!((v["efficiency"].as_f64().unwrap() - 0.2966).abs() < 1e-4, "{v}");
}

#[test]
fn run_directories_count_up() {
    let tmp = tempfile::tempdir().unwrap();
    for _ in 0..3 {
        assert_eq!(
            remsim(tmp.path(), &["qpt", "bound", "--mu", "0.32", "--eta", "0.07"]),
            0
        );
    }
    assert_eq!(
        run_dirs(tmp.path()),
        ["qpt-bound-001", "qpt-bound-002", "qpt-bound-003"]
    );
}

#[test]
fn usage_errors_exit_one() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(remsim(tmp.path(), &["afc", "efficiency", "--bogus"]), 1);
    assert_eq!(remsim(tmp.path(), &["stark", "split"]), 1);
    assert_eq!(remsim(tmp.path(), &["--help"]), 0);
    assert_eq!(run_dirs(tmp.path()), Vec::<String>::new());
}

#[test]
fn malformed_config_exits_two() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("bad.json");
    fs::write(&cfg, "{\"seed\": 1,").unwrap();
    let out = tmp.path().join("runs");
    assert_eq!(remsim(&out, &["--config", cfg.to_str().unwrap(), "prepare"]), 2);
    fs::write(&cfg, "{\"gate\": {}}").unwrap();
    assert_eq!(remsim(&out, &["--config", cfg.to_str().unwrap(), "prepare"]), 2);
    let missing = tmp.path().join("nowhere.json");
    assert_eq!(remsim(&out, &["--config", missing.to_str().unwrap(), "prepare"]), 2);
    assert!(run_dirs(&out).is_empty());
}

#[test]
fn invalid_material_exits_three_without_a_run_dir() {
    let tmp = tempfile::tempdir().unwrap();
    let mut m: Value = serde_json::from_str(&MaterialConfig::default().to_json()).unwrap();
    m["branching"][0] = serde_json::json!([0.9, 0.9, 0.9]);
    let dir = tmp.path().join("cfg");
    fs::create_dir(&dir).unwrap();
    fs::write(dir.join("material.json"), m.to_string()).unwrap();
    let out = tmp.path().join("runs");
    assert_eq!(remsim(&out, &["--config", dir.to_str().unwrap(), "prepare"]), 3);
    assert!(run_dirs(&out).is_empty());
    assert_eq!(remsim(&out, &["afc", "efficiency", "--d=-1", "--finesse", "3"]), 3);
    assert!(run_dirs(&out).is_empty());
}

#[test]
fn tomography_round_trip_through_files() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path();
    assert_eq!(
        remsim(
            out,
            &["--seed", "3", "qpt", "simulate", "--trials", "20000", "--snr", "0"]
        ),
        0
    );
    let counts = out.join("qpt-simulate-001/counts.json");
    assert!(counts.exists());
    assert_eq!(
        remsim(
            out,
            &[
                "qpt",
                "reconstruct",
                "--counts",
                counts.to_str().unwrap(),
                "--resamples",
                "100"
            ]
        ),
        0
    );
    let dir = out.join("qpt-reconstruct-001");
    let rec: Value = serde_json::from_slice(&fs::read(dir.join("reconstruction.json")).unwrap()).unwrap();
    let f = rec["fidelity"].as_f64().unwrap();
    assert!(f > 0.99, "{rec}");
    let inputs = manifest(&dir)["inputs"].as_array().unwrap().clone();
    assert!(inputs
        .iter()
        .any(|i| i["path"].as_str().unwrap().ends_with("counts.json")));
    assert!(dir.join("chi.csv").exists());
}

#[test]
fn same_seed_same_bytes() {
    let tmp = tempfile::tempdir().unwrap();
    let args = ["--seed", "9", "--format", "json", "qpt", "simulate", "--trials", "5000"];
    assert_eq!(remsim(tmp.path(), &args), 0);
    assert_eq!(remsim(tmp.path(), &args), 0);
    let a = fs::read(tmp.path().join("qpt-simulate-001/counts.json")).unwrap();
    let b = fs::read(tmp.path().join("qpt-simulate-002/counts.json")).unwrap();
    assert_eq!(a, b);
    let args = [
        "--seed", "10", "--format", "json", "qpt", "simulate", "--trials", "5000",
    ];
    assert_eq!(remsim(tmp.path(), &args), 0);
    assert_ne!(a, fs::read(tmp.path().join("qpt-simulate-003/counts.json")).unwrap());
}

#[test]
fn plot_renders_stored_tables() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path();
    let data = Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures/echo_orders_h.csv");
    assert_eq!(
        remsim(
            out,
            &["--plot", "afc", "fit", "--data", data.to_str().unwrap(), "--d", "3.6"]
        ),
        0
    );
    assert_eq!(
        remsim(out, &["plot", data.to_str().unwrap(), "--kind", "efficiency"]),
        0
    );
    let dir = out.join("plot-001");
    let svg = fs::read_to_string(
        fs::read_dir(&dir)
            .unwrap()
            .map(|e| e.unwrap().path())
            .find(|p| p.extension().is_some_and(|e| e == "svg"))
            .unwrap(),
    )
    .unwrap();
    assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
    let bad = out.join("nope.csv");
    fs::write(&bad, "a,b\n1,x\n").unwrap();
    assert_ne!(remsim(out, &["plot", bad.to_str().unwrap()]), 0);
}
