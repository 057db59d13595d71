use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("data")
        .join(name)
}

fn phmm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_phmm"))
        .args(args)
        .output()
        .unwrap()
}

fn ok(args: &[&str]) {
    let out = phmm(args);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn rows(path: &Path) -> Vec<Vec<String>> {
    csv::Reader::from_path(path)
        .unwrap()
        .records()
        .map(|r| r.unwrap().iter().map(str::to_string).collect())
        .collect()
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn simulate_writes_one_row_per_step_and_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        ok(&[
            "simulate",
            "--model",
            s(&data("scenario1.json")),
            "--out",
            s(out),
            "--seed",
            "1",
            "--n-cycles",
            "1000",
        ]);
    }
    assert_eq!(rows(&a.join("simulated.csv")).len(), 24_000);
    assert_eq!(
        std::fs::read(a.join("simulated.csv")).unwrap(),
        std::fs::read(b.join("simulated.csv")).unwrap()
    );
    assert!(a.join("model.json").exists());
}

#[test]
fn usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    let model = data("scenario1.json");
    let out = phmm(&[
        "simulate",
        "--model",
        s(&model),
        "--out",
        s(dir.path()),
        "--seed",
        "1",
        "--n-cycles",
        "0",
    ]);
    assert_eq!(out.status.code(), Some(2));
    let out = phmm(&[
        "simulate",
        "--model",
        s(&model),
        "--out",
        s(dir.path()),
        "--n-cycles",
        "3",
    ]);
    assert_eq!(out.status.code(), Some(2), "seed is mandatory");
    let out = phmm(&["bogus"]);
    assert!(!out.status.success());
}

#[test]
fn malformed_and_empty_data_are_parse_errors() {
    let dir = tempfile::tempdir().unwrap();
    let empty = dir.path().join("empty.csv");
    std::fs::write(&empty, "").unwrap();
    let out = phmm(&[
        "fit",
        "--model",
        s(&data("scenario1.json")),
        "--data",
        s(&empty),
        "--out",
        s(dir.path()),
    ]);
    assert_eq!(out.status.code(), Some(1));
    let bad = dir.path().join("bad.csv");
    std::fs::write(&bad, "id,phase,count\na,1,3\na,2,-4\n").unwrap();
    let out = phmm(&[
        "fit",
        "--model",
        s(&data("scenario1.json")),
        "--data",
        s(&bad),
        "--out",
        s(dir.path()),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 3"));
}

#[test]
fn simulate_then_fit_recovers_coefficients() {
    let dir = tempfile::tempdir().unwrap();
    let sim = dir.path().join("sim");
    let model = data("dwell_means.json");
    ok(&[
        "simulate",
        "--model",
        s(&model),
        "--out",
        s(&sim),
        "--seed",
        "11",
        "--n-cycles",
        "20",
        "--n-series",
        "15",
    ]);
    let fitted = dir.path().join("fit");
    ok(&[
        "fit",
        "--model",
        s(&model),
        "--data",
        s(&sim.join("simulated.csv")),
        "--out",
        s(&fitted),
    ]);
    let report = json(&fitted.join("fit.json"));
    assert_eq!(report["convergence"]["status"], "converged");
    let truth = [-1.2, 0.85, 0.15, -1.5, -0.7, -1.3];
    let params = report["parameters"].as_array().unwrap();
    let within = truth
        .iter()
        .zip(params)
        .filter(|(t, p)| {
            let est = p["estimate"].as_f64().unwrap();
            let se = p["std_error"].as_f64().unwrap();
            (est - *t).abs() <= 3.0 * se
        })
        .count();
    assert!(within >= 6, "{within} of 6");

    let homogeneous = dir.path().join("hfit");
    ok(&[
        "fit",
        "--model",
        s(&model),
        "--data",
        s(&sim.join("simulated.csv")),
        "--out",
        s(&homogeneous),
        "--homogeneous",
    ]);
    let summary = dir.path().join("hst");
    ok(&[
        "stationary",
        "--model",
        s(&homogeneous.join("fitted_model.json")),
        "--out",
        s(&summary),
    ]);
    let table = rows(&summary.join("stationary.csv"));
    for t in 0..24 {
        let delta: f64 = table[2 * t][2].parse().unwrap();
        let rho: f64 = table[48 + 2 * t][2].parse().unwrap();
        assert!((delta - rho).abs() < 1e-10);
    }

    let bands = dir.path().join("bands");
    ok(&[
        "dwell",
        "--model",
        s(&fitted.join("fitted_model.json")),
        "--fit",
        s(&fitted.join("fit.json")),
        "--seed",
        "2",
        "--n-draws",
        "200",
        "--out",
        s(&bands),
    ]);
    assert_eq!(rows(&bands.join("dwell_bands.csv")).len(), 48);
}

#[test]
fn scenario_2_stationary_contrast() {
    let dir = tempfile::tempdir().unwrap();
    ok(&[
        "stationary",
        "--model",
        s(&data("scenario2.json")),
        "--out",
        s(dir.path()),
        "--n-cycles",
        "1000",
        "--seed",
        "3",
    ]);
    let table = rows(&dir.path().join("stationary.csv"));
    let state1 = |kind: &str| -> Vec<f64> {
        table
            .iter()
            .filter(|r| r[1] == "1" && r[3] == kind)
            .map(|r| r[2].parse().unwrap())
            .collect()
    };
    let delta = state1("exact_delta");
    let rho = state1("hypothetical_rho");
    assert_eq!(delta.len(), 24);
    assert_eq!(state1("empirical").len(), 24);
    assert!(rho.iter().cloned().fold(f64::MIN, f64::max) > 0.9);
    assert!(rho.iter().cloned().fold(f64::MAX, f64::min) < 0.1);
    assert!(delta.iter().all(|d| (d - 0.5).abs() < 0.1));
}

#[test]
fn bare_link_files_are_accepted_for_summaries() {
    let dir = tempfile::tempdir().unwrap();
    let link = dir.path().join("link.json");
    let model = json(&data("multimodal_dwell.json"));
    std::fs::write(&link, model["link"].to_string()).unwrap();
    ok(&["dwell", "--model", s(&link), "--out", s(dir.path())]);
    let overall: Vec<f64> = rows(&dir.path().join("dwell_pmf.csv"))
        .iter()
        .filter(|r| r[0] == "2" && r[1].is_empty())
        .map(|r| r[3].parse().unwrap())
        .collect();
    assert!(
        overall.windows(2).any(|w| w[1] > w[0]),
        "overall pmf of state 2 should not be monotone"
    );
    let means = rows(&dir.path().join("dwell_means.csv"));
    assert_eq!(means.len(), 2 * 25);
}

#[test]
fn check_and_compare_with_thread_cap() {
    let dir = tempfile::tempdir().unwrap();
    let sim = dir.path().join("sim");
    let model = data("dwell_means.json");
    ok(&[
        "simulate",
        "--model",
        s(&model),
        "--out",
        s(&sim),
        "--seed",
        "5",
        "--n-cycles",
        "40",
        "--n-series",
        "3",
    ]);
    let csv = sim.join("simulated.csv");
    let run = |out: &Path, threads: &str| {
        let status = Command::new(env!("CARGO_BIN_EXE_phmm"))
            .env("PHMM_THREADS", threads)
            .args([
                "check",
                "--model",
                s(&model),
                "--data",
                s(&csv),
                "--seed",
                "9",
                "--n-seq",
                "100",
                "--out",
                s(out),
            ])
            .status()
            .unwrap();
        assert!(status.success());
    };
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    run(&a, "1");
    run(&b, "4");
    assert_eq!(
        std::fs::read(a.join("check.csv")).unwrap(),
        std::fs::read(b.join("check.csv")).unwrap()
    );
    let summary = json(&a.join("check.json"));
    assert_eq!(summary.as_array().unwrap().len(), 2);

    let cmp = dir.path().join("cmp");
    ok(&[
        "compare",
        "--model",
        s(&model),
        "--against",
        s(&data("scenario1.json")),
        "--data",
        s(&csv),
        "--seed",
        "9",
        "--n-seq",
        "100",
        "--out",
        s(&cmp),
    ]);
    let summary = json(&cmp.join("compare.json"));
    assert!(summary["total_tv_model"].as_f64().unwrap() >= 0.0);
    assert!(cmp.join("check_against.csv").exists());
}

#[test]
fn conditions_round_trip_through_simulate_and_fit() {
    let dir = tempfile::tempdir().unwrap();
    let sim = dir.path().join("sim");
    let model = data("two_conditions.json");
    ok(&[
        "simulate",
        "--model",
        s(&model),
        "--out",
        s(&sim),
        "--seed",
        "2",
        "--n-cycles",
        "20",
        "--n-series",
        "4",
    ]);
    let fitted = dir.path().join("fit");
    ok(&[
        "fit",
        "--model",
        s(&model),
        "--data",
        s(&sim.join("simulated.csv")),
        "--out",
        s(&fitted),
    ]);
    let out = dir.path().join("st");
    ok(&[
        "stationary",
        "--model",
        s(&fitted.join("fitted_model.json")),
        "--out",
        s(&out),
    ]);
    assert!(out.join("stationary_dark.csv").exists());
    assert!(out.join("stationary_light.csv").exists());
}
