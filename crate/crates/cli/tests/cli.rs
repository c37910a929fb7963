use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use platoon_core::config::{chain_noise_covariance, matrix_rows, RunConfig};
use platoon_core::sim::AnalyticRates;
use platoon_core::synthesis::{synthesize_steady, GainsDocument};

fn platoon(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_platoon")).args(args).output().expect("binary runs")
}

fn write_config(dir: &Path, name: &str, cfg: &RunConfig) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, cfg.to_json_pretty().unwrap()).unwrap();
    path
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn repo_config(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

#[test]
fn printed_default_config_is_the_shipped_file() {
    for (flag, file) in [(None, "default.json"), (Some("--fig2"), "fig2.json")] {
        let mut args = vec!["default-config"];
        args.extend(flag);
        let out = platoon(&args);
        assert!(out.status.success());
        let printed = RunConfig::from_json_str(&String::from_utf8(out.stdout).unwrap()).unwrap();
        assert_eq!(printed, RunConfig::load(&repo_config(file)).unwrap());
    }
}

#[test]
fn synthesize_writes_gains_matching_the_library() {
    let dir = tempfile::tempdir().unwrap();
    let gains_path = dir.path().join("gains.json");
    let out = platoon(&["synthesize", "--config", s(&repo_config("default.json")), "--out", s(&gains_path)]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(String::from_utf8_lossy(&out.stdout).contains("free gain entries: 17"));
    let doc: GainsDocument = serde_json::from_str(&std::fs::read_to_string(&gains_path).unwrap()).unwrap();
    assert_eq!(doc.index_set.len(), 17);
    let cli = doc.into_gains().unwrap();

    let cfg = RunConfig::load(&repo_config("default.json")).unwrap();
    let problem = cfg.build().unwrap();
    let (lib, _) = synthesize_steady(&problem.model, &problem.cost, cfg.synthesis.options()).unwrap();
    assert_eq!(cli.f, lib.f);
    assert_eq!(cli.m, lib.m);
    assert_eq!(AnalyticRates::from_gains(&cli), AnalyticRates::from_gains(&lib));
}

#[test]
fn decoupled_config_reduces_to_centralized_gains() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = RunConfig::default_platoon();
    cfg.model.decouple = true;
    let path = write_config(dir.path(), "decoupled.json", &cfg);
    let gains_path = dir.path().join("gains.json");
    let out = platoon(&["synthesize", "--config", s(&path), "--out", s(&gains_path)]);
    assert!(out.status.success(), "{}", stderr(&out));
    let doc: GainsDocument = serde_json::from_str(&std::fs::read_to_string(&gains_path).unwrap()).unwrap();
    let g = doc.into_gains().unwrap();
    assert!((&g.f - &g.l).amax() <= 1e-9);
    assert!(g.delay_penalty_rate.abs() <= 1e-12);

    let report_path = dir.path().join("report.json");
    let out = platoon(&["compare", "--config", s(&path), "--analytic-only", "--out", s(&report_path)]);
    assert!(out.status.success());
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&report_path).unwrap()).unwrap();
    assert!(report["gaps"]["dist_vs_cent_pct"].as_f64().unwrap().abs() <= 1e-9);
}

#[test]
fn invalid_configs_exit_with_config_code() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = RunConfig::default_platoon();
    cfg.cost.lead.w_u = 0.0;
    let path = write_config(dir.path(), "zero_weight.json", &cfg);
    let out = platoon(&["synthesize", "--config", s(&path)]);
    assert_eq!(out.status.code(), Some(2), "{}", stderr(&out));

    let broken = dir.path().join("broken.json");
    std::fs::write(&broken, "{\n  \"model\": {},\n  \"extra\": 1\n}").unwrap();
    let out = platoon(&["synthesize", "--config", s(&broken)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("line"), "{}", stderr(&out));
}

#[test]
fn unsupported_chain_exits_with_synthesis_code() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = RunConfig::default_platoon();
    cfg.model.vehicles.push(cfg.model.vehicles[2].clone());
    let follower = cfg.cost.followers[1];
    cfg.cost.followers.push(follower);
    cfg.model.noise_covariance = matrix_rows(&chain_noise_covariance(4, 4e-4, 2.5e-5, 0.9, 0.2, 0.1));
    let path = write_config(dir.path(), "four.json", &cfg);
    let out = platoon(&["synthesize", "--config", s(&path)]);
    assert_eq!(out.status.code(), Some(3), "{}", stderr(&out));
}

#[test]
fn diverging_simulation_exits_with_instability_code() {
    let dir = tempfile::tempdir().unwrap();
    let gains_path = dir.path().join("gains.json");
    let out = platoon(&["synthesize", "--config", s(&repo_config("default.json")), "--out", s(&gains_path)]);
    assert!(out.status.success());
    let mut cfg = RunConfig::default_platoon();
    let a = cfg.build().unwrap().model.a * 3.0;
    cfg.model.a_override = Some(matrix_rows(&a));
    let path = write_config(dir.path(), "unstable.json", &cfg);
    let csv = dir.path().join("trace.csv");
    let out = platoon(&[
        "simulate", "--config", s(&path), "--gains", s(&gains_path), "--out", s(&csv), "--controller", "cent",
        "--horizon", "5000",
    ]);
    assert_eq!(out.status.code(), Some(4), "{}", stderr(&out));
}

#[test]
fn per_vehicle_and_monolithic_simulations_write_identical_csv() {
    let dir = tempfile::tempdir().unwrap();
    let config = repo_config("fig2.json");
    let mut files = Vec::new();
    for controller in ["dist", "dist-mp"] {
        let csv = dir.path().join(format!("{controller}.csv"));
        let out = platoon(&[
            "simulate", "--config", s(&config), "--controller", controller, "--seed", "5", "--horizon", "300", "--out",
            s(&csv),
        ]);
        assert!(out.status.success(), "{}", stderr(&out));
        files.push(std::fs::read(&csv).unwrap());
        let summary: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(csv.with_extension("summary.json")).unwrap()).unwrap();
        assert_eq!(summary["steps"], 300);
        assert_eq!(summary["input_energy"].as_array().unwrap().len(), 3);
    }
    assert_eq!(files[0], files[1]);
}

#[test]
fn validate_passes_is_deterministic_and_catches_sign_flip() {
    let dir = tempfile::tempdir().unwrap();
    let mut reports = Vec::new();
    for i in 0..2 {
        let path = dir.path().join(format!("report{i}.json"));
        let out = platoon(&["validate", "--seed", "3", "--out", s(&path)]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stdout));
        reports.push(std::fs::read_to_string(&path).unwrap());
    }
    assert_eq!(reports[0], reports[1]);
    let out = platoon(&["validate", "--seed", "3", "--flip-l-sign"]);
    assert_eq!(out.status.code(), Some(5));
    assert!(String::from_utf8_lossy(&out.stdout).contains("FAIL oracle-steady-gains"));
}
