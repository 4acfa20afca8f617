use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use lvtariff_cli::{run_pipeline, Layout, Manifest, PipelineConfig, PipelineError, Stage, StageStatus};

fn small(out: &Path) -> PipelineConfig {
    let mut cfg = PipelineConfig {
        out: out.to_path_buf(),
        tariffs: vec!["Flat".into(), "FlatD".into(), "ToU".into()],
        seed: 11,
        ..PipelineConfig::default()
    };
    cfg.fixture.customers = 6;
    cfg.fixture.days = 45;
    cfg.pool.days = 2;
    cfg.study.pv_levels = vec![0.0, 50.0];
    cfg.study.batt_levels = vec![40.0];
    cfg.study.runs = 2;
    cfg
}

/// Relative path to contents of every file under `dir` except the manifest.
fn snapshot(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut pending = vec![dir.to_path_buf()];
    while let Some(d) = pending.pop() {
        for e in fs::read_dir(&d).unwrap().flatten() {
            let p = e.path();
            if p.is_dir() {
                pending.push(p);
            } else if p.file_name().unwrap() != "manifest.json" {
                out.insert(p.strip_prefix(dir).unwrap().to_path_buf(), fs::read(&p).unwrap());
            }
        }
    }
    out
}

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_lvtariff"))
}

#[test]
fn synth_alone_writes_pool_and_models_only() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small(dir.path());
    cfg.fixture.customers = 10;
    cfg.stages = vec![Stage::Synth];
    let m = run_pipeline(&cfg).unwrap();
    let files: Vec<PathBuf> = snapshot(dir.path()).into_keys().collect();
    let expected: Vec<PathBuf> = ["synth/households.json", "synth/models.json", "synth/pool.csv"]
        .iter()
        .map(PathBuf::from)
        .collect();
    assert_eq!(files, expected);
    assert!(m.complete);
    assert_eq!(m.stages.len(), 1);
    let pool = fs::read_to_string(dir.path().join("synth/pool.csv")).unwrap();
    assert!(pool.starts_with("customer_id,day,slot,demand_kw,pv_kw,hw_draw_l\n"));
    assert_eq!(pool.lines().count(), 1 + 30 * 2 * 48);
}

#[test]
fn full_runs_are_reproducible_and_stages_can_be_rerun() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let ma = run_pipeline(&small(a.path())).unwrap();
    let mb = run_pipeline(&small(b.path())).unwrap();
    assert!(ma.complete && mb.complete);
    let (sa, sb) = (snapshot(a.path()), snapshot(b.path()));
    assert_eq!(sa.keys().collect::<Vec<_>>(), sb.keys().collect::<Vec<_>>());
    for (k, v) in &sa {
        assert!(v == &sb[k], "{} differs between runs", k.display());
    }
    assert_eq!(ma.config_sha256, mb.config_sha256);
    for r in &ma.stages {
        assert_eq!(r.outputs, mb.record(r.stage).unwrap().outputs);
    }

    // Later stages rerun from the cached files reproduce the full run.
    let mut again = small(a.path());
    again.stages = vec![Stage::Bill, Stage::Study, Stage::Report];
    run_pipeline(&again).unwrap();
    assert_eq!(snapshot(a.path()), sa);
    let m = Manifest::load(&Layout::new(a.path())).unwrap();
    assert!(m.complete);
    assert_eq!(m.stages.len(), 6);
}

#[test]
fn der_never_raises_annual_cost() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small(dir.path());
    cfg.stages = vec![Stage::Synth, Stage::Optimize, Stage::Bill, Stage::Report];
    run_pipeline(&cfg).unwrap();
    let mut r = csv::Reader::from_path(dir.path().join("report/annual_costs.csv")).unwrap();
    let mut rows = 0;
    for rec in r.records() {
        let rec = rec.unwrap();
        let cost = |i: usize| rec[i].parse::<f64>().unwrap();
        assert!(cost(4) <= cost(2) + 1e-6, "{rec:?}");
        assert!(cost(3) <= cost(2) + 1e-6, "{rec:?}");
        rows += 1;
    }
    assert_eq!(rows, 3 * 30);
    let clip = fs::read_to_string(dir.path().join("report/peak_clipping.csv")).unwrap();
    assert!(clip.lines().skip(1).all(|l| l.starts_with("Flat,FlatD,")));
    assert_eq!(clip.lines().count(), 1 + 3 * 30 * 2);
}

#[test]
fn missing_inputs_fail_the_stage_and_mark_the_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small(dir.path());
    cfg.stages = vec![Stage::Optimize, Stage::Bill];
    let err = run_pipeline(&cfg).unwrap_err();
    assert!(matches!(err, PipelineError::Data { stage: Stage::Optimize, .. }));
    assert_eq!(err.exit_code(), 3);
    let m = Manifest::load(&Layout::new(dir.path())).unwrap();
    assert!(!m.complete);
    let r = m.record(Stage::Optimize).unwrap();
    assert_eq!(r.status, StageStatus::Failed);
    assert!(r.error.as_deref().unwrap().contains("households.json"));
    assert!(m.record(Stage::Bill).is_none());
}

#[test]
fn config_errors_are_reported_before_any_stage() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small(dir.path());
    cfg.tariffs.push("Weekend".into());
    assert!(matches!(run_pipeline(&cfg), Err(PipelineError::Config(_))));
    let mut cfg = small(dir.path());
    cfg.study.runs = 0;
    assert_eq!(run_pipeline(&cfg).unwrap_err().exit_code(), 2);
    assert!(!dir.path().join("manifest.json").exists());
}

#[test]
fn binary_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("cfg.json");
    fs::write(&cfg_path, r#"{"tariffs": ["Flat"], "unknown_key": 1}"#).unwrap();
    let out = bin().arg("--config").arg(&cfg_path).arg("synth").output().unwrap();
    assert_eq!(out.status.code(), Some(2));

    let out = bin()
        .args(["--out"])
        .arg(dir.path().join("empty"))
        .arg("bill")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("bill stage"));

    let bad_net = dir.path().join("net.json");
    fs::write(
        &bad_net,
        r#"{"nodes": [0, 1], "edges": [{"from": 0, "to": 5, "r": [[1,0,0],[0,1,0],[0,0,1]], "x": [[0,0,0],[0,0,0],[0,0,0]]}],
            "customers": [], "head_rating_a": 100, "v0_pu": 1.0}"#,
    )
    .unwrap();
    fs::write(&cfg_path, r#"{"network": "net.json"}"#).unwrap();
    let out = bin()
        .arg("--config")
        .arg(&cfg_path)
        .arg("--out")
        .arg(dir.path().join("pf"))
        .arg("powerflow")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(5), "{}", String::from_utf8_lossy(&out.stderr));

    let out = bin().args(["--stages", "synth", "report"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}
