use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

const SMALL: &str = r#"{"system": "system1", "K0": 6, "levels": 2, "n_starts": 4, "seed": 3}"#;

fn ggr(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ggr")).args(args).output().expect("spawn ggr")
}

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let p = dir.join("config.in.json");
    fs::write(&p, text).unwrap();
    p
}

fn run_ok(config: &Path, out: &Path, extra: &[&str]) {
    let mut args = vec!["--config", config.to_str().unwrap(), "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    let o = ggr(&args);
    assert!(o.status.success(), "ggr failed: {}", String::from_utf8_lossy(&o.stderr));
}

fn report(out: &Path) -> Vec<u8> {
    fs::read(out.join("report.json")).unwrap()
}

#[test]
fn same_seed_gives_identical_reports() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), SMALL);
    let (a, b, c) = (tmp.path().join("a"), tmp.path().join("b"), tmp.path().join("c"));
    run_ok(&cfg, &a, &[]);
    run_ok(&cfg, &b, &[]);
    run_ok(&cfg, &c, &["--threads", "3"]);
    assert_eq!(report(&a), report(&b));
    assert_eq!(report(&a), report(&c));
    for l in 0..=2 {
        let p = format!("level_{l}/plan.bin");
        assert_eq!(fs::read(a.join(&p)).unwrap(), fs::read(c.join(&p)).unwrap());
    }
}

#[test]
fn seed_flag_overrides_config() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), SMALL);
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    run_ok(&cfg, &a, &["--levels", "0"]);
    run_ok(&cfg, &b, &["--levels", "0", "--seed", "11"]);
    let ra: Value = serde_json::from_slice(&report(&a)).unwrap();
    let rb: Value = serde_json::from_slice(&report(&b)).unwrap();
    assert_eq!(ra["config"]["seed"], 3);
    assert_eq!(rb["config"]["seed"], 11);
}

#[test]
fn levels_zero_runs_multistart_only() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), SMALL);
    let out = tmp.path().join("out");
    run_ok(&cfg, &out, &["--levels", "0"]);
    let r: Value = serde_json::from_slice(&report(&out)).unwrap();
    let levels = r["levels"].as_array().unwrap();
    assert_eq!(levels.len(), 1);
    assert_eq!(levels[0]["K"], 6);
    assert_eq!(levels[0]["starts"].as_array().unwrap().len(), 4);
    assert!(levels[0]["err_s"].is_null());
    assert!(!out.join("level_1").exists());
}

#[test]
fn outputs_are_written() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), SMALL);
    let out = tmp.path().join("out");
    run_ok(&cfg, &out, &["--emit-maps", "--emit-traces"]);
    for f in ["config.json", "report.json", "timings.json", "levels.csv", "maps.csv", "trace.csv"] {
        assert!(out.join(f).is_file(), "{f} missing");
    }
    assert!(!out.join("slice.csv").exists());
    let r: Value = serde_json::from_slice(&report(&out)).unwrap();
    let ks: Vec<u64> = r["levels"].as_array().unwrap().iter().map(|l| l["K"].as_u64().unwrap()).collect();
    assert_eq!(ks, [6, 12, 24]);
    for l in r["levels"].as_array().unwrap() {
        for key in ["E", "err_e", "feas", "kkt"] {
            assert!(!l[key].is_null(), "{key}");
        }
    }
    let levels = fs::read_to_string(out.join("levels.csv")).unwrap();
    assert_eq!(levels.lines().count(), 4);
    let maps = fs::read_to_string(out.join("maps.csv")).unwrap();
    assert_eq!(maps.lines().count(), 1 + 2 * (6 + 12 + 24));
    let trace = fs::read_to_string(out.join("trace.csv")).unwrap();
    let header = trace.lines().next().unwrap();
    assert!(header.starts_with("level,sweep,E"));
    let t: Value = serde_json::from_slice(&fs::read(out.join("timings.json")).unwrap()).unwrap();
    assert_eq!(t["levels"].as_array().unwrap().len(), 3);
}

#[test]
fn two_dimensional_run_writes_slice() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(
        tmp.path(),
        r#"{"system": "system8", "K0": 8, "levels": 1, "n_starts": 2, "max_sweeps": 300}"#,
    );
    let out = tmp.path().join("out");
    run_ok(&cfg, &out, &["--emit-maps"]);
    let slice = fs::read_to_string(out.join("slice.csv")).unwrap();
    assert!(slice.lines().count() >= 2);
    let maps = fs::read_to_string(out.join("maps.csv")).unwrap();
    assert!(maps.lines().next().unwrap().contains("ty"));
}

#[test]
fn resume_after_lost_levels_matches_uninterrupted_run() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), SMALL);
    let (full, cut) = (tmp.path().join("full"), tmp.path().join("cut"));
    run_ok(&cfg, &full, &[]);
    run_ok(&cfg, &cut, &[]);
    // Interrupted during level 1: level 2 never started, level 1 lacks its report.
    fs::remove_dir_all(cut.join("level_2")).unwrap();
    fs::remove_file(cut.join("level_1/report.json")).unwrap();
    fs::remove_file(cut.join("report.json")).unwrap();

    let o = ggr(&["--out", cut.to_str().unwrap(), "--resume"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(report(&full), report(&cut));
    let t: Value = serde_json::from_slice(&fs::read(cut.join("timings.json")).unwrap()).unwrap();
    assert_eq!(t["reused_levels"], 1);
}

#[test]
fn resume_can_extend_levels() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), SMALL);
    let (full, grown) = (tmp.path().join("full"), tmp.path().join("grown"));
    run_ok(&cfg, &full, &[]);
    run_ok(&cfg, &grown, &["--levels", "1"]);
    run_ok(&cfg, &grown, &["--resume"]);
    assert_eq!(report(&full), report(&grown));
}

#[test]
fn resume_rejects_a_different_config() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), SMALL);
    let out = tmp.path().join("out");
    run_ok(&cfg, &out, &["--levels", "0"]);
    let o = ggr(&["--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "--resume", "--seed", "9"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn refuses_nonempty_output_without_resume() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), SMALL);
    let out = tmp.path().join("out");
    fs::create_dir(&out).unwrap();
    fs::write(out.join("stray"), b"x").unwrap();
    let o = ggr(&["--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let err: Value = serde_json::from_slice(&o.stderr).unwrap();
    assert_eq!(err["issues"][0]["key"], "out");
}

#[test]
fn invalid_config_lists_every_key() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(
        tmp.path(),
        r#"{"system": "system9", "K0": 1, "n_starts": 0, "sigma": -1, "colour": "red",
            "overrides": {"beta": "big", "gamma": 1}, "level_overrides": [{}, {"eps_outer": 0}],
            "mesher": "delaunay"}"#,
    );
    let out = tmp.path().join("out");
    let o = ggr(&["--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let err: Value = serde_json::from_slice(&o.stderr).unwrap();
    assert_eq!(err["error"], "config");
    let mut keys: Vec<String> = err["issues"]
        .as_array()
        .unwrap()
        .iter()
        .map(|i| i["key"].as_str().unwrap().to_string())
        .collect();
    keys.sort();
    let mut want = vec![
        "system",
        "K0",
        "n_starts",
        "sigma",
        "colour",
        "overrides.beta",
        "overrides.gamma",
        "level_overrides[1].eps_outer",
        "mesher",
    ];
    want.sort();
    assert_eq!(keys, want);
}

#[test]
fn expression_density_runs() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(
        tmp.path(),
        r#"{"system": {"expression": "1 + 0.5*cos(pi*x)", "domain": [-1, 1], "electrons": 3},
            "K0": 6, "levels": 1, "n_starts": 2}"#,
    );
    let out = tmp.path().join("out");
    run_ok(&cfg, &out, &[]);
    let r: Value = serde_json::from_slice(&report(&out)).unwrap();
    assert_eq!(r["levels"][1]["K"], 12);
    assert!(r["levels"][1]["E"].as_f64().unwrap().is_finite());
}

#[test]
fn missing_config_is_an_error() {
    let tmp = TempDir::new().unwrap();
    let o = ggr(&["--out", tmp.path().join("x").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let o = ggr(&["--config", "/nonexistent/config.json", "--out", "x"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn bundled_configs_parse() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("configs");
    let mut n = 0;
    for entry in fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        let text = fs::read_to_string(&path).unwrap();
        ggr::RunConfig::from_json_str(&text).unwrap_or_else(|e| panic!("{}: {e:?}", path.display()));
        n += 1;
    }
    assert!(n >= 9);
}
