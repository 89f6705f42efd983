use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tokenomics")).args(args).output().unwrap()
}

fn scenarios() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios")
}

fn baseline() -> String {
    scenarios().join("baseline.json").to_str().unwrap().to_string()
}

fn tmp(name: &str) -> PathBuf {
    let d = std::env::temp_dir().join(format!("tokenomics-cli-{}-{name}", std::process::id()));
    let _ = std::fs::remove_dir_all(&d);
    std::fs::create_dir_all(&d).unwrap();
    d
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn write_json(dir: &Path, name: &str, value: &serde_json::Value) -> String {
    let p = dir.join(name);
    std::fs::write(&p, serde_json::to_string_pretty(value).unwrap()).unwrap();
    p.to_str().unwrap().to_string()
}

fn baseline_doc() -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(baseline()).unwrap()).unwrap()
}

#[test]
fn validate_accepts_shipped_scenarios() {
    for name in ["baseline.json", "inflationary.json", "two_groups.json"] {
        let o = bin(&["validate", "--scenario", scenarios().join(name).to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(0), "{name}: {}", stderr(&o));
        assert!(stdout(&o).contains("PASS") || name == "inflationary.json");
    }
}

#[test]
fn validation_failure_names_the_level() {
    let o = bin(&["validate", "--scenario", &baseline(), "--set", "groups.0.ladder.levels.1.r=2.5"]);
    assert_eq!(o.status.code(), Some(3));
    let out = stdout(&o);
    assert!(out.contains("level 1: p=0.3 r=2.5"), "{out}");
    assert!(out.contains("FAIL at level(s) 1"), "{out}");
    assert!(stderr(&o).contains("error:"));

    let run = bin(&["run", "--scenario", &baseline(), "--set", "groups.0.ladder.levels.1.r=2.5", "--out", tmp("bad").to_str().unwrap()]);
    assert_eq!(run.status.code(), Some(3));
}

#[test]
fn parse_errors_exit_two_and_name_the_field() {
    let dir = tmp("parse");
    let mut doc = baseline_doc();
    doc["groups"][0].as_object_mut().unwrap().remove("q");
    let path = write_json(&dir, "missing_q.json", &doc);
    let o = bin(&["validate", "--scenario", &path]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("missing field `q`"), "{}", stderr(&o));
    assert!(stderr(&o).contains("groups[0]"), "{}", stderr(&o));

    let mut doc = baseline_doc();
    doc["colour"] = serde_json::json!("blue");
    let path = write_json(&dir, "unknown.json", &doc);
    assert_eq!(bin(&["validate", "--scenario", &path]).status.code(), Some(2));

    std::fs::write(dir.join("broken.json"), "{ not json").unwrap();
    assert_eq!(bin(&["validate", "--scenario", dir.join("broken.json").to_str().unwrap()]).status.code(), Some(2));
    assert_eq!(bin(&["validate", "--scenario", dir.join("absent.json").to_str().unwrap()]).status.code(), Some(2));
    assert_eq!(bin(&["validate", "--scenario", &baseline(), "--set", "groups.5.q=0.1"]).status.code(), Some(2));
    assert_eq!(bin(&["validate", "--scenario", &baseline(), "--set", "noequals"]).status.code(), Some(2));
    assert_eq!(bin(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(bin(&["--help"]).status.code(), Some(0));
}

#[test]
fn unwritable_output_is_a_runtime_failure() {
    let dir = tmp("ro");
    let file = dir.join("not_a_dir");
    std::fs::write(&file, "x").unwrap();
    let o = bin(&["run", "--scenario", &baseline(), "--set", "steps=2", "--out", file.join("sub").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(4), "{}", stderr(&o));
}

#[test]
fn zero_steps_writes_initial_state_only() {
    let out = tmp("zero");
    let o = bin(&["run", "--scenario", &baseline(), "--set", "steps=0", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let ts = std::fs::read_to_string(out.join("timeseries.csv")).unwrap();
    let rows: Vec<&str> = ts.lines().collect();
    assert_eq!(rows.len(), 2, "{ts}");
    assert!(rows[1].starts_with("0,0,"));
    let rewards = std::fs::read_to_string(out.join("rewards.csv")).unwrap();
    assert_eq!(rewards.lines().count(), 1, "{rewards}");
    let counts = std::fs::read_to_string(out.join("nft_counts.csv")).unwrap();
    assert!(counts.lines().skip(1).all(|l| l.starts_with("0,")));
}

#[test]
fn single_run_monte_carlo_matches_the_run() {
    let (run_dir, mc_dir) = (tmp("one-run"), tmp("one-mc"));
    let scenario = baseline();
    let common = ["--scenario", scenario.as_str(), "--set", "steps=30", "--seed", "5"];
    let o = bin(&[&["run"], &common[..], &["--out", run_dir.to_str().unwrap()]].concat());
    assert!(o.status.success(), "{}", stderr(&o));
    let o = bin(&[&["montecarlo"], &common[..], &["--runs", "1", "--out", mc_dir.to_str().unwrap()]].concat());
    assert!(o.status.success(), "{}", stderr(&o));

    let mut run = csv::Reader::from_path(run_dir.join("timeseries.csv")).unwrap();
    let mut mc = csv::Reader::from_path(mc_dir.join("mc_timeseries.csv")).unwrap();
    let run_h = run.headers().unwrap().clone();
    let mc_h = mc.headers().unwrap().clone();
    let runs: Vec<csv::StringRecord> = run.records().map(Result::unwrap).collect();
    let mcs: Vec<csv::StringRecord> = mc.records().map(Result::unwrap).collect();
    assert_eq!(runs.len(), mcs.len());
    let mut shared = 0;
    for (i, name) in run_h.iter().enumerate() {
        let Some(j) = mc_h.iter().position(|h| h == name) else { continue };
        shared += 1;
        for (a, b) in runs.iter().zip(&mcs) {
            assert_eq!(a[i], b[j], "column {name}");
        }
    }
    assert!(shared >= 8, "only {shared} shared columns");
    for se in mc_h.iter().filter(|h| h.ends_with("_se")) {
        let j = mc_h.iter().position(|h| h == se).unwrap();
        assert!(mcs.iter().all(|r| r[j].parse::<f64>().unwrap() == 0.0), "{se}");
    }
}

#[test]
fn runs_are_repeatable_and_seed_sensitive() {
    let dirs: Vec<PathBuf> = ["a", "b", "c"].iter().map(|n| tmp(&format!("rep-{n}"))).collect();
    for (dir, seed) in dirs.iter().zip(["3", "3", "4"]) {
        let o = bin(&["run", "--scenario", &baseline(), "--seed", seed, "--set", "steps=40", "--out", dir.to_str().unwrap()]);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    for f in ["timeseries.csv", "nft_counts.csv", "rewards.csv", "summary.json"] {
        assert_eq!(std::fs::read(dirs[0].join(f)).unwrap(), std::fs::read(dirs[1].join(f)).unwrap(), "{f}");
    }
    assert_ne!(std::fs::read(dirs[0].join("rewards.csv")).unwrap(), std::fs::read(dirs[2].join("rewards.csv")).unwrap());
}

#[test]
fn curves_write_files_and_reject_bad_grids() {
    let out = tmp("curves");
    for curve in ["fig1", "fig4"] {
        let o = bin(&["curves", "--curve", curve, "--out", out.to_str().unwrap()]);
        assert!(o.status.success(), "{}", stderr(&o));
        assert!(out.join(format!("{curve}.csv")).exists());
    }
    let fig1 = std::fs::read_to_string(out.join("fig1.csv")).unwrap();
    assert!(fig1.lines().any(|l| l.starts_with("5,1,1.25,1,0.25")), "{fig1}");

    let o = bin(&["curves", "--curve", "fig4", "--p", "0.5", "--inflation", "0.5,1,2"]);
    assert_eq!(stdout(&o).trim(), "p,I,max_r\n0.5,0.5,1.6\n0.5,1,1.333333333333333333\n0.5,2,1");
    assert_eq!(bin(&["curves", "--curve", "fig4", "--p", "1"]).status.code(), Some(3));
    assert_eq!(bin(&["curves", "--curve", "fig1", "--liquidity", "1"]).status.code(), Some(3));
    assert_eq!(bin(&["curves", "--curve", "fig4", "--p", "abc"]).status.code(), Some(2));
}
