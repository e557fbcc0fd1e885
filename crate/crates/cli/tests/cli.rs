use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use sublin_cli::{parse_config, run, Overrides, Params, RunReport};

const COIN: &str = r#"{"kind":"discrete","values":[-1,1],"probs":[0.5,0.5]}"#;

fn sublin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sublin")).args(args).output().expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn minimal_config_fills_defaults() {
    let text = format!(r#"{{"subcommand":"choquet","dist":{COIN}}}"#);
    let r = parse_config(Some(&text), &Overrides::default()).unwrap();
    assert_eq!(r.config.seed, 0);
    assert_eq!(r.config.threads, 1);
    match &r.params {
        Params::Choquet(p) => {
            assert!(p.transform.is_none());
            assert!(p.tol > 0.0);
        }
        other => panic!("unexpected params {other:?}"),
    }
    // The resolved config carries every default explicitly.
    assert!(r.config.params.get("tol").is_some());
}

#[test]
fn verify_defaults_resolve_from_bundle() {
    let r = parse_config(Some(r#"{"subcommand":"verify"}"#), &Overrides::default()).unwrap();
    match &r.params {
        Params::Verify(s) => assert_eq!(s.checks, (1..=10).collect::<Vec<_>>()),
        other => panic!("unexpected params {other:?}"),
    }
}

#[test]
fn bound_rejects_inadmissible_exponents() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.json", &format!(r#"{{"subcommand":"bound","dist":{COIN},"params":{{"r":1,"p":2}}}}"#));
    let o = sublin(&["--config", &cfg]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("p > 2∨r"), "{}", stderr(&o));
}

#[test]
fn duplicate_keys_are_rejected() {
    let text = format!(r#"{{"subcommand":"choquet","dist":{COIN},"params":{{"tol":1e-6,"tol":1e-7}}}}"#);
    let e = parse_config(Some(&text), &Overrides::default()).unwrap_err();
    assert!(e.to_string().contains("duplicate key `tol`"), "{e}");
}

#[test]
fn unknown_fields_are_rejected_with_path() {
    let text = format!(r#"{{"subcommand":"dp","dist":{COIN},"params":{{"n":2,"depth":3}}}}"#);
    let e = parse_config(Some(&text), &Overrides::default()).unwrap_err();
    assert!(e.to_string().contains("depth"), "{e}");
}

#[test]
fn missing_distribution_is_an_error() {
    let e = parse_config(Some(r#"{"subcommand":"choquet"}"#), &Overrides::default()).unwrap_err();
    assert!(e.to_string().contains("dist"), "{e}");
}

#[test]
fn dp_on_fair_coin_prints_known_value() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.json", r#"{"subcommand":"dp","params":{"n":2}}"#);
    let o = sublin(&["--config", &cfg, "--dist", COIN]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains("0.426777"), "{}", stdout(&o));
}

#[test]
fn unknown_subcommand_exits_one() {
    let o = sublin(&["frobnicate"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn help_exits_zero() {
    let o = sublin(&["--help"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("--tolerance"));
}

#[test]
fn verify_subset_passes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.json", r#"{"subcommand":"verify","params":{"checks":[1,3]}}"#);
    let out = dir.path().join("out");
    let o = sublin(&["--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}{}", stdout(&o), stderr(&o));
    let text = stdout(&o);
    assert_eq!(text.lines().filter(|l| l.starts_with("criterion") && l.contains("PASS")).count(), 2, "{text}");
    let verdicts = fs::read_to_string(out.join("verdicts.csv")).unwrap();
    assert_eq!(verdicts.lines().count(), 3);
}

#[test]
fn failed_verdict_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.json", r#"{"subcommand":"verify","params":{"checks":[2]}}"#);
    let o = sublin(&["--config", &cfg, "--tolerance", "dp.tol=-1"]);
    assert_eq!(o.status.code(), Some(2), "{}{}", stdout(&o), stderr(&o));
    assert!(stdout(&o).contains("FAIL"));
}

#[test]
fn tolerance_override_must_name_existing_key() {
    let ov = Overrides { tolerances: vec!["dp.tolerance=1".into()], ..Overrides::default() };
    assert!(parse_config(Some(r#"{"subcommand":"verify"}"#), &ov).is_err());
}

#[test]
fn report_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "c.json",
        &format!(r#"{{"subcommand":"simulate","seed":7,"dist":{COIN},"params":{{"n":32,"replications":500}}}}"#),
    );
    let reports: Vec<Value> = (0..2)
        .map(|i| {
            let out = dir.path().join(format!("out{i}"));
            let o = sublin(&["--config", &cfg, "--out", out.to_str().unwrap()]);
            assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
            serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap()
        })
        .collect();
    assert_eq!(reports[0]["config_hash"], reports[1]["config_hash"]);
    assert_eq!(reports[0]["results"], reports[1]["results"]);
    assert_eq!(reports[0]["schema_version"], 1);
    let hash = reports[0]["config_hash"].as_str().unwrap();
    assert_eq!(hash.len(), 64);
    assert!(hash.chars().all(|c| c.is_ascii_hexdigit()));
}

#[test]
fn thread_count_does_not_change_results() {
    let text = format!(r#"{{"subcommand":"simulate","seed":3,"dist":{COIN},"params":{{"n":64,"replications":2000}}}}"#);
    let results: Vec<Value> = [1usize, 4]
        .iter()
        .map(|&t| {
            let ov = Overrides { threads: Some(t), ..Overrides::default() };
            let r = parse_config(Some(&text), &ov).unwrap();
            run(&r).unwrap().report.results
        })
        .collect();
    assert_eq!(results[0], results[1]);
}

#[test]
fn module_errors_land_in_report() {
    // The exact programme needs discrete laws.
    let text = r#"{"subcommand":"dp","dist":{"kind":"normal","mean":0,"sd":1},"params":{"n":2}}"#;
    let r = parse_config(Some(text), &Overrides::default()).unwrap();
    let report: RunReport = run(&r).unwrap().report;
    assert!(report.error.is_some());
    assert_eq!(report.exit_code(), 1);
}
