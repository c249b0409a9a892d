use std::path::Path;
use std::process::{Command, Output};

fn cpsseq(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cpsseq")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

const OBSERVATION: &str = r#"class = "key"
[channels]
cut_depth_1 = 4.2
cut_depth_2 = 6.1
cut_depth_3 = 3.3
cut_depth_4 = 7.0
cut_depth_5 = 5.5
wear_index = 0.3
material_score = 0.6
"#;

#[test]
fn classify_transcript_names_a_key() {
    let dir = tempfile::tempdir().unwrap();
    let answers = dir.path().join("answers.txt");
    std::fs::write(&answers, cpsseq::config::KEY_TRANSCRIPT).unwrap();
    let o = cpsseq(&["classify", path(&answers)]);
    assert!(o.status.success());
    let out = stdout(&o);
    assert_eq!(out.lines().next(), Some("key"));
    assert_eq!(out.lines().count(), 6);
}

#[test]
fn unreachable_confidence_is_a_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    let answers = dir.path().join("answers.txt");
    std::fs::write(&answers, cpsseq::config::KEY_TRANSCRIPT).unwrap();
    let o = cpsseq(&["classify", path(&answers), "--min-confidence", "0.99"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn missing_scenario_exits_one() {
    let o = cpsseq(&["run", "/no/such/scenario.toml"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("error"));
}

#[test]
fn unknown_subcommand_exits_one() {
    assert_eq!(cpsseq(&["frobnicate"]).status.code(), Some(1));
}

#[test]
fn help_exits_zero() {
    assert!(cpsseq(&["--help"]).status.success());
}

#[test]
fn run_then_report_reproduces_the_text() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let run = cpsseq(&["run", "tenant-keys", "--out", path(&out)]);
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    assert!(out.join("summary.json").exists());
    let report = cpsseq(&["report", path(&out)]);
    assert!(report.status.success());
    assert_eq!(stdout(&run), stdout(&report));
}

#[test]
fn run_is_deterministic_per_seed() {
    let a = cpsseq(&["run", "tenant-keys", "--seed", "3"]);
    let b = cpsseq(&["run", "tenant-keys", "--seed", "3"]);
    let c = cpsseq(&["run", "tenant-keys", "--seed", "4"]);
    assert_eq!(stdout(&a), stdout(&b));
    assert_ne!(stdout(&a), stdout(&c));
}

#[test]
fn attack_without_hashpower_fails() {
    let o = cpsseq(&["ledger", "attack", "--fraction", "0.0", "--rounds", "500"]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("success=false"), "{}", stdout(&o));
}

#[test]
fn attack_fraction_out_of_range_is_rejected() {
    let o = cpsseq(&["ledger", "attack", "--fraction", "1.5"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn adapt_prints_both_policies() {
    let dir = tempfile::tempdir().unwrap();
    let qod = dir.path().join("qod.toml");
    std::fs::write(&qod, "wear_index = 0.03\nusage_rate = 0.12\n").unwrap();
    let o = cpsseq(&["proxy", "adapt", "--class", "key", "--qod", path(&qod)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let out = stdout(&o);
    assert!(out.contains("input"));
    assert!(out.contains("adapted"));
    assert_eq!(out.matches("certified").count(), 2);
}

#[test]
fn minting_twice_resolves_the_same_identity() {
    let dir = tempfile::tempdir().unwrap();
    let obs = dir.path().join("obs.toml");
    let reg = dir.path().join("registry.json");
    std::fs::write(&obs, OBSERVATION).unwrap();
    let first = cpsseq(&["mint", path(&obs), "--registry", path(&reg)]);
    assert!(first.status.success(), "{}", String::from_utf8_lossy(&first.stderr));
    let first = stdout(&first);
    let id = first.lines().next().unwrap().strip_prefix("minted ").unwrap().to_string();
    let second = stdout(&cpsseq(&["mint", path(&obs), "--registry", path(&reg)]));
    assert_eq!(second.lines().next().unwrap(), format!("resolved {id}"));
}
