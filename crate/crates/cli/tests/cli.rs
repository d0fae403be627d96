use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn recomed(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_recomed"))
        .args(args)
        .current_dir(dir)
        .env_remove("RECOMED_MODEL")
        .output()
        .unwrap()
}

fn ok(out: Output) -> String {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

#[test]
fn usage_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(recomed(&["build", "--no-such-flag"], dir.path()).status.code(), Some(2));
    assert_eq!(recomed(&["recommend", "--model", "m.json"], dir.path()).status.code(), Some(2));
    assert_eq!(recomed(&["--help"], dir.path()).status.code(), Some(0));
}

#[test]
fn runtime_errors_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    let out = recomed(&["recommend", "--model", "missing.json", "--meds", "x"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"));
    assert_eq!(recomed(&["eval"], dir.path()).status.code(), Some(1));
}

#[test]
fn synth_build_recommend_eval() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(recomed(&["synth", "--out-dir", "corpus", "--n-prescriptions", "3000"], d));
    ok(recomed(&["ingest", "--input", "corpus/rx.jsonl", "--out", "db.json", "--report", "ingest.json"], d));
    let report: Value = serde_json::from_str(&std::fs::read_to_string(d.join("ingest.json")).unwrap()).unwrap();
    assert_eq!(report["records_rejected"], 0);

    let build = |out: &str, src: &[&str]| {
        let mut args = vec!["build", "--atc", "corpus/atc.tsv", "--out", out, "--jenks-k", "3", "--stop-class-count", "1"];
        args.extend_from_slice(src);
        ok(recomed(&args, d));
    };
    build("a.json", &["--input", "corpus/rx.jsonl", "--rules-csv", "rules.csv", "--partition-csv", "part.csv"]);
    build("b.json", &["--db", "db.json"]);
    assert_eq!(std::fs::read(d.join("a.json")).unwrap(), std::fs::read(d.join("b.json")).unwrap());
    let rules = std::fs::read_to_string(d.join("rules.csv")).unwrap();
    assert!(rules.starts_with("antecedents,consequents,support,confidence,lift,strength"));
    let part = std::fs::read_to_string(d.join("part.csv")).unwrap();
    assert!(part.starts_with("med_id,medicine,community,is_outlier,atc"));

    let med = "SYN G00 MED00 TAB";
    let table = ok(recomed(&["recommend", "--model", "a.json", "--meds", med, "-k", "3"], d));
    assert_eq!(table.lines().count(), 3);
    assert!(table.lines().all(|l| l.contains("SYN G00")), "{table}");
    let out = recomed(&["recommend", "--model", "a.json", "--meds", &format!("{med};nope"), "--json"], d);
    assert!(String::from_utf8_lossy(&out.stderr).contains("nope"));
    let body: Value = serde_json::from_str(&ok(out)).unwrap();
    assert_eq!(body["unknown"], serde_json::json!(["nope"]));

    let eval: Value = serde_json::from_str(&ok(recomed(
        &["eval", "--model", "a.json", "--truth", "corpus/truth.json", "--builtin-sample"],
        d,
    )))
    .unwrap();
    assert!(eval["truth"]["ari"].as_f64().unwrap() >= 0.9);
    assert_eq!(eval["truth"]["stop_exact"], true);
    assert!((eval["tag_accuracy"].as_f64().unwrap() - 29.0 / 30.0).abs() < 1e-9);
}
