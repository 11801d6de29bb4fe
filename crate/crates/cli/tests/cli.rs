//! End-to-end runs of the `target` binary.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn root() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn fx(rel: &str) -> String {
    root().join("fixtures").join(rel).display().to_string()
}

fn target(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_target")).args(args).env_remove("TARGET_CONFIG").output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn json(p: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn parse_rule_replay_writes_document_and_session() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("t2.dsl");
    let o = target(&[
        "parse-rule",
        "--rule-file",
        &fx("rules/t2_through_street.txt"),
        "--backend",
        &format!("replay:{}", fx("replay")),
        "--out",
        s(&out),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let first = std::fs::read(&out).unwrap();
    let session = json(&dir.path().join("t2.dsl.session.json"));
    assert_eq!(session["schema"], "target.session.v1");
    assert_eq!(session["config"]["time_limit"], 60.0);
    assert!(session["error"].is_null());
    assert_eq!(session["session"]["completions"], 2);

    // a second run leaves the document alone, --force regenerates the same bytes
    std::fs::write(&out, b"environment: garbage\n").unwrap();
    let o = target(&[
        "parse-rule",
        "--rule-file",
        &fx("rules/t2_through_street.txt"),
        "--backend",
        &format!("replay:{}", fx("replay")),
        "--out",
        s(&out),
    ]);
    assert_ne!(code(&o), 0, "a corrupt existing output is reported");
    let o = target(&[
        "parse-rule",
        "--rule-file",
        &fx("rules/t2_through_street.txt"),
        "--backend",
        &format!("replay:{}", fx("replay")),
        "--out",
        s(&out),
        "--force",
    ]);
    assert_eq!(code(&o), 0);
    assert_eq!(std::fs::read(&out).unwrap(), first);
    let o = target(&[
        "parse-rule",
        "--rule-file",
        &fx("rules/t2_through_street.txt"),
        "--backend",
        &format!("replay:{}", fx("replay")),
        "--out",
        s(&out),
    ]);
    assert_eq!(code(&o), 0);
    assert!(String::from_utf8_lossy(&o.stderr).contains("--force"));
    assert_eq!(std::fs::read(&out).unwrap(), first);
}

#[test]
fn parse_rule_failures() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("x.dsl");
    let o = target(&[
        "parse-rule",
        "--rule-text",
        "Never park on a bridge.",
        "--backend",
        &format!("replay:{}", fx("replay")),
        "--out",
        s(&out),
    ]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("no replay fixture"), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(!out.exists());
    let session = json(&dir.path().join("x.dsl.session.json"));
    assert!(session["error"].is_string());

    let script = dir.path().join("bad.toml");
    std::fs::write(&script, "[[response]]\ntext = 'no'\n[[response]]\ntext = 'no'\n[[response]]\ntext = 'no'\n").unwrap();
    let o = target(&[
        "parse-rule",
        "--rule-text",
        "Stop at red lights.",
        "--backend",
        &format!("script:{}", s(&script)),
        "--out",
        s(&out),
    ]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("extraction"), "{}", String::from_utf8_lossy(&o.stderr));

    // both rule sources at once is a usage error
    let o = target(&["parse-rule", "--rule-text", "a", "--rule-file", "b", "--backend", "http", "--out", s(&out)]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("cannot be used with"));
}

#[test]
fn gen_reports_unsupported_maps_and_empty_dirs() {
    let dir = tempfile::tempdir().unwrap();
    let o = target(&["gen", "--scenario-doc", &fx("gold/t2_through_street.dsl"), "--maps", &fx("maps"), "--out", s(dir.path())]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let stderr = String::from_utf8_lossy(&o.stderr);
    assert!(stderr.contains("cross4: ScenarioUnsupportedOnMap") && stderr.contains("straight: ScenarioUnsupportedOnMap"));
    let summary = json(&dir.path().join("t2_through_street.gen.json"));
    assert_eq!(summary["schema"], "target.gen.v1");
    assert!(summary["config"].is_object());
    assert_eq!(summary["generated"].as_array().unwrap().len(), 1);
    assert_eq!(summary["unsupported"], serde_json::json!(["cross4", "straight"]));
    let scn = json(&dir.path().join("t2_through_street@tjunction.scn.json"));
    assert_eq!(scn["schema"], "target.scenario.v1");
    assert!(scn["generator"].is_object());

    let empty = tempfile::tempdir().unwrap();
    let o =
        target(&["gen", "--scenario-doc", &fx("gold/t2_through_street.dsl"), "--maps", s(empty.path()), "--out", s(dir.path())]);
    assert_eq!(code(&o), 3);
}

#[test]
fn gen_all_enumerates_every_approach() {
    let dir = tempfile::tempdir().unwrap();
    let doc = dir.path().join("left.dsl");
    std::fs::write(
        &doc,
        "environment:\n  weather: none\n  time: none\nroad_network:\n  road_type: intersection\n  road_marker: none\n  traffic_signs: []\nactors:\n  ego:\n    type: car\n    behavior: turn left\n    position:\n      reference: intersection\n      relation: on\n  npc_actors: []\noracle:\n  longitudinal: []\n  lateral: []\n",
    )
    .unwrap();
    let maps = tempfile::tempdir().unwrap();
    std::fs::copy(fx("maps/cross4.map.json"), maps.path().join("cross4.map.json")).unwrap();
    let o = target(&["gen", "--scenario-doc", s(&doc), "--maps", s(maps.path()), "--all", "--out", s(dir.path())]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let n = std::fs::read_dir(dir.path())
        .unwrap()
        .filter(|e| e.as_ref().unwrap().file_name().to_string_lossy().ends_with(".scn.json"))
        .count();
    assert_eq!(n, 4);
}

fn gen_one(doc: &str, map: &str, dir: &Path) -> PathBuf {
    let stem = Path::new(doc).file_stem().unwrap().to_string_lossy().into_owned();
    let o = target(&["gen", "--scenario-doc", doc, "--maps", &fx("maps"), "--out", s(dir)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    dir.join(format!("{stem}@{map}.scn.json"))
}

fn run(scn: &Path, agent: &str, dir: &Path) -> (i32, serde_json::Value) {
    let (trace, report) = (dir.join(format!("{agent}.trace.jsonl")), dir.join(format!("{agent}.report.json")));
    let o = target(&[
        "run",
        "--scenario",
        s(scn),
        "--maps",
        &fx("maps"),
        "--agent",
        agent,
        "--trace-out",
        s(&trace),
        "--report-out",
        s(&report),
    ]);
    assert!(std::fs::read_to_string(&trace).unwrap().starts_with("{\"schema\":\"target.trace.v1\""));
    (code(&o), json(&report))
}

#[test]
fn run_exit_codes_follow_the_verdict() {
    let dir = tempfile::tempdir().unwrap();
    let stop = gen_one(&fx("monitor/stop.dsl"), "cross4", dir.path());
    let (c, report) = run(&stop, "compliant", dir.path());
    assert_eq!(c, 0);
    assert_eq!(report["schema"], "target.report.v1");
    assert!(report["config"].is_object());
    assert_eq!(run(&stop, "violator:stop", dir.path()).0, 4);

    let t2 = gen_one(&fx("gold/t2_through_street.dsl"), "tjunction", dir.path());
    let (c, report) = run(&t2, "static", dir.path());
    assert_eq!(c, 6);
    assert_eq!(report["timeout"], true);
    assert_eq!(run(&t2, "violator:stop,yield", dir.path()).0, 5);
}

#[test]
fn run_is_idempotent_unless_forced() {
    let dir = tempfile::tempdir().unwrap();
    let stop = gen_one(&fx("monitor/stop.dsl"), "cross4", dir.path());
    let (trace, report) = (dir.path().join("t.jsonl"), dir.path().join("r.json"));
    let args = |agent: &'static str, force: bool| {
        let mut v = vec![
            "run".to_string(),
            "--scenario".into(),
            s(&stop).into(),
            "--maps".into(),
            fx("maps"),
            "--agent".into(),
            agent.into(),
        ];
        v.extend(["--trace-out".into(), s(&trace).into(), "--report-out".into(), s(&report).into()]);
        if force {
            v.push("--force".into());
        }
        v
    };
    let call = |v: Vec<String>| {
        let refs: Vec<&str> = v.iter().map(String::as_str).collect();
        code(&target(&refs))
    };
    assert_eq!(call(args("compliant", false)), 0);
    let bytes = std::fs::read(&trace).unwrap();
    // existing outputs win without --force, even with a different agent
    assert_eq!(call(args("violator:stop", false)), 0);
    assert_eq!(std::fs::read(&trace).unwrap(), bytes);
    assert_eq!(call(args("violator:stop", true)), 4);
    assert_eq!(call(args("compliant", true)), 0);
    assert_eq!(std::fs::read(&trace).unwrap(), bytes);
}

#[test]
fn eval_corpus_and_votes() {
    let dir = tempfile::tempdir().unwrap();
    let (pred, gold) = (dir.path().join("pred"), dir.path().join("gold"));
    std::fs::create_dir_all(&pred).unwrap();
    std::fs::create_dir_all(&gold).unwrap();
    std::fs::copy(fx("accuracy/gold.dsl"), gold.join("turn.dsl")).unwrap();
    std::fs::copy(fx("accuracy/pred.dsl"), pred.join("turn.dsl")).unwrap();
    let o = target(&["eval", "--pred", s(&pred), "--gold", s(&gold), "--json"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["schema"], "target.eval.v1");
    assert!(v["config"].is_object());
    let r = &v["corpus"]["rules"][0];
    assert_eq!((r["matched"].as_u64(), r["slots"].as_u64()), (Some(14), Some(15)));
    assert!((r["accuracy"].as_f64().unwrap() - 14.0 / 15.0).abs() < 1e-12);

    let o = target(&["eval", "--pred", s(&pred), "--gold", s(&gold)]);
    assert!(String::from_utf8_lossy(&o.stdout).contains("0.9333"));

    let o = target(&["eval", "--votes", &fx("votes/survey_a.csv"), "--votes", &fx("votes/survey_b.csv"), "--json"]);
    assert_eq!(code(&o), 0);
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["surveys"].as_array().unwrap().len(), 2);
    assert_eq!(v["surveys"][1]["kappa"], 1.0);
    assert!(v["mean"].as_f64().is_some());

    let o = target(&["eval"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn config_file_is_applied_and_echoed() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("target.toml");
    std::fs::write(&cfg, format!("maps = {:?}\ntime_limit = 5.0\n\n[thresholds]\nstop_dwell = 0.5\n", fx("maps"))).unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_target"))
        .args(["gen", "--scenario-doc", &fx("gold/t2_through_street.dsl"), "--out", s(dir.path())])
        .env("TARGET_CONFIG", &cfg)
        .output()
        .unwrap();
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let scn = json(&dir.path().join("t2_through_street@tjunction.scn.json"));
    assert_eq!(scn["monitor"]["time_limit"], 5.0);
    let summary = json(&dir.path().join("t2_through_street.gen.json"));
    assert_eq!(summary["config"]["time_limit"], 5.0);

    std::fs::write(&cfg, "bogus_key = 1\n").unwrap();
    let o = target(&["--config", s(&cfg), "eval", "--votes", &fx("votes/survey_b.csv")]);
    assert_eq!(code(&o), 1);
}
