use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn wearsafe(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_wearsafe"))
        .args(args)
        .output()
        .unwrap()
}

fn scenario_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios")
}

fn scenario(name: &str) -> String {
    scenario_dir().join(name).display().to_string()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn run_writes_outputs_deterministically() {
    let tmp = tempfile::tempdir().unwrap();
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    for out in [&a, &b] {
        let o = wearsafe(&[
            "run",
            "--scenario",
            &scenario("reversal.json"),
            "--seed",
            "4",
            "--out",
            out.to_str().unwrap(),
        ]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    }
    for f in ["trace.jsonl", "summary.json", "summary.csv"] {
        assert!(a.join(f).is_file(), "{f}");
    }
    assert_eq!(
        fs::read(a.join("trace.jsonl")).unwrap(),
        fs::read(b.join("trace.jsonl")).unwrap()
    );
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(a.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["seed"], 4);
    assert_eq!(summary["reversals"], 1);
}

#[test]
fn run_flags_reach_the_simulation() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("o");
    let o = wearsafe(&[
        "run",
        "--scenario",
        &scenario("imminent.json"),
        "--out",
        out.to_str().unwrap(),
        "--disable-advisories",
        "--disable-plausibility",
        "--channel-profile",
        "cellular-only",
        "--dump-coordinator",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let trace = fs::read_to_string(out.join("trace.jsonl")).unwrap();
    let header: serde_json::Value = serde_json::from_str(trace.lines().next().unwrap()).unwrap();
    assert_eq!(header["channel_profile"], "cellular-only");
    assert_eq!(header["toggles"]["advisories"], false);
    assert_eq!(header["toggles"]["plausibility"], false);
    assert!(trace.contains("\"type\":\"dump\""));
    assert!(!trace.contains("send_advisory"));
}

#[test]
fn schema_errors_exit_2_with_location() {
    let tmp = tempfile::tempdir().unwrap();
    let text = fs::read_to_string(scenario_dir().join("pass_by.json")).unwrap();
    let bad = tmp.path().join("bad.json");
    fs::write(
        &bad,
        text.replacen("\"tick\": 0.1,", "\"tick\": 0.1,\n  \"tock\": 1,", 1),
    )
    .unwrap();
    let o = wearsafe(&[
        "run",
        "--scenario",
        bad.to_str().unwrap(),
        "--out",
        tmp.path().join("o").to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2));
    let e = stderr(&o);
    assert!(e.contains("line 7") && e.contains("tock"), "{e}");
    assert!(!tmp.path().join("o").exists());

    let o = wearsafe(&[
        "run",
        "--scenario",
        &scenario("pass_by.json"),
        "--out",
        tmp.path().join("p").to_str().unwrap(),
        "--channel-profile",
        "carrier-pigeon",
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("channel_profile"));

    assert_eq!(wearsafe(&["run", "--out", "x"]).status.code(), Some(2));
    assert_eq!(wearsafe(&["fly"]).status.code(), Some(2));
}

#[test]
fn runtime_faults_exit_3() {
    let tmp = tempfile::tempdir().unwrap();
    let text = fs::read_to_string(scenario_dir().join("parallel_lanes.json")).unwrap();
    let v: serde_json::Value = serde_json::from_str(&text).unwrap();
    let mut v = v;
    // drives off the edge of the representable wire coordinates
    v["agents"][0]["initial"]["x"] = serde_json::json!(19_990.0);
    v["warmup"] = serde_json::json!(0.0);
    let path = tmp.path().join("edge.json");
    fs::write(&path, v.to_string()).unwrap();
    let o = wearsafe(&[
        "run",
        "--scenario",
        path.to_str().unwrap(),
        "--out",
        tmp.path().join("o").to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    assert!(stderr(&o).contains("runtime fault"));
}

#[test]
fn batch_then_report() {
    let tmp = tempfile::tempdir().unwrap();
    let pattern = format!("{}/*.json", scenario_dir().display());
    let out = tmp.path().join("batch");
    let o = wearsafe(&[
        "batch",
        "--scenarios",
        &pattern,
        "--out",
        out.to_str().unwrap(),
        "--jobs",
        "2",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(out.join("reversal/trace.jsonl").is_file());
    assert!(out.join("reversal.baseline/trace.jsonl").is_file());

    let csv = wearsafe(&["report", "--in", out.to_str().unwrap(), "--format", "csv"]);
    assert_eq!(csv.status.code(), Some(0));
    let csv = String::from_utf8(csv.stdout).unwrap();
    assert!(csv.starts_with("metric,n,mean,std,min,max\n"));
    assert!(csv.contains("\nfalse_positive_rate,"));
    let again = wearsafe(&["report", "--in", out.to_str().unwrap(), "--format", "csv"]);
    assert_eq!(String::from_utf8(again.stdout).unwrap(), csv);

    let text = wearsafe(&["report", "--in", out.to_str().unwrap()]);
    assert!(String::from_utf8(text.stdout).unwrap().contains("false positives:"));

    let trace = out.join("pass_by/trace.jsonl");
    let mut t = fs::read_to_string(&trace).unwrap();
    t.push_str("not json\n");
    fs::write(&trace, t).unwrap();
    let o = wearsafe(&["report", "--in", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("trace.jsonl:"), "{}", stderr(&o));

    let o = wearsafe(&[
        "batch",
        "--scenarios",
        "/nowhere/*.json",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2));
}
