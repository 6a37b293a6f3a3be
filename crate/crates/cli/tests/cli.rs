use std::path::Path;
use std::process::{Command, Output};

fn xcsim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_xcsim")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const FILES: [&str; 7] =
    ["chains.csv", "comparisons.csv", "deploy.csv", "invocations.csv", "lsd.csv", "relayers.csv", "summary.csv"];

#[test]
fn list_prints_the_builtins() {
    let o = xcsim(&["list"]);
    assert!(o.status.success());
    let names: Vec<String> = stdout(&o).lines().map(str::to_string).collect();
    assert_eq!(names, xcsim::scenario::BUILTINS);
}

#[test]
fn run_writes_every_csv() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("th");
    let o = xcsim(&["run", "train-hotel", "--out", out.to_str().unwrap(), "--threads", "1"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    for f in FILES {
        assert!(out.join(f).is_file(), "{f} missing");
    }
    let summary = std::fs::read_to_string(out.join("summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 3);
    assert!(stdout(&o).contains("lower than baseline"));
}

#[test]
fn run_accepts_a_scenario_file() {
    let dir = tempfile::tempdir().unwrap();
    let file = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios/travel.toml");
    let o = xcsim(&["run", file.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let summary = std::fs::read_to_string(dir.path().join("summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 5);

    // one protocol leaves nothing to compare, so the reduction check has no value
    let o = xcsim(&["run", file.to_str().unwrap(), "--protocol", "integratex", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("= missing"));
}

#[test]
fn bad_input_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let o = xcsim(&["run", "no-such-scenario"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("error:"));

    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "name = \"x\"\nchains = 4\n").unwrap();
    let o = xcsim(&["run", bad.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("parse error"), "{}", stderr(&o));

    let o = xcsim(&["compare", "missing-a.csv", "missing-b.csv"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn failed_assertion_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios/travel.toml"))
        .unwrap()
        .replace("op = \">\"\nvalue = 0", "op = \">\"\nvalue = 99");
    let file = dir.path().join("strict.toml");
    std::fs::write(&file, text).unwrap();
    let o = xcsim(&["run", file.to_str().unwrap(), "--out", dir.path().join("out").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("[FAIL] latency_reduction_pct"));
}

#[test]
fn compare_checks_expected_trends() {
    let dir = tempfile::tempdir().unwrap();
    let (fast, slow) = (dir.path().join("fast"), dir.path().join("slow"));
    for (out, bt) in [(&fast, "2000"), (&slow, "8000")] {
        let o = xcsim(&["run", "train-hotel", "--block-time", bt, "--out", out.to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    }
    let (a, b) = (fast.join("summary.csv"), slow.join("summary.csv"));
    let args = |expect: &str| {
        vec![
            "compare".to_string(),
            a.to_str().unwrap().to_string(),
            b.to_str().unwrap().to_string(),
            "--key".into(),
            "protocol".into(),
            "--expect".into(),
            expect.to_string(),
        ]
    };
    let run = |expect: &str| {
        let v = args(expect);
        xcsim(&v.iter().map(String::as_str).collect::<Vec<_>>())
    };
    let up = run("mean_latency_ms:up");
    assert_eq!(up.status.code(), Some(0), "{}", stderr(&up));
    assert!(stdout(&up).contains("mean_latency_ms"));
    assert_eq!(run("mean_latency_ms:down").status.code(), Some(1));
    assert_eq!(run("mean_latency_ms:sideways").status.code(), Some(2));
}
