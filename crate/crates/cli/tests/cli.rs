use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const PLANE: &str = r#"{
  "system": {"name": "plane4d", "params": {"omega": [-1, 1], "a": [-1, 1]}},
  "box": [
    {"name": "p_x", "min": -40, "max": 40, "nodes": 11},
    {"name": "p_y", "min": -40, "max": 40, "nodes": 11},
    {"name": "psi", "min": -3.141592653589793, "max": 3.141592653589793, "nodes": 12, "periodic": true},
    {"name": "v", "min": 6, "max": 12, "nodes": 7}
  ],
  "target": [{"dim": 0, "half_width": 4}, {"dim": 1, "half_width": 4}],
  "horizon": 1.0,
  "record_timing": false
}"#;

fn hjreach(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hjreach"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = hjreach(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn solve_compare_reconstruct_query_export() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("plane.json");
    fs::write(&cfg, PLANE).unwrap();
    let full = dir.path().join("full.hjvf");
    let pieces = dir.path().join("pieces");
    let report = dir.path().join("report.json");

    ok(&["solve", "--config", s(&cfg), "--mode", "full", "--out", s(&full)]);
    assert_eq!(&fs::read(&full).unwrap()[..4], b"HJVF");

    let text = ok(&[
        "solve", "--config", s(&cfg), "--mode", "decoupled", "--mv", "2", "--mpsi", "2", "--out", s(&pieces),
    ]);
    assert!(text.contains("4 pieces"), "{text}");
    assert!(pieces.join("pieces.json").is_file());

    ok(&["compare", "--approx", s(&pieces), "--full", s(&full), "--report", s(&report)]);
    let rep = fs::read_to_string(&report).unwrap();
    for key in ["volume_ratio", "max_violation", "violation_fraction", "tolerance"] {
        assert!(rep.contains(key), "{rep}");
    }

    let recon = dir.path().join("recon.hjvf");
    ok(&["reconstruct", "--pieces", s(&pieces), "--grid", s(&cfg), "--out", s(&recon)]);
    ok(&["compare", "--approx", s(&recon), "--full", s(&full), "--tol", "0.5", "--report", s(&report)]);
    assert!(fs::read_to_string(&report).unwrap().contains("0.5"));

    let inside = ok(&["query", "--pieces", s(&pieces), "--state", "0,0,-1.0,9"]);
    assert!(inside.contains("inside"), "{inside}");
    let outside = ok(&["query", "--pieces", s(&pieces), "--state", "-39,39,0,9"]);
    assert!(outside.contains("outside"), "{outside}");

    let csv = dir.path().join("slice.csv");
    ok(&["export", "--in", s(&full), "--format", "csv", "--slice", "2=0,3=9", "--out", s(&csv)]);
    let body = fs::read_to_string(&csv).unwrap();
    let mut lines = body.lines();
    assert_eq!(lines.next(), Some("z0,z1,value"));
    assert_eq!(lines.count(), 121);
}

#[test]
fn sweep_writes_csv_and_reports_best() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("plane.json");
    fs::write(&cfg, PLANE).unwrap();
    let csv = dir.path().join("sweep.csv");
    let text = ok(&["--threads", "2", "sweep", "--config", s(&cfg), "--mv", "1,2", "--mpsi", "1,2", "--out", s(&csv)]);
    assert!(text.contains("best: mv"), "{text}");
    let body = fs::read_to_string(&csv).unwrap();
    let lines: Vec<&str> = body.lines().collect();
    assert_eq!(
        lines[0],
        "mv,mpsi,pieces,volume_approx,volume_full,volume_ratio,solve_seconds_decoupled,solve_seconds_full,reconstruct_seconds"
    );
    assert_eq!(lines.len(), 5);
    assert!(lines[4].starts_with("2,2,4,"));

    let again = dir.path().join("again.csv");
    ok(&["sweep", "--config", s(&cfg), "--mv", "1,2", "--mpsi", "1,2", "--out", s(&again)]);
    assert_eq!(fs::read(&csv).unwrap(), fs::read(&again).unwrap());
}

#[test]
fn literal_sin_flag_changes_the_solution() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("plane.json");
    fs::write(&cfg, PLANE).unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    ok(&["solve", "--config", s(&cfg), "--mode", "decoupled", "--out", s(&a)]);
    ok(&["solve", "--config", s(&cfg), "--mode", "decoupled", "--out", s(&b), "--paper-literal-sin"]);
    assert_ne!(
        fs::read(a.join("piece_0_0_x.hjvf")).unwrap(),
        fs::read(b.join("piece_0_0_x.hjvf")).unwrap()
    );
    assert_eq!(
        fs::read(a.join("piece_0_0_y.hjvf")).unwrap(),
        fs::read(b.join("piece_0_0_y.hjvf")).unwrap()
    );
}

#[test]
fn errors_are_reported_with_nonzero_exit() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("plane.json");
    fs::write(&cfg, PLANE).unwrap();
    let junk = dir.path().join("junk.hjvf");
    fs::write(&junk, b"NOPE0000").unwrap();
    let report = dir.path().join("r.json");

    let out = hjreach(&["compare", "--approx", s(&junk), "--full", s(&junk), "--report", s(&report)]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("not an HJVF file"));

    let bad = dir.path().join("bad.json");
    fs::write(&bad, PLANE.replace("\"dim\": 1", "\"dim\": 3")).unwrap();
    let out = hjreach(&[
        "solve", "--config", s(&bad), "--mode", "decoupled", "--mv", "2", "--out", s(&dir.path().join("p")),
    ]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("dimension 3"));

    let big = dir.path().join("big.json");
    fs::write(&big, PLANE.replace("\"record_timing\": false", "\"memory_budget_bytes\": 100")).unwrap();
    let out = hjreach(&["solve", "--config", s(&big), "--mode", "full", "--out", s(&junk)]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("budget"));

    let out = hjreach(&["export", "--in", s(&junk), "--slice", "2=0", "--out", s(&report)]);
    assert!(!out.status.success());
}
