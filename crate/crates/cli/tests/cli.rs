use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const SIX_STATION: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/../../data/six_station.toml");

const DEMAND: &str = r#"
[[flows]]
from = "*"
to = "*"
buckets = [{ start = "06:00", end = "22:00", rate = 6.0 }]
"#;

const TWO_STATIONS: &str = r#"
[[stations]]
id = "P"
[[stations]]
id = "Q"

[[lines]]
id = "shuttle"
stations = ["P", "Q"]

[[segments]]
from = "P"
to = "Q"
time = 240.0

[headways]
shuttle = 300.0
"#;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_railcrowd"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = run(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}\n{}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Simulated history, estimated model and table archive for the six-station network.
struct Pipeline {
    dir: tempfile::TempDir,
}

impl Pipeline {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        let demand = dir.path().join("demand.toml");
        fs::write(&demand, DEMAND).unwrap();
        let p = Pipeline { dir };
        ok(&[
            "simulate",
            "--topology",
            SIX_STATION,
            "--demand",
            s(&demand),
            "--days",
            "2",
            "--seed",
            "3",
            "--out",
            s(&p.path("hist")),
        ]);
        ok(&[
            "simulate",
            "--topology",
            SIX_STATION,
            "--demand",
            s(&demand),
            "--model",
            s(&p.path("hist/truth_model.json")),
            "--days",
            "1",
            "--day-offset",
            "2",
            "--seed",
            "3",
            "--out",
            s(&p.path("today")),
        ]);
        ok(&[
            "estimate",
            "--topology",
            SIX_STATION,
            "--history",
            s(&p.path("hist/afc.csv")),
            "--truth",
            s(&p.path("hist/truth_model.json")),
            "--out",
            s(&p.path("model.json")),
        ]);
        p.build("tables.bin");
        p
    }

    fn path(&self, rel: &str) -> PathBuf {
        self.dir.path().join(rel)
    }

    fn build(&self, archive: &str) -> Output {
        let out = bin()
            .env("SOURCE_DATE_EPOCH", "1700000000")
            .args([
                "build-tables",
                "--topology",
                SIX_STATION,
                "--model",
                s(&self.path("model.json")),
                "--history",
                s(&self.path("hist/afc.csv")),
                "--archive",
                s(&self.path(archive)),
                "--imax",
                "2000",
                "--seed",
                "9",
            ])
            .output()
            .unwrap();
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        out
    }
}

fn snapshot_files(dir: &Path) -> Vec<String> {
    let mut v: Vec<String> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .filter(|n| n.starts_with("snapshot_"))
        .collect();
    v.sort();
    v
}

#[test]
fn full_pipeline_writes_one_snapshot_per_ten_minutes() {
    let p = Pipeline::new();

    let model = fs::read_to_string(p.path("model.json")).unwrap();
    assert!(model.contains("\"mse_vs_truth\""), "model file reports the error against the truth");
    let residuals = fs::read_to_string(p.path("model.residuals.csv")).unwrap();
    assert!(residuals.starts_with("origin,destination,count,"));
    assert_eq!(residuals.lines().count(), 1 + 30, "every ordered pair of six stations is used");

    let out = p.path("infer");
    ok(&[
        "infer",
        "--topology",
        SIX_STATION,
        "--archive",
        s(&p.path("tables.bin")),
        "--events",
        s(&p.path("today/afc.csv")),
        "--out",
        s(&out),
        "--from",
        "08:00",
        "--to",
        "20:00",
        "--cadence",
        "600",
        "--render",
        "both",
    ]);

    let snaps = snapshot_files(&out);
    assert_eq!(snaps.len(), 73);
    let day2 = 2 * 86_400;
    assert_eq!(snaps.first().unwrap(), &format!("snapshot_{}.csv", day2 + 8 * 3600));
    assert!(snaps.contains(&format!("snapshot_{}.csv", day2 + 20 * 3600)));

    let totals = fs::read_to_string(out.join("totals.csv")).unwrap();
    let rows: Vec<&str> = totals.lines().collect();
    assert_eq!(rows[0], "t_now,active,expected_total");
    assert_eq!(rows.len(), 74);
    for row in &rows[1..] {
        let f: Vec<&str> = row.split(',').collect();
        let active: f64 = f[1].parse().unwrap();
        let expected: f64 = f[2].parse().unwrap();
        assert!((active - expected).abs() <= 1e-9 * active.max(1.0), "{row}");
    }
    let busy = rows[1..].iter().filter(|r| r.split(',').nth(1).unwrap() != "0").count();
    assert!(busy > 60, "demand runs all day, so the network is rarely empty");

    assert!(out.join("series.csv").is_file());
    assert!(out.join(format!("map_{}.svg", day2 + 8 * 3600)).is_file());

    let snap = fs::read_to_string(out.join(&snaps[0])).unwrap();
    assert!(snap.starts_with("component_id,kind,expected_count\n"));
    assert!(snap.lines().last().unwrap().starts_with("total,system,"));
}

#[test]
fn render_subcommand_rereads_snapshots() {
    let p = Pipeline::new();
    let snaps = p.path("snaps");
    ok(&[
        "infer",
        "--topology",
        SIX_STATION,
        "--archive",
        s(&p.path("tables.bin")),
        "--events",
        s(&p.path("today/afc.csv")),
        "--out",
        s(&snaps),
        "--from",
        "12:00",
        "--to",
        "13:00",
        "--fold-transfers",
    ]);
    assert_eq!(snapshot_files(&snaps).len(), 7);
    let out = p.path("maps");
    ok(&["render", "--topology", SIX_STATION, "--snapshots", s(&snaps), "--out", s(&out), "--fold-transfers"]);
    let svgs = fs::read_dir(&out).unwrap().filter(|e| e.as_ref().unwrap().path().extension().unwrap() == "svg").count();
    assert_eq!(svgs, 7);
    let series = fs::read_to_string(out.join("series.csv")).unwrap();
    assert_eq!(series.lines().count(), 8);
}

#[test]
fn table_rebuild_is_byte_identical() {
    let p = Pipeline::new();
    p.build("again.bin");
    let a = fs::read(p.path("tables.bin")).unwrap();
    let b = fs::read(p.path("again.bin")).unwrap();
    assert!(a == b, "same inputs, seed and timestamp give the same archive");
}

#[test]
fn empty_event_stream_gives_zero_snapshots() {
    let p = Pipeline::new();
    let events = p.path("empty.csv");
    fs::write(&events, "trip_id,entry_station,entry_ts,exit_station,exit_ts\n").unwrap();
    let out = p.path("empty_out");
    ok(&[
        "infer",
        "--topology",
        SIX_STATION,
        "--archive",
        s(&p.path("tables.bin")),
        "--events",
        s(&events),
        "--out",
        s(&out),
    ]);
    assert_eq!(snapshot_files(&out).len(), 73);
    let totals = fs::read_to_string(out.join("totals.csv")).unwrap();
    for row in totals.lines().skip(1) {
        let f: Vec<&str> = row.split(',').collect();
        assert_eq!(f[1], "0");
        assert_eq!(f[2].parse::<f64>().unwrap(), 0.0);
    }
    let snap = fs::read_to_string(out.join(&snapshot_files(&out)[0])).unwrap();
    for line in snap.lines().skip(1) {
        assert_eq!(line.rsplit(',').next().unwrap().parse::<f64>().unwrap(), 0.0, "{line}");
    }
}

#[test]
fn missing_input_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&[
        "estimate",
        "--topology",
        SIX_STATION,
        "--history",
        "/nonexistent/afc.csv",
        "--out",
        s(&dir.path().join("m.json")),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("not found"));

    let out = run(&["estimate", "--topology", SIX_STATION]);
    assert_eq!(out.status.code(), Some(1), "missing required flags");
}

#[test]
fn unknown_solver_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let hist = dir.path().join("h.csv");
    fs::write(&hist, "trip_id,entry_station,entry_ts,exit_station,exit_ts\n1,A,0,B,300\n").unwrap();
    let out = run(&[
        "estimate",
        "--topology",
        SIX_STATION,
        "--history",
        s(&hist),
        "--solver",
        "magic",
        "--out",
        s(&dir.path().join("m.json")),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("ridge-normal"));
}

#[test]
fn sparse_history_has_no_usable_pairs() {
    let dir = tempfile::tempdir().unwrap();
    let hist = dir.path().join("h.csv");
    fs::write(
        &hist,
        "trip_id,entry_station,entry_ts,exit_station,exit_ts\n1,A,0,B,300\n2,A,10,B,320\n3,B,0,C,400\n4,E,5,F,\n",
    )
    .unwrap();
    let out =
        run(&["estimate", "--topology", SIX_STATION, "--history", s(&hist), "--out", s(&dir.path().join("m.json"))]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("no usable pairs"));
    assert!(!dir.path().join("m.json").exists());
}

#[test]
fn two_station_network_has_two_tables_and_falls_back_to_csv() {
    let dir = tempfile::tempdir().unwrap();
    let topo = dir.path().join("net.toml");
    fs::write(&topo, TWO_STATIONS).unwrap();
    let demand = dir.path().join("demand.toml");
    fs::write(&demand, "[[flows]]\nfrom = \"*\"\nto = \"*\"\nbuckets = [{ start = 0, end = 86400, rate = 4.0 }]\n")
        .unwrap();
    let t = s(&topo);
    ok(&["simulate", "--topology", t, "--demand", s(&demand), "--seed", "1", "--out", s(&dir.path().join("sim"))]);
    let afc = dir.path().join("sim/afc.csv");
    ok(&["estimate", "--topology", t, "--history", s(&afc), "--out", s(&dir.path().join("m.json"))]);
    let summary = ok(&[
        "build-tables",
        "--topology",
        t,
        "--model",
        s(&dir.path().join("m.json")),
        "--history",
        s(&afc),
        "--archive",
        s(&dir.path().join("a.bin")),
        "--imax",
        "500",
    ]);
    assert!(summary.contains(" 2 location tables"), "{summary}");

    let out = dir.path().join("inf");
    let res = run(&[
        "infer",
        "--topology",
        t,
        "--archive",
        s(&dir.path().join("a.bin")),
        "--events",
        s(&afc),
        "--out",
        s(&out),
        "--render",
        "svg",
    ]);
    assert!(res.status.success());
    assert!(String::from_utf8_lossy(&res.stderr).contains("no station coordinates"));
    assert!(out.join("series.csv").is_file());
    assert!(!fs::read_dir(&out).unwrap().any(|e| e.unwrap().path().extension().unwrap() == "svg"));
}

#[test]
fn archive_from_another_network_is_rejected() {
    let p = Pipeline::new();
    let dir = p.path("other");
    fs::create_dir_all(&dir).unwrap();
    let topo = dir.join("net.toml");
    fs::write(&topo, TWO_STATIONS).unwrap();
    let events = dir.join("e.csv");
    fs::write(&events, "trip_id,entry_station,entry_ts,exit_station,exit_ts\n").unwrap();
    let out = run(&[
        "infer",
        "--topology",
        s(&topo),
        "--archive",
        s(&p.path("tables.bin")),
        "--events",
        s(&events),
        "--out",
        s(&dir.join("o")),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("different network"));
}
