use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_pluridisc"))
}

fn scenarios() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios")
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn pluridisc")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

/// Data rows of a `# schema=1` CSV, split on commas.
fn rows(csv: &str) -> Vec<Vec<String>> {
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("# schema=1"));
    lines.next().expect("header");
    lines.map(|l| l.split(',').map(String::from).collect()).collect()
}

fn read(p: &Path) -> String {
    fs::read_to_string(p).unwrap_or_else(|e| panic!("{}: {e}", p.display()))
}

fn value(s: &str) -> f64 {
    match s {
        "-inf" => f64::NEG_INFINITY,
        "inf" => f64::INFINITY,
        _ => s.parse().unwrap(),
    }
}

const QUICK_SEARCH: &str = r#""search": {"degree_schedule": [1, 2], "restarts": 2, "max_evals": 300}"#;

fn cusp_scenario(expected: &str) -> String {
    format!(
        r#"{{"schema": 1, "name": "cusp", "n": 1, {QUICK_SEARCH},
            "task": {{"kind": "thinness", "set": {{"kind": "cusp_region", "x_max": 1}},
                      "x": [[0, 0]], "v_radius": 0.5, "epsilon": 0.3,
                      "oracle_resolution": 32, "expected_verdict": "{expected}"}}}}"#
    )
}

fn small_jump_scenario() -> String {
    format!(
        r#"{{"schema": 1, "name": "small jump", "n": 1, {QUICK_SEARCH},
            "task": {{"kind": "envelope",
              "objective": {{"X": {{"kind": "ball", "center": [[0, 0]], "radius": 1}},
                            "W": {{"kind": "ball", "center": [[0, 0]], "radius": 0.5}},
                            "phi1": "2", "phi2": "-1", "boundary_values": "-1"}},
              "grid": {{"bounds": [[-1, 1], [-1, 1]], "resolution": [33, 33],
                       "restriction": {{"kind": "ball", "center": [[0, 0]], "radius": 1}}}},
              "probes": [[[0, 0]], [[0.75, 0]]]}}}}"#
    )
}

#[test]
fn jump_envelope_both_engines_pass() {
    let dir = tempfile::tempdir().unwrap();
    let f = scenarios().join("jump_envelope.json");
    let o = run(&["envelope", "--scenario", f.to_str().unwrap(), "--engine", "both", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let perron = rows(&read(&dir.path().join("perron.csv")));
    let expected = [-1.0, -1.0, 0.7549];
    for (r, e) in perron.iter().zip(expected) {
        assert!((value(&r[5]) - e).abs() <= 0.02, "{r:?}");
    }
    for r in rows(&read(&dir.path().join("sandwich.csv"))) {
        assert_eq!(r[8], "true", "{r:?}");
    }
}

#[test]
fn psh_objective_engines_agree() {
    let dir = tempfile::tempdir().unwrap();
    let f = scenarios().join("psh_self_envelope.json");
    let o = run(&["envelope", "--scenario", f.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    for r in rows(&read(&dir.path().join("sandwich.csv"))) {
        let (p, d) = (value(&r[5]), value(&r[6]));
        assert!((p - d).abs() <= 0.02, "{r:?}");
    }
}

#[test]
fn malformed_json_is_a_schema_error() {
    let dir = tempfile::tempdir().unwrap();
    let f = dir.path().join("broken.json");
    fs::write(&f, "{\"schema\": 1, \"name\": ").unwrap();
    let o = run(&["envelope", "--scenario", f.to_str().unwrap(), "--engine", "both", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("broken.json"), "{err}");
    assert!(rows(&stdout(&o))[0][3] == "schema_error");
}

#[test]
fn schema_error_names_the_field_path() {
    let dir = tempfile::tempdir().unwrap();
    let f = dir.path().join("typo.json");
    fs::write(&f, small_jump_scenario().replace("\"probes\"", "\"probe\"")).unwrap();
    let o = run(&["envelope", "--scenario", f.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("typo.json") && err.contains("task"), "{err}");
}

#[test]
fn wrong_command_for_scenario_kind_is_a_schema_error() {
    let dir = tempfile::tempdir().unwrap();
    let f = scenarios().join("slit_thinness.json");
    let o = run(&["envelope", "--scenario", f.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code(&o), 2);
}

#[test]
fn probe_outside_the_grid_is_an_engine_error() {
    let dir = tempfile::tempdir().unwrap();
    let f = dir.path().join("far.json");
    let text = small_jump_scenario()
        .replace("[[-1, 1], [-1, 1]]", "[[-0.5, 0.5], [-0.5, 0.5]]")
        .replace("[[0.75, 0]]", "[[0.9, 0]]");
    fs::write(&f, text).unwrap();
    let o = run(&["envelope", "--scenario", f.to_str().unwrap(), "--engine", "perron", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code(&o), 3, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn slit_scenario_is_non_thin() {
    let dir = tempfile::tempdir().unwrap();
    let f = scenarios().join("slit_thinness.json");
    let o = run(&["thinness", "--scenario", f.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    let report = rows(&read(&dir.path().join("thinness.csv")));
    assert_eq!(report[0][3], "non_thin");
    assert!(value(&report[0][1]) >= 0.999);
    assert!((value(&report[0][2]) + 1.0).abs() <= 0.02);
    let cert = rows(&read(&dir.path().join("certificate.csv")));
    assert_eq!(cert.iter().filter(|r| r[1] != "0").count(), 1, "degree-1 certificate");
}

#[test]
fn cusp_scenario_shows_thin_evidence() {
    let dir = tempfile::tempdir().unwrap();
    let f = scenarios().join("cusp_thinness.json");
    let o = run(&["thinness", "--scenario", f.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", stdout(&o));
    let report = rows(&read(&dir.path().join("thinness.csv")));
    assert!(value(&report[0][2]) >= -0.9);
}

#[test]
fn verdict_mismatch_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let f = dir.path().join("cusp.json");
    fs::write(&f, cusp_scenario("non_thin")).unwrap();
    let o = run(&["thinness", "--scenario", f.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code(&o), 1);
    assert_eq!(rows(&stdout(&o))[0][3], "fail");
}

#[test]
fn empty_directory_gives_empty_summary() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let o = run(&["suite", "--dir", dir.path().to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    assert!(rows(&stdout(&o)).is_empty());
    assert!(rows(&read(&out.join("summary.csv"))).is_empty());
}

#[test]
fn failing_scenario_is_marked_in_summary() {
    let dir = tempfile::tempdir().unwrap();
    fs::copy(scenarios().join("slit_thinness.json"), dir.path().join("a_slit.json")).unwrap();
    fs::write(dir.path().join("b_cusp.json"), cusp_scenario("non_thin")).unwrap();
    let out = dir.path().join("out");
    let o = run(&["suite", "--dir", dir.path().to_str().unwrap(), "--jobs", "2", "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 1);
    let summary = rows(&read(&out.join("summary.csv")));
    assert_eq!(summary.len(), 2);
    assert_eq!((summary[0][0].as_str(), summary[0][3].as_str()), ("a_slit.json", "pass"));
    assert_eq!((summary[1][0].as_str(), summary[1][3].as_str()), ("b_cusp.json", "fail"));
    assert!(out.join("a_slit/thinness.csv").exists());
}

fn tree(root: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else if p.file_name().unwrap() != "timing.log" {
                out.push((p.strip_prefix(root).unwrap().to_path_buf(), fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn outputs_are_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("in");
    fs::create_dir(&input).unwrap();
    for f in ["slit_thinness.json", "ball_in_ball_c2.json", "max_principle_catalog.json"] {
        fs::copy(scenarios().join(f), input.join(f)).unwrap();
    }
    fs::write(input.join("small_jump.json"), small_jump_scenario()).unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    let oa = run(&["suite", "--dir", input.to_str().unwrap(), "--jobs", "1", "--out", a.to_str().unwrap()]);
    let ob = run(&["suite", "--dir", input.to_str().unwrap(), "--jobs", "3", "--out", b.to_str().unwrap()]);
    assert_eq!(code(&oa), 0, "{}", stdout(&oa));
    assert_eq!(oa.stdout, ob.stdout);
    let (ta, tb) = (tree(&a), tree(&b));
    assert!(ta.len() >= 10);
    assert_eq!(ta, tb);
    assert!(a.join("timing.log").exists());
}

#[test]
fn seed_override_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let f = dir.path().join("p.json");
    fs::write(&f, small_jump_scenario()).unwrap();
    let go = |out: &str| {
        let out = dir.path().join(out);
        let o = run(&["--seed", "42", "envelope", "--scenario", f.to_str().unwrap(), "--engine", "disc", "--out", out.to_str().unwrap()]);
        assert_eq!(code(&o), 0);
        read(&out.join("disc.csv"))
    };
    assert_eq!(go("x"), go("y"));
}

#[test]
fn stdout_holds_only_the_summary() {
    let dir = tempfile::tempdir().unwrap();
    let f = scenarios().join("ball_in_ball_c2.json");
    let o = run(&["envelope", "--scenario", f.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    let text = stdout(&o);
    assert_eq!(text.lines().count(), 3, "{text}");
    assert!(text.starts_with("# schema=1\nfile,name,kind,status,exit_code,detail\n"));
}

#[test]
fn acceptance_directory_passes() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["suite", "--dir", scenarios().to_str().unwrap(), "--jobs", "2", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", stdout(&o));
    assert_eq!(rows(&stdout(&o)).len(), 6);
}
