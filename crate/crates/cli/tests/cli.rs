use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};
use tempfile::TempDir;

fn ucp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ucp")).args(args).output().expect("spawn ucp")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn schema() -> jsonschema::Validator {
    let text = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/schema/report.schema.json")).unwrap();
    jsonschema::validator_for(&serde_json::from_str(&text).unwrap()).expect("schema compiles")
}

fn assert_valid(report: &Value) {
    let v = schema();
    let errors: Vec<String> = v.iter_errors(report).map(|e| format!("{} at {}", e, e.instance_path())).collect();
    assert!(errors.is_empty(), "report violates schema: {errors:#?}");
}

fn read(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

/// Real diagonal densities; off-diagonal entries default to zero.
fn diag_functional(blocks: &[&[f64]]) -> Value {
    let dims: Vec<usize> = blocks.iter().map(|b| b.len()).collect();
    let densities: Vec<Value> = blocks
        .iter()
        .map(|b| {
            let n = b.len();
            let rows: Vec<Value> = (0..n)
                .map(|i| Value::Array((0..n).map(|j| json!([if i == j { b[i] } else { 0.0 }, 0.0])).collect()))
                .collect();
            Value::Array(rows)
        })
        .collect();
    json!({ "algebra": { "blocks": dims }, "densities": densities })
}

struct Fixture {
    dir: TempDir,
}

impl Fixture {
    fn new() -> Self {
        Self { dir: tempfile::tempdir().unwrap() }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn write(&self, name: &str, value: &Value) -> String {
        let p = self.path(name);
        std::fs::write(&p, serde_json::to_string_pretty(value).unwrap()).unwrap();
        p.display().to_string()
    }

    fn write_text(&self, name: &str, text: &str) -> String {
        let p = self.path(name);
        std::fs::write(&p, text).unwrap();
        p.display().to_string()
    }

    fn out(&self, name: &str) -> String {
        self.path(name).display().to_string()
    }
}

#[test]
fn reach_on_equal_center_states_exits_zero() {
    let f = Fixture::new();
    let w = f.write("w.json", &diag_functional(&[&[0.5, 0.1], &[0.4]]));
    let r = f.write("r.json", &diag_functional(&[&[0.3, 0.3], &[0.4]]));
    let out = f.out("report.json");
    let run = ucp(&["reach", "--omega", &w, "--rho", &r, "--out", &out, "--with-oracle"]);
    assert_eq!(code(&run), 0, "{}", stderr(&run));
    let report = read(Path::new(&out));
    assert_valid(&report);
    assert_eq!(report["outcome"]["check"], "state");
    assert_eq!(report["outcome"]["decision"]["verdict"], "yes");
    assert!(!report["outcome"]["decision"]["theorem"].as_str().unwrap().is_empty());
    assert_eq!(report["outcome"]["oracle"]["agreement"], "agree");
}

#[test]
fn reach_on_different_centers_exits_one_with_certificate() {
    let f = Fixture::new();
    let w = f.write("w.json", &diag_functional(&[&[0.5, 0.1], &[0.4]]));
    let r = f.write("r.json", &diag_functional(&[&[0.5, 0.3], &[0.2]]));
    let run = ucp(&["reach", "--omega", &w, "--rho", &r]);
    assert_eq!(code(&run), 1, "{}", stderr(&run));
    let report: Value = serde_json::from_slice(&run.stdout).unwrap();
    assert_valid(&report);
    assert_eq!(report["outcome"]["decision"]["certificate"]["kind"], "center_mismatch");
}

#[test]
fn boundary_pair_is_indeterminate() {
    let f = Fixture::new();
    let w = f.write("w.json", &diag_functional(&[&[0.5, 0.1], &[0.4]]));
    let r = f.write("r.json", &diag_functional(&[&[0.3, 0.3 + 1e-10], &[0.4 - 1e-10]]));
    let run = ucp(&["reach", "--omega", &w, "--rho", &r]);
    assert_eq!(code(&run), 2, "{}", stderr(&run));
    let report: Value = serde_json::from_slice(&run.stdout).unwrap();
    assert_valid(&report);
    assert_eq!(report["outcome"]["decision"]["verdict"], "indeterminate");
}

#[test]
fn hermitian_reach_reports_a_split() {
    let f = Fixture::new();
    let w = f.write("w.json", &diag_functional(&[&[0.8, -0.3], &[0.5]]));
    let r = f.write("r.json", &diag_functional(&[&[0.6, -0.1], &[0.5]]));
    let out = f.out("report.json");
    let run = ucp(&["reach", "--omega", &w, "--rho", &r, "--out", &out]);
    assert_eq!(code(&run), 0, "{}", stderr(&run));
    let report = read(Path::new(&out));
    assert_valid(&report);
    let outcome = &report["outcome"];
    assert_eq!(outcome["check"], "hermitian");
    assert_eq!(outcome["split"]["decision"]["verdict"], "yes");
    assert!(outcome["split"]["witness_residual"].as_f64().unwrap() < 1e-9);
}

#[test]
fn transport_on_violating_pair_exits_one() {
    let f = Fixture::new();
    // the negative part of ρ is heavier than that of ω on block 0
    let w = f.write("w.json", &diag_functional(&[&[0.8, -0.3], &[0.5]]));
    let r = f.write("r.json", &diag_functional(&[&[0.9, -0.4], &[0.5]]));
    let out = f.out("t.json");
    let run = ucp(&["transport", "--omega", &w, "--rho", &r, "--out", &out]);
    assert_eq!(code(&run), 1, "{}", stderr(&run));
    let report = read(Path::new(&out));
    assert_valid(&report);
    let cert = &report["outcome"]["decision"]["certificate"];
    assert_eq!(cert["block"], 0, "{cert}");
    assert!(report["outcome"].get("kraus_file").is_none());
}

#[test]
fn transport_writes_a_verified_kraus_file() {
    let f = Fixture::new();
    let w = f.write("w.json", &diag_functional(&[&[0.8, -0.3], &[0.5]]));
    let r = f.write("r.json", &diag_functional(&[&[0.6, -0.1], &[0.5]]));
    let out = f.out("t.json");
    let run = ucp(&["transport", "--omega", &w, "--rho", &r, "--out", &out, "--with-oracle"]);
    assert_eq!(code(&run), 0, "{}", stderr(&run));
    let report = read(Path::new(&out));
    assert_valid(&report);
    let v = &report["outcome"]["verification"];
    assert!(v["unitality_defect"].as_f64().unwrap() <= 1e-9);
    assert!(v["choi_min_eigenvalue"].as_f64().unwrap() >= -1e-9);
    assert!(v["composition_error"].as_f64().unwrap() <= 1e-8);

    let kraus_path = report["outcome"]["kraus_file"].as_str().unwrap().to_string();
    let kraus = ucp_core::io::load_channel(Path::new(&kraus_path)).unwrap().kraus(1e-12).unwrap();
    assert!(kraus.unitality_defect() <= 1e-9);
    let omega = ucp_core::io::load_functional(Path::new(&w)).unwrap();
    let rho = ucp_core::io::load_functional(Path::new(&r)).unwrap();
    assert!(kraus.predual_apply(&omega).unwrap().max_abs_diff(&rho).unwrap() <= 1e-9);

    let oracle_run = ucp(&["oracle", &out]);
    assert_eq!(code(&oracle_run), 0, "{}", stderr(&oracle_run));
}

#[test]
fn exact_channel_maps_omega_to_rho() {
    let f = Fixture::new();
    let w = f.write("w.json", &diag_functional(&[&[0.4, 0.2], &[0.4]]));
    let r = f.write("r.json", &diag_functional(&[&[0.1, 0.5], &[0.4]]));
    let out = f.out("e.json");
    let kraus_out = f.out("k.json");
    let run = ucp(&["exact-channel", "--omega", &w, "--rho", &r, "--out", &out, "--kraus-out", &kraus_out]);
    assert_eq!(code(&run), 0, "{}", stderr(&run));
    let report = read(Path::new(&out));
    assert_valid(&report);
    assert_eq!(report["outcome"]["kraus_file"], kraus_out.as_str());
    let kraus = ucp_core::io::load_channel(Path::new(&kraus_out)).unwrap().kraus(1e-12).unwrap();
    let omega = ucp_core::io::load_functional(Path::new(&w)).unwrap();
    let rho = ucp_core::io::load_functional(Path::new(&r)).unwrap();
    assert!(kraus.unitality_defect() <= 1e-8);
    assert!(kraus.predual_apply(&omega).unwrap().max_abs_diff(&rho).unwrap() <= 1e-7);
}

#[test]
fn exact_channel_rejects_hermitian_inputs() {
    let f = Fixture::new();
    let w = f.write("w.json", &diag_functional(&[&[0.8, -0.3], &[0.5]]));
    let run = ucp(&["exact-channel", "--omega", &w, "--rho", &w]);
    assert_eq!(code(&run), 3);
    assert!(stderr(&run).contains("not a state"), "{}", stderr(&run));
}

#[test]
fn convert_roundtrips_between_forms() {
    let f = Fixture::new();
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let channel = json!({
        "kraus": [
            [[[[s, 0.0], [0.0, 0.0]], [[0.0, 0.0], [s, 0.0]]], [[[1.0, 0.0]]]],
            [[[[0.0, 0.0], [s, 0.0]], [[s, 0.0], [0.0, 0.0]]], [[[0.0, 0.0]]]]
        ]
    });
    let k = f.write("k.json", &channel);
    let choi = f.out("c.json");
    let back = f.out("k2.json");
    assert_eq!(code(&ucp(&["convert", "--channel", &k, "--to", "choi", "--out", &choi])), 0);
    assert!(read(Path::new(&choi)).get("choi_blocks").is_some());
    assert_eq!(code(&ucp(&["convert", "--channel", &choi, "--to", "kraus", "--out", &back])), 0);
    let a = ucp_core::io::load_channel(Path::new(&k)).unwrap().choi();
    let b = ucp_core::io::load_channel(Path::new(&back)).unwrap().choi();
    assert!(a.max_abs_diff(&b).unwrap() <= 1e-9);
}

#[test]
fn jordan_ideal_norms_and_maxmix_reports() {
    let f = Fixture::new();
    let w = f.write("w.json", &diag_functional(&[&[0.8, -0.3], &[0.5]]));

    let run = ucp(&["jordan", "--omega", &w, "--rho", &w]);
    assert_eq!(code(&run), 0, "{}", stderr(&run));
    let report: Value = serde_json::from_slice(&run.stdout).unwrap();
    assert_valid(&report);
    let o = &report["outcome"];
    assert!((o["norm"].as_f64().unwrap() - 1.6).abs() < 1e-12);
    assert!((o["positive_mass"].as_f64().unwrap() - 1.3).abs() < 1e-12);
    assert!(o["scalings"]["residuals"].as_array().unwrap().iter().all(|r| r.as_f64().unwrap() < 1e-10));

    let run = ucp(&["ideal-norms", "--omega", &w]);
    assert_eq!(code(&run), 0, "{}", stderr(&run));
    let report: Value = serde_json::from_slice(&run.stdout).unwrap();
    assert_valid(&report);
    assert_eq!(report["outcome"]["rows"].as_array().unwrap().len(), 4);

    let tracial = f.write("t.json", &diag_functional(&[&[0.25, 0.25], &[0.5]]));
    let run = ucp(&["maxmix", "--omega", &tracial]);
    assert_eq!(code(&run), 0, "{}", stderr(&run));
    assert_valid(&serde_json::from_slice(&run.stdout).unwrap());

    let killed = f.write("z.json", &diag_functional(&[&[0.5, 0.5], &[0.0]]));
    let run = ucp(&["maxmix", "--omega", &killed, "--kernel", "1"]);
    assert_eq!(code(&run), 0, "{}", stderr(&run));
    let report: Value = serde_json::from_slice(&run.stdout).unwrap();
    assert_valid(&report);
    assert_eq!(report["inputs"]["kernel"], json!([1]));
}

#[test]
fn oracle_flags_a_tampered_report() {
    let f = Fixture::new();
    let w = f.write("w.json", &diag_functional(&[&[0.5, 0.1], &[0.4]]));
    let r = f.write("r.json", &diag_functional(&[&[0.5, 0.3], &[0.2]]));
    let out = f.out("report.json");
    assert_eq!(code(&ucp(&["reach", "--omega", &w, "--rho", &r, "--out", &out])), 1);

    let check = f.out("check.json");
    let run = ucp(&["oracle", &out, "--out", &check]);
    assert_eq!(code(&run), 0, "{}", stderr(&run));
    let verdict = read(Path::new(&check));
    assert_valid(&verdict);
    assert_eq!(verdict["outcome"]["oracle"]["agreement"], "agree");

    let mut report = read(Path::new(&out));
    report["outcome"]["decision"]["verdict"] = json!("yes");
    let tampered = f.write("tampered.json", &report);
    assert_eq!(code(&ucp(&["oracle", &tampered])), 1);

    // a bare decision with explicit inputs
    let decision = f.write("decision.json", &report["outcome"]["decision"]);
    assert_eq!(code(&ucp(&["oracle", &decision, "--omega", &w, "--rho", &r])), 1);
    assert_eq!(code(&ucp(&["oracle", &decision])), 3);
}

#[test]
fn reruns_differ_only_in_timestamp() {
    let f = Fixture::new();
    let w = f.write("w.json", &diag_functional(&[&[0.8, -0.3], &[0.5]]));
    let r = f.write("r.json", &diag_functional(&[&[0.6, -0.1], &[0.5]]));
    let strip = |p: &str| -> String {
        let mut v = read(Path::new(p));
        v["timestamp"] = json!(0);
        v["outcome"]["kraus_file"] = json!("");
        serde_json::to_string(&v).unwrap()
    };
    let a = f.out("a.json");
    let b = f.out("b.json");
    for out in [&a, &b] {
        let run = ucp(&["transport", "--omega", &w, "--rho", &r, "--seed", "9", "--with-oracle", "--out", out]);
        assert_eq!(code(&run), 0, "{}", stderr(&run));
    }
    assert_eq!(strip(&a), strip(&b));
    let ka = std::fs::read(f.path("a.transport.json")).unwrap();
    let kb = std::fs::read(f.path("b.transport.json")).unwrap();
    assert_eq!(ka, kb);

    let raw_a = std::fs::read_to_string(&a).unwrap();
    let raw_b = std::fs::read_to_string(&b).unwrap();
    let differing: Vec<(&str, &str)> = raw_a.lines().zip(raw_b.lines()).filter(|(x, y)| x != y).collect();
    assert!(
        differing.iter().all(|(x, _)| x.contains("\"timestamp\"") || x.contains("\"kraus_file\"")),
        "{differing:?}"
    );
}

#[test]
fn malformed_input_cites_the_field_path() {
    let f = Fixture::new();
    let good = f.write("w.json", &diag_functional(&[&[0.5, 0.5]]));
    let bad = f.write_text(
        "bad.json",
        r#"{"algebra": {"blocks": [2]}, "densities": [[[[1, 0], [0, 0]], [[0, 0], ["x", 0]]]]}"#,
    );
    let run = ucp(&["reach", "--omega", &bad, "--rho", &good]);
    assert_eq!(code(&run), 3);
    assert!(stderr(&run).contains("densities[0][1][1][0]"), "{}", stderr(&run));

    let truncated = f.write_text("trunc.json", r#"{"algebra": {"blocks": [2]}, "densities": ["#);
    let run = ucp(&["reach", "--omega", &truncated, "--rho", &good]);
    assert_eq!(code(&run), 3);
    assert!(stderr(&run).contains("line 1"), "{}", stderr(&run));

    let wrong = f.write("m.json", &diag_functional(&[&[0.5], &[0.5]]));
    let run = ucp(&["reach", "--omega", &wrong, "--rho", &good]);
    assert_eq!(code(&run), 3);
}

#[test]
fn tolerance_and_usage_errors_exit_three() {
    let f = Fixture::new();
    let w = f.write("w.json", &diag_functional(&[&[0.5, 0.5]]));
    assert_eq!(code(&ucp(&["reach", "--omega", &w, "--rho", &w, "--tol-eig", "-1"])), 3);
    assert_eq!(code(&ucp(&["reach", "--omega", &w, "--rho", &w, "--tol-dec", "0"])), 3);
    assert_eq!(code(&ucp(&["reach", "--omega", &w])), 3);
    assert_eq!(code(&ucp(&["frobnicate"])), 3);
    assert_eq!(code(&ucp(&["--help"])), 0);

    let algebra = f.write("a.json", &json!({ "blocks": [1, 1] }));
    let run = ucp(&["reach", "--omega", &w, "--rho", &w, "--algebra", &algebra]);
    assert_eq!(code(&run), 3);
    assert!(stderr(&run).contains("--algebra"), "{}", stderr(&run));
}

#[test]
fn ideal_table_respects_the_enumeration_cap() {
    let f = Fixture::new();
    let blocks: Vec<&[f64]> = vec![&[1.0 / 21.0]; 21];
    let w = f.write("w.json", &diag_functional(&blocks));
    let run = ucp(&["ideal-norms", "--omega", &w]);
    assert_eq!(code(&run), 3);
    assert!(stderr(&run).contains("cap"), "{}", stderr(&run));
}
