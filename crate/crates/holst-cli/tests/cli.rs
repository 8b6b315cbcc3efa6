use std::path::Path;
use std::process::Command;

use holst_cli::config::parse_config;
use holst_cli::fields::{read_fields, write_fields, FieldFile};
use holst_cli::report::ConstraintReport;
use holst_cli::suites::run_suites;
use holst_core::algebra::{Gamma, Signature};
use holst_core::constraints::{make_on_shell, GammaSource, OnShellSpec, Span};
use holst_core::eh;
use holst_core::grid::{sample_field, Coframe, FieldSpec, Grid3};
use holst_core::rng::stream;

fn holst(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_holst")).args(args).output().unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

fn field_file(n: usize, omega_amp: f64) -> FieldFile {
    let mut rng = stream(5, "cli-fields", 0);
    let g = Grid3::new(n).unwrap();
    let e = Coframe::from_spec(&FieldSpec::coframe_near_identity(&mut rng, 0.1, 1), g).unwrap();
    let w = sample_field(&FieldSpec::random(&mut rng, 1, 2, omega_amp, 1), g).unwrap();
    FieldFile::from_fields(&e, &w)
}

fn on_shell_file(n: usize) -> FieldFile {
    let mut rng = stream(5, "cli-onshell", 0);
    let spec = OnShellSpec {
        triad: eh::TriadSpec::random_near_identity(&mut rng, 0.1, 1),
        k: eh::SymSpec::random(&mut rng, 0.2, 1),
        gamma: Gamma::Finite(0.7),
        lambda: 0.0,
        sig: Signature::Lorentzian,
        span: Span::Spacelike,
        source: GammaSource::Lattice,
    };
    let s = make_on_shell(&spec, Grid3::new(n).unwrap()).unwrap().state;
    FieldFile::from_fields(&s.e, &s.omega_tilde)
}

const ALGEBRA: &str = r#"{"signature":"lorentzian","gamma":1,"Lambda":0,"grid_n":[8],"seed":1,"suites":["algebra"]}"#;

#[test]
fn verify_algebra_passes_and_writes_json() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "run config.json", ALGEBRA);
    let out = dir.path().join("out dir report.json");
    let o = holst(&["verify", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let r: ConstraintReport = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert!(r.rows.iter().all(|row| row.id.starts_with("algebra.") && !row.inputs_digest.is_empty()));
    assert!(r.all_pass());
}

#[test]
fn csv_has_one_line_per_check() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.json", ALGEBRA);
    let out = dir.path().join("r.csv");
    let o = holst(&["verify", "--config", &cfg, "--out", out.to_str().unwrap(), "--format", "csv"]);
    assert_eq!(o.status.code(), Some(0));
    let text = std::fs::read_to_string(&out).unwrap();
    let rows = run_suites(&parse_config(ALGEBRA).unwrap(), 1).0.rows.len();
    assert_eq!(csv::Reader::from_reader(text.as_bytes()).records().count(), rows);
    assert!(text.starts_with("id,anchor,inputs_digest"));
}

#[test]
fn reports_are_deterministic() {
    let cfg = parse_config(
        r#"{"signature":"euclidean","gamma":0.7,"Lambda":0.2,"grid_n":[4],"seed":9,"suites":["algebra","kernels","reduction","halfshell"]}"#,
    )
    .unwrap();
    let (a, ea) = run_suites(&cfg, 1);
    let (b, eb) = run_suites(&cfg, 1);
    assert!(ea.is_none() && eb.is_none());
    let values = |r: &ConstraintReport| r.rows.iter().map(|x| (x.id.clone(), x.value.to_bits(), x.inputs_digest.clone())).collect::<Vec<_>>();
    assert_eq!(values(&a), values(&b));
    let other = parse_config(
        r#"{"signature":"euclidean","gamma":0.7,"Lambda":0.2,"grid_n":[4],"seed":10,"suites":["algebra","kernels","reduction","halfshell"]}"#,
    )
    .unwrap();
    assert_ne!(values(&run_suites(&other, 1).0), values(&a));
}

#[test]
fn empty_suites_give_empty_report() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.json", r#"{"signature":"lorentzian","gamma":2,"grid_n":[],"suites":[]}"#);
    let o = holst(&["verify", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(0));
    let r: ConstraintReport = serde_json::from_slice(&o.stdout).unwrap();
    assert!(r.rows.is_empty());
}

#[test]
fn config_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    for (i, bad) in [
        r#"{"signature":"lorentzian","gamma":0,"grid_n":[8]}"#,
        r#"{"signature":"lorentzian","gamma":1,"grid_n":[8],"colour":"red"}"#,
        r#"{"signature":"lorentzian","gamma":1,"grid_n":[7]}"#,
        "not json",
    ]
    .iter()
    .enumerate()
    {
        let cfg = write(dir.path(), &format!("bad{i}.json"), bad);
        let o = holst(&["verify", "--config", &cfg]);
        assert_eq!(o.status.code(), Some(2), "{bad}");
    }
    assert_eq!(holst(&["verify"]).status.code(), Some(2));
    assert_eq!(holst(&["verify", "--config", "/nonexistent/c.json"]).status.code(), Some(2));
}

#[test]
fn failing_check_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "c.json",
        r#"{"signature":"lorentzian","gamma":1,"grid_n":[8],"suites":["algebra"],"tolerances":{"algebra.holst_f_det":1e-30}}"#,
    );
    let o = holst(&["verify", "--config", &cfg]);
    let r: ConstraintReport = serde_json::from_slice(&o.stdout).unwrap();
    let failed: Vec<_> = r.rows.iter().filter(|x| !x.pass).map(|x| x.id.as_str()).collect();
    if failed.is_empty() {
        // the determinant can be exact in floating point; then nothing fails
        assert_eq!(o.status.code(), Some(0));
    } else {
        assert_eq!(failed, ["algebra.holst_f_det"]);
        assert_eq!(o.status.code(), Some(1));
    }
}

#[test]
fn omega_tilde_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.json", r#"{"signature":"lorentzian","gamma":0.7,"grid_n":[],"suites":[]}"#);
    let input = dir.path().join("fields in.json");
    write_fields(&field_file(4, 0.5), &input).unwrap();
    let out = dir.path().join("fields out.json");
    let o = holst(&["omega-tilde", "--config", &cfg, "--fields", input.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let first = read_fields(&out).unwrap();
    let o = holst(&["omega-tilde", "--config", &cfg, "--fields", out.to_str().unwrap()]);
    let second: FieldFile = serde_json::from_slice(&o.stdout).unwrap();
    let drift = first.connection.iter().zip(&second.connection).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    assert!(drift < 1e-10);
}

#[test]
fn reduce_refuses_off_shell_and_reports_on_shell() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.json", r#"{"signature":"lorentzian","gamma":0.7,"grid_n":[],"suites":[],"seed":3}"#);
    let off = dir.path().join("off.json");
    write_fields(&field_file(4, 3.0), &off).unwrap();
    assert_eq!(holst(&["reduce", "--config", &cfg, "--fields", off.to_str().unwrap()]).status.code(), Some(1));

    let on = dir.path().join("on.json");
    write_fields(&on_shell_file(8), &on).unwrap();
    let o = holst(&["reduce", "--config", &cfg, "--fields", on.to_str().unwrap(), "--format", "csv"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stdout).contains("reduce.hamiltonian_deviation"));
}

#[test]
fn malformed_field_file_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.json", r#"{"signature":"lorentzian","gamma":0.7,"grid_n":[],"suites":[]}"#);
    let f = write(dir.path(), "f.json", r#"{"grid_n":4,"coframe":[1,2,3],"connection":[]}"#);
    assert_eq!(holst(&["omega-tilde", "--config", &cfg, "--fields", &f]).status.code(), Some(2));
}

#[test]
fn degenerate_coframe_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.json", r#"{"signature":"lorentzian","gamma":0.7,"grid_n":[],"suites":[]}"#);
    let mut f = field_file(4, 0.1);
    // e_3 = e_2 at every site
    for s in 0..64 {
        let e2: Vec<f64> = f.coframe[s * 12 + 4..s * 12 + 8].to_vec();
        f.coframe[s * 12 + 8..s * 12 + 12].copy_from_slice(&e2);
    }
    let p = dir.path().join("null.json");
    write_fields(&f, &p).unwrap();
    let o = holst(&["omega-tilde", "--config", &cfg, "--fields", p.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
}
