//! End-to-end runs of the `hodge-forms` binary.

use std::path::Path;
use std::process::{Command, Output};

use hodge_forms::cli::config::Config;
use hodge_forms::mesh::{generate_mesh, write_mesh, MeshSpec};
use serde_json::Value;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_hodge-forms"));
    c.env_remove("HODGE_FORMS_THREADS");
    c
}

fn write(dir: &Path, name: &str, text: &str) -> std::path::PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn json_stdout(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&out.stdout)))
}

const HODGE: &str = r#"[problem]
kind = hodge_t
k = 1
lambda = 1

[mesh]
generator = square
m = 6

[coefficients]
A[12][12] = "1 + 0.5*sin(x1)*sin(x2)"

[data]
f[1] = "cos(x1)*sin(2*x2)"
f[2] = "sin(x1)*cos(x2)"
"#;

#[test]
fn solve_writes_report_and_echo_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "hodge.cfg", HODGE);
    let out_dir = dir.path().join("out");
    let status = bin().args(["solve", "--config"]).arg(&cfg).arg("--out").arg(&out_dir).status().unwrap();
    assert_eq!(status.code(), Some(0));
    let text = std::fs::read_to_string(out_dir.join("report.json")).unwrap();
    let report: Value = serde_json::from_str(&text).unwrap();
    for key in ["spec_echo", "sign_convention", "residuals", "boundary_residuals", "compatibility", "timings"] {
        assert!(report.get(key).is_some(), "missing {key}");
    }
    assert!(report["residuals"]["equation"].as_f64().unwrap() < 1e-9);
    // every float carries 17 significant digits
    assert!(text.contains("e-") || text.contains("e0"));
    let echoed = Config::from_echo(&report["spec_echo"]["config"]).unwrap();
    assert_eq!(echoed, Config::parse(HODGE).unwrap());
    assert_eq!(Config::parse(&echoed.to_text()).unwrap(), echoed);
}

#[test]
fn config_errors_exit_four_with_location() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "bad.cfg", "[problem]\nkind = hodge_t\nshift = 2\n");
    let out = bin().args(["solve", "--config"]).arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(4));
    let report = json_stdout(&out);
    assert!(report["error"]["message"].as_str().unwrap().contains("line 3"));

    let cfg = write(dir.path(), "expr.cfg", "[problem]\nkind = hodge_t\nk = 1\n[mesh]\ngenerator = square\n[data]\nf[1] = \"x1 +\"\n");
    let out = bin().args(["solve", "--config"]).arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(4));
    assert_eq!(json_stdout(&out)["error"]["code"], "expression");
}

#[test]
fn bad_thread_count_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "hodge.cfg", HODGE);
    let out = bin().env("HODGE_FORMS_THREADS", "many").args(["solve", "--config"]).arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn spectrum_hit_exits_three() {
    let dir = tempfile::tempdir().unwrap();
    let eig = write(dir.path(), "eig.cfg", "[problem]\nkind = hodge_t\nk = 1\n[mesh]\ngenerator = square\nm = 8\n");
    let out = bin().args(["eig", "--count", "2", "--config"]).arg(&eig).output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    let sigma = json_stdout(&out)["spectrum"]["sigma"][0].as_f64().unwrap();
    let text = format!("[problem]\nkind = hodge_t\nk = 1\nlambda = {sigma:.17e}\n[mesh]\ngenerator = square\nm = 8\n[data]\nf[1] = \"cos(x1)*sin(2*x2)\"\n");
    let hit = write(dir.path(), "hit.cfg", &text);
    let out = bin().args(["solve", "--config"]).arg(&hit).output().unwrap();
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn convergence_writes_csv() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "conv.cfg", "[problem]\ncase = square_tangential_hodge\n[mesh]\nm = 4\n");
    let out_dir = dir.path().join("conv");
    let status = bin().args(["convergence", "--levels", "3", "--config"]).arg(&cfg).arg("--out").arg(&out_dir).status().unwrap();
    assert_eq!(status.code(), Some(0));
    let csv = std::fs::read_to_string(out_dir.join("convergence.csv")).unwrap();
    let mut lines = csv.lines();
    assert!(lines.next().unwrap().starts_with("h,dofs,err_L2,err_H1,"));
    assert_eq!(lines.count(), 3);
}

#[test]
fn mesh_info_reads_mesh_files() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("annulus.mesh");
    write_mesh(&generate_mesh(&MeshSpec::Annulus { r0: 0.5, r1: 1.0, m: 6 }).unwrap(), &path).unwrap();
    let out = bin().args(["mesh-info", "--mesh"]).arg(&path).output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    let report = json_stdout(&out);
    assert_eq!(report["mesh"]["euler_characteristic"], 0);
    assert_eq!(report["mesh"]["boundary_components"], 2);
}

#[test]
fn gaffney_and_ellipticity_commands() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "g.cfg", "[problem]\nk = 1\nbc = normal\n[mesh]\ngenerator = square\nm = 4\n");
    let out = bin().args(["gaffney", "--levels", "2", "--config"]).arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    let c = json_stdout(&out)["gaffney"]["constant"].as_f64().unwrap();
    assert!((c - 1.0).abs() < 1e-9);

    let cfg = write(dir.path(), "e.cfg", HODGE);
    let out = bin().args(["check-ellipticity", "--config"]).arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let bad = HODGE.replace("1 + 0.5*sin(x1)*sin(x2)", "-1");
    let cfg = write(dir.path(), "bad.cfg", &bad);
    let out = bin().args(["check-ellipticity", "--config"]).arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
}
