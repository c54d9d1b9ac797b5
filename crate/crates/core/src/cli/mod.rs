//! Command-line front end.
//!
//! Exit codes: 0 success, 2 incompatible data, 3 spectrum hit, 4 configuration or
//! expression error, 1 anything else. `HODGE_FORMS_THREADS` sets the worker count.

pub mod config;
pub mod expr;
pub mod report;

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use crate::coefficients::ellipticity_report;
use crate::drivers::{check_compatibility, check_ellipticity, gaffney_constant, hodge_spectrum, solve, ProblemKind, ProblemSpec, SolveReport};
use crate::error::{Error, Result};
use crate::galerkin::BcKind;
use crate::mesh::{generate_mesh, validate_mesh, SimplicialMesh};
use crate::spectral::harmonic_basis;
use crate::verification::convergence_study;
use config::Config;
use report::{value_of, Report};

pub const THREADS_ENV: &str = "HODGE_FORMS_THREADS";

#[derive(Parser, Debug)]
#[command(name = "hodge-forms", version, about = "Boundary value problems and spectra for differential forms")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug, Clone)]
pub enum Command {
    /// Solve the problem described by the configuration.
    Solve(CommonArgs),
    /// Eigenvalues of the Hodge pencil closest to zero.
    Eig(CommonArgs),
    /// Gaffney constant, optionally over refined meshes.
    Gaffney(CommonArgs),
    /// Div-curl problem with the boundary condition of `[problem] bc`.
    Divcurl(CommonArgs),
    /// Dimension of the harmonic fields.
    Harmonics(CommonArgs),
    /// Convergence study of a manufactured case.
    Convergence(CommonArgs),
    /// Ellipticity constants of the coefficients.
    CheckEllipticity(CommonArgs),
    /// Mesh validation and topology.
    MeshInfo(CommonArgs),
}

#[derive(Args, Debug, Clone, Default)]
pub struct CommonArgs {
    /// Configuration file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Mesh file, overriding the configuration.
    #[arg(long)]
    pub mesh: Option<PathBuf>,
    /// Number of eigenvalues.
    #[arg(long)]
    pub count: Option<usize>,
    /// Number of mesh levels, each twice as fine as the last.
    #[arg(long)]
    pub levels: Option<usize>,
    /// Output directory for `report.json` (and `convergence.csv`).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Solve(_) => "solve",
            Command::Eig(_) => "eig",
            Command::Gaffney(_) => "gaffney",
            Command::Divcurl(_) => "divcurl",
            Command::Harmonics(_) => "harmonics",
            Command::Convergence(_) => "convergence",
            Command::CheckEllipticity(_) => "check-ellipticity",
            Command::MeshInfo(_) => "mesh-info",
        }
    }

    pub fn args(&self) -> &CommonArgs {
        match self {
            Command::Solve(a)
            | Command::Eig(a)
            | Command::Gaffney(a)
            | Command::Divcurl(a)
            | Command::Harmonics(a)
            | Command::Convergence(a)
            | Command::CheckEllipticity(a)
            | Command::MeshInfo(a) => a,
        }
    }
}

/// Parse arguments, run, write outputs and return the exit code.
pub fn run_command<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 4 } else { 0 };
        }
    };
    let threads = match threads_from_env() {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: {e}");
            return e.exit_code();
        }
    };
    let (report, csv) = match run_with_threads(threads, || execute(&cli.command)) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return e.exit_code();
        }
    };
    let code = report.exit_code();
    if let Some(err) = &report.error {
        eprintln!("error: {}", err["message"].as_str().unwrap_or("unknown"));
    }
    match output_dir(&cli.command) {
        Some(dir) => {
            if let Err(e) = write_outputs(&dir, &report, csv.as_deref()) {
                eprintln!("error: {e}");
                return if code == 0 { e.exit_code() } else { code };
            }
            eprintln!("wrote {}", dir.join("report.json").display());
        }
        None => println!("{}", report.to_json()),
    }
    code
}

fn threads_from_env() -> Result<Option<usize>> {
    match std::env::var(THREADS_ENV) {
        Err(_) => Ok(None),
        Ok(v) if v.trim().is_empty() => Ok(None),
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(t) if t > 0 => Ok(Some(t)),
            _ => Err(Error::Config(format!("{THREADS_ENV}={v}: expected a positive integer"))),
        },
    }
}

/// Run `f` on a dedicated pool; `None` uses rayon's default size.
pub fn run_with_threads<R: Send>(threads: Option<usize>, f: impl FnOnce() -> R + Send) -> Result<R> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(t) = threads {
        builder = builder.num_threads(t);
    }
    let pool = builder.build().map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}

fn output_dir(cmd: &Command) -> Option<PathBuf> {
    if let Some(out) = &cmd.args().out {
        return Some(out.clone());
    }
    let cfg = cmd.args().config.as_deref().and_then(|p| Config::load(p).ok())?;
    cfg.output_dir().map(PathBuf::from)
}

fn write_outputs(dir: &Path, report: &Report, csv: Option<&str>) -> Result<()> {
    let io = |p: &Path, e: std::io::Error| Error::Io { path: p.display().to_string(), msg: e.to_string() };
    std::fs::create_dir_all(dir).map_err(|e| io(dir, e))?;
    let path = dir.join("report.json");
    std::fs::write(&path, report.to_json() + "\n").map_err(|e| io(&path, e))?;
    if let Some(csv) = csv {
        let path = dir.join("convergence.csv");
        std::fs::write(&path, csv).map_err(|e| io(&path, e))?;
    }
    Ok(())
}

/// Run one command. Failures are recorded in the report; the CSV accompanies convergence runs.
pub fn execute(cmd: &Command) -> (Report, Option<String>) {
    let args = cmd.args();
    let cfg = match &args.config {
        Some(p) => Config::load(p),
        None => Ok(Config::default()),
    };
    let cfg = match cfg {
        Ok(c) => c,
        Err(e) => {
            let mut r = Report::new(cmd.name(), json!({ "flags": flags_echo(args) }));
            r.set_error(&e);
            return (r, None);
        }
    };
    let mut report = Report::new(cmd.name(), json!({ "config": cfg.echo(), "flags": flags_echo(args) }));
    let mut csv = None;
    let outcome = match cmd {
        Command::Solve(_) => run_solve(&cfg, args, None, &mut report),
        Command::Divcurl(_) => cfg.bc().and_then(|bc| {
            let kind = if bc == BcKind::Normal { ProblemKind::DivcurlN } else { ProblemKind::DivcurlT };
            run_solve(&cfg, args, Some(kind), &mut report)
        }),
        Command::Eig(_) => run_eig(&cfg, args, &mut report),
        Command::Gaffney(_) => run_gaffney(&cfg, args, &mut report),
        Command::Harmonics(_) => run_harmonics(&cfg, args, &mut report),
        Command::Convergence(_) => run_convergence(&cfg, args, &mut report).map(|c| csv = Some(c)),
        Command::CheckEllipticity(_) => run_ellipticity(&cfg, args, &mut report),
        Command::MeshInfo(_) => run_mesh_info(&cfg, args, &mut report),
    };
    if let Err(e) = outcome {
        report.set_error(&e);
    }
    report.timings.mark("run");
    (report, csv)
}

fn flags_echo(a: &CommonArgs) -> Value {
    json!({
        "mesh": a.mesh.as_ref().map(|p| p.display().to_string()),
        "count": a.count,
        "levels": a.levels,
    })
}

fn echo_spec(report: &mut Report, spec: &ProblemSpec) {
    if let Value::Object(m) = &mut report.spec_echo {
        m.insert("dimension".into(), json!(spec.n()));
        m.insert("kind".into(), json!(spec.kind));
        m.insert("k".into(), json!(spec.k));
        m.insert("lambda".into(), json!(spec.lambda));
        m.insert("mesh".into(), mesh_echo(&spec.mesh));
    }
}

fn echo_mesh(report: &mut Report, mesh: &SimplicialMesh) {
    if let Value::Object(m) = &mut report.spec_echo {
        m.insert("dimension".into(), json!(mesh.dim()));
        m.insert("mesh".into(), mesh_echo(mesh));
    }
}

fn mesh_echo(mesh: &SimplicialMesh) -> Value {
    json!({ "vertices": mesh.num_vertices(), "cells": mesh.num_cells(), "h": mesh.h() })
}

fn record_solution(report: &mut Report, sol: &SolveReport) {
    report.residuals = sol.residuals.clone();
    report.boundary_residuals = value_of(&sol.boundary_residuals);
    report.compatibility = value_of(&sol.compatibility);
    report.nullspace_dim = sol.nullspace_dim;
    report.extra.insert(
        "solution".into(),
        json!({
            "kind": sol.kind,
            "dofs": sol.dofs,
            "h": sol.h,
            "digest": sol.solution_digest,
            "errors": value_of(&sol.errors),
            "warnings": sol.warnings,
        }),
    );
}

fn run_solve(cfg: &Config, args: &CommonArgs, kind: Option<ProblemKind>, report: &mut Report) -> Result<()> {
    let spec = cfg.problem_spec(args.mesh.as_deref(), kind)?;
    if let Some(k) = kind {
        if spec.kind != k && !(spec.kind.is_divcurl() && k.is_divcurl()) {
            return Err(Error::Config(format!("divcurl needs a div-curl problem, got {}", spec.kind)));
        }
    }
    echo_spec(report, &spec);
    report.timings.mark("setup");
    match solve(&spec) {
        Ok(sol) => {
            record_solution(report, &sol);
            Ok(())
        }
        Err(e @ Error::DataIncompatible(_)) => {
            if let Ok(c) = check_compatibility(&spec) {
                report.compatibility = value_of(&c);
            }
            Err(e)
        }
        Err(e) => Err(e),
    }
}

fn run_eig(cfg: &Config, args: &CommonArgs, report: &mut Report) -> Result<()> {
    let default = if cfg.bc()? == BcKind::Normal { ProblemKind::HodgeN } else { ProblemKind::HodgeT };
    let spec = cfg.problem_spec(args.mesh.as_deref(), Some(default))?;
    echo_spec(report, &spec);
    let count = args.count.or(cfg.count()?).unwrap_or(6);
    report.timings.mark("setup");
    let eig = hodge_spectrum(&spec, count)?;
    let worst = eig.residuals.iter().cloned().fold(0.0, f64::max);
    report.residuals.insert("eigen_max".into(), worst);
    report.spectrum = Some(value_of(&eig));
    Ok(())
}

/// Mesh resolutions for multi-level runs.
fn level_list(cfg: &Config, args: &CommonArgs, default_levels: usize) -> Result<Vec<usize>> {
    let levels = args.levels.or(cfg.levels()?).unwrap_or(default_levels);
    let base = match cfg.integer("mesh", "m")? {
        Some(m) if m > 0 => m as usize,
        Some(_) => return Err(Error::Config("[mesh] m must be positive".into())),
        None => 8,
    };
    Ok((0..levels).map(|i| base << i).collect())
}

fn run_gaffney(cfg: &Config, args: &CommonArgs, report: &mut Report) -> Result<()> {
    let bc = cfg.bc()?;
    let k = cfg.degree()?;
    let meshes: Vec<Arc<SimplicialMesh>> = if args.levels.is_some() && args.mesh.is_none() && cfg.get("mesh", "file").is_none() {
        level_list(cfg, args, 1)?
            .into_iter()
            .map(|m| Ok(Arc::new(generate_mesh(&cfg.mesh_spec(Some(m))?)?)))
            .collect::<Result<_>>()?
    } else {
        vec![cfg.mesh(args.mesh.as_deref())?.0]
    };
    let finest = meshes.last().expect("at least one level").clone();
    echo_mesh(report, &finest);
    let mut levels = Vec::new();
    for mesh in &meshes {
        let n = mesh.dim();
        let b = cfg.operator("B", n, k, mesh)?;
        levels.push(gaffney_constant(mesh.clone(), k, &b, bc)?);
    }
    let constants: Vec<f64> = levels.iter().map(|g| g.constant).collect();
    let changes: Vec<f64> = constants.windows(2).map(|w| (w[1] - w[0]).abs() / w[0].abs()).collect();
    let last = levels.last().expect("at least one level");
    report.residuals.insert("rayleigh".into(), last.residual);
    report.nullspace_dim = Some(last.excluded_dim);
    report.gaffney = Some(json!({
        "constant": last.constant,
        "levels": value_of(&levels),
        "constants": constants,
        "successive_change": changes,
    }));
    Ok(())
}

fn run_harmonics(cfg: &Config, args: &CommonArgs, report: &mut Report) -> Result<()> {
    let (mesh, _) = cfg.mesh(args.mesh.as_deref())?;
    echo_mesh(report, &mesh);
    let k = cfg.degree()?;
    let bc = cfg.bc()?;
    let (_, basis) = harmonic_basis(mesh, k, bc)?;
    report.nullspace_dim = Some(basis.dim);
    report.extra.insert("harmonics".into(), value_of(&basis));
    Ok(())
}

fn run_convergence(cfg: &Config, args: &CommonArgs, report: &mut Report) -> Result<String> {
    let case = cfg.case().ok_or_else(|| Error::Config("convergence needs [problem] case".into()))?;
    let levels = level_list(cfg, args, 4)?;
    if let Value::Object(m) = &mut report.spec_echo {
        m.insert("case".into(), json!(case.name));
        m.insert("levels".into(), json!(levels));
        m.insert("dimension".into(), json!(case.domain.mesh_spec(1).map_or(2, |s| generate_mesh(&s).map_or(2, |m| m.dim()))));
    }
    let table = convergence_study(&case, &levels)?;
    for (name, col) in &table.columns {
        if let Some(v) = col.last() {
            report.residuals.insert(name.clone(), *v);
        }
    }
    report.extra.insert("convergence".into(), value_of(&table));
    Ok(table.to_csv())
}

fn run_ellipticity(cfg: &Config, args: &CommonArgs, report: &mut Report) -> Result<()> {
    let spec = cfg.problem_spec(args.mesh.as_deref(), None)?;
    echo_spec(report, &spec);
    check_ellipticity(&spec)?;
    let mut samples = Vec::new();
    let (n, mesh) = (spec.n(), &spec.mesh);
    // pointwise constants need A on one degree above B
    if spec.a_degree() == spec.k + 1 && spec.k >= 0 && (spec.k as usize) < n {
        let bary = vec![1.0 / (n + 1) as f64; n + 1];
        let cells = mesh.num_cells();
        let picks: Vec<usize> = if spec.a.is_constant() && spec.b.is_constant() { vec![0] } else { (0..4).map(|i| i * cells / 4).collect() };
        for c in picks {
            let x = mesh.cell_point(c, &bary);
            let r = ellipticity_report(&spec.a.at(&x), &spec.b.at(&x), n, spec.k)?;
            samples.push(json!({ "x": x, "constants": value_of(&r) }));
        }
    }
    report.extra.insert("ellipticity".into(), json!({ "hypotheses": "satisfied", "samples": samples }));
    Ok(())
}

fn run_mesh_info(cfg: &Config, args: &CommonArgs, report: &mut Report) -> Result<()> {
    let (mesh, _) = cfg.mesh(args.mesh.as_deref())?;
    echo_mesh(report, &mesh);
    let diag = validate_mesh(&mesh);
    report.extra.insert(
        "mesh".into(),
        json!({
            "dimension": mesh.dim(),
            "vertices": mesh.num_vertices(),
            "cells": mesh.num_cells(),
            "boundary_faces": mesh.num_boundary_faces(),
            "h": mesh.h(),
            "volume": mesh.volume(),
            "euler_characteristic": mesh.euler_characteristic(),
            "boundary_components": mesh.boundary_components().len(),
            "domain_components": mesh.domain_components().len(),
            "corners": mesh.corner_count(),
            "checks": value_of(&diag),
        }),
    );
    if diag.all_passed() {
        Ok(())
    } else {
        let failed: Vec<&str> = diag.checks.iter().filter(|c| !c.passed).map(|c| c.name).collect();
        Err(Error::MeshInvalid(format!("failed mesh checks: {}", failed.join(", "))))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_config(text: &str) -> tempfile::NamedTempFile {
        use std::io::Write;
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(text.as_bytes()).unwrap();
        f
    }

    fn run(cmd: fn(CommonArgs) -> Command, text: &str) -> Report {
        let f = write_config(text);
        execute(&cmd(CommonArgs { config: Some(f.path().into()), ..Default::default() })).0
    }

    #[test]
    fn help_exits_zero_and_bad_flags_exit_four() {
        assert_eq!(run_command(["hodge-forms", "--help"]), 0);
        assert_eq!(run_command(["hodge-forms", "solve", "--bogus"]), 4);
        assert_eq!(run_command(["hodge-forms", "frobnicate"]), 4);
    }

    #[test]
    fn missing_config_file_is_reported() {
        let r = execute(&Command::Solve(CommonArgs { config: Some("/nonexistent/x.cfg".into()), ..Default::default() })).0;
        assert_eq!(r.exit_code(), 1);
    }

    #[test]
    fn solve_writes_required_keys() {
        let r = run(Command::Solve, "[problem]\ncase = square_tangential_hodge\n[mesh]\nm = 4\n");
        assert_eq!(r.exit_code(), 0, "{:?}", r.error);
        let v = r.to_value();
        assert!(v["residuals"]["equation"].as_f64().unwrap() < 1e-9);
        assert!(v["sign_convention"]["operator_sign"].is_number());
    }

    #[test]
    fn unknown_key_is_a_config_error() {
        let r = run(Command::Solve, "[problem]\nkind = hodge_t\nshift = 1\n");
        assert_eq!(r.exit_code(), 4);
    }

    #[test]
    fn harmonics_on_annulus() {
        let r = run(Command::Harmonics, "[problem]\nk = 1\nbc = tangential\n[mesh]\ngenerator = annulus\nm = 6\n");
        assert_eq!(r.nullspace_dim, Some(1), "{:?}", r.error);
    }

    #[test]
    fn mesh_info_counts() {
        let r = run(Command::MeshInfo, "[mesh]\ngenerator = disk\nm = 4\n");
        assert_eq!(r.exit_code(), 0, "{:?}", r.error);
        assert_eq!(r.extra["mesh"]["euler_characteristic"], json!(1));
    }
}
