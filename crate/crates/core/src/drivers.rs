//! Boundary value problem drivers: Hodge, Maxwell, Stokes, Dirichlet and
//! div-curl systems, Gaffney constants, and the compatibility checks the data must satisfy.

use std::collections::hash_map::DefaultHasher;
use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::hash::{Hash, Hasher};
use std::str::FromStr;
use std::sync::Arc;

use nalgebra::DVector;
use rayon::prelude::*;
use serde::Serialize;

use crate::coefficients::{legendre_constant, legendre_hadamard_constant, OperatorField};
use crate::error::{Error, Result};
use crate::exterior::{binomial, codifferential_sign, interior_matrix, wedge_matrix};
use crate::fields::{AnalyticField, H_FD};
use crate::galerkin::{
    assemble_cellwise_pairing, assemble_gradient, assemble_load_full, assemble_mass, assemble_mass_full, assemble_problem,
    assemble_stiffness, assemble_stiffness_full, build_space, cell_codiff, cell_d, cell_d_matrix, cell_value, cellwise_error,
    field_errors, nodal_l2_norm, postprocess_fields, AssembledProblem, BcKind, BoundaryResiduals, DofSpace, FormCoefficients,
    LoadData, NaturalData, PostOptions,
};
use crate::linalg::{dot, norm, solve_refined, CsrMatrix, Factorization};
use crate::mesh::SimplicialMesh;
use crate::quadrature::rule;
use crate::spectral::{
    eig_pairs, harmonic_basis, near_kernel, rayleigh_min, solve_constrained, solve_linear, EigenResult, LinearSolution, HARMONIC_C_TAU, SOLVE_TOL,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ProblemKind {
    HodgeT,
    HodgeN,
    MaxwellT,
    MaxwellN,
    StokesT,
    StokesN,
    Dirichlet,
    DivcurlT,
    DivcurlN,
}

impl ProblemKind {
    pub const ALL: [ProblemKind; 9] = [
        ProblemKind::HodgeT,
        ProblemKind::HodgeN,
        ProblemKind::MaxwellT,
        ProblemKind::MaxwellN,
        ProblemKind::StokesT,
        ProblemKind::StokesN,
        ProblemKind::Dirichlet,
        ProblemKind::DivcurlT,
        ProblemKind::DivcurlN,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ProblemKind::HodgeT => "hodge_t",
            ProblemKind::HodgeN => "hodge_n",
            ProblemKind::MaxwellT => "maxwell_t",
            ProblemKind::MaxwellN => "maxwell_n",
            ProblemKind::StokesT => "stokes_t",
            ProblemKind::StokesN => "stokes_n",
            ProblemKind::Dirichlet => "dirichlet",
            ProblemKind::DivcurlT => "divcurl_t",
            ProblemKind::DivcurlN => "divcurl_n",
        }
    }

    /// Tangential (or Dirichlet) boundary condition family.
    pub fn is_tangential(self) -> bool {
        matches!(self, ProblemKind::HodgeT | ProblemKind::MaxwellT | ProblemKind::StokesT | ProblemKind::Dirichlet | ProblemKind::DivcurlT)
    }

    pub fn is_divcurl(self) -> bool {
        matches!(self, ProblemKind::DivcurlT | ProblemKind::DivcurlN)
    }
}

impl fmt::Display for ProblemKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ProblemKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        ProblemKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown problem kind `{s}`")))
    }
}

/// Everything a driver needs. Absent data fields are zero.
#[derive(Clone, Debug)]
pub struct ProblemSpec {
    pub kind: ProblemKind,
    pub mesh: Arc<SimplicialMesh>,
    pub k: isize,
    pub lambda: f64,
    /// Acts on `Λ^{k+1}`; on `Λ^k` for div-curl.
    pub a: OperatorField,
    /// Acts on `Λ^k`.
    pub b: OperatorField,
    /// `Λ^k` load; the `Λ^{k+1}` right-hand side of `d(Aω) = f` for div-curl.
    pub f: Option<AnalyticField>,
    pub big_f: Option<AnalyticField>,
    /// `Λ^{k−1}` data.
    pub g: Option<AnalyticField>,
    pub omega0: Option<AnalyticField>,
    /// Boundary pressure, a `Λ^{k−1}` field.
    pub p0: Option<AnalyticField>,
    pub exact: Option<AnalyticField>,
    pub exact_pressure: Option<AnalyticField>,
}

impl ProblemSpec {
    pub fn new(kind: ProblemKind, mesh: Arc<SimplicialMesh>, k: isize) -> Self {
        let n = mesh.dim();
        let a_deg = if kind.is_divcurl() { k } else { k + 1 };
        ProblemSpec {
            kind,
            mesh,
            k,
            lambda: 0.0,
            a: OperatorField::identity(n, a_deg),
            b: OperatorField::identity(n, k),
            f: None,
            big_f: None,
            g: None,
            omega0: None,
            p0: None,
            exact: None,
            exact_pressure: None,
        }
    }

    pub fn n(&self) -> usize {
        self.mesh.dim()
    }

    pub fn a_degree(&self) -> isize {
        if self.kind.is_divcurl() {
            self.k
        } else {
            self.k + 1
        }
    }

    pub fn f_degree(&self) -> isize {
        if self.kind.is_divcurl() {
            self.k + 1
        } else {
            self.k
        }
    }

    /// Degrees and dimensions of every field.
    pub fn validate(&self) -> Result<()> {
        let n = self.n();
        if self.k < 0 || self.k as usize > n {
            return Err(Error::DegreeOutOfRange { n, k: self.k });
        }
        let ops = [("A", &self.a, self.a_degree()), ("B", &self.b, self.k)];
        for (name, op, deg) in ops {
            if op.n() != n {
                return Err(Error::Config(format!("{name} has dimension {} but the mesh has {n}", op.n())));
            }
            if op.source_degree() != deg || op.target_degree() != deg {
                return Err(Error::Config(format!("{name} must act on {deg}-forms for {}", self.kind)));
            }
        }
        let fields = [
            ("f", &self.f, self.f_degree()),
            ("F", &self.big_f, self.k + 1),
            ("g", &self.g, self.k - 1),
            ("omega0", &self.omega0, self.k),
            ("p0", &self.p0, self.k - 1),
            ("exact", &self.exact, self.k),
            ("exact_pressure", &self.exact_pressure, self.k - 1),
        ];
        for (name, fld, deg) in fields {
            if let Some(fl) = fld {
                if fl.n() != n || fl.degree() != deg {
                    return Err(Error::Config(format!(
                        "{name} must be a {deg}-form in dimension {n}, got a {}-form in dimension {}",
                        fl.degree(),
                        fl.n()
                    )));
                }
            }
        }
        Ok(())
    }
}

/// One evaluated compatibility condition.
#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct CompatibilityCheck {
    pub name: String,
    pub passed: bool,
    pub magnitude: f64,
    pub tolerance: f64,
    pub detail: String,
}

#[derive(Clone, Debug, Default, Serialize, PartialEq)]
pub struct CompatibilityReport {
    pub checks: Vec<CompatibilityCheck>,
}

impl CompatibilityReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failed(&self) -> Vec<&CompatibilityCheck> {
        self.checks.iter().filter(|c| !c.passed).collect()
    }

    pub fn get(&self, name: &str) -> Option<&CompatibilityCheck> {
        self.checks.iter().find(|c| c.name == name)
    }

    fn push(&mut self, name: &str, magnitude: f64, tolerance: f64, detail: impl Into<String>) {
        self.checks.push(CompatibilityCheck {
            name: name.to_string(),
            passed: magnitude <= tolerance,
            magnitude,
            tolerance,
            detail: detail.into(),
        });
    }

    /// Error naming every failed condition, if any.
    pub fn ensure(&self) -> Result<()> {
        let failed = self.failed();
        if failed.is_empty() {
            return Ok(());
        }
        let parts: Vec<String> =
            failed.iter().map(|c| format!("{} (magnitude {:e} > tolerance {:e})", c.name, c.magnitude, c.tolerance)).collect();
        Err(Error::DataIncompatible(format!("failed condition(s): {}", parts.join(", "))))
    }
}

/// Result of any driver. Vectors are full nodal coefficients.
#[derive(Clone, Debug, Serialize)]
pub struct SolveReport {
    pub kind: ProblemKind,
    pub n: usize,
    pub k: isize,
    pub lambda: f64,
    pub dofs: usize,
    pub h: f64,
    #[serde(skip)]
    pub space: Option<DofSpace>,
    #[serde(skip)]
    pub solution: Vec<f64>,
    /// Nodal `Λ^{k−1}` pressure (Stokes).
    #[serde(skip)]
    pub pressure: Option<Vec<f64>>,
    /// Nodal `Λ^{k−1}` potential `v` whose cellwise `dv` is part of the solution (Dirichlet).
    #[serde(skip)]
    pub potential: Option<Vec<f64>>,
    pub solution_digest: String,
    pub residuals: BTreeMap<String, f64>,
    pub boundary_residuals: BoundaryResiduals,
    pub compatibility: CompatibilityReport,
    pub nullspace_dim: Option<usize>,
    pub errors: BTreeMap<String, f64>,
    pub warnings: Vec<String>,
}

impl SolveReport {
    fn new(spec: &ProblemSpec, space: DofSpace) -> Self {
        SolveReport {
            kind: spec.kind,
            n: spec.n(),
            k: spec.k,
            lambda: spec.lambda,
            dofs: space.num_free(),
            h: spec.mesh.h(),
            solution: vec![],
            space: Some(space),
            pressure: None,
            potential: None,
            solution_digest: String::new(),
            residuals: BTreeMap::new(),
            boundary_residuals: BoundaryResiduals::default(),
            compatibility: CompatibilityReport::default(),
            nullspace_dim: None,
            errors: BTreeMap::new(),
            warnings: vec![],
        }
    }

    fn seal(mut self) -> Self {
        let mut h = DefaultHasher::new();
        for v in self.solution.iter().chain(self.pressure.iter().flatten()).chain(self.potential.iter().flatten()) {
            v.to_bits().hash(&mut h);
        }
        self.solution_digest = format!("{:016x}", h.finish());
        self
    }
}

/// Dispatch on the problem kind.
pub fn solve(spec: &ProblemSpec) -> Result<SolveReport> {
    match spec.kind {
        ProblemKind::HodgeT | ProblemKind::HodgeN => solve_hodge(spec),
        ProblemKind::MaxwellT | ProblemKind::MaxwellN => solve_maxwell(spec),
        ProblemKind::StokesT | ProblemKind::StokesN => solve_stokes(spec),
        ProblemKind::Dirichlet => solve_dirichlet(spec),
        ProblemKind::DivcurlT | ProblemKind::DivcurlN => solve_divcurl(spec),
    }
}

const ELLIPTICITY_SAMPLES: usize = 16;

fn sample_points(mesh: &SimplicialMesh) -> Vec<Vec<f64>> {
    let nc = mesh.num_cells();
    let n = mesh.dim();
    let count = ELLIPTICITY_SAMPLES.min(nc);
    let bary = vec![1.0 / (n + 1) as f64; n + 1];
    (0..count).map(|i| mesh.cell_point(i * nc / count, &bary)).collect()
}

#[derive(Clone, Copy, PartialEq)]
enum Condition {
    Legendre,
    LegendreHadamard,
    /// Legendre, or Legendre–Hadamard when constant.
    ConstantLh,
}

fn check_operator(op: &OperatorField, name: &str, cond: Condition, mesh: &SimplicialMesh) -> Result<()> {
    if op.is_identity() {
        return Ok(());
    }
    let pts = if op.is_constant() { vec![sample_points(mesh).swap_remove(0)] } else { sample_points(mesh) };
    let n = op.n();
    let kb = op.source_degree() - 1;
    for x in &pts {
        let m = op.at(x);
        let legendre = legendre_constant(&m)?;
        let ok = match cond {
            Condition::Legendre => legendre > 0.0,
            Condition::LegendreHadamard => legendre > 0.0 || legendre_hadamard_constant(&m, n, kb)? > 0.0,
            Condition::ConstantLh => legendre > 0.0 || (op.is_constant() && legendre_hadamard_constant(&m, n, kb)? > 0.0),
        };
        if !ok {
            let what = match cond {
                Condition::Legendre => "Legendre",
                Condition::LegendreHadamard => "Legendre-Hadamard",
                Condition::ConstantLh => "Legendre (or constant Legendre-Hadamard)",
            };
            return Err(Error::Ellipticity(format!("{name} is not {what} at x = {x:?} (Legendre constant {legendre:e})")));
        }
    }
    Ok(())
}

/// Ellipticity hypotheses of each problem, at sampled cell centroids.
pub fn check_ellipticity(spec: &ProblemSpec) -> Result<()> {
    let mesh = &spec.mesh;
    use Condition::*;
    let (ca, cb) = match spec.kind {
        ProblemKind::HodgeT | ProblemKind::MaxwellT | ProblemKind::StokesT => (LegendreHadamard, Legendre),
        ProblemKind::HodgeN | ProblemKind::MaxwellN | ProblemKind::StokesN => (Legendre, Legendre),
        ProblemKind::Dirichlet => (ConstantLh, Legendre),
        ProblemKind::DivcurlT | ProblemKind::DivcurlN => (Legendre, Legendre),
    };
    // LH is defined for operators on forms of degree ≥ 1
    let ca = if spec.a_degree() < 1 { Legendre } else { ca };
    check_operator(&spec.a, "A", ca, mesh)?;
    check_operator(&spec.b, "B", cb, mesh)
}

// ---------------------------------------------------------------- helpers

fn identity_coeffs_d_only(n: usize, k: isize) -> FormCoefficients {
    FormCoefficients { a: Some(OperatorField::identity(n, k + 1)), b: None, c: None }
}

/// L² norm of an analytic field by quadrature.
pub fn field_l2(mesh: &SimplicialMesh, f: &AnalyticField) -> f64 {
    let qr = rule(mesh.dim(), 5);
    let uw = qr.unit_weights();
    let parts: Vec<f64> = (0..mesh.num_cells())
        .into_par_iter()
        .map(|c| {
            let vol = mesh.signed_volume(c).abs();
            qr.points.iter().enumerate().map(|(q, b)| uw[q] * vol * f.eval(&mesh.cell_point(c, b)).iter().map(|v| v * v).sum::<f64>()).sum()
        })
        .collect();
    parts.iter().sum::<f64>().sqrt()
}

/// `(∫_∂ |T(x)·v(x)|²)^{1/2}` for a face-local linear map `T` built from the normal.
fn boundary_l2<F>(mesh: &SimplicialMesh, value: F) -> f64
where
    F: Fn(&[f64], &[f64]) -> DVector<f64> + Sync,
{
    let qr = rule(mesh.dim() - 1, 4);
    let uw = qr.unit_weights();
    let parts: Vec<f64> = (0..mesh.num_boundary_faces())
        .into_par_iter()
        .map(|f| {
            let nu = mesh.face_normal(f);
            let area = mesh.face_measure(f);
            qr.points.iter().enumerate().map(|(q, b)| uw[q] * area * value(&mesh.face_point(f, b), nu).norm_squared()).sum()
        })
        .collect();
    parts.iter().sum::<f64>().sqrt()
}

/// Dirichlet test space of `j`-forms with the Gram matrix of the full H¹ norm.
struct TestSpace {
    space: DofSpace,
    gram: Factorization,
}

fn dirichlet_test_space(mesh: &Arc<SimplicialMesh>, j: isize) -> Result<Option<TestSpace>> {
    let n = mesh.dim();
    if j < 0 || j as usize > n {
        return Ok(None);
    }
    let space = build_space(mesh.clone(), j, BcKind::Dirichlet, None)?;
    if space.num_free() == 0 {
        return Ok(None);
    }
    let g = assemble_mass(&space, &OperatorField::identity(n, j))?.add_scaled(1.0, &assemble_gradient(&space));
    let gram = Factorization::new(&g, true)?;
    Ok(Some(TestSpace { space, gram }))
}

impl TestSpace {
    /// `sup_ψ |r(ψ)| / ‖ψ‖_{H¹}` for a functional given on full coefficients.
    fn dual_norm(&self, r_full: &[f64]) -> f64 {
        let r = self.space.restrict(r_full);
        let y = self.gram.solve(&r);
        dot(&r, &y).max(0.0).sqrt()
    }
}

/// Harmonic `j`-fields for a boundary condition, as full nodal vectors with unit L² norm.
pub fn harmonic_fields(mesh: &Arc<SimplicialMesh>, j: isize, bc: BcKind) -> Result<Option<(DofSpace, Vec<Vec<f64>>)>> {
    let n = mesh.dim() as isize;
    if j < 0 || j > n {
        return Ok(None);
    }
    let empty = (bc == BcKind::Tangential && j == 0) || (bc == BcKind::Normal && j == n);
    if empty {
        return Ok(None);
    }
    let constants = (bc == BcKind::Tangential && j == n) || (bc == BcKind::Normal && j == 0);
    if constants {
        let space = build_space(mesh.clone(), j, bc, None)?;
        let vecs = mesh
            .domain_components()
            .iter()
            .map(|comp| {
                let mut v = vec![0.0; space.num_full()];
                for &vx in comp {
                    v[vx] = 1.0;
                }
                let s = nodal_l2_norm(&space, &v);
                v.iter_mut().for_each(|x| *x /= s);
                v
            })
            .collect();
        return Ok(Some((space, vecs)));
    }
    if is_contractible(mesh) {
        return Ok(None);
    }
    let (space, basis) = harmonic_basis(mesh.clone(), j, bc)?;
    if basis.dim == 0 {
        return Ok(None);
    }
    let vecs = basis
        .vectors
        .iter()
        .map(|x| {
            let mut v = space.expand(x);
            let s = nodal_l2_norm(&space, &v);
            v.iter_mut().for_each(|a| *a /= s);
            v
        })
        .collect();
    Ok(Some((space, vecs)))
}

/// One domain component with one boundary component and Euler characteristic 1.
pub fn is_contractible(mesh: &SimplicialMesh) -> bool {
    mesh.domain_components().len() == 1 && mesh.boundary_components().len() == 1 && mesh.euler_characteristic() == 1
}

/// Largest `|∫⟨f, h_i⟩|` over an L²-normalized harmonic basis.
fn harmonic_moment(space: &DofSpace, fields: &[Vec<f64>], f: &AnalyticField) -> Result<f64> {
    let n = space.mesh().dim();
    let load = assemble_load_full(space, &LoadData { f: Some(f.clone()), ..Default::default() }, &identity_coeffs_d_only(n, space.degree()))?;
    Ok(fields.iter().map(|h| dot(&load, h).abs()).fold(0.0, f64::max))
}

fn moment_check(
    report: &mut CompatibilityReport,
    name: &str,
    mesh: &Arc<SimplicialMesh>,
    field: Option<&AnalyticField>,
    j: isize,
    bc: BcKind,
) -> Result<()> {
    let Some(f) = field else {
        report.push(name, 0.0, 0.0, "no data");
        return Ok(());
    };
    match harmonic_fields(mesh, j, bc)? {
        None => report.push(name, 0.0, 0.0, format!("no harmonic {j}-fields")),
        Some((space, fields)) => {
            let h = mesh.h();
            let m = harmonic_moment(&space, &fields, f)?;
            let tol = (1e-6 + h * h) * field_l2(mesh, f);
            report.push(name, m, tol, format!("{} harmonic {j}-field(s)", fields.len()));
        }
    }
    Ok(())
}

fn scale_of(mesh: &SimplicialMesh, fields: &[Option<&AnalyticField>]) -> f64 {
    fields.iter().flatten().map(|f| field_l2(mesh, f)).fold(0.0, f64::max)
}

/// Weak `δu + λw = 0` (`w` optional) against compactly supported `(deg(u)−1)`-forms.
fn coclosed_check(
    report: &mut CompatibilityReport,
    name: &str,
    mesh: &Arc<SimplicialMesh>,
    u: Option<&AnalyticField>,
    lambda: f64,
    w: Option<&AnalyticField>,
    degree: isize,
) -> Result<()> {
    let n = mesh.dim();
    let Some(ts) = dirichlet_test_space(mesh, degree - 1)? else {
        report.push(name, 0.0, 0.0, "vacuous for this degree");
        return Ok(());
    };
    let coeffs = identity_coeffs_d_only(n, degree - 1);
    let sigma = -codifferential_sign(n);
    let mut r = vec![0.0; ts.space.num_full()];
    if let Some(u) = u {
        let l = assemble_load_full(&ts.space, &LoadData { big_f: Some(u.clone()), ..Default::default() }, &coeffs)?;
        r.iter_mut().zip(&l).for_each(|(a, b)| *a += sigma * b);
    }
    if let (Some(w), true) = (w, lambda != 0.0) {
        let l = assemble_load_full(&ts.space, &LoadData { f: Some(w.clone()), ..Default::default() }, &coeffs)?;
        r.iter_mut().zip(&l).for_each(|(a, b)| *a -= lambda * b);
    }
    let scale = scale_of(mesh, &[u, w]);
    report.push(name, ts.dual_norm(&r), 1e-6 * scale, "dual H¹ norm over compactly supported test forms");
    Ok(())
}

/// Weak `du = 0` against compactly supported `(deg(u)+1)`-forms.
fn closed_check(report: &mut CompatibilityReport, name: &str, mesh: &Arc<SimplicialMesh>, u: Option<&AnalyticField>, degree: isize) -> Result<()> {
    let n = mesh.dim();
    let Some(ts) = dirichlet_test_space(mesh, degree + 1)? else {
        report.push(name, 0.0, 0.0, "vacuous for this degree");
        return Ok(());
    };
    let mut r = vec![0.0; ts.space.num_full()];
    if let Some(u) = u {
        let coeffs = FormCoefficients { a: None, b: Some(OperatorField::identity(n, degree + 1)), c: None };
        r = assemble_load_full(&ts.space, &LoadData { g: Some(u.clone()), ..Default::default() }, &coeffs)?;
    }
    let scale = scale_of(mesh, &[u]);
    report.push(name, ts.dual_norm(&r), 1e-6 * scale, "dual H¹ norm over compactly supported test forms");
    Ok(())
}

/// Every condition the data must satisfy for the problem to be solvable.
pub fn check_compatibility(spec: &ProblemSpec) -> Result<CompatibilityReport> {
    spec.validate()?;
    let mesh = &spec.mesh;
    let (n, k) = (spec.n(), spec.k);
    let mut rep = CompatibilityReport::default();
    let bw0_codiff = spec.omega0.as_ref().map(|w| w.apply(&spec.b).codifferential(H_FD));
    // g − δ(Bω₀), the data of the auxiliary div-curl field
    let g_shift = match (&spec.g, &bw0_codiff) {
        (Some(g), Some(c)) => Some(g.sub(c)),
        (Some(g), None) => Some(g.clone()),
        (None, Some(c)) => Some(c.scale(-1.0)),
        (None, None) => None,
    };
    match spec.kind {
        ProblemKind::HodgeT | ProblemKind::HodgeN => {}
        ProblemKind::MaxwellT | ProblemKind::MaxwellN | ProblemKind::StokesT | ProblemKind::StokesN => {
            let is_stokes = matches!(spec.kind, ProblemKind::StokesT | ProblemKind::StokesN);
            if !is_stokes {
                coclosed_check(&mut rep, "delta_f_plus_lambda_g_zero", mesh, spec.f.as_ref(), spec.lambda, spec.g.as_ref(), k)?;
                coclosed_check(&mut rep, "delta_g_zero", mesh, spec.g.as_ref(), 0.0, None, k - 1)?;
            }
            let bc = if spec.kind.is_tangential() { BcKind::Tangential } else { BcKind::Normal };
            moment_check(&mut rep, "g_harmonic_moments", mesh, g_shift.as_ref(), k - 1, BcKind::Tangential)?;
            if spec.kind == ProblemKind::MaxwellN {
                let gs = g_shift.clone();
                let mag = boundary_l2(mesh, |x, nu| match &gs {
                    Some(g) => interior_matrix(nu, k - 1) * DVector::from_vec(g.eval(x)),
                    None => DVector::zeros(1),
                });
                let tol = 1e-6 * scale_of(mesh, &[g_shift.as_ref()]).max(1e-300) + if gs.is_some() { 1e-8 } else { 0.0 };
                rep.push("normal_trace_g", mag, tol, "∫_∂|ν⌟(g − δ(Bω₀))|²");
            }
            if spec.lambda == 0.0 && !is_stokes && bc == BcKind::Normal {
                moment_check(&mut rep, "f_harmonic_moments", mesh, spec.f.as_ref(), k, BcKind::Normal)?;
            }
            if spec.kind == ProblemKind::StokesT {
                let mag = match &spec.p0 {
                    Some(p0) => {
                        let dp = p0.exterior_derivative(H_FD);
                        boundary_l2(mesh, |x, nu| wedge_matrix(nu, k) * DVector::from_vec(dp.eval(x)))
                    }
                    None => 0.0,
                };
                let tol = 1e-6 * scale_of(mesh, &[spec.p0.as_ref()]) + if spec.p0.is_some() { 1e-8 } else { 0.0 };
                rep.push("p0_locally_constant", mag, tol, "∫_∂|ν∧dp₀|²: p₀ must be constant on each boundary component");
            }
        }
        ProblemKind::Dirichlet => {
            coclosed_check(&mut rep, "delta_f_zero", mesh, spec.f.as_ref(), 0.0, None, k)?;
            moment_check(&mut rep, "f_harmonic_moments", mesh, spec.f.as_ref(), k, BcKind::Tangential)?;
        }
        ProblemKind::DivcurlT | ProblemKind::DivcurlN => {
            closed_check(&mut rep, "df_zero", mesh, spec.f.as_ref(), k + 1)?;
            coclosed_check(&mut rep, "delta_g_zero", mesh, spec.g.as_ref(), 0.0, None, k - 1)?;
            moment_check(&mut rep, "f_harmonic_moments", mesh, spec.f.as_ref(), k + 1, BcKind::Normal)?;
            moment_check(&mut rep, "g_harmonic_moments", mesh, spec.g.as_ref(), k - 1, BcKind::Tangential)?;
            if let Some(w0) = &spec.omega0 {
                let f = spec.f.clone().unwrap_or_else(|| AnalyticField::zero(n, k + 1));
                let g = spec.g.clone().unwrap_or_else(|| AnalyticField::zero(n, k - 1));
                let scale = scale_of(mesh, &[spec.f.as_ref(), spec.g.as_ref(), Some(w0)]);
                if spec.kind == ProblemKind::DivcurlT {
                    let dw = w0.exterior_derivative(H_FD);
                    let mag = boundary_l2(mesh, |x, nu| {
                        wedge_matrix(nu, k + 1) * (DVector::from_vec(dw.eval(x)) - DVector::from_vec(f.eval(x)))
                    });
                    rep.push("tangential_trace", mag, 1e-6 * scale + 1e-8, "∫_∂|ν∧(dω₀ − f)|²");
                } else {
                    let cw = w0.codifferential(H_FD);
                    let mag = boundary_l2(mesh, |x, nu| {
                        interior_matrix(nu, k - 1) * (DVector::from_vec(cw.eval(x)) - DVector::from_vec(g.eval(x)))
                    });
                    rep.push("normal_trace", mag, 1e-6 * scale + 1e-8, "∫_∂|ν⌟(δω₀ − g)|²");
                }
            }
        }
    }
    Ok(rep)
}

fn add(a: &mut [f64], b: &[f64]) {
    a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
}

fn mass_solve(m: &CsrMatrix, rhs: &[f64]) -> Result<Vec<f64>> {
    let f = Factorization::new(m, true)?;
    Ok(solve_refined(m, &f, rhs, 1e-13).0)
}

/// Solve an assembled problem, restricted to the complement of the operator's near-kernel when asked.
fn solve_problem(problem: &AssembledProblem, constrain: bool, h: f64, warnings: &mut Vec<String>) -> Result<(LinearSolution, usize)> {
    if !constrain {
        return Ok((solve_linear(problem)?, 0));
    }
    let op = problem.operator();
    let basis = near_kernel(&op, &problem.m, HARMONIC_C_TAU * h * h)?;
    warnings.extend(basis.warnings.iter().cloned());
    if basis.dim == 0 {
        return Ok((solve_linear(problem)?, 0));
    }
    let w: Vec<Vec<f64>> = basis.vectors.iter().map(|v| problem.m.matvec(v)).collect();
    let sol = solve_constrained(&op, &problem.rhs, &w)?;
    if !(sol.residual <= SOLVE_TOL) {
        return Err(Error::Solver(format!("constrained solve residual {:e}", sol.residual)));
    }
    Ok((sol, basis.dim))
}

fn bc_space(spec: &ProblemSpec) -> Result<DofSpace> {
    if spec.kind.is_tangential() {
        build_space(spec.mesh.clone(), spec.k, BcKind::Tangential, None)
    } else {
        build_space(spec.mesh.clone(), spec.k, BcKind::NormalB, Some(&spec.b))
    }
}

/// The `count` eigenvalues of the Hodge pencil closest to zero, on the space of `spec.kind`.
pub fn hodge_spectrum(spec: &ProblemSpec, count: usize) -> Result<EigenResult> {
    spec.validate()?;
    let space = bc_space(spec)?;
    let coeffs = FormCoefficients::hodge(spec.a.clone(), spec.b.clone());
    let k = assemble_stiffness(&space, &coeffs)?;
    let m = assemble_mass(&space, &spec.b)?;
    eig_pairs(&k, &m, count)
}

fn record_post(report: &mut SolveReport, space: &DofSpace, full: &[f64], coeffs: &FormCoefficients, spec: &ProblemSpec) {
    let post = postprocess_fields(space, full, coeffs, &PostOptions { exact: spec.exact.as_ref(), omega0: spec.omega0.as_ref() });
    if let Some(e) = post.err_l2 {
        report.errors.insert("err_L2".into(), e);
    }
    if let Some(e) = post.err_h1 {
        report.errors.insert("err_H1".into(), e);
    }
    report.boundary_residuals = post.boundary;
}

/// `‖δ(Bω_h) − g‖` with cellwise derivatives.
fn codiff_constraint(space: &DofSpace, full: &[f64], b: &OperatorField, g: Option<&AnalyticField>) -> f64 {
    let mesh = space.mesh();
    let cells: Vec<Vec<f64>> = (0..mesh.num_cells()).into_par_iter().map(|c| cell_codiff(space, full, c, Some(b))).collect();
    match g {
        Some(g) => cellwise_error(mesh, &cells, g),
        None => crate::galerkin::cellwise_l2_norm(mesh, &cells),
    }
}

// ---------------------------------------------------------------- Hodge

pub fn solve_hodge(spec: &ProblemSpec) -> Result<SolveReport> {
    spec.validate()?;
    check_ellipticity(spec)?;
    let space = bc_space(spec)?;
    let coeffs = FormCoefficients::hodge(spec.a.clone(), spec.b.clone());
    let natural = spec.omega0.as_ref().map(|w| {
        if spec.kind.is_tangential() {
            NaturalData::Tangential(w.clone())
        } else {
            NaturalData::Normal(w.clone())
        }
    });
    let load = LoadData { f: spec.f.clone(), big_f: spec.big_f.clone(), g: spec.g.clone() };
    let problem = assemble_problem(&space, &coeffs, &spec.b, spec.lambda, &load, spec.omega0.as_ref(), natural.as_ref())?;
    let sol = solve_linear(&problem)?;
    let full = problem.full_solution(&space, &sol.x);
    let mut report = SolveReport::new(spec, space.clone());
    report.warnings.extend(space.warnings().iter().cloned());
    let (_, rel) = problem.weak_residual(&space, &full);
    report.residuals.insert("equation".into(), rel);
    report.residuals.insert("constraint".into(), space.constraint_residual(&full, Some(&spec.b)));
    record_post(&mut report, &space, &full, &coeffs, spec);
    report.solution = full;
    Ok(report.seal())
}

// ---------------------------------------------------------------- Maxwell

struct MaxwellParts {
    space: DofSpace,
    problem: AssembledProblem,
    /// `ω_h = I_hω₀ + Pu + G` (lift only when requested).
    full: Vec<f64>,
    /// The Hodge unknown `Pu`.
    u_full: Vec<f64>,
    nullspace: usize,
    warnings: Vec<String>,
}

/// Constructive route: auxiliary div-curl field `G`, then the Hodge system for `u`.
fn maxwell_core(
    spec: &ProblemSpec,
    f: Option<AnalyticField>,
    lift: bool,
    extra_load: Option<Vec<f64>>,
    g_field: bool,
) -> Result<MaxwellParts> {
    let n = spec.n();
    let k = spec.k;
    let space = bc_space(spec)?;
    let mut warnings: Vec<String> = space.warnings().to_vec();
    let coeffs = FormCoefficients::hodge(spec.a.clone(), spec.b.clone());
    let w0 = spec.omega0.as_ref();

    // auxiliary field: dG = 0, δ(BG) = g − δ(Bω₀), homogeneous trace
    let g_data = {
        let shift = if lift { w0.map(|w| w.apply(&spec.b).codifferential(H_FD)) } else { None };
        match (if g_field { spec.g.clone() } else { None }, shift) {
            (Some(g), Some(s)) => Some(g.sub(&s)),
            (Some(g), None) => Some(g),
            (None, Some(s)) => Some(s.scale(-1.0)),
            (None, None) => None,
        }
    };
    let big_g = match g_data {
        Some(gd) => {
            let mut dc = ProblemSpec::new(if spec.kind.is_tangential() { ProblemKind::DivcurlT } else { ProblemKind::DivcurlN }, spec.mesh.clone(), k);
            dc.b = spec.b.clone();
            dc.g = Some(gd);
            let r = solve_divcurl(&dc)?;
            warnings.extend(r.warnings.iter().cloned());
            Some(r.solution)
        }
        None => None,
    };

    let mut f_tilde = f;
    if let (Some(w), true, true) = (w0, lift, spec.lambda != 0.0) {
        let term = w.apply(&spec.b).scale(spec.lambda);
        f_tilde = Some(match f_tilde {
            Some(f) => f.add(&term),
            None => term,
        });
    }
    let big_f = w0.map(|w| w.exterior_derivative(H_FD).apply(&spec.a).scale(-1.0));
    let natural = match (w0, spec.kind.is_tangential()) {
        (Some(w), false) => Some(NaturalData::Normal(w.clone())),
        _ => None,
    };
    let load = LoadData { f: f_tilde, big_f, g: None };
    let mut problem = assemble_problem(&space, &coeffs, &spec.b, spec.lambda, &load, None, natural.as_ref())?;
    let mut extra = extra_load.unwrap_or_else(|| vec![0.0; space.num_full()]);
    if let (Some(gv), true) = (&big_g, spec.lambda != 0.0) {
        let mg = problem.m_full.matvec(gv);
        extra.iter_mut().zip(&mg).for_each(|(e, m)| *e -= spec.lambda * m);
    }
    add(&mut problem.load_full, &extra);
    let er = space.restrict(&extra);
    add(&mut problem.rhs, &er);

    let constrain = !spec.kind.is_tangential() && spec.lambda == 0.0 && !is_contractible(&spec.mesh);
    let (sol, nullspace) = solve_problem(&problem, constrain, spec.mesh.h(), &mut warnings)?;
    let u_full = space.expand(&sol.x);
    let mut full = u_full.clone();
    if let Some(gv) = &big_g {
        add(&mut full, gv);
    }
    if let (Some(w), true) = (w0, lift) {
        add(&mut full, &space.interpolate(w));
    }
    let _ = n;
    Ok(MaxwellParts { space, problem, full, u_full, nullspace, warnings })
}

/// Projection route `ω̄ = α − (1/λ) dδα` with `δα` and `d` realized by L² projections.
pub fn projection_route(space: &DofSpace, alpha_full: &[f64], lambda: f64) -> Result<Vec<f64>> {
    let mesh = space.mesh_arc();
    let (n, k) = (mesh.dim(), space.degree());
    if k < 1 {
        return Ok(alpha_full.to_vec());
    }
    let bc = if space.bc() == BcKind::Tangential { BcKind::Tangential } else { BcKind::Normal };
    let lower = build_space(mesh.clone(), k - 1, bc, None)?;
    let codiff: Vec<Vec<f64>> = (0..mesh.num_cells()).into_par_iter().map(|c| cell_codiff(space, alpha_full, c, None)).collect();
    let rhs = lower.restrict(&assemble_cellwise_pairing(&lower, &codiff, false));
    let m_lower = assemble_mass(&lower, &OperatorField::identity(n, k - 1))?;
    let v = lower.expand(&mass_solve(&m_lower, &rhs)?);
    let dv: Vec<Vec<f64>> = (0..mesh.num_cells()).into_par_iter().map(|c| cell_d(&lower, &v, c, None)).collect();
    let rhs = space.restrict(&assemble_cellwise_pairing(space, &dv, false));
    let m = assemble_mass(space, &OperatorField::identity(n, k))?;
    let w = space.expand(&mass_solve(&m, &rhs)?);
    Ok(alpha_full.iter().zip(&w).map(|(a, b)| a - b / lambda).collect())
}

pub fn solve_maxwell(spec: &ProblemSpec) -> Result<SolveReport> {
    spec.validate()?;
    check_ellipticity(spec)?;
    let compat = check_compatibility(spec)?;
    compat.ensure()?;
    let parts = maxwell_core(spec, spec.f.clone(), true, None, true)?;
    Ok(finish_maxwell(spec, parts, compat)?.seal())
}

fn finish_maxwell(spec: &ProblemSpec, parts: MaxwellParts, compat: CompatibilityReport) -> Result<SolveReport> {
    let coeffs = FormCoefficients::hodge(spec.a.clone(), spec.b.clone());
    let space = &parts.space;
    let mut report = SolveReport::new(spec, space.clone());
    report.warnings = parts.warnings.clone();
    report.compatibility = compat;
    report.residuals.insert("equation".into(), parts.problem.weak_residual(space, &parts.u_full).1);
    report.residuals.insert("codiff_constraint".into(), codiff_constraint(space, &parts.full, &spec.b, spec.g.as_ref()));
    report.residuals.insert("constraint".into(), space.constraint_residual(&parts.full, Some(&spec.b)));
    if parts.nullspace > 0 {
        report.nullspace_dim = Some(parts.nullspace);
    }
    let cross_check = spec.b.is_identity() && spec.lambda != 0.0 && spec.g.is_none() && spec.omega0.is_none();
    if cross_check && matches!(spec.kind, ProblemKind::MaxwellT | ProblemKind::MaxwellN) {
        let projected = projection_route(space, &parts.full, spec.lambda)?;
        let diff: Vec<f64> = projected.iter().zip(&parts.full).map(|(a, b)| a - b).collect();
        let scale = nodal_l2_norm(space, &parts.full).max(1e-300);
        report.residuals.insert("route_agreement".into(), nodal_l2_norm(space, &diff) / scale);
    }
    record_post(&mut report, space, &parts.full, &coeffs, spec);
    report.solution = parts.full;
    Ok(report)
}

// ---------------------------------------------------------------- Stokes

pub fn solve_stokes(spec: &ProblemSpec) -> Result<SolveReport> {
    spec.validate()?;
    if spec.k != 1 {
        return Err(Error::Unsupported(format!("Stokes is implemented for k = 1 only, got k = {}", spec.k)));
    }
    check_ellipticity(spec)?;
    let mut compat = check_compatibility(spec)?;
    compat.ensure()?;
    let mesh = &spec.mesh;
    let n = spec.n();

    // f' = f − dp₀, then split f' = dφ + f̃
    let f_prime = match (&spec.f, &spec.p0) {
        (Some(f), Some(p)) => Some(f.sub(&p.exterior_derivative(H_FD))),
        (Some(f), None) => Some(f.clone()),
        (None, Some(p)) => Some(p.exterior_derivative(H_FD).scale(-1.0)),
        (None, None) => None,
    };
    let tangential = spec.kind == ProblemKind::StokesT;
    let bc0 = if tangential { BcKind::Tangential } else { BcKind::Normal };
    let space0 = build_space(mesh.clone(), 0, bc0, None)?;
    let c0 = identity_coeffs_d_only(n, 0);
    let id0 = OperatorField::identity(n, 0);
    let load = LoadData { big_f: f_prime.clone(), ..Default::default() };
    let prob0 = assemble_problem(&space0, &c0, &id0, 0.0, &load, None, None)?;
    let phi_sol = if tangential {
        solve_linear(&prob0)?
    } else {
        let ones = vec![1.0; space0.num_free()];
        let w = vec![prob0.m.matvec(&ones)];
        solve_constrained(&prob0.k, &prob0.rhs, &w)?
    };
    let phi = space0.expand(&phi_sol.x);
    let dphi: Vec<Vec<f64>> = (0..mesh.num_cells()).into_par_iter().map(|c| cell_d(&space0, &phi, c, None)).collect();

    // weak co-closedness of f̃ against the potential's test space
    let sigma = -codifferential_sign(n);
    let mut r = assemble_load_full(&space0, &load, &c0)?;
    let pd = assemble_cellwise_pairing(&space0, &dphi, true);
    r.iter_mut().zip(&pd).for_each(|(a, b)| *a = sigma * (*a - b));
    let rr = space0.restrict(&r);
    let scale = f_prime.as_ref().map_or(0.0, |f| field_l2(mesh, f));
    let mag = norm(&rr);
    compat.push("f_tilde_coclosed", mag, 1e-8 * scale.max(1e-300) + 1e-14, "weak δf̃ against the potential test space");

    let space1 = bc_space(spec)?;
    let extra = assemble_cellwise_pairing(&space1, &dphi, false);
    let parts = maxwell_core(spec, f_prime, true, Some(extra), false)?;

    // pressure p = p₀ + φ + c
    let mut p = phi.clone();
    if let Some(p0) = &spec.p0 {
        add(&mut p, &space0.interpolate(p0));
    }
    if !tangential {
        let ones = vec![1.0; space0.num_full()];
        let m0 = assemble_mass_full(&space0, &id0)?;
        let m1 = m0.matvec(&ones);
        let c = dot(&m1, &p) / dot(&m1, &ones);
        p.iter_mut().for_each(|v| *v -= c);
    }
    let mut report = finish_maxwell(spec, parts, compat)?;
    if let Some(ep) = &spec.exact_pressure {
        report.errors.insert("err_pressure_L2".into(), error_mod_constant(&space0, &p, ep));
    }
    report.pressure = Some(p);
    Ok(report.seal())
}

/// `min_c ‖p_h + c − p‖_{L²}`.
pub fn error_mod_constant(space0: &DofSpace, p: &[f64], exact: &AnalyticField) -> f64 {
    let mesh = space0.mesh();
    let qr = rule(mesh.dim(), 5);
    let uw = qr.unit_weights();
    let (mut s0, mut s1, mut s2) = (0.0, 0.0, 0.0);
    for c in 0..mesh.num_cells() {
        let vol = mesh.signed_volume(c).abs();
        for (q, b) in qr.points.iter().enumerate() {
            let d = cell_value(space0, p, c, b)[0] - exact.eval(&mesh.cell_point(c, b))[0];
            let w = uw[q] * vol;
            s0 += w;
            s1 += w * d;
            s2 += w * d * d;
        }
    }
    (s2 - s1 * s1 / s0).max(0.0).sqrt()
}

// ---------------------------------------------------------------- Dirichlet

/// Interior faces: sorted vertex lists with their two cells.
fn interior_faces(mesh: &SimplicialMesh) -> Vec<(usize, usize, usize)> {
    let n = mesh.dim();
    let mut map: HashMap<Vec<usize>, (usize, usize)> = HashMap::new();
    let mut out = Vec::new();
    for c in 0..mesh.num_cells() {
        let cell = mesh.cell(c);
        for skip in 0..=n {
            let mut f: Vec<usize> = (0..=n).filter(|&i| i != skip).map(|i| cell[i]).collect();
            f.sort_unstable();
            if let Some((c1, opp)) = map.remove(&f) {
                out.push((c1, opp, c));
            } else {
                map.insert(f, (c, skip));
            }
        }
    }
    out.sort_unstable();
    out
}

/// Pieces of a Dirichlet solution `ω = nodal + dv`.
fn potential_cells(mesh: &SimplicialMesh, space_v: &DofSpace, v: &[f64]) -> Vec<Vec<f64>> {
    (0..mesh.num_cells()).into_par_iter().map(|c| cell_d(space_v, v, c, None)).collect()
}

/// Relative weak residual of `δ(A dω) = f` against compactly supported test forms, for
/// `ω = nodal + dv` with `dv` cellwise; tangential jumps of `dv` across faces are included.
pub fn dirichlet_interior_residual(spec: &ProblemSpec, nodal: &[f64], potential: &[f64]) -> Result<f64> {
    let mesh = &spec.mesh;
    let (n, k) = (spec.n(), spec.k);
    let test = build_space(mesh.clone(), k, BcKind::Dirichlet, None)?;
    let coeffs = FormCoefficients { a: Some(spec.a.clone()), b: None, c: None };
    let kd = assemble_stiffness_full(&test, &coeffs)?;
    let load = assemble_load_full(&test, &LoadData { f: spec.f.clone(), ..Default::default() }, &coeffs)?;
    let ku = kd.matvec(nodal);
    let mut r: Vec<f64> = load.iter().zip(&ku).map(|(a, b)| a - b).collect();
    if k >= 1 {
        let space_v = build_space(mesh.clone(), k - 1, BcKind::None, None)?;
        let dv = potential_cells(mesh, &space_v, potential);
        let dk = binomial(n, k);
        let bary = vec![1.0 / n as f64; n];
        for (c1, opp, c2) in interior_faces(mesh) {
            let grads = mesh.barycentric_gradients(c1);
            let gn = grads[opp].iter().map(|x| x * x).sum::<f64>().sqrt();
            // outward normal of c1 across the face opposite vertex `opp`
            let nu: Vec<f64> = grads[opp].iter().map(|x| -x / gn).collect();
            let area = n as f64 * mesh.signed_volume(c1).abs() * gn;
            let jump: Vec<f64> = dv[c2].iter().zip(&dv[c1]).map(|(a, b)| a - b).collect();
            let j = wedge_matrix(&nu, k) * DVector::from_vec(jump);
            if j.iter().all(|x| *x == 0.0) {
                continue;
            }
            let verts: Vec<usize> = (0..=n).filter(|&i| i != opp).map(|i| mesh.cell(c1)[i]).collect();
            let mut xf = vec![0.0; n];
            for (i, &v) in verts.iter().enumerate() {
                for (p, x) in mesh.vertex(v).iter().enumerate() {
                    xf[p] += bary[i] * x;
                }
            }
            let aj = spec.a.at(&xf) * j;
            for c in [c1, c2] {
                let dm = cell_d_matrix(&test, c);
                let contrib = dm.transpose() * &aj;
                for (a, &v) in mesh.cell(c).iter().enumerate() {
                    for s in 0..dk {
                        r[v * dk + s] -= 0.5 * area * contrib[a * dk + s];
                    }
                }
            }
        }
    }
    let rr = test.restrict(&r);
    let scale = norm(&test.restrict(&load)).max(norm(&test.restrict(&ku))).max(1e-300);
    Ok(norm(&rr) / scale)
}

/// `(∫_∂|ω_h − ω₀|²)^{1/2}` for `ω_h = nodal + dv`.
fn dirichlet_trace(spec: &ProblemSpec, space: &DofSpace, nodal: &[f64], dv: &[Vec<f64>]) -> f64 {
    let mesh = &spec.mesh;
    let qr = rule(mesh.dim() - 1, 4);
    let uw = qr.unit_weights();
    let mut s = 0.0;
    for f in 0..mesh.num_boundary_faces() {
        let area = mesh.face_measure(f);
        let c = mesh.face_cell(f);
        for (q, b) in qr.points.iter().enumerate() {
            let x = mesh.face_point(f, b);
            let mut v = vec![0.0; space.ncomp()];
            for (i, &vx) in mesh.face(f).iter().enumerate() {
                for (a, x) in space.nodal_value(nodal, vx).iter().enumerate() {
                    v[a] += b[i] * x;
                }
            }
            let w0 = spec.omega0.as_ref().map(|w| w.eval(&x));
            for a in 0..v.len() {
                let d = v[a] + dv.get(c).map_or(0.0, |d| d[a]) - w0.as_ref().map_or(0.0, |w| w[a]);
                s += uw[q] * area * d * d;
            }
        }
    }
    s.sqrt()
}

/// L² error of `nodal + cellwise` against an exact field.
fn mixed_error(space: &DofSpace, nodal: &[f64], cells: &[Vec<f64>], exact: &AnalyticField) -> f64 {
    let mesh = space.mesh();
    let qr = rule(mesh.dim(), 5);
    let uw = qr.unit_weights();
    let mut s = 0.0;
    for c in 0..mesh.num_cells() {
        let vol = mesh.signed_volume(c).abs();
        for (q, b) in qr.points.iter().enumerate() {
            let v = cell_value(space, nodal, c, b);
            let e = exact.eval(&mesh.cell_point(c, b));
            s += uw[q] * vol * (0..v.len()).map(|a| (v[a] + cells.get(c).map_or(0.0, |d| d[a]) - e[a]).powi(2)).sum::<f64>();
        }
    }
    s.sqrt()
}

pub fn solve_dirichlet(spec: &ProblemSpec) -> Result<SolveReport> {
    spec.validate()?;
    if spec.k < 1 {
        return Err(Error::Unsupported("the Dirichlet driver needs k ≥ 1".into()));
    }
    check_ellipticity(spec)?;
    let compat = check_compatibility(spec)?;
    compat.ensure()?;
    let mesh = &spec.mesh;
    let (n, k) = (spec.n(), spec.k);
    let mut inner = spec.clone();
    inner.kind = ProblemKind::Dirichlet;
    inner.lambda = 0.0;
    let parts = maxwell_core(&inner, spec.f.clone(), false, None, false)?;
    let space = parts.space.clone();
    let omega_bar = parts.full.clone();

    // v minimizing Σ_F ∫_F |dv + ω̄|² + ε‖v‖²_{H¹}
    let space_v = build_space(mesh.clone(), k - 1, BcKind::None, None)?;
    let dkm = binomial(n, k - 1);
    let dk = binomial(n, k);
    let h = mesh.h();
    let eps = 1e-6 * h * h;
    let reg = assemble_mass(&space_v, &OperatorField::identity(n, k - 1))?.add_scaled(1.0, &assemble_gradient(&space_v)).scale(eps);
    let mut trip = Vec::new();
    let mut rhs = vec![0.0; space_v.num_full()];
    let qr = rule(n - 1, 4);
    let uw = qr.unit_weights();
    for f in 0..mesh.num_boundary_faces() {
        let c = mesh.face_cell(f);
        let area = mesh.face_measure(f);
        let dm = cell_d_matrix(&space_v, c);
        let mut avg = DVector::zeros(dk);
        for (q, b) in qr.points.iter().enumerate() {
            for (i, &vx) in mesh.face(f).iter().enumerate() {
                avg += DVector::from_vec(space.nodal_value(&omega_bar, vx)) * (uw[q] * b[i]);
            }
        }
        let local = dm.transpose() * &dm * area;
        let lr = dm.transpose() * avg * area;
        let idx: Vec<usize> = mesh.cell(c).iter().flat_map(|&v| (0..dkm).map(move |s| v * dkm + s)).collect();
        for (a, &ga) in idx.iter().enumerate() {
            rhs[ga] -= lr[a];
            for (bb, &gb) in idx.iter().enumerate() {
                trip.push((ga, gb, local[(a, bb)]));
            }
        }
    }
    let sys = CsrMatrix::from_triplets(space_v.num_full(), space_v.num_full(), &trip).add_scaled(1.0, &reg);
    let fac = Factorization::new(&sys, true)?;
    let (v, vres) = solve_refined(&sys, &fac, &rhs, 1e-13);

    let mut nodal = omega_bar.clone();
    if let Some(w0) = &spec.omega0 {
        add(&mut nodal, &space.interpolate(w0));
    }
    let dv = potential_cells(mesh, &space_v, &v);
    let mut report = SolveReport::new(spec, space.clone());
    report.warnings = parts.warnings.clone();
    report.compatibility = compat;
    report.residuals.insert("interior_equation".into(), dirichlet_interior_residual(spec, &nodal, &v)?);
    report.residuals.insert("equation".into(), parts.problem.weak_residual(&space, &omega_bar).1);
    report.residuals.insert("potential_solve".into(), vres);
    report.residuals.insert("dirichlet_trace".into(), dirichlet_trace(spec, &space, &nodal, &dv));
    if let Some(ex) = &spec.exact {
        report.errors.insert("err_L2".into(), mixed_error(&space, &nodal, &dv, ex));
        let (_, semi) = field_errors(&space, &nodal, ex);
        report.errors.insert("err_H1_nodal_semi".into(), semi);
    }
    let coeffs = FormCoefficients { a: Some(spec.a.clone()), b: None, c: None };
    let post = postprocess_fields(&space, &nodal, &coeffs, &PostOptions { exact: None, omega0: spec.omega0.as_ref() });
    report.boundary_residuals = post.boundary;
    report.solution = nodal;
    report.potential = Some(v);
    Ok(report.seal())
}

// ---------------------------------------------------------------- div-curl

pub fn solve_divcurl(spec: &ProblemSpec) -> Result<SolveReport> {
    spec.validate()?;
    check_ellipticity(spec)?;
    let compat = check_compatibility(spec)?;
    compat.ensure()?;
    let mesh = &spec.mesh;
    let (n, k) = (spec.n(), spec.k);
    let probe = mesh.vertex(0).to_vec();
    let tangential = spec.kind == ProblemKind::DivcurlT;
    let (space, coeffs) = if tangential {
        let ainv = spec.a.inverse(&probe)?;
        let bmap = if spec.a.is_identity() { spec.b.clone() } else { spec.b.compose(&ainv)? };
        let c = FormCoefficients { a: Some(OperatorField::identity(n, k + 1)), b: Some(bmap), c: None };
        (build_space(mesh.clone(), k, BcKind::Tangential, None)?, c)
    } else {
        let binv = spec.b.inverse(&probe)?;
        let cmap = if spec.b.is_identity() { spec.a.clone() } else { spec.a.compose(&binv)? };
        let c = FormCoefficients { a: Some(OperatorField::identity(n, k + 1)), b: Some(OperatorField::identity(n, k)), c: Some(cmap) };
        (build_space(mesh.clone(), k, BcKind::Normal, None)?, c)
    };
    let load = LoadData { f: None, big_f: spec.f.clone(), g: spec.g.clone() };
    let id = OperatorField::identity(n, k);
    let problem = assemble_problem(&space, &coeffs, &id, 0.0, &load, spec.omega0.as_ref(), None)?;
    let mut warnings: Vec<String> = space.warnings().to_vec();
    let constrain = !is_contractible(mesh);
    let (sol, nullspace) = solve_problem(&problem, constrain, mesh.h(), &mut warnings)?;
    let eta = problem.full_solution(&space, &sol.x);

    // back to ω nodally
    let back = if tangential { &spec.a } else { &spec.b };
    let dk = binomial(n, k);
    let omega: Vec<f64> = if back.is_identity() {
        eta.clone()
    } else {
        (0..mesh.num_vertices())
            .flat_map(|v| {
                let m = back.at(mesh.vertex(v));
                let x = DVector::from_column_slice(&eta[v * dk..(v + 1) * dk]);
                let y = m.lu().solve(&x).unwrap_or_else(|| DVector::from_element(dk, f64::NAN));
                y.iter().copied().collect::<Vec<f64>>()
            })
            .collect()
    };

    let d_cells: Vec<Vec<f64>> = (0..mesh.num_cells()).into_par_iter().map(|c| cell_d(&space, &eta, c, coeffs.c.as_ref())).collect();
    let c_cells: Vec<Vec<f64>> =
        (0..mesh.num_cells()).into_par_iter().map(|c| cell_codiff(&space, &eta, c, coeffs.b.as_ref())).collect();
    let d_res = match &spec.f {
        Some(f) => cellwise_error(mesh, &d_cells, f),
        None => crate::galerkin::cellwise_l2_norm(mesh, &d_cells),
    };
    let c_res = match &spec.g {
        Some(g) => cellwise_error(mesh, &c_cells, g),
        None => crate::galerkin::cellwise_l2_norm(mesh, &c_cells),
    };
    let mut report = SolveReport::new(spec, space.clone());
    report.warnings = warnings;
    report.compatibility = compat;
    report.nullspace_dim = Some(nullspace);
    report.residuals.insert("equation".into(), if norm(&problem.rhs) == 0.0 { 0.0 } else { problem.weak_residual(&space, &eta).1 });
    report.residuals.insert("d_residual".into(), d_res);
    report.residuals.insert("codiff_residual".into(), c_res);
    report.residuals.insert("solution_l2".into(), nodal_l2_norm(&space, &omega));
    let post_coeffs = FormCoefficients::identity(n, k);
    record_post(&mut report, &space, &omega, &post_coeffs, spec);
    report.solution = omega;
    Ok(report.seal())
}

// ---------------------------------------------------------------- Gaffney

#[derive(Clone, Debug, Serialize)]
pub struct GaffneyReport {
    pub constant: f64,
    pub rayleigh_min: f64,
    pub residual: f64,
    pub excluded_dim: usize,
    pub dofs: usize,
    pub h: f64,
    pub bc: BcKind,
    #[serde(skip)]
    pub minimizer: Vec<f64>,
}

/// `C = sup ‖∇u‖² / (‖du‖² + ‖δ(Bu)‖²)` (tangential) or `(‖d(Bu)‖² + ‖δu‖²)` (normal),
/// over the complement of the form's harmonic fields.
pub fn gaffney_constant(mesh: Arc<SimplicialMesh>, k: isize, b: &OperatorField, bc: BcKind) -> Result<GaffneyReport> {
    let n = mesh.dim();
    let id_a = OperatorField::identity(n, k + 1);
    let (space, coeffs) = match bc {
        BcKind::Tangential => (build_space(mesh.clone(), k, bc, None)?, FormCoefficients { a: Some(id_a), b: Some(b.clone()), c: None }),
        BcKind::Normal => (
            build_space(mesh.clone(), k, bc, None)?,
            FormCoefficients { a: Some(id_a), b: Some(OperatorField::identity(n, k)), c: Some(b.clone()) },
        ),
        other => return Err(Error::Unsupported(format!("Gaffney constants need a tangential or normal space, got {other:?}"))),
    };
    if space.num_free() == 0 {
        return Err(Error::Unsupported("the constrained space is empty".into()));
    }
    let q = assemble_stiffness(&space, &coeffs)?;
    let nform = assemble_gradient(&space);
    let m = assemble_mass(&space, &OperatorField::identity(n, k))?;
    let excluded = if is_contractible(&mesh) {
        vec![]
    } else {
        near_kernel(&q, &m, HARMONIC_C_TAU * mesh.h() * mesh.h())?.vectors
    };
    let rm = if excluded.is_empty() { rayleigh_min(&q, &nform, None)? } else { rayleigh_min(&q, &nform, Some((&excluded, &m)))? };
    Ok(GaffneyReport {
        constant: 1.0 / rm.value,
        rayleigh_min: rm.value,
        residual: rm.residual,
        excluded_dim: excluded.len(),
        dofs: space.num_free(),
        h: mesh.h(),
        bc,
        minimizer: space.expand(&rm.minimizer),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{generate_mesh, MeshSpec};
    use std::f64::consts::PI;

    fn mesh(spec: MeshSpec) -> Arc<SimplicialMesh> {
        Arc::new(generate_mesh(&spec).unwrap())
    }

    #[test]
    fn kind_names_round_trip() {
        for k in ProblemKind::ALL {
            assert_eq!(k.name().parse::<ProblemKind>().unwrap(), k);
        }
        assert!("hodge".parse::<ProblemKind>().is_err());
    }

    #[test]
    fn zero_data_gives_zero_solution() {
        let m = mesh(MeshSpec::Square { a: 0.0, b: PI, m: 6 });
        for kind in [ProblemKind::HodgeT, ProblemKind::HodgeN, ProblemKind::MaxwellT] {
            let mut spec = ProblemSpec::new(kind, m.clone(), 1);
            spec.lambda = 1.0;
            let r = solve(&spec).unwrap();
            assert!(r.solution.iter().all(|v| *v == 0.0), "{kind}");
        }
        let mut spec = ProblemSpec::new(ProblemKind::StokesT, m.clone(), 1);
        spec.lambda = 1.0;
        spec.p0 = Some(AnalyticField::zero(2, 0));
        let r = solve(&spec).unwrap();
        assert!(r.solution.iter().chain(r.pressure.as_ref().unwrap()).all(|v| v.abs() < 1e-14));
    }

    #[test]
    fn degree_mismatch_is_a_config_error() {
        let m = mesh(MeshSpec::Square { a: 0.0, b: 1.0, m: 3 });
        let mut spec = ProblemSpec::new(ProblemKind::HodgeT, m, 1);
        spec.f = Some(AnalyticField::zero(2, 2));
        assert!(matches!(solve(&spec), Err(Error::Config(_))));
    }

    #[test]
    fn non_coclosed_load_is_rejected_without_lambda() {
        let m = mesh(MeshSpec::Square { a: 0.0, b: PI, m: 8 });
        let mut spec = ProblemSpec::new(ProblemKind::MaxwellT, m, 1);
        spec.f = Some(AnalyticField::new(2, 1, "grad", |x| vec![x[0].cos() * x[1].sin(), x[0].sin() * x[1].cos()]).scale(1.0));
        // f = d(sin x1 sin x2) has δf = 2 sin x1 sin x2 ≠ 0
        match solve(&spec) {
            Err(Error::DataIncompatible(msg)) => assert!(msg.contains("delta_f_plus_lambda_g_zero"), "{msg}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn stokes_needs_k_one() {
        let m = mesh(MeshSpec::Square { a: 0.0, b: 1.0, m: 3 });
        let spec = ProblemSpec::new(ProblemKind::StokesT, m, 2);
        assert!(matches!(solve(&spec), Err(Error::Unsupported(_))));
    }

    #[test]
    fn interior_faces_of_square() {
        let m = mesh(MeshSpec::Square { a: 0.0, b: 1.0, m: 4 });
        // 3·cells/2 edges per triangle pair minus boundary
        assert_eq!(interior_faces(&m).len(), m.edges().len() - m.num_boundary_faces());
    }

    #[test]
    fn gaffney_scales_with_b() {
        let m = mesh(MeshSpec::Square { a: 0.0, b: PI, m: 6 });
        let one = gaffney_constant(m.clone(), 1, &OperatorField::identity(2, 1), BcKind::Tangential).unwrap();
        let two = gaffney_constant(m, 1, &OperatorField::scaled_identity(2, 1, 2.0), BcKind::Tangential).unwrap();
        assert!((one.constant - 1.0).abs() < 1e-8, "{}", one.constant);
        // the numerator grows, so C can only shrink
        assert!(two.constant <= one.constant + 1e-9);
    }
}
