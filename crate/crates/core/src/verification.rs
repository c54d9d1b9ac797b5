//! Independent oracles: the strong operator by finite differences, the
//! manufactured-solution catalogue, exact square spectra and convergence studies.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt::Write as _;
use std::sync::{Arc, OnceLock};

use serde::Serialize;

use crate::coefficients::OperatorField;
use crate::drivers::{solve, ProblemKind, ProblemSpec, SolveReport};
use crate::error::{Error, Result};
use crate::fields::{AnalyticField, H_FD};
use crate::galerkin::{assemble_load_full, assemble_stiffness_full, build_space, BcKind, FormCoefficients, LoadData};
use crate::linalg::norm;
use crate::mesh::{generate_mesh, MeshSpec, SimplicialMesh};

/// Analytic description of a generated domain, used for stencil safety checks.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub enum Domain {
    Square { a: f64, b: f64 },
    Disk { r: f64 },
    Annulus { r0: f64, r1: f64 },
    Cube { a: f64 },
    /// No boundary: fields are evaluated anywhere.
    Whole,
}

impl Domain {
    pub fn of(spec: &MeshSpec) -> Domain {
        match *spec {
            MeshSpec::Square { a, b, .. } => Domain::Square { a, b },
            MeshSpec::Disk { r, .. } => Domain::Disk { r },
            MeshSpec::Annulus { r0, r1, .. } => Domain::Annulus { r0, r1 },
            MeshSpec::Cube { a, .. } => Domain::Cube { a },
        }
    }

    pub fn mesh_spec(&self, m: usize) -> Option<MeshSpec> {
        match *self {
            Domain::Square { a, b } => Some(MeshSpec::Square { a, b, m }),
            Domain::Disk { r } => Some(MeshSpec::Disk { r, m }),
            Domain::Annulus { r0, r1 } => Some(MeshSpec::Annulus { r0, r1, m }),
            Domain::Cube { a } => Some(MeshSpec::Cube { a, m }),
            Domain::Whole => None,
        }
    }

    /// Signed distance to the boundary, positive inside.
    pub fn distance(&self, x: &[f64]) -> f64 {
        let r = || x.iter().map(|v| v * v).sum::<f64>().sqrt();
        match *self {
            Domain::Square { a, b } => x.iter().map(|&v| (v - a).min(b - v)).fold(f64::INFINITY, f64::min),
            Domain::Cube { a } => x.iter().map(|&v| v.min(a - v)).fold(f64::INFINITY, f64::min),
            Domain::Disk { r: rad } => rad - r(),
            Domain::Annulus { r0, r1 } => (r() - r0).min(r1 - r()),
            Domain::Whole => f64::INFINITY,
        }
    }
}

/// `s·[δ(A dω) + Bᵀ dδ(Bω)] − λBω` as a field, with nested fourth-order stencils of step `h`.
pub fn strong_operator(omega: &AnalyticField, a: &OperatorField, b: &OperatorField, lambda: f64, s: f64, h: f64) -> AnalyticField {
    let first = omega.exterior_derivative(h).apply(a).codifferential(h);
    let bw = omega.apply(b);
    let second = bw.codifferential(h).exterior_derivative(h).apply(&b.transpose());
    let principal = first.add(&second).scale(s);
    let out = if lambda == 0.0 { principal } else { principal.sub(&bw.scale(lambda)) };
    out.with_label(format!("L({})", omega.label()))
}

/// The strong operator at an interior point, with the calibrated sign.
pub fn fd_operator_apply(
    omega: &AnalyticField,
    a: &OperatorField,
    b: &OperatorField,
    lambda: f64,
    x: &[f64],
    domain: &Domain,
    h_fd: f64,
) -> Result<Vec<f64>> {
    let dist = domain.distance(x);
    if dist <= 3.0 * h_fd {
        return Err(Error::Stencil(format!("point at distance {dist:e} from the boundary, stencil needs more than {:e}", 3.0 * h_fd)));
    }
    let s = operator_sign(omega.n());
    Ok(strong_operator(omega, a, b, lambda, s, h_fd).eval(x))
}

/// Sign `s` making manufactured loads `f = L(ω)` consistent with the weak form.
/// Calibrated once per dimension on an eigenfunction case.
pub fn operator_sign(n: usize) -> f64 {
    static SIGNS: OnceLock<[f64; 2]> = OnceLock::new();
    let signs = SIGNS.get_or_init(|| [calibrate(2).0, calibrate(3).0]);
    match n {
        2 => signs[0],
        3 => signs[1],
        _ => panic!("operator sign is calibrated for n = 2, 3 only"),
    }
}

/// Relative weak residuals of the interpolated eigenfunction for `s = +1` and `s = −1`;
/// returns the winning sign and both residuals.
pub fn calibrate(n: usize) -> (f64, f64, f64) {
    let (spec, omega) = match n {
        2 => (MeshSpec::Square { a: 0.0, b: PI, m: 8 }, AnalyticField::new(2, 1, "cos x1 sin x2 e1", |x| vec![x[0].cos() * x[1].sin(), 0.0])),
        _ => (
            MeshSpec::Cube { a: PI, m: 4 },
            AnalyticField::new(3, 1, "cos x1 sin x2 sin x3 e1", |x| vec![x[0].cos() * x[1].sin() * x[2].sin(), 0.0, 0.0]),
        ),
    };
    let mesh = Arc::new(generate_mesh(&spec).expect("calibration mesh"));
    let space = build_space(mesh, 1, BcKind::Tangential, None).expect("calibration space");
    let coeffs = FormCoefficients::identity(n, 1);
    let k_full = assemble_stiffness_full(&space, &coeffs).expect("calibration stiffness");
    let u = space.interpolate(&omega);
    let ku = k_full.matvec(&u);
    let id1 = OperatorField::identity(n, 1);
    let id2 = OperatorField::identity(n, 2);
    let residual = |s: f64| {
        let f = strong_operator(&omega, &id2, &id1, 0.0, s, H_FD);
        let load = assemble_load_full(&space, &LoadData { f: Some(f), ..Default::default() }, &coeffs).expect("calibration load");
        let r: Vec<f64> = load.iter().zip(&ku).map(|(l, k)| l - k).collect();
        norm(&space.restrict(&r)) / norm(&space.restrict(&ku))
    };
    let (plus, minus) = (residual(1.0), residual(-1.0));
    (if plus < minus { 1.0 } else { -1.0 }, plus, minus)
}

/// Data of a manufactured problem. Loads are generated from the exact field by [`strong_operator`].
#[derive(Clone, Debug)]
pub struct ManufacturedCase {
    pub name: &'static str,
    pub kind: ProblemKind,
    pub domain: Domain,
    pub k: isize,
    pub lambda: f64,
    pub a: OperatorField,
    pub b: OperatorField,
    pub exact: Option<AnalyticField>,
    pub exact_pressure: Option<AnalyticField>,
    pub f: Option<AnalyticField>,
    pub big_f: Option<AnalyticField>,
    pub g: Option<AnalyticField>,
    pub omega0: Option<AnalyticField>,
    pub p0: Option<AnalyticField>,
    /// Expected harmonic nullspace dimension, when the case is about topology.
    pub nullspace_dim: Option<usize>,
}

impl ManufacturedCase {
    pub fn mesh(&self, m: usize) -> Result<Arc<SimplicialMesh>> {
        let spec = self.domain.mesh_spec(m).ok_or_else(|| Error::Unsupported("case has no meshable domain".into()))?;
        Ok(Arc::new(generate_mesh(&spec)?))
    }

    pub fn spec(&self, mesh: Arc<SimplicialMesh>) -> ProblemSpec {
        let mut spec = ProblemSpec::new(self.kind, mesh, self.k);
        spec.lambda = self.lambda;
        spec.a = self.a.clone();
        spec.b = self.b.clone();
        spec.f = self.f.clone();
        spec.big_f = self.big_f.clone();
        spec.g = self.g.clone();
        spec.omega0 = self.omega0.clone();
        spec.p0 = self.p0.clone();
        spec.exact = self.exact.clone();
        spec.exact_pressure = self.exact_pressure.clone();
        spec
    }

    pub fn spec_at(&self, m: usize) -> Result<ProblemSpec> {
        Ok(self.spec(self.mesh(m)?))
    }
}

fn square() -> Domain {
    Domain::Square { a: 0.0, b: PI }
}

/// `(cos x1 sin 2x2, sin x1 cos x2)`: tangential trace and `δω` vanish on `∂[0,π]²`.
pub fn square_tangential_field() -> AnalyticField {
    AnalyticField::new(2, 1, "(cos x1 sin 2x2, sin x1 cos x2)", |x| vec![x[0].cos() * (2.0 * x[1]).sin(), x[0].sin() * x[1].cos()])
}

/// Velocity of the stream function `ψ = cos x1 cos x2`.
pub fn stream_velocity() -> AnalyticField {
    AnalyticField::new(2, 1, "(-cos x1 sin x2, sin x1 cos x2)", |x| vec![-x[0].cos() * x[1].sin(), x[0].sin() * x[1].cos()])
}

fn hodge_square(name: &'static str, a: OperatorField) -> ManufacturedCase {
    let b = OperatorField::identity(2, 1);
    let exact = square_tangential_field();
    let f = strong_operator(&exact, &a, &b, 1.0, operator_sign(2), H_FD);
    ManufacturedCase {
        name,
        kind: ProblemKind::HodgeT,
        domain: square(),
        k: 1,
        lambda: 1.0,
        a,
        b,
        exact: Some(exact),
        exact_pressure: None,
        f: Some(f),
        big_f: None,
        g: None,
        omega0: None,
        p0: None,
        nullspace_dim: None,
    }
}

/// Varying coefficient `(1 + 0.5 sin x1 sin x2)·I` on 2-forms in the plane.
pub fn varying_a() -> OperatorField {
    OperatorField::scalar(2, 2, |x| 1.0 + 0.5 * x[0].sin() * x[1].sin())
}

/// Built-in manufactured cases.
pub fn manufactured_catalog() -> Vec<ManufacturedCase> {
    let s = operator_sign(2);
    let id1 = OperatorField::identity(2, 1);
    let id2 = OperatorField::identity(2, 2);
    let mut cases = vec![
        hodge_square("square_tangential_hodge", id2.clone()),
        hodge_square("square_tangential_hodge_varying", varying_a()),
    ];

    // tangential rotation plus a gradient, both with vanishing normal data on the unit circle
    let disk_exact = AnalyticField::new(2, 1, "disk normal field", |x| {
        let r2 = x[0] * x[0] + x[1] * x[1];
        let (rot, grad) = (1.0 - 0.5 * r2, 2.0 - 2.0 * r2);
        vec![-rot * x[1] + grad * x[0], rot * x[0] + grad * x[1]]
    });
    cases.push(ManufacturedCase {
        name: "disk_normal_hodge",
        kind: ProblemKind::HodgeN,
        domain: Domain::Disk { r: 1.0 },
        k: 1,
        lambda: 1.0,
        a: id2.clone(),
        b: id1.clone(),
        f: Some(strong_operator(&disk_exact, &id2, &id1, 1.0, s, H_FD)),
        exact: Some(disk_exact),
        exact_pressure: None,
        big_f: None,
        g: None,
        omega0: None,
        p0: None,
        nullspace_dim: None,
    });

    let u = stream_velocity();
    let p = AnalyticField::new(2, 0, "sin x1 sin x2", |x| vec![x[0].sin() * x[1].sin()]);
    let stokes_f = strong_operator(&u, &id2, &id1, 0.0, s, H_FD).add(&p.exterior_derivative(H_FD));
    cases.push(ManufacturedCase {
        name: "square_stokes_stream",
        kind: ProblemKind::StokesT,
        domain: square(),
        k: 1,
        lambda: 0.0,
        a: id2.clone(),
        b: id1.clone(),
        exact: Some(u.clone()),
        exact_pressure: Some(p),
        f: Some(stokes_f),
        big_f: None,
        g: None,
        omega0: None,
        p0: Some(AnalyticField::zero(2, 0)),
        nullspace_dim: None,
    });

    cases.push(ManufacturedCase {
        name: "square_maxwell",
        kind: ProblemKind::MaxwellT,
        domain: square(),
        k: 1,
        lambda: 1.0,
        a: id2.clone(),
        b: id1.clone(),
        f: Some(strong_operator(&u, &id2, &id1, 1.0, s, H_FD)),
        exact: Some(u),
        exact_pressure: None,
        big_f: None,
        g: None,
        omega0: None,
        p0: None,
        nullspace_dim: None,
    });

    let dc = square_tangential_field();
    cases.push(ManufacturedCase {
        name: "square_divcurl",
        kind: ProblemKind::DivcurlT,
        domain: square(),
        k: 1,
        lambda: 0.0,
        a: id1.clone(),
        b: id1.clone(),
        f: Some(dc.exterior_derivative(H_FD)),
        g: Some(dc.codifferential(H_FD)),
        omega0: Some(dc.clone()),
        exact: Some(dc),
        exact_pressure: None,
        big_f: None,
        p0: None,
        nullspace_dim: Some(0),
    });

    cases.push(ManufacturedCase {
        name: "annulus_divcurl_topology",
        kind: ProblemKind::DivcurlT,
        domain: Domain::Annulus { r0: 0.5, r1: 1.0 },
        k: 1,
        lambda: 0.0,
        a: id1.clone(),
        b: id1.clone(),
        exact: None,
        exact_pressure: None,
        f: None,
        big_f: None,
        g: None,
        omega0: None,
        p0: None,
        nullspace_dim: Some(1),
    });

    // divergence-free and vanishing on the unit circle
    let dir_exact = AnalyticField::new(2, 1, "(1-r²)²(-x2, x1)", |x| {
        let w = 1.0 - x[0] * x[0] - x[1] * x[1];
        vec![-w * w * x[1], w * w * x[0]]
    });
    cases.push(ManufacturedCase {
        name: "disk_dirichlet",
        kind: ProblemKind::Dirichlet,
        domain: Domain::Disk { r: 1.0 },
        k: 1,
        lambda: 0.0,
        a: id2.clone(),
        b: id1,
        f: Some(strong_operator(&dir_exact, &id2, &OperatorField::identity(2, 1), 0.0, s, H_FD)),
        exact: Some(dir_exact),
        exact_pressure: None,
        big_f: None,
        g: None,
        omega0: None,
        p0: None,
        nullspace_dim: None,
    });
    cases
}

pub fn catalog_case(name: &str) -> Option<ManufacturedCase> {
    manufactured_catalog().into_iter().find(|c| c.name == name)
}

/// Smallest eigenvalues `σ = −(m² + l²)` of the tangential problem on `[0,π]²`, k = 1,
/// `A = B = I`, with multiplicity, sorted decreasing.
pub fn square_spectrum_oracle(count: usize) -> Vec<f64> {
    let mut out = Vec::new();
    let mut radius = 1usize;
    loop {
        out.clear();
        // first component: cos(m x1) sin(l x2), m ≥ 0, l ≥ 1; second: the mirror image
        for m in 0..=radius {
            for l in 1..=radius {
                let v = (m * m + l * l) as f64;
                out.push(-v);
                out.push(-v);
            }
        }
        out.sort_by(|a, b| b.partial_cmp(a).expect("finite"));
        // every value up to radius² is complete
        let bound = -((radius * radius) as f64);
        if out.iter().filter(|&&v| v >= bound).count() >= count {
            out.retain(|&v| v >= bound);
            out.truncate(count);
            return out;
        }
        radius *= 2;
    }
}

/// Fitted log-log slope with the fit residual.
#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct SlopeFit {
    pub slope: Option<f64>,
    pub residual: Option<f64>,
    pub excluded_coarsest: bool,
    pub levels_used: usize,
}

/// Least-squares slope of `log e` against `log h`; the coarsest level is dropped when its
/// residual exceeds 10% and at least three levels remain.
pub fn fit_slope(h: &[f64], e: &[f64]) -> SlopeFit {
    let pts: Vec<(f64, f64)> =
        h.iter().zip(e).filter(|(hh, ee)| **hh > 0.0 && **ee > 0.0 && ee.is_finite()).map(|(hh, ee)| (hh.ln(), ee.ln())).collect();
    let fit = |p: &[(f64, f64)]| {
        let m = p.len() as f64;
        let (sx, sy) = p.iter().fold((0.0, 0.0), |a, q| (a.0 + q.0, a.1 + q.1));
        let (mx, my) = (sx / m, sy / m);
        let sxx: f64 = p.iter().map(|q| (q.0 - mx).powi(2)).sum();
        let sxy: f64 = p.iter().map(|q| (q.0 - mx) * (q.1 - my)).sum();
        let slope = sxy / sxx;
        let res: Vec<f64> = p.iter().map(|q| q.1 - (my + slope * (q.0 - mx))).collect();
        (slope, res)
    };
    if pts.len() < 3 {
        return SlopeFit { slope: None, residual: None, excluded_coarsest: false, levels_used: pts.len() };
    }
    // coarsest = largest h
    let coarsest = (0..pts.len()).fold(0, |i, j| if pts[j].0 > pts[i].0 { j } else { i });
    let (slope, res) = fit(&pts);
    let rms = |r: &[f64]| (r.iter().map(|v| v * v).sum::<f64>() / r.len() as f64).sqrt();
    if res[coarsest].abs() > 0.1 && pts.len() >= 4 {
        let rest: Vec<(f64, f64)> = pts.iter().enumerate().filter(|(i, _)| *i != coarsest).map(|(_, p)| *p).collect();
        let (s2, r2) = fit(&rest);
        return SlopeFit { slope: Some(s2), residual: Some(rms(&r2)), excluded_coarsest: true, levels_used: rest.len() };
    }
    SlopeFit { slope: Some(slope), residual: Some(rms(&res)), excluded_coarsest: false, levels_used: pts.len() }
}

/// Errors and residuals per mesh level, with fitted slopes.
#[derive(Clone, Debug, Default, Serialize)]
pub struct ConvergenceTable {
    pub case: String,
    pub h: Vec<f64>,
    pub dofs: Vec<usize>,
    /// Column name to per-level values; `err_L2` and `err_H1` come first in CSV output.
    pub columns: BTreeMap<String, Vec<f64>>,
    pub slopes: BTreeMap<String, SlopeFit>,
}

impl ConvergenceTable {
    pub fn column(&self, name: &str) -> Option<&[f64]> {
        self.columns.get(name).map(|v| v.as_slice())
    }

    pub fn slope(&self, name: &str) -> Option<f64> {
        self.slopes.get(name).and_then(|s| s.slope)
    }

    fn ordered_columns(&self) -> Vec<&str> {
        let mut names: Vec<&str> = ["err_L2", "err_H1"].into_iter().filter(|c| self.columns.contains_key(*c)).collect();
        names.extend(self.columns.keys().map(|s| s.as_str()).filter(|c| *c != "err_L2" && *c != "err_H1"));
        names
    }

    pub fn to_csv(&self) -> String {
        let cols = self.ordered_columns();
        let mut out = String::from("h,dofs");
        for c in &cols {
            out.push(',');
            out.push_str(c);
        }
        out.push('\n');
        for i in 0..self.h.len() {
            let _ = write!(out, "{:.16e},{}", self.h[i], self.dofs[i]);
            for c in &cols {
                let _ = write!(out, ",{:.16e}", self.columns[*c][i]);
            }
            out.push('\n');
        }
        out
    }

    fn fit(&mut self) {
        self.slopes = self.columns.iter().map(|(k, v)| (k.clone(), fit_slope(&self.h, v))).collect();
    }
}

/// Columns recorded from one level's report.
fn report_columns(report: &SolveReport) -> BTreeMap<String, f64> {
    let mut cols = BTreeMap::new();
    for (k, v) in &report.errors {
        cols.insert(k.clone(), *v);
    }
    for (k, v) in &report.residuals {
        cols.insert(k.clone(), *v);
    }
    cols
}

/// Run the driver on each mesh resolution `m` and tabulate errors and residuals.
pub fn convergence_study(case: &ManufacturedCase, levels: &[usize]) -> Result<ConvergenceTable> {
    let mut table = ConvergenceTable { case: case.name.to_string(), ..Default::default() };
    for &m in levels {
        let spec = case.spec_at(m)?;
        let h = spec.mesh.h();
        let report = solve(&spec).map_err(|e| annotate(e, m))?;
        table.h.push(h);
        table.dofs.push(report.dofs);
        for (k, v) in report_columns(&report) {
            table.columns.entry(k).or_default().push(v);
        }
    }
    let nlev = table.h.len();
    table.columns.retain(|_, v| v.len() == nlev);
    table.fit();
    Ok(table)
}

/// Nodal interpolation of the exact field, without any solve.
pub fn interpolation_study(case: &ManufacturedCase, levels: &[usize]) -> Result<ConvergenceTable> {
    let exact = case.exact.as_ref().ok_or_else(|| Error::Unsupported("case has no exact solution".into()))?;
    let mut table = ConvergenceTable { case: format!("{} (interpolation)", case.name), ..Default::default() };
    for &m in levels {
        let mesh = case.mesh(m)?;
        let space = build_space(mesh.clone(), case.k, BcKind::None, None)?;
        let u = space.interpolate(exact);
        let (l2, semi) = crate::galerkin::field_errors(&space, &u, exact);
        table.h.push(mesh.h());
        table.dofs.push(space.num_full());
        table.columns.entry("err_L2".into()).or_default().push(l2);
        table.columns.entry("err_H1".into()).or_default().push((l2 * l2 + semi * semi).sqrt());
    }
    table.fit();
    Ok(table)
}

fn annotate(e: Error, m: usize) -> Error {
    match e {
        Error::Solver(msg) => Error::Solver(format!("level m = {m}: {msg}")),
        Error::DataIncompatible(msg) => Error::DataIncompatible(format!("level m = {m}: {msg}")),
        other => other,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn constant_field_is_annihilated() {
        let w = AnalyticField::constant(2, 1, vec![0.3, -1.2]);
        let id1 = OperatorField::identity(2, 1);
        let id2 = OperatorField::identity(2, 2);
        let v = fd_operator_apply(&w, &id2, &id1, 0.0, &[0.5, 0.5], &Domain::Whole, H_FD).unwrap();
        assert!(v.iter().all(|c| c.abs() < 1e-8), "{v:?}");
    }

    #[test]
    fn eigenfunction_gives_twice_the_field() {
        let w = AnalyticField::new(2, 1, "w", |x| vec![x[0].cos() * x[1].sin(), 0.0]);
        let id1 = OperatorField::identity(2, 1);
        let id2 = OperatorField::identity(2, 2);
        let s = operator_sign(2);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let dom = Domain::Square { a: 0.0, b: PI };
        for _ in 0..10 {
            let x = [rng.gen_range(0.1..3.0), rng.gen_range(0.1..3.0)];
            let v = fd_operator_apply(&w, &id2, &id1, 0.0, &x, &dom, H_FD).unwrap();
            let e = w.eval(&x);
            assert!((v[0] - s * 2.0 * e[0]).abs() < 1e-7 && v[1].abs() < 1e-7, "{v:?} {e:?}");
        }
    }

    #[test]
    fn stencil_near_boundary_is_rejected() {
        let w = AnalyticField::zero(2, 1);
        let id1 = OperatorField::identity(2, 1);
        let id2 = OperatorField::identity(2, 2);
        let r = fd_operator_apply(&w, &id2, &id1, 0.0, &[1e-3, 1.0], &Domain::Square { a: 0.0, b: PI }, H_FD);
        assert!(matches!(r, Err(Error::Stencil(_))));
    }

    #[test]
    fn calibration_is_decisive() {
        for n in [2, 3] {
            let (s, plus, minus) = calibrate(n);
            let (good, bad) = if s > 0.0 { (plus, minus) } else { (minus, plus) };
            assert!(good * 10.0 < bad, "n = {n}: {plus} vs {minus}");
        }
    }

    #[test]
    fn oracle_head() {
        assert_eq!(square_spectrum_oracle(10), vec![-1.0, -1.0, -2.0, -2.0, -4.0, -4.0, -5.0, -5.0, -5.0, -5.0]);
    }

    #[test]
    fn slope_of_exact_power_law() {
        let h = [0.4, 0.2, 0.1, 0.05];
        let e: Vec<f64> = h.iter().map(|x| 3.0 * x * x).collect();
        let fit = fit_slope(&h, &e);
        assert!((fit.slope.unwrap() - 2.0).abs() < 1e-12);
        assert!(!fit.excluded_coarsest);
        assert!(fit_slope(&h[..2], &e[..2]).slope.is_none());
    }

    #[test]
    fn preasymptotic_level_is_excluded() {
        let h = [0.4, 0.2, 0.1, 0.05];
        let mut e: Vec<f64> = h.iter().map(|x| x * x).collect();
        e[0] *= 3.0;
        let fit = fit_slope(&h, &e);
        assert!(fit.excluded_coarsest);
        assert!((fit.slope.unwrap() - 2.0).abs() < 1e-12);
    }
}
