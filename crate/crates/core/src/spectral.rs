//! Linear solves with spectrum detection, generalized eigenpairs, harmonic
//! bases and constrained Rayleigh-quotient minimization.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::galerkin::{assemble_mass, assemble_stiffness, build_space, AssembledProblem, BcKind, DofSpace, FormCoefficients};
use crate::coefficients::OperatorField;
use crate::linalg::{dot, norm, solve_refined, CsrMatrix, Factorization};
use crate::mesh::SimplicialMesh;

/// Reduced dimension up to which eigenproblems are solved densely.
pub const DENSE_LIMIT: usize = 800;
/// Inverse condition below which a solve is reported as a spectrum hit.
pub const RCOND_LIMIT: f64 = 1e-12;
/// Relative residual required of linear solves.
pub const SOLVE_TOL: f64 = 1e-9;
/// Relative residual required of eigenpairs.
pub const EIG_TOL: f64 = 1e-7;
/// Default harmonic threshold factor `c_τ` in `τ = c_τ h²`.
pub const HARMONIC_C_TAU: f64 = 20.0;

pub const SIGN_CONVENTION: &str = "sigma = -rho, rho = <Kx,x>/<M_B x,x>";

#[derive(Clone, Debug, Serialize)]
pub struct LinearSolution {
    pub x: Vec<f64>,
    pub residual: f64,
    pub rcond: f64,
    pub cholesky: bool,
}

/// Solve `(K + λM_B)x = rhs`.
pub fn solve_linear(problem: &AssembledProblem) -> Result<LinearSolution> {
    let a = problem.operator();
    solve_operator(&a, &problem.rhs, problem.lambda > 0.0, Some((&problem.k, &problem.m, problem.lambda)))
}

fn solve_operator(
    a: &CsrMatrix,
    rhs: &[f64],
    try_spd: bool,
    pencil: Option<(&CsrMatrix, &CsrMatrix, f64)>,
) -> Result<LinearSolution> {
    let symmetric = a.asymmetry() <= 1e-10;
    let spectrum_hit = |rcond: f64, f: Option<&Factorization>| {
        let (lambda, suspected) = match pencil {
            Some((k, m, lambda)) => (lambda, f.map_or(-lambda, |f| suspected_sigma(f, k, m))),
            None => (0.0, 0.0),
        };
        Error::SpectrumHit { lambda, rcond, suspected }
    };
    let f = match Factorization::new(a, try_spd && symmetric) {
        Ok(f) => f,
        Err(Error::Singular(_)) => return Err(spectrum_hit(0.0, None)),
        Err(e) => return Err(e),
    };
    let rcond = f.rcond();
    if rcond < RCOND_LIMIT {
        return Err(spectrum_hit(rcond, Some(&f)));
    }
    let (x, residual) = solve_refined(a, &f, rhs, SOLVE_TOL * 1e-2);
    if !(residual <= SOLVE_TOL) && norm(rhs) > 0.0 {
        return Err(Error::Solver(format!("relative residual {residual:e} exceeds {SOLVE_TOL:e}")));
    }
    Ok(LinearSolution { x, residual: if norm(rhs) > 0.0 { residual } else { 0.0 }, rcond, cholesky: f.is_cholesky() })
}

/// Two steps of inverse iteration give the eigenvalue closest to `−λ`.
fn suspected_sigma(f: &Factorization, k: &CsrMatrix, m: &CsrMatrix) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut y: Vec<f64> = (0..f.dim()).map(|_| rng.gen::<f64>() - 0.5).collect();
    for _ in 0..2 {
        y = f.solve(&m.matvec(&y));
        let s = norm(&y);
        if !(s > 0.0) || !s.is_finite() {
            break;
        }
        y.iter_mut().for_each(|v| *v /= s);
    }
    let kk = dot(&y, &k.matvec(&y));
    let mm = dot(&y, &m.matvec(&y));
    -kk / mm
}

/// Solve `A x = b` subject to `Wᵀx = 0`, with `Ax − b ∈ span(W)`.
pub fn solve_constrained(a: &CsrMatrix, b: &[f64], w: &[Vec<f64>]) -> Result<LinearSolution> {
    let symmetric = a.asymmetry() <= 1e-10;
    let mut f = Factorization::new(a, symmetric);
    let ok = matches!(&f, Ok(fac) if fac.rcond() > 1e-15);
    if !ok {
        // exactly singular on the constrained directions: regularize by the constraint span's scale
        let scale = a.norm_inf() * 1e-10;
        let reg = a.add_scaled(scale, &CsrMatrix::identity(a.nrows()));
        f = Factorization::new(&reg, symmetric);
    }
    let f = f.map_err(|e| Error::Solver(format!("constrained solve: {e}")))?;
    let y = f.solve(b);
    let z: Vec<Vec<f64>> = w.par_iter().map(|wi| f.solve(wi)).collect();
    let r = w.len();
    let mut x = y.clone();
    if r > 0 {
        let s = DMatrix::from_fn(r, r, |i, j| dot(&w[i], &z[j]));
        let rhs = DVector::from_fn(r, |i, _| dot(&w[i], &y));
        let mu = s.lu().solve(&rhs).ok_or_else(|| Error::Solver("constraint Gram matrix is singular".into()))?;
        for j in 0..r {
            crate::linalg::axpy(&mut x, -mu[j], &z[j]);
        }
    }
    // report the residual of the projected equation
    let ax = a.matvec(&x);
    let mut res: Vec<f64> = b.iter().zip(&ax).map(|(p, q)| p - q).collect();
    if r > 0 {
        let g = DMatrix::from_fn(r, r, |i, j| dot(&w[i], &w[j]));
        let c = DVector::from_fn(r, |i, _| dot(&w[i], &res));
        if let Some(coef) = g.lu().solve(&c) {
            for j in 0..r {
                crate::linalg::axpy(&mut res, -coef[j], &w[j]);
            }
        }
    }
    let residual = norm(&res) / norm(b).max(1e-300);
    Ok(LinearSolution { x, residual, rcond: f.rcond(), cholesky: f.is_cholesky() })
}

#[derive(Clone, Debug, Serialize)]
pub struct EigenResult {
    /// Sorted decreasing (closest to 0 first).
    pub sigma: Vec<f64>,
    #[serde(skip)]
    pub vectors: Vec<Vec<f64>>,
    pub residuals: Vec<f64>,
    pub sign_convention: String,
    pub method: String,
}

fn check_symmetric(m: &CsrMatrix, what: &str) -> Result<()> {
    let a = m.asymmetry();
    if a > 1e-8 {
        return Err(Error::SymmetricRequired(format!("{what} asymmetry {a:e}")));
    }
    Ok(())
}

/// Normwise backward error of `(θ, x)` for the pencil `(K, M)`.
pub fn eig_residual(k: &CsrMatrix, m: &CsrMatrix, theta: f64, x: &[f64]) -> f64 {
    let kx = k.matvec(x);
    let mx = m.matvec(x);
    let r: Vec<f64> = kx.iter().zip(&mx).map(|(a, b)| a - theta * b).collect();
    norm(&r) / ((k.norm_inf() + theta.abs() * m.norm_inf()) * norm(x)).max(1e-300)
}

/// The `count` smallest Rayleigh quotients `ρ` of `(K, M_B)`, reported as `σ = −ρ`.
pub fn eig_pairs(k: &CsrMatrix, m: &CsrMatrix, count: usize) -> Result<EigenResult> {
    check_symmetric(k, "K")?;
    check_symmetric(m, "M_B")?;
    let dim = k.nrows();
    let count = count.min(dim);
    let (rho, vecs, method) = if dim <= DENSE_LIMIT {
        let (r, v) = dense_pencil(k, m, count)?;
        (r, v, "dense")
    } else {
        let (r, v) = subspace_iteration(k, m, count, &IterOptions::default())?;
        (r, v, "shift-invert subspace iteration")
    };
    let residuals: Vec<f64> = rho.iter().zip(&vecs).map(|(r, x)| eig_residual(k, m, *r, x)).collect();
    if let Some(worst) = residuals.iter().cloned().reduce(f64::max) {
        if worst > EIG_TOL {
            return Err(Error::Solver(format!("eigen residual {worst:e} exceeds {EIG_TOL:e}")));
        }
    }
    Ok(EigenResult {
        sigma: rho.iter().map(|r| -r).collect(),
        vectors: vecs,
        residuals,
        sign_convention: SIGN_CONVENTION.into(),
        method: method.into(),
    })
}

fn dense_pencil(k: &CsrMatrix, m: &CsrMatrix, count: usize) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    let kd = k.to_dense();
    let md = m.to_dense();
    let sym = |a: DMatrix<f64>| (&a + a.transpose()) * 0.5;
    let chol = sym(md).cholesky().ok_or_else(|| Error::Singular("M_B is not positive definite".into()))?;
    let l = chol.l();
    let n = kd.nrows();
    let linv = l.solve_lower_triangular(&DMatrix::identity(n, n)).ok_or_else(|| Error::Singular("M_B factor".into()))?;
    let c = sym(&linv * sym(kd) * linv.transpose());
    let eig = c.symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]).then(a.cmp(&b)));
    let lt = linv.transpose();
    let mut rho = Vec::with_capacity(count);
    let mut vecs = Vec::with_capacity(count);
    for &i in order.iter().take(count) {
        rho.push(eig.eigenvalues[i]);
        let x = &lt * eig.eigenvectors.column(i);
        vecs.push(normalize_sign(x.as_slice().to_vec()));
    }
    Ok((rho, vecs))
}

/// Fix the sign of an eigenvector by its largest entry so outputs are reproducible.
fn normalize_sign(mut x: Vec<f64>) -> Vec<f64> {
    let mut big = 0.0f64;
    for &v in &x {
        if v.abs() > big.abs() * (1.0 + 1e-9) {
            big = v;
        }
    }
    if big < 0.0 {
        x.iter_mut().for_each(|v| *v = -*v);
    }
    x
}

#[derive(Clone, Debug)]
pub struct IterOptions {
    pub shift: f64,
    pub tol: f64,
    pub max_iter: usize,
    /// Linear constraints `Uᵀx = 0` on the iterates.
    pub constraints: Vec<Vec<f64>>,
    /// Move the shift toward the smallest Ritz value once it settles.
    pub adaptive_shift: bool,
}

impl Default for IterOptions {
    fn default() -> Self {
        IterOptions { shift: -0.25, tol: 1e-10, max_iter: 400, constraints: vec![], adaptive_shift: false }
    }
}

struct ShiftInvert {
    f: Factorization,
    u: Vec<Vec<f64>>,
    z: Vec<Vec<f64>>,
    s_lu: Option<nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>>,
}

impl ShiftInvert {
    fn new(k: &CsrMatrix, m: &CsrMatrix, shift: f64, u: &[Vec<f64>], require_spd: bool) -> Result<ShiftInvert> {
        let a = k.add_scaled(-shift, m);
        let f = Factorization::new(&a, true)?;
        if require_spd && !f.is_cholesky() {
            return Err(Error::Singular("shifted pencil not positive definite".into()));
        }
        let z: Vec<Vec<f64>> = u.par_iter().map(|ui| f.solve(ui)).collect();
        let r = u.len();
        let s_lu = (r > 0).then(|| DMatrix::from_fn(r, r, |i, j| dot(&u[i], &z[j])).lu());
        Ok(ShiftInvert { f, u: u.to_vec(), z, s_lu })
    }

    fn apply(&self, b: &[f64]) -> Vec<f64> {
        let mut y = self.f.solve(b);
        if let Some(lu) = &self.s_lu {
            let r = self.u.len();
            let c = DVector::from_fn(r, |i, _| dot(&self.u[i], &y));
            if let Some(mu) = lu.solve(&c) {
                for j in 0..r {
                    crate::linalg::axpy(&mut y, -mu[j], &self.z[j]);
                }
            }
        }
        y
    }
}

/// M-orthonormalize columns in place (modified Gram–Schmidt, twice); drops dependent columns.
fn m_orthonormalize(m: &CsrMatrix, cols: Vec<Vec<f64>>) -> Vec<Vec<f64>> {
    let mut out: Vec<Vec<f64>> = Vec::with_capacity(cols.len());
    let mut mout: Vec<Vec<f64>> = Vec::with_capacity(cols.len());
    for mut c in cols {
        let n0 = dot(&c, &m.matvec(&c)).sqrt();
        for _ in 0..2 {
            for (q, mq) in out.iter().zip(&mout) {
                let h = dot(mq, &c);
                crate::linalg::axpy(&mut c, -h, q);
            }
        }
        let mc = m.matvec(&c);
        let nn = dot(&c, &mc).sqrt();
        if nn > 1e-10 * n0 && nn > 0.0 {
            c.iter_mut().for_each(|v| *v /= nn);
            out.push(c);
            mout.push(mc.into_iter().map(|v| v / nn).collect());
        }
    }
    out
}

fn initial_block(dim: usize, p: usize) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    (0..p).map(|_| (0..dim).map(|_| rng.gen::<f64>() - 0.5).collect()).collect()
}

/// Block shift-invert subspace iteration with Rayleigh–Ritz.
pub fn subspace_iteration(k: &CsrMatrix, m: &CsrMatrix, count: usize, opts: &IterOptions) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    let dim = k.nrows();
    let free_dim = dim.saturating_sub(opts.constraints.len());
    let p = (2 * count).max(count + 8).min(free_dim);
    if p == 0 || count == 0 {
        return Ok((vec![], vec![]));
    }
    let mut shift = opts.shift;
    let mut op = ShiftInvert::new(k, m, shift, &opts.constraints, false)?;
    let mut x = initial_block(dim, p);
    let mut best: (Vec<f64>, Vec<Vec<f64>>) = (vec![], vec![]);
    let knorm = k.norm_inf();
    let mnorm = m.norm_inf();
    let mut history: Vec<f64> = Vec::new();
    for it in 0..opts.max_iter {
        let y: Vec<Vec<f64>> = x.par_iter().map(|xi| op.apply(&m.matvec(xi))).collect();
        let q = m_orthonormalize(m, y);
        if q.is_empty() {
            return Err(Error::Solver("subspace iteration collapsed".into()));
        }
        let kq: Vec<Vec<f64>> = q.par_iter().map(|qi| k.matvec(qi)).collect();
        let r = q.len();
        let h = DMatrix::from_fn(r, r, |i, j| 0.5 * (dot(&q[i], &kq[j]) + dot(&q[j], &kq[i])));
        let eig = h.symmetric_eigen();
        let mut order: Vec<usize> = (0..r).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]).then(a.cmp(&b)));
        let theta: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
        x = order
            .iter()
            .map(|&i| {
                let mut v = vec![0.0; dim];
                for (j, qj) in q.iter().enumerate() {
                    crate::linalg::axpy(&mut v, eig.eigenvectors[(j, i)], qj);
                }
                v
            })
            .collect();
        let nconv = count.min(x.len());
        let res: Vec<f64> = (0..nconv)
            .into_par_iter()
            .map(|i| {
                let kx = k.matvec(&x[i]);
                let mx = m.matvec(&x[i]);
                let rr: Vec<f64> = kx.iter().zip(&mx).map(|(a, b)| a - theta[i] * b).collect();
                norm(&rr) / ((knorm + theta[i].abs() * mnorm) * norm(&x[i])).max(1e-300)
            })
            .collect();
        best = (theta[..nconv].to_vec(), x[..nconv].iter().cloned().map(normalize_sign).collect());
        let worst = res.iter().cloned().fold(0.0, f64::max);
        if worst <= opts.tol {
            return Ok(best);
        }
        history.push(theta[0]);
        if opts.adaptive_shift && it >= 8 && it % 8 == 0 {
            // keep the shift strictly below the spectrum: positive definiteness certifies it
            let gap = (theta[0] - shift).abs();
            let mut trial = theta[0] - 0.05 * gap.max(1e-6);
            for _ in 0..6 {
                if trial <= shift {
                    break;
                }
                match ShiftInvert::new(k, m, trial, &opts.constraints, opts.constraints.is_empty()) {
                    Ok(o) if o.f.is_cholesky() || !opts.constraints.is_empty() => {
                        op = o;
                        shift = trial;
                        break;
                    }
                    _ => trial = shift + 0.5 * (trial - shift),
                }
            }
        }
        if opts.adaptive_shift && history.len() > 20 {
            let old = history[history.len() - 21];
            if (old - theta[0]).abs() <= 1e-10 * theta[0].abs().max(1e-300) {
                return Ok(best);
            }
        }
    }
    if opts.adaptive_shift {
        return Ok(best);
    }
    Err(Error::Solver(format!("subspace iteration did not converge in {} iterations", opts.max_iter)))
}

#[derive(Clone, Debug, Serialize)]
pub struct HarmonicBasis {
    #[serde(skip)]
    pub vectors: Vec<Vec<f64>>,
    pub dim: usize,
    pub threshold: f64,
    /// Smallest Rayleigh quotients found, ascending.
    pub rho: Vec<f64>,
    /// First Rayleigh quotient above the threshold.
    pub first_nonzero: Option<f64>,
    /// `first_nonzero / max(harmonic ρ)`; infinite when no harmonic fields exist.
    pub gap: f64,
    pub warnings: Vec<String>,
}

/// Near-null eigenvectors of a symmetric pencil below `τ`.
pub fn near_kernel(k: &CsrMatrix, m: &CsrMatrix, tau: f64) -> Result<HarmonicBasis> {
    let dim = k.nrows();
    let mut count = 6usize.min(dim);
    loop {
        let eig = eig_pairs(k, m, count)?;
        let rho: Vec<f64> = eig.sigma.iter().map(|s| -s).collect();
        let below = rho.iter().filter(|&&r| r <= tau).count();
        if below < rho.len() || count >= dim {
            let vectors: Vec<Vec<f64>> = eig.vectors[..below].to_vec();
            let first_nonzero = rho.get(below).copied();
            let hmax = rho[..below].iter().cloned().fold(0.0, f64::max);
            let gap = match (below, first_nonzero) {
                (0, _) => f64::INFINITY,
                (_, Some(f)) => f / hmax.max(1e-300),
                _ => f64::INFINITY,
            };
            let mut warnings = Vec::new();
            if rho.iter().any(|&r| r > tau / 3.0 && r < 3.0 * tau) {
                warnings.push(format!("ambiguous gap: an eigenvalue lies within a factor 3 of the threshold {tau:e}"));
            }
            return Ok(HarmonicBasis { vectors, dim: below, threshold: tau, rho, first_nonzero, gap, warnings });
        }
        count = (2 * count).min(dim);
    }
}

/// Harmonic fields of the identity-coefficient Hodge form on a tangential or normal space.
pub fn harmonic_basis(mesh: Arc<SimplicialMesh>, k: isize, bc: BcKind) -> Result<(DofSpace, HarmonicBasis)> {
    harmonic_basis_with(mesh, k, bc, HARMONIC_C_TAU)
}

pub fn harmonic_basis_with(mesh: Arc<SimplicialMesh>, k: isize, bc: BcKind, c_tau: f64) -> Result<(DofSpace, HarmonicBasis)> {
    if !matches!(bc, BcKind::Tangential | BcKind::Normal) {
        return Err(Error::Unsupported("harmonic fields need a tangential or normal space".into()));
    }
    let n = mesh.dim();
    let h = mesh.h();
    let space = build_space(mesh, k, bc, None)?;
    let kk = assemble_stiffness(&space, &FormCoefficients::identity(n, k))?;
    let mm = assemble_mass(&space, &OperatorField::identity(n, k))?;
    let basis = near_kernel(&kk, &mm, c_tau * h * h)?;
    Ok((space, basis))
}

#[derive(Clone, Debug, Serialize)]
pub struct RayleighMin {
    pub value: f64,
    #[serde(skip)]
    pub minimizer: Vec<f64>,
    pub residual: f64,
}

/// Smallest generalized eigenvalue of `Q` against `N` on the `G`-orthogonal
/// complement of `exclusion` (constraints `(G z)ᵀ x = 0`).
pub fn rayleigh_min(q: &CsrMatrix, nform: &CsrMatrix, exclusion: Option<(&[Vec<f64>], &CsrMatrix)>) -> Result<RayleighMin> {
    check_symmetric(q, "Q")?;
    check_symmetric(nform, "N")?;
    let constraints: Vec<Vec<f64>> = match exclusion {
        Some((zs, g)) => zs.iter().map(|z| g.matvec(z)).collect(),
        None => vec![],
    };
    if constraints.is_empty() {
        match Factorization::new(nform, true) {
            Ok(f) if f.is_cholesky() => {}
            _ => return Err(Error::Singular("N is singular on the working subspace".into())),
        }
    }
    let dim = q.nrows();
    let (value, minimizer) = if dim <= DENSE_LIMIT && constraints.is_empty() {
        let (r, v) = dense_pencil(q, nform, 1)?;
        (r[0], v[0].clone())
    } else {
        let opts = IterOptions { shift: -0.1, tol: 1e-9, max_iter: 300, constraints, adaptive_shift: true };
        let (r, v) = subspace_iteration(q, nform, 1, &opts)?;
        (r[0], v[0].clone())
    };
    let nn = dot(&minimizer, &nform.matvec(&minimizer));
    if !(nn > 0.0) {
        return Err(Error::Singular("N vanishes on the minimizer".into()));
    }
    let residual = eig_residual(q, nform, value, &minimizer);
    Ok(RayleighMin { value, minimizer, residual })
}

#[cfg(test)]
mod tests {
    use super::*;

    // finite-difference Laplacian on (0,1) with lumped mass
    fn laplace_1d(n: usize) -> (CsrMatrix, CsrMatrix) {
        let h = 1.0 / (n as f64 + 1.0);
        let mut k = Vec::new();
        let mut m = Vec::new();
        for i in 0..n {
            k.push((i, i, 2.0 / h));
            m.push((i, i, h));
            if i + 1 < n {
                k.push((i, i + 1, -1.0 / h));
                k.push((i + 1, i, -1.0 / h));
            }
        }
        (CsrMatrix::from_triplets(n, n, &k), CsrMatrix::from_triplets(n, n, &m))
    }

    fn exact(n: usize, j: usize) -> f64 {
        let h = 1.0 / (n as f64 + 1.0);
        (2.0 - 2.0 * (j as f64 * std::f64::consts::PI * h).cos()) / (h * h)
    }

    #[test]
    fn identity_pencil_gives_minus_one() {
        let id = CsrMatrix::identity(5);
        let e = eig_pairs(&id, &id, 3).unwrap();
        assert!(e.sigma.iter().all(|s| (s + 1.0).abs() < 1e-12));
    }

    #[test]
    fn dense_and_iterative_agree() {
        for n in [50usize, 900] {
            let (k, m) = laplace_1d(n);
            let e = eig_pairs(&k, &m, 4).unwrap();
            for j in 0..4 {
                assert!((-e.sigma[j] - exact(n, j + 1)).abs() < 1e-8 * exact(n, j + 1), "{n} {j}");
            }
        }
    }

    #[test]
    fn spectrum_hit_is_reported() {
        let (k, m) = laplace_1d(40);
        let rho1 = exact(40, 1);
        let p = AssembledProblem {
            k: k.clone(),
            m: m.clone(),
            rhs: vec![1.0; 40],
            lift: vec![0.0; 40],
            lambda: -rho1,
            k_full: k.clone(),
            m_full: m.clone(),
            load_full: vec![1.0; 40],
        };
        match solve_linear(&p) {
            Err(Error::SpectrumHit { suspected, .. }) => assert!((suspected + rho1).abs() < 1e-6 * rho1),
            other => panic!("expected spectrum hit, got {other:?}"),
        }
    }

    #[test]
    fn rayleigh_scaling() {
        let (k, _) = laplace_1d(30);
        let r = rayleigh_min(&k.scale(2.0), &k, None).unwrap();
        assert!((r.value - 2.0).abs() < 1e-10);
    }

    #[test]
    fn constrained_solve_respects_constraints() {
        let (k, _) = laplace_1d(30);
        let w = vec![vec![1.0; 30]];
        let b: Vec<f64> = (0..30).map(|i| (i as f64).cos()).collect();
        let s = solve_constrained(&k, &b, &w).unwrap();
        assert!(dot(&s.x, &w[0]).abs() < 1e-10);
        assert!(s.residual < 1e-10);
    }
}
