//! Nodal piecewise-linear `Λ^k`-valued spaces with vertex trace constraints,
//! and assembly of the bilinear forms and loads of the weak formulations.
//!
//! Full nodal index of component `s` at vertex `v` is `v·C(n,k) + s`. The
//! injection `P` maps free coefficients to full ones and has orthonormal columns.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;

use crate::coefficients::{build_atilde_general, OperatorField};
use crate::error::{Error, Result};
use crate::exterior::{binomial, codifferential_sign, interior_matrix, wedge_matrix};
use crate::fields::{AnalyticField, H_FD};
use crate::linalg::CsrMatrix;
use crate::mesh::SimplicialMesh;
use crate::quadrature::rule;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BcKind {
    None,
    Tangential,
    Normal,
    NormalB,
    Dirichlet,
}

/// Singular values below this (relative to max(1, σ_max)) span the admissible subspace.
pub const SVD_THRESHOLD: f64 = 1e-8;

#[derive(Clone, Debug)]
pub struct DofSpace {
    mesh: Arc<SimplicialMesh>,
    k: isize,
    bc: BcKind,
    ncomp: usize,
    vertex_bases: Vec<Option<DMatrix<f64>>>,
    offsets: Vec<usize>,
    p: CsrMatrix,
    warnings: Vec<String>,
}

fn unit(n: usize, p: usize) -> Vec<f64> {
    let mut e = vec![0.0; n];
    e[p] = 1.0;
    e
}

/// Stacked constraint map at a boundary vertex.
fn constraint_map(mesh: &SimplicialMesh, v: usize, k: isize, bc: BcKind, b: Option<&OperatorField>) -> Option<DMatrix<f64>> {
    let vn = mesh.vertex_normal(v)?;
    let ncomp = binomial(mesh.dim(), k);
    let normals: Vec<Vec<f64>> = if vn.corner {
        vn.faces.iter().map(|&f| mesh.face_normal(f).to_vec()).collect()
    } else {
        vec![vn.normal.clone()]
    };
    let blocks: Vec<DMatrix<f64>> = match bc {
        BcKind::None => return None,
        BcKind::Dirichlet => vec![DMatrix::identity(ncomp, ncomp)],
        BcKind::Tangential => normals.iter().map(|nu| wedge_matrix(nu, k)).collect(),
        BcKind::Normal => normals.iter().map(|nu| interior_matrix(nu, k)).collect(),
        BcKind::NormalB => {
            let bm = b.expect("normal_B space needs B").at(mesh.vertex(v));
            normals.iter().map(|nu| interior_matrix(nu, k) * &bm).collect()
        }
    };
    let rows: usize = blocks.iter().map(|m| m.nrows()).sum();
    let mut out = DMatrix::zeros(rows, ncomp);
    let mut r = 0;
    for m in blocks {
        out.view_mut((r, 0), (m.nrows(), ncomp)).copy_from(&m);
        r += m.nrows();
    }
    Some(out)
}

/// Orthonormal basis of the null space of `c` (columns).
fn null_space(c: &DMatrix<f64>) -> DMatrix<f64> {
    let ncomp = c.ncols();
    if c.nrows() == 0 {
        return DMatrix::identity(ncomp, ncomp);
    }
    // pad to at least square so the SVD returns a full right basis
    let rows = c.nrows().max(ncomp);
    let mut padded = DMatrix::zeros(rows, ncomp);
    padded.view_mut((0, 0), (c.nrows(), ncomp)).copy_from(c);
    let svd = padded.svd(false, true);
    let vt = svd.v_t.expect("right singular vectors requested");
    let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let tol = SVD_THRESHOLD * smax.max(1.0);
    let keep: Vec<usize> = (0..ncomp).filter(|&i| svd.singular_values[i] <= tol).collect();
    let mut basis = DMatrix::zeros(ncomp, keep.len());
    for (j, &i) in keep.iter().enumerate() {
        let mut col: Vec<f64> = vt.row(i).iter().copied().collect();
        // fix sign by the largest entry so bases are reproducible
        let big = col.iter().cloned().fold(0.0f64, |a, x| if x.abs() > a.abs() + 1e-12 { x } else { a });
        if big < 0.0 {
            col.iter_mut().for_each(|x| *x = -*x);
        }
        for (s, x) in col.into_iter().enumerate() {
            basis[(s, j)] = if x.abs() < 1e-15 { 0.0 } else { x };
        }
    }
    basis
}

/// Build the constrained nodal space.
pub fn build_space(mesh: Arc<SimplicialMesh>, k: isize, bc: BcKind, b: Option<&OperatorField>) -> Result<DofSpace> {
    let n = mesh.dim();
    if k < 0 || k as usize > n {
        return Err(Error::DegreeOutOfRange { n, k });
    }
    if bc == BcKind::NormalB {
        match b {
            None => return Err(Error::Config("normal_B space requires the B field".into())),
            Some(bf) if bf.source_degree() != k || bf.target_degree() != k => {
                return Err(Error::DegreeMismatch { left: bf.source_degree(), right: k })
            }
            _ => {}
        }
    }
    let ncomp = binomial(n, k);
    let nv = mesh.num_vertices();
    let mut vertex_bases = Vec::with_capacity(nv);
    let mut offsets = Vec::with_capacity(nv + 1);
    let mut trip = Vec::new();
    let mut free = 0usize;
    let mut empty = 0usize;
    for v in 0..nv {
        offsets.push(free);
        match constraint_map(&mesh, v, k, bc, b) {
            None => {
                for s in 0..ncomp {
                    trip.push((v * ncomp + s, free + s, 1.0));
                }
                free += ncomp;
                vertex_bases.push(None);
            }
            Some(c) => {
                let basis = null_space(&c);
                if basis.ncols() == 0 {
                    empty += 1;
                }
                for j in 0..basis.ncols() {
                    for s in 0..ncomp {
                        let x = basis[(s, j)];
                        if x != 0.0 {
                            trip.push((v * ncomp + s, free + j, x));
                        }
                    }
                }
                free += basis.ncols();
                vertex_bases.push(Some(basis));
            }
        }
    }
    offsets.push(free);
    let mut warnings = Vec::new();
    let nb = mesh.boundary_vertices().len();
    if bc != BcKind::None && bc != BcKind::Dirichlet && nb > 0 && empty == nb && ncomp > 0 {
        warnings.push(format!("admissible subspace is empty at all {nb} boundary vertices"));
    }
    let p = CsrMatrix::from_triplets(nv * ncomp, free, &trip);
    Ok(DofSpace { mesh, k, bc, ncomp, vertex_bases, offsets, p, warnings })
}

impl DofSpace {
    pub fn mesh(&self) -> &SimplicialMesh {
        &self.mesh
    }
    pub fn mesh_arc(&self) -> Arc<SimplicialMesh> {
        self.mesh.clone()
    }
    pub fn degree(&self) -> isize {
        self.k
    }
    pub fn bc(&self) -> BcKind {
        self.bc
    }
    pub fn ncomp(&self) -> usize {
        self.ncomp
    }
    pub fn num_free(&self) -> usize {
        self.p.ncols()
    }
    pub fn num_full(&self) -> usize {
        self.p.nrows()
    }
    pub fn injection(&self) -> &CsrMatrix {
        &self.p
    }
    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    /// Admissible basis at a vertex (identity for interior vertices).
    pub fn vertex_basis(&self, v: usize) -> DMatrix<f64> {
        match &self.vertex_bases[v] {
            Some(b) => b.clone(),
            None => DMatrix::identity(self.ncomp, self.ncomp),
        }
    }

    pub fn free_range(&self, v: usize) -> std::ops::Range<usize> {
        self.offsets[v]..self.offsets[v + 1]
    }

    pub fn expand(&self, x: &[f64]) -> Vec<f64> {
        self.p.matvec(x)
    }

    pub fn restrict(&self, full: &[f64]) -> Vec<f64> {
        self.p.transpose_matvec(full)
    }

    /// Nodal interpolation onto all vertices (ignores constraints).
    pub fn interpolate(&self, field: &AnalyticField) -> Vec<f64> {
        let mut out = vec![0.0; self.num_full()];
        for v in 0..self.mesh.num_vertices() {
            let val = field.eval(self.mesh.vertex(v));
            out[v * self.ncomp..(v + 1) * self.ncomp].copy_from_slice(&val);
        }
        out
    }

    pub fn nodal_value(&self, full: &[f64], v: usize) -> Vec<f64> {
        full[v * self.ncomp..(v + 1) * self.ncomp].to_vec()
    }

    /// Largest constraint violation of a full nodal vector over the boundary vertices.
    pub fn constraint_residual(&self, full: &[f64], b: Option<&OperatorField>) -> f64 {
        let mut worst = 0.0f64;
        for v in 0..self.mesh.num_vertices() {
            if let Some(c) = constraint_map(&self.mesh, v, self.k, self.bc, b) {
                let val = DVector::from_vec(self.nodal_value(full, v));
                worst = worst.max((c * val).amax());
            }
        }
        worst
    }
}

/// Coefficients of `a(u,v) = ∫⟨A d(Cu), d(Cv)⟩ + ∫⟨δ(Bu), δ(Bv)⟩`.
/// `a = None` drops the first term, `b = None` the second, `c = None` means `C = I`.
#[derive(Clone, Debug)]
pub struct FormCoefficients {
    pub a: Option<OperatorField>,
    pub b: Option<OperatorField>,
    pub c: Option<OperatorField>,
}

impl FormCoefficients {
    pub fn hodge(a: OperatorField, b: OperatorField) -> Self {
        FormCoefficients { a: Some(a), b: Some(b), c: None }
    }

    pub fn identity(n: usize, k: isize) -> Self {
        Self::hodge(OperatorField::identity(n, k + 1), OperatorField::identity(n, k))
    }

    fn is_constant(&self) -> bool {
        [&self.a, &self.b, &self.c].iter().all(|f| f.as_ref().map_or(true, |f| f.is_constant()))
    }

    fn check(&self, n: usize, k: isize) -> Result<()> {
        let want = [(&self.a, k + 1, k + 1), (&self.b, k, k), (&self.c, k, k)];
        for (f, src, tgt) in want {
            if let Some(f) = f {
                if f.n() != n {
                    return Err(Error::DimensionMismatch { left: f.n(), right: n });
                }
                if f.source_degree() != src || f.target_degree() != tgt {
                    return Err(Error::DegreeMismatch { left: f.source_degree(), right: src });
                }
            }
        }
        Ok(())
    }
}

/// Pointwise coefficient data at one quadrature point.
struct PointCoeffs {
    a: DMatrix<f64>,
    b: DMatrix<f64>,
    c: DMatrix<f64>,
    // Σ_p W_p ∂_p C and Σ_p I_p ∂_p B, present only for varying fields
    low_d: Option<DMatrix<f64>>,
    low_delta: Option<DMatrix<f64>>,
}

struct Exterior {
    n: usize,
    k: isize,
    w: Vec<DMatrix<f64>>,
    i: Vec<DMatrix<f64>>,
}

impl Exterior {
    fn new(n: usize, k: isize) -> Self {
        Exterior {
            n,
            k,
            w: (0..n).map(|p| wedge_matrix(&unit(n, p), k)).collect(),
            i: (0..n).map(|p| interior_matrix(&unit(n, p), k)).collect(),
        }
    }

    fn point(&self, coeffs: &FormCoefficients, x: &[f64]) -> PointCoeffs {
        let (n, k) = (self.n, self.k);
        let (dk, dk1, dkm) = (binomial(n, k), binomial(n, k + 1), binomial(n, k - 1));
        let a = coeffs.a.as_ref().map_or_else(|| DMatrix::zeros(dk1, dk1), |f| f.at(x));
        let b = coeffs.b.as_ref().map_or_else(|| DMatrix::zeros(dk, dk), |f| f.at(x));
        let c = coeffs.c.as_ref().map_or_else(|| DMatrix::identity(dk, dk), |f| f.at(x));
        let low_d = match (&coeffs.a, &coeffs.c) {
            (Some(_), Some(cf)) if !cf.is_constant() => {
                let mut m = DMatrix::zeros(dk1, dk);
                for p in 0..n {
                    m += &self.w[p] * cf.partial(x, p, H_FD);
                }
                Some(m)
            }
            _ => None,
        };
        let low_delta = match &coeffs.b {
            Some(bf) if !bf.is_constant() => {
                let mut m = DMatrix::zeros(dkm, dk);
                for p in 0..n {
                    m += &self.i[p] * bf.partial(x, p, H_FD);
                }
                Some(m)
            }
            _ => None,
        };
        PointCoeffs { a, b, c, low_d, low_delta }
    }

    /// `Σ_p g_p W_p C` and `Σ_p g_p I_p B` for a gradient `g`.
    fn principal(&self, pc: &PointCoeffs, g: &[f64]) -> (DMatrix<f64>, DMatrix<f64>) {
        let (n, k) = (self.n, self.k);
        let mut dm = DMatrix::zeros(binomial(n, k + 1), binomial(n, k));
        let mut im = DMatrix::zeros(binomial(n, k - 1), binomial(n, k));
        for p in 0..n {
            if g[p] != 0.0 {
                dm += &self.w[p] * g[p];
                im += &self.i[p] * g[p];
            }
        }
        (dm * &pc.c, im * &pc.b)
    }
}

type Block = (Vec<usize>, DMatrix<f64>);

fn scatter(nfull: usize, blocks: Vec<Block>) -> CsrMatrix {
    let mut trip = Vec::with_capacity(blocks.iter().map(|b| b.1.len()).sum());
    for (idx, m) in blocks {
        for (a, &ga) in idx.iter().enumerate() {
            for (b, &gb) in idx.iter().enumerate() {
                let v = m[(a, b)];
                if v != 0.0 {
                    trip.push((ga, gb, v));
                }
            }
        }
    }
    CsrMatrix::from_triplets(nfull, nfull, &trip)
}

fn cell_dofs(mesh: &SimplicialMesh, c: usize, ncomp: usize) -> Vec<usize> {
    mesh.cell(c).iter().flat_map(|&v| (0..ncomp).map(move |s| v * ncomp + s)).collect()
}

/// Unreduced stiffness matrix on all nodal coefficients.
pub fn assemble_stiffness_full(space: &DofSpace, coeffs: &FormCoefficients) -> Result<CsrMatrix> {
    let mesh = space.mesh();
    let (n, k, dk) = (mesh.dim(), space.k, space.ncomp);
    coeffs.check(n, k)?;
    let ext = Exterior::new(n, k);
    let order = if coeffs.is_constant() { 1 } else { 2 };
    let qr = rule(n, order);
    let uw = qr.unit_weights();
    let blocks: Vec<Block> = (0..mesh.num_cells())
        .into_par_iter()
        .map(|c| {
            let grads = mesh.barycentric_gradients(c);
            let vol = mesh.signed_volume(c).abs();
            let nl = (n + 1) * dk;
            let mut ke = DMatrix::zeros(nl, nl);
            for (q, bary) in qr.points.iter().enumerate() {
                let w = uw[q] * vol;
                let x = mesh.cell_point(c, bary);
                let pc = ext.point(coeffs, &x);
                let at = build_atilde_general(&pc.a, &pc.b, Some(&pc.c), n, k).expect("sizes checked");
                for i in 0..=n {
                    for j in 0..=n {
                        for s in 0..dk {
                            for t in 0..dk {
                                let mut acc = 0.0;
                                for p in 0..n {
                                    for qq in 0..n {
                                        acc += grads[j][p] * grads[i][qq] * at[(qq * dk + s, p * dk + t)];
                                    }
                                }
                                ke[(i * dk + s, j * dk + t)] += w * acc;
                            }
                        }
                    }
                }
                if pc.low_d.is_some() || pc.low_delta.is_some() {
                    let prin: Vec<(DMatrix<f64>, DMatrix<f64>)> = grads.iter().map(|g| ext.principal(&pc, g)).collect();
                    for i in 0..=n {
                        for j in 0..=n {
                            let (phi_i, phi_j) = (bary[i], bary[j]);
                            let mut blk = DMatrix::zeros(dk, dk);
                            if let Some(ld) = &pc.low_d {
                                let (di, dj) = (&prin[i].0, &prin[j].0);
                                blk += di.transpose() * &pc.a * ld * phi_j
                                    + (ld.transpose() * &pc.a * dj) * phi_i
                                    + ld.transpose() * &pc.a * ld * (phi_i * phi_j);
                            }
                            if let Some(lb) = &pc.low_delta {
                                let (ei, ej) = (&prin[i].1, &prin[j].1);
                                blk += ei.transpose() * lb * phi_j
                                    + (lb.transpose() * ej) * phi_i
                                    + lb.transpose() * lb * (phi_i * phi_j);
                            }
                            let mut view = ke.view_mut((i * dk, j * dk), (dk, dk));
                            view += blk * w;
                        }
                    }
                }
            }
            (cell_dofs(mesh, c, dk), ke)
        })
        .collect();
    Ok(scatter(space.num_full(), blocks))
}

pub fn assemble_stiffness(space: &DofSpace, coeffs: &FormCoefficients) -> Result<CsrMatrix> {
    Ok(assemble_stiffness_full(space, coeffs)?.congruence(space.injection()))
}

/// Unreduced full-gradient form `∫⟨∇u, ∇v⟩ = Σ_s ∫∇u_s·∇v_s`.
pub fn assemble_gradient_full(space: &DofSpace) -> CsrMatrix {
    let mesh = space.mesh();
    let (n, dk) = (mesh.dim(), space.ncomp);
    let blocks: Vec<Block> = (0..mesh.num_cells())
        .into_par_iter()
        .map(|c| {
            let grads = mesh.barycentric_gradients(c);
            let vol = mesh.signed_volume(c).abs();
            let nl = (n + 1) * dk;
            let mut ke = DMatrix::zeros(nl, nl);
            for i in 0..=n {
                for j in 0..=n {
                    let g: f64 = (0..n).map(|p| grads[i][p] * grads[j][p]).sum::<f64>() * vol;
                    for s in 0..dk {
                        ke[(i * dk + s, j * dk + s)] = g;
                    }
                }
            }
            (cell_dofs(mesh, c, dk), ke)
        })
        .collect();
    scatter(space.num_full(), blocks)
}

pub fn assemble_gradient(space: &DofSpace) -> CsrMatrix {
    assemble_gradient_full(space).congruence(space.injection())
}

/// Unreduced `∫⟨Bu, v⟩`.
pub fn assemble_mass_full(space: &DofSpace, b: &OperatorField) -> Result<CsrMatrix> {
    let mesh = space.mesh();
    let (n, k, dk) = (mesh.dim(), space.k, space.ncomp);
    if b.source_degree() != k || b.target_degree() != k {
        return Err(Error::DegreeMismatch { left: b.source_degree(), right: k });
    }
    let qr = rule(n, if b.is_constant() { 2 } else { 4 });
    let uw = qr.unit_weights();
    let blocks: Vec<Block> = (0..mesh.num_cells())
        .into_par_iter()
        .map(|c| {
            let vol = mesh.signed_volume(c).abs();
            let nl = (n + 1) * dk;
            let mut me = DMatrix::zeros(nl, nl);
            for (q, bary) in qr.points.iter().enumerate() {
                let w = uw[q] * vol;
                let bm = b.at(&mesh.cell_point(c, bary));
                for i in 0..=n {
                    for j in 0..=n {
                        let mut view = me.view_mut((i * dk, j * dk), (dk, dk));
                        view += &bm * (w * bary[i] * bary[j]);
                    }
                }
            }
            (cell_dofs(mesh, c, dk), me)
        })
        .collect();
    Ok(scatter(space.num_full(), blocks))
}

pub fn assemble_mass(space: &DofSpace, b: &OperatorField) -> Result<CsrMatrix> {
    Ok(assemble_mass_full(space, b)?.congruence(space.injection()))
}

/// Volume data of a load functional.
#[derive(Clone, Debug, Default)]
pub struct LoadData {
    /// `Λ^k` field entering as `−∫⟨f, φ⟩`.
    pub f: Option<AnalyticField>,
    /// `Λ^{k+1}` field entering as `∫⟨F, d(Cφ)⟩`.
    pub big_f: Option<AnalyticField>,
    /// `Λ^{k−1}` field entering as `∫⟨g, δ(Bφ)⟩`.
    pub g: Option<AnalyticField>,
}

/// Unreduced load vector `−∫⟨f,φ⟩ + ∫⟨F, d(Cφ)⟩ + ∫⟨g, δ(Bφ)⟩`.
pub fn assemble_load_full(space: &DofSpace, data: &LoadData, coeffs: &FormCoefficients) -> Result<Vec<f64>> {
    let mesh = space.mesh();
    let (n, k, dk) = (mesh.dim(), space.k, space.ncomp);
    for (fld, deg) in [(&data.f, k), (&data.big_f, k + 1), (&data.g, k - 1)] {
        if let Some(fl) = fld {
            if fl.degree() != deg || fl.n() != n {
                return Err(Error::DegreeMismatch { left: fl.degree(), right: deg });
            }
        }
    }
    let ext = Exterior::new(n, k);
    let cn = codifferential_sign(n);
    let qr = rule(n, 5);
    let uw = qr.unit_weights();
    // identity-coefficient fallbacks keep the d and δ maps defined when A or B is absent
    let full = FormCoefficients {
        a: Some(coeffs.a.clone().unwrap_or_else(|| OperatorField::identity(n, k + 1))),
        b: Some(coeffs.b.clone().unwrap_or_else(|| OperatorField::identity(n, k))),
        c: coeffs.c.clone(),
    };
    let blocks: Vec<(Vec<usize>, Vec<f64>)> = (0..mesh.num_cells())
        .into_par_iter()
        .map(|c| {
            let grads = mesh.barycentric_gradients(c);
            let vol = mesh.signed_volume(c).abs();
            let mut be = vec![0.0; (n + 1) * dk];
            for (q, bary) in qr.points.iter().enumerate() {
                let w = uw[q] * vol;
                let x = mesh.cell_point(c, bary);
                let fv = data.f.as_ref().map(|f| DVector::from_vec(f.eval(&x)));
                let bfv = data.big_f.as_ref().map(|f| DVector::from_vec(f.eval(&x)));
                let gv = data.g.as_ref().map(|f| DVector::from_vec(f.eval(&x)));
                let pc = if bfv.is_some() || gv.is_some() { Some(ext.point(&full, &x)) } else { None };
                for i in 0..=n {
                    let seg = &mut be[i * dk..(i + 1) * dk];
                    if let Some(fv) = &fv {
                        for s in 0..dk {
                            seg[s] -= w * bary[i] * fv[s];
                        }
                    }
                    if let Some(pc) = &pc {
                        let (dm, im) = ext.principal(pc, &grads[i]);
                        if let Some(bfv) = &bfv {
                            let mut m = dm.clone();
                            if let Some(ld) = &pc.low_d {
                                m += ld * bary[i];
                            }
                            let contrib = m.transpose() * bfv;
                            for s in 0..dk {
                                seg[s] += w * contrib[s];
                            }
                        }
                        if let Some(gv) = &gv {
                            let mut m = im.clone();
                            if let Some(lb) = &pc.low_delta {
                                m += lb * bary[i];
                            }
                            let contrib = m.transpose() * gv;
                            for s in 0..dk {
                                seg[s] += w * cn * contrib[s];
                            }
                        }
                    }
                }
            }
            (cell_dofs(mesh, c, dk), be)
        })
        .collect();
    let mut out = vec![0.0; space.num_full()];
    for (idx, be) in blocks {
        for (a, g) in idx.into_iter().enumerate() {
            out[g] += be[a];
        }
    }
    Ok(out)
}

pub fn assemble_load(space: &DofSpace, data: &LoadData, coeffs: &FormCoefficients) -> Result<Vec<f64>> {
    Ok(space.restrict(&assemble_load_full(space, data, coeffs)?))
}

/// Matrix taking the cell's nodal coefficients to the constant `dω_h` on cell `c`.
pub fn cell_d_matrix(space: &DofSpace, c: usize) -> DMatrix<f64> {
    let mesh = space.mesh();
    let (n, k, dk) = (mesh.dim(), space.k, space.ncomp);
    let grads = mesh.barycentric_gradients(c);
    let mut out = DMatrix::zeros(binomial(n, k + 1), (n + 1) * dk);
    for p in 0..n {
        let w = wedge_matrix(&unit(n, p), k);
        for a in 0..=n {
            if grads[a][p] != 0.0 {
                let mut blk = out.columns_mut(a * dk, dk);
                blk += &w * grads[a][p];
            }
        }
    }
    out
}

/// `∫⟨c, φ_i⟩` (or `∫⟨c, dφ_i⟩` with `with_d`) for a piecewise-constant field `c`.
pub fn assemble_cellwise_pairing(space: &DofSpace, cells: &[Vec<f64>], with_d: bool) -> Vec<f64> {
    let mesh = space.mesh();
    let (n, dk) = (mesh.dim(), space.ncomp);
    let mut out = vec![0.0; space.num_full()];
    for (c, val) in cells.iter().enumerate() {
        let vol = mesh.signed_volume(c).abs();
        let idx = cell_dofs(mesh, c, dk);
        if with_d {
            let dm = cell_d_matrix(space, c);
            let contrib = dm.transpose() * DVector::from_column_slice(val);
            for (a, &g) in idx.iter().enumerate() {
                out[g] += vol * contrib[a];
            }
        } else {
            let share = vol / (n + 1) as f64;
            for (a, &g) in idx.iter().enumerate() {
                out[g] += share * val[a % dk];
            }
        }
    }
    out
}

/// Boundary data entering through the natural condition of each space.
#[derive(Clone, Debug)]
pub enum NaturalData {
    /// `ν∧δ(Bω) = ν∧δ(Bω₀)` on tangential spaces.
    Tangential(AnalyticField),
    /// `ν⌟(A dω) = ν⌟(A dω₀)` on normal spaces.
    Normal(AnalyticField),
}

/// `−∫_∂⟨ν∧δ̂(Bω₀), Bφ⟩` or `+∫_∂⟨ν⌟(A dω₀), φ⟩`, with `δ̂ = −Σ e_i⌟∂_i`.
pub fn assemble_natural_full(space: &DofSpace, data: &NaturalData, coeffs: &FormCoefficients) -> Result<Vec<f64>> {
    let mesh = space.mesh();
    let (n, k, dk) = (mesh.dim(), space.k, space.ncomp);
    let qr = rule(n - 1, 5);
    let uw = qr.unit_weights();
    let mut out = vec![0.0; space.num_full()];
    let ident_b = OperatorField::identity(n, k);
    let ident_a = OperatorField::identity(n, k + 1);
    let b = coeffs.b.as_ref().unwrap_or(&ident_b);
    let a = coeffs.a.as_ref().unwrap_or(&ident_a);
    let contribs: Vec<(Vec<usize>, Vec<f64>)> = (0..mesh.num_boundary_faces())
        .into_par_iter()
        .map(|f| {
            let nu = mesh.face_normal(f).to_vec();
            let verts = mesh.face(f).to_vec();
            let area = mesh.face_measure(f);
            let mut be = vec![0.0; n * dk];
            for (q, bary) in qr.points.iter().enumerate() {
                let w = uw[q] * area;
                let x = mesh.face_point(f, bary);
                let val: DVector<f64> = match data {
                    NaturalData::Tangential(w0) => {
                        let bw = w0.apply(b);
                        // δ̂ of Bω₀, then ν∧, then paired with Bφ
                        let dh: Vec<f64> = bw.codiff_at(&x, H_FD).iter().map(|v| -codifferential_sign(n) * v).collect();
                        let t = wedge_matrix(&nu, k - 1) * DVector::from_vec(dh);
                        -(b.at(&x).transpose() * t)
                    }
                    NaturalData::Normal(w0) => {
                        let dw = DVector::from_vec(w0.d_at(&x, H_FD));
                        interior_matrix(&nu, k + 1) * (a.at(&x) * dw)
                    }
                };
                for (i, &bi) in bary.iter().enumerate() {
                    for s in 0..dk {
                        be[i * dk + s] += w * bi * val[s];
                    }
                }
            }
            let idx = verts.iter().flat_map(|&v| (0..dk).map(move |s| v * dk + s)).collect();
            (idx, be)
        })
        .collect();
    for (idx, be) in contribs {
        for (a, g) in idx.into_iter().enumerate() {
            out[g] += be[a];
        }
    }
    Ok(out)
}

/// Reduced linear system `(K + λM)x = rhs` with the lift carried separately.
#[derive(Clone, Debug)]
pub struct AssembledProblem {
    pub k: CsrMatrix,
    pub m: CsrMatrix,
    pub rhs: Vec<f64>,
    pub lift: Vec<f64>,
    pub lambda: f64,
    pub k_full: CsrMatrix,
    pub m_full: CsrMatrix,
    pub load_full: Vec<f64>,
}

impl AssembledProblem {
    /// Operator `K + λM` on free coefficients.
    pub fn operator(&self) -> CsrMatrix {
        if self.lambda == 0.0 {
            self.k.clone()
        } else {
            self.k.add_scaled(self.lambda, &self.m)
        }
    }

    /// `Px + lift`.
    pub fn full_solution(&self, space: &DofSpace, x: &[f64]) -> Vec<f64> {
        let mut u = space.expand(x);
        u.iter_mut().zip(&self.lift).for_each(|(a, b)| *a += b);
        u
    }

    /// Weak residual `Pᵀ(load − (K_full + λM_full)u)` recomputed from a full vector, relative to the load.
    pub fn weak_residual(&self, space: &DofSpace, full: &[f64]) -> (f64, f64) {
        let ku = self.k_full.matvec(full);
        let mu = self.m_full.matvec(full);
        let r: Vec<f64> = (0..full.len()).map(|i| self.load_full[i] - ku[i] - self.lambda * mu[i]).collect();
        let rr = space.restrict(&r);
        let abs = crate::linalg::norm(&rr);
        let scale = crate::linalg::norm(&space.restrict(&self.load_full))
            .max(crate::linalg::norm(&space.restrict(&ku)))
            .max(1e-300);
        (abs, abs / scale)
    }
}

/// Assemble `(K + λM_B)` with load, optional lift `ω₀` and natural boundary data.
pub fn assemble_problem(
    space: &DofSpace,
    coeffs: &FormCoefficients,
    mass_b: &OperatorField,
    lambda: f64,
    load: &LoadData,
    omega0: Option<&AnalyticField>,
    natural: Option<&NaturalData>,
) -> Result<AssembledProblem> {
    let k_full = assemble_stiffness_full(space, coeffs)?;
    let m_full = assemble_mass_full(space, mass_b)?;
    let mut load_full = assemble_load_full(space, load, coeffs)?;
    if let Some(nd) = natural {
        let nb = assemble_natural_full(space, nd, coeffs)?;
        load_full.iter_mut().zip(&nb).for_each(|(a, b)| *a += b);
    }
    let (lift, correction) = lift_boundary_data_full(space, &k_full, &m_full, lambda, omega0);
    let mut rhs_full = load_full.clone();
    rhs_full.iter_mut().zip(&correction).for_each(|(a, b)| *a += b);
    let p = space.injection();
    Ok(AssembledProblem {
        k: k_full.congruence(p),
        m: m_full.congruence(p),
        rhs: space.restrict(&rhs_full),
        lift,
        lambda,
        k_full,
        m_full,
        load_full,
    })
}

fn lift_boundary_data_full(
    space: &DofSpace,
    k_full: &CsrMatrix,
    m_full: &CsrMatrix,
    lambda: f64,
    omega0: Option<&AnalyticField>,
) -> (Vec<f64>, Vec<f64>) {
    let nf = space.num_full();
    match omega0 {
        None => (vec![0.0; nf], vec![0.0; nf]),
        Some(w0) => {
            let lift = space.interpolate(w0);
            let kl = k_full.matvec(&lift);
            let ml = m_full.matvec(&lift);
            let corr = (0..nf).map(|i| -(kl[i] + lambda * ml[i])).collect();
            (lift, corr)
        }
    }
}

/// Nodal lift of `ω₀` and the reduced right-hand-side correction `−Pᵀ(K + λM)·lift`.
pub fn lift_boundary_data(
    space: &DofSpace,
    k_full: &CsrMatrix,
    m_full: &CsrMatrix,
    lambda: f64,
    omega0: &AnalyticField,
) -> (Vec<f64>, Vec<f64>) {
    let (lift, corr) = lift_boundary_data_full(space, k_full, m_full, lambda, Some(omega0));
    (lift, space.restrict(&corr))
}

/// Per-cell derivatives and error / boundary diagnostics of a discrete field.
#[derive(Clone, Debug, Default, Serialize)]
pub struct PostProcess {
    pub d_cells: Vec<Vec<f64>>,
    pub codiff_cells: Vec<Vec<f64>>,
    pub err_l2: Option<f64>,
    pub err_h1: Option<f64>,
    pub boundary: BoundaryResiduals,
}

/// Squared boundary integrals of trace mismatches.
#[derive(Clone, Debug, Default, Serialize, PartialEq)]
pub struct BoundaryResiduals {
    pub tangential_trace: f64,
    pub tangential_natural: f64,
    pub normal_trace: f64,
    pub normal_natural: f64,
}

/// Nodal-derivative helpers on one cell.
pub fn cell_gradient(space: &DofSpace, full: &[f64], c: usize) -> Vec<Vec<f64>> {
    let mesh = space.mesh();
    let (n, dk) = (mesh.dim(), space.ncomp);
    let grads = mesh.barycentric_gradients(c);
    let mut out = vec![vec![0.0; dk]; n];
    for (a, &v) in mesh.cell(c).iter().enumerate() {
        for p in 0..n {
            for s in 0..dk {
                out[p][s] += grads[a][p] * full[v * dk + s];
            }
        }
    }
    out
}

pub fn cell_value(space: &DofSpace, full: &[f64], c: usize, bary: &[f64]) -> Vec<f64> {
    let dk = space.ncomp;
    let mut out = vec![0.0; dk];
    for (a, &v) in space.mesh().cell(c).iter().enumerate() {
        for s in 0..dk {
            out[s] += bary[a] * full[v * dk + s];
        }
    }
    out
}

/// `d(Cω_h)` at the cell centroid, including `∂C` terms for varying `C`.
pub fn cell_d(space: &DofSpace, full: &[f64], c: usize, cmap: Option<&OperatorField>) -> Vec<f64> {
    let mesh = space.mesh();
    let (n, k) = (mesh.dim(), space.k);
    let gradient = cell_gradient(space, full, c);
    let xc = mesh.cell_point(c, &vec![1.0 / (n + 1) as f64; n + 1]);
    let partials = transformed_partials(space, full, c, &gradient, &xc, cmap);
    let mut out = vec![0.0; binomial(n, k + 1)];
    crate::exterior::d_from_partials(n, k, &partials, &mut out);
    out
}

/// `δ(Bω_h)` at the cell centroid, including `∂B` terms for varying `B`.
pub fn cell_codiff(space: &DofSpace, full: &[f64], c: usize, bmap: Option<&OperatorField>) -> Vec<f64> {
    let mesh = space.mesh();
    let (n, k) = (mesh.dim(), space.k);
    let gradient = cell_gradient(space, full, c);
    let xc = mesh.cell_point(c, &vec![1.0 / (n + 1) as f64; n + 1]);
    let partials = transformed_partials(space, full, c, &gradient, &xc, bmap);
    let mut out = vec![0.0; binomial(n, k - 1)];
    crate::exterior::codiff_from_partials(n, k, &partials, &mut out);
    out
}

fn transformed_partials(
    space: &DofSpace,
    full: &[f64],
    c: usize,
    gradient: &[Vec<f64>],
    x: &[f64],
    map: Option<&OperatorField>,
) -> Vec<Vec<f64>> {
    match map {
        None => gradient.to_vec(),
        Some(m) => {
            let n = space.mesh().dim();
            let bary = vec![1.0 / (n + 1) as f64; n + 1];
            let val = DVector::from_vec(cell_value(space, full, c, &bary));
            let mx = m.at(x);
            (0..n)
                .map(|p| {
                    let mut v = &mx * DVector::from_vec(gradient[p].clone());
                    if !m.is_constant() {
                        v += m.partial(x, p, H_FD) * &val;
                    }
                    v.as_slice().to_vec()
                })
                .collect()
        }
    }
}

/// Options for [`postprocess_fields`].
#[derive(Clone, Debug, Default)]
pub struct PostOptions<'a> {
    pub exact: Option<&'a AnalyticField>,
    pub omega0: Option<&'a AnalyticField>,
}

/// Piecewise-constant derivatives, errors against an exact field, and boundary residuals.
pub fn postprocess_fields(space: &DofSpace, full: &[f64], coeffs: &FormCoefficients, opts: &PostOptions) -> PostProcess {
    let mesh = space.mesh();
    let (n, k) = (mesh.dim(), space.k);
    let d_cells: Vec<Vec<f64>> = (0..mesh.num_cells()).into_par_iter().map(|c| cell_d(space, full, c, coeffs.c.as_ref())).collect();
    let codiff_cells: Vec<Vec<f64>> =
        (0..mesh.num_cells()).into_par_iter().map(|c| cell_codiff(space, full, c, coeffs.b.as_ref())).collect();
    let (err_l2, err_h1) = match opts.exact {
        Some(ex) => {
            let (l2, semi) = field_errors(space, full, ex);
            (Some(l2), Some((l2 * l2 + semi * semi).sqrt()))
        }
        None => (None, None),
    };
    let boundary = boundary_residuals(space, full, coeffs, &d_cells, &codiff_cells, opts.omega0);
    let _ = (n, k);
    PostProcess { d_cells, codiff_cells, err_l2, err_h1, boundary }
}

/// `(‖ω_h − ω‖_{L²}, |ω_h − ω|_{H¹})` by order-5 quadrature.
pub fn field_errors(space: &DofSpace, full: &[f64], exact: &AnalyticField) -> (f64, f64) {
    let mesh = space.mesh();
    let n = mesh.dim();
    let qr = rule(n, 5);
    let uw = qr.unit_weights();
    let parts: Vec<(f64, f64)> = (0..mesh.num_cells())
        .into_par_iter()
        .map(|c| {
            let vol = mesh.signed_volume(c).abs();
            let grad_h = cell_gradient(space, full, c);
            let (mut l2, mut h1) = (0.0, 0.0);
            for (q, bary) in qr.points.iter().enumerate() {
                let w = uw[q] * vol;
                let x = mesh.cell_point(c, bary);
                let vh = cell_value(space, full, c, bary);
                let ve = exact.eval(&x);
                l2 += w * vh.iter().zip(&ve).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
                let ge = exact.gradient(&x, H_FD);
                for p in 0..n {
                    h1 += w * grad_h[p].iter().zip(&ge[p]).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
                }
            }
            (l2, h1)
        })
        .collect();
    let (l2, h1) = parts.iter().fold((0.0, 0.0), |acc, p| (acc.0 + p.0, acc.1 + p.1));
    (l2.sqrt(), h1.sqrt())
}

/// L² norm of a full nodal field.
pub fn nodal_l2_norm(space: &DofSpace, full: &[f64]) -> f64 {
    let mesh = space.mesh();
    let qr = rule(mesh.dim(), 2);
    let uw = qr.unit_weights();
    let mut s = 0.0;
    for c in 0..mesh.num_cells() {
        let vol = mesh.signed_volume(c).abs();
        for (q, bary) in qr.points.iter().enumerate() {
            let v = cell_value(space, full, c, bary);
            s += uw[q] * vol * v.iter().map(|a| a * a).sum::<f64>();
        }
    }
    s.sqrt()
}

/// L² norm of a piecewise-constant field.
pub fn cellwise_l2_norm(mesh: &SimplicialMesh, cells: &[Vec<f64>]) -> f64 {
    cells
        .iter()
        .enumerate()
        .map(|(c, v)| mesh.signed_volume(c).abs() * v.iter().map(|a| a * a).sum::<f64>())
        .sum::<f64>()
        .sqrt()
}

/// L² distance between a piecewise-constant field and an analytic one (order-5 quadrature).
pub fn cellwise_error(mesh: &SimplicialMesh, cells: &[Vec<f64>], exact: &AnalyticField) -> f64 {
    let qr = rule(mesh.dim(), 5);
    let uw = qr.unit_weights();
    let mut s = 0.0;
    for (c, v) in cells.iter().enumerate() {
        let vol = mesh.signed_volume(c).abs();
        for (q, bary) in qr.points.iter().enumerate() {
            let e = exact.eval(&mesh.cell_point(c, bary));
            s += uw[q] * vol * v.iter().zip(&e).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
        }
    }
    s.sqrt()
}

fn boundary_residuals(
    space: &DofSpace,
    full: &[f64],
    coeffs: &FormCoefficients,
    d_cells: &[Vec<f64>],
    codiff_cells: &[Vec<f64>],
    omega0: Option<&AnalyticField>,
) -> BoundaryResiduals {
    let mesh = space.mesh();
    let (n, k) = (mesh.dim(), space.k);
    let qr = rule(n - 1, 4);
    let uw = qr.unit_weights();
    let ident_b = OperatorField::identity(n, k);
    let ident_a = OperatorField::identity(n, k + 1);
    let b = coeffs.b.as_ref().unwrap_or(&ident_b);
    let a = coeffs.a.as_ref().unwrap_or(&ident_a);
    let mut out = BoundaryResiduals::default();
    let sq = |v: &DVector<f64>| v.iter().map(|x| x * x).sum::<f64>();
    for f in 0..mesh.num_boundary_faces() {
        let nu = mesh.face_normal(f).to_vec();
        let cell = mesh.face_cell(f);
        let area = mesh.face_measure(f);
        let verts = mesh.face(f);
        let wedge_k = wedge_matrix(&nu, k);
        let int_k = interior_matrix(&nu, k);
        let dval = DVector::from_vec(d_cells[cell].clone());
        let cval = DVector::from_vec(codiff_cells[cell].clone());
        for (q, bary) in qr.points.iter().enumerate() {
            let w = uw[q] * area;
            let x = mesh.face_point(f, bary);
            let mut val = DVector::zeros(space.ncomp);
            for (i, &v) in verts.iter().enumerate() {
                val += DVector::from_vec(space.nodal_value(full, v)) * bary[i];
            }
            let bx = b.at(&x);
            let ax = a.at(&x);
            let (w0, bw0_codiff, dw0) = match omega0 {
                Some(w0) => (
                    DVector::from_vec(w0.eval(&x)),
                    DVector::from_vec(w0.apply(b).codiff_at(&x, H_FD)),
                    DVector::from_vec(w0.d_at(&x, H_FD)),
                ),
                None => (
                    DVector::zeros(space.ncomp),
                    DVector::zeros(binomial(n, k - 1)),
                    DVector::zeros(binomial(n, k + 1)),
                ),
            };
            out.tangential_trace += w * sq(&(&wedge_k * (&val - &w0)));
            out.normal_trace += w * sq(&(&int_k * (&bx * (&val - &w0))));
            if k >= 1 {
                out.tangential_natural += w * sq(&(wedge_matrix(&nu, k - 1) * (&cval - &bw0_codiff)));
            }
            if (k as usize) < n {
                out.normal_natural += w * sq(&(interior_matrix(&nu, k + 1) * (&ax * (&dval - &dw0))));
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{generate_mesh, MeshSpec};
    use std::f64::consts::PI;

    fn square(m: usize) -> Arc<SimplicialMesh> {
        Arc::new(generate_mesh(&MeshSpec::Square { a: 0.0, b: PI, m }).unwrap())
    }

    #[test]
    fn tangential_edge_vertex_admits_tangent_direction() {
        let mesh = square(4);
        let sp = build_space(mesh.clone(), 1, BcKind::Tangential, None).unwrap();
        // vertex 2 lies on the edge x2 = 0
        let v = (0..mesh.num_vertices()).find(|&v| mesh.vertex(v)[1] == 0.0 && mesh.vertex(v)[0] > 1.0 && mesh.vertex(v)[0] < 2.0).unwrap();
        let b = sp.vertex_basis(v);
        assert_eq!(b.ncols(), 1);
        assert!((b[(0, 0)].abs() - 0.0).abs() < 1e-12 && (b[(1, 0)].abs() - 1.0).abs() < 1e-12, "{b}");
        let corner = (0..mesh.num_vertices()).find(|&v| mesh.vertex(v) == [0.0, 0.0]).unwrap();
        assert_eq!(sp.vertex_basis(corner).ncols(), 0);
    }

    #[test]
    fn injection_is_orthonormal() {
        for bc in [BcKind::Tangential, BcKind::Normal, BcKind::Dirichlet, BcKind::None] {
            let sp = build_space(square(3), 1, bc, None).unwrap();
            let ptp = sp.injection().transpose().matmul(sp.injection());
            let id = CsrMatrix::identity(sp.num_free());
            assert!(ptp.add_scaled(-1.0, &id).max_abs() < 1e-12);
        }
    }

    #[test]
    fn scalar_stiffness_and_mass_for_k0() {
        let mesh = square(2);
        let sp = build_space(mesh.clone(), 0, BcKind::None, None).unwrap();
        let k = assemble_stiffness(&sp, &FormCoefficients::identity(2, 0)).unwrap();
        // row sums of the Laplacian vanish
        for r in 0..k.nrows() {
            assert!(k.row(r).map(|(_, v)| v).sum::<f64>().abs() < 1e-12);
        }
        let m = assemble_mass(&sp, &OperatorField::identity(2, 0)).unwrap();
        let total: f64 = m.triplets().iter().map(|t| t.2).sum();
        assert!((total - PI * PI).abs() < 1e-12);
    }

    #[test]
    fn affine_field_derivatives_are_exact() {
        let mesh = square(3);
        let sp = build_space(mesh.clone(), 1, BcKind::None, None).unwrap();
        let w = AnalyticField::new(2, 1, "aff", |x| vec![2.0 * x[0] + 3.0 * x[1], -x[0] + 0.5 * x[1]]);
        let u = sp.interpolate(&w);
        for c in 0..mesh.num_cells() {
            let d = cell_d(&sp, &u, c, None);
            // dω = (∂1 ω2 − ∂2 ω1) = −1 − 3
            assert!((d[0] + 4.0).abs() < 1e-12);
            let dl = cell_codiff(&sp, &u, c, None);
            // δω = −(∂1 ω1 + ∂2 ω2) = −2.5 in 2D
            assert!((dl[0] + 2.5).abs() < 1e-12);
        }
    }
}
