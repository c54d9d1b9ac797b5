//! Coefficient fields and their ellipticity analysis.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::exterior::{binomial, interior_matrix, pullback_matrix, sign_table, wedge_matrix};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Smoothness {
    Constant,
    Smooth,
}

type Sampler = Arc<dyn Fn(&[f64]) -> DMatrix<f64> + Send + Sync>;

/// A pointwise linear map `Λ^a → Λ^b`.
#[derive(Clone)]
pub struct OperatorField {
    n: usize,
    src: isize,
    tgt: isize,
    sample: Sampler,
    smoothness: Smoothness,
}

impl fmt::Debug for OperatorField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "OperatorField(n={}, {}->{}, {:?})", self.n, self.src, self.tgt, self.smoothness)
    }
}

impl OperatorField {
    pub fn identity(n: usize, k: isize) -> Self {
        let m = DMatrix::identity(binomial(n, k), binomial(n, k));
        Self::constant(n, k, k, m).expect("identity has consistent size")
    }

    pub fn scaled_identity(n: usize, k: isize, c: f64) -> Self {
        let m = DMatrix::identity(binomial(n, k), binomial(n, k)) * c;
        Self::constant(n, k, k, m).expect("identity has consistent size")
    }

    pub fn constant(n: usize, src: isize, tgt: isize, m: DMatrix<f64>) -> Result<Self> {
        if m.nrows() != binomial(n, tgt) || m.ncols() != binomial(n, src) {
            return Err(Error::SizeMismatch(format!(
                "constant operator {}x{} does not map degree {src} to {tgt} in dimension {n}",
                m.nrows(),
                m.ncols()
            )));
        }
        Ok(OperatorField { n, src, tgt, sample: Arc::new(move |_| m.clone()), smoothness: Smoothness::Constant })
    }

    /// A varying field; the sampler must return `C(n,tgt) x C(n,src)` matrices.
    pub fn smooth<F>(n: usize, src: isize, tgt: isize, f: F) -> Self
    where
        F: Fn(&[f64]) -> DMatrix<f64> + Send + Sync + 'static,
    {
        OperatorField { n, src, tgt, sample: Arc::new(f), smoothness: Smoothness::Smooth }
    }

    /// `x ↦ s(x)·I` on `Λ^k`.
    pub fn scalar<F>(n: usize, k: isize, s: F) -> Self
    where
        F: Fn(&[f64]) -> f64 + Send + Sync + 'static,
    {
        let d = binomial(n, k);
        Self::smooth(n, k, k, move |x| DMatrix::identity(d, d) * s(x))
    }

    pub fn n(&self) -> usize {
        self.n
    }
    pub fn source_degree(&self) -> isize {
        self.src
    }
    pub fn target_degree(&self) -> isize {
        self.tgt
    }
    pub fn smoothness(&self) -> Smoothness {
        self.smoothness
    }
    pub fn is_constant(&self) -> bool {
        self.smoothness == Smoothness::Constant
    }

    pub fn at(&self, x: &[f64]) -> DMatrix<f64> {
        (self.sample)(x)
    }

    pub fn transpose(&self) -> OperatorField {
        let a = self.clone();
        OperatorField {
            n: self.n,
            src: self.tgt,
            tgt: self.src,
            sample: Arc::new(move |x| a.at(x).transpose()),
            smoothness: self.smoothness,
        }
    }

    /// Constant and equal to the identity.
    pub fn is_identity(&self) -> bool {
        if !self.is_constant() || self.src != self.tgt {
            return false;
        }
        let m = self.at(&vec![0.0; self.n]);
        (m.clone() - DMatrix::identity(m.nrows(), m.ncols())).amax() == 0.0
    }

    /// Central fourth-order difference of the field in direction `p`.
    pub fn partial(&self, x: &[f64], p: usize, h: f64) -> DMatrix<f64> {
        if self.is_constant() {
            return DMatrix::zeros(binomial(self.n, self.tgt), binomial(self.n, self.src));
        }
        let mut y = x.to_vec();
        let mut eval = |t: f64| {
            y[p] = x[p] + t;
            self.at(&y)
        };
        (eval(-2.0 * h) - eval(2.0 * h) + (eval(h) - eval(-h)) * 8.0) / (12.0 * h)
    }

    pub fn compose(&self, other: &OperatorField) -> Result<OperatorField> {
        if other.tgt != self.src || other.n != self.n {
            return Err(Error::SizeMismatch("operator composition degrees do not chain".into()));
        }
        let (a, b) = (self.clone(), other.clone());
        let smooth = if a.is_constant() && b.is_constant() { Smoothness::Constant } else { Smoothness::Smooth };
        Ok(OperatorField {
            n: self.n,
            src: other.src,
            tgt: self.tgt,
            sample: Arc::new(move |x| a.at(x) * b.at(x)),
            smoothness: smooth,
        })
    }

    /// Pointwise inverse; fails at the probe point if singular.
    pub fn inverse(&self, probe: &[f64]) -> Result<OperatorField> {
        if self.src != self.tgt {
            return Err(Error::SizeMismatch("only square fields can be inverted".into()));
        }
        if self.at(probe).try_inverse().is_none() {
            return Err(Error::Singular("coefficient field is not invertible".into()));
        }
        let a = self.clone();
        Ok(OperatorField {
            n: self.n,
            src: self.src,
            tgt: self.tgt,
            sample: Arc::new(move |x| {
                let m = a.at(x);
                let d = m.nrows();
                m.try_inverse().unwrap_or_else(|| DMatrix::from_element(d, d, f64::NAN))
            }),
            smoothness: self.smoothness,
        })
    }

    /// Largest deviation from symmetry over the sample points, relative to the entry scale.
    pub fn asymmetry(&self, points: &[Vec<f64>]) -> f64 {
        points
            .iter()
            .map(|x| {
                let m = self.at(x);
                let scale = m.amax().max(1e-300);
                (&m - m.transpose()).amax() / scale
            })
            .fold(0.0, f64::max)
    }
}

fn sym(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

fn min_eigen(m: &DMatrix<f64>) -> (f64, DVector<f64>) {
    let e = SymmetricEigen::new(sym(m));
    let (i, v) = e
        .eigenvalues
        .iter()
        .enumerate()
        .fold((0, f64::INFINITY), |acc, (i, &v)| if v < acc.1 { (i, v) } else { acc });
    (v, e.eigenvectors.column(i).into_owned())
}

fn check_square(m: &DMatrix<f64>) -> Result<()> {
    if m.nrows() != m.ncols() {
        return Err(Error::SizeMismatch(format!("expected a square matrix, got {}x{}", m.nrows(), m.ncols())));
    }
    Ok(())
}

/// Minimum eigenvalue of the symmetric part.
pub fn legendre_constant(m: &DMatrix<f64>) -> Result<f64> {
    check_square(m)?;
    if m.is_empty() {
        return Ok(f64::INFINITY);
    }
    Ok(min_eigen(m).0)
}

/// Orthonormal basis of the column space.
fn range_basis(w: &DMatrix<f64>) -> DMatrix<f64> {
    let svd = w.clone().svd(true, false);
    let u = svd.u.expect("requested U");
    let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let cols: Vec<usize> =
        (0..svd.singular_values.len()).filter(|&i| svd.singular_values[i] > 1e-10 * smax.max(1e-300)).collect();
    DMatrix::from_fn(w.nrows(), cols.len(), |r, c| u[(r, cols[c])])
}

/// Matrix of `a ↦ a ∧ b` from `Λ^1` to `Λ^{k+1}`.
fn wedge_left_matrix(b: &[f64], n: usize, k: isize) -> DMatrix<f64> {
    let t = sign_table(n);
    let mut m = DMatrix::zeros(binomial(n, k + 1), n);
    for (s, &bs) in b.iter().enumerate() {
        for i in 0..n {
            let (tgt, sg) = t.wedge_basis1(k as usize, s, i);
            if sg != 0.0 {
                m[(tgt, i)] += sg * bs;
            }
        }
    }
    m
}

fn wedge_value(a: &[f64], b: &[f64], n: usize, k: isize) -> DVector<f64> {
    wedge_left_matrix(b, n, k) * DVector::from_column_slice(a)
}

/// Best decomposable minimizer found by the alternating scheme.
#[derive(Clone, Debug, Serialize)]
pub struct LhWitness {
    pub value: f64,
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub restarts: usize,
}

/// Ratio `⟨A(a∧b); a∧b⟩ / |a∧b|²`.
pub fn lh_quotient(a_mat: &DMatrix<f64>, a: &[f64], b: &[f64], n: usize, k: isize) -> f64 {
    let w = wedge_value(a, b, n, k);
    let nn = w.norm_squared();
    (w.transpose() * a_mat * &w)[(0, 0)] / nn
}

/// Infimum of the quotient over decomposable `a∧b`, `a ∈ Λ^1`, `b ∈ Λ^k`.
/// The value is the best one found, hence an upper bound of the infimum.
pub fn legendre_hadamard_constant(a_mat: &DMatrix<f64>, n: usize, k: isize) -> Result<f64> {
    Ok(legendre_hadamard_witness(a_mat, n, k)?.value)
}

pub const LH_RESTARTS: usize = 32;

pub fn legendre_hadamard_witness(a_mat: &DMatrix<f64>, n: usize, k: isize) -> Result<LhWitness> {
    check_square(a_mat)?;
    if k < 0 || k + 1 > n as isize {
        return Err(Error::DegreeOutOfRange { n, k: k + 1 });
    }
    if a_mat.nrows() != binomial(n, k + 1) {
        return Err(Error::SizeMismatch(format!(
            "A must act on degree {} forms in dimension {n} ({} rows), got {}",
            k + 1,
            binomial(n, k + 1),
            a_mat.nrows()
        )));
    }
    let s = sym(a_mat);
    let mut rng = ChaCha8Rng::seed_from_u64(0x1e9e_3779_b97f_4a7c);
    let mut best = LhWitness { value: f64::INFINITY, a: vec![], b: vec![], restarts: 0 };
    let starts = LH_RESTARTS + n;
    for r in 0..starts {
        let mut a: Vec<f64> = if r < n {
            (0..n).map(|i| if i == r { 1.0 } else { 0.0 }).collect()
        } else {
            (0..n).map(|_| rng.gen::<f64>() * 2.0 - 1.0).collect()
        };
        normalize(&mut a);
        let mut b = Vec::new();
        let mut value = f64::INFINITY;
        for _ in 0..500 {
            // fix a, minimize over b
            let ua = range_basis(&wedge_matrix(&a, k));
            if ua.ncols() == 0 {
                return Err(Error::Algebra("degenerate wedge in Legendre-Hadamard search".into()));
            }
            let (_, v) = min_eigen(&(ua.transpose() * &s * &ua));
            let z = &ua * v;
            let mut bn: Vec<f64> = (interior_matrix(&a, k + 1) * z).as_slice().to_vec();
            normalize(&mut bn);
            // fix b, minimize over a
            let wb = wedge_left_matrix(&bn, n, k);
            let ub = range_basis(&wb);
            let (_, v) = min_eigen(&(ub.transpose() * &s * &ub));
            let z = &ub * v;
            let sol = wb.clone().svd(true, true).solve(&z, 1e-12).map_err(|e| Error::Algebra(e.to_string()))?;
            let mut an = sol.as_slice().to_vec();
            normalize(&mut an);
            let nv = lh_quotient(&s, &an, &bn, n, k);
            a = an;
            b = bn;
            let done = (value - nv).abs() < 1e-10;
            value = nv;
            if done {
                break;
            }
        }
        if value < best.value {
            best = LhWitness { value, a: a.clone(), b: b.clone(), restarts: starts };
        }
    }
    best.restarts = starts;
    Ok(best)
}

fn normalize(v: &mut [f64]) {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
}

fn last_unit(n: usize) -> Vec<f64> {
    let mut e = vec![0.0; n];
    e[n - 1] = 1.0;
    e
}

fn invert_checked(b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let sv = b.clone().singular_values();
    let smax = sv.iter().cloned().fold(0.0, f64::max);
    let smin = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    if !(smin > 0.0) || smax / smin > 1e12 {
        return Err(Error::Singular(format!("condition number {:e}", smax / smin)));
    }
    b.clone().try_inverse().ok_or_else(|| Error::Singular("inversion failed".into()))
}

/// Constants `c1`, `c2` of the normal-direction coercivity estimates, with witnesses.
pub fn ellipticity_constants_with_witness(
    gamma_a: f64,
    b: &DMatrix<f64>,
    n: usize,
    k: isize,
) -> Result<((f64, Vec<f64>), (f64, Vec<f64>))> {
    check_square(b)?;
    if b.nrows() != binomial(n, k) {
        return Err(Error::SizeMismatch("B does not act on the requested degree".into()));
    }
    let binv = invert_checked(b)?;
    let en = last_unit(n);
    let w = wedge_matrix(&en, k);
    let j = interior_matrix(&en, k);
    let jb = &j * b;
    let m1 = w.transpose() * &w * gamma_a + jb.transpose() * &jb;
    let wb = &w * &binv;
    let m2 = wb.transpose() * &wb * gamma_a + j.transpose() * &j;
    let (c1, v1) = min_eigen(&m1);
    let (c2, v2) = min_eigen(&m2);
    if !(c1 > 0.0) || !(c2 > 0.0) {
        return Err(Error::Ellipticity(format!("c1 = {c1:e}, c2 = {c2:e}; B fails the Legendre condition")));
    }
    Ok(((c1, v1.as_slice().to_vec()), (c2, v2.as_slice().to_vec())))
}

pub fn ellipticity_constants(gamma_a: f64, b: &DMatrix<f64>, n: usize, k: isize) -> Result<(f64, f64)> {
    let ((c1, _), (c2, _)) = ellipticity_constants_with_witness(gamma_a, b, n, k)?;
    Ok((c1, c2))
}

/// Value of the `c1` quadratic form at a unit vector.
pub fn c1_form(gamma_a: f64, b: &DMatrix<f64>, n: usize, k: isize, xi: &[f64]) -> f64 {
    let en = last_unit(n);
    let x = DVector::from_column_slice(xi);
    let w = wedge_matrix(&en, k) * &x;
    let j = interior_matrix(&en, k) * (b * &x);
    gamma_a * w.norm_squared() + j.norm_squared()
}

pub fn c2_form(gamma_a: f64, b: &DMatrix<f64>, n: usize, k: isize, xi: &[f64]) -> f64 {
    let en = last_unit(n);
    let x = DVector::from_column_slice(xi);
    let binv = b.clone().try_inverse().expect("checked invertible");
    let w = wedge_matrix(&en, k) * (binv * &x);
    let j = interior_matrix(&en, k) * &x;
    gamma_a * w.norm_squared() + j.norm_squared()
}

#[derive(Clone, Debug, Serialize)]
pub struct EllipticityReport {
    pub gamma_legendre: f64,
    pub gamma_lh: f64,
    pub c1: f64,
    pub c2: f64,
    pub legendre_witness: Vec<f64>,
    pub lh_witness_a: Vec<f64>,
    pub lh_witness_b: Vec<f64>,
    pub c1_witness: Vec<f64>,
    pub c2_witness: Vec<f64>,
    pub lh_restarts: usize,
    /// `γ` used for `c1`, `c2`: the Legendre constant when positive, else the LH constant.
    pub gamma_for_constants: f64,
}

/// Full ellipticity analysis of constant matrices `A` on `Λ^{k+1}` and `B` on `Λ^k`.
pub fn ellipticity_report(a: &DMatrix<f64>, b: &DMatrix<f64>, n: usize, k: isize) -> Result<EllipticityReport> {
    check_square(a)?;
    let (gl, wl) = min_eigen(a);
    let lh = legendre_hadamard_witness(a, n, k)?;
    let gamma = if gl > 0.0 { gl } else { lh.value };
    if !(gamma > 0.0) {
        return Err(Error::Ellipticity(format!("A is not Legendre-Hadamard elliptic (best value {:e})", lh.value)));
    }
    let ((c1, w1), (c2, w2)) = ellipticity_constants_with_witness(gamma, b, n, k)?;
    Ok(EllipticityReport {
        gamma_legendre: gl,
        gamma_lh: lh.value,
        c1,
        c2,
        legendre_witness: wl.as_slice().to_vec(),
        lh_witness_a: lh.a,
        lh_witness_b: lh.b,
        c1_witness: w1,
        c2_witness: w2,
        lh_restarts: lh.restarts,
        gamma_for_constants: gamma,
    })
}

/// Matrix of `Ã` in the basis `e_p ⊗ e^I`, index `p·C(n,k) + I`.
/// Entry `((q,J),(p,I)) = ⟨A(e_p ∧ e^I); e_q ∧ e^J⟩ + ⟨e_p⌟B e^I; e_q⌟B e^J⟩`.
pub fn build_atilde(a: &DMatrix<f64>, b: &DMatrix<f64>, n: usize, k: isize) -> Result<DMatrix<f64>> {
    build_atilde_general(a, b, None, n, k)
}

/// As [`build_atilde`] with an inner map `C` in the exterior-derivative term:
/// `⟨A(e_p ∧ C e^I); e_q ∧ C e^J⟩`.
pub fn build_atilde_general(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    c: Option<&DMatrix<f64>>,
    n: usize,
    k: isize,
) -> Result<DMatrix<f64>> {
    let dk = binomial(n, k);
    let dk1 = binomial(n, k + 1);
    if a.nrows() != dk1 || a.ncols() != dk1 || b.nrows() != dk || b.ncols() != dk {
        return Err(Error::SizeMismatch(format!(
            "A must be {dk1}x{dk1} and B {dk}x{dk} for n={n}, k={k}; got {}x{} and {}x{}",
            a.nrows(),
            a.ncols(),
            b.nrows(),
            b.ncols()
        )));
    }
    let mut dmaps = Vec::with_capacity(n);
    let mut emaps = Vec::with_capacity(n);
    for p in 0..n {
        let mut e = vec![0.0; n];
        e[p] = 1.0;
        let w = wedge_matrix(&e, k);
        dmaps.push(match c {
            Some(cm) => w * cm,
            None => w,
        });
        emaps.push(interior_matrix(&e, k) * b);
    }
    let mut out = DMatrix::zeros(n * dk, n * dk);
    for q in 0..n {
        let dq_a = dmaps[q].transpose() * a;
        let eq_t = emaps[q].transpose();
        for p in 0..n {
            let block = &dq_a * &dmaps[p] + &eq_t * &emaps[p];
            out.view_mut((q * dk, p * dk), (dk, dk)).copy_from(&block);
        }
    }
    Ok(out)
}

/// The block `Ã^{pq}` with `⟨Ã^{pq}ξ; η⟩ = ⟨Ã(e_p⊗ξ); e_q⊗η⟩` (1-based `p`, `q`).
pub fn atilde_block(at: &DMatrix<f64>, n: usize, p: usize, q: usize) -> DMatrix<f64> {
    let dk = at.nrows() / n;
    at.view(((q - 1) * dk, (p - 1) * dk), (dk, dk)).into_owned()
}

/// `Ā = (T⁻¹)* ∘ A ∘ T*` for `A` acting on `Λ^degree`.
pub fn conjugate_pullback(a: &DMatrix<f64>, t: &DMatrix<f64>, degree: isize) -> Result<DMatrix<f64>> {
    let n = t.nrows();
    if a.nrows() != binomial(n, degree) || a.ncols() != a.nrows() {
        return Err(Error::SizeMismatch("A does not act on the requested degree".into()));
    }
    let tinv = invert_checked(t)?;
    let p_t = pullback_matrix(t, degree)?;
    let p_tinv = pullback_matrix(&tinv, degree)?;
    Ok(p_tinv * a * p_t)
}

/// Condition number of `T` in the 2-norm.
pub fn condition_number(t: &DMatrix<f64>) -> f64 {
    let sv = t.clone().singular_values();
    let smax = sv.iter().cloned().fold(0.0, f64::max);
    let smin = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    smax / smin
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn legendre_examples() {
        assert_eq!(legendre_constant(&DMatrix::identity(3, 3)).unwrap(), 1.0);
        let d = DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 3.0, 5.0]));
        assert!((legendre_constant(&d).unwrap() - 2.0).abs() < 1e-14);
        let skew = DMatrix::from_row_slice(2, 2, &[0.0, 4.0, -4.0, 0.0]);
        assert!((legendre_constant(&(DMatrix::identity(2, 2) + skew)).unwrap() - 1.0).abs() < 1e-14);
        assert!(legendre_constant(&DMatrix::zeros(2, 3)).is_err());
    }

    #[test]
    fn lh_identity_is_one() {
        for (n, k) in [(2, 0), (3, 1), (4, 1), (5, 2)] {
            let d = binomial(n, k + 1);
            let v = legendre_hadamard_constant(&DMatrix::identity(d, d), n, k).unwrap();
            assert!((v - 1.0).abs() < 1e-10, "n={n} k={k} v={v}");
        }
    }

    #[test]
    fn ellipticity_identity() {
        for g in [0.3, 1.0, 2.5] {
            let (c1, c2) = ellipticity_constants(g, &DMatrix::identity(6, 6), 4, 2).unwrap();
            let want = f64::min(g, 1.0);
            assert!((c1 - want).abs() < 1e-9 && (c2 - want).abs() < 1e-9);
        }
    }

    #[test]
    fn singular_b_is_rejected() {
        assert!(matches!(ellipticity_constants(1.0, &DMatrix::zeros(3, 3), 3, 1), Err(Error::Singular(_))));
    }

    #[test]
    fn atilde_block_layout() {
        let at = build_atilde(&DMatrix::identity(3, 3), &DMatrix::identity(3, 3), 3, 1).unwrap();
        assert_eq!(at.nrows(), 9);
        // for identity coefficients the diagonal blocks are the identity
        for p in 1..=3 {
            let blk = atilde_block(&at, 3, p, p);
            assert!((blk - DMatrix::<f64>::identity(3, 3)).amax() < 1e-14);
        }
    }

    #[test]
    fn conjugate_pullback_identity_t() {
        let a = DMatrix::from_fn(3, 3, |i, j| (i * 3 + j) as f64 + if i == j { 5.0 } else { 0.0 });
        let r = conjugate_pullback(&a, &DMatrix::identity(3, 3), 2).unwrap();
        assert!((r - a).amax() < 1e-12);
        assert!(conjugate_pullback(&DMatrix::identity(3, 3), &DMatrix::zeros(3, 3), 2).is_err());
    }

    #[test]
    fn field_partial_of_constant_is_zero() {
        let f = OperatorField::identity(2, 1);
        assert_eq!(f.partial(&[0.1, 0.2], 0, 1e-3).amax(), 0.0);
        let s = OperatorField::scalar(2, 1, |x| x[0] * x[0]);
        let d = s.partial(&[0.5, 0.0], 0, 1e-3);
        assert!((d[(0, 0)] - 1.0).abs() < 1e-10);
    }
}
