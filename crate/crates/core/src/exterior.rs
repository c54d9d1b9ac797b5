//! Combinatorial exterior algebra over flat `R^n`.
//!
//! Forms are coefficient vectors over the lexicographic basis of increasing
//! multi-indices. Degrees outside `0..=n` give the empty space, so chains of
//! `d` and `δ` compose without special cases at the ends of the complex.

use std::fmt;
use std::sync::OnceLock;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Largest ambient dimension the sign tables are built for.
pub const MAX_DIM: usize = 12;

pub fn binomial(n: usize, k: isize) -> usize {
    if k < 0 || k as usize > n {
        return 0;
    }
    let k = (k as usize).min(n - k as usize);
    let mut acc = 1usize;
    for i in 0..k {
        acc = acc * (n - i) / (i + 1);
    }
    acc
}

/// Strictly increasing tuple of indices in `1..=n`.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct MultiIndex {
    entries: Vec<usize>,
}

impl MultiIndex {
    pub fn new(entries: Vec<usize>, n: usize) -> Result<Self> {
        if entries.len() > n {
            return Err(Error::DegreeOutOfRange { n, k: entries.len() as isize });
        }
        for w in entries.windows(2) {
            if w[0] >= w[1] {
                return Err(Error::Algebra(format!("multi-index {entries:?} is not strictly increasing")));
            }
        }
        if entries.iter().any(|&e| e == 0 || e > n) {
            return Err(Error::Algebra(format!("multi-index {entries:?} has entries outside 1..={n}")));
        }
        Ok(MultiIndex { entries })
    }

    pub fn entries(&self) -> &[usize] {
        &self.entries
    }

    pub fn degree(&self) -> usize {
        self.entries.len()
    }

    pub(crate) fn mask(&self) -> u32 {
        self.entries.iter().fold(0u32, |m, &e| m | (1 << (e - 1)))
    }
}

impl fmt::Display for MultiIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for e in &self.entries {
            write!(f, "{e}")?;
        }
        Ok(())
    }
}

/// Lexicographically ordered basis of `Λ^k(R^n)`. Empty for `k < 0` or `k > n`.
pub fn multiindex_basis(n: usize, k: isize) -> Vec<MultiIndex> {
    if k < 0 || k as usize > n {
        return Vec::new();
    }
    let mut out = Vec::with_capacity(binomial(n, k));
    let mut cur: Vec<usize> = (1..=k as usize).collect();
    loop {
        out.push(MultiIndex { entries: cur.clone() });
        // advance to the next increasing tuple
        let kk = cur.len();
        let mut i = kk;
        loop {
            if i == 0 {
                return out;
            }
            i -= 1;
            if cur[i] < n - (kk - 1 - i) {
                cur[i] += 1;
                for j in i + 1..kk {
                    cur[j] = cur[j - 1] + 1;
                }
                break;
            }
        }
    }
}

/// Cached basis masks, slot lookup and the signs of the elementary
/// wedge and interior products for one ambient dimension.
pub struct SignTable {
    n: usize,
    masks: Vec<Vec<u32>>,
    slot: Vec<u32>,
    // wedge1[k][s * n + i] = (target slot, sign) of e^i ∧ e^I
    wedge1: Vec<Vec<(u32, i8)>>,
    // interior1[k][s * n + i] = (target slot, sign) of e_i ⌟ e^I
    interior1: Vec<Vec<(u32, i8)>>,
    // star[k][s] = (target slot, sign)
    star: Vec<Vec<(u32, i8)>>,
}

fn mask_wedge_sign(a: u32, b: u32) -> i8 {
    if a & b != 0 {
        return 0;
    }
    let mut inversions = 0u32;
    let mut rest = b;
    while rest != 0 {
        let j = rest.trailing_zeros();
        rest &= rest - 1;
        inversions += (a >> (j + 1)).count_ones();
    }
    if inversions % 2 == 0 {
        1
    } else {
        -1
    }
}

impl SignTable {
    fn build(n: usize) -> SignTable {
        let mut masks = Vec::with_capacity(n + 1);
        let mut slot = vec![u32::MAX; 1 << n];
        for k in 0..=n {
            let ms: Vec<u32> = multiindex_basis(n, k as isize).iter().map(|m| m.mask()).collect();
            for (s, &m) in ms.iter().enumerate() {
                slot[m as usize] = s as u32;
            }
            masks.push(ms);
        }
        let full = if n == 32 { u32::MAX } else { (1u32 << n) - 1 };
        let mut wedge1 = Vec::with_capacity(n + 1);
        let mut interior1 = Vec::with_capacity(n + 1);
        let mut star = Vec::with_capacity(n + 1);
        for k in 0..=n {
            let mut w = Vec::with_capacity(masks[k].len() * n);
            let mut it = Vec::with_capacity(masks[k].len() * n);
            for &m in &masks[k] {
                for i in 0..n {
                    let bit = 1u32 << i;
                    if m & bit == 0 {
                        w.push((slot[(m | bit) as usize], mask_wedge_sign(bit, m)));
                        it.push((0, 0));
                    } else {
                        w.push((0, 0));
                        let below = (m & (bit - 1)).count_ones();
                        let sign = if below % 2 == 0 { 1 } else { -1 };
                        it.push((slot[(m & !bit) as usize], sign));
                    }
                }
            }
            wedge1.push(w);
            interior1.push(it);
            star.push(
                masks[k]
                    .iter()
                    .map(|&m| (slot[(full & !m) as usize], mask_wedge_sign(m, full & !m)))
                    .collect(),
            );
        }
        SignTable { n, masks, slot, wedge1, interior1, star }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dim(&self, k: isize) -> usize {
        binomial(self.n, k)
    }

    pub(crate) fn mask(&self, k: usize, s: usize) -> u32 {
        self.masks[k][s]
    }

    pub(crate) fn slot_of(&self, mask: u32) -> usize {
        self.slot[mask as usize] as usize
    }

    /// `e^i ∧ e^{I_s}` for `I_s` the `s`-th basis index of degree `k`.
    #[inline]
    pub fn wedge_basis1(&self, k: usize, s: usize, i: usize) -> (usize, f64) {
        let (t, sg) = self.wedge1[k][s * self.n + i];
        (t as usize, sg as f64)
    }

    /// `e_i ⌟ e^{I_s}`.
    #[inline]
    pub fn interior_basis1(&self, k: usize, s: usize, i: usize) -> (usize, f64) {
        let (t, sg) = self.interior1[k][s * self.n + i];
        (t as usize, sg as f64)
    }

    #[inline]
    pub fn star_basis(&self, k: usize, s: usize) -> (usize, f64) {
        let (t, sg) = self.star[k][s];
        (t as usize, sg as f64)
    }

    /// Sign of `e^I ∧ e^J` for general multi-indices (0 if they overlap).
    pub fn wedge_sign(&self, a: u32, b: u32) -> i8 {
        mask_wedge_sign(a, b)
    }
}

/// The sign table for dimension `n`, built once.
pub fn sign_table(n: usize) -> &'static SignTable {
    static TABLES: [OnceLock<SignTable>; MAX_DIM + 1] = [const { OnceLock::new() }; MAX_DIM + 1];
    assert!((1..=MAX_DIM).contains(&n), "ambient dimension {n} outside 1..={MAX_DIM}");
    TABLES[n].get_or_init(|| SignTable::build(n))
}

/// A constant k-covector on `R^n`.
#[derive(Clone, Debug, PartialEq)]
pub struct Form {
    n: usize,
    k: isize,
    coeffs: Vec<f64>,
}

impl Form {
    pub fn zero(n: usize, k: isize) -> Form {
        Form { n, k, coeffs: vec![0.0; binomial(n, k)] }
    }

    pub fn from_coeffs(n: usize, k: isize, coeffs: Vec<f64>) -> Result<Form> {
        if n == 0 || n > MAX_DIM {
            return Err(Error::Algebra(format!("ambient dimension {n} outside 1..={MAX_DIM}")));
        }
        let want = binomial(n, k);
        if coeffs.len() != want {
            return Err(Error::Algebra(format!(
                "form of degree {k} in dimension {n} needs {want} coefficients, got {}",
                coeffs.len()
            )));
        }
        Ok(Form { n, k, coeffs })
    }

    /// The basis element `e^I`.
    pub fn basis(n: usize, index: &[usize]) -> Result<Form> {
        let mi = MultiIndex::new(index.to_vec(), n)?;
        let k = index.len() as isize;
        let mut f = Form::zero(n, k);
        let s = sign_table(n).slot_of(mi.mask());
        f.coeffs[s] = 1.0;
        Ok(f)
    }

    /// A 1-form from its components.
    pub fn covector(v: &[f64]) -> Form {
        Form { n: v.len(), k: 1, coeffs: v.to_vec() }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn degree(&self) -> isize {
        self.k
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn coeff(&self, index: &[usize]) -> f64 {
        match MultiIndex::new(index.to_vec(), self.n) {
            Ok(mi) if mi.degree() as isize == self.k => self.coeffs[sign_table(self.n).slot_of(mi.mask())],
            _ => 0.0,
        }
    }

    pub fn norm(&self) -> f64 {
        self.coeffs.iter().map(|c| c * c).sum::<f64>().sqrt()
    }

    pub fn add(&self, other: &Form) -> Result<Form> {
        same_space(self, other)?;
        Ok(Form {
            n: self.n,
            k: self.k,
            coeffs: self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| a + b).collect(),
        })
    }

    pub fn sub(&self, other: &Form) -> Result<Form> {
        same_space(self, other)?;
        Ok(Form {
            n: self.n,
            k: self.k,
            coeffs: self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| a - b).collect(),
        })
    }

    pub fn scale(&self, c: f64) -> Form {
        Form { n: self.n, k: self.k, coeffs: self.coeffs.iter().map(|a| a * c).collect() }
    }
}

fn same_space(a: &Form, b: &Form) -> Result<()> {
    if a.n != b.n {
        return Err(Error::DimensionMismatch { left: a.n, right: b.n });
    }
    if a.k != b.k {
        return Err(Error::DegreeMismatch { left: a.k, right: b.k });
    }
    Ok(())
}

fn same_dim(a: &Form, b: &Form) -> Result<()> {
    if a.n != b.n {
        return Err(Error::DimensionMismatch { left: a.n, right: b.n });
    }
    Ok(())
}

pub fn wedge(xi: &Form, eta: &Form) -> Result<Form> {
    same_dim(xi, eta)?;
    let n = xi.n;
    let mut out = Form::zero(n, xi.k + eta.k);
    if out.coeffs.is_empty() || xi.coeffs.is_empty() || eta.coeffs.is_empty() {
        return Ok(out);
    }
    let t = sign_table(n);
    let (k, l) = (xi.k as usize, eta.k as usize);
    for (a, &x) in xi.coeffs.iter().enumerate() {
        if x == 0.0 {
            continue;
        }
        let ma = t.mask(k, a);
        for (b, &y) in eta.coeffs.iter().enumerate() {
            let mb = t.mask(l, b);
            let sg = t.wedge_sign(ma, mb);
            if sg != 0 {
                out.coeffs[t.slot_of(ma | mb)] += sg as f64 * x * y;
            }
        }
    }
    Ok(out)
}

pub fn interior_product(v: &Form, xi: &Form) -> Result<Form> {
    same_dim(v, xi)?;
    if v.k != 1 {
        return Err(Error::DegreeMismatch { left: v.k, right: 1 });
    }
    let n = xi.n;
    let mut out = Form::zero(n, xi.k - 1);
    if out.coeffs.is_empty() {
        return Ok(out);
    }
    let t = sign_table(n);
    let k = xi.k as usize;
    for (s, &x) in xi.coeffs.iter().enumerate() {
        for i in 0..n {
            let (tgt, sg) = t.interior_basis1(k, s, i);
            if sg != 0.0 {
                out.coeffs[tgt] += sg * v.coeffs[i] * x;
            }
        }
    }
    Ok(out)
}

pub fn hodge_star(xi: &Form) -> Form {
    let n = xi.n;
    let mut out = Form::zero(n, n as isize - xi.k);
    if xi.coeffs.is_empty() {
        return out;
    }
    let t = sign_table(n);
    for (s, &x) in xi.coeffs.iter().enumerate() {
        let (tgt, sg) = t.star_basis(xi.k as usize, s);
        out.coeffs[tgt] = sg * x;
    }
    out
}

pub fn inner(xi: &Form, eta: &Form) -> Result<f64> {
    same_space(xi, eta)?;
    Ok(xi.coeffs.iter().zip(&eta.coeffs).map(|(a, b)| a * b).sum())
}

/// Pullback by a linear map `T`: `(T*ξ)(v_1,…,v_k) = ξ(Tv_1,…,Tv_k)`.
pub fn pullback_linear(t: &DMatrix<f64>, xi: &Form) -> Result<Form> {
    let p = pullback_matrix(t, xi.k)?;
    let v = &p * nalgebra::DVector::from_column_slice(&xi.coeffs);
    Ok(Form { n: xi.n, k: xi.k, coeffs: v.as_slice().to_vec() })
}

/// Returns `(ν⌟(ν∧ξ), ν∧(ν⌟ξ))`.
pub fn split_along_normal(nu: &Form, xi: &Form) -> Result<(Form, Form)> {
    if nu.k != 1 {
        return Err(Error::DegreeMismatch { left: nu.k, right: 1 });
    }
    let len = nu.norm();
    if (len - 1.0).abs() > 1e-12 {
        return Err(Error::NotNormalized(len));
    }
    let tangential = interior_product(nu, &wedge(nu, xi)?)?;
    let normal = wedge(nu, &interior_product(nu, xi)?)?;
    Ok((tangential, normal))
}

// ---- matrix representations ----

/// Matrix of `ξ ↦ v ∧ ξ` from `Λ^k` to `Λ^{k+1}`.
pub fn wedge_matrix(v: &[f64], k: isize) -> DMatrix<f64> {
    let n = v.len();
    let mut m = DMatrix::zeros(binomial(n, k + 1), binomial(n, k));
    if m.is_empty() {
        return m;
    }
    let t = sign_table(n);
    for s in 0..binomial(n, k) {
        for (i, &vi) in v.iter().enumerate() {
            let (tgt, sg) = t.wedge_basis1(k as usize, s, i);
            if sg != 0.0 {
                m[(tgt, s)] += sg * vi;
            }
        }
    }
    m
}

/// Matrix of `ξ ↦ v ⌟ ξ` from `Λ^k` to `Λ^{k-1}`.
pub fn interior_matrix(v: &[f64], k: isize) -> DMatrix<f64> {
    let n = v.len();
    let mut m = DMatrix::zeros(binomial(n, k - 1), binomial(n, k));
    if m.is_empty() {
        return m;
    }
    let t = sign_table(n);
    for s in 0..binomial(n, k) {
        for (i, &vi) in v.iter().enumerate() {
            let (tgt, sg) = t.interior_basis1(k as usize, s, i);
            if sg != 0.0 {
                m[(tgt, s)] += sg * vi;
            }
        }
    }
    m
}

pub fn star_matrix(n: usize, k: isize) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(binomial(n, n as isize - k), binomial(n, k));
    if m.is_empty() {
        return m;
    }
    let t = sign_table(n);
    for s in 0..binomial(n, k) {
        let (tgt, sg) = t.star_basis(k as usize, s);
        m[(tgt, s)] = sg;
    }
    m
}

/// Matrix of the pullback `T*` on `Λ^k`: the k-th compound of `Tᵀ`.
pub fn pullback_matrix(t: &DMatrix<f64>, k: isize) -> Result<DMatrix<f64>> {
    let n = t.nrows();
    if t.ncols() != n {
        return Err(Error::Algebra(format!("pullback needs a square matrix, got {}x{}", n, t.ncols())));
    }
    let basis = multiindex_basis(n, k);
    let dim = basis.len();
    let mut m = DMatrix::zeros(dim, dim);
    for (r, ri) in basis.iter().enumerate() {
        for (c, ci) in basis.iter().enumerate() {
            // entry (I, J) = det of T restricted to rows J, columns I
            let kk = ri.degree();
            let sub = DMatrix::from_fn(kk, kk, |a, b| t[(ci.entries[a] - 1, ri.entries[b] - 1)]);
            m[(r, c)] = if kk == 0 { 1.0 } else { sub.determinant() };
        }
    }
    Ok(m)
}

// ---- constant-gradient calculus used per element ----

/// Sign in `δ = c_n Σ_i e_i ⌟ ∂_i`, matching `δ = (−1)^{nk+1} ★d★`.
pub fn codifferential_sign(n: usize) -> f64 {
    if n % 2 == 0 {
        -1.0
    } else {
        1.0
    }
}

/// `dω = Σ_p e^p ∧ ∂_p ω` for a field whose partial derivatives are given.
/// `partials[p]` holds the coefficients of `∂_p ω` in `Λ^k`.
pub fn d_from_partials(n: usize, k: isize, partials: &[Vec<f64>], out: &mut [f64]) {
    out.iter_mut().for_each(|v| *v = 0.0);
    if out.is_empty() || k < 0 {
        return;
    }
    let t = sign_table(n);
    for (p, dp) in partials.iter().enumerate() {
        for (s, &c) in dp.iter().enumerate() {
            let (tgt, sg) = t.wedge_basis1(k as usize, s, p);
            if sg != 0.0 {
                out[tgt] += sg * c;
            }
        }
    }
}

/// `δω = c_n Σ_p e_p ⌟ ∂_p ω`, the componentwise formula used in assembly.
pub fn codiff_from_partials(n: usize, k: isize, partials: &[Vec<f64>], out: &mut [f64]) {
    out.iter_mut().for_each(|v| *v = 0.0);
    if out.is_empty() || k < 1 {
        return;
    }
    let t = sign_table(n);
    let c = codifferential_sign(n);
    for (p, dp) in partials.iter().enumerate() {
        for (s, &v) in dp.iter().enumerate() {
            let (tgt, sg) = t.interior_basis1(k as usize, s, p);
            if sg != 0.0 {
                out[tgt] += c * sg * v;
            }
        }
    }
}

/// `δω = (−1)^{nk+1} ★ d ★ ω`, evaluated through the star.
pub fn codiff_via_star(n: usize, k: isize, partials: &[Vec<f64>]) -> Vec<f64> {
    let nk = n as isize;
    let starred: Vec<Vec<f64>> = partials
        .iter()
        .map(|dp| hodge_star(&Form { n, k, coeffs: dp.clone() }).coeffs)
        .collect();
    let mut dstar = vec![0.0; binomial(n, nk - k + 1)];
    d_from_partials(n, nk - k, &starred, &mut dstar);
    let back = hodge_star(&Form { n, k: nk - k + 1, coeffs: dstar });
    let sign = if (nk * k + 1) % 2 == 0 { 1.0 } else { -1.0 };
    back.coeffs.iter().map(|c| sign * c).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parity(seq: &[usize]) -> i32 {
        // explicit inversion count; 0 for repeated entries
        let mut inv = 0;
        for i in 0..seq.len() {
            for j in i + 1..seq.len() {
                if seq[i] == seq[j] {
                    return 0;
                }
                if seq[i] > seq[j] {
                    inv += 1;
                }
            }
        }
        if inv % 2 == 0 {
            1
        } else {
            -1
        }
    }

    #[test]
    fn basis_examples() {
        let b: Vec<Vec<usize>> = multiindex_basis(3, 2).iter().map(|m| m.entries().to_vec()).collect();
        assert_eq!(b, vec![vec![1, 2], vec![1, 3], vec![2, 3]]);
        assert_eq!(multiindex_basis(5, 0).len(), 1);
        assert_eq!(multiindex_basis(4, 2).len(), 6);
        assert!(multiindex_basis(3, 4).is_empty());
        assert!(multiindex_basis(3, -1).is_empty());
    }

    #[test]
    fn basis_is_sorted_and_complete() {
        for n in 1..=7 {
            for k in 0..=n {
                let b = multiindex_basis(n, k as isize);
                assert_eq!(b.len(), binomial(n, k as isize));
                assert!(b.windows(2).all(|w| w[0] < w[1]));
            }
        }
    }

    #[test]
    fn sign_table_matches_permutation_parity() {
        for n in 1..=6 {
            let t = sign_table(n);
            for k in 0..=n {
                for l in 0..=(n - k) {
                    for a in multiindex_basis(n, k as isize) {
                        for b in multiindex_basis(n, l as isize) {
                            let mut seq = a.entries().to_vec();
                            seq.extend_from_slice(b.entries());
                            assert_eq!(t.wedge_sign(a.mask(), b.mask()) as i32, parity(&seq));
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn wedge_examples() {
        let e1 = Form::basis(3, &[1]).unwrap();
        let e2 = Form::basis(3, &[2]).unwrap();
        let e3 = Form::basis(3, &[3]).unwrap();
        assert_eq!(wedge(&e1, &e2).unwrap(), Form::basis(3, &[1, 2]).unwrap());
        assert!(wedge(&e1, &e1).unwrap().norm() == 0.0);
        let s = wedge(&e1.add(&e2).unwrap(), &e3).unwrap();
        assert_eq!(s, Form::basis(3, &[1, 3]).unwrap().add(&Form::basis(3, &[2, 3]).unwrap()).unwrap());
        assert!(wedge(&e1, &Form::basis(2, &[1]).unwrap()).is_err());
    }

    #[test]
    fn interior_examples() {
        let e12 = Form::basis(3, &[1, 2]).unwrap();
        let r = interior_product(&Form::basis(3, &[1]).unwrap(), &e12).unwrap();
        assert_eq!(r, Form::basis(3, &[2]).unwrap());
        let r = interior_product(&Form::basis(3, &[3]).unwrap(), &e12).unwrap();
        assert_eq!(r.norm(), 0.0);
        let zero = interior_product(&Form::basis(3, &[3]).unwrap(), &Form::zero(3, 0)).unwrap();
        assert_eq!(zero.coeffs().len(), 0);
    }

    #[test]
    fn star_examples() {
        let s = hodge_star(&Form::basis(3, &[1]).unwrap());
        assert_eq!(s, Form::basis(3, &[2, 3]).unwrap());
        let one = Form::from_coeffs(3, 0, vec![1.0]).unwrap();
        assert_eq!(hodge_star(&one), Form::basis(3, &[1, 2, 3]).unwrap());
    }

    #[test]
    fn split_rejects_non_unit() {
        let nu = Form::covector(&[2.0, 0.0]);
        assert!(matches!(split_along_normal(&nu, &Form::basis(2, &[1]).unwrap()), Err(Error::NotNormalized(_))));
    }

    #[test]
    fn split_basis_cases() {
        let nu = Form::basis(4, &[4]).unwrap();
        let xi = Form::basis(4, &[1, 2]).unwrap();
        let (t, nrm) = split_along_normal(&nu, &xi).unwrap();
        assert_eq!(t, xi);
        assert_eq!(nrm.norm(), 0.0);
        let xi = Form::basis(4, &[2, 4]).unwrap();
        let (t, nrm) = split_along_normal(&nu, &xi).unwrap();
        assert_eq!(t.norm(), 0.0);
        assert_eq!(nrm, xi);
    }

    #[test]
    fn pullback_scaling_and_identity() {
        let t = DMatrix::<f64>::identity(4, 4) * 3.0;
        let xi = Form::from_coeffs(4, 2, (0..6).map(|i| i as f64 - 2.5).collect()).unwrap();
        let p = pullback_linear(&t, &xi).unwrap();
        for (a, b) in p.coeffs().iter().zip(xi.coeffs()) {
            assert!((a - 9.0 * b).abs() < 1e-12);
        }
        let id = pullback_linear(&DMatrix::identity(4, 4), &xi).unwrap();
        assert_eq!(id, xi);
    }

    #[test]
    fn pullback_of_one_form_is_transpose() {
        let t = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        let xi = Form::covector(&[1.0, -1.0]);
        let p = pullback_linear(&t, &xi).unwrap();
        // (T*ξ)(v) = ξ(Tv)
        let v = [0.3, -0.7];
        let tv = [v[0] + 2.0 * v[1], 3.0 * v[0] + 4.0 * v[1]];
        let lhs = p.coeffs()[0] * v[0] + p.coeffs()[1] * v[1];
        assert!((lhs - (tv[0] - tv[1])).abs() < 1e-12);
    }

    #[test]
    fn codifferential_sign_alternates_with_dimension() {
        assert_eq!(codifferential_sign(2), -1.0);
        assert_eq!(codifferential_sign(3), 1.0);
    }
}
