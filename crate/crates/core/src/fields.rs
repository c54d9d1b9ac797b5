//! Analytic form fields: closures `x ↦ Λ^k` coefficients with finite-difference derivatives.

use std::fmt;
use std::sync::Arc;

use crate::coefficients::OperatorField;
use crate::exterior::{binomial, codiff_from_partials, d_from_partials};

pub type FieldFn = Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;

/// Default finite-difference step for derivatives of analytic fields.
pub const H_FD: f64 = 1e-3;

#[derive(Clone)]
pub struct AnalyticField {
    n: usize,
    k: isize,
    label: String,
    f: FieldFn,
}

impl fmt::Debug for AnalyticField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "AnalyticField({}, n={}, k={})", self.label, self.n, self.k)
    }
}

impl AnalyticField {
    pub fn new<F>(n: usize, k: isize, label: impl Into<String>, f: F) -> Self
    where
        F: Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static,
    {
        AnalyticField { n, k, label: label.into(), f: Arc::new(f) }
    }

    pub fn zero(n: usize, k: isize) -> Self {
        let d = binomial(n, k);
        Self::new(n, k, "0", move |_| vec![0.0; d])
    }

    pub fn constant(n: usize, k: isize, v: Vec<f64>) -> Self {
        Self::new(n, k, "const", move |_| v.clone())
    }

    pub fn n(&self) -> usize {
        self.n
    }
    pub fn degree(&self) -> isize {
        self.k
    }
    pub fn label(&self) -> &str {
        &self.label
    }
    pub fn dim(&self) -> usize {
        binomial(self.n, self.k)
    }

    pub fn eval(&self, x: &[f64]) -> Vec<f64> {
        (self.f)(x)
    }

    /// Fourth-order central difference `∂_p ω(x)` with step `h`.
    pub fn partial(&self, x: &[f64], p: usize, h: f64) -> Vec<f64> {
        let mut y = x.to_vec();
        let mut at = |t: f64| {
            y[p] = x[p] + t;
            self.eval(&y)
        };
        let (m2, m1, p1, p2) = (at(-2.0 * h), at(-h), at(h), at(2.0 * h));
        (0..m2.len()).map(|i| (m2[i] - p2[i] + 8.0 * (p1[i] - m1[i])) / (12.0 * h)).collect()
    }

    pub fn gradient(&self, x: &[f64], h: f64) -> Vec<Vec<f64>> {
        (0..self.n).map(|p| self.partial(x, p, h)).collect()
    }

    pub fn d_at(&self, x: &[f64], h: f64) -> Vec<f64> {
        let mut out = vec![0.0; binomial(self.n, self.k + 1)];
        d_from_partials(self.n, self.k, &self.gradient(x, h), &mut out);
        out
    }

    pub fn codiff_at(&self, x: &[f64], h: f64) -> Vec<f64> {
        let mut out = vec![0.0; binomial(self.n, self.k - 1)];
        codiff_from_partials(self.n, self.k, &self.gradient(x, h), &mut out);
        out
    }

    /// `x ↦ M(x) ω(x)`.
    pub fn apply(&self, m: &OperatorField) -> AnalyticField {
        let f = self.f.clone();
        let m = m.clone();
        let k = m.target_degree();
        AnalyticField::new(self.n, k, format!("M·{}", self.label), move |x| {
            let v = nalgebra::DVector::from_vec(f(x));
            (m.at(x) * v).as_slice().to_vec()
        })
    }

    /// `x ↦ dω(x)` by finite differences.
    pub fn exterior_derivative(&self, h: f64) -> AnalyticField {
        let me = self.clone();
        AnalyticField::new(self.n, self.k + 1, format!("d{}", self.label), move |x| me.d_at(x, h))
    }

    /// `x ↦ δω(x)` by finite differences.
    pub fn codifferential(&self, h: f64) -> AnalyticField {
        let me = self.clone();
        AnalyticField::new(self.n, self.k - 1, format!("δ{}", self.label), move |x| me.codiff_at(x, h))
    }

    pub fn add(&self, other: &AnalyticField) -> AnalyticField {
        assert_eq!((self.n, self.k), (other.n, other.k), "field degree mismatch");
        let (f, g) = (self.f.clone(), other.f.clone());
        AnalyticField::new(self.n, self.k, format!("{}+{}", self.label, other.label), move |x| {
            f(x).into_iter().zip(g(x)).map(|(a, b)| a + b).collect()
        })
    }

    pub fn scale(&self, c: f64) -> AnalyticField {
        let f = self.f.clone();
        AnalyticField::new(self.n, self.k, format!("{c}·{}", self.label), move |x| f(x).into_iter().map(|a| c * a).collect())
    }

    pub fn sub(&self, other: &AnalyticField) -> AnalyticField {
        self.add(&other.scale(-1.0))
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derivatives_of_polynomial_field() {
        // ω = x1² x2 e¹ + x1 e² in 2D
        let w = AnalyticField::new(2, 1, "w", |x| vec![x[0] * x[0] * x[1], x[0]]);
        let x = [0.3, -0.7];
        let g = w.gradient(&x, H_FD);
        assert!((g[0][0] - 2.0 * 0.3 * -0.7).abs() < 1e-10);
        assert!((g[1][0] - 0.09).abs() < 1e-10);
        assert!((g[0][1] - 1.0).abs() < 1e-10);
        // dω = (∂1 ω2 − ∂2 ω1) e¹²
        let d = w.d_at(&x, H_FD);
        assert!((d[0] - (1.0 - 0.09)).abs() < 1e-10);
    }
}
