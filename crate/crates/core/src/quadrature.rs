//! Quadrature rules on reference simplices, in barycentric coordinates.

use std::sync::OnceLock;

/// Points are barycentric `(λ_0, …, λ_d)`; weights sum to the reference volume `1/d!`.
#[derive(Clone, Debug)]
pub struct QuadratureRule {
    pub dim: usize,
    pub points: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
    pub order: usize,
}

impl QuadratureRule {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Weights rescaled to sum to one, for use with a physical volume factor.
    pub fn unit_weights(&self) -> Vec<f64> {
        let s: f64 = self.weights.iter().sum();
        self.weights.iter().map(|w| w / s).collect()
    }
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|i| i as f64).product()
}

fn centroid(dim: usize) -> QuadratureRule {
    QuadratureRule {
        dim,
        points: vec![vec![1.0 / (dim + 1) as f64; dim + 1]],
        weights: vec![1.0 / factorial(dim)],
        order: 1,
    }
}

fn orbit3(a: f64, b: f64, c: f64) -> Vec<Vec<f64>> {
    let mut out: Vec<Vec<f64>> = Vec::new();
    for p in [[a, b, c], [b, c, a], [c, a, b], [a, c, b], [b, a, c], [c, b, a]] {
        if !out.iter().any(|q| q.iter().zip(&p).all(|(x, y)| (x - y).abs() < 1e-15)) {
            out.push(p.to_vec());
        }
    }
    out
}

fn gauss_segment(order: usize) -> QuadratureRule {
    let (xs, ws): (Vec<f64>, Vec<f64>) = match order {
        0 | 1 => (vec![0.0], vec![2.0]),
        2 | 3 => {
            let t = 1.0 / 3f64.sqrt();
            (vec![-t, t], vec![1.0, 1.0])
        }
        _ => {
            let t = (0.6f64).sqrt();
            (vec![-t, 0.0, t], vec![5.0 / 9.0, 8.0 / 9.0, 5.0 / 9.0])
        }
    };
    let order = match xs.len() {
        1 => 1,
        2 => 3,
        _ => 5,
    };
    QuadratureRule {
        dim: 1,
        points: xs.iter().map(|x| vec![(1.0 - x) / 2.0, (1.0 + x) / 2.0]).collect(),
        weights: ws.iter().map(|w| w / 2.0).collect(),
        order,
    }
}

fn triangle(order: usize) -> QuadratureRule {
    match order {
        0 | 1 => centroid(2),
        2 => {
            let points = orbit3(2.0 / 3.0, 1.0 / 6.0, 1.0 / 6.0);
            QuadratureRule { dim: 2, weights: vec![1.0 / 6.0; 3], points, order: 2 }
        }
        _ => {
            let s15 = 15f64.sqrt();
            let a = (6.0 - s15) / 21.0;
            let b = (6.0 + s15) / 21.0;
            let wa = (155.0 - s15) / 1200.0;
            let wb = (155.0 + s15) / 1200.0;
            let mut points = vec![vec![1.0 / 3.0; 3]];
            let mut weights = vec![9.0 / 40.0];
            for p in orbit3(1.0 - 2.0 * a, a, a) {
                points.push(p);
                weights.push(wa);
            }
            for p in orbit3(1.0 - 2.0 * b, b, b) {
                points.push(p);
                weights.push(wb);
            }
            QuadratureRule { dim: 2, weights: weights.iter().map(|w| w / 2.0).collect(), points, order: 5 }
        }
    }
}

/// Compositions of `total` into `parts` nonnegative integers.
fn compositions(total: usize, parts: usize) -> Vec<Vec<usize>> {
    if parts == 1 {
        return vec![vec![total]];
    }
    let mut out = Vec::new();
    for first in 0..=total {
        for mut rest in compositions(total - first, parts - 1) {
            rest.insert(0, first);
            out.push(rest);
        }
    }
    out
}

/// Grundmann–Möller rule of degree `2s+1` on the `dim`-simplex.
fn grundmann_moller(dim: usize, s: usize) -> QuadratureRule {
    let d = 2 * s + 1;
    let mut points = Vec::new();
    let mut weights = Vec::new();
    for i in 0..=s {
        let denom = (d + dim - 2 * i) as f64;
        let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
        let w = sign * 2f64.powi(-2 * s as i32) * denom.powi(d as i32) / (factorial(i) * factorial(d + dim - i));
        for beta in compositions(s - i, dim + 1) {
            points.push(beta.iter().map(|&b| (2 * b + 1) as f64 / denom).collect());
            weights.push(w);
        }
    }
    QuadratureRule { dim, points, weights, order: d }
}

fn tetrahedron(order: usize) -> QuadratureRule {
    match order {
        0 | 1 => centroid(3),
        2 => {
            let a = (5.0 - 5f64.sqrt()) / 20.0;
            let b = 1.0 - 3.0 * a;
            let points = (0..4).map(|i| (0..4).map(|j| if i == j { b } else { a }).collect()).collect();
            QuadratureRule { dim: 3, points, weights: vec![1.0 / 24.0; 4], order: 2 }
        }
        3 => grundmann_moller(3, 1),
        _ => grundmann_moller(3, 2),
    }
}

/// Rule on the `dim`-simplex exact to at least `order` (capped at 5).
pub fn rule(dim: usize, order: usize) -> &'static QuadratureRule {
    static CACHE: OnceLock<Vec<Vec<QuadratureRule>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| {
        (0..=3)
            .map(|d| {
                (0..=5)
                    .map(|o| match d {
                        0 => QuadratureRule { dim: 0, points: vec![vec![1.0]], weights: vec![1.0], order: 99 },
                        1 => gauss_segment(o),
                        2 => triangle(o),
                        _ => tetrahedron(o),
                    })
                    .collect()
            })
            .collect()
    });
    assert!(dim <= 3, "quadrature only for dimensions up to 3");
    &cache[dim][order.min(5)]
}

#[cfg(test)]
mod tests {
    use super::*;

    // ∫ over the reference simplex of Π x_i^{a_i} = Π a_i! / (Σ a_i + dim)!
    fn exact_monomial(alpha: &[usize]) -> f64 {
        let dim = alpha.len();
        alpha.iter().map(|&a| factorial(a)).product::<f64>() / factorial(alpha.iter().sum::<usize>() + dim)
    }

    #[test]
    fn monomials_are_integrated_exactly() {
        for dim in 1..=3 {
            for order in 1..=5 {
                let r = rule(dim, order);
                assert!(r.order >= order);
                let wsum: f64 = r.weights.iter().sum();
                assert!((wsum - 1.0 / factorial(dim)).abs() < 1e-14);
                for deg in 0..=r.order {
                    for alpha in compositions(deg, dim) {
                        let q: f64 = r
                            .points
                            .iter()
                            .zip(&r.weights)
                            .map(|(p, w)| w * alpha.iter().enumerate().map(|(i, &a)| p[i + 1].powi(a as i32)).product::<f64>())
                            .sum();
                        let e = exact_monomial(&alpha);
                        assert!((q - e).abs() < 1e-13, "dim {dim} order {order} alpha {alpha:?}: {q} vs {e}");
                    }
                }
            }
        }
    }

    #[test]
    fn barycentric_points_sum_to_one() {
        for dim in 1..=3 {
            for p in &rule(dim, 5).points {
                assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-14);
            }
        }
    }
}
