//! Quadrature rules on reference simplices, stored in barycentric form.
//!
//! Weights of every rule sum to one, so an integral over a physical simplex is
//! `measure * sum(w_q * f(x_q))`.

/// A quadrature rule on a `k`-simplex (`k + 1` barycentric coordinates).
#[derive(Clone, Debug)]
pub struct Rule {
    /// Number of barycentric coordinates per point (2 = segment, 3 = triangle, 4 = tetrahedron).
    pub arity: usize,
    pub points: Vec<[f64; 4]>,
    pub weights: Vec<f64>,
}

impl Rule {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[f64], f64)> + '_ {
        self.points
            .iter()
            .zip(&self.weights)
            .map(move |(p, &w)| (&p[..self.arity], w))
    }
}

fn perm3(a: f64, b: f64, w: f64, pts: &mut Vec<[f64; 4]>, ws: &mut Vec<f64>) {
    // (a, a, b) and its distinct permutations
    for p in [[a, a, b, 0.0], [a, b, a, 0.0], [b, a, a, 0.0]] {
        pts.push(p);
        ws.push(w);
    }
}

/// 3-point Gauss-Legendre rule on a segment, exact to degree 5.
pub fn segment_degree5() -> Rule {
    let d = 0.5 * (3.0f64 / 5.0).sqrt();
    Rule {
        arity: 2,
        points: vec![
            [0.5 - d, 0.5 + d, 0.0, 0.0],
            [0.5, 0.5, 0.0, 0.0],
            [0.5 + d, 0.5 - d, 0.0, 0.0],
        ],
        weights: vec![5.0 / 18.0, 8.0 / 18.0, 5.0 / 18.0],
    }
}

/// 6-point rule on a triangle, exact to degree 4.
pub fn triangle_degree4() -> Rule {
    let mut points = Vec::new();
    let mut weights = Vec::new();
    let a1 = 0.445_948_490_915_965;
    perm3(a1, 1.0 - 2.0 * a1, 0.223_381_589_678_011, &mut points, &mut weights);
    let a2 = 0.091_576_213_509_771;
    perm3(a2, 1.0 - 2.0 * a2, 0.109_951_743_655_322, &mut points, &mut weights);
    Rule { arity: 3, points, weights }
}

/// 7-point rule on a triangle, exact to degree 5.
pub fn triangle_degree5() -> Rule {
    let mut points = vec![[1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0, 0.0]];
    let mut weights = vec![0.225];
    let s15 = 15.0f64.sqrt();
    let a1 = (6.0 - s15) / 21.0;
    let w1 = (155.0 - s15) / 1200.0;
    perm3(a1, 1.0 - 2.0 * a1, w1, &mut points, &mut weights);
    let a2 = (6.0 + s15) / 21.0;
    let w2 = (155.0 + s15) / 1200.0;
    perm3(a2, 1.0 - 2.0 * a2, w2, &mut points, &mut weights);
    Rule { arity: 3, points, weights }
}

/// 11-point Keast rule on a tetrahedron, exact to degree 4.
pub fn tetrahedron_degree4() -> Rule {
    let mut points = vec![[0.25; 4]];
    let mut weights = vec![-74.0 / 937.5];
    let a = 1.0 / 14.0;
    let b = 11.0 / 14.0;
    for k in 0..4 {
        let mut p = [a; 4];
        p[k] = b;
        points.push(p);
        weights.push(343.0 / 7500.0);
    }
    let c = 0.25 * (1.0 + (5.0f64 / 14.0).sqrt());
    let d = 0.25 * (1.0 - (5.0f64 / 14.0).sqrt());
    for (i, j) in [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)] {
        let mut p = [d; 4];
        p[i] = c;
        p[j] = c;
        points.push(p);
        weights.push(56.0 / 375.0);
    }
    Rule { arity: 4, points, weights }
}

/// Cell rule exact to degree 4 for a simplex of dimension `dim`.
pub fn cell_rule(dim: usize) -> Rule {
    match dim {
        2 => triangle_degree4(),
        3 => tetrahedron_degree4(),
        _ => panic!("unsupported dimension {dim}"),
    }
}

/// Facet rule exact to degree 5 for facets of a `dim`-simplex.
pub fn facet_rule(dim: usize) -> Rule {
    match dim {
        2 => segment_degree5(),
        3 => triangle_degree5(),
        _ => panic!("unsupported dimension {dim}"),
    }
}

/// Gauss-Legendre nodes and weights on `[0, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n {
        // Newton on P_n from the Chebyshev guess
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            if n == 0 {
                break;
            }
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 1 { z } else { p1 };
            let pm = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (z * pn - pm) / (z * z - 1.0);
            let dz = pn / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = 0.5 * (1.0 - z);
        w[i] = 1.0 / ((1.0 - z * z) * dp * dp);
    }
    (x, w)
}

/// Conical-product (collapsed Gauss) rule on a `k`-simplex with `n` points per
/// direction; exact to degree `2n - 1 - (k - 1)` at least.
pub fn collapsed_rule(k: usize, n: usize) -> Rule {
    let (x, w) = gauss_legendre(n);
    let mut points = Vec::new();
    let mut weights = Vec::new();
    match k {
        1 => {
            for (xi, wi) in x.iter().zip(&w) {
                points.push([1.0 - xi, *xi, 0.0, 0.0]);
                weights.push(*wi);
            }
        }
        2 => {
            for (u, wu) in x.iter().zip(&w) {
                for (v, wv) in x.iter().zip(&w) {
                    let px = *u;
                    let py = v * (1.0 - u);
                    points.push([1.0 - px - py, px, py, 0.0]);
                    weights.push(2.0 * wu * wv * (1.0 - u));
                }
            }
        }
        3 => {
            for (u, wu) in x.iter().zip(&w) {
                for (v, wv) in x.iter().zip(&w) {
                    for (s, ws) in x.iter().zip(&w) {
                        let px = *u;
                        let py = v * (1.0 - u);
                        let pz = s * (1.0 - u) * (1.0 - v);
                        points.push([1.0 - px - py - pz, px, py, pz]);
                        weights.push(6.0 * wu * wv * ws * (1.0 - u) * (1.0 - u) * (1.0 - v));
                    }
                }
            }
        }
        _ => panic!("unsupported simplex dimension {k}"),
    }
    Rule { arity: k + 1, points, weights }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn factorial(n: u32) -> f64 {
        (1..=n).map(f64::from).product()
    }

    // Exact mean of prod(lambda_i^a_i) over a k-simplex:
    // k! * prod(a_i!) / (k + sum a_i)!
    fn bary_monomial_mean(exps: &[u32]) -> f64 {
        let k = exps.len() as u32 - 1;
        let s: u32 = exps.iter().sum();
        factorial(k) * exps.iter().map(|&a| factorial(a)).product::<f64>() / factorial(k + s)
    }

    fn check_exact(rule: &Rule, degree: u32) {
        let k = rule.arity;
        let mut exps = vec![0u32; k];
        loop {
            let s: u32 = exps.iter().sum();
            if s <= degree {
                let q: f64 = rule
                    .iter()
                    .map(|(p, w)| w * p.iter().zip(&exps).map(|(l, &a)| l.powi(a as i32)).product::<f64>())
                    .sum();
                let exact = bary_monomial_mean(&exps);
                assert!((q - exact).abs() < 1e-13, "exps {exps:?}: {q} vs {exact}");
            }
            let mut i = 0;
            loop {
                if i == k {
                    return;
                }
                exps[i] += 1;
                if exps[i] <= degree {
                    break;
                }
                exps[i] = 0;
                i += 1;
            }
        }
    }

    #[test]
    fn fixed_rules_reach_their_degree() {
        check_exact(&segment_degree5(), 5);
        check_exact(&triangle_degree4(), 4);
        check_exact(&triangle_degree5(), 5);
        check_exact(&tetrahedron_degree4(), 4);
    }

    #[test]
    fn collapsed_rules_are_high_order() {
        check_exact(&collapsed_rule(1, 6), 11);
        check_exact(&collapsed_rule(2, 8), 12);
        check_exact(&collapsed_rule(3, 8), 12);
    }
}
