//! Quadrature rules shared by all assembly routines.
//!
//! `order q` selects a pairing with Gauss-type accuracy: a symmetric
//! triangle rule exact for polynomials of total degree `2q`, and a
//! `2q`-point Gauss-Legendre rule on edges. The element weights carried by
//! the control basis are non-polynomial (Gaussian bumps times exponential
//! decay), so structural identities of the assembled matrices hold only to
//! quadrature accuracy; on a 10x10 mesh with basis width 0.1 the relative
//! residuals are about 4e-3 / 2e-9 / 8e-14 at orders 2 / 4 / 6.

use crate::error::{Error, Result};

/// Volume rule on a triangle. Points are barycentric; weights sum to one,
/// so quadrature of `f` over a triangle is `area * sum(w_i * f(x_i))`.
#[derive(Clone, Debug)]
pub struct TriangleRule {
    pub points: Vec<[f64; 3]>,
    pub weights: Vec<f64>,
}

/// Rule on the unit interval [0, 1]; weights sum to one.
#[derive(Clone, Debug)]
pub struct EdgeRule {
    pub points: Vec<f64>,
    pub weights: Vec<f64>,
}

impl TriangleRule {
    /// Symmetric rule exact for polynomials of total degree `2 * order`.
    pub fn with_order(order: usize) -> Result<TriangleRule> {
        let rows: &[(f64, f64, f64, f64, usize)] = match order {
            2 => &DEGREE4,
            3 => &DEGREE6,
            4 => &DEGREE8,
            5 => &DEGREE10,
            6 => &DEGREE12,
            _ => return Err(Error::UnsupportedQuadOrder(order)),
        };
        let mut points = Vec::new();
        let mut weights = Vec::new();
        for &(a, b, c, w, mult) in rows {
            for p in orbit(a, b, c, mult) {
                points.push(p);
                weights.push(w);
            }
        }
        Ok(TriangleRule { points, weights })
    }
}

impl EdgeRule {
    /// `2 * order`-point Gauss-Legendre rule mapped to [0, 1].
    pub fn with_order(order: usize) -> Result<EdgeRule> {
        if !(2..=6).contains(&order) {
            return Err(Error::UnsupportedQuadOrder(order));
        }
        let (x, w) = gauss_legendre(2 * order);
        Ok(EdgeRule {
            points: x.iter().map(|t| 0.5 * (t + 1.0)).collect(),
            weights: w.iter().map(|wi| 0.5 * wi).collect(),
        })
    }
}

/// Distinct permutations of a barycentric triple; `mult` is the expected
/// orbit size and guards the tables against typos.
fn orbit(a: f64, b: f64, c: f64, mult: usize) -> Vec<[f64; 3]> {
    let mut pts: Vec<[f64; 3]> = vec![
        [a, b, c],
        [a, c, b],
        [b, a, c],
        [b, c, a],
        [c, a, b],
        [c, b, a],
    ];
    pts.sort_by(|p, q| p.partial_cmp(q).unwrap());
    pts.dedup();
    assert_eq!(pts.len(), mult, "orbit size mismatch for ({a}, {b}, {c})");
    pts
}

/// Gauss-Legendre nodes and weights on [-1, 1] by Newton iteration on the
/// Legendre recurrence.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for k in 0..n {
        let mut x = (std::f64::consts::PI * (k as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (p, dp) = legendre_with_derivative(n, x);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let (_, dp) = legendre_with_derivative(n, x);
        nodes[n - 1 - k] = x;
        weights[n - 1 - k] = 2.0 / ((1.0 - x * x) * dp * dp);
    }
    (nodes, weights)
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for m in 2..=n {
        let m = m as f64;
        let p2 = ((2.0 * m - 1.0) * x * p1 - (m - 1.0) * p0) / m;
        p0 = p1;
        p1 = p2;
    }
    if n == 0 {
        return (1.0, 0.0);
    }
    let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}

// Symmetric triangle rules, given as orbit generators
// (a, b, c, weight, orbit size) with barycentric (a, b, c).

const DEGREE4: [(f64, f64, f64, f64, usize); 2] = [
    (
        0.108103018168070,
        0.445948490915965,
        0.445948490915965,
        0.223381589678011,
        3,
    ),
    (
        0.816847572980459,
        0.091576213509771,
        0.091576213509771,
        0.109951743655322,
        3,
    ),
];

const DEGREE6: [(f64, f64, f64, f64, usize); 3] = [
    (
        0.873821971016996,
        0.063089014491502,
        0.063089014491502,
        0.050844906370207,
        3,
    ),
    (
        0.501426509658179,
        0.249286745170910,
        0.249286745170910,
        0.116786275726379,
        3,
    ),
    (
        0.636502499121399,
        0.310352451033785,
        0.053145049844816,
        0.082851075618374,
        6,
    ),
];

const DEGREE8: [(f64, f64, f64, f64, usize); 5] = [
    (
        1.0 / 3.0,
        1.0 / 3.0,
        1.0 / 3.0,
        0.144315607677785,
        1,
    ),
    (
        0.081414823414554,
        0.459292588292723,
        0.459292588292723,
        0.095091634267285,
        3,
    ),
    (
        0.658861384496480,
        0.170569307751760,
        0.170569307751760,
        0.103217370534718,
        3,
    ),
    (
        0.898905543365938,
        0.050547228317031,
        0.050547228317031,
        0.032458497623198,
        3,
    ),
    (
        0.008394777409958,
        0.263112829634638,
        0.728492392955404,
        0.027230314174435,
        6,
    ),
];

const DEGREE10: [(f64, f64, f64, f64, usize); 6] = [
    (
        1.0 / 3.0,
        1.0 / 3.0,
        1.0 / 3.0,
        0.090817990382754,
        1,
    ),
    (
        0.028844733232685,
        0.485577633383657,
        0.485577633383657,
        0.036725957756467,
        3,
    ),
    (
        0.781036849029926,
        0.109481575485037,
        0.109481575485037,
        0.045321059435528,
        3,
    ),
    (
        0.141707219414880,
        0.307939838764121,
        0.550352941820999,
        0.072757916845420,
        6,
    ),
    (
        0.025003534762686,
        0.246672560639903,
        0.728323904597411,
        0.028327242531057,
        6,
    ),
    (
        0.009540815400299,
        0.066803251012200,
        0.923655933587500,
        0.009421666963733,
        6,
    ),
];

const DEGREE12: [(f64, f64, f64, f64, usize); 8] = [
    (
        0.023565220452390,
        0.488217389773805,
        0.488217389773805,
        0.025731066440455,
        3,
    ),
    (
        0.120551215411079,
        0.439724392294460,
        0.439724392294460,
        0.043692544538038,
        3,
    ),
    (
        0.457579229975768,
        0.271210385012116,
        0.271210385012116,
        0.062858224217885,
        3,
    ),
    (
        0.744847708916828,
        0.127576145541586,
        0.127576145541586,
        0.034796112930709,
        3,
    ),
    (
        0.957365299093579,
        0.021317350453210,
        0.021317350453210,
        0.006166261051559,
        3,
    ),
    (
        0.115343494534698,
        0.275713269685514,
        0.608943235779788,
        0.040371557766381,
        6,
    ),
    (
        0.022838332222257,
        0.281325580989940,
        0.695836086787803,
        0.022356773202303,
        6,
    ),
    (
        0.025734050548330,
        0.116251915907597,
        0.858014033544073,
        0.017316231108659,
        6,
    ),
];

#[cfg(test)]
mod tests {
    use super::*;

    /// Exact integral of a barycentric monomial over the reference
    /// triangle, scaled to weights-sum-to-one convention:
    /// sum(w * l0^a l1^b l2^c) = 2 a! b! c! / (a + b + c + 2)!.
    fn exact_monomial(a: u32, b: u32, c: u32) -> f64 {
        fn fact(n: u32) -> f64 {
            (1..=n).map(|k| k as f64).product()
        }
        2.0 * fact(a) * fact(b) * fact(c) / fact(a + b + c + 2)
    }

    #[test]
    fn triangle_rules_integrate_monomials_to_declared_degree() {
        for order in 2..=6usize {
            let rule = TriangleRule::with_order(order).unwrap();
            let degree = 2 * order as u32;
            let sum: f64 = rule.weights.iter().sum();
            assert!((sum - 1.0).abs() < 1e-13, "order {order}: weight sum {sum}");
            for a in 0..=degree {
                for b in 0..=(degree - a) {
                    let c = degree - a - b;
                    let approx: f64 = rule
                        .points
                        .iter()
                        .zip(&rule.weights)
                        .map(|(p, w)| w * p[0].powi(a as i32) * p[1].powi(b as i32) * p[2].powi(c as i32))
                        .sum();
                    let exact = exact_monomial(a, b, c);
                    assert!(
                        (approx - exact).abs() < 1e-13,
                        "order {order} monomial ({a},{b},{c}): {approx} vs {exact}"
                    );
                }
            }
        }
    }

    #[test]
    fn unsupported_orders_are_rejected() {
        assert!(TriangleRule::with_order(1).is_err());
        assert!(TriangleRule::with_order(7).is_err());
        assert!(EdgeRule::with_order(0).is_err());
        assert!(EdgeRule::with_order(9).is_err());
    }

    #[test]
    fn gauss_legendre_matches_known_values() {
        let (x, w) = gauss_legendre(2);
        assert!((x[0] + 1.0 / 3f64.sqrt()).abs() < 1e-15);
        assert!((x[1] - 1.0 / 3f64.sqrt()).abs() < 1e-15);
        assert!((w[0] - 1.0).abs() < 1e-15);
        let (x, w) = gauss_legendre(5);
        assert!((x[2]).abs() < 1e-15);
        assert!((w[2] - 128.0 / 225.0).abs() < 1e-14);
    }

    #[test]
    fn edge_rules_integrate_polynomials() {
        for order in 2..=6usize {
            let rule = EdgeRule::with_order(order).unwrap();
            let degree = 4 * order - 1;
            for d in 0..=degree as u32 {
                let approx: f64 = rule
                    .points
                    .iter()
                    .zip(&rule.weights)
                    .map(|(x, w)| w * x.powi(d as i32))
                    .sum();
                let exact = 1.0 / (d as f64 + 1.0);
                assert!(
                    (approx - exact).abs() < 1e-14,
                    "order {order} x^{d}: {approx} vs {exact}"
                );
            }
        }
    }
}
