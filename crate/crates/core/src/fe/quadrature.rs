//! Symmetric quadrature rules on the reference triangle `{(ξ,η): ξ,η ≥ 0, ξ+η ≤ 1}`.
//! Weights are in reference-area measure and sum to 1/2.

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct QuadratureRule {
    pub degree: usize,
    pub points: Vec<[f64; 2]>,
    pub weights: Vec<f64>,
}

impl QuadratureRule {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Approximates `∫ f` over the reference triangle.
    pub fn integrate(&self, f: impl Fn(f64, f64) -> f64) -> f64 {
        self.points
            .iter()
            .zip(&self.weights)
            .map(|(p, w)| w * f(p[0], p[1]))
            .sum()
    }
}

/// Builds the point set of one symmetry orbit given barycentric coordinates.
fn orbit(out: &mut QuadratureRule, bary: [f64; 3], weight: f64) {
    let [a, b, c] = bary;
    // Permutations that coincide collapse (orbits of size 1 or 3).
    let mut unique: Vec<[f64; 2]> = Vec::new();
    for p in [[b, c], [c, a], [a, b], [c, b], [a, c], [b, a]] {
        if !unique.contains(&p) {
            unique.push(p);
        }
    }
    for p in unique {
        out.points.push(p);
        out.weights.push(0.5 * weight);
    }
}

fn rule(degree: usize, orbits: &[([f64; 3], f64)]) -> QuadratureRule {
    let mut q = QuadratureRule {
        degree,
        points: Vec::new(),
        weights: Vec::new(),
    };
    for &(bary, w) in orbits {
        orbit(&mut q, bary, w);
    }
    q
}

/// Smallest shipped rule exact for polynomials of total degree `min_degree`.
pub fn quadrature_rule(min_degree: usize) -> Result<QuadratureRule> {
    let third = 1.0 / 3.0;
    match min_degree {
        1 => Ok(rule(1, &[([third, third, third], 1.0)])),
        2 => Ok(rule(2, &[([2.0 / 3.0, 1.0 / 6.0, 1.0 / 6.0], 1.0 / 3.0)])),
        3 => Ok(rule(
            3,
            // Strang-Fix six-point rule.
            &[(
                [0.659_027_622_374_092, 0.231_933_368_553_031, 0.109_039_009_072_877],
                1.0 / 6.0,
            )],
        )),
        4 => {
            let (a1, w1) = (0.445_948_490_915_965, 0.223_381_589_678_011);
            let (a2, w2) = (0.091_576_213_509_771, 0.109_951_743_655_322);
            Ok(rule(
                4,
                &[
                    ([1.0 - 2.0 * a1, a1, a1], w1),
                    ([1.0 - 2.0 * a2, a2, a2], w2),
                ],
            ))
        }
        5 => {
            let s = 15f64.sqrt();
            let (a1, a2) = ((6.0 - s) / 21.0, (6.0 + s) / 21.0);
            Ok(rule(
                5,
                &[
                    ([third, third, third], 9.0 / 40.0),
                    ([1.0 - 2.0 * a1, a1, a1], (155.0 - s) / 1200.0),
                    ([1.0 - 2.0 * a2, a2, a2], (155.0 + s) / 1200.0),
                ],
            ))
        }
        d => Err(Error::invalid(format!(
            "quadrature degree must be in 1..=5, got {d}"
        ))),
    }
}
