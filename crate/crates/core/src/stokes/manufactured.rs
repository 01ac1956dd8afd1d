//! Load vectors, discrete error norms and the polynomial stream-function
//! solution used to check source-problem convergence.

use serde::{Deserialize, Serialize};

use super::FieldValues;
use crate::error::Result;
use crate::fe::{element_jacobian, quadrature_rule, DofMap, FieldKind, Tabulation};
use crate::mesh::{Mesh, Point2};

/// Pointwise values of an exact solution. `velocity_gradient[c][d]` is
/// `∂_d u_c`; stress is stored as `(σ11, σ12, σ22)`.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ExactFields {
    pub velocity: [f64; 2],
    pub velocity_gradient: [[f64; 2]; 2],
    pub pressure: f64,
    pub stress: [f64; 3],
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorNorms {
    pub velocity_l2: f64,
    /// `‖∇(u − u_h)‖`.
    pub velocity_h1: f64,
    /// Both pressures are compared with their means removed.
    pub pressure_l2: f64,
    pub stress_l2: Option<f64>,
}

impl ErrorNorms {
    /// Velocity H¹ plus pressure L², plus stress L² when present.
    pub fn combined(&self) -> f64 {
        self.velocity_h1 + self.pressure_l2 + self.stress_l2.unwrap_or(0.0)
    }
}

/// `(f, v_h)` for every velocity test function; zero in the other rows.
pub fn load_vector(mesh: &Mesh, dofs: &DofMap, f: &dyn Fn(Point2) -> [f64; 2]) -> Result<Vec<f64>> {
    let tab = Tabulation::new(dofs.order(), quadrature_rule(5)?);
    let mut b = vec![0.0; dofs.total_dofs()];
    for k in 0..mesh.triangle_count() {
        let map = element_jacobian(mesh, k)?;
        for (q, (&xi, &wq)) in tab.rule.points.iter().zip(&tab.rule.weights).enumerate() {
            let fx = f(map.map(xi));
            let w = wq * map.det;
            for (i, phi) in tab.values[q].iter().enumerate() {
                for (c, fc) in fx.iter().enumerate() {
                    b[dofs.cell_dof(FieldKind::Velocity, k, i, c)] += w * fc * phi;
                }
            }
        }
    }
    Ok(b)
}

struct Sample {
    u: [f64; 2],
    grad: [[f64; 2]; 2],
    p: f64,
    s: [f64; 3],
}

fn sample(values: &FieldValues, nodes: &[usize], phi: &[f64], g: &[[f64; 2]]) -> Sample {
    let mut out = Sample {
        u: [0.0; 2],
        grad: [[0.0; 2]; 2],
        p: 0.0,
        s: [0.0; 3],
    };
    for (i, &n) in nodes.iter().enumerate() {
        for c in 0..2 {
            let v = values.velocity[c][n];
            out.u[c] += v * phi[i];
            out.grad[c][0] += v * g[i][0];
            out.grad[c][1] += v * g[i][1];
        }
        out.p += values.pressure[n] * phi[i];
        if let Some(s) = &values.stress {
            for c in 0..3 {
                out.s[c] += s[c][n] * phi[i];
            }
        }
    }
    out
}

pub fn field_errors(
    mesh: &Mesh,
    dofs: &DofMap,
    values: &FieldValues,
    exact: &dyn Fn(Point2) -> ExactFields,
) -> Result<ErrorNorms> {
    let tab = Tabulation::new(dofs.order(), quadrature_rule(5)?);
    let nl = dofs.order().node_count();
    let mut g = vec![[0.0; 2]; nl];
    // Pass 1: means of both pressures.
    let (mut area, mut mean_h, mut mean_e) = (0.0, 0.0, 0.0);
    for k in 0..mesh.triangle_count() {
        let map = element_jacobian(mesh, k)?;
        let nodes = dofs.space().cell(k);
        for (q, (&xi, &wq)) in tab.rule.points.iter().zip(&tab.rule.weights).enumerate() {
            let w = wq * map.det;
            let ph: f64 = nodes.iter().zip(&tab.values[q]).map(|(&n, f)| values.pressure[n] * f).sum();
            area += w;
            mean_h += w * ph;
            mean_e += w * exact(map.map(xi)).pressure;
        }
    }
    mean_h /= area;
    mean_e /= area;

    let (mut eu, mut eg, mut ep, mut es) = (0.0, 0.0, 0.0, 0.0);
    for k in 0..mesh.triangle_count() {
        let map = element_jacobian(mesh, k)?;
        let nodes = dofs.space().cell(k);
        for (q, (&xi, &wq)) in tab.rule.points.iter().zip(&tab.rule.weights).enumerate() {
            let w = wq * map.det;
            for (i, rg) in tab.gradients[q].iter().enumerate() {
                g[i] = map.grad(*rg);
            }
            let h = sample(values, nodes, &tab.values[q], &g);
            let e = exact(map.map(xi));
            for c in 0..2 {
                eu += w * (h.u[c] - e.velocity[c]).powi(2);
                for d in 0..2 {
                    eg += w * (h.grad[c][d] - e.velocity_gradient[c][d]).powi(2);
                }
            }
            ep += w * ((h.p - mean_h) - (e.pressure - mean_e)).powi(2);
            for (c, wc) in [1.0, 2.0, 1.0].iter().enumerate() {
                es += w * wc * (h.s[c] - e.stress[c]).powi(2);
            }
        }
    }
    Ok(ErrorNorms {
        velocity_l2: eu.sqrt(),
        velocity_h1: eg.sqrt(),
        pressure_l2: ep.sqrt(),
        stress_l2: values.stress.as_ref().map(|_| es.sqrt()),
    })
}

/// `u = curl ψ` with `ψ = x²(1−x)²y²(1−y)²` on the unit square (zero on the
/// boundary, divergence free), `p = x − 1/2` and `σ = 2μ∇ˢu`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StreamFunctionSolution {
    pub mu: f64,
}

/// `s²(1−s)²` and its first three derivatives.
fn bump(s: f64) -> [f64; 4] {
    [
        s * s * (1.0 - s) * (1.0 - s),
        2.0 * s - 6.0 * s * s + 4.0 * s * s * s,
        2.0 - 12.0 * s + 12.0 * s * s,
        -12.0 + 24.0 * s,
    ]
}

impl StreamFunctionSolution {
    pub fn exact(&self, p: Point2) -> ExactFields {
        let (x, y) = (bump(p.x), bump(p.y));
        let u = [x[0] * y[1], -x[1] * y[0]];
        let grad = [[x[1] * y[1], x[0] * y[2]], [-x[2] * y[0], -x[1] * y[1]]];
        let mu = self.mu;
        ExactFields {
            velocity: u,
            velocity_gradient: grad,
            pressure: p.x - 0.5,
            stress: [
                2.0 * mu * grad[0][0],
                mu * (grad[0][1] + grad[1][0]),
                2.0 * mu * grad[1][1],
            ],
        }
    }

    /// `f = −μΔu + ∇p`, which equals `−∇·σ + ∇p` for divergence-free `u`.
    pub fn load(&self, p: Point2) -> [f64; 2] {
        let (x, y) = (bump(p.x), bump(p.y));
        let lap = [x[2] * y[1] + x[0] * y[3], -x[3] * y[0] - x[1] * y[2]];
        [-self.mu * lap[0] + 1.0, -self.mu * lap[1]]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stream_function_fields_are_consistent() {
        let s = StreamFunctionSolution { mu: 1.5 };
        let h = 1e-5;
        for &(x, y) in &[(0.3, 0.7), (0.55, 0.2), (0.9, 0.45)] {
            let e = s.exact(Point2::new(x, y));
            let div = e.velocity_gradient[0][0] + e.velocity_gradient[1][1];
            assert!(div.abs() < 1e-14);
            // Central differences of u against the analytic gradient.
            for d in 0..2 {
                let (dx, dy) = if d == 0 { (h, 0.0) } else { (0.0, h) };
                let up = s.exact(Point2::new(x + dx, y + dy)).velocity;
                let um = s.exact(Point2::new(x - dx, y - dy)).velocity;
                for c in 0..2 {
                    let fd = (up[c] - um[c]) / (2.0 * h);
                    assert!((fd - e.velocity_gradient[c][d]).abs() < 1e-8);
                }
            }
            // Laplacian through second differences.
            let lap = |c: usize| {
                let at = |a: f64, b: f64| s.exact(Point2::new(a, b)).velocity[c];
                let h = 1e-3;
                (at(x + h, y) + at(x - h, y) + at(x, y + h) + at(x, y - h) - 4.0 * at(x, y)) / (h * h)
            };
            let f = s.load(Point2::new(x, y));
            assert!((f[0] - (-1.5 * lap(0) + 1.0)).abs() < 1e-5);
            assert!((f[1] - (-1.5 * lap(1))).abs() < 1e-5);
        }
        let b = s.exact(Point2::new(0.0, 0.4));
        assert_eq!(b.velocity, [0.0, 0.0]);
    }
}
