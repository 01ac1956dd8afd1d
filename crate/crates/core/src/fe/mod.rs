//! Lagrange P1/P2 elements on triangles, quadrature and degree-of-freedom maps.

mod dofmap;
mod quadrature;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::{Mesh, Point2};

pub use dofmap::{build_dof_map, DofMap, FieldKind, FieldSpec, ScalarSpace};
pub use quadrature::{quadrature_rule, QuadratureRule};

/// Polynomial order of the (equal-order) Lagrange interpolation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum Order {
    P1,
    P2,
}

impl Order {
    pub fn degree(self) -> usize {
        match self {
            Order::P1 => 1,
            Order::P2 => 2,
        }
    }

    /// Local nodes per triangle: vertices, then for P2 the midpoints of the
    /// local edges (0,1), (1,2), (2,0).
    pub fn node_count(self) -> usize {
        match self {
            Order::P1 => 3,
            Order::P2 => 6,
        }
    }
}

impl TryFrom<u8> for Order {
    type Error = Error;

    fn try_from(v: u8) -> Result<Self> {
        match v {
            1 => Ok(Order::P1),
            2 => Ok(Order::P2),
            _ => Err(Error::invalid(format!("element order must be 1 or 2, got {v}"))),
        }
    }
}

impl From<Order> for u8 {
    fn from(o: Order) -> u8 {
        o.degree() as u8
    }
}

impl std::fmt::Display for Order {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "P{}", self.degree())
    }
}

/// Reference nodes in the local order used by [`reference_basis`].
pub fn reference_nodes(order: Order) -> Vec<[f64; 2]> {
    let mut nodes = vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]];
    if order == Order::P2 {
        nodes.extend([[0.5, 0.0], [0.5, 0.5], [0.0, 0.5]]);
    }
    nodes
}

#[derive(Clone, Debug, PartialEq)]
pub struct BasisEval {
    pub values: Vec<f64>,
    /// Gradients with respect to the reference coordinates (ξ, η).
    pub gradients: Vec<[f64; 2]>,
}

pub fn reference_basis(order: Order, point: [f64; 2]) -> Result<BasisEval> {
    let [xi, eta] = point;
    let l = [1.0 - xi - eta, xi, eta];
    if l.iter().any(|&c| c < -1e-12) || !xi.is_finite() || !eta.is_finite() {
        return Err(Error::invalid(format!(
            "point ({xi}, {eta}) lies outside the reference triangle"
        )));
    }
    let dl = [[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]];
    let eval = match order {
        Order::P1 => BasisEval {
            values: l.to_vec(),
            gradients: dl.to_vec(),
        },
        Order::P2 => {
            let mut values = Vec::with_capacity(6);
            let mut gradients = Vec::with_capacity(6);
            for i in 0..3 {
                values.push(l[i] * (2.0 * l[i] - 1.0));
                let s = 4.0 * l[i] - 1.0;
                gradients.push([s * dl[i][0], s * dl[i][1]]);
            }
            for (i, j) in [(0, 1), (1, 2), (2, 0)] {
                values.push(4.0 * l[i] * l[j]);
                gradients.push([
                    4.0 * (l[i] * dl[j][0] + l[j] * dl[i][0]),
                    4.0 * (l[i] * dl[j][1] + l[j] * dl[i][1]),
                ]);
            }
            BasisEval { values, gradients }
        }
    };
    Ok(eval)
}

/// Basis values and reference gradients at every point of a quadrature rule.
#[derive(Clone, Debug)]
pub struct Tabulation {
    pub order: Order,
    pub rule: QuadratureRule,
    pub values: Vec<Vec<f64>>,
    pub gradients: Vec<Vec<[f64; 2]>>,
}

impl Tabulation {
    pub fn new(order: Order, rule: QuadratureRule) -> Self {
        let (values, gradients) = rule
            .points
            .iter()
            .map(|&p| {
                let e = reference_basis(order, p).expect("quadrature points are inside");
                (e.values, e.gradients)
            })
            .unzip();
        Tabulation {
            order,
            rule,
            values,
            gradients,
        }
    }
}

/// Affine map `x = p0 + J ξ` of one triangle.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ElementMap {
    pub origin: Point2,
    pub jacobian: [[f64; 2]; 2],
    pub inverse_transpose: [[f64; 2]; 2],
    pub det: f64,
}

impl ElementMap {
    pub fn from_corners(p: [Point2; 3]) -> Result<Self> {
        let j = [[p[1].x - p[0].x, p[2].x - p[0].x], [p[1].y - p[0].y, p[2].y - p[0].y]];
        let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
        let scale = (j[0][0].abs() + j[0][1].abs() + j[1][0].abs() + j[1][1].abs()).powi(2);
        if !(det > 1e-14 * scale) {
            return Err(Error::Geometry(format!(
                "degenerate or inverted triangle (det {det:e})"
            )));
        }
        let inverse_transpose = [[j[1][1] / det, -j[1][0] / det], [-j[0][1] / det, j[0][0] / det]];
        Ok(ElementMap {
            origin: p[0],
            jacobian: j,
            inverse_transpose,
            det,
        })
    }

    pub fn map(&self, xi: [f64; 2]) -> Point2 {
        let j = &self.jacobian;
        Point2::new(
            self.origin.x + j[0][0] * xi[0] + j[0][1] * xi[1],
            self.origin.y + j[1][0] * xi[0] + j[1][1] * xi[1],
        )
    }

    /// Physical gradient `J^{-T} ∇_ξ φ`.
    pub fn grad(&self, g: [f64; 2]) -> [f64; 2] {
        let a = &self.inverse_transpose;
        [a[0][0] * g[0] + a[0][1] * g[1], a[1][0] * g[0] + a[1][1] * g[1]]
    }
}

pub fn element_jacobian(mesh: &Mesh, triangle: usize) -> Result<ElementMap> {
    if triangle >= mesh.triangle_count() {
        return Err(Error::invalid(format!(
            "triangle index {triangle} out of range ({} triangles)",
            mesh.triangle_count()
        )));
    }
    ElementMap::from_corners(mesh.corners(triangle))
}
