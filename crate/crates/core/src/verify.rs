//! Oracles that do not go through the Stokes assembly: the scalar Dirichlet
//! Laplacian, a dense generalized eigensolver for small pencils, and the
//! published reference tables kept as fixtures.

use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::eigsolve::shift_invert_arnoldi;
use crate::error::{Error, Result};
use crate::fe::{Order, ScalarSpace};
use crate::mesh::unit_square_mesh;
use crate::stokes::scalar_operators;

/// Largest pencil handled by [`dense_cross_check`].
pub const DENSE_LIMIT: usize = 600;

/// Smallest Dirichlet eigenvalue of `−Δ` on the unit square with scalar
/// Lagrange elements on the structured `n × n` mesh.
pub fn laplacian_oracle(n: usize, order: Order) -> Result<f64> {
    if n < 4 {
        return Err(Error::invalid(format!("laplacian_oracle needs n >= 4, got {n}")));
    }
    let mesh = unit_square_mesh(n)?;
    let space = ScalarSpace::new(&mesh, order);
    let ops = scalar_operators(&mesh, &space, None)?;
    let interior: Vec<usize> = (0..space.node_count())
        .filter(|i| !space.boundary_nodes().contains(i))
        .collect();
    let k = ops.stiffness()?.submatrix(&interior, &interior)?;
    let m = ops.mass.submatrix(&interior, &interior)?;
    let s = shift_invert_arnoldi(&k, &m, 0.0, 1, 1e-12, 100)?;
    Ok(s.pairs[0].lambda)
}

/// Finite eigenvalues of `A x = λ M x` for invertible `A` and symmetric
/// positive-semidefinite `M`, smallest real part first, at most `k` of them.
/// With `M = L Lᵀ` over the range of `M`, the nonzero eigenvalues of
/// `Lᵀ A⁻¹ L` are the reciprocals of the finite `λ`.
pub fn dense_cross_check(a: &DMatrix<f64>, m: &DMatrix<f64>, k: usize) -> Result<Vec<f64>> {
    let n = a.nrows();
    if a.ncols() != n || m.nrows() != n || m.ncols() != n {
        return Err(Error::dims("pencil matrices must be square and of equal size"));
    }
    if n > DENSE_LIMIT {
        return Err(Error::invalid(format!("dense cross-check limited to {DENSE_LIMIT} unknowns, got {n}")));
    }
    let eig = m.clone().symmetric_eigen();
    let scale = eig.eigenvalues.amax();
    let range: Vec<usize> = (0..n).filter(|&i| eig.eigenvalues[i] > 1e-12 * scale).collect();
    if range.is_empty() {
        return Err(Error::invalid("mass matrix is zero; the pencil has no finite eigenvalues"));
    }
    let mut l = eig.eigenvectors.select_columns(&range);
    for (j, &i) in range.iter().enumerate() {
        l.column_mut(j).scale_mut(eig.eigenvalues[i].sqrt());
    }
    let x = a
        .clone()
        .lu()
        .solve(&l)
        .ok_or_else(|| Error::invalid("dense cross-check needs an invertible A"))?;
    let s = l.transpose() * x;
    let thetas = s.complex_eigenvalues();
    let top = thetas.iter().map(|t| t.norm()).fold(0.0, f64::max);
    let mut values: Vec<f64> = thetas
        .iter()
        .filter(|t| t.norm() > 1e-8 * top)
        .map(|t| (1.0 / t).re)
        .collect();
    values.sort_by(f64::total_cmp);
    values.truncate(k);
    Ok(values)
}

/// One published reference table: sizes, values and where they come from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Fixture {
    pub name: String,
    /// Table locator plus one row of it as transcribed.
    pub citation: String,
    pub reference: Option<f64>,
    pub eigen_index: Option<usize>,
    /// Mesh size of each value.
    pub sizes: Vec<usize>,
    pub values: Vec<f64>,
    /// Relative tolerance for computed values; absent where digits are not
    /// expected to match.
    pub tolerance: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FixtureFile {
    pub fixtures: Vec<Fixture>,
}

impl FixtureFile {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let file: FixtureFile = serde_json::from_str(&text)?;
        for f in &file.fixtures {
            if f.citation.trim().is_empty() {
                return Err(Error::Parse(format!("fixture {} has no citation", f.name)));
            }
            if f.sizes.len() != f.values.len() {
                return Err(Error::Parse(format!("fixture {} has mismatched sizes and values", f.name)));
            }
        }
        Ok(file)
    }

    pub fn get(&self, name: &str) -> Result<&Fixture> {
        self.fixtures
            .iter()
            .find(|f| f.name == name)
            .ok_or_else(|| Error::invalid(format!("no fixture named {name}")))
    }
}
