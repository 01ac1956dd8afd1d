//! Orthogonal-subscale stabilized Stokes pencils.
//!
//! Every operator is composed from a handful of scalar matrices on the shared
//! Lagrange space (mass, first-derivative and gradient-pairing matrices).
//! Each stabilization term `Σ_K α_K (P⊥g, P⊥g')_K` is kept sparse by carrying
//! the L² projection of the derived quantity `g` as extra unknowns. These
//! carry no mass, so they only add infinite eigenvalues to the pencil, and
//! eliminating them reproduces the projected form exactly.

pub mod manufactured;
pub mod three_field;
pub mod two_field;

use nalgebra::DMatrix;

use crate::eigsolve::{shift_invert_arnoldi_grouped, EigenOptions, EigenSolution};
use crate::error::{Error, Result};
use crate::fe::{element_jacobian, quadrature_rule, DofMap, FieldKind, ScalarSpace, Tabulation};
use crate::mesh::{Mesh, Point2};
use crate::sparse::{assemble_csr, lu_factor_grouped, Block, CsrMatrix};

pub use manufactured::{field_errors, load_vector, ErrorNorms, ExactFields};

/// Scalar matrices on one Lagrange space, optionally weighted per element:
/// `mass[i][j] = ∫ w φ_i φ_j`, `deriv[c][i][j] = ∫ w φ_i ∂_c φ_j`,
/// `grad[c][d][i][j] = ∫ w ∂_c φ_i ∂_d φ_j`.
#[derive(Clone, Debug)]
pub struct ScalarOperators {
    pub mass: CsrMatrix,
    pub deriv: [CsrMatrix; 2],
    pub grad: [[CsrMatrix; 2]; 2],
}

impl ScalarOperators {
    pub fn stiffness(&self) -> Result<CsrMatrix> {
        self.grad[0][0].add_scaled(&self.grad[1][1], 1.0)
    }
}

pub fn scalar_operators(mesh: &Mesh, space: &ScalarSpace, weights: Option<&[f64]>) -> Result<ScalarOperators> {
    if let Some(w) = weights {
        if w.len() != mesh.triangle_count() {
            return Err(Error::dims(format!(
                "{} element weights for {} triangles",
                w.len(),
                mesh.triangle_count()
            )));
        }
    }
    let nn = space.node_count();
    let nl = space.order.node_count();
    let tab = Tabulation::new(space.order, quadrature_rule(2 * space.order.degree())?);
    let cap = mesh.triangle_count() * nl * nl;
    let mut mass = Vec::with_capacity(cap);
    let mut deriv: [Vec<(usize, usize, f64)>; 2] = [Vec::with_capacity(cap), Vec::with_capacity(cap)];
    let mut grad: [[Vec<(usize, usize, f64)>; 2]; 2] = Default::default();
    let mut g = vec![[0.0; 2]; nl];
    let mut loc_m = vec![0.0; nl * nl];
    let mut loc_d = [vec![0.0; nl * nl], vec![0.0; nl * nl]];
    let mut loc_g = [[vec![0.0; nl * nl], vec![0.0; nl * nl]], [vec![0.0; nl * nl], vec![0.0; nl * nl]]];
    for k in 0..mesh.triangle_count() {
        let map = element_jacobian(mesh, k)?;
        let wk = weights.map_or(1.0, |w| w[k]);
        loc_m.fill(0.0);
        loc_d.iter_mut().for_each(|m| m.fill(0.0));
        loc_g.iter_mut().flatten().for_each(|m| m.fill(0.0));
        for (q, &wq) in tab.rule.weights.iter().enumerate() {
            let w = wq * map.det * wk;
            for (i, rg) in tab.gradients[q].iter().enumerate() {
                g[i] = map.grad(*rg);
            }
            let phi = &tab.values[q];
            for i in 0..nl {
                for j in 0..nl {
                    let ij = i * nl + j;
                    loc_m[ij] += w * phi[i] * phi[j];
                    for c in 0..2 {
                        loc_d[c][ij] += w * phi[i] * g[j][c];
                        for d in 0..2 {
                            loc_g[c][d][ij] += w * g[i][c] * g[j][d];
                        }
                    }
                }
            }
        }
        let nodes = space.cell(k);
        for i in 0..nl {
            for j in 0..nl {
                let (gi, gj, ij) = (nodes[i], nodes[j], i * nl + j);
                mass.push((gi, gj, loc_m[ij]));
                for c in 0..2 {
                    deriv[c].push((gi, gj, loc_d[c][ij]));
                    for d in 0..2 {
                        grad[c][d].push((gi, gj, loc_g[c][d][ij]));
                    }
                }
            }
        }
    }
    let [d0, d1] = deriv;
    let [[g00, g01], [g10, g11]] = grad;
    Ok(ScalarOperators {
        mass: assemble_csr(nn, nn, mass)?,
        deriv: [assemble_csr(nn, nn, d0)?, assemble_csr(nn, nn, d1)?],
        grad: [
            [assemble_csr(nn, nn, g00)?, assemble_csr(nn, nn, g01)?],
            [assemble_csr(nn, nn, g10)?, assemble_csr(nn, nn, g11)?],
        ],
    })
}

/// `coef · ∂_derivative` of one scalar component of a field.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Term {
    pub field: FieldKind,
    pub component: usize,
    pub derivative: usize,
    pub coef: f64,
}

impl Term {
    pub fn new(field: FieldKind, component: usize, derivative: usize, coef: f64) -> Self {
        Term {
            field,
            component,
            derivative,
            coef,
        }
    }
}

/// A vector- or tensor-valued quantity built from first derivatives of the
/// unknowns. Each component carries an inner-product weight (2 for the
/// off-diagonal entry of a symmetric tensor).
#[derive(Clone, Debug, PartialEq)]
pub struct DerivedQuantity {
    pub components: Vec<(f64, Vec<Term>)>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Alpha {
    Uniform(f64),
    PerElement(Vec<f64>),
}

impl Alpha {
    /// Collapses element values that are all equal to a uniform coefficient.
    pub fn from_elements(values: Vec<f64>) -> Alpha {
        let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if values.is_empty() {
            Alpha::Uniform(0.0)
        } else if hi - lo <= 1e-12 * hi.abs() {
            Alpha::Uniform(values[0])
        } else {
            Alpha::PerElement(values)
        }
    }

    fn is_zero(&self) -> bool {
        match self {
            Alpha::Uniform(a) => *a == 0.0,
            Alpha::PerElement(v) => v.iter().all(|a| *a == 0.0),
        }
    }
}

/// `Σ_K α_K (P⊥g, P⊥g')_K` for one derived quantity `g`, with `P` the L²
/// projection onto the continuous space of the unknowns.
#[derive(Clone, Debug, PartialEq)]
pub struct Stabilization {
    pub quantity: DerivedQuantity,
    pub alpha: Alpha,
}

/// `h_K` as the longest edge of every triangle.
pub fn element_sizes(mesh: &Mesh) -> Vec<f64> {
    (0..mesh.triangle_count()).map(|k| mesh.diameter(k)).collect()
}

#[derive(Clone, Copy, Debug)]
enum Op {
    Mass,
    Deriv(usize),
    Grad(usize, usize),
}

#[derive(Clone, Copy, Debug)]
struct BlockSpec {
    row: usize,
    col: usize,
    /// `None` for the unweighted operators, otherwise an index into the
    /// builder's weighted operator sets.
    source: Option<usize>,
    op: Op,
    scale: f64,
    transpose: bool,
}

/// Collects scalar blocks of `A` and `M` over the field unknowns followed by
/// auxiliary projection unknowns.
pub(crate) struct PencilBuilder<'a> {
    mesh: &'a Mesh,
    dofs: DofMap,
    ops: ScalarOperators,
    weighted: Vec<ScalarOperators>,
    a: Vec<BlockSpec>,
    m: Vec<BlockSpec>,
    aux_blocks: usize,
}

impl<'a> PencilBuilder<'a> {
    pub fn new(mesh: &'a Mesh, dofs: DofMap) -> Result<Self> {
        let ops = scalar_operators(mesh, dofs.space(), None)?;
        Ok(PencilBuilder {
            mesh,
            dofs,
            ops,
            weighted: Vec::new(),
            a: Vec::new(),
            m: Vec::new(),
            aux_blocks: 0,
        })
    }

    fn offset(&self, field: FieldKind, component: usize) -> usize {
        self.dofs.dof(field, component, 0)
    }

    fn aux_offset(&self, block: usize) -> usize {
        self.dofs.total_dofs() + block * self.dofs.node_count()
    }

    fn push_a(&mut self, row: usize, col: usize, source: Option<usize>, op: Op, scale: f64, transpose: bool) {
        self.a.push(BlockSpec {
            row,
            col,
            source,
            op,
            scale,
            transpose,
        });
    }

    pub fn galerkin_mass(&mut self, row: (FieldKind, usize), col: (FieldKind, usize), scale: f64) {
        let (r, c) = (self.offset(row.0, row.1), self.offset(col.0, col.1));
        self.push_a(r, c, None, Op::Mass, scale, false);
    }

    /// `scale · ∫ φ_i ∂_d φ_j` with `i` in the row field and `j` in the column
    /// field; `transpose` places `∫ ∂_d φ_i φ_j` instead.
    pub fn galerkin_deriv(&mut self, row: (FieldKind, usize), col: (FieldKind, usize), d: usize, scale: f64, transpose: bool) {
        let (r, c) = (self.offset(row.0, row.1), self.offset(col.0, col.1));
        self.push_a(r, c, None, Op::Deriv(d), scale, transpose);
    }

    pub fn galerkin_grad(&mut self, row: (FieldKind, usize), col: (FieldKind, usize), c: usize, d: usize, scale: f64) {
        let (r, cc) = (self.offset(row.0, row.1), self.offset(col.0, col.1));
        self.push_a(r, cc, None, Op::Grad(c, d), scale, false);
    }

    pub fn velocity_mass(&mut self) {
        for c in 0..2 {
            let o = self.offset(FieldKind::Velocity, c);
            self.m.push(BlockSpec {
                row: o,
                col: o,
                source: None,
                op: Op::Mass,
                scale: 1.0,
                transpose: false,
            });
        }
    }

    pub fn stabilize(&mut self, stab: &Stabilization) -> Result<()> {
        if stab.alpha.is_zero() {
            return Ok(());
        }
        match &stab.alpha {
            Alpha::Uniform(alpha) => {
                for (w, terms) in &stab.quantity.components {
                    let y = self.aux_offset(self.aux_blocks);
                    self.aux_blocks += 1;
                    let s = w * alpha;
                    for t in terms {
                        let rt = self.offset(t.field, t.component);
                        for u in terms {
                            let cu = self.offset(u.field, u.component);
                            self.push_a(rt, cu, None, Op::Grad(t.derivative, u.derivative), s * t.coef * u.coef, false);
                        }
                        self.push_a(rt, y, None, Op::Deriv(t.derivative), -s * t.coef, true);
                        self.push_a(y, rt, None, Op::Deriv(t.derivative), -s * t.coef, false);
                    }
                    self.push_a(y, y, None, Op::Mass, s, false);
                }
            }
            Alpha::PerElement(values) => {
                let src = Some(self.weighted.len());
                self.weighted.push(scalar_operators(self.mesh, self.dofs.space(), Some(values))?);
                for (w, terms) in &stab.quantity.components {
                    let y = self.aux_offset(self.aux_blocks);
                    let z = self.aux_offset(self.aux_blocks + 1);
                    self.aux_blocks += 2;
                    for t in terms {
                        let rt = self.offset(t.field, t.component);
                        for u in terms {
                            let cu = self.offset(u.field, u.component);
                            self.push_a(rt, cu, src, Op::Grad(t.derivative, u.derivative), w * t.coef * u.coef, false);
                        }
                        self.push_a(rt, y, src, Op::Deriv(t.derivative), -w * t.coef, true);
                        self.push_a(rt, z, None, Op::Deriv(t.derivative), -w * t.coef, true);
                        self.push_a(y, rt, src, Op::Deriv(t.derivative), -w * t.coef, false);
                        self.push_a(z, rt, None, Op::Deriv(t.derivative), -w * t.coef, false);
                    }
                    self.push_a(y, y, src, Op::Mass, *w, false);
                    self.push_a(y, z, None, Op::Mass, *w, false);
                    self.push_a(z, y, None, Op::Mass, *w, false);
                }
            }
        }
        Ok(())
    }

    fn resolve<'s>(&'s self, specs: &[BlockSpec]) -> Vec<Block<'s>> {
        specs
            .iter()
            .map(|b| {
                let ops = b.source.map_or(&self.ops, |i| &self.weighted[i]);
                let matrix = match b.op {
                    Op::Mass => &ops.mass,
                    Op::Deriv(d) => &ops.deriv[d],
                    Op::Grad(c, d) => &ops.grad[c][d],
                };
                Block {
                    row: b.row,
                    col: b.col,
                    matrix,
                    scale: b.scale,
                    transpose: b.transpose,
                }
            })
            .collect()
    }

    pub fn finish(self) -> Result<StokesSystem> {
        let n = self.aux_offset(self.aux_blocks);
        let a = CsrMatrix::from_blocks(n, n, &self.resolve(&self.a))?;
        let m = CsrMatrix::from_blocks(n, n, &self.resolve(&self.m))?;
        let constrained = self.dofs.constrained_dofs();
        let mut fixed = vec![false; n];
        constrained.iter().for_each(|&d| fixed[d] = true);
        let free = (0..n).filter(|&i| !fixed[i]).collect();
        let aux_dofs = n - self.dofs.total_dofs();
        Ok(StokesSystem {
            a,
            m,
            dofs: self.dofs,
            aux_dofs,
            free,
        })
    }
}

/// Assembled pencil over the field unknowns followed by the auxiliary
/// projection unknowns, before constraints are applied.
#[derive(Clone, Debug)]
pub struct StokesSystem {
    pub a: CsrMatrix,
    pub m: CsrMatrix,
    pub dofs: DofMap,
    pub aux_dofs: usize,
    free: Vec<usize>,
}

impl StokesSystem {
    pub fn field_dofs(&self) -> usize {
        self.dofs.total_dofs()
    }

    pub fn unknowns(&self) -> usize {
        self.a.rows()
    }

    /// Unknowns kept after Dirichlet elimination and pressure pinning.
    pub fn free_dofs(&self) -> &[usize] {
        &self.free
    }

    /// Free field unknowns, i.e. the size of the constrained system proper.
    pub fn free_field_dofs(&self) -> usize {
        let nf = self.field_dofs();
        self.free.iter().filter(|&&i| i < nf).count()
    }

    pub fn reduced(&self) -> Result<(CsrMatrix, CsrMatrix)> {
        Ok((self.a.submatrix(&self.free, &self.free)?, self.m.submatrix(&self.free, &self.free)?))
    }

    /// Mesh node of each free unknown; all unknowns at one node form a group.
    pub fn groups(&self) -> Vec<usize> {
        let nn = self.dofs.node_count();
        self.free.iter().map(|&i| i % nn).collect()
    }

    /// Scatters a vector over the free unknowns to all field unknowns,
    /// with zeros at constrained dofs; auxiliary values are dropped.
    pub fn expand(&self, reduced: &[f64]) -> Vec<f64> {
        let nf = self.field_dofs();
        let mut full = vec![0.0; nf];
        for (&i, &v) in self.free.iter().zip(reduced) {
            if i < nf {
                full[i] = v;
            }
        }
        full
    }

    /// Dense operator over all field unknowns with the auxiliary unknowns
    /// eliminated: Galerkin part plus the projected stabilization.
    pub fn condensed(&self) -> Result<DMatrix<f64>> {
        let nf = self.field_dofs();
        let n = self.unknowns();
        if n > 6000 {
            return Err(Error::invalid(format!("dense condensation limited to 6000 unknowns, got {n}")));
        }
        let d = self.a.to_dense();
        let axx = d.view((0, 0), (nf, nf)).into_owned();
        if n == nf {
            return Ok(axx);
        }
        let na = n - nf;
        let axa = d.view((0, nf), (nf, na)).into_owned();
        let aax = d.view((nf, 0), (na, nf)).into_owned();
        let aaa = d.view((nf, nf), (na, na)).into_owned();
        let x = aaa
            .lu()
            .solve(&aax)
            .ok_or_else(|| Error::AssemblyBug("projection block is singular".into()))?;
        Ok(axx - axa * x)
    }
}

/// Per-node values of each field, split by component.
#[derive(Clone, Debug, PartialEq)]
pub struct FieldValues {
    pub velocity: [Vec<f64>; 2],
    pub pressure: Vec<f64>,
    pub stress: Option<[Vec<f64>; 3]>,
}

impl FieldValues {
    pub fn from_vector(dofs: &DofMap, v: &[f64]) -> Result<Self> {
        if v.len() != dofs.total_dofs() {
            return Err(Error::dims(format!("vector of {} for {} dofs", v.len(), dofs.total_dofs())));
        }
        let nn = dofs.node_count();
        let part = |kind: FieldKind, c: usize| {
            let o = dofs.dof(kind, c, 0);
            v[o..o + nn].to_vec()
        };
        Ok(FieldValues {
            velocity: [part(FieldKind::Velocity, 0), part(FieldKind::Velocity, 1)],
            pressure: part(FieldKind::Pressure, 0),
            stress: dofs.field_index(FieldKind::Stress).map(|_| {
                [
                    part(FieldKind::Stress, 0),
                    part(FieldKind::Stress, 1),
                    part(FieldKind::Stress, 2),
                ]
            }),
        })
    }
}

/// Eigenpairs of a Stokes pencil with vectors over all field unknowns.
#[derive(Clone, Debug)]
pub struct Modes {
    pub solution: EigenSolution,
    pub fields: Vec<FieldValues>,
}

impl Modes {
    pub fn eigenvalues(&self) -> Vec<f64> {
        self.solution.eigenvalues()
    }
}

/// Residual tolerance of the Stokes eigensolves.
pub const EIGEN_TOL: f64 = 1e-10;

/// Shifts tried in turn when `A − σM` cannot be factorized.
const SHIFTS: [f64; 3] = [0.0, -1e-2, -1.0];

/// The `k` smallest eigenvalues by shift-invert Arnoldi. Vectors are
/// re-expanded to all field unknowns and scaled to unit length.
pub fn solve_eigs(system: &StokesSystem, k: usize, tol: f64) -> Result<Modes> {
    let (a, m) = system.reduced()?;
    let groups = system.groups();
    let mut last = None;
    for sigma in SHIFTS {
        let opts = EigenOptions {
            sigma,
            k,
            tol,
            max_restarts: 300,
            subspace: None,
        };
        match shift_invert_arnoldi_grouped(&a, &m, Some(&groups), &opts) {
            Ok(mut solution) => {
                let mut fields = Vec::with_capacity(k);
                for pair in &mut solution.pairs {
                    if !(pair.lambda > 0.0) {
                        return Err(Error::SpectralAnomaly {
                            re: pair.lambda,
                            im: 0.0,
                        });
                    }
                    let mut v = system.expand(&pair.vector);
                    let s = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                    v.iter_mut().for_each(|x| *x /= s);
                    fields.push(FieldValues::from_vector(&system.dofs, &v)?);
                    pair.vector = v;
                }
                return Ok(Modes { solution, fields });
            }
            Err(e @ Error::ShiftRejected { .. }) => last = Some(e),
            Err(e) => return Err(e),
        }
    }
    Err(last.expect("at least one shift tried"))
}

/// Solves `A x = rhs` on the free unknowns; `rhs` spans the field unknowns
/// and is ignored at constrained dofs.
pub fn solve_source(system: &StokesSystem, rhs: &[f64]) -> Result<Vec<f64>> {
    if rhs.len() != system.field_dofs() {
        return Err(Error::dims(format!("load of {} for {} dofs", rhs.len(), system.field_dofs())));
    }
    let (a, _) = system.reduced()?;
    let b: Vec<f64> = system
        .free_dofs()
        .iter()
        .map(|&i| if i < rhs.len() { rhs[i] } else { 0.0 })
        .collect();
    let lu = lu_factor_grouped(&a, &system.groups()).map_err(|e| match e {
        Error::SingularMatrix { .. } => Error::AssemblyBug(format!("constrained source system is singular: {e}")),
        e => e,
    })?;
    Ok(system.expand(&lu.solve(&b)?))
}

/// The stabilization matrix of one term over all field unknowns of `dofs`,
/// with the projection eliminated densely; meant for small meshes.
pub fn weighted_orthogonal_stab(mesh: &Mesh, dofs: &DofMap, stab: &Stabilization) -> Result<CsrMatrix> {
    let mut b = PencilBuilder::new(mesh, dofs.clone())?;
    b.stabilize(stab)?;
    let s = b.finish()?.condensed()?;
    Ok(CsrMatrix::from_dense(&s, 0.0))
}

/// Node coordinates of the shared scalar space.
pub fn node_points(dofs: &DofMap) -> &[Point2] {
    dofs.space().node_points()
}
