//! Stress-velocity-pressure formulation. The stress is stored as
//! `(σ11, σ12, σ22)`; tensor inner products count the off-diagonal entry
//! twice. Stabilization acts on `∇ˢu` (weight `α3 = 2μc3`), on `∇·u`
//! (`α4 = 2μc4`) and on `∇p − ∇·σ` (`α5K = c5 h_K²/μ`) through one shared
//! projection.

use serde::{Deserialize, Serialize};

use super::{
    element_sizes, load_vector, solve_eigs, solve_source, two_field::divergence_term, Alpha, DerivedQuantity,
    FieldValues, Modes, PencilBuilder, Stabilization, StokesSystem, Term,
};
use crate::error::{Error, Result};
use crate::fe::{build_dof_map, FieldKind, FieldSpec, Order};
use crate::mesh::{Mesh, Point2};
use crate::sparse::lu_factor;

const U: FieldKind = FieldKind::Velocity;
const P: FieldKind = FieldKind::Pressure;
const S: FieldKind = FieldKind::Stress;

/// Inner-product weights of the stored stress components.
pub const STRESS_WEIGHTS: [f64; 3] = [1.0, 2.0, 1.0];

/// `(velocity component, stress component, derivative)` with
/// `∇ˢv : σ = Σ ∂_d v_c σ_s` over these triples.
const STRAIN_PAIRS: [(usize, usize, usize); 4] = [(0, 0, 0), (0, 1, 1), (1, 1, 0), (1, 2, 1)];

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThreeFieldParams {
    pub mu: f64,
    pub c3: f64,
    pub c4: f64,
    pub c5: f64,
}

impl Default for ThreeFieldParams {
    fn default() -> Self {
        ThreeFieldParams {
            mu: 1.0,
            c3: 1.0,
            c4: 0.1,
            c5: 0.25,
        }
    }
}

impl ThreeFieldParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.mu > 0.0 && self.mu.is_finite()) {
            return Err(Error::invalid(format!("viscosity must be positive, got {}", self.mu)));
        }
        if !(self.c3 >= 0.0 && self.c4 >= 0.0 && self.c5 >= 0.0) {
            return Err(Error::invalid("stabilization constants must be nonnegative"));
        }
        Ok(())
    }
}

pub fn layout(order: Order) -> Vec<FieldSpec> {
    vec![FieldSpec::new(U, order), FieldSpec::new(P, order), FieldSpec::new(S, order)]
}

pub fn strain_term(alpha: f64) -> Stabilization {
    Stabilization {
        quantity: DerivedQuantity {
            components: vec![
                (STRESS_WEIGHTS[0], vec![Term::new(U, 0, 0, 1.0)]),
                (STRESS_WEIGHTS[1], vec![Term::new(U, 0, 1, 0.5), Term::new(U, 1, 0, 0.5)]),
                (STRESS_WEIGHTS[2], vec![Term::new(U, 1, 1, 1.0)]),
            ],
        },
        alpha: Alpha::Uniform(alpha),
    }
}

/// `∇p − ∇·σ`, one quantity so that both parts share the projection.
pub fn momentum_term(mesh: &Mesh, params: &ThreeFieldParams) -> Stabilization {
    let alpha = element_sizes(mesh).iter().map(|h| params.c5 * h * h / params.mu).collect();
    Stabilization {
        quantity: DerivedQuantity {
            components: vec![
                (
                    1.0,
                    vec![Term::new(P, 0, 0, 1.0), Term::new(S, 0, 0, -1.0), Term::new(S, 1, 1, -1.0)],
                ),
                (
                    1.0,
                    vec![Term::new(P, 0, 1, 1.0), Term::new(S, 1, 0, -1.0), Term::new(S, 2, 1, -1.0)],
                ),
            ],
        },
        alpha: Alpha::from_elements(alpha),
    }
}

pub fn assemble_three_field(mesh: &Mesh, order: Order, params: &ThreeFieldParams) -> Result<StokesSystem> {
    params.validate()?;
    let dofs = build_dof_map(mesh, &layout(order))?;
    let mut b = PencilBuilder::new(mesh, dofs)?;
    for c in 0..2 {
        b.galerkin_deriv((U, c), (P, 0), c, -1.0, true);
        b.galerkin_deriv((P, 0), (U, c), c, 1.0, false);
    }
    for (vc, sc, d) in STRAIN_PAIRS {
        // (∇ˢv, σ) and −(∇ˢu, τ).
        b.galerkin_deriv((U, vc), (S, sc), d, 1.0, true);
        b.galerkin_deriv((S, sc), (U, vc), d, -1.0, false);
    }
    for (sc, w) in STRESS_WEIGHTS.iter().enumerate() {
        b.galerkin_mass((S, sc), (S, sc), w / (2.0 * params.mu));
    }
    b.stabilize(&strain_term(2.0 * params.mu * params.c3))?;
    b.stabilize(&divergence_term(2.0 * params.mu * params.c4))?;
    b.stabilize(&momentum_term(mesh, params))?;
    b.velocity_mass();
    b.finish()
}

pub fn solve_three_field_eigs(mesh: &Mesh, order: Order, params: &ThreeFieldParams, k: usize) -> Result<Modes> {
    solve_eigs(&assemble_three_field(mesh, order, params)?, k, super::EIGEN_TOL)
}

pub fn solve_three_field_source(
    mesh: &Mesh,
    order: Order,
    params: &ThreeFieldParams,
    f: &dyn Fn(Point2) -> [f64; 2],
) -> Result<FieldValues> {
    let system = assemble_three_field(mesh, order, params)?;
    let rhs = load_vector(mesh, &system.dofs, f)?;
    FieldValues::from_vector(&system.dofs, &solve_source(&system, &rhs)?)
}

/// `‖σ_h − Π(2μ∇ˢu_h)‖ / ‖σ_h‖` with `Π` the L² projection onto the stress
/// space.
pub fn constitutive_defect(mesh: &Mesh, order: Order, mu: f64, fields: &FieldValues) -> Result<f64> {
    let stress = fields
        .stress
        .as_ref()
        .ok_or_else(|| Error::invalid("fields carry no stress"))?;
    let space = crate::fe::ScalarSpace::new(mesh, order);
    if stress[0].len() != space.node_count() {
        return Err(Error::dims("stress values do not match the mesh"));
    }
    let ops = super::scalar_operators(mesh, &space, None)?;
    let lu = lu_factor(&ops.mass)?;
    let (mut num, mut den) = (0.0, 0.0);
    for (sc, w) in STRESS_WEIGHTS.iter().enumerate() {
        // Moments ∫ φ_i · 2μ (∇ˢu_h)_sc.
        let mut moment = vec![0.0; space.node_count()];
        for (vc, s2, d) in STRAIN_PAIRS {
            if s2 != sc {
                continue;
            }
            let scale = if sc == 1 { mu } else { 2.0 * mu };
            let du = ops.deriv[d].matvec(&fields.velocity[vc])?;
            moment.iter_mut().zip(&du).for_each(|(m, v)| *m += scale * v);
        }
        let proj = lu.solve(&moment)?;
        let diff: Vec<f64> = stress[sc].iter().zip(&proj).map(|(a, b)| a - b).collect();
        let md = ops.mass.matvec(&diff)?;
        let ms = ops.mass.matvec(&stress[sc])?;
        num += w * diff.iter().zip(&md).map(|(a, b)| a * b).sum::<f64>();
        den += w * stress[sc].iter().zip(&ms).map(|(a, b)| a * b).sum::<f64>();
    }
    Ok((num / den).sqrt())
}
