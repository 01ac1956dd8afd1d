//! Velocity-pressure formulation: viscous and divergence Galerkin terms plus
//! orthogonal-subscale terms on `∇p` (weight `α1K = c1 h_K²/μ`) and on `∇·u`
//! (weight `α2 = c2 μ`).

use serde::{Deserialize, Serialize};

use super::{
    element_sizes, load_vector, solve_eigs, solve_source, Alpha, DerivedQuantity, FieldValues, Modes, PencilBuilder,
    Stabilization, StokesSystem, Term,
};
use crate::error::{Error, Result};
use crate::fe::{build_dof_map, FieldKind, FieldSpec, Order};
use crate::mesh::{Mesh, Point2};

const U: FieldKind = FieldKind::Velocity;
const P: FieldKind = FieldKind::Pressure;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TwoFieldParams {
    pub mu: f64,
    pub c1: f64,
    pub c2: f64,
}

impl Default for TwoFieldParams {
    fn default() -> Self {
        TwoFieldParams {
            mu: 1.0,
            c1: 0.25,
            c2: 0.1,
        }
    }
}

impl TwoFieldParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.mu > 0.0 && self.mu.is_finite()) {
            return Err(Error::invalid(format!("viscosity must be positive, got {}", self.mu)));
        }
        if !(self.c1 >= 0.0 && self.c2 >= 0.0) {
            return Err(Error::invalid("stabilization constants must be nonnegative"));
        }
        Ok(())
    }
}

pub fn layout(order: Order) -> Vec<FieldSpec> {
    vec![FieldSpec::new(U, order), FieldSpec::new(P, order)]
}

pub fn pressure_gradient_term(mesh: &Mesh, params: &TwoFieldParams) -> Stabilization {
    let alpha = element_sizes(mesh).iter().map(|h| params.c1 * h * h / params.mu).collect();
    Stabilization {
        quantity: DerivedQuantity {
            components: vec![(1.0, vec![Term::new(P, 0, 0, 1.0)]), (1.0, vec![Term::new(P, 0, 1, 1.0)])],
        },
        alpha: Alpha::from_elements(alpha),
    }
}

pub fn divergence_term(alpha: f64) -> Stabilization {
    Stabilization {
        quantity: DerivedQuantity {
            components: vec![(1.0, vec![Term::new(U, 0, 0, 1.0), Term::new(U, 1, 1, 1.0)])],
        },
        alpha: Alpha::Uniform(alpha),
    }
}

pub fn assemble_two_field(mesh: &Mesh, order: Order, params: &TwoFieldParams) -> Result<StokesSystem> {
    params.validate()?;
    let dofs = build_dof_map(mesh, &layout(order))?;
    let mut b = PencilBuilder::new(mesh, dofs)?;
    for c in 0..2 {
        b.galerkin_grad((U, c), (U, c), 0, 0, params.mu);
        b.galerkin_grad((U, c), (U, c), 1, 1, params.mu);
        // −(p, ∇·v) and (q, ∇·u).
        b.galerkin_deriv((U, c), (P, 0), c, -1.0, true);
        b.galerkin_deriv((P, 0), (U, c), c, 1.0, false);
    }
    b.stabilize(&pressure_gradient_term(mesh, params))?;
    b.stabilize(&divergence_term(params.c2 * params.mu))?;
    b.velocity_mass();
    b.finish()
}

pub fn solve_two_field_eigs(mesh: &Mesh, order: Order, params: &TwoFieldParams, k: usize) -> Result<Modes> {
    solve_eigs(&assemble_two_field(mesh, order, params)?, k, super::EIGEN_TOL)
}

pub fn solve_two_field_source(
    mesh: &Mesh,
    order: Order,
    params: &TwoFieldParams,
    f: &dyn Fn(Point2) -> [f64; 2],
) -> Result<FieldValues> {
    let system = assemble_two_field(mesh, order, params)?;
    let rhs = load_vector(mesh, &system.dofs, f)?;
    FieldValues::from_vector(&system.dofs, &solve_source(&system, &rhs)?)
}
