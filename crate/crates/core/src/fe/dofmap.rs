use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::Order;
use crate::error::{Error, Result};
use crate::mesh::{Mesh, Point2};

/// Continuous scalar Lagrange space: vertex nodes first, then (P2) one node
/// per unique edge in [`crate::mesh::Topology`] order.
#[derive(Clone, Debug)]
pub struct ScalarSpace {
    pub order: Order,
    node_points: Vec<Point2>,
    cell_nodes: Vec<usize>,
    boundary_nodes: BTreeSet<usize>,
}

impl ScalarSpace {
    pub fn new(mesh: &Mesh, order: Order) -> Self {
        let nl = order.node_count();
        let mut node_points = mesh.vertices().to_vec();
        let mut cell_nodes = Vec::with_capacity(nl * mesh.triangle_count());
        let mut boundary_nodes = mesh.boundary_vertices().clone();
        match order {
            Order::P1 => {
                for t in mesh.triangles() {
                    cell_nodes.extend(t.v);
                }
            }
            Order::P2 => {
                let topo = mesh.topology();
                let nv = mesh.vertex_count();
                for (e, &[a, b]) in topo.edges.iter().enumerate() {
                    let (pa, pb) = (mesh.vertices()[a], mesh.vertices()[b]);
                    node_points.push(Point2::new(0.5 * (pa.x + pb.x), 0.5 * (pa.y + pb.y)));
                    if topo.is_boundary_edge(e) {
                        boundary_nodes.insert(nv + e);
                    }
                }
                for (t, edges) in mesh.triangles().iter().zip(&topo.triangle_edges) {
                    cell_nodes.extend(t.v);
                    cell_nodes.extend(edges.iter().map(|e| nv + e));
                }
            }
        }
        ScalarSpace {
            order,
            node_points,
            cell_nodes,
            boundary_nodes,
        }
    }

    pub fn node_count(&self) -> usize {
        self.node_points.len()
    }

    pub fn node_points(&self) -> &[Point2] {
        &self.node_points
    }

    /// Global node indices of triangle `k` in local node order.
    pub fn cell(&self, k: usize) -> &[usize] {
        let nl = self.order.node_count();
        &self.cell_nodes[k * nl..(k + 1) * nl]
    }

    pub fn cell_count(&self) -> usize {
        self.cell_nodes.len() / self.order.node_count()
    }

    pub fn boundary_nodes(&self) -> &BTreeSet<usize> {
        &self.boundary_nodes
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldKind {
    Velocity,
    Pressure,
    Stress,
}

impl FieldKind {
    pub fn components(self) -> usize {
        match self {
            FieldKind::Velocity => 2,
            FieldKind::Pressure => 1,
            FieldKind::Stress => 3,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FieldSpec {
    pub kind: FieldKind,
    pub components: usize,
    pub order: Order,
}

impl FieldSpec {
    pub fn new(kind: FieldKind, order: Order) -> Self {
        FieldSpec {
            kind,
            components: kind.components(),
            order,
        }
    }
}

/// Global numbering: field-major, then component, then scalar node, i.e.
/// `offset(field) + component * node_count + node`.
#[derive(Clone, Debug)]
pub struct DofMap {
    space: ScalarSpace,
    fields: Vec<FieldSpec>,
    offsets: Vec<usize>,
    total_dofs: usize,
    dirichlet_dofs: Vec<usize>,
    pinned_pressure_dof: Option<usize>,
}

pub fn build_dof_map(mesh: &Mesh, layout: &[FieldSpec]) -> Result<DofMap> {
    let Some(first) = layout.first() else {
        return Err(Error::invalid("dof layout has no fields"));
    };
    let order = first.order;
    let mut seen = BTreeSet::new();
    for f in layout {
        if f.order != order {
            return Err(Error::invalid("all fields must share one interpolation order"));
        }
        if f.components != f.kind.components() {
            return Err(Error::invalid(format!(
                "{:?} field needs {} components, got {}",
                f.kind,
                f.kind.components(),
                f.components
            )));
        }
        if !seen.insert(f.kind as u8) {
            return Err(Error::invalid(format!("field {:?} listed twice", f.kind)));
        }
    }
    let space = ScalarSpace::new(mesh, order);
    let nn = space.node_count();
    let mut offsets = Vec::with_capacity(layout.len());
    let mut total = 0;
    for f in layout {
        offsets.push(total);
        total += f.components * nn;
    }

    let mut dirichlet_dofs = Vec::new();
    let mut pinned_pressure_dof = None;
    for (f, &off) in layout.iter().zip(&offsets) {
        match f.kind {
            FieldKind::Velocity => {
                for c in 0..f.components {
                    dirichlet_dofs.extend(space.boundary_nodes().iter().map(|&b| off + c * nn + b));
                }
            }
            FieldKind::Pressure => {
                let pin = pinned_vertex(mesh);
                pinned_pressure_dof = Some(off + pin);
            }
            FieldKind::Stress => {}
        }
    }
    dirichlet_dofs.sort_unstable();

    Ok(DofMap {
        space,
        fields: layout.to_vec(),
        offsets,
        total_dofs: total,
        dirichlet_dofs,
        pinned_pressure_dof,
    })
}

/// Vertex with the lowest `y`, ties broken by lowest `x`.
fn pinned_vertex(mesh: &Mesh) -> usize {
    let v = mesh.vertices();
    (0..v.len())
        .min_by(|&a, &b| v[a].y.total_cmp(&v[b].y).then(v[a].x.total_cmp(&v[b].x)))
        .expect("mesh has vertices")
}

impl DofMap {
    pub fn space(&self) -> &ScalarSpace {
        &self.space
    }

    pub fn order(&self) -> Order {
        self.space.order
    }

    pub fn fields(&self) -> &[FieldSpec] {
        &self.fields
    }

    pub fn total_dofs(&self) -> usize {
        self.total_dofs
    }

    pub fn node_count(&self) -> usize {
        self.space.node_count()
    }

    pub fn dirichlet_dofs(&self) -> &[usize] {
        &self.dirichlet_dofs
    }

    pub fn pinned_pressure_dof(&self) -> Option<usize> {
        self.pinned_pressure_dof
    }

    /// Dofs removed from the unknowns: Dirichlet velocity plus the pinned pressure.
    pub fn constrained_dofs(&self) -> Vec<usize> {
        let mut c = self.dirichlet_dofs.clone();
        c.extend(self.pinned_pressure_dof);
        c.sort_unstable();
        c
    }

    pub fn field_index(&self, kind: FieldKind) -> Option<usize> {
        self.fields.iter().position(|f| f.kind == kind)
    }

    /// Offset of the first dof of `kind`.
    pub fn offset(&self, kind: FieldKind) -> Option<usize> {
        self.field_index(kind).map(|i| self.offsets[i])
    }

    pub fn field_range(&self, kind: FieldKind) -> Option<std::ops::Range<usize>> {
        let i = self.field_index(kind)?;
        let start = self.offsets[i];
        Some(start..start + self.fields[i].components * self.node_count())
    }

    pub fn dof(&self, kind: FieldKind, component: usize, node: usize) -> usize {
        let i = self.field_index(kind).expect("field present in layout");
        debug_assert!(component < self.fields[i].components && node < self.node_count());
        self.offsets[i] + component * self.node_count() + node
    }

    /// Global dof of `(triangle, local node, component)` in field `kind`.
    pub fn cell_dof(&self, kind: FieldKind, triangle: usize, local: usize, component: usize) -> usize {
        self.dof(kind, component, self.space.cell(triangle)[local])
    }

    /// Mesh node owning a dof, used to group unknowns by location.
    pub fn node_of(&self, dof: usize) -> usize {
        dof % self.node_count()
    }
}
