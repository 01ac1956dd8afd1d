//! Eigenvector field files and legacy ASCII VTK output.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fe::{Order, ScalarSpace};
use crate::mesh::Mesh;
use crate::stokes::FieldValues;

pub const FIELD_SCHEMA_VERSION: u32 = 1;

/// One mode's nodal values. Node numbering is that of the scalar Lagrange
/// space of `order` on the mesh the mode was computed on.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FieldDocument {
    pub schema_version: u32,
    pub order: Order,
    pub mode: usize,
    pub lambda: f64,
    pub residual: f64,
    pub velocity: [Vec<f64>; 2],
    pub pressure: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stress: Option<[Vec<f64>; 3]>,
}

impl FieldDocument {
    pub fn new(order: Order, mode: usize, lambda: f64, residual: f64, fields: &FieldValues) -> Self {
        FieldDocument {
            schema_version: FIELD_SCHEMA_VERSION,
            order,
            mode,
            lambda,
            residual,
            velocity: fields.velocity.clone(),
            pressure: fields.pressure.clone(),
            stress: fields.stress.clone(),
        }
    }

    pub fn fields(&self) -> FieldValues {
        FieldValues {
            velocity: self.velocity.clone(),
            pressure: self.pressure.clone(),
            stress: self.stress.clone(),
        }
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, serde_json::to_string(self)?)?;
        Ok(())
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let doc: FieldDocument = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        if doc.schema_version != FIELD_SCHEMA_VERSION {
            return Err(Error::Parse(format!("unsupported field schema_version {}", doc.schema_version)));
        }
        Ok(doc)
    }

    /// File name of mode `mode` under `prefix`.
    pub fn path_for(prefix: &str, mode: usize) -> String {
        format!("{prefix}_mode{mode}.json")
    }
}

/// Sub-triangles of a P2 element over its local nodes.
const P2_SPLIT: [[usize; 3]; 4] = [[0, 3, 5], [3, 1, 4], [5, 4, 2], [3, 4, 5]];

/// Legacy VTK unstructured grid with the velocity as vectors and pressure
/// and stress components as scalars. P2 fields are written on the 4-way
/// refined mesh whose vertices are the P2 nodes.
pub fn vtk_string(mesh: &Mesh, order: Order, fields: &FieldValues) -> Result<String> {
    let space = ScalarSpace::new(mesh, order);
    let nn = space.node_count();
    let sizes_ok = fields.velocity.iter().all(|v| v.len() == nn)
        && fields.pressure.len() == nn
        && fields.stress.as_ref().is_none_or(|s| s.iter().all(|v| v.len() == nn));
    if !sizes_ok {
        return Err(Error::dims(format!("field values do not match the {nn} nodes of the {order} space")));
    }
    let cells: Vec<[usize; 3]> = match order {
        Order::P1 => mesh.triangles().iter().map(|t| t.v).collect(),
        Order::P2 => (0..mesh.triangle_count())
            .flat_map(|k| {
                let c = space.cell(k);
                P2_SPLIT.map(|s| s.map(|i| c[i]))
            })
            .collect(),
    };

    let mut out = String::new();
    out.push_str("# vtk DataFile Version 3.0\nosstokes fields\nASCII\nDATASET UNSTRUCTURED_GRID\n");
    let _ = writeln!(out, "POINTS {nn} double");
    for p in space.node_points() {
        let _ = writeln!(out, "{} {} 0", p.x, p.y);
    }
    let _ = writeln!(out, "CELLS {} {}", cells.len(), 4 * cells.len());
    for c in &cells {
        let _ = writeln!(out, "3 {} {} {}", c[0], c[1], c[2]);
    }
    let _ = writeln!(out, "CELL_TYPES {}", cells.len());
    for _ in &cells {
        out.push_str("5\n");
    }
    let _ = writeln!(out, "POINT_DATA {nn}");
    out.push_str("VECTORS velocity double\n");
    for i in 0..nn {
        let _ = writeln!(out, "{} {} 0", fields.velocity[0][i], fields.velocity[1][i]);
    }
    let mut scalars = |name: &str, values: &[f64]| {
        let _ = writeln!(out, "SCALARS {name} double 1\nLOOKUP_TABLE default");
        for v in values {
            let _ = writeln!(out, "{v}");
        }
    };
    scalars("pressure", &fields.pressure);
    if let Some(s) = &fields.stress {
        scalars("stress_xx", &s[0]);
        scalars("stress_xy", &s[1]);
        scalars("stress_yy", &s[2]);
    }
    Ok(out)
}

pub fn write_vtk(path: impl AsRef<Path>, mesh: &Mesh, order: Order, fields: &FieldValues) -> Result<()> {
    std::fs::write(path, vtk_string(mesh, order, fields)?)?;
    Ok(())
}
