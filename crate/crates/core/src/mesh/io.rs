//! JSON mesh documents. Coordinates are written with the shortest decimal
//! representation that parses back to the same `f64`, so a write/read cycle is
//! bit-exact.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{DomainTag, Mesh, Point2, Triangle};
use crate::error::{Error, Result};

pub const MESH_SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MeshDocument {
    pub schema_version: u32,
    pub domain_tag: DomainTag,
    pub vertices: Vec<[f64; 2]>,
    pub triangles: Vec<[usize; 3]>,
    pub boundary_vertices: Vec<usize>,
}

impl From<&Mesh> for MeshDocument {
    fn from(mesh: &Mesh) -> Self {
        MeshDocument {
            schema_version: MESH_SCHEMA_VERSION,
            domain_tag: mesh.domain_tag(),
            vertices: mesh.vertices().iter().map(|p| [p.x, p.y]).collect(),
            triangles: mesh.triangles().iter().map(|t| t.v).collect(),
            boundary_vertices: mesh.boundary_vertices().iter().copied().collect(),
        }
    }
}

impl TryFrom<MeshDocument> for Mesh {
    type Error = Error;

    fn try_from(doc: MeshDocument) -> Result<Mesh> {
        if doc.schema_version != MESH_SCHEMA_VERSION {
            return Err(Error::Parse(format!(
                "unsupported mesh schema_version {}",
                doc.schema_version
            )));
        }
        Mesh::new(
            doc.vertices.into_iter().map(|[x, y]| Point2::new(x, y)).collect(),
            doc.triangles.into_iter().map(|v| Triangle { v }).collect(),
            doc.boundary_vertices.into_iter().collect(),
            doc.domain_tag,
        )
    }
}

pub fn mesh_to_string(mesh: &Mesh) -> String {
    serde_json::to_string_pretty(&MeshDocument::from(mesh)).expect("mesh serializes")
}

pub fn mesh_from_str(text: &str) -> Result<Mesh> {
    let doc: MeshDocument = serde_json::from_str(text)?;
    Mesh::try_from(doc)
}

pub fn write_mesh(mesh: &Mesh, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, mesh_to_string(mesh))?;
    Ok(())
}

pub fn read_mesh(path: impl AsRef<Path>) -> Result<Mesh> {
    mesh_from_str(&std::fs::read_to_string(path)?)
}
