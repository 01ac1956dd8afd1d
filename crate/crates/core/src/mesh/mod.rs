//! Triangulations of the benchmark domains.
//!
//! Three generators are provided: the unit square, the L-shaped domain
//! `[-1,1]^2 \ [0,1]^2` and the unit square with a straight crack running from
//! the corner `(0,0)` to the centre. All structured cells are split along the
//! lower-left to upper-right diagonal.

mod cracked;
mod io;

use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use cracked::cracked_square_mesh;
pub use io::{mesh_from_str, mesh_to_string, read_mesh, write_mesh, MeshDocument, MESH_SCHEMA_VERSION};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Point2 { x, y }
    }

    pub fn dist(&self, other: &Point2) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// Vertex indices of a counter-clockwise triangle.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Triangle {
    pub v: [usize; 3],
}

impl Triangle {
    pub const fn new(a: usize, b: usize, c: usize) -> Self {
        Triangle { v: [a, b, c] }
    }

    /// Local edges in the order (0,1), (1,2), (2,0).
    pub fn edges(&self) -> [(usize, usize); 3] {
        let [a, b, c] = self.v;
        [(a, b), (b, c), (c, a)]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DomainTag {
    Square,
    #[serde(alias = "lshape")]
    LShape,
    #[serde(alias = "cracked")]
    CrackedSquare,
}

impl DomainTag {
    pub fn area(&self) -> f64 {
        match self {
            DomainTag::Square | DomainTag::CrackedSquare => 1.0,
            DomainTag::LShape => 3.0,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            DomainTag::Square => "square",
            DomainTag::LShape => "lshape",
            DomainTag::CrackedSquare => "cracked",
        }
    }
}

impl std::str::FromStr for DomainTag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "square" => Ok(DomainTag::Square),
            "lshape" | "l_shape" => Ok(DomainTag::LShape),
            "cracked" | "cracked_square" => Ok(DomainTag::CrackedSquare),
            other => Err(Error::invalid(format!("unknown domain '{other}'"))),
        }
    }
}

/// A validated triangulation.
#[derive(Clone, Debug, PartialEq)]
pub struct Mesh {
    vertices: Vec<Point2>,
    triangles: Vec<Triangle>,
    boundary_vertices: BTreeSet<usize>,
    h_max: f64,
    domain_tag: DomainTag,
}

pub(crate) fn signed_area(a: &Point2, b: &Point2, c: &Point2) -> f64 {
    0.5 * ((b.x - a.x) * (c.y - a.y) - (c.x - a.x) * (b.y - a.y))
}

fn longest_edge(p: [&Point2; 3]) -> f64 {
    p[0].dist(p[1]).max(p[1].dist(p[2])).max(p[2].dist(p[0]))
}

impl Mesh {
    /// Builds a mesh and checks orientation, index ranges, edge manifoldness and
    /// that every topological boundary edge has both endpoints tagged.
    pub fn new(
        vertices: Vec<Point2>,
        triangles: Vec<Triangle>,
        boundary_vertices: BTreeSet<usize>,
        domain_tag: DomainTag,
    ) -> Result<Self> {
        let nv = vertices.len();
        if let Some(p) = vertices.iter().find(|p| !p.x.is_finite() || !p.y.is_finite()) {
            return Err(Error::Geometry(format!("non-finite vertex {p:?}")));
        }
        if triangles.is_empty() {
            return Err(Error::Geometry("mesh has no triangles".into()));
        }
        for (k, t) in triangles.iter().enumerate() {
            let [a, b, c] = t.v;
            if a >= nv || b >= nv || c >= nv {
                return Err(Error::Geometry(format!("triangle {k} has out-of-range vertex")));
            }
            if a == b || b == c || a == c {
                return Err(Error::Geometry(format!("triangle {k} repeats a vertex")));
            }
            let area = signed_area(&vertices[a], &vertices[b], &vertices[c]);
            if area <= 0.0 {
                return Err(Error::Geometry(format!(
                    "triangle {k} is not positively oriented (area {area:e})"
                )));
            }
        }
        if let Some(&b) = boundary_vertices.iter().find(|&&b| b >= nv) {
            return Err(Error::Geometry(format!("boundary vertex {b} out of range")));
        }

        // Directed edges must be unique; an undirected edge carries at most two triangles.
        let mut directed: HashMap<(usize, usize), usize> = HashMap::with_capacity(3 * triangles.len());
        for (k, t) in triangles.iter().enumerate() {
            for e in t.edges() {
                if directed.insert(e, k).is_some() {
                    return Err(Error::Geometry(format!(
                        "edge {e:?} appears twice with the same orientation"
                    )));
                }
            }
        }
        for &(a, b) in directed.keys() {
            if !directed.contains_key(&(b, a))
                && (!boundary_vertices.contains(&a) || !boundary_vertices.contains(&b))
            {
                return Err(Error::Geometry(format!(
                    "boundary edge ({a},{b}) has an untagged endpoint"
                )));
            }
        }

        let h_max = triangles
            .iter()
            .map(|t| longest_edge([&vertices[t.v[0]], &vertices[t.v[1]], &vertices[t.v[2]]]))
            .fold(0.0, f64::max);

        Ok(Mesh {
            vertices,
            triangles,
            boundary_vertices,
            h_max,
            domain_tag,
        })
    }

    pub fn vertices(&self) -> &[Point2] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[Triangle] {
        &self.triangles
    }

    pub fn boundary_vertices(&self) -> &BTreeSet<usize> {
        &self.boundary_vertices
    }

    pub fn h_max(&self) -> f64 {
        self.h_max
    }

    pub fn domain_tag(&self) -> DomainTag {
        self.domain_tag
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn triangle_count(&self) -> usize {
        self.triangles.len()
    }

    pub fn corners(&self, k: usize) -> [Point2; 3] {
        let t = &self.triangles[k];
        [
            self.vertices[t.v[0]],
            self.vertices[t.v[1]],
            self.vertices[t.v[2]],
        ]
    }

    pub fn area(&self, k: usize) -> f64 {
        let [a, b, c] = self.corners(k);
        signed_area(&a, &b, &c)
    }

    /// Longest edge of triangle `k`.
    pub fn diameter(&self, k: usize) -> f64 {
        let [a, b, c] = self.corners(k);
        longest_edge([&a, &b, &c])
    }

    pub fn topology(&self) -> Topology {
        Topology::build(self)
    }
}

/// Unique edges and the triangle-to-edge incidence.
#[derive(Clone, Debug)]
pub struct Topology {
    /// Edges as sorted vertex pairs, numbered in order of first appearance.
    pub edges: Vec<[usize; 2]>,
    /// For each triangle, the edge ids of its local edges (0,1), (1,2), (2,0).
    pub triangle_edges: Vec<[usize; 3]>,
    /// Number of triangles sharing each edge (1 on the boundary, 2 inside).
    pub edge_valence: Vec<u8>,
}

impl Topology {
    fn build(mesh: &Mesh) -> Self {
        let mut index: HashMap<[usize; 2], usize> = HashMap::with_capacity(2 * mesh.triangle_count());
        let mut edges = Vec::new();
        let mut valence = Vec::new();
        let mut triangle_edges = Vec::with_capacity(mesh.triangle_count());
        for t in mesh.triangles() {
            let mut ids = [0; 3];
            for (slot, (a, b)) in t.edges().into_iter().enumerate() {
                let key = [a.min(b), a.max(b)];
                let id = *index.entry(key).or_insert_with(|| {
                    edges.push(key);
                    valence.push(0u8);
                    edges.len() - 1
                });
                valence[id] += 1;
                ids[slot] = id;
            }
            triangle_edges.push(ids);
        }
        Topology {
            edges,
            triangle_edges,
            edge_valence: valence,
        }
    }

    pub fn is_boundary_edge(&self, e: usize) -> bool {
        self.edge_valence[e] == 1
    }

    /// `V - E + F` counting triangles only; 1 for a triangulated disk.
    pub fn euler_characteristic(&self, vertex_count: usize) -> i64 {
        vertex_count as i64 - self.edges.len() as i64 + self.triangle_edges.len() as i64
    }
}

/// Vertices touched by a topological boundary edge.
pub(crate) fn boundary_from_topology(vertices: usize, triangles: &[Triangle]) -> BTreeSet<usize> {
    let mut count: HashMap<[usize; 2], u8> = HashMap::with_capacity(2 * triangles.len());
    for t in triangles {
        for (a, b) in t.edges() {
            *count.entry([a.min(b), a.max(b)]).or_default() += 1;
        }
    }
    let set: BTreeSet<usize> = count
        .into_iter()
        .filter(|&(_, c)| c == 1)
        .flat_map(|(e, _)| e)
        .collect();
    debug_assert!(set.iter().all(|&v| v < vertices));
    set
}

/// Structured grid of the unit square with `n` cells per side.
pub fn unit_square_mesh(n: usize) -> Result<Mesh> {
    if n == 0 {
        return Err(Error::invalid("unit_square_mesh needs n >= 1"));
    }
    let nf = n as f64;
    let idx = |i: usize, j: usize| j * (n + 1) + i;
    let vertices = (0..=n)
        .flat_map(|j| (0..=n).map(move |i| Point2::new(i as f64 / nf, j as f64 / nf)))
        .collect::<Vec<_>>();
    let mut triangles = Vec::with_capacity(2 * n * n);
    for j in 0..n {
        for i in 0..n {
            split_cell(&mut triangles, idx(i, j), idx(i + 1, j), idx(i, j + 1), idx(i + 1, j + 1));
        }
    }
    let boundary = boundary_from_topology(vertices.len(), &triangles);
    Mesh::new(vertices, triangles, boundary, DomainTag::Square)
}

/// Cell with corners `ll, lr, ul, ur` split along the `ll`-`ur` diagonal.
pub(crate) fn split_cell(out: &mut Vec<Triangle>, ll: usize, lr: usize, ul: usize, ur: usize) {
    out.push(Triangle::new(ll, lr, ur));
    out.push(Triangle::new(ll, ur, ul));
}

/// Structured L-shape `[-1,1]^2 \ [0,1]^2` with `n` cells per unit edge.
pub fn l_shaped_mesh(n: usize) -> Result<Mesh> {
    if n == 0 {
        return Err(Error::invalid("l_shaped_mesh needs n >= 1"));
    }
    let m = 2 * n;
    let nf = n as f64;
    let mut id = vec![usize::MAX; (m + 1) * (m + 1)];
    let mut vertices = Vec::with_capacity((m + 1) * (m + 1) - n * n);
    for j in 0..=m {
        for i in 0..=m {
            if i > n && j > n {
                continue;
            }
            id[j * (m + 1) + i] = vertices.len();
            vertices.push(Point2::new((i as f64 - nf) / nf, (j as f64 - nf) / nf));
        }
    }
    let at = |i: usize, j: usize| id[j * (m + 1) + i];
    let mut triangles = Vec::with_capacity(6 * n * n);
    for j in 0..m {
        for i in 0..m {
            if i >= n && j >= n {
                continue;
            }
            split_cell(&mut triangles, at(i, j), at(i + 1, j), at(i, j + 1), at(i + 1, j + 1));
        }
    }
    let boundary = boundary_from_topology(vertices.len(), &triangles);
    Mesh::new(vertices, triangles, boundary, DomainTag::LShape)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct MeshStats {
    pub vertex_count: usize,
    pub triangle_count: usize,
    pub h_max: f64,
    /// Smallest interior angle over all triangles, in degrees.
    pub min_angle: f64,
}

pub fn mesh_stats(mesh: &Mesh) -> MeshStats {
    let mut min_angle = f64::INFINITY;
    for k in 0..mesh.triangle_count() {
        let p = mesh.corners(k);
        for i in 0..3 {
            let (a, b, c) = (p[i], p[(i + 1) % 3], p[(i + 2) % 3]);
            let (ux, uy) = (b.x - a.x, b.y - a.y);
            let (vx, vy) = (c.x - a.x, c.y - a.y);
            let cross = ux * vy - uy * vx;
            let dot = ux * vx + uy * vy;
            min_angle = min_angle.min(cross.abs().atan2(dot).to_degrees());
        }
    }
    MeshStats {
        vertex_count: mesh.vertex_count(),
        triangle_count: mesh.triangle_count(),
        h_max: mesh.h_max(),
        min_angle,
    }
}

/// Dispatches on the domain tag; `size` is cells per (unit) edge for the
/// structured domains and the target vertex count for the cracked square.
pub fn build_mesh(domain: DomainTag, size: usize) -> Result<Mesh> {
    match domain {
        DomainTag::Square => unit_square_mesh(size),
        DomainTag::LShape => l_shaped_mesh(size),
        DomainTag::CrackedSquare => cracked_square_mesh(size),
    }
}
