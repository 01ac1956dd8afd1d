//! Unit square with a straight crack from `(0,0)` to `(0.5,0.5)`.
//!
//! The generator starts from the structured grid (whose diagonals already
//! conform to the crack when the cell count is even), splits every crack
//! vertex except the tip into two coincident copies, and then inserts
//! centroids of the largest triangles with Lawson flips until the requested
//! vertex count is reached.

use std::collections::HashMap;

use super::{boundary_from_topology, signed_area, split_cell, DomainTag, Mesh, Point2, Triangle};
use crate::error::{Error, Result};

const MIN_TARGET: usize = 20;

fn structured_count(n: usize) -> usize {
    (n + 1) * (n + 1) + n / 2
}

pub fn cracked_square_mesh(target_vertices: usize) -> Result<Mesh> {
    if target_vertices < MIN_TARGET {
        return Err(Error::invalid(format!(
            "cracked_square_mesh needs at least {MIN_TARGET} vertices to resolve the crack, got {target_vertices}"
        )));
    }
    let mut n = 2;
    while structured_count(n + 2) <= target_vertices {
        n += 2;
    }

    let nf = n as f64;
    let idx = |i: usize, j: usize| j * (n + 1) + i;
    let mut vertices: Vec<Point2> = (0..=n)
        .flat_map(|j| (0..=n).map(move |i| Point2::new(i as f64 / nf, j as f64 / nf)))
        .collect();
    let mut triangles = Vec::with_capacity(2 * n * n);
    for j in 0..n {
        for i in 0..n {
            split_cell(&mut triangles, idx(i, j), idx(i + 1, j), idx(i, j + 1), idx(i + 1, j + 1));
        }
    }

    // Upper-flank copies of the crack vertices; the tip (n/2, n/2) stays shared.
    let mut upper_copy = HashMap::new();
    for i in 0..n / 2 {
        let original = idx(i, i);
        upper_copy.insert(original, vertices.len());
        vertices.push(vertices[original]);
    }
    for t in triangles.iter_mut() {
        let [a, b, c] = t.v.map(|v| vertices[v]);
        let (cx, cy) = ((a.x + b.x + c.x) / 3.0, (a.y + b.y + c.y) / 3.0);
        if cy > cx {
            for v in t.v.iter_mut() {
                if let Some(&copy) = upper_copy.get(v) {
                    *v = copy;
                }
            }
        }
    }

    let mut refiner = Refiner::new(vertices, triangles);
    while refiner.vertices.len() < target_vertices {
        refiner.insert_in_largest();
    }
    let Refiner {
        vertices, triangles, ..
    } = refiner;
    let triangles: Vec<Triangle> = triangles.into_iter().map(|v| Triangle { v }).collect();
    let boundary = boundary_from_topology(vertices.len(), &triangles);
    Mesh::new(vertices, triangles, boundary, DomainTag::CrackedSquare)
}

/// Incremental point insertion with Lawson edge flips. Edges carried by a
/// single triangle (outer boundary and both crack flanks) are never flipped.
struct Refiner {
    vertices: Vec<Point2>,
    triangles: Vec<[usize; 3]>,
    /// Directed edge -> triangle that traverses it counter-clockwise.
    owner: HashMap<(usize, usize), usize>,
}

impl Refiner {
    fn new(vertices: Vec<Point2>, triangles: Vec<Triangle>) -> Self {
        let triangles: Vec<[usize; 3]> = triangles.into_iter().map(|t| t.v).collect();
        let mut owner = HashMap::with_capacity(3 * triangles.len());
        for (k, t) in triangles.iter().enumerate() {
            for i in 0..3 {
                owner.insert((t[i], t[(i + 1) % 3]), k);
            }
        }
        Refiner {
            vertices,
            triangles,
            owner,
        }
    }

    fn area(&self, t: &[usize; 3]) -> f64 {
        signed_area(&self.vertices[t[0]], &self.vertices[t[1]], &self.vertices[t[2]])
    }

    fn set(&mut self, k: usize, t: [usize; 3]) {
        if k == self.triangles.len() {
            self.triangles.push(t);
        } else {
            self.triangles[k] = t;
        }
        for i in 0..3 {
            self.owner.insert((t[i], t[(i + 1) % 3]), k);
        }
    }

    fn insert_in_largest(&mut self) {
        // Equal areas are broken by a multiplicative hash so that insertions
        // scatter over the domain instead of sweeping the first grid row.
        let scatter = |k: usize| (k as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15) >> 32;
        let (k, _) = self
            .triangles
            .iter()
            .enumerate()
            .map(|(k, t)| (k, self.area(t)))
            .fold((usize::MAX, f64::NEG_INFINITY), |best, cur| {
                let better = cur.1 > best.1 * (1.0 + 1e-12)
                    || (cur.1 >= best.1 * (1.0 - 1e-12) && scatter(cur.0) < scatter(best.0));
                if better {
                    cur
                } else {
                    best
                }
            });
        let [a, b, c] = self.triangles[k];
        let (pa, pb, pc) = (self.vertices[a], self.vertices[b], self.vertices[c]);
        let v = self.vertices.len();
        self.vertices.push(Point2::new((pa.x + pb.x + pc.x) / 3.0, (pa.y + pb.y + pc.y) / 3.0));

        let k2 = self.triangles.len();
        self.set(k, [a, b, v]);
        self.set(k2, [b, c, v]);
        self.set(k2 + 1, [c, a, v]);
        self.legalize(v, a, b);
        self.legalize(v, b, c);
        self.legalize(v, c, a);
    }

    /// Restores the Delaunay property across edge `(a,b)` of triangle `(a,b,v)`.
    fn legalize(&mut self, v: usize, a: usize, b: usize) {
        let mut stack = vec![(a, b)];
        while let Some((a, b)) = stack.pop() {
            let Some(&inner) = self.owner.get(&(a, b)) else { continue };
            let Some(&outer) = self.owner.get(&(b, a)) else { continue };
            if !self.triangles[inner].contains(&v) {
                continue;
            }
            let d = *self.triangles[outer]
                .iter()
                .find(|&&x| x != a && x != b)
                .expect("outer triangle has a third vertex");
            let p = |i: usize| self.vertices[i];
            if !in_circumcircle(p(a), p(b), p(v), p(d)) {
                continue;
            }
            let t1 = [a, d, v];
            let t2 = [d, b, v];
            if self.area(&t1) <= 0.0 || self.area(&t2) <= 0.0 {
                continue;
            }
            self.owner.remove(&(a, b));
            self.owner.remove(&(b, a));
            self.set(inner, t1);
            self.set(outer, t2);
            stack.push((a, d));
            stack.push((d, b));
        }
    }
}

/// True when `d` lies strictly inside the circumcircle of the ccw triangle `(a,b,c)`.
fn in_circumcircle(a: Point2, b: Point2, c: Point2, d: Point2) -> bool {
    let (adx, ady) = (a.x - d.x, a.y - d.y);
    let (bdx, bdy) = (b.x - d.x, b.y - d.y);
    let (cdx, cdy) = (c.x - d.x, c.y - d.y);
    let ad = adx * adx + ady * ady;
    let bd = bdx * bdx + bdy * bdy;
    let cd = cdx * cdx + cdy * cdy;
    let det = adx * (bdy * cd - bd * cdy) - ady * (bdx * cd - bd * cdx) + ad * (bdx * cdy - bdy * cdx);
    let scale = (ad + bd + cd).powi(2);
    det > 1e-12 * scale
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::mesh_stats;
    use std::collections::HashMap;

    fn coincident_groups(m: &Mesh) -> HashMap<(u64, u64), Vec<usize>> {
        let mut g: HashMap<(u64, u64), Vec<usize>> = HashMap::new();
        for (i, p) in m.vertices().iter().enumerate() {
            g.entry((p.x.to_bits(), p.y.to_bits())).or_default().push(i);
        }
        g
    }

    fn on_crack(p: &Point2) -> bool {
        (p.x - p.y).abs() < 1e-14 && p.x <= 0.5 + 1e-14
    }

    #[test]
    fn crack_vertices_duplicated_except_tip() {
        for target in [20, 60, 136, 477] {
            let m = cracked_square_mesh(target).unwrap();
            for (_, ids) in coincident_groups(&m) {
                let p = m.vertices()[ids[0]];
                if on_crack(&p) && p.x < 0.5 {
                    assert_eq!(ids.len(), 2, "crack vertex {p:?}");
                } else {
                    assert_eq!(ids.len(), 1, "vertex {p:?}");
                }
            }
            let tips = m
                .vertices()
                .iter()
                .filter(|p| p.x == 0.5 && p.y == 0.5)
                .count();
            assert_eq!(tips, 1);
        }
    }

    #[test]
    fn hits_target_count() {
        for target in [20, 21, 136, 477, 989] {
            let m = cracked_square_mesh(target).unwrap();
            assert_eq!(m.vertex_count(), target);
        }
        let m = cracked_square_mesh(136).unwrap();
        assert!((102..=170).contains(&m.vertex_count()));
    }

    #[test]
    fn too_small_target_rejected() {
        assert!(matches!(cracked_square_mesh(19), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn no_triangle_straddles_the_crack() {
        let m = cracked_square_mesh(300).unwrap();
        let groups = coincident_groups(&m);
        // For each duplicated pair, the triangles touching one copy lie on one side.
        for ids in groups.values().filter(|ids| ids.len() == 2) {
            for &copy in ids {
                let mut sides = Vec::new();
                for k in 0..m.triangle_count() {
                    if m.triangles()[k].v.contains(&copy) {
                        let c = m.corners(k);
                        let (cx, cy) = (
                            (c[0].x + c[1].x + c[2].x) / 3.0,
                            (c[0].y + c[1].y + c[2].y) / 3.0,
                        );
                        sides.push(cy > cx);
                    }
                }
                assert!(!sides.is_empty());
                assert!(sides.iter().all(|&s| s == sides[0]));
            }
        }
        for k in 0..m.triangle_count() {
            assert!(m.area(k) > 0.0);
        }
    }

    #[test]
    fn topology_is_a_disk_and_area_is_one() {
        let m = cracked_square_mesh(250).unwrap();
        let topo = m.topology();
        assert_eq!(topo.euler_characteristic(m.vertex_count()), 1);
        let area: f64 = (0..m.triangle_count()).map(|k| m.area(k)).sum();
        assert!((area - 1.0).abs() < 1e-12);
        assert!(mesh_stats(&m).min_angle > 5.0);
    }

    #[test]
    fn crack_flanks_are_boundary() {
        let m = cracked_square_mesh(136).unwrap();
        for (i, p) in m.vertices().iter().enumerate() {
            if on_crack(p) {
                assert!(m.boundary_vertices().contains(&i));
            }
        }
    }
}
