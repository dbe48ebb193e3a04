use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::mesh::{self, Mesh};

/// First-arrival geodesic distances from a single source vertex.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceField {
    pub source: usize,
    /// `f64::INFINITY` for vertices that were not reached within `reach`.
    pub distances: Vec<f64>,
    pub reach: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Candidate {
    dist: f64,
    vertex: usize,
}

impl Eq for Candidate {}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .dist
            .total_cmp(&self.dist)
            .then_with(|| other.vertex.cmp(&self.vertex))
    }
}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// How a vertex received its current tentative distance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum Parent {
    None,
    Edge { from: usize },
    Triangle { face: usize, a: usize, b: usize },
}

pub(crate) struct March {
    pub distances: Vec<f64>,
    pub parents: Vec<Parent>,
    /// Vertices in acceptance order.
    pub accepted: Vec<usize>,
}

/// Distance at `c` through the triangle (a, b, c) given distances at a and
/// b, via the planar virtual source consistent with both. `None` when no
/// such source exists or its ray to `c` misses the segment ab.
pub(crate) fn triangle_update(len_ab: f64, len_ac: f64, len_bc: f64, da: f64, db: f64) -> Option<f64> {
    let c = len_ab;
    let cx = (len_ac * len_ac + c * c - len_bc * len_bc) / (2.0 * c);
    let cy = (len_ac * len_ac - cx * cx).max(0.0).sqrt();
    let sx = (da * da + c * c - db * db) / (2.0 * c);
    let sy2 = da * da - sx * sx;
    if sy2 < 0.0 {
        return None;
    }
    let sy = -sy2.sqrt();
    let denom = cy - sy;
    if denom <= 0.0 {
        return None;
    }
    let t = -sy / denom;
    let x = sx + t * (cx - sx);
    if !(0.0..=c).contains(&x) {
        return None;
    }
    Some(((cx - sx).powi(2) + (cy - sy).powi(2)).sqrt())
}

/// Fast marching with the acceptance front stopped once it passes `rho_max`.
/// `seeds` are fixed initial distances (the source and, for charts, its 1-ring).
pub(crate) fn march(mesh: &Mesh, seeds: &[(usize, f64)], rho_max: f64) -> March {
    let n = mesh.vertex_count();
    let verts = mesh.vertices();
    let mut dist = vec![f64::INFINITY; n];
    let mut parents = vec![Parent::None; n];
    let mut done = vec![false; n];
    let mut heap = BinaryHeap::new();
    for &(v, d) in seeds {
        dist[v] = d;
        heap.push(Candidate { dist: d, vertex: v });
    }
    let mut accepted = Vec::new();
    while let Some(Candidate { dist: d, vertex: v }) = heap.pop() {
        if done[v] || d > dist[v] {
            continue;
        }
        if d > rho_max {
            break;
        }
        done[v] = true;
        accepted.push(v);
        for &fi in mesh.incident_faces(v) {
            let f = mesh.faces()[fi];
            for &c in &f {
                if c == v || done[c] {
                    continue;
                }
                let u = f.iter().copied().find(|&x| x != v && x != c).expect("triangle");
                let len_vc = mesh::distance(&verts[v], &verts[c]);
                let mut best = dist[v] + len_vc;
                let mut parent = Parent::Edge { from: v };
                if done[u] {
                    let len_vu = mesh::distance(&verts[v], &verts[u]);
                    let len_uc = mesh::distance(&verts[u], &verts[c]);
                    if let Some(t) = triangle_update(len_vu, len_vc, len_uc, dist[v], dist[u]) {
                        if t < best {
                            best = t;
                            parent = Parent::Triangle { face: fi, a: v, b: u };
                        }
                    }
                }
                if best < dist[c] {
                    dist[c] = best;
                    parents[c] = parent;
                    heap.push(Candidate { dist: best, vertex: c });
                }
            }
        }
    }
    for v in 0..n {
        if !done[v] {
            dist[v] = f64::INFINITY;
        }
    }
    March {
        distances: dist,
        parents,
        accepted,
    }
}

/// Geodesic distances from `source`, exact on edges adjacent to the source
/// and computed by planar triangle unfolding elsewhere. Vertices farther
/// than `rho_max` are left at infinity.
///
/// Panics if `source` is not a vertex of `mesh`.
pub fn fast_marching(mesh: &Mesh, source: usize, rho_max: f64) -> DistanceField {
    assert!(source < mesh.vertex_count(), "source {source} out of range");
    let m = march(mesh, &[(source, 0.0)], rho_max);
    DistanceField {
        source,
        distances: m.distances,
        reach: rho_max,
    }
}
