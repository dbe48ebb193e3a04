//! Triangle meshes: validated connectivity, per-vertex area elements and
//! small procedurally generated fixtures.

mod generate;
mod io;

use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::charting::fast_marching;

pub use generate::{bend_around_cylinder, make_test_mesh, symmetric_trapezoid, TestMeshKind};
pub use io::{load_mesh, parse_obj, parse_off, write_obj, write_off, MeshFormat};

/// Faces with an area at or below this value are rejected.
pub const DEGENERATE_AREA: f64 = 1e-12;

pub type Point = [f64; 3];

#[derive(Debug, Error)]
pub enum MeshError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("face {face} references vertex {index} but the mesh has {count} vertices")]
    IndexOutOfRange {
        face: usize,
        index: usize,
        count: usize,
    },
    #[error("face {face} repeats a vertex")]
    RepeatedVertex { face: usize },
    #[error("face {face} is degenerate (area {area:e})")]
    DegenerateFace { face: usize, area: f64 },
    #[error("edge ({a}, {b}) has {count} incident faces")]
    NonManifoldEdge { a: usize, b: usize, count: usize },
    #[error("faces around edge ({a}, {b}) have inconsistent orientation")]
    InconsistentOrientation { a: usize, b: usize },
    #[error("vertex {vertex} is not referenced by any face")]
    IsolatedVertex { vertex: usize },
    #[error("vertex {vertex} has a non-manifold neighborhood")]
    NonManifoldVertex { vertex: usize },
    #[error("mesh is disconnected: vertex {vertex} is unreachable")]
    Disconnected { vertex: usize },
    #[error("invalid generator parameters: {0}")]
    InvalidParameters(String),
}

/// An undirected edge and the faces on either side of it.
#[derive(Debug, Clone, PartialEq)]
pub struct Edge {
    /// Endpoints with `vertices.0 < vertices.1`.
    pub vertices: (usize, usize),
    pub faces: (usize, Option<usize>),
}

impl Edge {
    pub fn is_boundary(&self) -> bool {
        self.faces.1.is_none()
    }
}

/// An immutable, validated, consistently oriented triangle mesh.
#[derive(Debug, Clone)]
pub struct Mesh {
    vertices: Vec<Point>,
    faces: Vec<[usize; 3]>,
    edges: Vec<Edge>,
    edge_lookup: HashMap<(usize, usize), usize>,
    vertex_neighbors: Vec<Vec<usize>>,
    vertex_faces: Vec<Vec<usize>>,
    boundary_vertex: Vec<bool>,
}

impl Mesh {
    /// Builds and validates a mesh. Faces must be counter-clockwise and
    /// consistently oriented; every vertex must belong to some face.
    pub fn new(vertices: Vec<Point>, faces: Vec<[usize; 3]>) -> Result<Self, MeshError> {
        let n = vertices.len();
        for (fi, f) in faces.iter().enumerate() {
            for &v in f {
                if v >= n {
                    return Err(MeshError::IndexOutOfRange {
                        face: fi,
                        index: v,
                        count: n,
                    });
                }
            }
            if f[0] == f[1] || f[1] == f[2] || f[0] == f[2] {
                return Err(MeshError::RepeatedVertex { face: fi });
            }
            let area = triangle_area(&vertices[f[0]], &vertices[f[1]], &vertices[f[2]]);
            if !(area > DEGENERATE_AREA) {
                return Err(MeshError::DegenerateFace { face: fi, area });
            }
        }

        // Directed half-edges must be unique for a consistent orientation.
        let mut half_edges: HashMap<(usize, usize), usize> = HashMap::with_capacity(3 * faces.len());
        for (fi, f) in faces.iter().enumerate() {
            for c in 0..3 {
                let (a, b) = (f[c], f[(c + 1) % 3]);
                if half_edges.insert((a, b), fi).is_some() {
                    let faces_on_edge = faces
                        .iter()
                        .filter(|g| (0..3).any(|d| {
                            let (x, y) = (g[d], g[(d + 1) % 3]);
                            (x == a && y == b) || (x == b && y == a)
                        }))
                        .count();
                    let (lo, hi) = (a.min(b), a.max(b));
                    if faces_on_edge > 2 {
                        return Err(MeshError::NonManifoldEdge {
                            a: lo,
                            b: hi,
                            count: faces_on_edge,
                        });
                    }
                    return Err(MeshError::InconsistentOrientation { a: lo, b: hi });
                }
            }
        }

        let mut edges: Vec<Edge> = Vec::new();
        let mut edge_lookup = HashMap::with_capacity(half_edges.len());
        for (fi, f) in faces.iter().enumerate() {
            for c in 0..3 {
                let (a, b) = (f[c], f[(c + 1) % 3]);
                let key = (a.min(b), a.max(b));
                match edge_lookup.get(&key) {
                    None => {
                        edge_lookup.insert(key, edges.len());
                        edges.push(Edge {
                            vertices: key,
                            faces: (fi, None),
                        });
                    }
                    Some(&ei) => {
                        let e: &mut Edge = &mut edges[ei];
                        if e.faces.1.is_some() {
                            return Err(MeshError::NonManifoldEdge {
                                a: key.0,
                                b: key.1,
                                count: 3,
                            });
                        }
                        e.faces.1 = Some(fi);
                    }
                }
            }
        }

        let mut vertex_faces = vec![Vec::new(); n];
        for (fi, f) in faces.iter().enumerate() {
            for &v in f {
                vertex_faces[v].push(fi);
            }
        }
        if let Some(v) = vertex_faces.iter().position(|fs| fs.is_empty()) {
            return Err(MeshError::IsolatedVertex { vertex: v });
        }

        let mut vertex_neighbors = Vec::with_capacity(n);
        let mut boundary_vertex = vec![false; n];
        for v in 0..n {
            let (ring, boundary) = one_ring(v, &faces, &vertex_faces[v])?;
            boundary_vertex[v] = boundary;
            vertex_neighbors.push(ring);
        }

        Ok(Self {
            vertices,
            faces,
            edges,
            edge_lookup,
            vertex_neighbors,
            vertex_faces,
            boundary_vertex,
        })
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn face_count(&self) -> usize {
        self.faces.len()
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn faces(&self) -> &[[usize; 3]] {
        &self.faces
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn edge(&self, a: usize, b: usize) -> Option<&Edge> {
        self.edge_lookup
            .get(&(a.min(b), a.max(b)))
            .map(|&i| &self.edges[i])
    }

    /// 1-ring of `v` in counter-clockwise order. Interior rings start at the
    /// lowest-index neighbor; boundary rings are open fans starting at the
    /// boundary edge that precedes the fan.
    pub fn neighbors(&self, v: usize) -> &[usize] {
        &self.vertex_neighbors[v]
    }

    pub fn incident_faces(&self, v: usize) -> &[usize] {
        &self.vertex_faces[v]
    }

    pub fn is_boundary_vertex(&self, v: usize) -> bool {
        self.boundary_vertex[v]
    }

    pub fn boundary_edge_count(&self) -> usize {
        self.edges.iter().filter(|e| e.is_boundary()).count()
    }

    pub fn interior_edge_count(&self) -> usize {
        self.edges.len() - self.boundary_edge_count()
    }

    pub fn is_closed(&self) -> bool {
        self.boundary_edge_count() == 0
    }

    pub fn edge_length(&self, a: usize, b: usize) -> f64 {
        distance(&self.vertices[a], &self.vertices[b])
    }

    pub fn max_edge_length(&self) -> f64 {
        self.edges
            .iter()
            .map(|e| self.edge_length(e.vertices.0, e.vertices.1))
            .fold(0.0, f64::max)
    }

    pub fn face_area(&self, f: usize) -> f64 {
        let [a, b, c] = self.faces[f];
        triangle_area(&self.vertices[a], &self.vertices[b], &self.vertices[c])
    }

    pub fn surface_area(&self) -> f64 {
        (0..self.faces.len()).map(|f| self.face_area(f)).sum()
    }

    /// Closed loops of boundary vertices, each listed once in traversal order.
    pub fn boundary_loops(&self) -> Vec<Vec<usize>> {
        // Boundary half-edges keep the orientation of their single face.
        let mut next: HashMap<usize, usize> = HashMap::new();
        for e in self.edges.iter().filter(|e| e.is_boundary()) {
            let f = self.faces[e.faces.0];
            for c in 0..3 {
                let (a, b) = (f[c], f[(c + 1) % 3]);
                if (a.min(b), a.max(b)) == e.vertices {
                    next.insert(a, b);
                }
            }
        }
        let mut starts: Vec<usize> = next.keys().copied().collect();
        starts.sort_unstable();
        let mut visited = std::collections::HashSet::new();
        let mut loops = Vec::new();
        for s in starts {
            if visited.contains(&s) {
                continue;
            }
            let mut lp = vec![s];
            visited.insert(s);
            let mut cur = next[&s];
            while cur != s {
                if !visited.insert(cur) {
                    break;
                }
                lp.push(cur);
                match next.get(&cur) {
                    Some(&n) => cur = n,
                    None => break,
                }
            }
            loops.push(lp);
        }
        loops
    }

    /// Returns a copy with every vertex transformed by `f`, keeping connectivity.
    pub fn map_vertices(&self, f: impl Fn(&Point) -> Point) -> Result<Self, MeshError> {
        Mesh::new(self.vertices.iter().map(f).collect(), self.faces.clone())
    }
}

/// Lumped (barycentric) area elements: each face gives a third of its area
/// to each of its corners.
#[derive(Debug, Clone, PartialEq)]
pub struct VertexAreas {
    pub areas: Vec<f64>,
    pub total: f64,
}

impl VertexAreas {
    pub fn len(&self) -> usize {
        self.areas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.areas.is_empty()
    }
}

pub fn vertex_areas(mesh: &Mesh) -> VertexAreas {
    let mut areas = vec![0.0; mesh.vertex_count()];
    for (fi, f) in mesh.faces().iter().enumerate() {
        let third = mesh.face_area(fi) / 3.0;
        for &v in f {
            areas[v] += third;
        }
    }
    let total = areas.iter().sum();
    VertexAreas { areas, total }
}

/// Lower bound on the geodesic diameter: the largest fast-marching distance
/// from `sample_count` seeded source vertices, followed by one extra sweep
/// from the farthest vertex found. Using every vertex as a source makes the
/// result seed-independent.
pub fn geodesic_diameter(mesh: &Mesh, sample_count: usize, seed: u64) -> Result<f64, MeshError> {
    use rayon::prelude::*;

    let n = mesh.vertex_count();
    let sources: Vec<usize> = if sample_count >= n {
        (0..n).collect()
    } else {
        let mut all: Vec<usize> = (0..n).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        all.shuffle(&mut rng);
        all.truncate(sample_count.max(1));
        all
    };

    let farthest = |src: usize| -> Result<(f64, usize), MeshError> {
        let field = fast_marching(mesh, src, f64::INFINITY);
        let mut best = (0.0, src);
        for (v, &d) in field.distances.iter().enumerate() {
            if !d.is_finite() {
                return Err(MeshError::Disconnected { vertex: v });
            }
            if d > best.0 {
                best = (d, v);
            }
        }
        Ok(best)
    };

    let results: Vec<(f64, usize)> = sources
        .par_iter()
        .map(|&s| farthest(s))
        .collect::<Result<_, _>>()?;
    let mut best = results
        .iter()
        .copied()
        .fold((0.0, 0), |acc, r| if r.0 > acc.0 { r } else { acc });
    if sample_count < n {
        let (d, _) = farthest(best.1)?;
        if d > best.0 {
            best.0 = d;
        }
    }
    Ok(best.0)
}

fn one_ring(v: usize, faces: &[[usize; 3]], incident: &[usize]) -> Result<(Vec<usize>, bool), MeshError> {
    // For a ccw face (v, a, b), `a -> b` walks counter-clockwise around v.
    let mut next: HashMap<usize, usize> = HashMap::with_capacity(incident.len());
    let mut has_prev: HashMap<usize, bool> = HashMap::new();
    for &fi in incident {
        let f = faces[fi];
        let c = f.iter().position(|&x| x == v).expect("incident face contains vertex");
        let a = f[(c + 1) % 3];
        let b = f[(c + 2) % 3];
        next.insert(a, b);
        has_prev.entry(a).or_insert(false);
        has_prev.insert(b, true);
    }
    let mut starts: Vec<usize> = has_prev.iter().filter(|(_, &p)| !p).map(|(&k, _)| k).collect();
    starts.sort_unstable();
    let (start, boundary) = match starts.len() {
        0 => (*next.keys().min().expect("nonempty ring"), false),
        1 => (starts[0], true),
        _ => return Err(MeshError::NonManifoldVertex { vertex: v }),
    };
    let mut ring = vec![start];
    let mut cur = start;
    while let Some(&n) = next.get(&cur) {
        if n == start {
            break;
        }
        ring.push(n);
        cur = n;
        if ring.len() > incident.len() + 1 {
            return Err(MeshError::NonManifoldVertex { vertex: v });
        }
    }
    let expected = if boundary { incident.len() + 1 } else { incident.len() };
    if ring.len() != expected {
        return Err(MeshError::NonManifoldVertex { vertex: v });
    }
    Ok((ring, boundary))
}

pub(crate) fn sub(a: &Point, b: &Point) -> Point {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

pub(crate) fn dot(a: &Point, b: &Point) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub(crate) fn cross(a: &Point, b: &Point) -> Point {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

pub(crate) fn norm(a: &Point) -> f64 {
    dot(a, a).sqrt()
}

pub(crate) fn distance(a: &Point, b: &Point) -> f64 {
    norm(&sub(a, b))
}

pub(crate) fn triangle_area(a: &Point, b: &Point, c: &Point) -> f64 {
    0.5 * norm(&cross(&sub(b, a), &sub(c, a)))
}
