use std::collections::{HashMap, HashSet, VecDeque};
use std::f64::consts::{PI, TAU};

use rayon::prelude::*;

use super::fmm::{march, Parent};
use super::ChartError;
use crate::mesh::{self, Mesh};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChartEntry {
    pub vertex: usize,
    /// Geodesic distance from the center.
    pub rho: f64,
    /// Polar angle in `[0, 2π)`, measured counter-clockwise from the first
    /// 1-ring edge.
    pub theta: f64,
}

/// Local geodesic polar coordinates on the disc of radius `disc_radius`
/// around `center`. The first entry is always the center at (0, 0).
#[derive(Debug, Clone, PartialEq)]
pub struct LocalChart {
    pub center: usize,
    pub entries: Vec<ChartEntry>,
    pub disc_radius: f64,
    /// Boundary centers map into a half-disc, θ ∈ [0, π].
    pub half_disc: bool,
}

impl LocalChart {
    /// Fewer than three vertices besides the center.
    pub fn is_degenerate(&self) -> bool {
        self.entries.len() < 4
    }

    /// Whether the chart's vertices induce a connected sub-mesh.
    pub fn is_connected(&self, mesh: &Mesh) -> bool {
        let members: HashSet<usize> = self.entries.iter().map(|e| e.vertex).collect();
        let mut seen = HashSet::from([self.center]);
        let mut queue = VecDeque::from([self.center]);
        while let Some(v) = queue.pop_front() {
            for &w in mesh.neighbors(v) {
                if members.contains(&w) && seen.insert(w) {
                    queue.push_back(w);
                }
            }
        }
        seen.len() == members.len()
    }
}

fn corner_angle(mesh: &Mesh, apex: usize, a: usize, b: usize) -> f64 {
    let v = mesh.vertices();
    let u = mesh::sub(&v[a], &v[apex]);
    let w = mesh::sub(&v[b], &v[apex]);
    mesh::norm(&mesh::cross(&u, &w)).atan2(mesh::dot(&u, &w))
}

/// Places the 1-ring around the origin, preserving edge lengths and scaling
/// the corner angles to fill 2π (interior) or π (boundary).
fn ring_layout(mesh: &Mesh, center: usize) -> HashMap<usize, [f64; 2]> {
    let ring = mesh.neighbors(center);
    let boundary = mesh.is_boundary_vertex(center);
    let corners = if boundary { ring.len() - 1 } else { ring.len() };
    let angles: Vec<f64> = (0..corners)
        .map(|i| corner_angle(mesh, center, ring[i], ring[(i + 1) % ring.len()]))
        .collect();
    let total: f64 = angles.iter().sum();
    let scale = if boundary { PI } else { TAU } / total;
    let mut theta: f64 = 0.0;
    let mut out = HashMap::with_capacity(ring.len());
    for (i, &v) in ring.iter().enumerate() {
        let r = mesh.edge_length(center, v);
        out.insert(v, [r * theta.cos(), r * theta.sin()]);
        if i < angles.len() {
            theta += angles[i] * scale;
        }
    }
    out
}

/// Unfolds `c` into the plane next to the already placed `a` and `b` of
/// `face`, on the side that keeps the face's orientation.
fn unfold(mesh: &Mesh, face: usize, a: usize, b: usize, c: usize, pa: [f64; 2], pb: [f64; 2]) -> [f64; 2] {
    let f = mesh.faces()[face];
    let pos = |v: usize| f.iter().position(|&x| x == v).expect("vertex of face");
    let ccw = (pos(a) + 1) % 3 == pos(b);
    let lab = mesh.edge_length(a, b);
    let lac = mesh.edge_length(a, c);
    let lbc = mesh.edge_length(b, c);
    let x = (lac * lac + lab * lab - lbc * lbc) / (2.0 * lab);
    let y = (lac * lac - x * x).max(0.0).sqrt();
    let (dx, dy) = (pb[0] - pa[0], pb[1] - pa[1]);
    let len = (dx * dx + dy * dy).sqrt();
    let u = [dx / len, dy / len];
    let w = [-u[1], u[0]];
    let s = if ccw { 1.0 } else { -1.0 };
    [pa[0] + x * u[0] + s * y * w[0], pa[1] + x * u[1] + s * y * w[1]]
}

/// Geodesic polar chart of radius `rho0` around `center`: ρ by fast
/// marching, θ from the planar unfolding of the triangle that delivered
/// each vertex's distance.
pub fn local_chart(mesh: &Mesh, center: usize, rho0: f64) -> Result<LocalChart, ChartError> {
    if center >= mesh.vertex_count() {
        return Err(ChartError::VertexOutOfRange {
            vertex: center,
            count: mesh.vertex_count(),
        });
    }
    if !(rho0 > 0.0) {
        return Err(ChartError::InvalidArgument(format!("disc radius must be positive, got {rho0}")));
    }
    let run = march(mesh, &[(center, 0.0)], rho0);
    let ring = ring_layout(mesh, center);
    let mut pos: HashMap<usize, [f64; 2]> = HashMap::with_capacity(run.accepted.len());
    let mut entries = Vec::with_capacity(run.accepted.len());
    for &v in &run.accepted {
        let p = if v == center {
            [0.0, 0.0]
        } else if let Some(&p) = ring.get(&v) {
            p
        } else {
            match run.parents[v] {
                Parent::Triangle { face, a, b } => unfold(mesh, face, a, b, v, pos[&a], pos[&b]),
                Parent::Edge { from } => edge_placement(mesh, &pos, from, v),
                Parent::None => [0.0, 0.0],
            }
        };
        pos.insert(v, p);
        let theta = if v == center { 0.0 } else { p[1].atan2(p[0]).rem_euclid(TAU) };
        // rem_euclid can round up to exactly 2π.
        let theta = if theta >= TAU { 0.0 } else { theta };
        entries.push(ChartEntry {
            vertex: v,
            rho: run.distances[v],
            theta,
        });
    }
    Ok(LocalChart {
        center,
        entries,
        disc_radius: rho0,
        half_disc: mesh.is_boundary_vertex(center),
    })
}

/// Placement for a vertex reached along an edge: unfold through any face
/// on that edge whose third vertex is placed, else continue radially.
fn edge_placement(mesh: &Mesh, pos: &HashMap<usize, [f64; 2]>, from: usize, v: usize) -> [f64; 2] {
    if let Some(edge) = mesh.edge(from, v) {
        for face in std::iter::once(edge.faces.0).chain(edge.faces.1) {
            let f = mesh.faces()[face];
            let third = f.iter().copied().find(|&x| x != from && x != v).expect("triangle");
            if let Some(&pt) = pos.get(&third) {
                return unfold(mesh, face, from, third, v, pos[&from], pt);
            }
        }
    }
    let pf = pos[&from];
    let r = (pf[0] * pf[0] + pf[1] * pf[1]).sqrt();
    let l = mesh.edge_length(from, v);
    if r > 0.0 {
        [pf[0] * (1.0 + l / r), pf[1] * (1.0 + l / r)]
    } else {
        [l, 0.0]
    }
}

/// Charts for every vertex, computed in parallel.
pub fn all_charts(mesh: &Mesh, rho0: f64) -> Result<Vec<LocalChart>, ChartError> {
    (0..mesh.vertex_count())
        .into_par_iter()
        .map(|v| local_chart(mesh, v, rho0))
        .collect()
}
