use std::collections::HashMap;

use super::{Mesh, MeshError, Point};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TestMeshKind {
    /// `nx × ny` vertices on a square lattice in the z=0 plane; each cell is
    /// split along its (i,j)-(i+1,j+1) diagonal.
    GridPlane { nx: usize, ny: usize, spacing: f64 },
    /// Subdivided icosahedron projected onto a sphere.
    Icosphere { subdivisions: usize, radius: f64 },
    /// Planar ring with `n_radial` concentric vertex loops.
    Annulus {
        n_radial: usize,
        n_angular: usize,
        inner_radius: f64,
        outer_radius: f64,
    },
}

pub fn make_test_mesh(kind: TestMeshKind) -> Result<Mesh, MeshError> {
    match kind {
        TestMeshKind::GridPlane { nx, ny, spacing } => grid_plane(nx, ny, spacing),
        TestMeshKind::Icosphere { subdivisions, radius } => icosphere(subdivisions, radius),
        TestMeshKind::Annulus {
            n_radial,
            n_angular,
            inner_radius,
            outer_radius,
        } => annulus(n_radial, n_angular, inner_radius, outer_radius),
    }
}

fn grid_plane(nx: usize, ny: usize, spacing: f64) -> Result<Mesh, MeshError> {
    if nx < 2 || ny < 2 {
        return Err(MeshError::InvalidParameters(format!("grid must be at least 2x2, got {nx}x{ny}")));
    }
    if !(spacing > 0.0) {
        return Err(MeshError::InvalidParameters("grid spacing must be positive".into()));
    }
    let mut vertices = Vec::with_capacity(nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            vertices.push([i as f64 * spacing, j as f64 * spacing, 0.0]);
        }
    }
    let mut faces = Vec::with_capacity(2 * (nx - 1) * (ny - 1));
    for j in 0..ny - 1 {
        for i in 0..nx - 1 {
            let v00 = j * nx + i;
            let v10 = v00 + 1;
            let v01 = v00 + nx;
            let v11 = v01 + 1;
            faces.push([v00, v10, v11]);
            faces.push([v00, v11, v01]);
        }
    }
    Mesh::new(vertices, faces)
}

fn icosphere(subdivisions: usize, radius: f64) -> Result<Mesh, MeshError> {
    if !(radius > 0.0) {
        return Err(MeshError::InvalidParameters("sphere radius must be positive".into()));
    }
    let t = (1.0 + 5f64.sqrt()) / 2.0;
    let mut vertices: Vec<Point> = vec![
        [-1.0, t, 0.0],
        [1.0, t, 0.0],
        [-1.0, -t, 0.0],
        [1.0, -t, 0.0],
        [0.0, -1.0, t],
        [0.0, 1.0, t],
        [0.0, -1.0, -t],
        [0.0, 1.0, -t],
        [t, 0.0, -1.0],
        [t, 0.0, 1.0],
        [-t, 0.0, -1.0],
        [-t, 0.0, 1.0],
    ];
    let mut faces: Vec<[usize; 3]> = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    let project = |p: Point| {
        let n = (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt();
        [p[0] / n, p[1] / n, p[2] / n]
    };
    for v in vertices.iter_mut() {
        *v = project(*v);
    }
    for _ in 0..subdivisions {
        let mut midpoint: HashMap<(usize, usize), usize> = HashMap::new();
        let mut next = Vec::with_capacity(faces.len() * 4);
        let mut mid = |a: usize, b: usize, vertices: &mut Vec<Point>| -> usize {
            let key = (a.min(b), a.max(b));
            *midpoint.entry(key).or_insert_with(|| {
                let pa = vertices[a];
                let pb = vertices[b];
                vertices.push(project([
                    0.5 * (pa[0] + pb[0]),
                    0.5 * (pa[1] + pb[1]),
                    0.5 * (pa[2] + pb[2]),
                ]));
                vertices.len() - 1
            })
        };
        for &[a, b, c] in &faces {
            let ab = mid(a, b, &mut vertices);
            let bc = mid(b, c, &mut vertices);
            let ca = mid(c, a, &mut vertices);
            next.push([a, ab, ca]);
            next.push([b, bc, ab]);
            next.push([c, ca, bc]);
            next.push([ab, bc, ca]);
        }
        faces = next;
    }
    for v in vertices.iter_mut() {
        *v = [v[0] * radius, v[1] * radius, v[2] * radius];
    }
    Mesh::new(vertices, faces)
}

fn annulus(n_radial: usize, n_angular: usize, inner: f64, outer: f64) -> Result<Mesh, MeshError> {
    if n_radial < 2 || n_angular < 3 {
        return Err(MeshError::InvalidParameters(format!(
            "annulus needs at least 2 radial and 3 angular samples, got {n_radial}x{n_angular}"
        )));
    }
    if !(inner > 0.0 && outer > inner) {
        return Err(MeshError::InvalidParameters("annulus radii must satisfy 0 < inner < outer".into()));
    }
    let mut vertices = Vec::with_capacity(n_radial * n_angular);
    for k in 0..n_radial {
        let r = inner + (outer - inner) * k as f64 / (n_radial - 1) as f64;
        for a in 0..n_angular {
            let phi = 2.0 * std::f64::consts::PI * a as f64 / n_angular as f64;
            vertices.push([r * phi.cos(), r * phi.sin(), 0.0]);
        }
    }
    let mut faces = Vec::new();
    for k in 0..n_radial - 1 {
        for a in 0..n_angular {
            let b = (a + 1) % n_angular;
            let i00 = k * n_angular + a;
            let i01 = k * n_angular + b;
            let i10 = (k + 1) * n_angular + a;
            let i11 = (k + 1) * n_angular + b;
            faces.push([i00, i01, i11]);
            faces.push([i00, i11, i10]);
        }
    }
    Mesh::new(vertices, faces)
}

/// A flat trapezoid-shaped patch of square cells, mirror symmetric about
/// x = 0 (including its triangulation) and with no rotational symmetry.
/// Row `j` of cells keeps the cells whose centers satisfy
/// `|x| <= w(j)`, where `w` falls linearly from `bottom_half_width` to
/// `top_half_width` (both in cells).
pub fn symmetric_trapezoid(
    rows: usize,
    bottom_half_width: f64,
    top_half_width: f64,
    spacing: f64,
) -> Result<Mesh, MeshError> {
    if rows < 1 || !(top_half_width >= 0.5) || !(bottom_half_width >= top_half_width) || !(spacing > 0.0) {
        return Err(MeshError::InvalidParameters("trapezoid needs rows >= 1 and 0.5 <= top <= bottom".into()));
    }
    let max_w = bottom_half_width.ceil() as i64 + 1;
    let mut index: HashMap<(i64, usize), usize> = HashMap::new();
    let mut vertices = Vec::new();
    let mut faces = Vec::new();
    let mut vid = |i: i64, j: usize, vertices: &mut Vec<Point>| -> usize {
        *index.entry((i, j)).or_insert_with(|| {
            vertices.push([i as f64 * spacing, j as f64 * spacing, 0.0]);
            vertices.len() - 1
        })
    };
    for j in 0..rows {
        let t = if rows > 1 { j as f64 / (rows - 1) as f64 } else { 0.0 };
        let w = bottom_half_width + (top_half_width - bottom_half_width) * t;
        for i in -max_w..max_w {
            let center = i as f64 + 0.5;
            if center.abs() > w {
                continue;
            }
            let v00 = vid(i, j, &mut vertices);
            let v10 = vid(i + 1, j, &mut vertices);
            let v01 = vid(i, j + 1, &mut vertices);
            let v11 = vid(i + 1, j + 1, &mut vertices);
            if i >= 0 {
                faces.push([v00, v10, v11]);
                faces.push([v00, v11, v01]);
            } else {
                faces.push([v00, v10, v01]);
                faces.push([v10, v11, v01]);
            }
        }
    }
    Mesh::new(vertices, faces)
}

/// Rolls a mesh lying in the z=0 plane onto a cylinder of the given radius
/// whose axis is parallel to y. Arc length along x is preserved.
pub fn bend_around_cylinder(mesh: &Mesh, radius: f64) -> Result<Mesh, MeshError> {
    if !(radius > 0.0) {
        return Err(MeshError::InvalidParameters("bend radius must be positive".into()));
    }
    mesh.map_vertices(|p| {
        let phi = p[0] / radius;
        [radius * phi.sin(), p[1], radius * (1.0 - phi.cos()) + p[2]]
    })
}
