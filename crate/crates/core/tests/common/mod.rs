//! Independent reference implementations shared by the integration tests.
#![allow(dead_code)]

use std::collections::BinaryHeap;
use std::cmp::Reverse;
use std::f64::consts::TAU;

use gcnn_core::charting::{LocalChart, PatchParams};
use gcnn_core::mesh::{make_test_mesh, Mesh, TestMeshKind};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Planar grid with interior vertices displaced by up to `jitter · spacing`.
pub fn jittered_grid(nx: usize, ny: usize, spacing: f64, jitter: f64, seed: u64) -> Mesh {
    let base = make_test_mesh(TestMeshKind::GridPlane { nx, ny, spacing }).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut verts = base.vertices().to_vec();
    for (v, p) in verts.iter_mut().enumerate() {
        if !base.is_boundary_vertex(v) {
            p[0] += rng.gen_range(-jitter..jitter) * spacing;
            p[1] += rng.gen_range(-jitter..jitter) * spacing;
        }
    }
    Mesh::new(verts, base.faces().to_vec()).unwrap()
}

/// A jittered grid lifted onto a gentle height field, so it has no symmetry.
pub fn bumpy_sheet(nx: usize, ny: usize, seed: u64) -> Mesh {
    let flat = jittered_grid(nx, ny, 1.0 / (nx - 1) as f64, 0.25, seed);
    flat.map_vertices(|p| [p[0], p[1], 0.15 * (3.0 * p[0]).sin() * (2.0 * p[1] + 0.3).cos() + 0.05 * p[0] * p[1]])
        .unwrap()
}

fn sub(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn len(a: [f64; 3]) -> f64 {
    (a[0] * a[0] + a[1] * a[1] + a[2] * a[2]).sqrt()
}

/// Interior angle at `apex` from the law of cosines.
fn angle(apex: [f64; 3], a: [f64; 3], b: [f64; 3]) -> f64 {
    let (la, lb, lc) = (len(sub(a, apex)), len(sub(b, apex)), len(sub(a, b)));
    ((la * la + lb * lb - lc * lc) / (2.0 * la * lb)).clamp(-1.0, 1.0).acos()
}

/// Dense stiffness matrix, entry by entry: `s_ij = -(cot α + cot β)/2`.
pub fn dense_cotangent(mesh: &Mesh) -> Vec<Vec<f64>> {
    let n = mesh.vertex_count();
    let v = mesh.vertices();
    let mut s = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let mut w = 0.0;
            for f in mesh.faces() {
                if f.contains(&i) && f.contains(&j) {
                    let k = *f.iter().find(|&&x| x != i && x != j).unwrap();
                    w += 1.0 / angle(v[k], v[i], v[j]).tan();
                }
            }
            s[i][j] = -w / 2.0;
        }
        s[i][i] = -s[i].iter().sum::<f64>();
    }
    s
}

/// Lumped areas from Heron's formula.
pub fn heron_areas(mesh: &Mesh) -> Vec<f64> {
    let v = mesh.vertices();
    let mut a = vec![0.0; mesh.vertex_count()];
    for f in mesh.faces() {
        let (x, y, z) = (len(sub(v[f[0]], v[f[1]])), len(sub(v[f[1]], v[f[2]])), len(sub(v[f[2]], v[f[0]])));
        let p = (x + y + z) / 2.0;
        let area = (p * (p - x) * (p - y) * (p - z)).max(0.0).sqrt();
        for &i in f {
            a[i] += area / 3.0;
        }
    }
    a
}

/// Cyclic Jacobi eigenvalue iteration on a symmetric matrix; returns
/// ascending eigenvalues and the matching eigenvectors as columns.
pub fn jacobi_eigen(mut a: Vec<Vec<f64>>) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = a.len();
    let mut v: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect();
    for _sweep in 0..100 {
        let off: f64 = (0..n).flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j))).map(|(i, j)| a[i][j] * a[i][j]).sum();
        let scale: f64 = (0..n).map(|i| a[i][i] * a[i][i]).sum::<f64>().max(1e-300);
        if off <= 1e-30 * scale {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[k][p], a[k][q]);
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[p][k], a[q][k]);
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let (vkp, vkq) = (v[k][p], v[k][q]);
                    v[k][p] = c * vkp - s * vkq;
                    v[k][q] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| a[x][x].total_cmp(&a[y][y]));
    let vals = order.iter().map(|&i| a[i][i]).collect();
    let vecs = (0..n).map(|r| order.iter().map(|&c| v[r][c]).collect()).collect();
    (vals, vecs)
}

/// All generalized eigenvalues of `S φ = λ A φ` via Jacobi on `A^{-1/2} S A^{-1/2}`.
pub fn dense_generalized_eigenvalues(mesh: &Mesh) -> Vec<f64> {
    let s = dense_cotangent(mesh);
    let a = heron_areas(mesh);
    let n = a.len();
    let b = (0..n).map(|i| (0..n).map(|j| s[i][j] / (a[i] * a[j]).sqrt()).collect()).collect();
    jacobi_eigen(b).0
}

/// Shortest paths along mesh edges.
pub fn dijkstra(mesh: &Mesh, source: usize) -> Vec<f64> {
    let mut dist = vec![f64::INFINITY; mesh.vertex_count()];
    dist[source] = 0.0;
    let mut heap = BinaryHeap::new();
    heap.push(Reverse((0u64, source)));
    while let Some(Reverse((bits, v))) = heap.pop() {
        let d = f64::from_bits(bits);
        if d > dist[v] {
            continue;
        }
        for &w in mesh.neighbors(v) {
            let nd = d + mesh.edge_length(v, w);
            if nd < dist[w] {
                dist[w] = nd;
                heap.push(Reverse((nd.to_bits(), w)));
            }
        }
    }
    dist
}

/// Patch operator evaluated densely from the charts: every vertex of the
/// mesh is a candidate, entries outside a chart have zero weight.
pub fn dense_patch(n: usize, charts: &[LocalChart], areas: &[f64], p: &PatchParams) -> Vec<Vec<f64>> {
    let mut rows = Vec::new();
    for chart in charts {
        let rho0 = chart.disc_radius;
        let mut coord = vec![None; n];
        for e in &chart.entries {
            coord[e.vertex] = Some((e.rho, if e.vertex == chart.center { None } else { Some(e.theta) }));
        }
        let degenerate = chart.entries.len() < 4;
        for k in 0..p.n_rho {
            for j in 0..p.n_theta {
                let rk = (k as f64 + 0.5) * rho0 / p.n_rho as f64;
                let tj = TAU * j as f64 / p.n_theta as f64;
                let mut w = vec![0.0; n];
                if !degenerate {
                    for x in 0..n {
                        if let Some((rho, theta)) = coord[x] {
                            let vr = (-(rho - rk).powi(2) / p.sigma_rho.powi(2)).exp();
                            let vt = match theta {
                                None => 1.0,
                                Some(t) => {
                                    let mut d = (t - tj).abs() % TAU;
                                    if d > TAU / 2.0 {
                                        d = TAU - d;
                                    }
                                    (-d * d / p.sigma_theta.powi(2)).exp()
                                }
                            };
                            w[x] = vr * vt * areas[x];
                        }
                    }
                    let max = w.iter().cloned().fold(0.0, f64::max);
                    for x in w.iter_mut() {
                        if *x < 1e-6 * max {
                            *x = 0.0;
                        }
                    }
                    let total: f64 = w.iter().sum();
                    if total > 0.0 {
                        w.iter_mut().for_each(|x| *x /= total);
                    }
                }
                rows.push(w);
            }
        }
    }
    rows
}

/// `|a − b| / max(|a|, |b|, floor)`.
pub fn rel_err(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}

/// Central difference of `f` in coordinate `i` of `x`.
pub fn central_difference(f: &mut dyn FnMut(&[f64]) -> f64, x: &[f64], i: usize, h: f64) -> f64 {
    let mut xp = x.to_vec();
    xp[i] += h;
    let fp = f(&xp);
    xp[i] -= 2.0 * h;
    let fm = f(&xp);
    (fp - fm) / (2.0 * h)
}

/// Worst relative error between `grad` and central differences of `f` over
/// the given coordinates.
pub fn gradient_check(f: &mut dyn FnMut(&[f64]) -> f64, x: &[f64], grad: &[f64], coords: &[usize], h: f64) -> f64 {
    coords
        .iter()
        .map(|&i| rel_err(central_difference(f, x, i, h), grad[i], 1e-6))
        .fold(0.0, f64::max)
}

/// `count` distinct coordinates out of `len` (all of them if fewer).
pub fn probe_coords(len: usize, count: usize, rng: &mut impl Rng) -> Vec<usize> {
    if len <= count {
        return (0..len).collect();
    }
    rand::seq::index::sample(rng, len, count).into_vec()
}
