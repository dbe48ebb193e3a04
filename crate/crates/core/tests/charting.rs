mod common;

use gcnn_core::charting::{all_charts, circular_distance, fast_marching, local_chart, patch_operator, PatchParams};
use gcnn_core::mesh::{geodesic_diameter, make_test_mesh, vertex_areas, Mesh, TestMeshKind};
use ndarray::Array2;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn grid(n: usize, spacing: f64) -> Mesh {
    make_test_mesh(TestMeshKind::GridPlane { nx: n, ny: n, spacing }).unwrap()
}

fn rigid(m: &Mesh) -> Mesh {
    let (s, c) = 1.1f64.sin_cos();
    m.map_vertices(|p| [c * p[0] - s * p[2] + 2.0, p[1] - 0.5, s * p[0] + c * p[2] + 7.0]).unwrap()
}

#[test]
fn planar_grid_distances_are_euclidean() {
    let m = grid(40, 1.0 / 39.0);
    for source in [0, 20 * 40 + 20, 39, 17 * 40 + 5] {
        let field = fast_marching(&m, source, f64::INFINITY);
        let ps = m.vertices()[source];
        for (v, &d) in field.distances.iter().enumerate() {
            if v == source {
                assert_eq!(d, 0.0);
                continue;
            }
            let p = m.vertices()[v];
            let exact = ((p[0] - ps[0]).powi(2) + (p[1] - ps[1]).powi(2)).sqrt();
            assert!((d - exact).abs() <= 0.02 * exact, "source {source} vertex {v}: {d} vs {exact}");
        }
    }
}

#[test]
fn fast_marching_never_exceeds_edge_paths() {
    let meshes = [grid(40, 0.025), common::bumpy_sheet(20, 20, 3), make_test_mesh(TestMeshKind::Icosphere { subdivisions: 3, radius: 1.0 }).unwrap()];
    for m in &meshes {
        for source in [0, m.vertex_count() / 2, m.vertex_count() - 1] {
            let fmm = fast_marching(m, source, f64::INFINITY);
            let dij = common::dijkstra(m, source);
            for v in 0..m.vertex_count() {
                assert!(fmm.distances[v] <= dij[v] + 1e-9, "vertex {v}: {} > {}", fmm.distances[v], dij[v]);
            }
        }
    }
}

#[test]
fn fast_marching_triangle_inequality_and_reach() {
    let m = common::bumpy_sheet(18, 18, 8);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..10 {
        let source = rng.gen_range(0..m.vertex_count());
        let reach = rng.gen_range(0.1..0.6);
        let field = fast_marching(&m, source, reach);
        assert_eq!(field.distances[source], 0.0);
        for v in 0..m.vertex_count() {
            let d = field.distances[v];
            if d.is_finite() {
                assert!(d <= reach + m.max_edge_length());
                for &w in m.neighbors(v) {
                    if field.distances[w].is_finite() {
                        assert!(field.distances[w] <= d + m.edge_length(v, w) + 1e-12);
                    }
                }
            }
        }
    }
}

#[test]
fn charts_are_connected_discs() {
    let sphere = make_test_mesh(TestMeshKind::Icosphere { subdivisions: 4, radius: 1.0 }).unwrap();
    let annulus = make_test_mesh(TestMeshKind::Annulus {
        n_radial: 8,
        n_angular: 64,
        inner_radius: 0.4,
        outer_radius: 1.0,
    })
    .unwrap();
    let sheet = common::bumpy_sheet(30, 30, 2);
    for m in [&sphere, &annulus, &sheet] {
        let diameter = geodesic_diameter(m, 8, 0).unwrap();
        for fraction in [0.01, 0.05, 0.1] {
            let rho0 = fraction * diameter;
            for chart in all_charts(m, rho0).unwrap() {
                assert!(chart.is_connected(m), "chart {} at rho0 {rho0}", chart.center);
                assert_eq!(chart.entries[0].vertex, chart.center);
                assert_eq!(chart.entries[0].rho, 0.0);
                for e in &chart.entries {
                    assert!(e.rho <= rho0);
                    assert!(e.theta.is_finite() && (0.0..std::f64::consts::TAU).contains(&e.theta));
                }
            }
        }
    }
}

#[test]
fn charts_survive_rigid_motion() {
    let m = common::bumpy_sheet(16, 16, 4);
    let moved = rigid(&m);
    for v in [0, 40, 135, 200] {
        let (a, b) = (local_chart(&m, v, 0.3).unwrap(), local_chart(&moved, v, 0.3).unwrap());
        assert_eq!(a.entries.len(), b.entries.len());
        for (x, y) in a.entries.iter().zip(&b.entries) {
            assert_eq!(x.vertex, y.vertex);
            assert!((x.rho - y.rho).abs() <= 1e-9);
            assert!(circular_distance(x.theta, y.theta) <= 1e-9);
        }
    }
    let params = PatchParams::with_defaults(0.3, 5, 16);
    let p0 = patch_operator(&all_charts(&m, 0.3).unwrap(), &vertex_areas(&m), &params).unwrap();
    let p1 = patch_operator(&all_charts(&moved, 0.3).unwrap(), &vertex_areas(&moved), &params).unwrap();
    let (d0, d1) = (p0.matrix().to_dense(), p1.matrix().to_dense());
    assert!(d0.iter().zip(&d1).all(|(x, y)| (x - y).abs() <= 1e-9));
}

#[test]
fn patch_operator_matches_dense_evaluation() {
    let m = common::bumpy_sheet(10, 5, 14);
    assert_eq!(m.vertex_count(), 50);
    let areas = vertex_areas(&m);
    for (rho0, n_rho, n_theta) in [(0.35, 5, 16), (0.5, 3, 8)] {
        let charts = all_charts(&m, rho0).unwrap();
        let params = PatchParams::with_defaults(rho0, n_rho, n_theta);
        let op = patch_operator(&charts, &areas, &params).unwrap();
        let oracle = common::dense_patch(50, &charts, &common::heron_areas(&m), &params);
        let dense = op.matrix().to_dense();
        assert_eq!(dense.nrows(), oracle.len());
        for (r, row) in oracle.iter().enumerate() {
            for c in 0..50 {
                assert!((dense[[r, c]] - row[c]).abs() <= 1e-10, "row {r} col {c}");
            }
        }
        for x in 0..50 {
            for k in 0..n_rho {
                for j in 0..n_theta {
                    assert_eq!(op.row_index(x, k, j), (x * n_rho + k) * n_theta + j);
                }
            }
        }
    }
}

#[test]
fn rows_are_normalized_and_reproduce_constants() {
    let m = make_test_mesh(TestMeshKind::Icosphere { subdivisions: 3, radius: 1.0 }).unwrap();
    let rho0 = 0.2;
    let op = patch_operator(&all_charts(&m, rho0).unwrap(), &vertex_areas(&m), &PatchParams::with_defaults(rho0, 5, 16)).unwrap();
    let n = m.vertex_count();
    assert!(op.degenerate_vertices().is_empty());
    let c = Array2::from_elem((n, 1), -2.5);
    let patches = op.apply(c.view()).unwrap();
    for r in 0..op.matrix().rows() {
        let row: Vec<(usize, f64)> = op.matrix().row(r).collect();
        assert!(!row.is_empty());
        assert!((row.iter().map(|e| e.1).sum::<f64>() - 1.0).abs() <= 1e-10);
        assert!(row.iter().all(|e| e.1 >= 0.0));
        assert!((patches[[r, 0]] + 2.5).abs() <= 1e-10 * 2.5);
    }
    assert_eq!(op.apply(Array2::zeros((n, 3)).view()).unwrap(), Array2::<f64>::zeros((op.matrix().rows(), 3)));
}

#[test]
fn adjoint_identity_on_random_probes() {
    let m = common::bumpy_sheet(14, 14, 6);
    let n = m.vertex_count();
    let op = patch_operator(&all_charts(&m, 0.25).unwrap(), &vertex_areas(&m), &PatchParams::with_defaults(0.25, 5, 16)).unwrap();
    let rows = op.matrix().rows();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..100 {
        let f = Array2::from_shape_fn((n, 2), |_| rng.gen_range(-1.0..1.0));
        let g = Array2::from_shape_fn((rows, 2), |_| rng.gen_range(-1.0..1.0));
        let lhs = (&op.apply(f.view()).unwrap() * &g).sum();
        let rhs = (&f * &op.transpose_apply(g.view()).unwrap()).sum();
        assert!((lhs - rhs).abs() <= 1e-10 * lhs.abs().max(1.0), "{lhs} vs {rhs}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn apply_is_linear(seed in any::<u64>(), alpha in -3.0f64..3.0, beta in -3.0f64..3.0) {
        let m = common::jittered_grid(9, 9, 0.1, 0.2, seed);
        let op = patch_operator(&all_charts(&m, 0.3).unwrap(), &vertex_areas(&m), &PatchParams::with_defaults(0.3, 3, 8)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 1);
        let f = Array2::from_shape_fn((81, 2), |_| rng.gen_range(-1.0..1.0));
        let g = Array2::from_shape_fn((81, 2), |_| rng.gen_range(-1.0..1.0));
        let combined = op.apply((&f * alpha + &g * beta).view()).unwrap();
        let separate = op.apply(f.view()).unwrap() * alpha + op.apply(g.view()).unwrap() * beta;
        for (a, b) in combined.iter().zip(&separate) {
            prop_assert!((a - b).abs() <= 1e-12);
        }
        let p = Array2::from_shape_fn((op.matrix().rows(), 2), |_| rng.gen_range(-1.0..1.0));
        let lhs = (&op.apply(f.view()).unwrap() * &p).sum();
        let rhs = (&f * &op.transpose_apply(p.view()).unwrap()).sum();
        prop_assert!((lhs - rhs).abs() <= 1e-10 * lhs.abs().max(1.0));
    }
}
