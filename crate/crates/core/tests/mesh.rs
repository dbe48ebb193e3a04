mod common;

use gcnn_core::mesh::{
    geodesic_diameter, make_test_mesh, parse_obj, parse_off, vertex_areas, write_obj, write_off, Mesh, TestMeshKind,
};
use proptest::prelude::*;

fn generated() -> Vec<Mesh> {
    vec![
        make_test_mesh(TestMeshKind::GridPlane { nx: 7, ny: 5, spacing: 0.3 }).unwrap(),
        make_test_mesh(TestMeshKind::Icosphere { subdivisions: 2, radius: 1.7 }).unwrap(),
        make_test_mesh(TestMeshKind::Annulus {
            n_radial: 4,
            n_angular: 24,
            inner_radius: 0.5,
            outer_radius: 1.25,
        })
        .unwrap(),
        common::bumpy_sheet(9, 9, 4),
    ]
}

#[test]
fn off_round_trip_is_bit_identical() {
    for m in generated() {
        let text = write_off(&m);
        let back = parse_off(&text).unwrap();
        assert_eq!(back.faces(), m.faces());
        for (a, b) in back.vertices().iter().zip(m.vertices()) {
            for c in 0..3 {
                assert_eq!(a[c].to_bits(), b[c].to_bits());
            }
        }
        assert_eq!(write_off(&back), text);
    }
}

#[test]
fn obj_round_trip_is_bit_identical() {
    for m in generated() {
        let back = parse_obj(&write_obj(&m)).unwrap();
        assert_eq!(back.faces(), m.faces());
        let bits = |m: &Mesh| m.vertices().iter().flat_map(|p| p.map(f64::to_bits)).collect::<Vec<_>>();
        assert_eq!(bits(&back), bits(&m));
    }
}

#[test]
fn accepted_meshes_are_edge_manifold() {
    for m in generated() {
        for e in m.edges() {
            let count = m.faces().iter().filter(|f| f.contains(&e.vertices.0) && f.contains(&e.vertices.1)).count();
            assert!(count == 1 || count == 2, "edge {:?} has {count} faces", e.vertices);
        }
    }
}

#[test]
fn unit_square_diameter() {
    let m = make_test_mesh(TestMeshKind::GridPlane { nx: 2, ny: 2, spacing: 1.0 }).unwrap();
    let d = geodesic_diameter(&m, 4, 0).unwrap();
    assert!((d - 2f64.sqrt()).abs() <= 0.02 * 2f64.sqrt(), "{d}");
}

#[test]
fn icosphere_diameter_is_half_circumference() {
    let m = make_test_mesh(TestMeshKind::Icosphere { subdivisions: 3, radius: 1.0 }).unwrap();
    let d = geodesic_diameter(&m, 16, 1).unwrap();
    assert!((d - std::f64::consts::PI).abs() <= 0.03 * std::f64::consts::PI, "{d}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn vertex_areas_sum_to_surface_area(nx in 3usize..12, ny in 3usize..12, jitter in 0.0f64..0.35, seed in any::<u64>(), lift in -0.5f64..0.5) {
        let m = common::jittered_grid(nx, ny, 0.1, jitter.max(1e-3), seed)
            .map_vertices(|p| [p[0], p[1], lift * p[0] * p[1]])
            .unwrap();
        let areas = vertex_areas(&m);
        let by_heron: f64 = common::heron_areas(&m).iter().sum();
        let by_faces: f64 = (0..m.face_count()).map(|f| m.face_area(f)).sum();
        prop_assert!(areas.areas.iter().all(|&a| a > 0.0));
        prop_assert!((areas.total - by_faces).abs() <= 1e-12 * by_faces);
        prop_assert!((areas.total - by_heron).abs() <= 1e-10 * by_heron);
    }
}
