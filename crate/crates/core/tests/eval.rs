use gcnn_core::eval::{auc, cmc, precision_recall, princeton, roc, Curve};
use gcnn_core::mesh::{make_test_mesh, TestMeshKind};
use ndarray::Array2;
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn assert_well_formed(c: &Curve, strictly_increasing: bool, monotone: bool) {
    for w in c.points.windows(2) {
        if strictly_increasing {
            assert!(w[1].0 > w[0].0);
        } else {
            assert!(w[1].0 >= w[0].0);
        }
        if monotone {
            assert!(w[1].1 >= w[0].1);
        }
    }
    assert!(c.points.iter().all(|p| (0.0..=1.0).contains(&p.1)));
}

#[test]
fn random_descriptors_follow_the_uniform_rank_model() {
    let (n, q, trials) = (100, 5, 50);
    let ks = [1, 5, 20, 50];
    let mut sums = vec![0.0; ks.len()];
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let gt: Vec<usize> = (0..n).collect();
    for _ in 0..trials {
        let query = Array2::from_shape_fn((n, q), |_| rng.gen::<f64>());
        let reference = Array2::from_shape_fn((n, q), |_| rng.gen::<f64>());
        let c = cmc(query.view(), reference.view(), &gt, n).unwrap();
        assert_well_formed(&c, true, true);
        assert_eq!(c.points.last().unwrap().1, 1.0);
        for (s, &k) in sums.iter_mut().zip(&ks) {
            *s += c.points[k - 1].1;
        }
    }
    for (s, &k) in sums.iter().zip(&ks) {
        let p = k as f64 / n as f64;
        let sigma = (p * (1.0 - p) / (n * trials) as f64).sqrt();
        let mean = s / trials as f64;
        assert!((mean - p).abs() <= 3.0 * sigma, "k={k}: {mean} vs {p} (sigma {sigma})");
    }
}

#[test]
fn total_ground_truth_reaches_one() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let query = Array2::from_shape_fn((30, 4), |_| rng.gen::<f64>());
    let reference = Array2::from_shape_fn((40, 4), |_| rng.gen::<f64>());
    let gt: Vec<usize> = (0..30).map(|_| rng.gen_range(0..40)).collect();
    let c = cmc(query.view(), reference.view(), &gt, 40).unwrap();
    assert_eq!(c.points.last().unwrap(), &(40.0, 1.0));
    assert!(cmc(query.view(), reference.view(), &gt, 41).is_err());
}

#[test]
fn ties_break_towards_lower_reference_index() {
    let query = Array2::from_shape_vec((2, 1), vec![0.0, 0.0]).unwrap();
    let reference = Array2::from_shape_vec((3, 1), vec![1.0, -1.0, 1.0]).unwrap();
    // All references are equidistant: truth 0 ranks first, truth 2 last.
    let c = cmc(query.view(), reference.view(), &[0, 2], 3).unwrap();
    assert_eq!(c.points, vec![(1.0, 0.5), (2.0, 0.5), (3.0, 1.0)]);
}

#[test]
fn identical_distance_distributions_give_chance_auc() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let pos: Vec<f64> = (0..10_000).map(|_| rng.gen::<f64>()).collect();
    let neg: Vec<f64> = (0..10_000).map(|_| rng.gen::<f64>()).collect();
    let c = roc(&pos, &neg, None).unwrap();
    assert_well_formed(&c, false, true);
    assert_eq!(c.points.first().unwrap(), &(0.0, 0.0));
    assert_eq!(c.points.last().unwrap(), &(1.0, 1.0));
    assert!((auc(&c) - 0.5).abs() <= 0.05, "{}", auc(&c));
}

#[test]
fn roc_separated_and_single_threshold() {
    let c = roc(&[0.1, 0.2, 0.3], &[0.5, 0.9], None).unwrap();
    assert!(c.points.contains(&(0.0, 1.0)));
    assert_eq!(auc(&c), 1.0);
    let c = roc(&[0.1, 2.0], &[0.5], Some(&[f64::INFINITY])).unwrap();
    assert_eq!(c.points, vec![(0.0, 0.0), (1.0, 1.0)]);
}

#[test]
fn princeton_counts_distances_from_a_constant_prediction() {
    let m = make_test_mesh(TestMeshKind::GridPlane { nx: 15, ny: 15, spacing: 0.1 }).unwrap();
    let n = m.vertex_count();
    let target = 7 * 15 + 3;
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let gt: Vec<usize> = (0..80).map(|_| rng.gen_range(0..n)).collect();
    let pred = vec![target; gt.len()];
    let diameter = 2.0;
    let c = princeton(&pred, &gt, &m, diameter, 0.5, 40).unwrap();
    assert_well_formed(&c, true, true);
    assert_eq!(c.points.len(), 41);
    // Planar grid: geodesic distance is Euclidean. Count with a sliver of
    // slack for the marching error on either side of each radius.
    let v = m.vertices();
    let euclid: Vec<f64> = gt
        .iter()
        .map(|&t| ((v[t][0] - v[target][0]).powi(2) + (v[t][1] - v[target][1]).powi(2)).sqrt())
        .collect();
    for &(r, frac) in &c.points {
        let radius = r * diameter;
        let lo = euclid.iter().filter(|&&d| d <= radius * (1.0 - 0.02)).count() as f64 / gt.len() as f64;
        let hi = euclid.iter().filter(|&&d| d <= radius * (1.0 + 0.02) + 1e-12).count() as f64 / gt.len() as f64;
        assert!(lo <= frac && frac <= hi, "r={r}: {frac} outside [{lo}, {hi}]");
    }
    let exact = princeton(&gt, &gt, &m, diameter, 0.5, 40).unwrap();
    assert!(exact.points.iter().all(|p| p.1 == 1.0));
}

/// Exact expectation of `R / (position of the last relevant item)` for a
/// uniformly random ranking of `g` items with `r` relevant ones.
fn expected_precision_at_full_recall(g: usize, r: usize) -> f64 {
    let binom = |n: usize, k: usize| -> f64 { (0..k).map(|i| (n - i) as f64 / (k - i) as f64).product() };
    let total = binom(g, r);
    (r..=g).map(|m| binom(m - 1, r - 1) / total * r as f64 / m as f64).sum()
}

#[test]
fn random_rankings_match_the_permutation_model() {
    // Three classes of sizes 4, 6 and 10; the gallery excludes the query.
    let labels: Vec<usize> = (0..20).map(|i| if i < 4 { 0 } else if i < 10 { 1 } else { 2 }).collect();
    let sizes = [4, 6, 10];
    let g = labels.len() - 1;
    let expect = labels.iter().map(|&l| expected_precision_at_full_recall(g, sizes[l] - 1)).sum::<f64>() / labels.len() as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let trials = 400;
    let values: Vec<f64> = (0..trials)
        .map(|_| {
            let rankings: Vec<Vec<usize>> = (0..labels.len())
                .map(|_| {
                    let mut r: Vec<usize> = (0..labels.len()).collect();
                    r.shuffle(&mut rng);
                    r
                })
                .collect();
            let c = precision_recall(&rankings, &labels, 10).unwrap();
            assert_well_formed(&c, true, false);
            c.points.last().unwrap().1
        })
        .collect();
    let mean = values.iter().sum::<f64>() / trials as f64;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (trials - 1) as f64;
    let sigma = (var / trials as f64).sqrt();
    assert!((mean - expect).abs() <= 3.0 * sigma, "{mean} vs {expect} (sigma {sigma})");
}

#[test]
fn singleton_classes_are_skipped() {
    let labels = vec![0, 0, 1];
    let rankings = vec![vec![0, 1, 2], vec![1, 0, 2], vec![2, 0, 1]];
    let c = precision_recall(&rankings, &labels, 4).unwrap();
    assert_eq!(c.samples, 2);
    assert!(c.points.iter().all(|p| p.1 == 1.0));
}

proptest! {
    #[test]
    fn curves_ignore_monotone_distance_transforms(seed in any::<u64>(), scale in 0.1f64..10.0, shift in -5.0f64..5.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let query = Array2::from_shape_fn((20, 3), |_| rng.gen::<f64>());
        let reference = Array2::from_shape_fn((25, 3), |_| rng.gen::<f64>());
        let gt: Vec<usize> = (0..20).map(|_| rng.gen_range(0..25)).collect();
        // Scaling descriptors scales every distance.
        let a = cmc(query.view(), reference.view(), &gt, 25).unwrap();
        let b = cmc((&query * scale).view(), (&reference * scale).view(), &gt, 25).unwrap();
        prop_assert_eq!(a, b);
        let pos: Vec<f64> = (0..30).map(|_| rng.gen::<f64>()).collect();
        let neg: Vec<f64> = (0..30).map(|_| rng.gen::<f64>() + 0.3).collect();
        let f = |d: &f64| (scale * d).exp() + shift;
        let r1 = roc(&pos, &neg, None).unwrap();
        let r2 = roc(&pos.iter().map(f).collect::<Vec<_>>(), &neg.iter().map(f).collect::<Vec<_>>(), None).unwrap();
        prop_assert_eq!(r1, r2);
    }
}
