mod common;

use gcnn_core::charting::{all_charts, patch_operator, PatchOperator, PatchParams};
use gcnn_core::learn::{multinomial_loss, multinomial_loss_from_logits, siamese_loss};
use gcnn_core::mesh::{vertex_areas, Mesh};
use gcnn_core::net::layers::{
    amp_backward, amp_forward, cov_backward, cov_forward, ftm_backward, ftm_forward, ftm_from_patches,
    ftm_max_frequencies, gc_backward, gc_forward, lin_backward, lin_forward, relu_backward, relu_forward,
    softmax_backward, softmax_forward, GcShape,
};
use gcnn_core::net::{Model, ModelBuilder, Preset, ShapeContext};
use ndarray::{Array2, ArrayView2};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const H: f64 = 1e-5;
const PROBES: usize = 120;

struct Fixture {
    mesh: Mesh,
    op: PatchOperator,
    areas: Vec<f64>,
}

fn fixture(n_rho: usize, n_theta: usize) -> Fixture {
    let mesh = common::bumpy_sheet(10, 5, 14);
    let rho0 = 0.35;
    let areas = vertex_areas(&mesh);
    let op = patch_operator(&all_charts(&mesh, rho0).unwrap(), &areas, &PatchParams::with_defaults(rho0, n_rho, n_theta)).unwrap();
    Fixture { mesh, op, areas: areas.areas }
}

fn random(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |_| rng.gen_range(-1.0..1.0))
}

fn to_array(v: &[f64], rows: usize, cols: usize) -> Array2<f64> {
    Array2::from_shape_vec((rows, cols), v.to_vec()).unwrap()
}

fn inner(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    (a * b).sum()
}

/// Finite-difference check of `x ↦ ⟨f(x), g⟩` against `grad` on random coordinates.
fn check(name: &str, f: &mut dyn FnMut(&[f64]) -> f64, x: &[f64], grad: &[f64], tol: f64, rng: &mut ChaCha8Rng) {
    assert_eq!(x.len(), grad.len());
    let coords = common::probe_coords(x.len(), PROBES, rng);
    let err = common::gradient_check(f, x, grad, &coords, H);
    assert!(err <= tol, "{name}: worst relative error {err:e} over {} probes", coords.len());
}

#[test]
fn lin_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (x, w, g) = (random(30, 6, &mut rng), random(4, 6, &mut rng), random(30, 4, &mut rng));
    let b: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let (dx, dw, db) = lin_backward(x.view(), w.view(), g.view());
    let xs = x.as_slice().unwrap().to_vec();
    check("lin/x", &mut |v| inner(&lin_forward(to_array(v, 30, 6).view(), w.view(), Some(&b)).unwrap(), &g), &xs, dx.as_slice().unwrap(), 1e-4, &mut rng);
    let ws = w.as_slice().unwrap().to_vec();
    check("lin/w", &mut |v| inner(&lin_forward(x.view(), to_array(v, 4, 6).view(), Some(&b)).unwrap(), &g), &ws, dw.as_slice().unwrap(), 1e-4, &mut rng);
    check("lin/b", &mut |v| inner(&lin_forward(x.view(), w.view(), Some(v)).unwrap(), &g), &b, &db, 1e-4, &mut rng);
}

#[test]
fn relu_gradients_away_from_the_kink() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let x = Array2::from_shape_fn((30, 5), |_| {
        let m: f64 = rng.gen_range(0.01..1.0);
        if rng.gen_bool(0.5) { m } else { -m }
    });
    let g = random(30, 5, &mut rng);
    let dx = relu_backward(x.view(), g.view());
    check("relu", &mut |v| inner(&relu_forward(to_array(v, 30, 5).view()), &g), x.as_slice().unwrap(), dx.as_slice().unwrap(), 1e-4, &mut rng);
}

#[test]
fn gc_gradients() {
    let fx = fixture(3, 8);
    let n = fx.mesh.vertex_count();
    let shape = GcShape { q: 4, p: 3, n_rho: 3, n_theta: 8 };
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let x = random(n, 3, &mut rng);
    let filters: Vec<f64> = (0..shape.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let (out, patches) = gc_forward(x.view(), &filters, shape, &fx.op).unwrap();
    let g = random(n, out.ncols(), &mut rng);
    let (dx, df) = gc_backward(patches.view(), &filters, shape, &fx.op, g.view()).unwrap();
    check("gc/x", &mut |v| inner(&gc_forward(to_array(v, n, 3).view(), &filters, shape, &fx.op).unwrap().0, &g), x.as_slice().unwrap(), dx.as_slice().unwrap(), 1e-4, &mut rng);
    check("gc/filters", &mut |v| inner(&gc_forward(x.view(), v, shape, &fx.op).unwrap().0, &g), &filters, &df, 1e-4, &mut rng);
}

#[test]
fn amp_gradients_route_to_the_maximum() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (rows, n_rot, q) = (20, 8, 3);
    // Distinct values on a 1e-3 grid: no tie is within reach of the step.
    let mut values: Vec<f64> = (0..rows * n_rot * q).map(|i| i as f64 * 1e-3).collect();
    values.shuffle(&mut rng);
    let x = to_array(&values, rows, n_rot * q);
    let (out, argmax) = amp_forward(x.view(), n_rot).unwrap();
    let g = random(rows, out.ncols(), &mut rng);
    let dx = amp_backward(&argmax, n_rot, g.view());
    check("amp", &mut |v| inner(&amp_forward(to_array(v, rows, n_rot * q).view(), n_rot).unwrap().0, &g), &values, dx.as_slice().unwrap(), 1e-4, &mut rng);
}

#[test]
fn ftm_gradients() {
    let fx = fixture(3, 8);
    let n = fx.mesh.vertex_count();
    let kept = ftm_max_frequencies(8);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let x = random(n, 3, &mut rng);
    let (out, patches) = ftm_forward(x.view(), &fx.op, kept).unwrap();
    let g = random(n, out.ncols(), &mut rng);
    let dx = ftm_backward(patches.view(), &fx.op, 3, kept, g.view()).unwrap();
    check("ftm", &mut |v| inner(&ftm_forward(to_array(v, n, 3).view(), &fx.op, kept).unwrap().0, &g), x.as_slice().unwrap(), dx.as_slice().unwrap(), 1e-3, &mut rng);
}

#[test]
fn cov_gradients() {
    let fx = fixture(3, 8);
    let n = fx.mesh.vertex_count();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let x = random(n, 4, &mut rng);
    let g = random(1, 16, &mut rng);
    let dx = cov_backward(x.view(), &fx.areas, g.view()).unwrap();
    check("cov", &mut |v| inner(&cov_forward(to_array(v, n, 4).view(), &fx.areas).unwrap(), &g), x.as_slice().unwrap(), dx.as_slice().unwrap(), 1e-4, &mut rng);
}

#[test]
fn softmax_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let x = random(25, 6, &mut rng) * 3.0;
    let g = random(25, 6, &mut rng);
    let y = softmax_forward(x.view());
    let dx = softmax_backward(y.view(), g.view());
    check("softmax", &mut |v| inner(&softmax_forward(to_array(v, 25, 6).view()), &g), x.as_slice().unwrap(), dx.as_slice().unwrap(), 1e-4, &mut rng);
}

#[test]
fn loss_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let (rows, dim) = (40, 5);
    let a = random(rows, dim, &mut rng);
    let b = random(rows, dim, &mut rng);
    let positive: Vec<bool> = (0..rows).map(|i| i % 2 == 0).collect();
    // Margin 1.5 keeps some negatives inside and some outside the hinge.
    let (gamma, margin) = (0.3, 1.5);
    let l = siamese_loss(a.view(), b.view(), &positive, gamma, margin).unwrap();
    for i in (1..rows).step_by(2) {
        let d = (&a.row(i) - &b.row(i)).mapv(|v| v * v).sum().sqrt();
        assert!((d - margin).abs() > 1e-3, "negative {i} sits on the hinge");
    }
    check("siamese/a", &mut |v| siamese_loss(to_array(v, rows, dim).view(), b.view(), &positive, gamma, margin).unwrap().loss, a.as_slice().unwrap(), l.grad_a.as_slice().unwrap(), 1e-4, &mut rng);
    check("siamese/b", &mut |v| siamese_loss(a.view(), to_array(v, rows, dim).view(), &positive, gamma, margin).unwrap().loss, b.as_slice().unwrap(), l.grad_b.as_slice().unwrap(), 1e-4, &mut rng);

    let z = random(30, 7, &mut rng) * 2.0;
    let targets: Vec<usize> = (0..30).map(|_| rng.gen_range(0..7)).collect();
    let (_, grad) = multinomial_loss(softmax_forward(z.view()).view(), &targets).unwrap();
    check("multinomial", &mut |v| multinomial_loss(softmax_forward(to_array(v, 30, 7).view()).view(), &targets).unwrap().0, z.as_slice().unwrap(), grad.as_slice().unwrap(), 1e-4, &mut rng);
    let (_, grad) = multinomial_loss_from_logits(z.view(), &targets).unwrap();
    check("multinomial/logits", &mut |v| multinomial_loss_from_logits(to_array(v, 30, 7).view(), &targets).unwrap().0, z.as_slice().unwrap(), grad.as_slice().unwrap(), 1e-4, &mut rng);
}

fn model_objective(model: &mut Model, params: &[f64], x: ArrayView2<f64>, ctx: &ShapeContext, g: &Array2<f64>) -> f64 {
    model.set_parameters(params).unwrap();
    inner(&model.forward(x, ctx).unwrap().0, g)
}

#[test]
fn gcnn1_full_model_gradient() {
    let fx = fixture(5, 16);
    let n = fx.mesh.vertex_count();
    let ctx = ShapeContext::new(&fx.op, &fx.areas);
    let model = Preset::Gcnn1.builder(6, 5, 16, 0).build(11).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let x = random(n, 6, &mut rng);
    let (out, act) = model.forward(x.view(), &ctx).unwrap();
    let g = random(n, out.ncols(), &mut rng);
    let grads = model.backward(&act, g.view(), &ctx).unwrap();
    let theta = model.parameters().values().to_vec();
    let mut probe = model.clone();
    check("gcnn1/params", &mut |v| model_objective(&mut probe, v, x.view(), &ctx, &g), &theta, &grads.params, 1e-3, &mut rng);
    check(
        "gcnn1/input",
        &mut |v| inner(&model.forward(to_array(v, n, 6).view(), &ctx).unwrap().0, &g),
        x.as_slice().unwrap(),
        grads.input.as_slice().unwrap(),
        1e-3,
        &mut rng,
    );
}

#[test]
fn every_preset_backpropagates_consistently() {
    let fx = fixture(3, 8);
    let n = fx.mesh.vertex_count();
    let ctx = ShapeContext::new(&fx.op, &fx.areas);
    for preset in [Preset::Gcnn2, Preset::Retrieval] {
        let mut model = preset.builder(5, 3, 8, 0).build(3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let x = random(n, 5, &mut rng);
        let (out, act) = model.forward(x.view(), &ctx).unwrap();
        let g = random(out.nrows(), out.ncols(), &mut rng);
        let grads = model.backward(&act, g.view(), &ctx).unwrap();
        let theta = model.parameters().values().to_vec();
        check(preset.name(), &mut |v| model_objective(&mut model, v, x.view(), &ctx, &g), &theta, &grads.params, 1e-3, &mut rng);
    }
}

#[test]
fn zero_output_gradient_gives_zero_gradients() {
    let fx = fixture(5, 16);
    let ctx = ShapeContext::new(&fx.op, &fx.areas);
    let model = Preset::Gcnn1.builder(6, 5, 16, 0).build(2).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let x = random(fx.mesh.vertex_count(), 6, &mut rng);
    let (out, act) = model.forward(x.view(), &ctx).unwrap();
    let grads = model.backward(&act, Array2::zeros(out.raw_dim()).view(), &ctx).unwrap();
    assert!(grads.params.iter().all(|&v| v == 0.0));
    assert!(grads.input.iter().all(|&v| v == 0.0));
}

#[test]
fn identity_model_is_transparent() {
    let model = Model::identity(4);
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let x = random(9, 4, &mut rng);
    let g = random(9, 4, &mut rng);
    let ctx = ShapeContext::default();
    let (out, act) = model.forward(x.view(), &ctx).unwrap();
    assert_eq!(out, x);
    assert_eq!(model.backward(&act, g.view(), &ctx).unwrap().input, g);
}

/// Filter bank relabeled so that angular bin `j` becomes bin `j + shift`.
fn shift_filters(filters: &[f64], shape: GcShape, shift: usize) -> Vec<f64> {
    let mut out = vec![0.0; filters.len()];
    for q in 0..shape.q {
        for p in 0..shape.p {
            for k in 0..shape.n_rho {
                for j in 0..shape.n_theta {
                    out[shape.index(q, p, k, (j + shift) % shape.n_theta)] = filters[shape.index(q, p, k, j)];
                }
            }
        }
    }
    out
}

#[test]
fn amp_after_gc_ignores_the_angular_origin_exactly() {
    let fx = fixture(5, 16);
    let n = fx.mesh.vertex_count();
    let shape = GcShape { q: 6, p: 4, n_rho: 5, n_theta: 16 };
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let x = random(n, 4, &mut rng);
    let filters: Vec<f64> = (0..shape.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let reference = amp_forward(gc_forward(x.view(), &filters, shape, &fx.op).unwrap().0.view(), 16).unwrap().0;
    for shift in 1..16 {
        let moved = shift_filters(&filters, shape, shift);
        let out = amp_forward(gc_forward(x.view(), &moved, shape, &fx.op).unwrap().0.view(), 16).unwrap().0;
        let bits = |a: &Array2<f64>| a.iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&out), bits(&reference), "shift {shift}");
    }

    // The same through a model: relabel the GC block of the parameter vector.
    let ctx = ShapeContext::new(&fx.op, &fx.areas);
    let model = ModelBuilder::new(4).gc(6, 5, 16).amp().build(5).unwrap();
    let base = model.forward(x.view(), &ctx).unwrap().0;
    let mut moved = model.clone();
    moved.set_parameters(&shift_filters(model.parameters().values(), shape, 7)).unwrap();
    assert_eq!(moved.forward(x.view(), &ctx).unwrap().0, base);
}

#[test]
fn ftm_ignores_cyclic_patch_shifts() {
    let fx = fixture(5, 16);
    let n = fx.mesh.vertex_count();
    let (n_rho, n_theta, p) = (5, 16, 3);
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    let x = random(n, p, &mut rng);
    let (reference, patches) = ftm_forward(x.view(), &fx.op, ftm_max_frequencies(n_theta)).unwrap();
    for shift in 1..n_theta {
        let shifted = Array2::from_shape_fn(patches.raw_dim(), |(v, col)| {
            let (k, rest) = (col / (n_theta * p), col % (n_theta * p));
            let (j, c) = (rest / p, rest % p);
            patches[[v, (k * n_theta + (j + shift) % n_theta) * p + c]]
        });
        let out = ftm_from_patches(shifted.view(), n_rho, n_theta, p, ftm_max_frequencies(n_theta)).unwrap();
        for (a, b) in out.iter().zip(&reference) {
            assert!((a - b).abs() <= 1e-10, "shift {shift}");
        }
    }
}

#[test]
fn gc_on_zero_and_constant_fields() {
    let fx = fixture(3, 8);
    let n = fx.mesh.vertex_count();
    let shape = GcShape { q: 2, p: 2, n_rho: 3, n_theta: 8 };
    let mut rng = ChaCha8Rng::seed_from_u64(16);
    let filters: Vec<f64> = (0..shape.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let zero = gc_forward(Array2::zeros((n, 2)).view(), &filters, shape, &fx.op).unwrap().0;
    assert!(zero.iter().all(|&v| v == 0.0));
    let c = [0.7, -1.3];
    let field = Array2::from_shape_fn((n, 2), |(_, p)| c[p]);
    let out = gc_forward(field.view(), &filters, shape, &fx.op).unwrap().0;
    for q in 0..2 {
        let expect: f64 = (0..2)
            .flat_map(|p| (0..3).flat_map(move |k| (0..8).map(move |j| (p, k, j))))
            .map(|(p, k, j)| filters[shape.index(q, p, k, j)] * c[p])
            .sum();
        for v in 0..n {
            if fx.op.degenerate_vertices().contains(&v) {
                continue;
            }
            for r in 0..8 {
                assert!((out[[v, r * 2 + q]] - expect).abs() <= 1e-10);
            }
        }
    }
}

#[test]
fn cov_matches_weighted_variance_and_is_psd() {
    let fx = fixture(3, 8);
    let n = fx.mesh.vertex_count();
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let x = random(n, 1, &mut rng);
    let total: f64 = fx.areas.iter().sum();
    let mean: f64 = (0..n).map(|i| fx.areas[i] * x[[i, 0]]).sum::<f64>() / total;
    let var: f64 = (0..n).map(|i| fx.areas[i] * (x[[i, 0]] - mean).powi(2)).sum::<f64>() / total;
    assert!((cov_forward(x.view(), &fx.areas).unwrap()[[0, 0]] - var).abs() <= 1e-12);

    let p = 5;
    let y = random(n, p, &mut rng);
    let c = cov_forward(y.view(), &fx.areas).unwrap();
    let m: Vec<Vec<f64>> = (0..p).map(|r| (0..p).map(|col| c[[0, col * p + r]]).collect()).collect();
    for r in 0..p {
        for col in 0..p {
            assert!((m[r][col] - m[col][r]).abs() <= 1e-14);
        }
    }
    let (eigs, _) = common::jacobi_eigen(m);
    assert!(eigs.iter().all(|&e| e >= -1e-12));

    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut rng);
    let yp = Array2::from_shape_fn((n, p), |(i, j)| y[[perm[i], j]]);
    let ap: Vec<f64> = perm.iter().map(|&i| fx.areas[i]).collect();
    let cp = cov_forward(yp.view(), &ap).unwrap();
    for (a, b) in c.iter().zip(&cp) {
        assert!((a - b).abs() <= 1e-13);
    }
}
