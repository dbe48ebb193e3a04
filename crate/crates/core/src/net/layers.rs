//! Forward and backward kernels of the individual layers.
//!
//! Activations are `rows × features` arrays with one row per vertex (COV
//! collapses to a single row). Feature layouts:
//! GC output `[rotation][q]`, FTM output `[radial][frequency][channel]`,
//! GC filters `[q][p][radial][angular]`, patches `[radial][angular][p]`.

use std::f64::consts::TAU;

use ndarray::{s, Array2, ArrayView2, Axis, Zip};
use rayon::prelude::*;

use super::NetError;
use crate::charting::PatchOperator;

/// Smallest modulus used when differentiating `|z|`.
pub const MODULUS_GUARD: f64 = 1e-12;

fn check_cols(x: &ArrayView2<f64>, expected: usize) -> Result<(), NetError> {
    if x.ncols() != expected {
        return Err(NetError::DimensionMismatch {
            expected,
            found: x.ncols(),
        });
    }
    Ok(())
}

/// `x Wᵀ (+ b)` for `W` of shape `Q × P`.
pub fn lin_forward(x: ArrayView2<f64>, w: ArrayView2<f64>, bias: Option<&[f64]>) -> Result<Array2<f64>, NetError> {
    check_cols(&x, w.ncols())?;
    let mut out = x.dot(&w.t());
    if let Some(b) = bias {
        for mut row in out.rows_mut() {
            row.iter_mut().zip(b).for_each(|(o, &bi)| *o += bi);
        }
    }
    Ok(out)
}

/// Gradients `(dx, dW, db)` of the linear map.
pub fn lin_backward(x: ArrayView2<f64>, w: ArrayView2<f64>, g: ArrayView2<f64>) -> (Array2<f64>, Array2<f64>, Vec<f64>) {
    let dx = g.dot(&w);
    let dw = g.t().dot(&x);
    let db = g.sum_axis(Axis(0)).to_vec();
    (dx, dw, db)
}

pub fn relu_forward(x: ArrayView2<f64>) -> Array2<f64> {
    x.mapv(|v| v.max(0.0))
}

/// Subgradient 0 at 0.
pub fn relu_backward(x: ArrayView2<f64>, g: ArrayView2<f64>) -> Array2<f64> {
    let mut out = g.to_owned();
    Zip::from(&mut out).and(&x).for_each(|o, &xi| {
        if xi <= 0.0 {
            *o = 0.0;
        }
    });
    out
}

/// Shape bookkeeping for a GC filter bank.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GcShape {
    pub q: usize,
    pub p: usize,
    pub n_rho: usize,
    pub n_theta: usize,
}

impl GcShape {
    pub fn len(&self) -> usize {
        self.q * self.p * self.n_rho * self.n_theta
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn index(&self, q: usize, p: usize, k: usize, j: usize) -> usize {
        ((q * self.p + p) * self.n_rho + k) * self.n_theta + j
    }

    /// Row of the flattened patch feature `(k, j, p)`.
    fn patch_index(&self, k: usize, j: usize, p: usize) -> usize {
        (k * self.n_theta + j) * self.p + p
    }

    /// Filter bank rotated by `r` angular bins as a `(N_ρ·N_θ·P) × Q` matrix.
    fn rotated(&self, filters: &[f64], r: usize) -> Array2<f64> {
        let mut m = Array2::zeros((self.n_rho * self.n_theta * self.p, self.q));
        for q in 0..self.q {
            for p in 0..self.p {
                for k in 0..self.n_rho {
                    for j in 0..self.n_theta {
                        m[[self.patch_index(k, j, p), q]] = filters[self.index(q, p, k, (j + r) % self.n_theta)];
                    }
                }
            }
        }
        m
    }
}

fn check_op(op: &PatchOperator, x: &ArrayView2<f64>) -> Result<(), NetError> {
    if x.nrows() != op.n_vertices() {
        return Err(NetError::DimensionMismatch {
            expected: op.n_vertices(),
            found: x.nrows(),
        });
    }
    Ok(())
}

/// Patches of every channel as an `N × (N_ρ·N_θ·P)` array.
pub fn extract_patches(x: ArrayView2<f64>, op: &PatchOperator) -> Result<Array2<f64>, NetError> {
    check_op(op, &x)?;
    let n = x.nrows();
    let width = op.bins() * x.ncols();
    let flat = op.apply(x)?;
    Ok(flat.into_shape_with_order((n, width)).expect("contiguous patch array"))
}

fn scatter_patches(dpatches: Array2<f64>, op: &PatchOperator, p: usize) -> Result<Array2<f64>, NetError> {
    let n = dpatches.nrows();
    let flat = dpatches
        .as_standard_layout()
        .into_owned()
        .into_shape_with_order((n * op.bins(), p))
        .expect("contiguous patch gradient");
    Ok(op.transpose_apply(flat.view())?)
}

/// Geodesic convolution for all `N_θ` filter rotations. Returns the
/// `N × (N_θ·Q)` response and the patches needed by the backward pass.
pub fn gc_forward(
    x: ArrayView2<f64>,
    filters: &[f64],
    shape: GcShape,
    op: &PatchOperator,
) -> Result<(Array2<f64>, Array2<f64>), NetError> {
    if op.n_rho() != shape.n_rho || op.n_theta() != shape.n_theta {
        return Err(NetError::BinMismatch {
            filter: (shape.n_rho, shape.n_theta),
            operator: (op.n_rho(), op.n_theta()),
        });
    }
    check_cols(&x, shape.p)?;
    assert_eq!(filters.len(), shape.len(), "filter bank length");
    let patches = extract_patches(x, op)?;
    let mut out = Array2::zeros((x.nrows(), shape.n_theta * shape.q));
    // One product per rotation so that a response depends only on the
    // rotated bank, not on which rotation produced it.
    for r in 0..shape.n_theta {
        let resp = patches.dot(&shape.rotated(filters, r));
        out.slice_mut(s![.., r * shape.q..(r + 1) * shape.q]).assign(&resp);
    }
    Ok((out, patches))
}

/// Gradients `(dx, dfilters)` of [`gc_forward`].
pub fn gc_backward(
    patches: ArrayView2<f64>,
    filters: &[f64],
    shape: GcShape,
    op: &PatchOperator,
    g: ArrayView2<f64>,
) -> Result<(Array2<f64>, Vec<f64>), NetError> {
    check_cols(&g, shape.n_theta * shape.q)?;
    let mut dfilters = vec![0.0; shape.len()];
    let mut dpatches = Array2::<f64>::zeros(patches.raw_dim());
    for r in 0..shape.n_theta {
        let gr = g.slice(s![.., r * shape.q..(r + 1) * shape.q]);
        let df = patches.t().dot(&gr);
        for q in 0..shape.q {
            for p in 0..shape.p {
                for k in 0..shape.n_rho {
                    for j in 0..shape.n_theta {
                        dfilters[shape.index(q, p, k, (j + r) % shape.n_theta)] += df[[shape.patch_index(k, j, p), q]];
                    }
                }
            }
        }
        dpatches += &gr.dot(&shape.rotated(filters, r).t());
    }
    Ok((scatter_patches(dpatches, op, shape.p)?, dfilters))
}

/// Maximum over rotations of an `N × (n_rot·Q)` input laid out
/// `[rotation][q]`. Ties go to the lowest rotation index.
pub fn amp_forward(x: ArrayView2<f64>, n_rot: usize) -> Result<(Array2<f64>, Vec<u32>), NetError> {
    if n_rot == 0 || x.ncols() % n_rot != 0 {
        return Err(NetError::DimensionMismatch {
            expected: n_rot,
            found: x.ncols(),
        });
    }
    let q = x.ncols() / n_rot;
    let n = x.nrows();
    let mut out = Array2::zeros((n, q));
    let mut arg = vec![0u32; n * q];
    for i in 0..n {
        for c in 0..q {
            let mut best = x[[i, c]];
            let mut best_r = 0;
            for r in 1..n_rot {
                let v = x[[i, r * q + c]];
                if v > best {
                    best = v;
                    best_r = r;
                }
            }
            out[[i, c]] = best;
            arg[i * q + c] = best_r as u32;
        }
    }
    Ok((out, arg))
}

pub fn amp_backward(argmax: &[u32], n_rot: usize, g: ArrayView2<f64>) -> Array2<f64> {
    let (n, q) = g.dim();
    let mut dx = Array2::zeros((n, n_rot * q));
    for i in 0..n {
        for c in 0..q {
            dx[[i, argmax[i * q + c] as usize * q + c]] = g[[i, c]];
        }
    }
    dx
}

/// Number of nonredundant DFT magnitudes of a real length-`n_theta` signal.
pub fn ftm_max_frequencies(n_theta: usize) -> usize {
    n_theta / 2 + 1
}

fn dft_tables(n_theta: usize, kept: usize) -> (Vec<f64>, Vec<f64>) {
    let mut cos = vec![0.0; kept * n_theta];
    let mut sin = vec![0.0; kept * n_theta];
    for w in 0..kept {
        for j in 0..n_theta {
            let a = TAU * ((w * j) % n_theta) as f64 / n_theta as f64;
            cos[w * n_theta + j] = a.cos();
            sin[w * n_theta + j] = a.sin();
        }
    }
    (cos, sin)
}

/// `(Re z, Im z)` of `z = Σ_j f_j e^{-2πi ωj/N_θ}` for one patch row.
fn dft_coefficient(row: &[f64], base: usize, p: usize, n_theta: usize, cos: &[f64], sin: &[f64], w: usize) -> (f64, f64) {
    let (mut re, mut im) = (0.0, 0.0);
    for j in 0..n_theta {
        let f = row[base + j * p];
        re += f * cos[w * n_theta + j];
        im -= f * sin[w * n_theta + j];
    }
    (re, im)
}

/// Magnitudes of the angular DFT of every patch; output `N × (N_ρ·kept·P)`.
/// Also returns the patches for the backward pass.
pub fn ftm_forward(x: ArrayView2<f64>, op: &PatchOperator, kept: usize) -> Result<(Array2<f64>, Array2<f64>), NetError> {
    let patches = extract_patches(x, op)?;
    Ok((ftm_from_patches(patches.view(), op.n_rho(), op.n_theta(), x.ncols(), kept)?, patches))
}

/// FTM on precomputed `N × (N_ρ·N_θ·P)` patches.
pub fn ftm_from_patches(
    patches: ArrayView2<f64>,
    n_rho: usize,
    n_theta: usize,
    p: usize,
    kept: usize,
) -> Result<Array2<f64>, NetError> {
    if kept == 0 || kept > ftm_max_frequencies(n_theta) {
        return Err(NetError::InvalidSpec(format!(
            "FTM keeps {kept} frequencies; at most {} exist",
            ftm_max_frequencies(n_theta)
        )));
    }
    check_cols(&patches, n_rho * n_theta * p)?;
    let (cos, sin) = dft_tables(n_theta, kept);
    let n = patches.nrows();
    let mut out = Array2::zeros((n, n_rho * kept * p));
    let patches = patches.as_standard_layout();
    out.axis_iter_mut(Axis(0))
        .into_par_iter()
        .zip(patches.axis_iter(Axis(0)).into_par_iter())
        .for_each(|(mut o, row)| {
            let row = row.as_slice().expect("standard layout");
            for k in 0..n_rho {
                for w in 0..kept {
                    for c in 0..p {
                        let (re, im) = dft_coefficient(row, k * n_theta * p + c, p, n_theta, &cos, &sin, w);
                        o[(k * kept + w) * p + c] = re.hypot(im);
                    }
                }
            }
        });
    Ok(out)
}

/// Gradient with respect to the patches of [`ftm_from_patches`].
pub fn ftm_patch_backward(
    patches: ArrayView2<f64>,
    n_rho: usize,
    n_theta: usize,
    p: usize,
    kept: usize,
    g: ArrayView2<f64>,
) -> Array2<f64> {
    let (cos, sin) = dft_tables(n_theta, kept);
    let patches = patches.as_standard_layout();
    let mut d = Array2::zeros(patches.raw_dim());
    d.axis_iter_mut(Axis(0))
        .into_par_iter()
        .zip(patches.axis_iter(Axis(0)).into_par_iter())
        .zip(g.axis_iter(Axis(0)).into_par_iter())
        .for_each(|((mut drow, row), grow)| {
            let row = row.as_slice().expect("standard layout");
            for k in 0..n_rho {
                for w in 0..kept {
                    for c in 0..p {
                        let base = k * n_theta * p + c;
                        let (re, im) = dft_coefficient(row, base, p, n_theta, &cos, &sin, w);
                        let scale = grow[(k * kept + w) * p + c] / re.hypot(im).max(MODULUS_GUARD);
                        for j in 0..n_theta {
                            drow[base + j * p] += scale * (re * cos[w * n_theta + j] - im * sin[w * n_theta + j]);
                        }
                    }
                }
            }
        });
    d
}

pub fn ftm_backward(
    patches: ArrayView2<f64>,
    op: &PatchOperator,
    p: usize,
    kept: usize,
    g: ArrayView2<f64>,
) -> Result<Array2<f64>, NetError> {
    let d = ftm_patch_backward(patches, op.n_rho(), op.n_theta(), p, kept, g);
    scatter_patches(d, op, p)
}

fn check_areas(x: &ArrayView2<f64>, areas: &[f64]) -> Result<f64, NetError> {
    if areas.len() != x.nrows() {
        return Err(NetError::DimensionMismatch {
            expected: x.nrows(),
            found: areas.len(),
        });
    }
    Ok(areas.iter().sum())
}

fn weighted_mean(x: &ArrayView2<f64>, areas: &[f64], total: f64) -> Vec<f64> {
    let mut mu = vec![0.0; x.ncols()];
    for (row, &a) in x.rows().into_iter().zip(areas) {
        mu.iter_mut().zip(row).for_each(|(m, &v)| *m += a * v);
    }
    mu.iter_mut().for_each(|m| *m /= total);
    mu
}

/// Area-weighted covariance, column-stacked into a `1 × P²` row.
pub fn cov_forward(x: ArrayView2<f64>, areas: &[f64]) -> Result<Array2<f64>, NetError> {
    let total = check_areas(&x, areas)?;
    let p = x.ncols();
    let mu = weighted_mean(&x, areas, total);
    let mut c = vec![0.0; p * p];
    let mut d = vec![0.0; p];
    for (row, &a) in x.rows().into_iter().zip(areas) {
        d.iter_mut().zip(row).zip(&mu).for_each(|((di, &v), &m)| *di = v - m);
        for col in 0..p {
            for r in 0..p {
                c[col * p + r] += a * d[r] * d[col];
            }
        }
    }
    c.iter_mut().for_each(|v| *v /= total);
    Ok(Array2::from_shape_vec((1, p * p), c).expect("P² entries"))
}

/// `dx_i = (a_i / Σa) (G + Gᵀ)(x_i − μ)`; the mean's own derivative cancels.
pub fn cov_backward(x: ArrayView2<f64>, areas: &[f64], g: ArrayView2<f64>) -> Result<Array2<f64>, NetError> {
    let total = check_areas(&x, areas)?;
    let p = x.ncols();
    check_cols(&g, p * p)?;
    let mu = weighted_mean(&x, areas, total);
    let gs = Array2::from_shape_fn((p, p), |(r, c)| g[[0, c * p + r]] + g[[0, r * p + c]]);
    let mut dx = Array2::zeros(x.raw_dim());
    for ((mut drow, row), &a) in dx.rows_mut().into_iter().zip(x.rows()).zip(areas) {
        let d: Vec<f64> = row.iter().zip(&mu).map(|(&v, &m)| v - m).collect();
        for r in 0..p {
            let s: f64 = (0..p).map(|c| gs[[r, c]] * d[c]).sum();
            drow[r] = a / total * s;
        }
    }
    Ok(dx)
}

/// Row-wise softmax with max subtraction.
pub fn softmax_forward(x: ArrayView2<f64>) -> Array2<f64> {
    let mut out = x.to_owned();
    out.axis_iter_mut(Axis(0)).into_par_iter().for_each(|mut row| {
        let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        row.mapv_inplace(|v| (v - m).exp());
        let s = row.sum();
        row.mapv_inplace(|v| v / s);
    });
    out
}

/// `dx = y ⊙ (g − ⟨y, g⟩)` per row, from the softmax output `y`.
pub fn softmax_backward(y: ArrayView2<f64>, g: ArrayView2<f64>) -> Array2<f64> {
    let mut dx = Array2::zeros(y.raw_dim());
    Zip::from(dx.rows_mut()).and(y.rows()).and(g.rows()).for_each(|mut d, yr, gr| {
        let dot = yr.dot(&gr);
        Zip::from(&mut d).and(&yr).and(&gr).for_each(|di, &yi, &gi| *di = yi * (gi - dot));
    });
    dx
}
