use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{check_areas, SpectralError, StiffnessMatrix};
use crate::mesh::VertexAreas;
use crate::sparse::{CsrMatrix, SkylineCholesky};

/// The `K` smallest eigenpairs of `S φ = λ A φ`, ascending, A-orthonormal.
#[derive(Debug, Clone, PartialEq)]
pub struct Eigensystem {
    pub eigenvalues: Vec<f64>,
    /// `N × K`, column k is φ_k.
    pub eigenfunctions: Array2<f64>,
    pub mass: VertexAreas,
}

impl Eigensystem {
    pub fn k(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn n(&self) -> usize {
        self.eigenfunctions.nrows()
    }

    /// Eigenvalues at or below this are treated as zero.
    pub fn zero_threshold(&self) -> f64 {
        1e-8 * self.eigenvalues.last().copied().unwrap_or(0.0)
    }

    /// Index of the first strictly positive eigenvalue.
    pub fn first_positive(&self) -> Option<usize> {
        let thr = self.zero_threshold();
        self.eigenvalues.iter().position(|&l| l > thr)
    }

    /// Largest entry of |ΦᵀAΦ − I|.
    pub fn orthonormality_error(&self) -> f64 {
        let k = self.k();
        let phi = &self.eigenfunctions;
        let mut worst: f64 = 0.0;
        for a in 0..k {
            for b in a..k {
                let dot: f64 = (0..self.n())
                    .map(|i| phi[[i, a]] * self.mass.areas[i] * phi[[i, b]])
                    .sum();
                let target = if a == b { 1.0 } else { 0.0 };
                worst = worst.max((dot - target).abs());
            }
        }
        worst
    }

    /// Relative residual of each pair: ‖Sφ − λAφ‖ / ‖Sφ‖, or / ‖Aφ‖ for
    /// numerically zero eigenvalues.
    pub fn relative_residuals(&self, s: &StiffnessMatrix) -> Vec<f64> {
        let thr = self.zero_threshold();
        (0..self.k())
            .into_par_iter()
            .map(|k| {
                let phi: Vec<f64> = self.eigenfunctions.column(k).to_vec();
                let sphi = s.0.mul_vec(&phi);
                let lam = self.eigenvalues[k];
                let mut res = 0.0;
                let mut ns = 0.0;
                let mut na = 0.0;
                for i in 0..phi.len() {
                    let aphi = self.mass.areas[i] * phi[i];
                    res += (sphi[i] - lam * aphi).powi(2);
                    ns += sphi[i] * sphi[i];
                    na += aphi * aphi;
                }
                let denom = if lam <= thr { na } else { ns };
                (res / denom).sqrt()
            })
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct EigenOptions {
    /// Operators up to this size are solved densely.
    pub dense_limit: usize,
    pub block_size: usize,
    /// Relative residual every returned pair must satisfy.
    pub tolerance: f64,
    pub max_basis: Option<usize>,
    pub seed: u64,
}

impl Default for EigenOptions {
    fn default() -> Self {
        Self {
            dense_limit: 1200,
            block_size: 8,
            tolerance: 1e-9,
            max_basis: None,
            seed: 0x5eed,
        }
    }
}

pub fn eigensystem(s: &StiffnessMatrix, areas: &VertexAreas, k: usize) -> Result<Eigensystem, SpectralError> {
    eigensystem_with(s, areas, k, &EigenOptions::default())
}

/// Solves through the symmetric reduction `B = A^{-1/2} S A^{-1/2}`: densely
/// for small operators, otherwise by shift-inverted block Lanczos with full
/// reorthogonalization followed by subspace refinement.
pub fn eigensystem_with(
    s: &StiffnessMatrix,
    areas: &VertexAreas,
    k: usize,
    opts: &EigenOptions,
) -> Result<Eigensystem, SpectralError> {
    check_areas(s, areas)?;
    let n = s.dim();
    if k == 0 || k > n {
        return Err(SpectralError::TooManyEigenpairs { requested: k, n });
    }
    let inv_sqrt: Vec<f64> = areas.areas.iter().map(|a| 1.0 / a.sqrt()).collect();

    let (mut values, y) = if n <= opts.dense_limit {
        dense_smallest(&s.0, &inv_sqrt, k)
    } else {
        lanczos_smallest(&s.0, areas, k, opts)?
    };

    let mut phi = Array2::<f64>::zeros((n, k));
    for c in 0..k {
        let col = &y[c];
        let peak = col.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let sign = col
            .iter()
            .find(|v| v.abs() > 1e-8 * peak)
            .map(|v| v.signum())
            .unwrap_or(1.0);
        for i in 0..n {
            phi[[i, c]] = sign * col[i] * inv_sqrt[i];
        }
    }
    for v in values.iter_mut() {
        *v = v.max(0.0);
    }
    let eig = Eigensystem {
        eigenvalues: values,
        eigenfunctions: phi,
        mass: areas.clone(),
    };
    let worst = eig
        .relative_residuals(s)
        .into_iter()
        .fold(0.0f64, f64::max);
    if !(worst <= 1e-8) {
        return Err(SpectralError::ConvergenceFailure { residual: worst });
    }
    Ok(eig)
}

fn dense_smallest(s: &CsrMatrix, inv_sqrt: &[f64], k: usize) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = s.rows();
    let mut b = DMatrix::<f64>::zeros(n, n);
    for r in 0..n {
        for (c, v) in s.row(r) {
            b[(r, c)] = v * inv_sqrt[r] * inv_sqrt[c];
        }
    }
    let b = (&b + b.transpose()) * 0.5;
    let eig = SymmetricEigen::new(b);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &c| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[c]));
    let values = order[..k].iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = order[..k]
        .iter()
        .map(|&i| eig.eigenvectors.column(i).iter().copied().collect())
        .collect();
    (values, vectors)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Orthogonalizes `w` against `basis` twice (classical Gram–Schmidt with
/// reorthogonalization), returning the accumulated coefficients.
fn orthogonalize(w: &mut [f64], basis: &[Vec<f64>]) -> Vec<f64> {
    let mut coeffs = vec![0.0; basis.len()];
    for _ in 0..2 {
        let h: Vec<f64> = basis.par_iter().map(|q| dot(q, w)).collect();
        for (q, &hj) in basis.iter().zip(&h) {
            axpy(-hj, q, w);
        }
        for (c, hj) in coeffs.iter_mut().zip(h) {
            *c += hj;
        }
    }
    coeffs
}

struct ShiftInvert {
    chol: SkylineCholesky,
    sqrt_a: Vec<f64>,
}

impl ShiftInvert {
    /// `A^{1/2} (S + σA)^{-1} A^{1/2} y`
    fn apply(&self, y: &[f64]) -> Vec<f64> {
        let mut x: Vec<f64> = y.iter().zip(&self.sqrt_a).map(|(v, s)| v * s).collect();
        self.chol.solve_in_place(&mut x);
        for (v, s) in x.iter_mut().zip(&self.sqrt_a) {
            *v *= s;
        }
        x
    }
}

fn sym_eigen_desc(h: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let hs = (h + h.transpose()) * 0.5;
    let eig = SymmetricEigen::new(hs);
    let m = h.nrows();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let vals = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vecs = DMatrix::zeros(m, m);
    for (dst, &src) in order.iter().enumerate() {
        vecs.set_column(dst, &eig.eigenvectors.column(src));
    }
    (vals, vecs)
}

fn lanczos_smallest(
    s: &CsrMatrix,
    areas: &VertexAreas,
    k: usize,
    opts: &EigenOptions,
) -> Result<(Vec<f64>, Vec<Vec<f64>>), SpectralError> {
    let n = s.rows();
    // Shift small relative to the operator scale so S + σA is definite.
    let scale = (0..n).map(|i| s.get(i, i) / areas.areas[i]).sum::<f64>() / n as f64;
    let sigma = 1e-6 * scale;
    let shifted = s.add_diagonal(&areas.areas.iter().map(|a| sigma * a).collect::<Vec<_>>());
    let op = ShiftInvert {
        chol: SkylineCholesky::factor(&shifted)?,
        sqrt_a: areas.areas.iter().map(|a| a.sqrt()).collect(),
    };

    let b = opts.block_size.max(1);
    let max_basis = opts.max_basis.unwrap_or((3 * k + 10 * b).max(k + 4 * b)).min(n);
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);

    let mut basis: Vec<Vec<f64>> = Vec::new();
    // h[j] holds column j of the projected matrix, one entry per basis vector.
    let mut h_cols: Vec<Vec<f64>> = Vec::new();
    let mut block: Vec<Vec<f64>> = Vec::new();
    for _ in 0..b {
        let mut v: Vec<f64> = (0..n).map(|_| rng.gen::<f64>() - 0.5).collect();
        orthogonalize(&mut v, &basis);
        orthogonalize(&mut v, &block);
        let nv = dot(&v, &v).sqrt();
        v.iter_mut().for_each(|x| *x /= nv);
        block.push(v);
    }
    basis.extend(block.iter().cloned());

    let mut next_check = (k + 2 * b).min(max_basis);
    let mut block_start = 0;
    let mut last_residual = f64::INFINITY;
    loop {
        let block_end = basis.len();
        let images: Vec<Vec<f64>> = basis[block_start..block_end].par_iter().map(|v| op.apply(v)).collect();
        let mut fresh: Vec<Vec<f64>> = Vec::new();
        for (offset, mut w) in images.into_iter().enumerate() {
            let col = block_start + offset;
            let mut coeffs = orthogonalize(&mut w, &basis);
            let extra = orthogonalize(&mut w, &fresh);
            coeffs.extend(extra);
            let mut norm = dot(&w, &w).sqrt();
            let ref_norm = coeffs.iter().map(|c| c * c).sum::<f64>().sqrt().max(1e-300);
            if norm <= 1e-12 * ref_norm {
                // Krylov breakdown: continue with a fresh random direction.
                let mut v: Vec<f64> = (0..n).map(|_| rng.gen::<f64>() - 0.5).collect();
                orthogonalize(&mut v, &basis);
                orthogonalize(&mut v, &fresh);
                w = v;
                norm = dot(&w, &w).sqrt();
                coeffs.push(0.0);
            } else {
                coeffs.push(norm);
            }
            w.iter_mut().for_each(|x| *x /= norm);
            fresh.push(w);
            debug_assert_eq!(h_cols.len(), col);
            h_cols.push(coeffs);
        }
        let processed = block_end;
        block_start = block_end;
        basis.extend(fresh);

        if processed >= next_check || basis.len() >= max_basis {
            let m = processed;
            let mut h = DMatrix::<f64>::zeros(m, m);
            for (j, col) in h_cols.iter().enumerate().take(m) {
                for (i, &v) in col.iter().enumerate().take(m) {
                    h[(i, j)] = v;
                }
            }
            // Upper triangle from the transposed coupling entries.
            for j in 0..m {
                for i in 0..j {
                    h[(i, j)] = h[(j, i)];
                }
            }
            let (theta, svec) = sym_eigen_desc(&h);
            // Coupling of processed columns into the unprocessed block.
            let mut worst: f64 = 0.0;
            for c in 0..k.min(m) {
                let mut r2 = 0.0;
                for row in m..basis.len() {
                    let mut acc = 0.0;
                    for (j, col) in h_cols.iter().enumerate().take(m) {
                        if row < col.len() {
                            acc += col[row] * svec[(j, c)];
                        }
                    }
                    r2 += acc * acc;
                }
                worst = worst.max(r2.sqrt() / theta[c].abs());
            }
            last_residual = worst;
            if m >= k && (worst <= 1e-11 || basis.len() >= max_basis) {
                let keep = (k + b).min(m);
                let mut ritz: Vec<Vec<f64>> = (0..keep)
                    .into_par_iter()
                    .map(|c| {
                        let mut v = vec![0.0; n];
                        for j in 0..m {
                            axpy(svec[(j, c)], &basis[j], &mut v);
                        }
                        v
                    })
                    .collect();
                let vals = refine(&op, &mut ritz, s, areas, k, opts.tolerance);
                let lambdas: Vec<f64> = vals;
                ritz.truncate(k);
                return Ok((lambdas, ritz));
            }
            if basis.len() >= max_basis {
                return Err(SpectralError::ConvergenceFailure { residual: last_residual });
            }
            next_check = (m + (k / 4).max(2 * b)).min(max_basis);
        }
        if basis.len() >= max_basis + b {
            return Err(SpectralError::ConvergenceFailure { residual: last_residual });
        }
    }
}

/// Subspace iteration with Rayleigh–Ritz on the original pencil until the
/// first `k` vectors meet `tol`. Returns eigenvalues; `vecs` are replaced by
/// B-space eigenvectors sorted ascending.
fn refine(
    op: &ShiftInvert,
    vecs: &mut Vec<Vec<f64>>,
    s: &CsrMatrix,
    areas: &VertexAreas,
    k: usize,
    tol: f64,
) -> Vec<f64> {
    let n = s.rows();
    let inv_sqrt: Vec<f64> = areas.areas.iter().map(|a| 1.0 / a.sqrt()).collect();
    let b_apply = |y: &[f64]| -> Vec<f64> {
        let x: Vec<f64> = y.iter().zip(&inv_sqrt).map(|(v, w)| v * w).collect();
        let sx = s.mul_vec(&x);
        sx.iter().zip(&inv_sqrt).map(|(v, w)| v * w).collect()
    };
    let mut values = Vec::new();
    for iteration in 0..6 {
        if iteration > 0 {
            let images: Vec<Vec<f64>> = vecs.par_iter().map(|v| op.apply(v)).collect();
            *vecs = images;
        }
        // Orthonormalize.
        let mut ortho: Vec<Vec<f64>> = Vec::with_capacity(vecs.len());
        for v in vecs.iter() {
            let mut w = v.clone();
            orthogonalize(&mut w, &ortho);
            let nw = dot(&w, &w).sqrt();
            w.iter_mut().for_each(|x| *x /= nw);
            ortho.push(w);
        }
        let images: Vec<Vec<f64>> = ortho.par_iter().map(|v| b_apply(v)).collect();
        let m = ortho.len();
        let mut h = DMatrix::<f64>::zeros(m, m);
        for i in 0..m {
            for j in i..m {
                let v = dot(&ortho[i], &images[j]);
                h[(i, j)] = v;
                h[(j, i)] = v;
            }
        }
        let (mut theta, svec) = sym_eigen_desc(&h);
        theta.reverse();
        let order: Vec<usize> = (0..m).rev().collect();
        let combine = |src: &[Vec<f64>], c: usize| -> Vec<f64> {
            let mut v = vec![0.0; n];
            for j in 0..m {
                axpy(svec[(j, c)], &src[j], &mut v);
            }
            v
        };
        let new_vecs: Vec<Vec<f64>> = order.par_iter().map(|&c| combine(&ortho, c)).collect();
        let new_imgs: Vec<Vec<f64>> = order.par_iter().map(|&c| combine(&images, c)).collect();
        let lam_k = theta[k - 1].abs().max(1e-300);
        let worst = (0..k)
            .map(|c| {
                let r: f64 = new_imgs[c]
                    .iter()
                    .zip(&new_vecs[c])
                    .map(|(bv, v)| (bv - theta[c] * v).powi(2))
                    .sum::<f64>()
                    .sqrt();
                let denom = if theta[c] > 1e-8 * lam_k { theta[c] } else { 1.0 };
                r / denom
            })
            .fold(0.0f64, f64::max);
        *vecs = new_vecs;
        values = theta[..k].to_vec();
        if worst <= 0.1 * tol {
            break;
        }
    }
    values
}
