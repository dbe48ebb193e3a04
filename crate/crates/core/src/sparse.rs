//! Compressed sparse row matrices and a banded (skyline) Cholesky factorization.

use std::collections::VecDeque;

use ndarray::{Array2, ArrayView2};
use rayon::prelude::*;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum SparseError {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("matrix is not positive definite (pivot {pivot} = {value:e})")]
    NotPositiveDefinite { pivot: usize, value: f64 },
    #[error("matrix must be square, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },
}

/// Row-compressed sparse matrix with sorted, duplicate-free column indices.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    rows: usize,
    cols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Assembles from coordinate triplets; duplicates are summed in input order.
    pub fn from_triplets(rows: usize, cols: usize, triplets: &[(usize, usize, f64)]) -> Self {
        let mut order: Vec<usize> = (0..triplets.len()).collect();
        order.sort_by_key(|&i| (triplets[i].0, triplets[i].1, i));
        let mut row_ptr = vec![0usize; rows + 1];
        let mut col_idx = Vec::with_capacity(triplets.len());
        let mut values: Vec<f64> = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        for i in order {
            let (r, c, v) = triplets[i];
            assert!(r < rows && c < cols, "triplet ({r}, {c}) outside {rows}x{cols}");
            if last == Some((r, c)) {
                *values.last_mut().expect("previous entry") += v;
            } else {
                col_idx.push(c);
                values.push(v);
                row_ptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for r in 0..rows {
            row_ptr[r + 1] += row_ptr[r];
        }
        Self {
            rows,
            cols,
            row_ptr,
            col_idx,
            values,
        }
    }

    /// Builds from per-row `(column, value)` lists; each list must be sorted by column.
    pub fn from_rows(cols: usize, rows: Vec<Vec<(usize, f64)>>) -> Self {
        let mut row_ptr = Vec::with_capacity(rows.len() + 1);
        row_ptr.push(0);
        let nnz: usize = rows.iter().map(Vec::len).sum();
        let mut col_idx = Vec::with_capacity(nnz);
        let mut values = Vec::with_capacity(nnz);
        for row in &rows {
            for &(c, v) in row {
                debug_assert!(c < cols);
                col_idx.push(c);
                values.push(v);
            }
            row_ptr.push(col_idx.len());
        }
        Self {
            rows: rows.len(),
            cols,
            row_ptr,
            col_idx,
            values,
        }
    }

    /// Reassembles from raw CSR arrays, validating their structure.
    pub fn from_raw(
        rows: usize,
        cols: usize,
        row_ptr: Vec<usize>,
        col_idx: Vec<usize>,
        values: Vec<f64>,
    ) -> Result<Self, SparseError> {
        if row_ptr.len() != rows + 1 {
            return Err(SparseError::DimensionMismatch {
                expected: rows + 1,
                found: row_ptr.len(),
            });
        }
        if col_idx.len() != values.len() || row_ptr[rows] != values.len() {
            return Err(SparseError::DimensionMismatch {
                expected: row_ptr[rows],
                found: values.len(),
            });
        }
        if let Some(&c) = col_idx.iter().find(|&&c| c >= cols) {
            return Err(SparseError::DimensionMismatch { expected: cols, found: c + 1 });
        }
        Ok(Self {
            rows,
            cols,
            row_ptr,
            col_idx,
            values,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row_ptr(&self) -> &[usize] {
        &self.row_ptr
    }

    pub fn col_indices(&self) -> &[usize] {
        &self.col_idx
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// `(column, value)` pairs of row `r`.
    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.row_ptr[r]..self.row_ptr[r + 1];
        self.col_idx[span.clone()].iter().copied().zip(self.values[span].iter().copied())
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        let span = self.row_ptr[r]..self.row_ptr[r + 1];
        match self.col_idx[span.clone()].binary_search(&c) {
            Ok(k) => self.values[span.start + k],
            Err(_) => 0.0,
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.rows.min(self.cols)).map(|i| self.get(i, i)).collect()
    }

    /// Coordinate triplets in row-major order.
    pub fn triplets(&self) -> Vec<(usize, usize, f64)> {
        (0..self.rows)
            .flat_map(|r| self.row(r).map(move |(c, v)| (r, c, v)))
            .collect()
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.cols);
        (0..self.rows)
            .into_par_iter()
            .map(|r| self.row(r).map(|(c, v)| v * x[c]).sum())
            .collect()
    }

    /// `self * x` for a dense row-major block with `self.cols()` rows.
    pub fn mul_dense(&self, x: ArrayView2<f64>) -> Result<Array2<f64>, SparseError> {
        if x.nrows() != self.cols {
            return Err(SparseError::DimensionMismatch {
                expected: self.cols,
                found: x.nrows(),
            });
        }
        let p = x.ncols();
        let mut out = Array2::<f64>::zeros((self.rows, p));
        if p == 0 {
            return Ok(out);
        }
        out.as_slice_mut()
            .expect("standard layout")
            .par_chunks_mut(p)
            .enumerate()
            .for_each(|(r, dst)| {
                for (c, v) in self.row(r) {
                    let src = x.row(c);
                    for (d, s) in dst.iter_mut().zip(src.iter()) {
                        *d += v * s;
                    }
                }
            });
        Ok(out)
    }

    pub fn transpose(&self) -> CsrMatrix {
        let mut counts = vec![0usize; self.cols + 1];
        for &c in &self.col_idx {
            counts[c + 1] += 1;
        }
        for c in 0..self.cols {
            counts[c + 1] += counts[c];
        }
        let mut next = counts.clone();
        let mut col_idx = vec![0usize; self.nnz()];
        let mut values = vec![0.0; self.nnz()];
        for r in 0..self.rows {
            for (c, v) in self.row(r) {
                let k = next[c];
                col_idx[k] = r;
                values[k] = v;
                next[c] += 1;
            }
        }
        CsrMatrix {
            rows: self.cols,
            cols: self.rows,
            row_ptr: counts,
            col_idx,
            values,
        }
    }

    pub fn to_dense(&self) -> Array2<f64> {
        let mut d = Array2::zeros((self.rows, self.cols));
        for r in 0..self.rows {
            for (c, v) in self.row(r) {
                d[[r, c]] += v;
            }
        }
        d
    }

    /// Scales entry (i, j) by `left[i] * right[j]`.
    pub fn scaled(&self, left: &[f64], right: &[f64]) -> CsrMatrix {
        let mut out = self.clone();
        for r in 0..self.rows {
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                out.values[k] *= left[r] * right[self.col_idx[k]];
            }
        }
        out
    }

    /// Adds `shift[i]` to each diagonal entry (which must be structurally present).
    pub fn add_diagonal(&self, shift: &[f64]) -> CsrMatrix {
        let mut out = self.clone();
        for r in 0..self.rows {
            let span = self.row_ptr[r]..self.row_ptr[r + 1];
            if let Ok(k) = self.col_idx[span.clone()].binary_search(&r) {
                out.values[span.start + k] += shift[r];
            } else {
                panic!("diagonal entry {r} missing from sparsity pattern");
            }
        }
        out
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        self.rows == self.cols
            && (0..self.rows).all(|r| self.row(r).all(|(c, v)| (v - self.get(c, r)).abs() <= tol))
    }
}

/// Reverse Cuthill–McKee ordering of a structurally symmetric matrix.
/// Returns `perm` with `perm[new] = old`.
pub fn reverse_cuthill_mckee(m: &CsrMatrix) -> Vec<usize> {
    let n = m.rows();
    let degree: Vec<usize> = (0..n).map(|r| m.row_ptr[r + 1] - m.row_ptr[r]).collect();
    let mut visited = vec![false; n];
    let mut order = Vec::with_capacity(n);
    let mut by_degree: Vec<usize> = (0..n).collect();
    by_degree.sort_by_key(|&v| (degree[v], v));
    for &seed in &by_degree {
        if visited[seed] {
            continue;
        }
        let start = pseudo_peripheral(m, seed, &degree);
        let mut queue = VecDeque::new();
        visited[start] = true;
        queue.push_back(start);
        while let Some(v) = queue.pop_front() {
            order.push(v);
            let mut nbrs: Vec<usize> = m.row(v).map(|(c, _)| c).filter(|&c| !visited[c]).collect();
            nbrs.sort_by_key(|&c| (degree[c], c));
            for c in nbrs {
                visited[c] = true;
                queue.push_back(c);
            }
        }
    }
    order.reverse();
    order
}

fn pseudo_peripheral(m: &CsrMatrix, seed: usize, degree: &[usize]) -> usize {
    let mut current = seed;
    let mut best_ecc = 0;
    for _ in 0..8 {
        let levels = bfs_levels(m, current);
        let ecc = *levels.iter().filter_map(|l| *l).collect::<Vec<_>>().iter().max().unwrap_or(&0);
        if ecc <= best_ecc && current != seed {
            break;
        }
        best_ecc = ecc;
        let far = (0..levels.len())
            .filter(|&v| levels[v] == Some(ecc))
            .min_by_key(|&v| (degree[v], v))
            .unwrap_or(current);
        if far == current {
            break;
        }
        current = far;
    }
    current
}

fn bfs_levels(m: &CsrMatrix, start: usize) -> Vec<Option<usize>> {
    let mut level = vec![None; m.rows()];
    level[start] = Some(0);
    let mut queue = VecDeque::from([start]);
    while let Some(v) = queue.pop_front() {
        let l = level[v].expect("queued vertices have levels");
        for (c, _) in m.row(v) {
            if level[c].is_none() {
                level[c] = Some(l + 1);
                queue.push_back(c);
            }
        }
    }
    level
}

/// Cholesky factor `L` of a symmetric positive definite matrix, stored by
/// rows in variable-band (skyline) form after a bandwidth-reducing permutation.
#[derive(Debug, Clone)]
pub struct SkylineCholesky {
    n: usize,
    perm: Vec<usize>,
    /// First stored column of each row of L.
    first: Vec<usize>,
    /// Offset of row i's band in `data`; row i holds columns first[i]..=i.
    offset: Vec<usize>,
    data: Vec<f64>,
}

impl SkylineCholesky {
    pub fn factor(m: &CsrMatrix) -> Result<Self, SparseError> {
        if m.rows() != m.cols() {
            return Err(SparseError::NotSquare {
                rows: m.rows(),
                cols: m.cols(),
            });
        }
        let n = m.rows();
        let perm = reverse_cuthill_mckee(m);
        let mut inv = vec![0usize; n];
        for (new, &old) in perm.iter().enumerate() {
            inv[old] = new;
        }
        let mut first: Vec<usize> = (0..n).collect();
        for old in 0..n {
            let i = inv[old];
            for (c, _) in m.row(old) {
                let j = inv[c];
                if j < i {
                    first[i] = first[i].min(j);
                }
            }
        }
        let mut offset = Vec::with_capacity(n + 1);
        offset.push(0);
        for i in 0..n {
            offset.push(offset[i] + (i - first[i] + 1));
        }
        let mut data = vec![0.0; offset[n]];
        for old in 0..n {
            let i = inv[old];
            for (c, v) in m.row(old) {
                let j = inv[c];
                if j <= i {
                    data[offset[i] + (j - first[i])] = v;
                }
            }
        }

        for i in 0..n {
            let fi = first[i];
            for j in fi..=i {
                let fj = first[j];
                let start = fi.max(fj);
                let mut s = data[offset[i] + (j - fi)];
                let row_i = &data[offset[i] + (start - fi)..offset[i] + (j - fi)];
                let row_j = &data[offset[j] + (start - fj)..offset[j] + (j - fj)];
                s -= row_i.iter().zip(row_j).map(|(a, b)| a * b).sum::<f64>();
                if j == i {
                    if !(s > 0.0) {
                        return Err(SparseError::NotPositiveDefinite { pivot: perm[i], value: s });
                    }
                    data[offset[i] + (i - fi)] = s.sqrt();
                } else {
                    data[offset[i] + (j - fi)] = s / data[offset[j] + (j - fj)];
                }
            }
        }
        Ok(Self {
            n,
            perm,
            first,
            offset,
            data,
        })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Solves `M x = b` in place.
    pub fn solve_in_place(&self, b: &mut [f64]) {
        assert_eq!(b.len(), self.n);
        let mut y: Vec<f64> = self.perm.iter().map(|&old| b[old]).collect();
        // L y = b
        for i in 0..self.n {
            let fi = self.first[i];
            let row = &self.data[self.offset[i]..self.offset[i + 1]];
            let s: f64 = row[..i - fi].iter().zip(&y[fi..i]).map(|(a, b)| a * b).sum();
            y[i] = (y[i] - s) / row[i - fi];
        }
        // L^T x = y, column-oriented over the rows of L.
        for i in (0..self.n).rev() {
            let fi = self.first[i];
            let row = &self.data[self.offset[i]..self.offset[i + 1]];
            y[i] /= row[i - fi];
            let yi = y[i];
            for (k, &l) in row[..i - fi].iter().enumerate() {
                y[fi + k] -= l * yi;
            }
        }
        for (new, &old) in self.perm.iter().enumerate() {
            b[old] = y[new];
        }
    }
}
