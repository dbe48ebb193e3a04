use std::f64::consts::TAU;

use ndarray::{Array2, ArrayView2};
use rayon::prelude::*;

use super::{ChartError, LocalChart};
use crate::mesh::VertexAreas;
use crate::sparse::CsrMatrix;

/// Relative cut-off below which bin weights are dropped before renormalizing.
pub const WEIGHT_DROP: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PatchParams {
    pub n_rho: usize,
    pub n_theta: usize,
    pub sigma_rho: f64,
    pub sigma_theta: f64,
}

impl PatchParams {
    /// One-bin-width Gaussians for a disc of radius `rho0`.
    pub fn with_defaults(rho0: f64, n_rho: usize, n_theta: usize) -> Self {
        Self {
            n_rho,
            n_theta,
            sigma_rho: rho0 / n_rho as f64,
            sigma_theta: TAU / n_theta as f64,
        }
    }

    pub fn rho_center(&self, rho0: f64, k: usize) -> f64 {
        (k as f64 + 0.5) * rho0 / self.n_rho as f64
    }

    pub fn theta_center(&self, j: usize) -> f64 {
        TAU * j as f64 / self.n_theta as f64
    }

    pub fn bins(&self) -> usize {
        self.n_rho * self.n_theta
    }
}

/// Shortest distance between two angles on the circle.
pub fn circular_distance(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(TAU);
    d.min(TAU - d)
}

/// Sparse `(N·N_ρ·N_θ) × N` interpolation matrix. Row `(x·N_ρ + k)·N_θ + j`
/// holds the weights of bin (ρ_k, θ_j) of the patch around vertex `x`.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchOperator {
    matrix: CsrMatrix,
    transpose: CsrMatrix,
    n_vertices: usize,
    n_rho: usize,
    n_theta: usize,
    degenerate: Vec<usize>,
}

impl PatchOperator {
    pub fn from_matrix(matrix: CsrMatrix, n_rho: usize, n_theta: usize) -> Result<Self, ChartError> {
        let n = matrix.cols();
        if n_rho == 0 || n_theta == 0 || matrix.rows() != n * n_rho * n_theta {
            return Err(ChartError::InvalidArgument(format!(
                "a {}x{} matrix does not have N*{n_rho}*{n_theta} rows",
                matrix.rows(),
                n
            )));
        }
        let bins = n_rho * n_theta;
        let degenerate = (0..n)
            .filter(|&x| (0..bins).all(|b| matrix.row(x * bins + b).next().is_none()))
            .collect();
        let transpose = matrix.transpose();
        Ok(Self {
            matrix,
            transpose,
            n_vertices: n,
            n_rho,
            n_theta,
            degenerate,
        })
    }

    pub fn matrix(&self) -> &CsrMatrix {
        &self.matrix
    }

    pub fn n_vertices(&self) -> usize {
        self.n_vertices
    }

    pub fn n_rho(&self) -> usize {
        self.n_rho
    }

    pub fn n_theta(&self) -> usize {
        self.n_theta
    }

    pub fn bins(&self) -> usize {
        self.n_rho * self.n_theta
    }

    /// Vertices whose patch rows are all zero.
    pub fn degenerate_vertices(&self) -> &[usize] {
        &self.degenerate
    }

    pub fn row_index(&self, x: usize, k: usize, j: usize) -> usize {
        (x * self.n_rho + k) * self.n_theta + j
    }

    /// Patches of an `N × P` field as an `(N·N_ρ·N_θ) × P` array.
    pub fn apply(&self, field: ArrayView2<f64>) -> Result<Array2<f64>, ChartError> {
        Ok(self.matrix.mul_dense(field)?)
    }

    /// Adjoint of [`apply`](Self::apply): `(N·N_ρ·N_θ) × P` to `N × P`.
    pub fn transpose_apply(&self, patches: ArrayView2<f64>) -> Result<Array2<f64>, ChartError> {
        Ok(self.transpose.mul_dense(patches)?)
    }
}

/// Unnormalized weight of one chart entry for one bin.
pub(crate) fn bin_weight(params: &PatchParams, rho0: f64, k: usize, j: usize, rho: f64, theta: Option<f64>, area: f64) -> f64 {
    let dr = rho - params.rho_center(rho0, k);
    let radial = (-dr * dr / (params.sigma_rho * params.sigma_rho)).exp();
    let angular = match theta {
        Some(t) => {
            let dt = circular_distance(t, params.theta_center(j));
            (-dt * dt / (params.sigma_theta * params.sigma_theta)).exp()
        }
        None => 1.0,
    };
    radial * angular * area
}

fn vertex_rows(chart: &LocalChart, params: &PatchParams, areas: &[f64]) -> Vec<Vec<(usize, f64)>> {
    let rho0 = chart.disc_radius;
    let mut rows = Vec::with_capacity(params.bins());
    let mut members: Vec<(usize, f64, Option<f64>)> = chart
        .entries
        .iter()
        .map(|e| (e.vertex, e.rho, (e.vertex != chart.center).then_some(e.theta)))
        .collect();
    members.sort_by_key(|m| m.0);
    for k in 0..params.n_rho {
        for j in 0..params.n_theta {
            let w: Vec<f64> = members
                .iter()
                .map(|&(v, rho, theta)| bin_weight(params, rho0, k, j, rho, theta, areas[v]))
                .collect();
            let max = w.iter().copied().fold(0.0, f64::max);
            let mut row: Vec<(usize, f64)> = members
                .iter()
                .zip(&w)
                .filter(|&(_, &wi)| max > 0.0 && wi >= WEIGHT_DROP * max)
                .map(|(m, &wi)| (m.0, wi))
                .collect();
            let total: f64 = row.iter().map(|e| e.1).sum();
            for e in &mut row {
                e.1 /= total;
            }
            rows.push(row);
        }
    }
    rows
}

/// Assembles the patch operator from one chart per vertex. The integration
/// measure of the interpolation weights is the lumped vertex area. Vertices
/// with degenerate charts get all-zero rows.
pub fn patch_operator(charts: &[LocalChart], areas: &VertexAreas, params: &PatchParams) -> Result<PatchOperator, ChartError> {
    let n = charts.len();
    if areas.len() != n {
        return Err(ChartError::DimensionMismatch {
            expected: n,
            found: areas.len(),
        });
    }
    if params.n_rho < 2 || params.n_theta < 2 {
        return Err(ChartError::InvalidArgument(format!(
            "need at least 2x2 bins, got {}x{}",
            params.n_rho, params.n_theta
        )));
    }
    if !(params.sigma_rho > 0.0 && params.sigma_theta > 0.0) {
        return Err(ChartError::InvalidArgument("Gaussian widths must be positive".into()));
    }
    let rho0 = charts.first().map(|c| c.disc_radius).unwrap_or(1.0);
    for (x, c) in charts.iter().enumerate() {
        if c.center != x {
            return Err(ChartError::InvalidArgument(format!("chart {x} is centered at {}", c.center)));
        }
        if c.disc_radius != rho0 {
            return Err(ChartError::InvalidArgument("charts do not share a disc radius".into()));
        }
    }
    let blocks: Vec<Vec<Vec<(usize, f64)>>> = charts
        .par_iter()
        .map(|c| {
            if c.is_degenerate() {
                vec![Vec::new(); params.bins()]
            } else {
                vertex_rows(c, params, &areas.areas)
            }
        })
        .collect();
    let degenerate: Vec<usize> = charts.iter().filter(|c| c.is_degenerate()).map(|c| c.center).collect();
    if !degenerate.is_empty() {
        log::warn!("{} vertices have degenerate charts: {:?}", degenerate.len(), degenerate);
    }
    let rows: Vec<Vec<(usize, f64)>> = blocks.into_iter().flatten().collect();
    PatchOperator::from_matrix(CsrMatrix::from_rows(n, rows), params.n_rho, params.n_theta)
}
