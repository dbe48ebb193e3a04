//! Cotangent Laplace–Beltrami operator, its generalized eigensystem and the
//! spectral descriptors built on it (heat kernel signature, wave kernel
//! signature and B-spline geometry vectors).

mod descriptors;
mod eigen;
mod spline;

use ndarray::Array2;
use thiserror::Error;

use crate::mesh::{self, Mesh, VertexAreas};
use crate::sparse::{CsrMatrix, SparseError};

pub use descriptors::{
    default_hks_times, default_wks_energies, geometry_vectors, heat_kernel, hks, wks, DescriptorField,
    DescriptorKind,
};
pub use eigen::{eigensystem, eigensystem_with, EigenOptions, Eigensystem};
pub use spline::{spline_basis, SplineBasis};

#[derive(Debug, Error)]
pub enum SpectralError {
    #[error("face {face} is degenerate; its cotangent weights overflow")]
    DegenerateFace { face: usize },
    #[error("requested {requested} eigenpairs from a {n}-vertex operator")]
    TooManyEigenpairs { requested: usize, n: usize },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("eigensolver did not converge: achieved relative residual {residual:e}")]
    ConvergenceFailure { residual: f64 },
    #[error("need at least 2 positive eigenvalues, found {found}")]
    TooFewPositiveEigenvalues { found: usize },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error(transparent)]
    Sparse(#[from] SparseError),
}

/// The positive semidefinite cotangent stiffness matrix `S = -W`.
#[derive(Debug, Clone, PartialEq)]
pub struct StiffnessMatrix(pub CsrMatrix);

impl StiffnessMatrix {
    pub fn matrix(&self) -> &CsrMatrix {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.rows()
    }
}

/// Half cotangent of the angle at `apex` in the triangle (apex, a, b).
fn half_cot(apex: &mesh::Point, a: &mesh::Point, b: &mesh::Point) -> f64 {
    let u = mesh::sub(a, apex);
    let v = mesh::sub(b, apex);
    0.5 * mesh::dot(&u, &v) / mesh::norm(&mesh::cross(&u, &v))
}

/// Assembles `S` with off-diagonals `-(cot α + cot β)/2` (one term on
/// boundary edges) and a diagonal that makes every row sum to zero.
pub fn cotangent_matrix(mesh: &Mesh) -> Result<StiffnessMatrix, SpectralError> {
    let n = mesh.vertex_count();
    let verts = mesh.vertices();
    let mut triplets = Vec::with_capacity(12 * mesh.face_count());
    for (fi, f) in mesh.faces().iter().enumerate() {
        if !(mesh.face_area(fi) > mesh::DEGENERATE_AREA) {
            return Err(SpectralError::DegenerateFace { face: fi });
        }
        for c in 0..3 {
            let apex = f[c];
            let i = f[(c + 1) % 3];
            let j = f[(c + 2) % 3];
            let w = half_cot(&verts[apex], &verts[i], &verts[j]);
            if !w.is_finite() {
                return Err(SpectralError::DegenerateFace { face: fi });
            }
            triplets.push((i, j, -w));
            triplets.push((j, i, -w));
            triplets.push((i, i, w));
            triplets.push((j, j, w));
        }
    }
    Ok(StiffnessMatrix(CsrMatrix::from_triplets(n, n, &triplets)))
}

/// Convenience: areas, stiffness and `k` eigenpairs of a mesh.
pub fn mesh_eigensystem(mesh: &Mesh, k: usize) -> Result<Eigensystem, SpectralError> {
    let s = cotangent_matrix(mesh)?;
    let areas = mesh::vertex_areas(mesh);
    eigensystem(&s, &areas, k)
}

pub(crate) fn check_areas(s: &StiffnessMatrix, areas: &VertexAreas) -> Result<(), SpectralError> {
    if areas.len() != s.dim() {
        return Err(SpectralError::DimensionMismatch {
            expected: s.dim(),
            found: areas.len(),
        });
    }
    if let Some(i) = areas.areas.iter().position(|&a| !(a > 0.0)) {
        return Err(SpectralError::InvalidArgument(format!("vertex {i} has non-positive area")));
    }
    Ok(())
}

/// Dense `N × K` matrix of squared eigenfunction values.
pub(crate) fn squared_eigenfunctions(eig: &Eigensystem) -> Array2<f64> {
    eig.eigenfunctions.mapv(|v| v * v)
}
