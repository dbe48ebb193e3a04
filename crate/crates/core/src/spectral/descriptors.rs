use ndarray::{Array2, Axis};

use super::{squared_eigenfunctions, Eigensystem, SpectralError, SplineBasis};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DescriptorKind {
    Hks,
    Wks,
    GeometryVector,
    Network,
}

/// Per-vertex feature vectors, one row per mesh vertex.
#[derive(Debug, Clone, PartialEq)]
pub struct DescriptorField {
    pub values: Array2<f64>,
    pub kind: DescriptorKind,
}

impl DescriptorField {
    pub fn dim(&self) -> usize {
        self.values.ncols()
    }

    pub fn n(&self) -> usize {
        self.values.nrows()
    }
}

pub fn heat_kernel(eig: &Eigensystem, t: f64, i: usize, j: usize) -> f64 {
    let phi = &eig.eigenfunctions;
    eig.eigenvalues
        .iter()
        .enumerate()
        .map(|(k, &lam)| (-t * lam).exp() * phi[[i, k]] * phi[[j, k]])
        .sum()
}

/// Applies a bank of transfer functions: `f_q(x) = Σ_k τ_q(λ_k) φ_k(x)²`.
/// `transfer[(k, q)]` holds τ_q(λ_k).
fn filter_bank(eig: &Eigensystem, transfer: &Array2<f64>) -> Array2<f64> {
    squared_eigenfunctions(eig).dot(transfer)
}

pub fn hks(eig: &Eigensystem, times: &[f64]) -> Result<DescriptorField, SpectralError> {
    if times.iter().any(|&t| !(t > 0.0)) {
        return Err(SpectralError::InvalidArgument("heat kernel times must be positive".into()));
    }
    let transfer = Array2::from_shape_fn((eig.k(), times.len()), |(k, q)| (-times[q] * eig.eigenvalues[k]).exp());
    Ok(DescriptorField {
        values: filter_bank(eig, &transfer),
        kind: DescriptorKind::Hks,
    })
}

/// Wave kernel signature with log-normal band-pass filters
/// `exp(-(log ν - log λ)² / (2σ²))`; zero eigenvalues are skipped.
pub fn wks(eig: &Eigensystem, energies: &[f64], sigma: f64) -> Result<DescriptorField, SpectralError> {
    if energies.iter().any(|&e| !(e > 0.0)) {
        return Err(SpectralError::InvalidArgument("wave kernel energies must be positive".into()));
    }
    if !(sigma > 0.0) {
        return Err(SpectralError::InvalidArgument("wave kernel bandwidth must be positive".into()));
    }
    let thr = eig.zero_threshold();
    let transfer = Array2::from_shape_fn((eig.k(), energies.len()), |(k, q)| {
        let lam = eig.eigenvalues[k];
        if lam <= thr {
            0.0
        } else {
            let d = energies[q].ln() - lam.ln();
            (-d * d / (2.0 * sigma * sigma)).exp()
        }
    });
    Ok(DescriptorField {
        values: filter_bank(eig, &transfer),
        kind: DescriptorKind::Wks,
    })
}

/// `g_m(x) = Σ_k β_m(λ_k) φ_k(x)²`.
pub fn geometry_vectors(eig: &Eigensystem, basis: &SplineBasis) -> DescriptorField {
    let mut transfer = Array2::<f64>::zeros((eig.k(), basis.len()));
    for (k, mut row) in transfer.axis_iter_mut(Axis(0)).enumerate() {
        for (dst, v) in row.iter_mut().zip(basis.eval(eig.eigenvalues[k])) {
            *dst = v;
        }
    }
    DescriptorField {
        values: filter_bank(eig, &transfer),
        kind: DescriptorKind::GeometryVector,
    }
}

fn positive_range(eig: &Eigensystem) -> Result<(f64, f64), SpectralError> {
    let first = eig
        .first_positive()
        .ok_or(SpectralError::TooFewPositiveEigenvalues { found: 0 })?;
    let lo = eig.eigenvalues[first];
    let hi = *eig.eigenvalues.last().expect("nonempty");
    if !(hi > lo) {
        return Err(SpectralError::TooFewPositiveEigenvalues { found: eig.k() - first });
    }
    Ok((lo, hi))
}

fn logspace(lo: f64, hi: f64, q: usize) -> Vec<f64> {
    if q == 1 {
        return vec![lo.exp()];
    }
    (0..q).map(|i| (lo + (hi - lo) * i as f64 / (q - 1) as f64).exp()).collect()
}

/// `q` times log-spaced over `[4 ln 10 / λ_K, 4 ln 10 / λ₂]`.
pub fn default_hks_times(eig: &Eigensystem, q: usize) -> Result<Vec<f64>, SpectralError> {
    let (lo, hi) = positive_range(eig)?;
    let c = 4.0 * std::f64::consts::LN_10;
    Ok(logspace((c / hi).ln(), (c / lo).ln(), q))
}

/// `q` energies log-spaced over `[λ₂, λ_K]` and a bandwidth of seven grid
/// spacings in log-energy.
pub fn default_wks_energies(eig: &Eigensystem, q: usize) -> Result<(Vec<f64>, f64), SpectralError> {
    let (lo, hi) = positive_range(eig)?;
    let (a, b) = (lo.ln(), hi.ln());
    let spacing = if q > 1 { (b - a) / (q - 1) as f64 } else { b - a };
    Ok((logspace(a, b, q), 7.0 * spacing))
}
