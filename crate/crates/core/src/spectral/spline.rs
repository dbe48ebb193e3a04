use super::{Eigensystem, SpectralError};

/// Clamped B-spline basis over log-eigenvalues with uniformly spaced
/// interior knots.
#[derive(Debug, Clone, PartialEq)]
pub struct SplineBasis {
    degree: usize,
    count: usize,
    knots: Vec<f64>,
}

impl SplineBasis {
    /// `count` clamped basis functions of the given degree on `[lo, hi]`
    /// (log-eigenvalue coordinates).
    pub fn uniform(lo: f64, hi: f64, count: usize, degree: usize) -> Result<Self, SpectralError> {
        if count < degree + 1 {
            return Err(SpectralError::InvalidArgument(format!(
                "a degree-{degree} basis needs at least {} functions, got {count}",
                degree + 1
            )));
        }
        if !(hi > lo) || !lo.is_finite() || !hi.is_finite() {
            return Err(SpectralError::InvalidArgument(format!("empty knot span [{lo}, {hi}]")));
        }
        let segments = count - degree;
        let mut knots = Vec::with_capacity(count + degree + 1);
        knots.extend(std::iter::repeat(lo).take(degree + 1));
        for i in 1..segments {
            knots.push(lo + (hi - lo) * i as f64 / segments as f64);
        }
        knots.extend(std::iter::repeat(hi).take(degree + 1));
        Ok(Self { degree, count, knots })
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn len(&self) -> usize {
        self.count
    }

    pub fn is_empty(&self) -> bool {
        self.count == 0
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn span(&self) -> (f64, f64) {
        (self.knots[0], self.knots[self.knots.len() - 1])
    }

    /// Index `i` of the knot interval `[u_i, u_{i+1})` containing `u`; the
    /// right end of the span belongs to the last nonempty interval.
    fn find_span(&self, u: f64) -> usize {
        let p = self.degree;
        let n = self.count - 1;
        if u >= self.knots[n + 1] {
            return n;
        }
        let (mut low, mut high) = (p, n + 1);
        while high - low > 1 {
            let mid = (low + high) / 2;
            if u < self.knots[mid] {
                high = mid;
            } else {
                low = mid;
            }
        }
        low
    }

    /// Nonzero basis values at log-coordinate `u`: returns the index of the
    /// first nonzero function and the `degree + 1` values from there.
    pub fn eval_local(&self, u: f64) -> Option<(usize, Vec<f64>)> {
        let (lo, hi) = self.span();
        if !(u >= lo && u <= hi) {
            return None;
        }
        let p = self.degree;
        let span = self.find_span(u);
        let mut values = vec![0.0; p + 1];
        let mut left = vec![0.0; p + 1];
        let mut right = vec![0.0; p + 1];
        values[0] = 1.0;
        for j in 1..=p {
            left[j] = u - self.knots[span + 1 - j];
            right[j] = self.knots[span + j] - u;
            let mut saved = 0.0;
            for r in 0..j {
                let denom = right[r + 1] + left[j - r];
                let temp = if denom != 0.0 { values[r] / denom } else { 0.0 };
                values[r] = saved + right[r + 1] * temp;
                saved = left[j - r] * temp;
            }
            values[j] = saved;
        }
        Some((span - p, values))
    }

    /// All `M` basis values at log-coordinate `u` (zero outside the span).
    pub fn eval_log(&self, u: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.count];
        if let Some((first, vals)) = self.eval_local(u) {
            for (k, v) in vals.into_iter().enumerate() {
                out[first + k] = v;
            }
        }
        out
    }

    /// β_m(λ) for all m. Non-positive eigenvalues lie outside every span.
    pub fn eval(&self, lambda: f64) -> Vec<f64> {
        if lambda > 0.0 {
            self.eval_log(lambda.ln())
        } else {
            vec![0.0; self.count]
        }
    }
}

/// Cubic basis with `m` functions spanning `[log λ₂, log λ_K]`, where λ₂ is
/// the first positive eigenvalue.
pub fn spline_basis(eig: &Eigensystem, m: usize) -> Result<SplineBasis, SpectralError> {
    if m < 4 {
        return Err(SpectralError::InvalidArgument(format!("cubic basis needs M >= 4, got {m}")));
    }
    let first = eig.first_positive();
    let positives = first.map(|f| eig.k() - f).unwrap_or(0);
    let lam_k = *eig.eigenvalues.last().ok_or(SpectralError::TooFewPositiveEigenvalues { found: 0 })?;
    match first {
        Some(f) if positives >= 2 && lam_k > eig.eigenvalues[f] => {
            SplineBasis::uniform(eig.eigenvalues[f].ln(), lam_k.ln(), m, 3)
        }
        _ => Err(SpectralError::TooFewPositiveEigenvalues { found: positives }),
    }
}
