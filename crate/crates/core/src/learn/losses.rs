use ndarray::{Array2, ArrayView2, Axis};

use super::LearnError;

#[derive(Debug, Clone, PartialEq)]
pub struct SiameseLoss {
    pub loss: f64,
    pub grad_a: Array2<f64>,
    pub grad_b: Array2<f64>,
}

/// `(1−γ) Σ_pos ‖a−b‖² + γ Σ_neg (μ − ‖a−b‖)₊²` over matched rows of `a`, `b`.
pub fn siamese_loss(
    a: ArrayView2<f64>,
    b: ArrayView2<f64>,
    positive: &[bool],
    gamma: f64,
    margin: f64,
) -> Result<SiameseLoss, LearnError> {
    if a.dim() != b.dim() || a.nrows() != positive.len() {
        return Err(LearnError::DimensionMismatch {
            expected: a.nrows(),
            found: if a.dim() != b.dim() { b.nrows() } else { positive.len() },
        });
    }
    let mut loss = 0.0;
    let mut grad_a = Array2::zeros(a.raw_dim());
    for (i, &pos) in positive.iter().enumerate() {
        let d = &a.row(i) - &b.row(i);
        let sq = d.dot(&d);
        let mut g = grad_a.row_mut(i);
        if pos {
            loss += (1.0 - gamma) * sq;
            g.assign(&(&d * (2.0 * (1.0 - gamma))));
        } else {
            let dist = sq.sqrt();
            let hinge = (margin - dist).max(0.0);
            loss += gamma * hinge * hinge;
            if hinge > 0.0 && dist > 0.0 {
                g.assign(&(&d * (-2.0 * gamma * hinge / dist)));
            }
        }
    }
    let grad_b = -&grad_a;
    Ok(SiameseLoss { loss, grad_a, grad_b })
}

fn check_targets(rows: usize, classes: usize, targets: &[usize]) -> Result<(), LearnError> {
    if targets.len() != rows {
        return Err(LearnError::DimensionMismatch {
            expected: rows,
            found: targets.len(),
        });
    }
    if let Some(&t) = targets.iter().find(|&&t| t >= classes) {
        return Err(LearnError::TargetOutOfRange { target: t, classes });
    }
    Ok(())
}

/// `−Σ_i log p(i, j_i)` and its gradient with respect to the pre-softmax
/// logits, `p − e_j`.
pub fn multinomial_loss(probs: ArrayView2<f64>, targets: &[usize]) -> Result<(f64, Array2<f64>), LearnError> {
    check_targets(probs.nrows(), probs.ncols(), targets)?;
    let loss = targets.iter().enumerate().map(|(i, &t)| -probs[[i, t]].ln()).sum();
    let mut grad = probs.to_owned();
    for (i, &t) in targets.iter().enumerate() {
        grad[[i, t]] -= 1.0;
    }
    Ok((loss, grad))
}

/// [`multinomial_loss`] evaluated from logits through a log-sum-exp, which
/// stays finite when a probability underflows.
pub fn multinomial_loss_from_logits(logits: ArrayView2<f64>, targets: &[usize]) -> Result<(f64, Array2<f64>), LearnError> {
    check_targets(logits.nrows(), logits.ncols(), targets)?;
    let mut grad = Array2::zeros(logits.raw_dim());
    let mut loss = 0.0;
    for ((i, row), mut g) in logits.axis_iter(Axis(0)).enumerate().zip(grad.rows_mut()) {
        let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = m + row.iter().map(|&v| (v - m).exp()).sum::<f64>().ln();
        loss += lse - row[targets[i]];
        g.iter_mut().zip(row).for_each(|(gi, &v)| *gi = (v - lse).exp());
        g[targets[i]] -= 1.0;
    }
    Ok((loss, grad))
}
