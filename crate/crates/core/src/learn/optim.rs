/// Adadelta with per-parameter running averages of squared gradients and
/// squared updates.
#[derive(Debug, Clone, PartialEq)]
pub struct Adadelta {
    pub decay: f64,
    pub epsilon: f64,
    mean_sq_grad: Vec<f64>,
    mean_sq_update: Vec<f64>,
}

impl Adadelta {
    pub fn new(len: usize, decay: f64, epsilon: f64) -> Self {
        Self {
            decay,
            epsilon,
            mean_sq_grad: vec![0.0; len],
            mean_sq_update: vec![0.0; len],
        }
    }

    pub fn mean_sq_grad(&self) -> &[f64] {
        &self.mean_sq_grad
    }

    pub fn mean_sq_update(&self) -> &[f64] {
        &self.mean_sq_update
    }

    /// Applies one update in place and returns nothing; panics on length
    /// mismatch.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) {
        assert_eq!(params.len(), grads.len(), "parameter/gradient length");
        assert_eq!(params.len(), self.mean_sq_grad.len(), "optimizer state length");
        let (r, e) = (self.decay, self.epsilon);
        for i in 0..params.len() {
            let g = grads[i];
            self.mean_sq_grad[i] = r * self.mean_sq_grad[i] + (1.0 - r) * g * g;
            let dx = -((self.mean_sq_update[i] + e).sqrt() / (self.mean_sq_grad[i] + e).sqrt()) * g;
            self.mean_sq_update[i] = r * self.mean_sq_update[i] + (1.0 - r) * dx * dx;
            params[i] += dx;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_only_decays() {
        let mut opt = Adadelta::new(2, 0.95, 1e-6);
        let mut w = vec![1.0, -1.0];
        opt.step(&mut w, &[1.0, 0.5]);
        let before = opt.clone();
        let w0 = w.clone();
        opt.step(&mut w, &[0.0, 0.0]);
        assert_eq!(w, w0);
        for i in 0..2 {
            assert_eq!(opt.mean_sq_grad()[i], 0.95 * before.mean_sq_grad()[i]);
            assert_eq!(opt.mean_sq_update()[i], 0.95 * before.mean_sq_update()[i]);
        }
    }

    #[test]
    fn quadratic_descends() {
        let mut opt = Adadelta::new(1, 0.95, 1e-6);
        let mut w = vec![1.0];
        let mut prev = 1.0f64;
        for _ in 0..100 {
            let g = 2.0 * w[0];
            opt.step(&mut w, &[g]);
            assert!(w[0].abs() < prev);
            prev = w[0].abs();
        }
    }
}
