use serde::{Deserialize, Serialize};

/// Diagonal second-moment preconditioner.
///
/// Returns `(d, v)` with `v = β₂ v_prev + (1 − β₂) g²`, bias-corrected
/// `v̂ = v / (1 − β₂^k)` and `d = −g / (√v̂ + ε)`. `k` counts from 1.
pub fn precondition(g: &[f64], v_prev: &[f64], beta2: f64, eps: f64, k: u64) -> (Vec<f64>, Vec<f64>) {
    let correction = 1.0 - beta2.powi(k.min(i32::MAX as u64) as i32);
    let mut d = Vec::with_capacity(g.len());
    let mut v = Vec::with_capacity(g.len());
    for (&gi, &vi) in g.iter().zip(v_prev) {
        let vn = beta2 * vi + (1.0 - beta2) * gi * gi;
        v.push(vn);
        d.push(-gi / ((vn / correction).sqrt() + eps));
    }
    (d, v)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl AdamState {
    pub fn new(dim: usize) -> Self {
        Self {
            m: vec![0.0; dim],
            v: vec![0.0; dim],
            t: 0,
        }
    }

    pub fn apply(&mut self, w: &mut [f64], grad: &[f64], lr: f64, beta1: f64, beta2: f64, eps: f64) {
        self.t += 1;
        let t = self.t.min(i32::MAX as u64) as i32;
        let c1 = 1.0 - beta1.powi(t);
        let c2 = 1.0 - beta2.powi(t);
        for j in 0..w.len() {
            self.m[j] = beta1 * self.m[j] + (1.0 - beta1) * grad[j];
            self.v[j] = beta2 * self.v[j] + (1.0 - beta2) * grad[j] * grad[j];
            let m_hat = self.m[j] / c1;
            let v_hat = self.v[j] / c2;
            w[j] -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_is_sign_like() {
        let (d, v) = precondition(&[2.0, -0.5, 0.0], &[0.0; 3], 0.9, 1e-8, 1);
        assert!((v[0] - 0.4).abs() < 1e-15);
        assert!((d[0] + 1.0).abs() < 1e-8);
        assert!((d[1] - 1.0).abs() < 1e-7);
        assert_eq!(d[2], 0.0);
    }

    #[test]
    fn direction_is_descent() {
        let g = [0.3, -1.2, 4.0];
        let (d, _) = precondition(&g, &[0.1, 0.2, 0.3], 0.9, 1e-8, 5);
        let dec: f64 = -d.iter().zip(&g).map(|(a, b)| a * b).sum::<f64>();
        assert!(dec > 0.0);
    }
}
