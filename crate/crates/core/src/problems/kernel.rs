use super::{Dataset, FiniteSumProblem, ProblemError, ProblemMeta};
use crate::vecops::{dist_sq, dot, norm_sq, sigmoid, softplus};

/// `K(x, z) = exp(−‖x − z‖² / (2σ²))` with `σ = bandwidth`.
pub fn rbf_kernel(x: &[f64], z: &[f64], bandwidth: f64) -> f64 {
    (-dist_sq(x, z) / (2.0 * bandwidth * bandwidth)).exp()
}

/// Unregularised kernel logistic regression
/// `f_i(w) = log(1 + exp(−y_i K_i·w))` over the Gram feature map of the
/// training points. No bias term.
#[derive(Debug, Clone)]
pub struct KernelLogistic {
    /// Row `i` holds `K(x_i, c_j)` for every centre `c_j`.
    gram: Vec<f64>,
    labels: Vec<f64>,
    lipschitz: Vec<f64>,
    centres: Dataset,
    bandwidth: f64,
    meta: ProblemMeta,
}

impl KernelLogistic {
    /// Builds the training problem; the training points are also the kernel
    /// centres.
    pub fn new(data: &Dataset, bandwidth: f64) -> Result<Self, ProblemError> {
        Self::with_centres(data, data.clone(), bandwidth)
    }

    /// Same model evaluated on other samples (for test accuracy).
    pub fn on_samples(&self, data: &Dataset) -> Result<Self, ProblemError> {
        Self::with_centres(data, self.centres.clone(), self.bandwidth)
    }

    fn with_centres(data: &Dataset, centres: Dataset, bandwidth: f64) -> Result<Self, ProblemError> {
        if !(bandwidth > 0.0) || !bandwidth.is_finite() {
            return Err(ProblemError::InvalidParameter {
                name: "bandwidth",
                reason: format!("must be positive, got {bandwidth}"),
            });
        }
        if let Some((index, &label)) = data.labels.iter().enumerate().find(|(_, &y)| y != 1.0 && y != -1.0) {
            return Err(ProblemError::BadLabel { index, label });
        }
        if data.num_features != centres.num_features {
            return Err(ProblemError::DimensionMismatch {
                expected: centres.num_features,
                found: data.num_features,
            });
        }
        let m = centres.len();
        let mut gram = Vec::with_capacity(data.len() * m);
        for i in 0..data.len() {
            for j in 0..m {
                gram.push(rbf_kernel(data.row(i), centres.row(j), bandwidth));
            }
        }
        let lipschitz: Vec<f64> = gram.chunks(m.max(1)).map(|k| 0.25 * norm_sq(k)).collect();
        let mut meta = ProblemMeta::new("kernel_logistic");
        meta.lipschitz_max = Some(lipschitz.iter().cloned().fold(0.0, f64::max));
        Ok(Self {
            gram,
            labels: data.labels.clone(),
            lipschitz,
            centres,
            bandwidth,
            meta,
        })
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    fn kernel_row(&self, i: usize) -> &[f64] {
        let m = self.centres.len();
        &self.gram[i * m..(i + 1) * m]
    }

    fn margin(&self, w: &[f64], i: usize) -> f64 {
        self.labels[i] * dot(self.kernel_row(i), w)
    }
}

impl FiniteSumProblem for KernelLogistic {
    fn num_samples(&self) -> usize {
        self.labels.len()
    }

    fn dim(&self) -> usize {
        self.centres.len()
    }

    fn per_sample_value(&self, w: &[f64], i: usize) -> f64 {
        softplus(-self.margin(w, i))
    }

    fn accumulate_sample_gradient(&self, w: &[f64], i: usize, scale: f64, grad: &mut [f64]) -> f64 {
        let z = self.margin(w, i);
        // d/dz log(1 + e^{-z}) = −σ(−z)
        let coef = -scale * self.labels[i] * sigmoid(-z);
        for (g, k) in grad.iter_mut().zip(self.kernel_row(i)) {
            *g += coef * k;
        }
        softplus(-z)
    }

    fn meta(&self) -> &ProblemMeta {
        &self.meta
    }

    fn sample_lipschitz(&self, i: usize) -> Option<f64> {
        Some(self.lipschitz[i])
    }

    fn accuracy(&self, w: &[f64]) -> Option<f64> {
        let n = self.num_samples();
        if n == 0 {
            return None;
        }
        let correct = (0..n).filter(|&i| self.margin(w, i) > 0.0).count();
        Some(correct as f64 / n as f64)
    }
}
