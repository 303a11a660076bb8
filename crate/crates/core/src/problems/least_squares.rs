use nalgebra::{DMatrix, SymmetricEigen};
use rand_distr::{Distribution, StandardNormal};

use super::{FiniteSumProblem, ProblemError, ProblemMeta};
use crate::seed::rng;
use crate::vecops::{dot, norm_sq};

/// Consistent least squares `f_i(w) = ½ (x_iᵀw − y_i)²` with `y = X w°`.
///
/// Every component vanishes at the stored witness `w°`, so the problem
/// interpolates by construction. `L_i = ‖x_i‖²`; when `M ≥ n` the full
/// objective is `μ`-strongly convex with `μ = λ_min(XᵀX)/M`.
#[derive(Debug, Clone)]
pub struct InterpolatingLeastSquares {
    rows: Vec<f64>,
    targets: Vec<f64>,
    row_norms_sq: Vec<f64>,
    samples: usize,
    dim: usize,
    meta: ProblemMeta,
}

impl InterpolatingLeastSquares {
    /// Gaussian rows with column scales spread geometrically so that the
    /// population covariance has condition number `condition_target`.
    pub fn generate(seed: u64, samples: usize, dim: usize, condition_target: f64) -> Result<Self, ProblemError> {
        if samples == 0 {
            return Err(ProblemError::InvalidParameter {
                name: "samples",
                reason: "must be at least 1".into(),
            });
        }
        if dim == 0 {
            return Err(ProblemError::InvalidParameter {
                name: "dim",
                reason: "must be at least 1".into(),
            });
        }
        if !(condition_target >= 1.0) || !condition_target.is_finite() {
            return Err(ProblemError::InvalidParameter {
                name: "condition",
                reason: format!("must be a finite value >= 1, got {condition_target}"),
            });
        }
        let mut rng = rng(seed);
        let scales: Vec<f64> = (0..dim)
            .map(|j| {
                if dim == 1 {
                    1.0
                } else {
                    condition_target.powf(-(j as f64) / (2.0 * (dim - 1) as f64))
                }
            })
            .collect();
        let mut rows = Vec::with_capacity(samples * dim);
        for _ in 0..samples {
            for s in &scales {
                let z: f64 = StandardNormal.sample(&mut rng);
                rows.push(z * s);
            }
        }
        let witness: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
        Self::from_rows(rows, samples, dim, witness)
    }

    /// Builds the problem from explicit rows (row-major) and a witness.
    pub fn from_rows(rows: Vec<f64>, samples: usize, dim: usize, witness: Vec<f64>) -> Result<Self, ProblemError> {
        if rows.len() != samples * dim || witness.len() != dim {
            return Err(ProblemError::DimensionMismatch {
                expected: samples * dim,
                found: rows.len(),
            });
        }
        let targets: Vec<f64> = rows.chunks(dim).map(|x| dot(x, &witness)).collect();
        let row_norms_sq: Vec<f64> = rows.chunks(dim).map(norm_sq).collect();
        let l_max = row_norms_sq.iter().cloned().fold(0.0, f64::max);

        let mut meta = ProblemMeta::new("least_squares");
        meta.lipschitz_max = Some(l_max);
        meta.witness = Some(witness);
        if samples >= dim {
            let x = DMatrix::from_row_slice(samples, dim, &rows);
            let gram = x.transpose() * &x;
            let eig = SymmetricEigen::new(gram).eigenvalues;
            let lambda_min = eig.min();
            let lambda_max = eig.max();
            if !(lambda_min > 1e-10 * lambda_max) {
                return Err(ProblemError::RankDeficient { lambda_min, lambda_max });
            }
            meta.strong_convexity = Some(lambda_min / samples as f64);
        }
        Ok(Self {
            rows,
            targets,
            row_norms_sq,
            samples,
            dim,
            meta,
        })
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.rows[i * self.dim..(i + 1) * self.dim]
    }

    pub fn witness(&self) -> &[f64] {
        self.meta.witness.as_deref().expect("least squares always stores its witness")
    }

    fn residual(&self, w: &[f64], i: usize) -> f64 {
        dot(self.row(i), w) - self.targets[i]
    }
}

impl FiniteSumProblem for InterpolatingLeastSquares {
    fn num_samples(&self) -> usize {
        self.samples
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn per_sample_value(&self, w: &[f64], i: usize) -> f64 {
        let r = self.residual(w, i);
        0.5 * r * r
    }

    fn accumulate_sample_gradient(&self, w: &[f64], i: usize, scale: f64, grad: &mut [f64]) -> f64 {
        let r = self.residual(w, i);
        let coef = scale * r;
        for (g, x) in grad.iter_mut().zip(self.row(i)) {
            *g += coef * x;
        }
        0.5 * r * r
    }

    fn meta(&self) -> &ProblemMeta {
        &self.meta
    }

    fn sample_lipschitz(&self, i: usize) -> Option<f64> {
        Some(self.row_norms_sq[i])
    }
}
