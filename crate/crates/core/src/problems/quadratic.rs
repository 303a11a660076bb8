use rand_distr::{Distribution, StandardNormal};

use super::{FiniteSumProblem, ProblemMeta};
use crate::seed::rng;
use crate::vecops::norm_sq;

/// `f_i(w) = ½ L_i ‖w‖²`. Interpolating at the origin; used for closed-form
/// line-search checks.
#[derive(Debug, Clone)]
pub struct ScaledQuadratic {
    curvatures: Vec<f64>,
    dim: usize,
    meta: ProblemMeta,
}

impl ScaledQuadratic {
    pub fn new(curvatures: Vec<f64>, dim: usize) -> Self {
        assert!(!curvatures.is_empty(), "at least one component");
        assert!(curvatures.iter().all(|&l| l > 0.0 && l.is_finite()));
        let l_max = curvatures.iter().cloned().fold(0.0, f64::max);
        let mu = curvatures.iter().sum::<f64>() / curvatures.len() as f64;
        let mut meta = ProblemMeta::new("quadratic");
        meta.lipschitz_max = Some(l_max);
        meta.strong_convexity = Some(mu);
        meta.witness = Some(vec![0.0; dim]);
        Self {
            curvatures,
            dim,
            meta,
        }
    }
}

impl FiniteSumProblem for ScaledQuadratic {
    fn num_samples(&self) -> usize {
        self.curvatures.len()
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn per_sample_value(&self, w: &[f64], i: usize) -> f64 {
        0.5 * self.curvatures[i] * norm_sq(w)
    }

    fn accumulate_sample_gradient(&self, w: &[f64], i: usize, scale: f64, grad: &mut [f64]) -> f64 {
        let l = self.curvatures[i];
        for (g, x) in grad.iter_mut().zip(w) {
            *g += scale * l * x;
        }
        0.5 * l * norm_sq(w)
    }

    fn meta(&self) -> &ProblemMeta {
        &self.meta
    }

    fn sample_lipschitz(&self, i: usize) -> Option<f64> {
        Some(self.curvatures[i])
    }

    /// Standard normal start; the origin is the solution.
    fn initial_point(&self, seed: u64) -> Vec<f64> {
        let mut r = rng(seed);
        (0..self.dim).map(|_| StandardNormal.sample(&mut r)).collect()
    }
}
