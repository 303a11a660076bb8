use rand_distr::{Distribution, StandardNormal};

use super::{Dataset, FiniteSumProblem, ProblemError, ProblemMeta};
use crate::seed::rng;
use crate::vecops::{sigmoid, softplus};

/// One-hidden-layer perceptron with softplus activation and softmax
/// cross-entropy loss. Gradients come from hand-written backpropagation.
///
/// Parameter layout: `W1 (h×p) | b1 (h) | W2 (C×h) | b2 (C)`, row-major.
#[derive(Debug, Clone)]
pub struct MlpClassifier {
    features: Vec<f64>,
    inputs: usize,
    labels: Vec<usize>,
    hidden: usize,
    classes: usize,
    meta: ProblemMeta,
}

struct Forward {
    pre: Vec<f64>,
    hidden: Vec<f64>,
    probs: Vec<f64>,
    loss: f64,
}

impl MlpClassifier {
    pub fn new(data: &Dataset, hidden: usize) -> Result<Self, ProblemError> {
        let (labels, classes) = data.class_indices();
        Self::with_classes(data, labels, classes, hidden)
    }

    /// Explicit class indices `0..classes`.
    pub fn with_classes(data: &Dataset, labels: Vec<usize>, classes: usize, hidden: usize) -> Result<Self, ProblemError> {
        if hidden == 0 {
            return Err(ProblemError::InvalidParameter {
                name: "hidden",
                reason: "must be at least 1".into(),
            });
        }
        if classes < 2 {
            return Err(ProblemError::InvalidParameter {
                name: "classes",
                reason: "need at least 2 classes".into(),
            });
        }
        if labels.len() != data.len() {
            return Err(ProblemError::DimensionMismatch {
                expected: data.len(),
                found: labels.len(),
            });
        }
        if let Some(&bad) = labels.iter().find(|&&y| y >= classes) {
            return Err(ProblemError::InvalidParameter {
                name: "labels",
                reason: format!("class index {bad} >= {classes}"),
            });
        }
        Ok(Self {
            features: data.features.clone(),
            inputs: data.num_features,
            labels,
            hidden,
            classes,
            meta: ProblemMeta::new("mlp"),
        })
    }

    /// Same network evaluated on other samples (labels given as class indices).
    pub fn on_samples(&self, data: &Dataset, labels: Vec<usize>) -> Result<Self, ProblemError> {
        Self::with_classes(data, labels, self.classes, self.hidden)
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    fn offsets(&self) -> (usize, usize, usize) {
        let w1 = self.hidden * self.inputs;
        let b1 = w1 + self.hidden;
        let w2 = b1 + self.classes * self.hidden;
        (w1, b1, w2)
    }

    fn input(&self, i: usize) -> &[f64] {
        &self.features[i * self.inputs..(i + 1) * self.inputs]
    }

    fn forward(&self, w: &[f64], i: usize) -> Forward {
        let (o_b1, o_w2, o_b2) = self.offsets();
        let x = self.input(i);
        let mut pre = Vec::with_capacity(self.hidden);
        for r in 0..self.hidden {
            let row = &w[r * self.inputs..(r + 1) * self.inputs];
            let a: f64 = row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + w[o_b1 + r];
            pre.push(a);
        }
        let hidden: Vec<f64> = pre.iter().map(|&a| softplus(a)).collect();
        let mut logits = Vec::with_capacity(self.classes);
        for c in 0..self.classes {
            let row = &w[o_w2 + c * self.hidden..o_w2 + (c + 1) * self.hidden];
            let z: f64 = row.iter().zip(&hidden).map(|(a, b)| a * b).sum::<f64>() + w[o_b2 + c];
            logits.push(z);
        }
        let zmax = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = logits.iter().map(|z| (z - zmax).exp()).collect();
        let total: f64 = exps.iter().sum();
        let log_norm = zmax + total.ln();
        let loss = log_norm - logits[self.labels[i]];
        let probs = exps.iter().map(|e| e / total).collect();
        Forward {
            pre,
            hidden,
            probs,
            loss: loss.max(0.0),
        }
    }
}

impl FiniteSumProblem for MlpClassifier {
    fn num_samples(&self) -> usize {
        self.labels.len()
    }

    fn dim(&self) -> usize {
        self.hidden * self.inputs + self.hidden + self.classes * self.hidden + self.classes
    }

    fn per_sample_value(&self, w: &[f64], i: usize) -> f64 {
        self.forward(w, i).loss
    }

    fn accumulate_sample_gradient(&self, w: &[f64], i: usize, scale: f64, grad: &mut [f64]) -> f64 {
        let (o_b1, o_w2, o_b2) = self.offsets();
        let fwd = self.forward(w, i);
        let mut dz = fwd.probs;
        dz[self.labels[i]] -= 1.0;

        let mut dh = vec![0.0; self.hidden];
        for (c, &d) in dz.iter().enumerate() {
            grad[o_b2 + c] += scale * d;
            let base = o_w2 + c * self.hidden;
            for r in 0..self.hidden {
                grad[base + r] += scale * d * fwd.hidden[r];
                dh[r] += d * w[base + r];
            }
        }
        let x = self.input(i);
        for r in 0..self.hidden {
            let da = dh[r] * sigmoid(fwd.pre[r]);
            grad[o_b1 + r] += scale * da;
            let base = r * self.inputs;
            for (g, xj) in grad[base..base + self.inputs].iter_mut().zip(x) {
                *g += scale * da * xj;
            }
        }
        fwd.loss
    }

    fn meta(&self) -> &ProblemMeta {
        &self.meta
    }

    fn accuracy(&self, w: &[f64]) -> Option<f64> {
        let n = self.num_samples();
        if n == 0 {
            return None;
        }
        let correct = (0..n)
            .filter(|&i| {
                let probs = self.forward(w, i).probs;
                let best = probs
                    .iter()
                    .enumerate()
                    .max_by(|a, b| a.1.total_cmp(b.1))
                    .map(|(c, _)| c)
                    .unwrap();
                best == self.labels[i]
            })
            .count();
        Some(correct as f64 / n as f64)
    }

    fn initial_point(&self, seed: u64) -> Vec<f64> {
        let (o_b1, o_w2, o_b2) = self.offsets();
        let mut rng = rng(seed);
        let mut w = vec![0.0; self.dim()];
        let s1 = 1.0 / (self.inputs as f64).sqrt();
        for v in &mut w[..o_b1] {
            let z: f64 = StandardNormal.sample(&mut rng);
            *v = s1 * z;
        }
        let s2 = 1.0 / (self.hidden as f64).sqrt();
        for v in &mut w[o_w2..o_b2] {
            let z: f64 = StandardNormal.sample(&mut rng);
            *v = s2 * z;
        }
        w
    }
}
