//! Uniform black-box classifier abstraction, so the explainers never need
//! model-specific branching.

use serde::{Deserialize, Serialize};

use crate::cart::CartTree;
use crate::data::EncodedDataset;

/// A fitted binary classifier. Probabilities are `(p_normal, p_attack)`
/// and always sum to 1.
pub trait BlackBoxModel: Sync {
    fn predict_proba(&self, x: &[f64]) -> (f64, f64);

    fn predict(&self, x: &[f64]) -> u8 {
        let (_, p_attack) = self.predict_proba(x);
        u8::from(p_attack > 0.5)
    }
}

impl BlackBoxModel for CartTree {
    fn predict_proba(&self, x: &[f64]) -> (f64, f64) {
        CartTree::predict_proba(self, x).expect("feature dimension matches training data")
    }
}

/// Fraction of rows the model labels correctly.
pub fn accuracy(model: &dyn BlackBoxModel, matrix: &[Vec<f64>], labels: &[u8]) -> f64 {
    assert_eq!(matrix.len(), labels.len());
    let correct = matrix
        .iter()
        .zip(labels)
        .filter(|(x, y)| model.predict(x) == **y)
        .count();
    correct as f64 / matrix.len() as f64
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Logistic linear classifier trained by full-batch gradient descent.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LinearClassifier {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    pub seed: u64,
}

impl LinearClassifier {
    fn logit(&self, x: &[f64]) -> f64 {
        self.bias
            + self
                .weights
                .iter()
                .zip(x)
                .map(|(w, v)| w * v)
                .sum::<f64>()
    }
}

impl BlackBoxModel for LinearClassifier {
    fn predict_proba(&self, x: &[f64]) -> (f64, f64) {
        let p_attack = sigmoid(self.logit(x));
        (1.0 - p_attack, p_attack)
    }
}

/// Mean logistic loss of `(weights, bias)` over the rows.
pub fn logistic_loss(weights: &[f64], bias: f64, matrix: &[Vec<f64>], labels: &[u8]) -> f64 {
    let n = matrix.len() as f64;
    matrix
        .iter()
        .zip(labels)
        .map(|(x, &y)| {
            let z = bias + weights.iter().zip(x).map(|(w, v)| w * v).sum::<f64>();
            let p = sigmoid(z).clamp(1e-12, 1.0 - 1e-12);
            if y == 1 {
                -p.ln()
            } else {
                -(1.0 - p).ln()
            }
        })
        .sum::<f64>()
        / n
}

/// Analytic gradient of the mean logistic loss: `(d/dw, d/db)`.
pub fn logistic_gradient(
    weights: &[f64],
    bias: f64,
    matrix: &[Vec<f64>],
    labels: &[u8],
) -> (Vec<f64>, f64) {
    let n = matrix.len() as f64;
    let mut grad_w = vec![0.0; weights.len()];
    let mut grad_b = 0.0;
    for (x, &y) in matrix.iter().zip(labels) {
        let z = bias + weights.iter().zip(x).map(|(w, v)| w * v).sum::<f64>();
        let err = sigmoid(z) - y as f64;
        for (g, v) in grad_w.iter_mut().zip(x) {
            *g += err * v / n;
        }
        grad_b += err / n;
    }
    (grad_w, grad_b)
}

/// Fit by full-batch gradient descent from zero-initialized weights.
pub fn fit_linear(
    train: &EncodedDataset,
    learning_rate: f64,
    epochs: usize,
    seed: u64,
) -> LinearClassifier {
    assert!(!train.matrix.is_empty(), "training set must be non-empty");
    let n_features = train.n_features();
    let mut weights = vec![0.0; n_features];
    let mut bias = 0.0;
    for _ in 0..epochs {
        let (grad_w, grad_b) = logistic_gradient(&weights, bias, &train.matrix, &train.labels);
        for (w, g) in weights.iter_mut().zip(&grad_w) {
            *w -= learning_rate * g;
        }
        bias -= learning_rate * grad_b;
    }
    LinearClassifier {
        weights,
        bias,
        learning_rate,
        epochs,
        seed,
    }
}

/// Shared helpers for unit tests across the crate.
#[cfg(test)]
pub(crate) mod tests_support {
    use crate::data::{EncodedDataset, FeatureStat, ScalerStat};
    use crate::schema::{FeatureKind, FeatureSchema, FeatureSpec};

    /// Wrap an already-numeric matrix in an `EncodedDataset` with identity
    /// scaling and all-numeric feature metadata.
    pub(crate) fn dataset_from(matrix: Vec<Vec<f64>>, labels: Vec<u8>) -> EncodedDataset {
        let n_features = matrix[0].len();
        EncodedDataset {
            schema: FeatureSchema {
                name: "synth".into(),
                features: (0..n_features)
                    .map(|i| FeatureSpec {
                        name: format!("f{i}"),
                        kind: FeatureKind::Numeric,
                        categories: vec![],
                    })
                    .collect(),
                label_column: "label".into(),
                attack_category_column: None,
            },
            matrix,
            labels,
            encoders: vec![None; n_features],
            scaler: vec![ScalerStat { mean: 0.0, std: 1.0 }; n_features],
            feature_stats: (0..n_features)
                .map(|_| FeatureStat::Numeric { mean: 0.0, std: 1.0 })
                .collect(),
        }
    }
}
