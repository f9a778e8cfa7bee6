//! One-vs-rest logistic regression with balanced class weighting.
//!
//! Each canonical label gets an independent binary head trained by full-batch
//! gradient descent on L2-regularized, inverse-class-frequency-weighted
//! cross-entropy. Training is seedless and deterministic: weights start at
//! zero and the data order fixes everything else.

use serde::{Deserialize, Serialize};

use super::{sigmoid, ClassifyError, Standardizer, LABEL_COUNT};
use crate::features::LabelSet;

/// Hyperparameters for one training run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LrHyperParams {
    pub l2: f64,
    pub learning_rate: f64,
    pub max_steps: usize,
    /// Stop when the gradient norm falls below this.
    pub tolerance: f64,
}

impl Default for LrHyperParams {
    fn default() -> Self {
        LrHyperParams {
            l2: 1.0,
            learning_rate: 0.1,
            max_steps: 5000,
            tolerance: 1e-8,
        }
    }
}

/// One binary head: either a trained linear model or, for a training fold
/// that saw a single class, a flagged constant-probability predictor at the
/// class prior.
#[derive(Debug, Clone, PartialEq)]
pub enum LrHead {
    Trained { weights: Vec<f64>, bias: f64 },
    Constant { probability: f64 },
}

/// Trained one-vs-rest model: five heads plus the standardization fitted on
/// the training rows only.
#[derive(Debug, Clone, PartialEq)]
pub struct LrModel {
    pub heads: Vec<LrHead>,
    pub standardizer: Standardizer,
    pub hyper: LrHyperParams,
    /// Labels whose head degenerated to a constant.
    pub degenerate_labels: Vec<usize>,
}

/// Weighted, L2-regularized binary cross-entropy:
/// J = (1/n) Σ wᵢ·bceᵢ + λ/(2n)·‖w‖² (bias unpenalized).
pub fn binary_loss(
    rows: &[Vec<f64>],
    targets: &[f64],
    sample_weights: &[f64],
    weights: &[f64],
    bias: f64,
    l2: f64,
) -> f64 {
    const EPS: f64 = 1e-12;
    let n = rows.len() as f64;
    let mut loss = 0.0;
    for ((x, &y), &w) in rows.iter().zip(targets).zip(sample_weights) {
        let p = sigmoid(dot(weights, x) + bias).clamp(EPS, 1.0 - EPS);
        loss += w * (-y * p.ln() - (1.0 - y) * (1.0 - p).ln());
    }
    loss / n + l2 / (2.0 * n) * weights.iter().map(|w| w * w).sum::<f64>()
}

/// Analytic gradient of [`binary_loss`] in (weights, bias).
pub fn binary_gradient(
    rows: &[Vec<f64>],
    targets: &[f64],
    sample_weights: &[f64],
    weights: &[f64],
    bias: f64,
    l2: f64,
) -> (Vec<f64>, f64) {
    let n = rows.len() as f64;
    let mut grad_w = vec![0.0; weights.len()];
    let mut grad_b = 0.0;
    for ((x, &y), &w) in rows.iter().zip(targets).zip(sample_weights) {
        let residual = w * (sigmoid(dot(weights, x) + bias) - y);
        for (g, &xi) in grad_w.iter_mut().zip(x) {
            *g += residual * xi;
        }
        grad_b += residual;
    }
    for (g, &w) in grad_w.iter_mut().zip(weights) {
        *g = *g / n + l2 / n * w;
    }
    (grad_w, grad_b / n)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Inverse-class-frequency sample weights: n/(2·n_pos) for positives,
/// n/(2·n_neg) for negatives, so the two classes carry equal total mass.
fn balanced_weights(targets: &[f64]) -> Vec<f64> {
    let n = targets.len() as f64;
    let n_pos = targets.iter().sum::<f64>();
    let n_neg = n - n_pos;
    targets
        .iter()
        .map(|&y| if y > 0.5 { n / (2.0 * n_pos) } else { n / (2.0 * n_neg) })
        .collect()
}

/// Train all five heads on the given training subset.
pub fn train_lr(
    rows: &[Vec<f64>],
    labels: &[LabelSet],
    train_indices: &[usize],
    hyper: LrHyperParams,
) -> Result<LrModel, ClassifyError> {
    if rows.is_empty() || train_indices.is_empty() {
        return Err(ClassifyError::EmptyInput);
    }
    if rows.len() != labels.len() {
        return Err(ClassifyError::LengthMismatch {
            rows: rows.len(),
            labels: labels.len(),
        });
    }
    let standardizer = Standardizer::fit(rows, train_indices)?;
    let train_rows: Vec<Vec<f64>> = train_indices
        .iter()
        .map(|&i| standardizer.transform(&rows[i]))
        .collect();

    let mut heads = Vec::with_capacity(LABEL_COUNT);
    let mut degenerate_labels = Vec::new();
    for label_idx in 0..LABEL_COUNT {
        let targets: Vec<f64> = train_indices
            .iter()
            .map(|&i| if labels[i].as_array()[label_idx] { 1.0 } else { 0.0 })
            .collect();
        let n_pos = targets.iter().sum::<f64>();
        if n_pos == 0.0 || n_pos == targets.len() as f64 {
            let prior = (n_pos / targets.len() as f64).clamp(1e-9, 1.0 - 1e-9);
            heads.push(LrHead::Constant { probability: prior });
            degenerate_labels.push(label_idx);
            continue;
        }

        let sample_weights = balanced_weights(&targets);
        let width = train_rows[0].len();
        let mut weights = vec![0.0; width];
        let mut bias = 0.0;
        for _ in 0..hyper.max_steps {
            let (grad_w, grad_b) =
                binary_gradient(&train_rows, &targets, &sample_weights, &weights, bias, hyper.l2);
            let norm = (grad_w.iter().map(|g| g * g).sum::<f64>() + grad_b * grad_b).sqrt();
            if norm < hyper.tolerance {
                break;
            }
            for (w, g) in weights.iter_mut().zip(&grad_w) {
                *w -= hyper.learning_rate * g;
            }
            bias -= hyper.learning_rate * grad_b;
        }
        heads.push(LrHead::Trained { weights, bias });
    }

    Ok(LrModel {
        heads,
        standardizer,
        hyper,
        degenerate_labels,
    })
}

impl LrModel {
    /// Per-record probabilities for the five labels, each in (0,1).
    pub fn predict_proba(&self, rows: &[Vec<f64>]) -> Result<Vec<[f64; 5]>, ClassifyError> {
        let width = self.standardizer.width();
        let mut out = Vec::with_capacity(rows.len());
        for row in rows {
            if row.len() != width {
                return Err(ClassifyError::FeatureWidthMismatch {
                    expected: width,
                    found: row.len(),
                });
            }
            let x = self.standardizer.transform(row);
            let mut probs = [0.0; 5];
            for (slot, head) in probs.iter_mut().zip(&self.heads) {
                *slot = match head {
                    LrHead::Trained { weights, bias } => {
                        sigmoid(dot(weights, &x) + bias).clamp(1e-12, 1.0 - 1e-12)
                    }
                    LrHead::Constant { probability } => *probability,
                };
            }
            out.push(probs);
        }
        Ok(out)
    }
}
