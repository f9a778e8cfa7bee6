//! Shallow multilayer perceptron: one rectified hidden layer, five sigmoid
//! output units, per-label binary cross-entropy, full-batch backpropagation
//! with a fixed seed.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{sigmoid, ClassifyError, Standardizer, LABEL_COUNT};
use crate::features::LabelSet;

const EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MlpHyperParams {
    pub hidden: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for MlpHyperParams {
    fn default() -> Self {
        MlpHyperParams {
            hidden: 32,
            learning_rate: 0.01,
            epochs: 2000,
            seed: 42,
        }
    }
}

/// Network parameters. Weight rows are per-unit: `w1[h]` feeds hidden unit
/// `h`, `w2[o]` feeds output unit `o`.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpNet {
    pub w1: Vec<Vec<f64>>,
    pub b1: Vec<f64>,
    pub w2: Vec<Vec<f64>>,
    pub b2: Vec<f64>,
}

/// Gradients in the same layout as [`MlpNet`].
#[derive(Debug, Clone, PartialEq)]
pub struct MlpGradients {
    pub w1: Vec<Vec<f64>>,
    pub b1: Vec<f64>,
    pub w2: Vec<Vec<f64>>,
    pub b2: Vec<f64>,
}

impl MlpNet {
    /// Xavier-uniform initialization from the given seed.
    pub fn init(input_width: usize, hidden: usize, seed: u64) -> MlpNet {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut layer = |fan_in: usize, fan_out: usize| -> Vec<Vec<f64>> {
            let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
            (0..fan_out)
                .map(|_| (0..fan_in).map(|_| rng.gen_range(-bound..bound)).collect())
                .collect()
        };
        let w1 = layer(input_width, hidden);
        let w2 = layer(hidden, LABEL_COUNT);
        MlpNet {
            w1,
            b1: vec![0.0; hidden],
            w2,
            b2: vec![0.0; LABEL_COUNT],
        }
    }

    /// Forward pass for one (standardized) row: hidden pre-activations,
    /// hidden activations, output probabilities.
    fn forward(&self, x: &[f64]) -> (Vec<f64>, Vec<f64>, [f64; 5]) {
        let z1: Vec<f64> = self
            .w1
            .iter()
            .zip(&self.b1)
            .map(|(row, b)| row.iter().zip(x).map(|(w, xi)| w * xi).sum::<f64>() + b)
            .collect();
        let a1: Vec<f64> = z1.iter().map(|&z| z.max(0.0)).collect();
        let mut probs = [0.0; 5];
        for (o, (row, b)) in self.w2.iter().zip(&self.b2).enumerate() {
            let z = row.iter().zip(&a1).map(|(w, a)| w * a).sum::<f64>() + b;
            probs[o] = sigmoid(z);
        }
        (z1, a1, probs)
    }

    /// Mean binary cross-entropy over every (record, label) cell.
    pub fn loss(&self, rows: &[Vec<f64>], targets: &[[f64; 5]]) -> f64 {
        let cells = (rows.len() * LABEL_COUNT) as f64;
        let mut total = 0.0;
        for (x, y) in rows.iter().zip(targets) {
            let (_, _, probs) = self.forward(x);
            for (p, t) in probs.iter().zip(y) {
                let p = p.clamp(EPS, 1.0 - EPS);
                total += -t * p.ln() - (1.0 - t) * (1.0 - p).ln();
            }
        }
        total / cells
    }

    /// Full-batch analytic gradients of [`Self::loss`].
    pub fn gradients(&self, rows: &[Vec<f64>], targets: &[[f64; 5]]) -> MlpGradients {
        let cells = (rows.len() * LABEL_COUNT) as f64;
        let hidden = self.b1.len();
        let width = self.w1.first().map(|r| r.len()).unwrap_or(0);
        let mut grads = MlpGradients {
            w1: vec![vec![0.0; width]; hidden],
            b1: vec![0.0; hidden],
            w2: vec![vec![0.0; hidden]; LABEL_COUNT],
            b2: vec![0.0; LABEL_COUNT],
        };
        for (x, y) in rows.iter().zip(targets) {
            let (z1, a1, probs) = self.forward(x);
            // d(loss)/d(z2_o) = (p_o − y_o) / cells
            let dz2: Vec<f64> = probs
                .iter()
                .zip(y)
                .map(|(p, t)| (p - t) / cells)
                .collect();
            for (o, &d) in dz2.iter().enumerate() {
                for (g, &a) in grads.w2[o].iter_mut().zip(&a1) {
                    *g += d * a;
                }
                grads.b2[o] += d;
            }
            for h in 0..hidden {
                if z1[h] <= 0.0 {
                    continue;
                }
                let upstream: f64 = dz2.iter().zip(&self.w2).map(|(d, row)| d * row[h]).sum();
                for (g, &xi) in grads.w1[h].iter_mut().zip(x) {
                    *g += upstream * xi;
                }
                grads.b1[h] += upstream;
            }
        }
        grads
    }

    fn apply(&mut self, grads: &MlpGradients, learning_rate: f64) {
        for (row, grow) in self.w1.iter_mut().zip(&grads.w1) {
            for (w, g) in row.iter_mut().zip(grow) {
                *w -= learning_rate * g;
            }
        }
        for (b, g) in self.b1.iter_mut().zip(&grads.b1) {
            *b -= learning_rate * g;
        }
        for (row, grow) in self.w2.iter_mut().zip(&grads.w2) {
            for (w, g) in row.iter_mut().zip(grow) {
                *w -= learning_rate * g;
            }
        }
        for (b, g) in self.b2.iter_mut().zip(&grads.b2) {
            *b -= learning_rate * g;
        }
    }
}

/// Trained model: the network plus the training-fold standardization.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    pub net: MlpNet,
    pub standardizer: Standardizer,
    pub hyper: MlpHyperParams,
    pub final_loss: f64,
}

/// Train on the given subset by full-batch gradient descent for a fixed
/// number of epochs.
pub fn train_mlp(
    rows: &[Vec<f64>],
    labels: &[LabelSet],
    train_indices: &[usize],
    hyper: MlpHyperParams,
) -> Result<MlpModel, ClassifyError> {
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
    let targets: Vec<[f64; 5]> = train_indices
        .iter()
        .map(|&i| {
            let mut t = [0.0; 5];
            for (slot, on) in t.iter_mut().zip(labels[i].as_array()) {
                *slot = if on { 1.0 } else { 0.0 };
            }
            t
        })
        .collect();

    let mut net = MlpNet::init(train_rows[0].len(), hyper.hidden, hyper.seed);
    let mut last_loss = net.loss(&train_rows, &targets);
    for epoch in 0..hyper.epochs {
        let grads = net.gradients(&train_rows, &targets);
        net.apply(&grads, hyper.learning_rate);
        last_loss = net.loss(&train_rows, &targets);
        if !last_loss.is_finite() {
            return Err(ClassifyError::TrainingDivergence { epoch });
        }
    }

    Ok(MlpModel {
        net,
        standardizer,
        hyper,
        final_loss: last_loss,
    })
}

impl MlpModel {
    /// Per-record label probabilities, each in the open interval (0,1).
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
            let (_, _, mut probs) = self.net.forward(&x);
            for p in probs.iter_mut() {
                *p = p.clamp(EPS, 1.0 - EPS);
            }
            out.push(probs);
        }
        Ok(out)
    }
}
