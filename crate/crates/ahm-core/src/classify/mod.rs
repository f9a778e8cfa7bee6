//! Multi-label movement-type classification.
//!
//! Two from-scratch learners (one-vs-rest logistic regression and a shallow
//! MLP) are trained and scored under stratified label-set five-fold
//! cross-validation. Per-fold test predictions are pooled and scored once,
//! so rare labels never produce undefined per-fold metrics.

mod lr;
mod mlp;

pub use lr::{binary_gradient, binary_loss, train_lr, LrHead, LrHyperParams, LrModel};
pub use mlp::{train_mlp, MlpGradients, MlpHyperParams, MlpModel, MlpNet};

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::corpus::finish_csv;
use crate::features::{LabelSet, LABEL_NAMES};

pub const LABEL_COUNT: usize = 5;

/// Label sets rarer than this merge into one "rare" stratum.
pub const RARE_STRATUM_THRESHOLD: usize = 5;

pub(crate) fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

#[derive(Debug, Error)]
pub enum ClassifyError {
    #[error("no records supplied")]
    EmptyInput,
    #[error("{rows} feature rows but {labels} label sets")]
    LengthMismatch { rows: usize, labels: usize },
    #[error("{records} records cannot fill {folds} folds")]
    TooFewRecords { records: usize, folds: usize },
    #[error("feature width mismatch: model expects {expected}, got {found}")]
    FeatureWidthMismatch { expected: usize, found: usize },
    #[error("training diverged to a non-finite loss at epoch {epoch}")]
    TrainingDivergence { epoch: usize },
    #[error("feature column {column} is constant zero-variance and width 0")]
    DegenerateFeatures { column: usize },
}

// ---------------------------------------------------------------------------
// Standardization
// ---------------------------------------------------------------------------

/// Per-column mean/stdev transform, fitted on training rows only. Constant
/// columns keep scale 1 so they pass through centered.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    pub fn fit(rows: &[Vec<f64>], indices: &[usize]) -> Result<Standardizer, ClassifyError> {
        if indices.is_empty() {
            return Err(ClassifyError::EmptyInput);
        }
        let width = rows[indices[0]].len();
        let n = indices.len() as f64;
        let mut mean = vec![0.0; width];
        for &i in indices {
            for (m, v) in mean.iter_mut().zip(&rows[i]) {
                *m += v;
            }
        }
        for m in mean.iter_mut() {
            *m /= n;
        }
        let mut var = vec![0.0; width];
        for &i in indices {
            for ((s, v), m) in var.iter_mut().zip(&rows[i]).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let std = var
            .into_iter()
            .map(|s| {
                let sd = (s / n).sqrt();
                if sd > 0.0 {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        Ok(Standardizer { mean, std })
    }

    pub fn identity(width: usize) -> Standardizer {
        Standardizer {
            mean: vec![0.0; width],
            std: vec![1.0; width],
        }
    }

    pub fn width(&self) -> usize {
        self.mean.len()
    }

    pub fn transform(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .zip(&self.mean)
            .zip(&self.std)
            .map(|((v, m), s)| (v - m) / s)
            .collect()
    }
}

// ---------------------------------------------------------------------------
// Cross-validation plan
// ---------------------------------------------------------------------------

/// Stratified label-set fold assignment: records sharing a label powerset
/// key spread evenly over the folds; rare keys pool into one stratum first.
#[derive(Debug, Clone, PartialEq)]
pub struct CvPlan {
    pub n_folds: usize,
    pub seed: u64,
    /// Fold index per record, aligned with the input order.
    pub fold_of: Vec<usize>,
}

impl CvPlan {
    pub fn test_indices(&self, fold: usize) -> Vec<usize> {
        self.fold_of
            .iter()
            .enumerate()
            .filter(|(_, f)| **f == fold)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn train_indices(&self, fold: usize) -> Vec<usize> {
        self.fold_of
            .iter()
            .enumerate()
            .filter(|(_, f)| **f != fold)
            .map(|(i, _)| i)
            .collect()
    }

    /// Content digest of the assignment, for run manifests.
    pub fn digest(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update(self.n_folds.to_le_bytes());
        hasher.update(self.seed.to_le_bytes());
        for &fold in &self.fold_of {
            hasher.update((fold as u64).to_le_bytes());
        }
        hex_string(&hasher.finalize())
    }
}

pub(crate) fn hex_string(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Build the five-fold plan. Deterministic for a fixed seed.
pub fn make_cv_plan(labels: &[LabelSet], seed: u64) -> Result<CvPlan, ClassifyError> {
    make_cv_plan_with_folds(labels, seed, 5)
}

pub fn make_cv_plan_with_folds(
    labels: &[LabelSet],
    seed: u64,
    n_folds: usize,
) -> Result<CvPlan, ClassifyError> {
    if labels.len() < n_folds {
        return Err(ClassifyError::TooFewRecords {
            records: labels.len(),
            folds: n_folds,
        });
    }
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    for label in labels {
        *counts.entry(label.key()).or_default() += 1;
    }
    let stratum_of = |label: &LabelSet| -> String {
        let key = label.key();
        if counts[&key] < RARE_STRATUM_THRESHOLD {
            "rare".to_string()
        } else {
            key
        }
    };
    let mut strata: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for (i, label) in labels.iter().enumerate() {
        strata.entry(stratum_of(label)).or_default().push(i);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut fold_of = vec![0usize; labels.len()];
    // Rotating offset spreads stratum remainders over different folds.
    let mut offset = 0usize;
    for indices in strata.values() {
        let mut shuffled = indices.clone();
        shuffled.shuffle(&mut rng);
        for (position, &record) in shuffled.iter().enumerate() {
            fold_of[record] = (offset + position) % n_folds;
        }
        offset = (offset + shuffled.len()) % n_folds;
    }
    Ok(CvPlan {
        n_folds,
        seed,
        fold_of,
    })
}

// ---------------------------------------------------------------------------
// Prediction
// ---------------------------------------------------------------------------

/// Threshold probabilities into label sets. A record with no probability at
/// or above the threshold takes its argmax label, so every prediction
/// carries at least one label.
pub fn predict(probabilities: &[[f64; 5]], threshold: f64) -> Vec<LabelSet> {
    probabilities
        .iter()
        .map(|probs| {
            let mut flags = [false; 5];
            for (flag, &p) in flags.iter_mut().zip(probs) {
                *flag = p >= threshold;
            }
            if !flags.iter().any(|&f| f) {
                // First index wins ties.
                let mut argmax = 0;
                for (i, &p) in probs.iter().enumerate().skip(1) {
                    if p > probs[argmax] {
                        argmax = i;
                    }
                }
                flags[argmax] = true;
            }
            LabelSet::from_array(flags)
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Metrics
// ---------------------------------------------------------------------------

/// The full evaluation suite over pooled predictions.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub exact_match_accuracy: f64,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
    /// Mean AUC over labels with both classes present in truth; None when no
    /// label qualifies.
    pub macro_roc_auc: Option<f64>,
    /// Labels skipped from the AUC mean for having a single truth class.
    pub auc_skipped_labels: Vec<String>,
    pub hamming_loss: f64,
    pub per_label_f1: BTreeMap<String, f64>,
}

/// Score predictions against truth. Precision/recall/F1 use the 0-on-empty
/// convention and macro-average over the five labels.
pub fn evaluate(
    predictions: &[LabelSet],
    probabilities: &[[f64; 5]],
    truth: &[LabelSet],
) -> Result<MetricsReport, ClassifyError> {
    if predictions.is_empty() {
        return Err(ClassifyError::EmptyInput);
    }
    if predictions.len() != truth.len() || probabilities.len() != truth.len() {
        return Err(ClassifyError::LengthMismatch {
            rows: predictions.len(),
            labels: truth.len(),
        });
    }
    let n = truth.len();

    let exact = predictions
        .iter()
        .zip(truth)
        .filter(|(p, t)| p == t)
        .count() as f64
        / n as f64;

    let mut wrong_cells = 0usize;
    let mut per_label_f1 = BTreeMap::new();
    let mut precision_sum = 0.0;
    let mut recall_sum = 0.0;
    let mut f1_sum = 0.0;
    let mut auc_sum = 0.0;
    let mut auc_count = 0usize;
    let mut auc_skipped = Vec::new();

    for (label_idx, label_name) in LABEL_NAMES.iter().enumerate() {
        let mut tp = 0usize;
        let mut fp = 0usize;
        let mut fn_ = 0usize;
        for (p, t) in predictions.iter().zip(truth) {
            let predicted = p.as_array()[label_idx];
            let actual = t.as_array()[label_idx];
            if predicted != actual {
                wrong_cells += 1;
            }
            match (predicted, actual) {
                (true, true) => tp += 1,
                (true, false) => fp += 1,
                (false, true) => fn_ += 1,
                (false, false) => {}
            }
        }
        let precision = if tp + fp == 0 { 0.0 } else { tp as f64 / (tp + fp) as f64 };
        let recall = if tp + fn_ == 0 { 0.0 } else { tp as f64 / (tp + fn_) as f64 };
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        precision_sum += precision;
        recall_sum += recall;
        f1_sum += f1;
        per_label_f1.insert(label_name.to_string(), f1);

        let scores: Vec<f64> = probabilities.iter().map(|p| p[label_idx]).collect();
        let flags: Vec<bool> = truth.iter().map(|t| t.as_array()[label_idx]).collect();
        match roc_auc(&scores, &flags) {
            Some(auc) => {
                auc_sum += auc;
                auc_count += 1;
            }
            None => auc_skipped.push(label_name.to_string()),
        }
    }

    Ok(MetricsReport {
        exact_match_accuracy: exact,
        macro_precision: precision_sum / LABEL_COUNT as f64,
        macro_recall: recall_sum / LABEL_COUNT as f64,
        macro_f1: f1_sum / LABEL_COUNT as f64,
        macro_roc_auc: (auc_count > 0).then(|| auc_sum / auc_count as f64),
        auc_skipped_labels: auc_skipped,
        hamming_loss: wrong_cells as f64 / (n * LABEL_COUNT) as f64,
        per_label_f1,
    })
}

/// Rank-based ROC-AUC with midrank tie handling; None when the truth has a
/// single class.
pub fn roc_auc(scores: &[f64], truth: &[bool]) -> Option<f64> {
    let n_pos = truth.iter().filter(|&&t| t).count();
    let n_neg = truth.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).expect("finite scores"));

    let mut ranks = vec![0.0; scores.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let midrank = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            ranks[idx] = midrank;
        }
        i = j + 1;
    }
    let rank_sum: f64 = truth
        .iter()
        .zip(&ranks)
        .filter(|(t, _)| **t)
        .map(|(_, r)| r)
        .sum();
    let u = rank_sum - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Some(u / (n_pos * n_neg) as f64)
}

// ---------------------------------------------------------------------------
// Cross-validation driver
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    LogisticRegression,
    Mlp,
}

impl ModelKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ModelKind::LogisticRegression => "lr",
            ModelKind::Mlp => "mlp",
        }
    }
}

#[derive(Debug, Clone)]
pub struct CvConfig {
    pub model: ModelKind,
    pub lr: LrHyperParams,
    pub mlp: MlpHyperParams,
    pub seed: u64,
    pub threshold: f64,
    /// Replace the fixed threshold with a grid search over the pooled
    /// out-of-fold predictions. Off by default.
    pub optimize_threshold: bool,
    pub n_folds: usize,
}

impl Default for CvConfig {
    fn default() -> Self {
        CvConfig {
            model: ModelKind::LogisticRegression,
            lr: LrHyperParams::default(),
            mlp: MlpHyperParams::default(),
            seed: 42,
            threshold: 0.5,
            optimize_threshold: false,
            n_folds: 5,
        }
    }
}

/// Grid-search one global decision threshold (0.05 to 0.95 in 0.05 steps)
/// maximizing pooled macro F1. Ties keep the lower threshold.
pub fn optimize_threshold(
    probabilities: &[[f64; 5]],
    truth: &[LabelSet],
) -> Result<f64, ClassifyError> {
    let mut best_threshold = 0.05;
    let mut best_f1 = f64::NEG_INFINITY;
    for step in 1..=19 {
        let threshold = step as f64 * 0.05;
        let predictions = predict(probabilities, threshold);
        let report = evaluate(&predictions, probabilities, truth)?;
        if report.macro_f1 > best_f1 {
            best_f1 = report.macro_f1;
            best_threshold = threshold;
        }
    }
    Ok(best_threshold)
}

/// Pooled cross-validation outcome: metrics scored once over every record's
/// out-of-fold prediction, plus the per-record probabilities in input order.
#[derive(Debug, Clone, PartialEq)]
pub struct CvOutcome {
    pub metrics: MetricsReport,
    pub probabilities: Vec<[f64; 5]>,
    pub predictions: Vec<LabelSet>,
    pub plan: CvPlan,
    /// The decision threshold the metrics were scored at.
    pub threshold_used: f64,
}

/// Train per fold on the training split (standardization refitted each
/// fold), predict the held-out rows, pool, and score once.
pub fn cross_validate(
    rows: &[Vec<f64>],
    labels: &[LabelSet],
    config: &CvConfig,
) -> Result<CvOutcome, ClassifyError> {
    if rows.len() != labels.len() {
        return Err(ClassifyError::LengthMismatch {
            rows: rows.len(),
            labels: labels.len(),
        });
    }
    let plan = make_cv_plan_with_folds(labels, config.seed, config.n_folds)?;
    let mut probabilities = vec![[0.0; 5]; rows.len()];
    for fold in 0..plan.n_folds {
        let train = plan.train_indices(fold);
        let test = plan.test_indices(fold);
        if test.is_empty() {
            continue;
        }
        let test_rows: Vec<Vec<f64>> = test.iter().map(|&i| rows[i].clone()).collect();
        let fold_probs = match config.model {
            ModelKind::LogisticRegression => {
                train_lr(rows, labels, &train, config.lr)?.predict_proba(&test_rows)?
            }
            ModelKind::Mlp => {
                // The run seed folds into the network seed so one config
                // value controls all randomness.
                let mut hyper = config.mlp;
                hyper.seed = config.mlp.seed.wrapping_add(config.seed);
                train_mlp(rows, labels, &train, hyper)?.predict_proba(&test_rows)?
            }
        };
        for (&i, probs) in test.iter().zip(fold_probs) {
            probabilities[i] = probs;
        }
    }
    let threshold = if config.optimize_threshold {
        optimize_threshold(&probabilities, labels)?
    } else {
        config.threshold
    };
    let predictions = predict(&probabilities, threshold);
    let metrics = evaluate(&predictions, &probabilities, labels)?;
    Ok(CvOutcome {
        metrics,
        probabilities,
        predictions,
        plan,
        threshold_used: threshold,
    })
}

// ---------------------------------------------------------------------------
// Exports
// ---------------------------------------------------------------------------

/// Probability export consumed by the bridge analysis:
/// paper id, group id, five probabilities.
pub fn probability_csv(
    row_ids: &[(String, String)],
    probabilities: &[[f64; 5]],
) -> Result<String, csv::Error> {
    let mut writer = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["paper_id".to_string(), "group_id".to_string()];
    header.extend(LABEL_NAMES.iter().map(|l| format!("prob_{l}")));
    writer.write_record(&header)?;
    for (id, probs) in row_ids.iter().zip(probabilities) {
        let mut record = vec![id.0.clone(), id.1.clone()];
        record.extend(probs.iter().map(|p| format!("{p:.9}")));
        writer.write_record(&record)?;
    }
    finish_csv(writer)
}

/// Metric summary CSV, one row per model evaluated.
pub fn metrics_csv(reports: &[(String, &MetricsReport)]) -> Result<String, csv::Error> {
    let mut writer = csv::Writer::from_writer(Vec::new());
    let mut header = vec![
        "model".to_string(),
        "accuracy".to_string(),
        "precision".to_string(),
        "recall".to_string(),
        "f1".to_string(),
        "roc_auc".to_string(),
        "hamming_loss".to_string(),
    ];
    header.extend(LABEL_NAMES.iter().map(|l| format!("f1_{l}")));
    writer.write_record(&header)?;
    for (model, report) in reports {
        let mut record = vec![
            model.clone(),
            format!("{:.4}", report.exact_match_accuracy),
            format!("{:.4}", report.macro_precision),
            format!("{:.4}", report.macro_recall),
            format!("{:.4}", report.macro_f1),
            report
                .macro_roc_auc
                .map(|a| format!("{a:.4}"))
                .unwrap_or_else(|| "NA".to_string()),
            format!("{:.4}", report.hamming_loss),
        ];
        record.extend(LABEL_NAMES.iter().map(|l| format!("{:.4}", report.per_label_f1[*l])));
        writer.write_record(&record)?;
    }
    finish_csv(writer)
}
