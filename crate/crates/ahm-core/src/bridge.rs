//! Bridge analysis: severity against movement-type probabilities.
//!
//! Papers contributing to both working sets are linked by id, their record
//! probabilities averaged per label, and each probability feature correlated
//! with the severity index across papers: Pearson r, a two-sided Student-t
//! p-value, and a Fisher-z confidence interval. The correlation unit is the
//! paper.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::corpus::finish_csv;
use crate::features::LABEL_NAMES;
use crate::hnsi::PaperHnsi;
use crate::stats::{normal_quantile, student_t_two_sided_p};

/// One linked paper: its severity index, the per-label mean probabilities
/// over its kinematic records, and their composite mean.
#[derive(Debug, Clone, PartialEq)]
pub struct BridgePair {
    pub paper_id: String,
    pub hnsi: f64,
    pub label_means: [f64; 5],
    pub composite: f64,
}

/// Correlation of one probability feature with the severity index.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationResult {
    pub feature: String,
    pub r: f64,
    pub p_value: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub n: usize,
}

impl CorrelationResult {
    /// Significance marker at the conventional levels.
    pub fn significance(&self) -> &'static str {
        if self.p_value < 0.001 {
            "p < 0.001"
        } else if self.p_value < 0.01 {
            "p < 0.01"
        } else if self.p_value < 0.05 {
            "p < 0.05"
        } else {
            "ns"
        }
    }
}

/// Per-feature outcome: a result, or the reason the correlation is undefined.
#[derive(Debug, Clone, PartialEq)]
pub enum FeatureCorrelation {
    Computed(CorrelationResult),
    Undefined { feature: String, reason: String },
}

#[derive(Debug, Error)]
pub enum BridgeError {
    #[error("no papers shared between the probability export and the severity output")]
    EmptyIntersection,
    #[error("need at least {needed} pairs, got {got}")]
    InsufficientPairs { needed: usize, got: usize },
    #[error("series lengths differ: {x} vs {y}")]
    LengthMismatch { x: usize, y: usize },
    #[error("zero variance in `{side}`; correlation undefined")]
    ZeroVariance { side: String },
    #[error("|r| = 1 is degenerate for the Fisher interval")]
    DegenerateCorrelation,
    #[error("probability {0} outside [0,1]")]
    BadProbability(f64),
}

/// Intersect record-level probabilities with per-paper severity. Per-label
/// means are unweighted over each paper's records; the composite is the mean
/// of the five label means. Output is sorted by paper id.
pub fn link_papers(
    record_probabilities: &[(String, [f64; 5])],
    papers: &[PaperHnsi],
) -> Result<Vec<BridgePair>, BridgeError> {
    let mut sums: BTreeMap<&str, ([f64; 5], usize)> = BTreeMap::new();
    for (paper_id, probs) in record_probabilities {
        for &p in probs {
            if !(0.0..=1.0).contains(&p) || !p.is_finite() {
                return Err(BridgeError::BadProbability(p));
            }
        }
        let entry = sums.entry(paper_id.as_str()).or_insert(([0.0; 5], 0));
        for (acc, &p) in entry.0.iter_mut().zip(probs) {
            *acc += p;
        }
        entry.1 += 1;
    }

    let hnsi_by_id: BTreeMap<&str, f64> = papers.iter().map(|p| (p.paper_id.as_str(), p.hnsi)).collect();
    let mut pairs = Vec::new();
    for (paper_id, (sum, count)) in sums {
        let Some(&hnsi) = hnsi_by_id.get(paper_id) else {
            continue;
        };
        let mut label_means = [0.0; 5];
        for (mean, total) in label_means.iter_mut().zip(sum) {
            *mean = total / count as f64;
        }
        let composite = label_means.iter().sum::<f64>() / 5.0;
        pairs.push(BridgePair {
            paper_id: paper_id.to_string(),
            hnsi,
            label_means,
            composite,
        });
    }
    if pairs.is_empty() {
        return Err(BridgeError::EmptyIntersection);
    }
    Ok(pairs)
}

/// Product-moment correlation. Requires n >= 3 and variance on both sides.
pub fn pearson_r(x: &[f64], y: &[f64]) -> Result<f64, BridgeError> {
    if x.len() != y.len() {
        return Err(BridgeError::LengthMismatch { x: x.len(), y: y.len() });
    }
    if x.len() < 3 {
        return Err(BridgeError::InsufficientPairs { needed: 3, got: x.len() });
    }
    let n = x.len() as f64;
    let mean_x = x.iter().sum::<f64>() / n;
    let mean_y = y.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut var_x = 0.0;
    let mut var_y = 0.0;
    for (&xi, &yi) in x.iter().zip(y) {
        let dx = xi - mean_x;
        let dy = yi - mean_y;
        cov += dx * dy;
        var_x += dx * dx;
        var_y += dy * dy;
    }
    if var_x <= 0.0 {
        return Err(BridgeError::ZeroVariance { side: "x".to_string() });
    }
    if var_y <= 0.0 {
        return Err(BridgeError::ZeroVariance { side: "y".to_string() });
    }
    Ok((cov / (var_x * var_y).sqrt()).clamp(-1.0, 1.0))
}

/// Fisher-z confidence interval: tanh(atanh(r) ∓ z_crit/√(n−3)).
pub fn fisher_ci(r: f64, n: usize, level: f64) -> Result<(f64, f64), BridgeError> {
    if r.abs() >= 1.0 {
        return Err(BridgeError::DegenerateCorrelation);
    }
    if n < 4 {
        return Err(BridgeError::InsufficientPairs { needed: 4, got: n });
    }
    let z = r.atanh();
    let z_crit = normal_quantile(1.0 - (1.0 - level) / 2.0);
    let half_width = z_crit / ((n as f64) - 3.0).sqrt();
    Ok(((z - half_width).tanh(), (z + half_width).tanh()))
}

/// Two-sided p-value for r under the null of zero correlation:
/// t = r·√(n−2)/√(1−r²) with n−2 degrees of freedom.
pub fn correlation_p_value(r: f64, n: usize) -> Result<f64, BridgeError> {
    if r.abs() >= 1.0 {
        return Err(BridgeError::DegenerateCorrelation);
    }
    if n < 4 {
        return Err(BridgeError::InsufficientPairs { needed: 4, got: n });
    }
    let df = (n - 2) as f64;
    let t = r * df.sqrt() / (1.0 - r * r).sqrt();
    Ok(student_t_two_sided_p(t, df))
}

/// Feature names in report order: the five label probabilities then the
/// composite mean.
pub fn feature_names() -> Vec<String> {
    let mut names: Vec<String> = LABEL_NAMES.iter().map(|l| format!("{l}_prob")).collect();
    names.push("mean_probability".to_string());
    names
}

/// One correlation row per probability feature, at the 95% level.
pub fn bridge_report(pairs: &[BridgePair]) -> Result<Vec<FeatureCorrelation>, BridgeError> {
    if pairs.len() < 4 {
        return Err(BridgeError::InsufficientPairs { needed: 4, got: pairs.len() });
    }
    let hnsi: Vec<f64> = pairs.iter().map(|p| p.hnsi).collect();
    let mut rows = Vec::new();
    for (idx, feature) in feature_names().into_iter().enumerate() {
        let series: Vec<f64> = pairs
            .iter()
            .map(|p| if idx < 5 { p.label_means[idx] } else { p.composite })
            .collect();
        let outcome = pearson_r(&series, &hnsi).and_then(|r| {
            let p_value = correlation_p_value(r, pairs.len())?;
            let (ci_low, ci_high) = fisher_ci(r, pairs.len(), 0.95)?;
            Ok(CorrelationResult {
                feature: feature.clone(),
                r,
                p_value,
                ci_low,
                ci_high,
                n: pairs.len(),
            })
        });
        rows.push(match outcome {
            Ok(result) => FeatureCorrelation::Computed(result),
            Err(e) => FeatureCorrelation::Undefined {
                feature,
                reason: e.to_string(),
            },
        });
    }
    Ok(rows)
}

/// Report CSV: model, feature, r, p, significance, ci_low, ci_high, n.
pub fn report_csv(model: &str, rows: &[FeatureCorrelation]) -> Result<String, csv::Error> {
    let mut writer = csv::Writer::from_writer(Vec::new());
    writer.write_record(["model", "feature", "r", "p_value", "significant", "ci_low", "ci_high", "n"])?;
    for row in rows {
        match row {
            FeatureCorrelation::Computed(result) => writer.write_record([
                model,
                result.feature.as_str(),
                &format!("{:.3}", result.r),
                &format!("{:.3}", result.p_value),
                result.significance(),
                &format!("{:.2}", result.ci_low),
                &format!("{:.2}", result.ci_high),
                &result.n.to_string(),
            ])?,
            FeatureCorrelation::Undefined { feature, reason } => {
                writer.write_record([model, feature.as_str(), "NA", "NA", reason.as_str(), "NA", "NA", "0"])?
            }
        }
    }
    finish_csv(writer)
}
