//! The Head-Neck Severity Index (HNSI).
//!
//! Heterogeneous clinical rating scales are made comparable by clipping each
//! eligible baseline score to its scale's head-neck range and dividing by the
//! scale maximum. Per paper, observations aggregate in two stages: mean
//! within each scale, then the unweighted mean across scales, yielding one
//! severity value on [0,1] that is banded mild / moderate / severe.

use std::collections::BTreeMap;
use std::path::Path;

use thiserror::Error;

use crate::corpus::{finish_csv, CdCsRow};
use crate::schema::Reported;

/// Severity bands over the HNSI interval. Half-open: mild `< 0.33`,
/// moderate `[0.33, 0.66)`, severe `>= 0.66`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Band {
    Mild,
    Moderate,
    Severe,
}

impl Band {
    pub const MODERATE_THRESHOLD: f64 = 0.33;
    pub const SEVERE_THRESHOLD: f64 = 0.66;
    pub const ALL: [Band; 3] = [Band::Mild, Band::Moderate, Band::Severe];

    pub fn from_hnsi(value: f64) -> Band {
        if value >= Band::SEVERE_THRESHOLD {
            Band::Severe
        } else if value >= Band::MODERATE_THRESHOLD {
            Band::Moderate
        } else {
            Band::Mild
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Band::Mild => "mild",
            Band::Moderate => "moderate",
            Band::Severe => "severe",
        }
    }

    pub fn threshold_text(&self) -> &'static str {
        match self {
            Band::Mild => "HNSI < 0.33",
            Band::Moderate => "0.33 <= HNSI < 0.66",
            Band::Severe => "HNSI >= 0.66",
        }
    }
}

/// One registered rating scale: its head-neck maximum and the subscale
/// keywords that make a record eligible (empty = no restriction).
#[derive(Debug, Clone, PartialEq)]
pub struct ScaleSpec {
    pub scale_name: String,
    pub hn_max: f64,
    pub subscale_keywords: Vec<String>,
    pub scope: String,
}

impl ScaleSpec {
    pub fn new(name: &str, hn_max: f64, keywords: &[&str], scope: &str) -> ScaleSpec {
        ScaleSpec {
            scale_name: name.to_string(),
            hn_max,
            subscale_keywords: keywords.iter().map(|k| k.to_lowercase()).collect(),
            scope: scope.to_string(),
        }
    }

    pub fn matches_name(&self, name: &str) -> bool {
        name.trim().to_lowercase() == self.scale_name.to_lowercase()
    }
}

/// Ordered registry of the scales eligible for the index.
#[derive(Debug, Clone, PartialEq)]
pub struct ScaleRegistry {
    pub scales: Vec<ScaleSpec>,
}

impl Default for ScaleRegistry {
    /// The four registered instruments with their head-neck maxima.
    fn default() -> ScaleRegistry {
        ScaleRegistry {
            scales: vec![
                ScaleSpec::new(
                    "TWSTRS",
                    35.0,
                    &[
                        "severity scale",
                        "tss",
                        "severity of torticollis",
                        "overall severity",
                        "torticollis score",
                        "laterocollis score",
                        "retrocollis score",
                        "shoulder displacement",
                    ],
                    "CD specific",
                ),
                ScaleSpec::new("Tsui", 20.0, &[], "CD specific"),
                ScaleSpec::new("TRS", 8.0, &["head", "face", "neck", "cranial"], "tremor"),
                ScaleSpec::new(
                    "GDRS",
                    10.0,
                    &["head", "face", "neck", "cranial"],
                    "generalized dystonia",
                ),
            ],
        }
    }
}

impl ScaleRegistry {
    pub fn find(&self, scale_name: &str) -> Option<&ScaleSpec> {
        self.scales.iter().find(|s| s.matches_name(scale_name))
    }

    /// Load `(scale, hn_max, keywords)` rows from CSV, keywords pipe-separated.
    pub fn from_csv_path(path: &Path) -> Result<ScaleRegistry, HnsiError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| HnsiError::RegistryFile(format!("{}: {e}", path.display())))?;
        Self::from_csv_text(&text)
    }

    pub fn from_csv_text(text: &str) -> Result<ScaleRegistry, HnsiError> {
        let mut scales = Vec::new();
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(false)
            .flexible(true)
            .from_reader(text.as_bytes());
        for (i, row) in reader.records().enumerate() {
            let row = row.map_err(|e| HnsiError::RegistryFile(e.to_string()))?;
            if row.len() < 2 {
                return Err(HnsiError::RegistryFile(format!(
                    "row {}: expected scale,hn_max,keywords",
                    i + 1
                )));
            }
            let hn_max = match row[1].trim().parse::<f64>() {
                Ok(v) if v > 0.0 => v,
                Ok(v) => return Err(HnsiError::RegistryFile(format!("row {}: hn_max {v} must be positive", i + 1))),
                Err(_) if i == 0 => continue, // header row
                Err(_) => {
                    return Err(HnsiError::RegistryFile(format!(
                        "row {}: bad hn_max `{}`",
                        i + 1,
                        &row[1]
                    )))
                }
            };
            let keywords: Vec<&str> = row
                .get(2)
                .map(|k| k.split('|').map(str::trim).filter(|k| !k.is_empty()).collect())
                .unwrap_or_default();
            let scope = row.get(3).unwrap_or("").to_string();
            scales.push(ScaleSpec::new(row[0].trim(), hn_max, &keywords, &scope));
        }
        Ok(ScaleRegistry { scales })
    }
}

/// One eligible baseline score with its normalized value.
#[derive(Debug, Clone, PartialEq)]
pub struct ScaleObservation {
    pub paper_id: String,
    pub scale_name: String,
    pub raw_score: f64,
    pub normalized: f64,
}

/// Per-paper severity: scale-level means, their count, the index, the band.
#[derive(Debug, Clone, PartialEq)]
pub struct PaperHnsi {
    pub paper_id: String,
    /// scale name -> mean normalized score for this paper under that scale
    pub scale_means: BTreeMap<String, f64>,
    /// scale name -> number of observations behind the mean
    pub scale_counts: BTreeMap<String, usize>,
    pub k_scales: usize,
    pub hnsi: f64,
    pub band: Band,
}

/// Cohort-level band counts, shares, and mean index values.
#[derive(Debug, Clone, PartialEq)]
pub struct BandDistribution {
    pub total: usize,
    pub counts: BTreeMap<Band, usize>,
    pub percentages: BTreeMap<Band, f64>,
    pub mean_hnsi: BTreeMap<Band, Option<f64>>,
}

impl BandDistribution {
    pub fn from_values(values: &[f64]) -> BandDistribution {
        let mut counts: BTreeMap<Band, usize> = Band::ALL.into_iter().map(|b| (b, 0)).collect();
        let mut sums: BTreeMap<Band, f64> = Band::ALL.into_iter().map(|b| (b, 0.0)).collect();
        for &v in values {
            let band = Band::from_hnsi(v);
            *counts.get_mut(&band).unwrap() += 1;
            *sums.get_mut(&band).unwrap() += v;
        }
        let total = values.len();
        let percentages = counts
            .iter()
            .map(|(b, c)| {
                let pct = if total == 0 {
                    0.0
                } else {
                    100.0 * *c as f64 / total as f64
                };
                (*b, pct)
            })
            .collect();
        let mean_hnsi = counts
            .iter()
            .map(|(b, c)| {
                let mean = if *c == 0 { None } else { Some(sums[b] / *c as f64) };
                (*b, mean)
            })
            .collect();
        BandDistribution {
            total,
            counts,
            percentages,
            mean_hnsi,
        }
    }
}

/// Side-by-side band shares for an external cohort against the literature
/// index, plus the severe-band gap and the raw-score severe threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct BandComparison {
    pub external: BandDistribution,
    pub literature: BandDistribution,
    /// Absolute difference in severe-band percentage points.
    pub severe_gap: f64,
    /// The severe threshold expressed in raw TWSTRS units (0.66 x 35).
    pub severe_threshold_twstrs_raw: f64,
}

#[derive(Debug, Error)]
pub enum HnsiError {
    #[error("no eligible observations")]
    NoObservations,
    #[error("non-finite score {0}")]
    NonFiniteScore(f64),
    #[error("observation for paper `{found}` supplied while aggregating `{expected}`")]
    MixedPapers { expected: String, found: String },
    #[error("external score {0} outside [0,1]; normalize before comparing")]
    ExternalScoreOutOfRange(f64),
    #[error("scale registry file: {0}")]
    RegistryFile(String),
}

/// Eligibility of one clinical-scale row against a registered scale: the
/// names must match, the baseline must be present, and any keyword list must
/// hit the subscale text (case-insensitive substring).
pub fn eligible(row: &CdCsRow, spec: &ScaleSpec) -> bool {
    let Some(name) = row.scale.scale_name.known() else {
        return false;
    };
    if !spec.matches_name(name) {
        return false;
    }
    if !row.scale.baseline_value.is_known() {
        return false;
    }
    if spec.subscale_keywords.is_empty() {
        return true;
    }
    match row.scale.subscale.known() {
        None => false,
        Some(subscale) => {
            let folded = subscale.to_lowercase();
            spec.subscale_keywords.iter().any(|k| folded.contains(k))
        }
    }
}

/// Clip to `[0, hn_max]` and divide by `hn_max`.
pub fn normalize_score(score: f64, spec: &ScaleSpec) -> Result<f64, HnsiError> {
    if !score.is_finite() {
        return Err(HnsiError::NonFiniteScore(score));
    }
    Ok(score.clamp(0.0, spec.hn_max) / spec.hn_max)
}

/// Outcome of scanning the CD-CS rows for eligible observations.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ObservationScan {
    pub observations: Vec<ScaleObservation>,
    /// Rows naming a scale outside the registry.
    pub unregistered_rows: usize,
    /// Registered-scale rows failing the subscale or baseline criteria.
    pub ineligible_rows: usize,
}

/// Apply eligibility and normalization to every clinical-scale row.
pub fn collect_observations(
    rows: &[CdCsRow],
    registry: &ScaleRegistry,
) -> Result<ObservationScan, HnsiError> {
    let mut scan = ObservationScan::default();
    for row in rows {
        let Some(name) = row.scale.scale_name.known() else {
            scan.ineligible_rows += 1;
            continue;
        };
        let Some(spec) = registry.find(name) else {
            scan.unregistered_rows += 1;
            continue;
        };
        if !eligible(row, spec) {
            scan.ineligible_rows += 1;
            continue;
        }
        let raw = match row.scale.baseline_value {
            Reported::Known(v) => v,
            Reported::NotReported => unreachable!("eligible requires a baseline"),
        };
        scan.observations.push(ScaleObservation {
            paper_id: row.paper_id.clone(),
            scale_name: spec.scale_name.clone(),
            raw_score: raw,
            normalized: normalize_score(raw, spec)?,
        });
    }
    Ok(scan)
}

/// Two-stage aggregation for one paper: mean per scale, then the unweighted
/// mean over the scales present.
pub fn paper_hnsi(paper_id: &str, observations: &[ScaleObservation]) -> Result<PaperHnsi, HnsiError> {
    if observations.is_empty() {
        return Err(HnsiError::NoObservations);
    }
    let mut sums: BTreeMap<String, (f64, usize)> = BTreeMap::new();
    for obs in observations {
        if obs.paper_id != paper_id {
            return Err(HnsiError::MixedPapers {
                expected: paper_id.to_string(),
                found: obs.paper_id.clone(),
            });
        }
        let entry = sums.entry(obs.scale_name.clone()).or_insert((0.0, 0));
        entry.0 += obs.normalized;
        entry.1 += 1;
    }
    let scale_means: BTreeMap<String, f64> = sums
        .iter()
        .map(|(name, (sum, count))| (name.clone(), sum / *count as f64))
        .collect();
    let scale_counts: BTreeMap<String, usize> =
        sums.iter().map(|(name, (_, count))| (name.clone(), *count)).collect();
    let k = scale_means.len();
    let hnsi = scale_means.values().sum::<f64>() / k as f64;
    Ok(PaperHnsi {
        paper_id: paper_id.to_string(),
        scale_means,
        scale_counts,
        k_scales: k,
        hnsi,
        band: Band::from_hnsi(hnsi),
    })
}

/// Aggregate a whole cohort, one [`PaperHnsi`] per paper, sorted by paper id.
pub fn cohort_hnsi(observations: &[ScaleObservation]) -> Result<Vec<PaperHnsi>, HnsiError> {
    if observations.is_empty() {
        return Err(HnsiError::NoObservations);
    }
    let mut by_paper: BTreeMap<&str, Vec<ScaleObservation>> = BTreeMap::new();
    for obs in observations {
        by_paper.entry(obs.paper_id.as_str()).or_default().push(obs.clone());
    }
    by_paper
        .into_iter()
        .map(|(paper_id, obs)| paper_hnsi(paper_id, &obs))
        .collect()
}

/// Band counts, shares, and per-band means over a cohort of papers.
pub fn cohort_band_distribution(papers: &[PaperHnsi]) -> Result<BandDistribution, HnsiError> {
    if papers.is_empty() {
        return Err(HnsiError::NoObservations);
    }
    let values: Vec<f64> = papers.iter().map(|p| p.hnsi).collect();
    Ok(BandDistribution::from_values(&values))
}

/// Band an external cohort of already-normalized severity scores with the
/// identical thresholds and set it against the literature distribution.
pub fn compare_band_distributions(
    literature: &BandDistribution,
    external_scores: &[f64],
) -> Result<BandComparison, HnsiError> {
    for &score in external_scores {
        if !score.is_finite() || !(0.0..=1.0).contains(&score) {
            return Err(HnsiError::ExternalScoreOutOfRange(score));
        }
    }
    let external = BandDistribution::from_values(external_scores);
    let severe_gap =
        (external.percentages[&Band::Severe] - literature.percentages[&Band::Severe]).abs();
    Ok(BandComparison {
        external,
        literature: literature.clone(),
        severe_gap,
        severe_threshold_twstrs_raw: Band::SEVERE_THRESHOLD * 35.0,
    })
}

// ---------------------------------------------------------------------------
// CSV exports
// ---------------------------------------------------------------------------

/// Per-paper index CSV: paper id, one mean column per registered scale,
/// scale count, index, band.
pub fn papers_csv(papers: &[PaperHnsi], registry: &ScaleRegistry) -> Result<String, csv::Error> {
    let mut writer = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["paper_id".to_string()];
    for spec in &registry.scales {
        header.push(format!("{}_mean", spec.scale_name.to_lowercase()));
    }
    header.extend(["k_scales".to_string(), "hnsi".to_string(), "band".to_string()]);
    writer.write_record(&header)?;
    for paper in papers {
        let mut row = vec![paper.paper_id.clone()];
        for spec in &registry.scales {
            row.push(
                paper
                    .scale_means
                    .get(&spec.scale_name)
                    .map(|m| format!("{m:.6}"))
                    .unwrap_or_default(),
            );
        }
        row.push(paper.k_scales.to_string());
        row.push(format!("{:.6}", paper.hnsi));
        row.push(paper.band.as_str().to_string());
        writer.write_record(&row)?;
    }
    finish_csv(writer)
}

/// Band-distribution summary CSV.
pub fn band_distribution_csv(distribution: &BandDistribution) -> Result<String, csv::Error> {
    let mut writer = csv::Writer::from_writer(Vec::new());
    writer.write_record(["band", "threshold", "papers", "percentage", "mean_hnsi"])?;
    for band in Band::ALL {
        writer.write_record([
            band.as_str(),
            band.threshold_text(),
            &distribution.counts[&band].to_string(),
            &format!("{:.1}", distribution.percentages[&band]),
            &distribution.mean_hnsi[&band]
                .map(|m| format!("{m:.3}"))
                .unwrap_or_else(|| "NA".to_string()),
        ])?;
    }
    finish_csv(writer)
}

/// Side-by-side comparison CSV: band, threshold, external %, literature %.
pub fn comparison_csv(comparison: &BandComparison) -> Result<String, csv::Error> {
    let mut writer = csv::Writer::from_writer(Vec::new());
    writer.write_record(["band", "threshold", "external_pct", "literature_pct"])?;
    for band in Band::ALL {
        writer.write_record([
            band.as_str(),
            band.threshold_text(),
            &format!("{:.1}", comparison.external.percentages[&band]),
            &format!("{:.1}", comparison.literature.percentages[&band]),
        ])?;
    }
    writer.write_record([
        "severe_gap_pct_points",
        "",
        &format!("{:.1}", comparison.severe_gap),
        "",
    ])?;
    writer.write_record([
        "severe_threshold_twstrs_raw",
        "",
        &format!("{:.1}", comparison.severe_threshold_twstrs_raw),
        "",
    ])?;
    finish_csv(writer)
}
