//! Analysis commands: agreement, hnsi, classify, bridge, validate.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context, Result};

use ahm_core::agreement::{field_agreement_report, report_csv, ReportOptions, SimilarityMatrix};
use ahm_core::bridge::{bridge_report, link_papers, report_csv as bridge_csv};
use ahm_core::classify::{
    cross_validate, metrics_csv, probability_csv, CvConfig, LrHyperParams, MlpHyperParams,
    ModelKind,
};
use ahm_core::corpus::{
    cd_cs_csv, cd_q_csv, corpus_from_records, filter_condition, load_corpus, partition_cd,
    CdPartition, Corpus, Manifest,
};
use ahm_core::features::build_feature_matrix;
use ahm_core::hnsi::{
    band_distribution_csv, cohort_band_distribution, cohort_hnsi, collect_observations,
    compare_band_distributions, comparison_csv, papers_csv, Band, PaperHnsi, ScaleRegistry,
};
use ahm_core::schema::parse_corpus_text;

use crate::runctx::RunManifest;
use crate::CliError;

pub const DEFAULT_CONDITION: &str = "cervical dystonia";

/// Published-corpus row counts, verified when --with-published-data is set.
mod published {
    pub const CD_PAPERS: usize = 202;
    pub const CD_Q_ROWS: usize = 113;
    pub const CD_Q_PAPERS: usize = 45;
    pub const CD_CS_ROWS: usize = 809;
    pub const CD_CS_PAPERS: usize = 137;
    pub const HNSI_PAPERS: usize = 66;
    pub const BRIDGE_PAPERS: usize = 24;
}

fn check_count(label: &str, got: usize, expected: usize) -> Result<(), CliError> {
    if got != expected {
        return Err(CliError::data(anyhow!(
            "published-data check failed: {label} is {got}, expected {expected}"
        )));
    }
    Ok(())
}

fn verify_published_partition(corpus: &Corpus, partition: &CdPartition) -> Result<(), CliError> {
    use std::collections::BTreeSet;
    check_count("CD papers", corpus.len(), published::CD_PAPERS)?;
    check_count("CD-Q rows", partition.cd_q.len(), published::CD_Q_ROWS)?;
    let cd_q_papers: BTreeSet<&str> = partition.cd_q.iter().map(|r| r.paper_id.as_str()).collect();
    check_count("CD-Q papers", cd_q_papers.len(), published::CD_Q_PAPERS)?;
    check_count("CD-CS rows", partition.cd_cs.len(), published::CD_CS_ROWS)?;
    let cd_cs_papers: BTreeSet<&str> = partition.cd_cs.iter().map(|r| r.paper_id.as_str()).collect();
    check_count("CD-CS papers", cd_cs_papers.len(), published::CD_CS_PAPERS)
}

// ---------------------------------------------------------------------------
// Shared dataset loading
// ---------------------------------------------------------------------------

fn load_filtered(dataset: &Path, condition: &str) -> Result<(Corpus, CdPartition), CliError> {
    let manifest = Manifest::load(dataset)
        .map_err(|e| CliError::config(anyhow!("dataset manifest: {e}")))?;
    let corpus = load_corpus(&manifest).map_err(|e| CliError::data(anyhow!("{e}")))?;
    let filtered = filter_condition(&corpus, condition);
    if filtered.is_empty() {
        return Err(CliError::data(anyhow!(
            "no records match condition `{condition}` in {}",
            dataset.display()
        )));
    }
    let partition = partition_cd(&filtered);
    Ok((filtered, partition))
}

fn require_input(path: &Path, producer: &str) -> Result<String, CliError> {
    if !path.exists() {
        return Err(CliError::prerequisite(anyhow!(
            "{} not found; run `ahm {producer}` first",
            path.display()
        )));
    }
    fs::read_to_string(path)
        .with_context(|| format!("cannot read {}", path.display()))
        .map_err(CliError::data)
}

// ---------------------------------------------------------------------------
// agreement
// ---------------------------------------------------------------------------

pub struct AgreementArgs {
    pub corpus_a: PathBuf,
    pub corpus_b: PathBuf,
    pub matrix: Option<PathBuf>,
    pub threshold: f64,
    pub out: PathBuf,
}

pub fn agreement(args: AgreementArgs) -> Result<(), CliError> {
    let load = |path: &Path| -> Result<Corpus, CliError> {
        let text = fs::read_to_string(path)
            .with_context(|| format!("cannot read {}", path.display()))
            .map_err(CliError::data)?;
        let records = parse_corpus_text(&text).map_err(|e| CliError::data(anyhow!("{e}")))?;
        corpus_from_records(records).map_err(|e| CliError::data(anyhow!("{e}")))
    };
    let corpus_a = load(&args.corpus_a)?;
    let corpus_b = load(&args.corpus_b)?;

    let matrix = match &args.matrix {
        Some(path) => {
            SimilarityMatrix::from_csv_path(path).map_err(|e| CliError::config(anyhow!("{e}")))?
        }
        None => SimilarityMatrix::shipped_default(),
    };
    let options = ReportOptions {
        matrix,
        similarity_threshold: args.threshold,
    };
    let report = field_agreement_report(&corpus_a, &corpus_b, &options)
        .map_err(|e| CliError::data(anyhow!("{e}")))?;

    let mut manifest = RunManifest::new("agreement");
    manifest.param("similarity_threshold", args.threshold);
    manifest.input(&args.corpus_a).map_err(CliError::data)?;
    manifest.input(&args.corpus_b).map_err(CliError::data)?;
    if let Some(path) = &args.matrix {
        manifest.input(path).map_err(CliError::data)?;
    }
    manifest.param("unmatched_groups", report.unmatched_groups);
    manifest.param("excluded_nr_pairs", report.excluded_pairs);
    let csv = report_csv(&report).map_err(|e| CliError::data(anyhow!("{e}")))?;
    manifest
        .write_output(&args.out, "agreement.csv", &csv)
        .map_err(CliError::data)?;
    manifest.finish(&args.out).map_err(CliError::data)?;
    println!("agreement: {} field entries -> {}", report.entries.len(), args.out.display());
    Ok(())
}

// ---------------------------------------------------------------------------
// hnsi
// ---------------------------------------------------------------------------

pub struct HnsiArgs {
    pub dataset: PathBuf,
    pub condition: String,
    pub registry: Option<PathBuf>,
    pub published_checks: bool,
    pub out: PathBuf,
}

fn load_registry(path: &Option<PathBuf>) -> Result<ScaleRegistry, CliError> {
    match path {
        Some(p) => ScaleRegistry::from_csv_path(p).map_err(|e| CliError::config(anyhow!("{e}"))),
        None => Ok(ScaleRegistry::default()),
    }
}

fn compute_hnsi(
    dataset: &Path,
    condition: &str,
    registry: &ScaleRegistry,
    published_checks: bool,
) -> Result<(CdPartition, Vec<PaperHnsi>, usize, usize), CliError> {
    let (corpus, partition) = load_filtered(dataset, condition)?;
    if published_checks {
        verify_published_partition(&corpus, &partition)?;
    }
    let scan = collect_observations(&partition.cd_cs, registry)
        .map_err(|e| CliError::data(anyhow!("{e}")))?;
    let papers = cohort_hnsi(&scan.observations).map_err(|e| CliError::data(anyhow!("{e}")))?;
    Ok((partition, papers, scan.unregistered_rows, scan.ineligible_rows))
}

pub fn hnsi(args: HnsiArgs) -> Result<(), CliError> {
    let registry = load_registry(&args.registry)?;
    let (partition, papers, unregistered, ineligible) =
        compute_hnsi(&args.dataset, &args.condition, &registry, args.published_checks)?;
    if args.published_checks {
        check_count("HNSI papers", papers.len(), published::HNSI_PAPERS)?;
    }
    let distribution =
        cohort_band_distribution(&papers).map_err(|e| CliError::data(anyhow!("{e}")))?;

    let mut manifest = RunManifest::new("hnsi");
    manifest.param("condition", &args.condition);
    manifest.input(&args.dataset).map_err(CliError::data)?;
    if let Some(path) = &args.registry {
        manifest.input(path).map_err(CliError::data)?;
    }
    manifest.param("cd_cs_rows", partition.cd_cs.len());
    manifest.param("unregistered_scale_rows", unregistered);
    manifest.param("ineligible_scale_rows", ineligible);
    // Score ranges that did not parse as lo-hi stay opaque; surface them.
    let opaque_ranges = partition
        .cd_cs
        .iter()
        .filter(|row| {
            row.scale
                .score_range
                .known()
                .is_some_and(|r| r.bounds.is_none())
        })
        .count();
    manifest.param("opaque_score_ranges", opaque_ranges);
    manifest.param("papers", papers.len());

    let paper_csv = papers_csv(&papers, &registry).map_err(|e| CliError::data(anyhow!("{e}")))?;
    manifest
        .write_output(&args.out, "hnsi_papers.csv", &paper_csv)
        .map_err(CliError::data)?;
    let band_csv =
        band_distribution_csv(&distribution).map_err(|e| CliError::data(anyhow!("{e}")))?;
    manifest
        .write_output(&args.out, "hnsi_bands.csv", &band_csv)
        .map_err(CliError::data)?;
    manifest.finish(&args.out).map_err(CliError::data)?;
    println!(
        "hnsi: {} papers, bands {}/{}/{} -> {}",
        papers.len(),
        distribution.counts[&Band::Mild],
        distribution.counts[&Band::Moderate],
        distribution.counts[&Band::Severe],
        args.out.display()
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// classify
// ---------------------------------------------------------------------------

pub struct ClassifyArgs {
    pub dataset: PathBuf,
    pub condition: String,
    pub seed: u64,
    pub threshold: f64,
    pub optimize_threshold: bool,
    pub published_checks: bool,
    pub out: PathBuf,
}

pub fn classify(args: ClassifyArgs) -> Result<(), CliError> {
    let (corpus, partition) = load_filtered(&args.dataset, &args.condition)?;
    if args.published_checks {
        verify_published_partition(&corpus, &partition)?;
    }
    if partition.cd_q.is_empty() {
        return Err(CliError::data(anyhow!("no kinematic rows after filtering")));
    }
    let (matrix, labels, warnings) =
        build_feature_matrix(&partition.cd_q).map_err(|e| CliError::data(anyhow!("{e}")))?;
    for warning in &warnings {
        eprintln!("warning: {warning:?}");
    }

    let mut manifest = RunManifest::new("classify");
    manifest.param("condition", &args.condition);
    manifest.param("seed", args.seed);
    manifest.param("prediction_threshold", args.threshold);
    manifest.param("lr_hyper", format!("{:?}", LrHyperParams::default()));
    manifest.param("mlp_hyper", format!("{:?}", MlpHyperParams::default()));
    manifest.input(&args.dataset).map_err(CliError::data)?;
    manifest.param("cd_q_rows", matrix.rows.len());
    manifest.param("feature_columns", matrix.columns.join("|"));

    let cd_q = cd_q_csv(&partition.cd_q).map_err(|e| CliError::data(anyhow!("{e}")))?;
    manifest
        .write_output(&args.out, "cd_q.csv", &cd_q)
        .map_err(CliError::data)?;
    let cd_cs = cd_cs_csv(&partition.cd_cs).map_err(|e| CliError::data(anyhow!("{e}")))?;
    manifest
        .write_output(&args.out, "cd_cs.csv", &cd_cs)
        .map_err(CliError::data)?;
    let features = matrix.csv().map_err(|e| CliError::data(anyhow!("{e}")))?;
    manifest
        .write_output(&args.out, "features.csv", &features)
        .map_err(CliError::data)?;

    let mut reports = Vec::new();
    for kind in [ModelKind::LogisticRegression, ModelKind::Mlp] {
        let config = CvConfig {
            model: kind,
            seed: args.seed,
            threshold: args.threshold,
            optimize_threshold: args.optimize_threshold,
            ..CvConfig::default()
        };
        let outcome =
            cross_validate(&matrix.rows, &labels, &config).map_err(|e| CliError::data(anyhow!("{e}")))?;
        manifest.param(&format!("fold_digest_{}", kind.as_str()), outcome.plan.digest());
        manifest.param(
            &format!("threshold_used_{}", kind.as_str()),
            format!("{:.2}", outcome.threshold_used),
        );
        manifest.param(
            &format!("macro_f1_{}", kind.as_str()),
            format!("{:.4}", outcome.metrics.macro_f1),
        );
        let probs = probability_csv(&matrix.row_ids, &outcome.probabilities)
            .map_err(|e| CliError::data(anyhow!("{e}")))?;
        manifest
            .write_output(&args.out, &format!("probabilities_{}.csv", kind.as_str()), &probs)
            .map_err(CliError::data)?;
        reports.push((kind.as_str().to_string(), outcome.metrics));
    }
    let metric_rows: Vec<(String, &ahm_core::classify::MetricsReport)> =
        reports.iter().map(|(name, report)| (name.clone(), report)).collect();
    let metrics = metrics_csv(&metric_rows).map_err(|e| CliError::data(anyhow!("{e}")))?;
    manifest
        .write_output(&args.out, "metrics.csv", &metrics)
        .map_err(CliError::data)?;
    manifest.finish(&args.out).map_err(CliError::data)?;

    for (name, report) in &reports {
        println!(
            "classify[{name}]: accuracy {:.4}, macro F1 {:.4}, hamming {:.4}",
            report.exact_match_accuracy, report.macro_f1, report.hamming_loss
        );
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// bridge
// ---------------------------------------------------------------------------

pub struct BridgeArgs {
    pub probabilities: PathBuf,
    pub hnsi: PathBuf,
    pub model_name: String,
    pub published_checks: bool,
    pub out: PathBuf,
}

fn parse_probability_csv(text: &str) -> Result<Vec<(String, [f64; 5])>> {
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let headers = reader.headers()?.clone();
    let paper_idx = headers
        .iter()
        .position(|h| h == "paper_id")
        .ok_or_else(|| anyhow!("probability CSV lacks a paper_id column"))?;
    let prob_indices: Vec<usize> = headers
        .iter()
        .enumerate()
        .filter(|(_, h)| h.starts_with("prob_"))
        .map(|(i, _)| i)
        .collect();
    if prob_indices.len() != 5 {
        return Err(anyhow!(
            "probability CSV needs 5 prob_* columns, found {}",
            prob_indices.len()
        ));
    }
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record?;
        let mut probs = [0.0; 5];
        for (slot, &column) in probs.iter_mut().zip(&prob_indices) {
            *slot = record[column].trim().parse::<f64>()?;
        }
        rows.push((record[paper_idx].to_string(), probs));
    }
    Ok(rows)
}

fn parse_hnsi_csv(text: &str) -> Result<Vec<PaperHnsi>> {
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let headers = reader.headers()?.clone();
    let paper_idx = headers
        .iter()
        .position(|h| h == "paper_id")
        .ok_or_else(|| anyhow!("hnsi CSV lacks a paper_id column"))?;
    let hnsi_idx = headers
        .iter()
        .position(|h| h == "hnsi")
        .ok_or_else(|| anyhow!("hnsi CSV lacks an hnsi column"))?;
    let mut papers = Vec::new();
    for record in reader.records() {
        let record = record?;
        let hnsi: f64 = record[hnsi_idx].trim().parse()?;
        papers.push(PaperHnsi {
            paper_id: record[paper_idx].to_string(),
            scale_means: BTreeMap::new(),
            scale_counts: BTreeMap::new(),
            k_scales: 0,
            hnsi,
            band: Band::from_hnsi(hnsi),
        });
    }
    Ok(papers)
}

pub fn bridge(args: BridgeArgs) -> Result<(), CliError> {
    let prob_text = require_input(&args.probabilities, "classify")?;
    let hnsi_text = require_input(&args.hnsi, "hnsi")?;
    let probabilities = parse_probability_csv(&prob_text).map_err(CliError::data)?;
    let papers = parse_hnsi_csv(&hnsi_text).map_err(CliError::data)?;

    let pairs = link_papers(&probabilities, &papers).map_err(|e| CliError::data(anyhow!("{e}")))?;
    if args.published_checks {
        check_count("bridge papers", pairs.len(), published::BRIDGE_PAPERS)?;
    }
    let report = bridge_report(&pairs).map_err(|e| CliError::data(anyhow!("{e}")))?;

    let mut manifest = RunManifest::new("bridge");
    manifest.param("model", &args.model_name);
    manifest.input(&args.probabilities).map_err(CliError::data)?;
    manifest.input(&args.hnsi).map_err(CliError::data)?;
    manifest.param("linked_papers", pairs.len());
    let csv = bridge_csv(&args.model_name, &report).map_err(|e| CliError::data(anyhow!("{e}")))?;
    let name = format!("bridge_{}.csv", args.model_name);
    manifest
        .write_output(&args.out, &name, &csv)
        .map_err(CliError::data)?;
    manifest.finish(&args.out).map_err(CliError::data)?;
    println!("bridge: {} linked papers -> {}", pairs.len(), args.out.join(name).display());
    Ok(())
}

// ---------------------------------------------------------------------------
// validate
// ---------------------------------------------------------------------------

pub struct ValidateArgs {
    pub dataset: PathBuf,
    pub condition: String,
    pub registry: Option<PathBuf>,
    pub external: PathBuf,
    pub raw_twstrs: bool,
    pub published_checks: bool,
    pub out: PathBuf,
}

fn parse_external_scores(text: &str, raw_twstrs: bool) -> Result<Vec<f64>> {
    let mut scores = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let value: f64 = line
            .parse()
            .with_context(|| format!("external cohort line {}: `{line}`", lineno + 1))?;
        scores.push(if raw_twstrs { value / 35.0 } else { value });
    }
    if scores.is_empty() {
        return Err(anyhow!("external cohort file holds no scores"));
    }
    Ok(scores)
}

pub fn validate(args: ValidateArgs) -> Result<(), CliError> {
    let registry = load_registry(&args.registry)?;
    let (_, papers, _, _) =
        compute_hnsi(&args.dataset, &args.condition, &registry, args.published_checks)?;
    let literature =
        cohort_band_distribution(&papers).map_err(|e| CliError::data(anyhow!("{e}")))?;

    let external_text = require_input(&args.external, "validate --external")?;
    let scores =
        parse_external_scores(&external_text, args.raw_twstrs).map_err(CliError::data)?;
    let comparison = compare_band_distributions(&literature, &scores)
        .map_err(|e| CliError::data(anyhow!("{e}")))?;

    let mut manifest = RunManifest::new("validate");
    manifest.param("condition", &args.condition);
    manifest.param("raw_twstrs", args.raw_twstrs);
    manifest.input(&args.dataset).map_err(CliError::data)?;
    manifest.input(&args.external).map_err(CliError::data)?;
    manifest.param("external_n", scores.len());
    manifest.param("literature_n", literature.total);
    let csv = comparison_csv(&comparison).map_err(|e| CliError::data(anyhow!("{e}")))?;
    manifest
        .write_output(&args.out, "band_comparison.csv", &csv)
        .map_err(CliError::data)?;
    manifest.finish(&args.out).map_err(CliError::data)?;
    println!(
        "validate: severe {}% external vs {}% literature (gap {:.1}pp) -> {}",
        comparison.external.percentages[&Band::Severe].round(),
        comparison.literature.percentages[&Band::Severe].round(),
        comparison.severe_gap,
        args.out.display()
    );
    Ok(())
}
