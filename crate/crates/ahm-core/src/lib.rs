//! Core library for building and analyzing a literature-derived dataset of
//! abnormal head movements (AHM) in neurological conditions.
//!
//! The crate covers the full computational stack:
//!
//! - [`schema`] — the hierarchical extraction record, its JSON format, the
//!   `"NR"` not-reported convention, and invariant validation.
//! - [`corpus`] — loading the three-folder dataset layout, condition
//!   filtering, kinematic quality filtering, and the CD-Q / CD-CS partition.
//! - [`orchestrator`] — dual-backend extraction with symmetric
//!   cross-evaluation, weighted scoring, bounded iterative refinement, and
//!   winner selection.
//! - [`agreement`] — inter-extractor reliability: Cohen's kappa, ICC(2,1),
//!   Jaccard overlap, and semantic-similarity-adjusted agreement.
//! - [`hnsi`] — the Head-Neck Severity Index: scale registry, eligibility,
//!   clip-and-normalize, per-paper aggregation, severity banding, and
//!   external-cohort comparison.
//! - [`features`] — kinematic feature engineering: label standardization,
//!   unit normalization, plausibility cleaning, median imputation, encodings.
//! - [`classify`] — multi-label movement-type classifiers (logistic
//!   regression and a shallow MLP) under stratified label-set
//!   cross-validation with the full metric suite.
//! - [`bridge`] — linking severity scores to movement-type probabilities by
//!   paper and correlating them with Pearson r, Student-t p-values, and
//!   Fisher-z confidence intervals.
//! - [`stats`] — the small numerical toolbox (log-gamma, regularized
//!   incomplete beta, Student-t tail probability, normal quantile) backing
//!   the inferential statistics.

pub mod agreement;
pub mod bridge;
pub mod classify;
pub mod corpus;
pub mod features;
pub mod hnsi;
pub mod orchestrator;
pub mod schema;
pub mod stats;
