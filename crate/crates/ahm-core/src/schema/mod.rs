//! Hierarchical extraction record for one study, the `"NR"` not-reported
//! convention, and non-mutating invariant validation.
//!
//! The record mirrors the published interchange format: study-level metadata,
//! one entry per patient group, and nested head-movement, quantitative
//! measurement, pain, and clinical-scale blocks. Any optional field can carry
//! the explicit `"NR"` marker, which is distinct from `0`, `false`, and the
//! empty string and never coerces to them.

mod json;

pub use json::{
    parse_corpus_text, parse_extraction, serialize_corpus_lines, serialize_extraction,
    serialize_extraction_compact,
};

use std::collections::BTreeSet;
use std::fmt;

use thiserror::Error;

/// A field value that is either known or explicitly not reported (`"NR"`).
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Reported<T> {
    Known(T),
    NotReported,
}

impl<T> Reported<T> {
    pub fn is_known(&self) -> bool {
        matches!(self, Reported::Known(_))
    }

    pub fn known(&self) -> Option<&T> {
        match self {
            Reported::Known(v) => Some(v),
            Reported::NotReported => None,
        }
    }

    pub fn into_known(self) -> Option<T> {
        match self {
            Reported::Known(v) => Some(v),
            Reported::NotReported => None,
        }
    }

    pub fn map<U>(self, f: impl FnOnce(T) -> U) -> Reported<U> {
        match self {
            Reported::Known(v) => Reported::Known(f(v)),
            Reported::NotReported => Reported::NotReported,
        }
    }
}

impl<T: Copy> Reported<T> {
    pub fn known_copied(&self) -> Option<T> {
        self.known().copied()
    }
}

impl<T> From<Option<T>> for Reported<T> {
    fn from(v: Option<T>) -> Self {
        match v {
            Some(v) => Reported::Known(v),
            None => Reported::NotReported,
        }
    }
}

/// Yes / no / not-reported answer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TriState {
    Yes,
    No,
    NotReported,
}

impl TriState {
    pub fn as_str(&self) -> &'static str {
        match self {
            TriState::Yes => "yes",
            TriState::No => "no",
            TriState::NotReported => "NR",
        }
    }
}

/// Study design classification.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum StudyType {
    CrossSectional,
    CaseReport,
    CaseSeries,
    Prospective,
    Review,
    Retrospective,
    Cohort,
    RandomizedControlledTrial,
    Other,
}

impl StudyType {
    pub const ALL: [StudyType; 9] = [
        StudyType::CrossSectional,
        StudyType::CaseReport,
        StudyType::CaseSeries,
        StudyType::Prospective,
        StudyType::Review,
        StudyType::Retrospective,
        StudyType::Cohort,
        StudyType::RandomizedControlledTrial,
        StudyType::Other,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            StudyType::CrossSectional => "cross-sectional",
            StudyType::CaseReport => "case report",
            StudyType::CaseSeries => "case series",
            StudyType::Prospective => "prospective",
            StudyType::Review => "review",
            StudyType::Retrospective => "retrospective",
            StudyType::Cohort => "cohort",
            StudyType::RandomizedControlledTrial => "randomized controlled trial",
            StudyType::Other => "other",
        }
    }

    /// Case-insensitive lookup of the canonical names.
    pub fn from_name(name: &str) -> Option<StudyType> {
        let folded = name.trim().to_lowercase();
        Self::ALL.iter().copied().find(|t| t.as_str() == folded)
    }
}

impl fmt::Display for StudyType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Disease vs disorder classification of a condition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ConditionCategory {
    Disease,
    Disorder,
}

impl ConditionCategory {
    pub fn as_str(&self) -> &'static str {
        match self {
            ConditionCategory::Disease => "disease",
            ConditionCategory::Disorder => "disorder",
        }
    }

    pub fn from_name(name: &str) -> Option<ConditionCategory> {
        match name.trim().to_lowercase().as_str() {
            "disease" => Some(ConditionCategory::Disease),
            "disorder" => Some(ConditionCategory::Disorder),
            _ => None,
        }
    }
}

/// A scale's published scoring range. The raw text is preserved verbatim;
/// bounds are derived when the text parses as `lo-hi` (hyphen or en-dash,
/// optional surrounding whitespace). Anything else stays opaque.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreRange {
    pub raw: String,
    pub bounds: Option<(f64, f64)>,
}

impl ScoreRange {
    pub fn parse(raw: &str) -> ScoreRange {
        ScoreRange {
            raw: raw.to_string(),
            bounds: parse_range_bounds(raw),
        }
    }
}

fn parse_range_bounds(raw: &str) -> Option<(f64, f64)> {
    let trimmed = raw.trim();
    // Try every dash position past the first character so "0-35" and
    // "0 – 35" both work while a leading minus sign does not split.
    for (idx, ch) in trimmed.char_indices() {
        if idx == 0 || (ch != '-' && ch != '\u{2013}') {
            continue;
        }
        let (lo_txt, hi_txt) = (&trimmed[..idx], &trimmed[idx + ch.len_utf8()..]);
        if let (Some(lo), Some(hi)) = (parse_plain_decimal(lo_txt), parse_plain_decimal(hi_txt)) {
            if lo <= hi {
                return Some((lo, hi));
            }
        }
    }
    None
}

/// Plain integers and decimals only; scientific notation is not a valid
/// score-range component.
fn parse_plain_decimal(text: &str) -> Option<f64> {
    let t = text.trim();
    if t.is_empty() || t.contains(['e', 'E']) {
        return None;
    }
    t.parse::<f64>().ok().filter(|v| v.is_finite())
}

/// Head-movement characterization for one patient group.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadMovement {
    pub movement_type: Reported<String>,
    pub direction: Reported<String>,
    pub laterality: Reported<String>,
    pub degree: Reported<String>,
    pub frequency_descriptor: Reported<String>,
    pub consistency: Reported<String>,
    pub pattern: Reported<String>,
}

impl HeadMovement {
    pub fn empty() -> HeadMovement {
        HeadMovement {
            movement_type: Reported::NotReported,
            direction: Reported::NotReported,
            laterality: Reported::NotReported,
            degree: Reported::NotReported,
            frequency_descriptor: Reported::NotReported,
            consistency: Reported::NotReported,
            pattern: Reported::NotReported,
        }
    }
}

/// Quantitative kinematic measurements for one patient group.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantMeasurement {
    pub measurement_performed: Reported<bool>,
    pub measurement_system: Reported<String>,
    pub measurement_location: Reported<String>,
    pub frequency_value: Reported<f64>,
    pub frequency_unit: Reported<String>,
    pub velocity_value: Reported<f64>,
    pub velocity_unit: Reported<String>,
    pub amplitude_value: Reported<f64>,
    pub amplitude_unit: Reported<String>,
    pub amplitude_direction: Reported<String>,
    pub latency_value: Reported<f64>,
    pub latency_unit: Reported<String>,
}

impl QuantMeasurement {
    pub fn empty() -> QuantMeasurement {
        QuantMeasurement {
            measurement_performed: Reported::NotReported,
            measurement_system: Reported::NotReported,
            measurement_location: Reported::NotReported,
            frequency_value: Reported::NotReported,
            frequency_unit: Reported::NotReported,
            velocity_value: Reported::NotReported,
            velocity_unit: Reported::NotReported,
            amplitude_value: Reported::NotReported,
            amplitude_unit: Reported::NotReported,
            amplitude_direction: Reported::NotReported,
            latency_value: Reported::NotReported,
            latency_unit: Reported::NotReported,
        }
    }

    /// True when any of the four kinematic values is reported.
    pub fn has_any_kinematic_value(&self) -> bool {
        self.frequency_value.is_known()
            || self.velocity_value.is_known()
            || self.amplitude_value.is_known()
            || self.latency_value.is_known()
    }
}

/// Pain reporting for one patient group.
#[derive(Debug, Clone, PartialEq)]
pub struct PainAssessment {
    pub pain_present: TriState,
    pub pain_severity: Reported<f64>,
    pub pain_severity_scale: Reported<String>,
    pub pain_location: Reported<String>,
    pub pain_characteristics: Reported<String>,
}

impl PainAssessment {
    pub fn empty() -> PainAssessment {
        PainAssessment {
            pain_present: TriState::NotReported,
            pain_severity: Reported::NotReported,
            pain_severity_scale: Reported::NotReported,
            pain_location: Reported::NotReported,
            pain_characteristics: Reported::NotReported,
        }
    }
}

/// One clinical-scale assessment row.
#[derive(Debug, Clone, PartialEq)]
pub struct ClinicalScaleRecord {
    pub scale_name: Reported<String>,
    pub scale_type: Reported<String>,
    pub subscale: Reported<String>,
    pub score_range: Reported<ScoreRange>,
    pub baseline_value: Reported<f64>,
    pub post_treatment_value: Reported<f64>,
    pub change_value: Reported<f64>,
    pub p_value: Reported<f64>,
    pub measurement_timepoint: Reported<String>,
}

impl ClinicalScaleRecord {
    pub fn empty() -> ClinicalScaleRecord {
        ClinicalScaleRecord {
            scale_name: Reported::NotReported,
            scale_type: Reported::NotReported,
            subscale: Reported::NotReported,
            score_range: Reported::NotReported,
            baseline_value: Reported::NotReported,
            post_treatment_value: Reported::NotReported,
            change_value: Reported::NotReported,
            p_value: Reported::NotReported,
            measurement_timepoint: Reported::NotReported,
        }
    }
}

/// One patient group or individual patient within a study.
#[derive(Debug, Clone, PartialEq)]
pub struct PatientGroup {
    pub group_id: String,
    pub condition_name: Reported<String>,
    pub condition_category: Reported<ConditionCategory>,
    pub n_patients: Reported<u64>,
    pub age: Reported<String>,
    pub age_range: Reported<String>,
    pub gender: Reported<String>,
    pub gender_distribution: Reported<String>,
    pub causes_ahm: TriState,
    pub head_symptoms: Reported<BTreeSet<String>>,
    pub general_symptoms: Reported<BTreeSet<String>>,
    pub head_movement: Option<HeadMovement>,
    pub measurement: Option<QuantMeasurement>,
    pub pain: Option<PainAssessment>,
    pub eye_abnormalities: Reported<String>,
    pub scales: Vec<ClinicalScaleRecord>,
}

impl PatientGroup {
    /// A group with the given id and every optional field not reported.
    pub fn empty(group_id: impl Into<String>) -> PatientGroup {
        PatientGroup {
            group_id: group_id.into(),
            condition_name: Reported::NotReported,
            condition_category: Reported::NotReported,
            n_patients: Reported::NotReported,
            age: Reported::NotReported,
            age_range: Reported::NotReported,
            gender: Reported::NotReported,
            gender_distribution: Reported::NotReported,
            causes_ahm: TriState::NotReported,
            head_symptoms: Reported::NotReported,
            general_symptoms: Reported::NotReported,
            head_movement: None,
            measurement: None,
            pain: None,
            eye_abnormalities: Reported::NotReported,
            scales: Vec::new(),
        }
    }
}

/// One paper's full extraction record.
#[derive(Debug, Clone, PartialEq)]
pub struct StudyExtraction {
    pub paper_id: String,
    pub study_title: Reported<String>,
    pub study_type: Reported<StudyType>,
    pub total_sample_size: Reported<u64>,
    pub study_age_range: Reported<String>,
    pub study_gender_distribution: Reported<String>,
    pub groups: Vec<PatientGroup>,
}

impl StudyExtraction {
    /// A record with the given id, one empty group, and all-NR metadata.
    pub fn minimal(paper_id: impl Into<String>, group_id: impl Into<String>) -> StudyExtraction {
        StudyExtraction {
            paper_id: paper_id.into(),
            study_title: Reported::NotReported,
            study_type: Reported::NotReported,
            total_sample_size: Reported::NotReported,
            study_age_range: Reported::NotReported,
            study_gender_distribution: Reported::NotReported,
            groups: vec![PatientGroup::empty(group_id)],
        }
    }
}

/// Parse- and schema-level failures. Validation findings are data, not
/// errors; see [`ValidationReport`].
#[derive(Debug, Error)]
pub enum SchemaError {
    #[error("malformed document: {detail}")]
    Malformed { detail: String },
    #[error("unknown field `{field}` at {path}")]
    UnknownField { path: String, field: String },
    #[error("missing required field `{field}` at {path}")]
    MissingField { path: String, field: String },
    #[error("type mismatch at {path}: expected {expected}, found {found}")]
    TypeMismatch {
        path: String,
        expected: String,
        found: String,
    },
    #[error("scientific notation rejected at {path}: `{token}`")]
    ScientificNotation { path: String, token: String },
    #[error("non-finite numeric value cannot be serialized at {path}")]
    NonFiniteValue { path: String },
}

/// Machine-readable violation categories, one per stated type invariant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ViolationCode {
    EmptyPaperId,
    NoGroups,
    EmptyGroupId,
    DuplicateGroupId,
    ZeroPatientCount,
    NonFiniteValue,
    NegativeValue,
    ValueWithoutUnit,
    MovementTypeMissing,
    PainSeverityWithoutPain,
    PValueOutOfRange,
    BaselineOutsideScoreRange,
}

impl ViolationCode {
    pub fn as_str(&self) -> &'static str {
        match self {
            ViolationCode::EmptyPaperId => "empty-paper-id",
            ViolationCode::NoGroups => "no-groups",
            ViolationCode::EmptyGroupId => "empty-group-id",
            ViolationCode::DuplicateGroupId => "duplicate-group-id",
            ViolationCode::ZeroPatientCount => "zero-patient-count",
            ViolationCode::NonFiniteValue => "non-finite-value",
            ViolationCode::NegativeValue => "negative-value",
            ViolationCode::ValueWithoutUnit => "value-without-unit",
            ViolationCode::MovementTypeMissing => "movement-type-missing",
            ViolationCode::PainSeverityWithoutPain => "pain-severity-without-pain",
            ViolationCode::PValueOutOfRange => "p-value-out-of-range",
            ViolationCode::BaselineOutsideScoreRange => "baseline-outside-score-range",
        }
    }
}

/// One invariant violation, located by a dotted path into the record.
#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub path: String,
    pub code: ViolationCode,
    pub message: String,
}

/// Outcome of [`validate`]: empty iff every invariant holds.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }

    fn push(&mut self, path: impl Into<String>, code: ViolationCode, message: impl Into<String>) {
        self.violations.push(Violation {
            path: path.into(),
            code,
            message: message.into(),
        });
    }
}

/// Check every type invariant without mutating the record. Violations are
/// reported, never silently repaired.
pub fn validate(record: &StudyExtraction) -> ValidationReport {
    let mut report = ValidationReport::default();

    if record.paper_id.trim().is_empty() {
        report.push("paper_id", ViolationCode::EmptyPaperId, "paper_id is empty");
    }
    if record.groups.is_empty() {
        report.push("groups", ViolationCode::NoGroups, "at least one group required");
    }

    let mut seen_group_ids = BTreeSet::new();
    for (gi, group) in record.groups.iter().enumerate() {
        let gpath = format!("groups[{gi}]");
        if group.group_id.trim().is_empty() {
            report.push(
                format!("{gpath}.group_id"),
                ViolationCode::EmptyGroupId,
                "group_id is empty",
            );
        } else if !seen_group_ids.insert(group.group_id.clone()) {
            report.push(
                format!("{gpath}.group_id"),
                ViolationCode::DuplicateGroupId,
                format!("group_id `{}` repeats within the record", group.group_id),
            );
        }

        if group.n_patients == Reported::Known(0) {
            report.push(
                format!("{gpath}.n_patients"),
                ViolationCode::ZeroPatientCount,
                "n_patients must be at least 1 when reported",
            );
        }

        if let Some(movement) = &group.head_movement {
            let type_missing = match movement.movement_type.known() {
                Some(t) => t.trim().is_empty(),
                None => true,
            };
            if group.causes_ahm == TriState::Yes && type_missing {
                report.push(
                    format!("{gpath}.head_movement.type"),
                    ViolationCode::MovementTypeMissing,
                    "movement type required when the group causes abnormal head movement",
                );
            }
        }

        if let Some(m) = &group.measurement {
            check_value_unit(&mut report, &gpath, "frequency", &m.frequency_value, &m.frequency_unit);
            check_value_unit(&mut report, &gpath, "velocity", &m.velocity_value, &m.velocity_unit);
            check_value_unit(&mut report, &gpath, "amplitude", &m.amplitude_value, &m.amplitude_unit);
            check_value_unit(&mut report, &gpath, "latency", &m.latency_value, &m.latency_unit);
        }

        if let Some(pain) = &group.pain {
            if let Some(v) = pain.pain_severity.known_copied() {
                check_finite(&mut report, format!("{gpath}.pain.pain_severity"), v);
                if pain.pain_present != TriState::Yes {
                    report.push(
                        format!("{gpath}.pain.pain_severity"),
                        ViolationCode::PainSeverityWithoutPain,
                        "pain_severity reported but pain_present is not `yes`",
                    );
                }
            }
        }

        for (si, scale) in group.scales.iter().enumerate() {
            let spath = format!("{gpath}.scales[{si}]");
            for (field, value) in [
                ("baseline_value", &scale.baseline_value),
                ("post_treatment_value", &scale.post_treatment_value),
                ("change_value", &scale.change_value),
            ] {
                if let Some(v) = value.known_copied() {
                    check_finite(&mut report, format!("{spath}.{field}"), v);
                }
            }
            if let Some(p) = scale.p_value.known_copied() {
                if !p.is_finite() || !(0.0..=1.0).contains(&p) {
                    report.push(
                        format!("{spath}.p_value"),
                        ViolationCode::PValueOutOfRange,
                        format!("p_value {p} outside [0,1]"),
                    );
                }
            }
            if let (Some(baseline), Some(range)) =
                (scale.baseline_value.known_copied(), scale.score_range.known())
            {
                if let Some((lo, hi)) = range.bounds {
                    if baseline < lo || baseline > hi {
                        report.push(
                            format!("{spath}.baseline_value"),
                            ViolationCode::BaselineOutsideScoreRange,
                            format!("baseline {baseline} outside score range {lo}-{hi}"),
                        );
                    }
                }
            }
        }
    }

    report
}

fn check_value_unit(
    report: &mut ValidationReport,
    gpath: &str,
    kind: &str,
    value: &Reported<f64>,
    unit: &Reported<String>,
) {
    if let Some(v) = value.known_copied() {
        let vpath = format!("{gpath}.measurement.{kind}_value");
        if !v.is_finite() {
            report.push(vpath.clone(), ViolationCode::NonFiniteValue, format!("{kind} value is not finite"));
        } else if v < 0.0 {
            report.push(vpath.clone(), ViolationCode::NegativeValue, format!("{kind} value {v} is negative"));
        }
        if !unit.is_known() {
            report.push(
                format!("{gpath}.measurement.{kind}_unit"),
                ViolationCode::ValueWithoutUnit,
                format!("{kind} value reported without a unit"),
            );
        }
    }
}

fn check_finite(report: &mut ValidationReport, path: String, v: f64) {
    if !v.is_finite() {
        report.push(path, ViolationCode::NonFiniteValue, "value is not finite");
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record_with_scale(baseline: f64, range: &str) -> StudyExtraction {
        let mut record = StudyExtraction::minimal("P1", "g1");
        record.groups[0].scales.push(ClinicalScaleRecord {
            scale_name: Reported::Known("TWSTRS".to_string()),
            baseline_value: Reported::Known(baseline),
            score_range: Reported::Known(ScoreRange::parse(range)),
            ..ClinicalScaleRecord::empty()
        });
        record
    }

    #[test]
    fn minimal_record_is_clean() {
        let record = StudyExtraction::minimal("P1", "g1");
        assert!(validate(&record).is_clean());
    }

    #[test]
    fn zero_patient_count_flagged_at_path() {
        let mut record = StudyExtraction::minimal("P1", "g1");
        record.groups[0].n_patients = Reported::Known(0);
        let report = validate(&record);
        assert_eq!(report.violations.len(), 1);
        assert_eq!(report.violations[0].path, "groups[0].n_patients");
        assert_eq!(report.violations[0].code, ViolationCode::ZeroPatientCount);
    }

    #[test]
    fn baseline_outside_range_flagged_not_repaired() {
        let record = record_with_scale(40.0, "0-35");
        let report = validate(&record);
        assert_eq!(report.violations.len(), 1);
        assert_eq!(report.violations[0].code, ViolationCode::BaselineOutsideScoreRange);
        // The record itself is untouched.
        assert_eq!(
            record.groups[0].scales[0].baseline_value,
            Reported::Known(40.0)
        );
    }

    #[test]
    fn baseline_inside_range_passes() {
        let record = record_with_scale(20.0, "0-35");
        assert!(validate(&record).is_clean());
    }

    #[test]
    fn score_range_parses_hyphen_en_dash_and_whitespace() {
        assert_eq!(ScoreRange::parse("0-35").bounds, Some((0.0, 35.0)));
        assert_eq!(ScoreRange::parse(" 0 \u{2013} 35 ").bounds, Some((0.0, 35.0)));
        assert_eq!(ScoreRange::parse("0.5-4.5").bounds, Some((0.5, 4.5)));
        // Inverted, scientific, or free-text ranges stay opaque.
        assert_eq!(ScoreRange::parse("35-0").bounds, None);
        assert_eq!(ScoreRange::parse("1e1-35").bounds, None);
        assert_eq!(ScoreRange::parse("zero to ten").bounds, None);
        assert_eq!(ScoreRange::parse("zero to ten").raw, "zero to ten");
    }

    #[test]
    fn pain_severity_requires_pain_present_yes() {
        let mut record = StudyExtraction::minimal("P1", "g1");
        record.groups[0].pain = Some(PainAssessment {
            pain_present: TriState::NotReported,
            pain_severity: Reported::Known(5.0),
            ..PainAssessment::empty()
        });
        let report = validate(&record);
        assert_eq!(report.violations.len(), 1);
        assert_eq!(report.violations[0].code, ViolationCode::PainSeverityWithoutPain);
    }

    #[test]
    fn value_without_unit_flagged() {
        let mut record = StudyExtraction::minimal("P1", "g1");
        record.groups[0].measurement = Some(QuantMeasurement {
            amplitude_value: Reported::Known(12.0),
            ..QuantMeasurement::empty()
        });
        let report = validate(&record);
        assert_eq!(report.violations.len(), 1);
        assert_eq!(report.violations[0].code, ViolationCode::ValueWithoutUnit);
    }

    #[test]
    fn movement_type_required_when_causes_ahm_yes() {
        let mut record = StudyExtraction::minimal("P1", "g1");
        record.groups[0].causes_ahm = TriState::Yes;
        record.groups[0].head_movement = Some(HeadMovement::empty());
        let report = validate(&record);
        assert_eq!(report.violations.len(), 1);
        assert_eq!(report.violations[0].code, ViolationCode::MovementTypeMissing);

        // With causes_ahm = NR the same structure is fine.
        record.groups[0].causes_ahm = TriState::NotReported;
        assert!(validate(&record).is_clean());
    }

    #[test]
    fn duplicate_group_ids_flagged() {
        let mut record = StudyExtraction::minimal("P1", "g1");
        record.groups.push(PatientGroup::empty("g1"));
        let report = validate(&record);
        assert_eq!(report.violations.len(), 1);
        assert_eq!(report.violations[0].code, ViolationCode::DuplicateGroupId);
    }
}
