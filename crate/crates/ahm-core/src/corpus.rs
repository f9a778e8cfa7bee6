//! Dataset loading and the cervical-dystonia working-set partition.
//!
//! A corpus is assembled from the three-folder layout (abnormal head
//! movements, quantitative kinematics, severity scales) via a plain-text
//! manifest. Records for the same paper across folders are merged field-wise;
//! conflicting non-missing scalars are an error rather than last-writer-wins,
//! so provenance stays auditable.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::schema::{
    parse_corpus_text, ClinicalScaleRecord, HeadMovement, PatientGroup, QuantMeasurement,
    Reported, SchemaError, StudyExtraction, TriState,
};

/// The three dataset folder roles.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum FolderRole {
    AbnormalHeadMovements,
    KinematicsQuantitative,
    SeverityScales,
}

impl FolderRole {
    pub const ALL: [FolderRole; 3] = [
        FolderRole::AbnormalHeadMovements,
        FolderRole::KinematicsQuantitative,
        FolderRole::SeverityScales,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            FolderRole::AbnormalHeadMovements => "abnormal-head-movements",
            FolderRole::KinematicsQuantitative => "kinematics-quantitative",
            FolderRole::SeverityScales => "severity-scales",
        }
    }

    pub fn from_name(name: &str) -> Option<FolderRole> {
        let folded = name.trim().to_lowercase();
        Self::ALL.iter().copied().find(|r| r.as_str() == folded)
    }
}

impl fmt::Display for FolderRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Role-to-path table, one `role=path` line per entry.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Manifest {
    pub entries: BTreeMap<FolderRole, Vec<PathBuf>>,
}

impl Manifest {
    pub fn parse(text: &str) -> Result<Manifest, CorpusError> {
        let mut entries: BTreeMap<FolderRole, Vec<PathBuf>> = BTreeMap::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (role_txt, path_txt) =
                line.split_once('=').ok_or_else(|| CorpusError::ManifestSyntax {
                    line: lineno + 1,
                    detail: "expected `role=path`".to_string(),
                })?;
            let role =
                FolderRole::from_name(role_txt).ok_or_else(|| CorpusError::ManifestSyntax {
                    line: lineno + 1,
                    detail: format!("unknown folder role `{}`", role_txt.trim()),
                })?;
            entries
                .entry(role)
                .or_default()
                .push(PathBuf::from(path_txt.trim()));
        }
        Ok(Manifest { entries })
    }

    pub fn load(path: &Path) -> Result<Manifest, CorpusError> {
        let text = fs::read_to_string(path).map_err(|e| CorpusError::Io {
            path: path.to_path_buf(),
            detail: e.to_string(),
        })?;
        let mut manifest = Manifest::parse(&text)?;
        // Relative manifest entries resolve against the manifest's directory.
        if let Some(base) = path.parent() {
            for paths in manifest.entries.values_mut() {
                for p in paths.iter_mut() {
                    if p.is_relative() {
                        *p = base.join(&p);
                    }
                }
            }
        }
        Ok(manifest)
    }
}

/// Merged, de-duplicated set of extraction records.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Corpus {
    pub records: Vec<StudyExtraction>,
    pub source_manifest: Manifest,
}

impl Corpus {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn paper_ids(&self) -> impl Iterator<Item = &str> {
        self.records.iter().map(|r| r.paper_id.as_str())
    }
}

/// One kinematics row: a group's quantitative measurements plus its
/// head-movement characterization.
#[derive(Debug, Clone, PartialEq)]
pub struct CdQRow {
    pub paper_id: String,
    pub group_id: String,
    pub measurement: QuantMeasurement,
    pub movement: HeadMovement,
}

/// One clinical-scale row.
#[derive(Debug, Clone, PartialEq)]
pub struct CdCsRow {
    pub paper_id: String,
    pub group_id: String,
    pub scale: ClinicalScaleRecord,
}

/// The two functionally distinct cervical-dystonia working sets.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CdPartition {
    pub cd_q: Vec<CdQRow>,
    pub cd_cs: Vec<CdCsRow>,
}

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("cannot read {path}: {detail}")]
    Io { path: PathBuf, detail: String },
    #[error("manifest line {line}: {detail}")]
    ManifestSyntax { line: usize, detail: String },
    #[error("{path}: {source}")]
    Parse {
        path: PathBuf,
        source: SchemaError,
    },
    #[error("conflicting values for paper `{paper_id}` at {field}: `{left}` vs `{right}`")]
    MergeConflict {
        paper_id: String,
        field: String,
        left: String,
        right: String,
    },
}

/// Load every file referenced by the manifest and merge duplicates by
/// paper id. Records come back sorted by paper id.
pub fn load_corpus(manifest: &Manifest) -> Result<Corpus, CorpusError> {
    let mut by_id: BTreeMap<String, StudyExtraction> = BTreeMap::new();
    for paths in manifest.entries.values() {
        for path in paths {
            for file in expand_path(path)? {
                let text = fs::read_to_string(&file).map_err(|e| CorpusError::Io {
                    path: file.clone(),
                    detail: e.to_string(),
                })?;
                let records = parse_corpus_text(&text).map_err(|e| CorpusError::Parse {
                    path: file.clone(),
                    source: e,
                })?;
                for record in records {
                    insert_record(&mut by_id, record)?;
                }
            }
        }
    }
    Ok(Corpus {
        records: by_id.into_values().collect(),
        source_manifest: manifest.clone(),
    })
}

/// Build a corpus from in-memory records, applying the same merge rules.
pub fn corpus_from_records(records: Vec<StudyExtraction>) -> Result<Corpus, CorpusError> {
    let mut by_id = BTreeMap::new();
    for record in records {
        insert_record(&mut by_id, record)?;
    }
    Ok(Corpus {
        records: by_id.into_values().collect(),
        source_manifest: Manifest::default(),
    })
}

fn expand_path(path: &Path) -> Result<Vec<PathBuf>, CorpusError> {
    if path.is_dir() {
        let mut files = Vec::new();
        collect_json_files(path, &mut files)?;
        files.sort();
        Ok(files)
    } else {
        Ok(vec![path.to_path_buf()])
    }
}

fn collect_json_files(dir: &Path, out: &mut Vec<PathBuf>) -> Result<(), CorpusError> {
    let entries = fs::read_dir(dir).map_err(|e| CorpusError::Io {
        path: dir.to_path_buf(),
        detail: e.to_string(),
    })?;
    for entry in entries {
        let entry = entry.map_err(|e| CorpusError::Io {
            path: dir.to_path_buf(),
            detail: e.to_string(),
        })?;
        let p = entry.path();
        if p.is_dir() {
            collect_json_files(&p, out)?;
        } else if matches!(
            p.extension().and_then(|e| e.to_str()),
            Some("json") | Some("jsonl")
        ) {
            out.push(p);
        }
    }
    Ok(())
}

fn insert_record(
    by_id: &mut BTreeMap<String, StudyExtraction>,
    record: StudyExtraction,
) -> Result<(), CorpusError> {
    match by_id.remove(&record.paper_id) {
        None => {
            by_id.insert(record.paper_id.clone(), record);
        }
        Some(existing) => {
            let merged = merge_studies(existing, record)?;
            by_id.insert(merged.paper_id.clone(), merged);
        }
    }
    Ok(())
}

fn merge_studies(
    mut left: StudyExtraction,
    right: StudyExtraction,
) -> Result<StudyExtraction, CorpusError> {
    let paper_id = left.paper_id.clone();
    merge_field(&paper_id, "study_title", &mut left.study_title, right.study_title)?;
    merge_field(&paper_id, "study_type", &mut left.study_type, right.study_type)?;
    merge_field(
        &paper_id,
        "total_sample_size",
        &mut left.total_sample_size,
        right.total_sample_size,
    )?;
    merge_field(&paper_id, "study_age_range", &mut left.study_age_range, right.study_age_range)?;
    merge_field(
        &paper_id,
        "study_gender_distribution",
        &mut left.study_gender_distribution,
        right.study_gender_distribution,
    )?;
    for group in right.groups {
        match left.groups.iter_mut().find(|g| g.group_id == group.group_id) {
            Some(existing) => merge_groups(&paper_id, existing, group)?,
            None => left.groups.push(group),
        }
    }
    Ok(left)
}

fn merge_groups(
    paper_id: &str,
    left: &mut PatientGroup,
    right: PatientGroup,
) -> Result<(), CorpusError> {
    let gid = left.group_id.clone();
    let at = |field: &str| format!("groups[{gid}].{field}");
    merge_field(paper_id, &at("condition_name"), &mut left.condition_name, right.condition_name)?;
    merge_field(
        paper_id,
        &at("condition_category"),
        &mut left.condition_category,
        right.condition_category,
    )?;
    merge_field(paper_id, &at("n_patients"), &mut left.n_patients, right.n_patients)?;
    merge_field(paper_id, &at("age"), &mut left.age, right.age)?;
    merge_field(paper_id, &at("age_range"), &mut left.age_range, right.age_range)?;
    merge_field(paper_id, &at("gender"), &mut left.gender, right.gender)?;
    merge_field(
        paper_id,
        &at("gender_distribution"),
        &mut left.gender_distribution,
        right.gender_distribution,
    )?;
    merge_tri_state(paper_id, &at("causes_ahm"), &mut left.causes_ahm, right.causes_ahm)?;
    merge_sets(&mut left.head_symptoms, right.head_symptoms);
    merge_sets(&mut left.general_symptoms, right.general_symptoms);
    merge_option(paper_id, &at("head_movement"), &mut left.head_movement, right.head_movement)?;
    merge_option(paper_id, &at("measurement"), &mut left.measurement, right.measurement)?;
    merge_option(paper_id, &at("pain"), &mut left.pain, right.pain)?;
    merge_field(
        paper_id,
        &at("eye_abnormalities"),
        &mut left.eye_abnormalities,
        right.eye_abnormalities,
    )?;
    for scale in right.scales {
        if !left.scales.contains(&scale) {
            left.scales.push(scale);
        }
    }
    Ok(())
}

fn merge_field<T: PartialEq + fmt::Debug>(
    paper_id: &str,
    field: &str,
    left: &mut Reported<T>,
    right: Reported<T>,
) -> Result<(), CorpusError> {
    match (&*left, right) {
        (_, Reported::NotReported) => Ok(()),
        (Reported::NotReported, known) => {
            *left = known;
            Ok(())
        }
        (Reported::Known(l), Reported::Known(r)) => {
            if *l == r {
                Ok(())
            } else {
                Err(CorpusError::MergeConflict {
                    paper_id: paper_id.to_string(),
                    field: field.to_string(),
                    left: format!("{l:?}"),
                    right: format!("{r:?}"),
                })
            }
        }
    }
}

fn merge_tri_state(
    paper_id: &str,
    field: &str,
    left: &mut TriState,
    right: TriState,
) -> Result<(), CorpusError> {
    match (*left, right) {
        (_, TriState::NotReported) => Ok(()),
        (TriState::NotReported, known) => {
            *left = known;
            Ok(())
        }
        (l, r) if l == r => Ok(()),
        (l, r) => Err(CorpusError::MergeConflict {
            paper_id: paper_id.to_string(),
            field: field.to_string(),
            left: l.as_str().to_string(),
            right: r.as_str().to_string(),
        }),
    }
}

fn merge_sets(
    left: &mut Reported<std::collections::BTreeSet<String>>,
    right: Reported<std::collections::BTreeSet<String>>,
) {
    match (&mut *left, right) {
        (_, Reported::NotReported) => {}
        (Reported::NotReported, known) => *left = known,
        (Reported::Known(l), Reported::Known(r)) => l.extend(r),
    }
}

/// Sub-records merge field-wise through their own scalar rules.
fn merge_option<T: MergeSub>(
    paper_id: &str,
    field: &str,
    left: &mut Option<T>,
    right: Option<T>,
) -> Result<(), CorpusError> {
    match (left.as_mut(), right) {
        (_, None) => Ok(()),
        (None, Some(r)) => {
            *left = Some(r);
            Ok(())
        }
        (Some(l), Some(r)) => l.merge_from(paper_id, field, r),
    }
}

trait MergeSub: Sized {
    fn merge_from(&mut self, paper_id: &str, field: &str, other: Self) -> Result<(), CorpusError>;
}

impl MergeSub for HeadMovement {
    fn merge_from(&mut self, paper_id: &str, field: &str, other: Self) -> Result<(), CorpusError> {
        merge_field(paper_id, &format!("{field}.type"), &mut self.movement_type, other.movement_type)?;
        merge_field(paper_id, &format!("{field}.direction"), &mut self.direction, other.direction)?;
        merge_field(paper_id, &format!("{field}.laterality"), &mut self.laterality, other.laterality)?;
        merge_field(paper_id, &format!("{field}.degree"), &mut self.degree, other.degree)?;
        merge_field(
            paper_id,
            &format!("{field}.frequency"),
            &mut self.frequency_descriptor,
            other.frequency_descriptor,
        )?;
        merge_field(paper_id, &format!("{field}.consistency"), &mut self.consistency, other.consistency)?;
        merge_field(paper_id, &format!("{field}.pattern"), &mut self.pattern, other.pattern)
    }
}

impl MergeSub for QuantMeasurement {
    fn merge_from(&mut self, paper_id: &str, field: &str, other: Self) -> Result<(), CorpusError> {
        merge_field(
            paper_id,
            &format!("{field}.measurement_performed"),
            &mut self.measurement_performed,
            other.measurement_performed,
        )?;
        merge_field(
            paper_id,
            &format!("{field}.measurement_system"),
            &mut self.measurement_system,
            other.measurement_system,
        )?;
        merge_field(
            paper_id,
            &format!("{field}.measurement_location"),
            &mut self.measurement_location,
            other.measurement_location,
        )?;
        merge_field(paper_id, &format!("{field}.frequency_value"), &mut self.frequency_value, other.frequency_value)?;
        merge_field(paper_id, &format!("{field}.frequency_unit"), &mut self.frequency_unit, other.frequency_unit)?;
        merge_field(paper_id, &format!("{field}.velocity_value"), &mut self.velocity_value, other.velocity_value)?;
        merge_field(paper_id, &format!("{field}.velocity_unit"), &mut self.velocity_unit, other.velocity_unit)?;
        merge_field(paper_id, &format!("{field}.amplitude_value"), &mut self.amplitude_value, other.amplitude_value)?;
        merge_field(paper_id, &format!("{field}.amplitude_unit"), &mut self.amplitude_unit, other.amplitude_unit)?;
        merge_field(
            paper_id,
            &format!("{field}.amplitude_direction"),
            &mut self.amplitude_direction,
            other.amplitude_direction,
        )?;
        merge_field(paper_id, &format!("{field}.latency_value"), &mut self.latency_value, other.latency_value)?;
        merge_field(paper_id, &format!("{field}.latency_unit"), &mut self.latency_unit, other.latency_unit)
    }
}

impl MergeSub for crate::schema::PainAssessment {
    fn merge_from(&mut self, paper_id: &str, field: &str, other: Self) -> Result<(), CorpusError> {
        merge_tri_state(paper_id, &format!("{field}.pain_present"), &mut self.pain_present, other.pain_present)?;
        merge_field(paper_id, &format!("{field}.pain_severity"), &mut self.pain_severity, other.pain_severity)?;
        merge_field(
            paper_id,
            &format!("{field}.pain_severity_scale"),
            &mut self.pain_severity_scale,
            other.pain_severity_scale,
        )?;
        merge_field(paper_id, &format!("{field}.pain_location"), &mut self.pain_location, other.pain_location)?;
        merge_field(
            paper_id,
            &format!("{field}.pain_characteristics"),
            &mut self.pain_characteristics,
            other.pain_characteristics,
        )
    }
}

/// Keep only groups whose condition name matches after case-folding and
/// trimming; papers left without groups are dropped.
pub fn filter_condition(corpus: &Corpus, name: &str) -> Corpus {
    let needle = name.trim().to_lowercase();
    let mut records = Vec::new();
    for record in &corpus.records {
        let groups: Vec<PatientGroup> = record
            .groups
            .iter()
            .filter(|g| {
                g.condition_name
                    .known()
                    .is_some_and(|c| c.trim().to_lowercase() == needle)
            })
            .cloned()
            .collect();
        if !groups.is_empty() {
            let mut kept = record.clone();
            kept.groups = groups;
            records.push(kept);
        }
    }
    Corpus {
        records,
        source_manifest: corpus.source_manifest.clone(),
    }
}

/// Drop rows where all four kinematic values (amplitude, frequency, latency,
/// velocity) are simultaneously missing. Order-preserving and idempotent.
pub fn quality_filter_kinematics(rows: Vec<CdQRow>) -> Vec<CdQRow> {
    rows.into_iter()
        .filter(|row| row.measurement.has_any_kinematic_value())
        .collect()
}

/// Split a condition-filtered corpus into the kinematics working set (CD-Q,
/// quality-filtered) and the clinical-scale working set (CD-CS).
pub fn partition_cd(corpus: &Corpus) -> CdPartition {
    let mut cd_q = Vec::new();
    let mut cd_cs = Vec::new();
    for record in &corpus.records {
        for group in &record.groups {
            if let (Some(measurement), Some(movement)) = (&group.measurement, &group.head_movement)
            {
                cd_q.push(CdQRow {
                    paper_id: record.paper_id.clone(),
                    group_id: group.group_id.clone(),
                    measurement: measurement.clone(),
                    movement: movement.clone(),
                });
            }
            for scale in &group.scales {
                if scale.scale_name.is_known() {
                    cd_cs.push(CdCsRow {
                        paper_id: record.paper_id.clone(),
                        group_id: group.group_id.clone(),
                        scale: scale.clone(),
                    });
                }
            }
        }
    }
    CdPartition {
        cd_q: quality_filter_kinematics(cd_q),
        cd_cs,
    }
}

/// CD-Q rows as RFC-4180 CSV.
pub fn cd_q_csv(rows: &[CdQRow]) -> Result<String, csv::Error> {
    let mut writer = csv::Writer::from_writer(Vec::new());
    writer.write_record([
        "paper_id",
        "group_id",
        "movement_type",
        "amplitude_value",
        "amplitude_unit",
        "frequency_value",
        "frequency_unit",
        "latency_value",
        "latency_unit",
        "velocity_value",
        "velocity_unit",
        "measurement_system",
    ])?;
    for row in rows {
        writer.write_record([
            row.paper_id.as_str(),
            row.group_id.as_str(),
            &reported_text(&row.movement.movement_type),
            &reported_num(&row.measurement.amplitude_value),
            &reported_text(&row.measurement.amplitude_unit),
            &reported_num(&row.measurement.frequency_value),
            &reported_text(&row.measurement.frequency_unit),
            &reported_num(&row.measurement.latency_value),
            &reported_text(&row.measurement.latency_unit),
            &reported_num(&row.measurement.velocity_value),
            &reported_text(&row.measurement.velocity_unit),
            &reported_text(&row.measurement.measurement_system),
        ])?;
    }
    finish_csv(writer)
}

/// CD-CS rows as RFC-4180 CSV.
pub fn cd_cs_csv(rows: &[CdCsRow]) -> Result<String, csv::Error> {
    let mut writer = csv::Writer::from_writer(Vec::new());
    writer.write_record([
        "paper_id",
        "group_id",
        "scale_name",
        "scale_type",
        "subscale",
        "score_range",
        "baseline_value",
        "post_treatment_value",
        "change_value",
        "p_value",
        "measurement_timepoint",
    ])?;
    for row in rows {
        let range = match &row.scale.score_range {
            Reported::Known(r) => r.raw.clone(),
            Reported::NotReported => "NR".to_string(),
        };
        writer.write_record([
            row.paper_id.as_str(),
            row.group_id.as_str(),
            &reported_text(&row.scale.scale_name),
            &reported_text(&row.scale.scale_type),
            &reported_text(&row.scale.subscale),
            &range,
            &reported_num(&row.scale.baseline_value),
            &reported_num(&row.scale.post_treatment_value),
            &reported_num(&row.scale.change_value),
            &reported_num(&row.scale.p_value),
            &reported_text(&row.scale.measurement_timepoint),
        ])?;
    }
    finish_csv(writer)
}

fn reported_text(field: &Reported<String>) -> String {
    match field {
        Reported::Known(s) => s.clone(),
        Reported::NotReported => "NR".to_string(),
    }
}

fn reported_num(field: &Reported<f64>) -> String {
    match field {
        Reported::Known(v) => format!("{v}"),
        Reported::NotReported => "NR".to_string(),
    }
}

pub(crate) fn finish_csv(writer: csv::Writer<Vec<u8>>) -> Result<String, csv::Error> {
    let bytes = writer.into_inner().map_err(|e| e.into_error())?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}
