//! Kinematic feature engineering for the movement-type classifier.
//!
//! Raw CD-Q rows become model-ready vectors through label standardization,
//! unit-aware amplitude conversion, frequency and latency plausibility
//! cleaning, within-class median imputation, measurement-system ordinal
//! encoding, and amplitude-unit one-hot encoding. Every step is deterministic
//! and idempotent.

use std::collections::BTreeSet;
use std::fmt;

use thiserror::Error;

use crate::corpus::{finish_csv, CdQRow};

/// The five canonical movement-type labels, in canonical column order.
pub const LABEL_NAMES: [&str; 5] = [
    "torticollis",
    "laterocollis",
    "anterocollis",
    "retrocollis",
    "head_tremor",
];

/// Multi-label target: which of the five canonical movement types a record
/// asserts. At least one label is set for every retained record.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct LabelSet {
    pub torticollis: bool,
    pub laterocollis: bool,
    pub anterocollis: bool,
    pub retrocollis: bool,
    pub head_tremor: bool,
}

impl LabelSet {
    pub fn as_array(&self) -> [bool; 5] {
        [
            self.torticollis,
            self.laterocollis,
            self.anterocollis,
            self.retrocollis,
            self.head_tremor,
        ]
    }

    pub fn from_array(values: [bool; 5]) -> LabelSet {
        LabelSet {
            torticollis: values[0],
            laterocollis: values[1],
            anterocollis: values[2],
            retrocollis: values[3],
            head_tremor: values[4],
        }
    }

    pub fn any(&self) -> bool {
        self.as_array().into_iter().any(|b| b)
    }

    pub fn count(&self) -> usize {
        self.as_array().into_iter().filter(|b| *b).count()
    }

    /// Powerset key, e.g. `"10010"`, used for stratification.
    pub fn key(&self) -> String {
        self.as_array()
            .into_iter()
            .map(|b| if b { '1' } else { '0' })
            .collect()
    }

    fn set(&mut self, index: usize) {
        match index {
            0 => self.torticollis = true,
            1 => self.laterocollis = true,
            2 => self.anterocollis = true,
            3 => self.retrocollis = true,
            4 => self.head_tremor = true,
            _ => unreachable!("label index out of range"),
        }
    }
}

impl fmt::Display for LabelSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: Vec<&str> = LABEL_NAMES
            .iter()
            .zip(self.as_array())
            .filter(|(_, on)| *on)
            .map(|(name, _)| *name)
            .collect();
        write!(f, "{{{}}}", names.join(", "))
    }
}

/// Post-conversion amplitude unit family.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnitClass {
    Degrees,
    Millimetres,
    Centimetres,
    EmgPercentage,
    Dimensionless,
    Other,
}

impl UnitClass {
    /// Indicator triple over {degrees, mm, cm}; EMG-percentage,
    /// dimensionless, and unknown families encode as all-zero.
    pub fn one_hot(&self) -> [f64; 3] {
        match self {
            UnitClass::Degrees => [1.0, 0.0, 0.0],
            UnitClass::Millimetres => [0.0, 1.0, 0.0],
            UnitClass::Centimetres => [0.0, 0.0, 1.0],
            _ => [0.0, 0.0, 0.0],
        }
    }
}

/// A non-fatal preprocessing note.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FeatureWarning {
    UnmappedLabel { paper_id: String, group_id: String, term: String },
    UnknownAmplitudeUnit { unit: String },
    ColumnDropped { column: String },
}

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("no rows supplied")]
    EmptyInput,
    #[error("no rows with mappable movement-type labels")]
    NoLabeledRows,
}

// ---------------------------------------------------------------------------
// Label standardization
// ---------------------------------------------------------------------------

/// Map one movement-type text onto the canonical labels. Multi-term texts
/// (split on `;,/+`) contribute every term; any unmapped term rejects the
/// whole record from the supervised set.
pub fn standardize_labels(raw_movement_type: &str) -> Result<LabelSet, String> {
    let mut labels = LabelSet::default();
    let mut matched_any = false;
    for term in raw_movement_type.split([';', ',', '/', '+']) {
        let term = term.trim().to_lowercase();
        if term.is_empty() {
            continue;
        }
        match canonical_label_index(&term) {
            Some(index) => {
                labels.set(index);
                matched_any = true;
            }
            None => return Err(term),
        }
    }
    if !matched_any {
        return Err(raw_movement_type.trim().to_lowercase());
    }
    Ok(labels)
}

/// Synonym dictionary: alternative clinical terms collapse onto the five
/// canonical names; matching is case-insensitive.
fn canonical_label_index(term: &str) -> Option<usize> {
    match term {
        "torticollis" | "dystonic" | "dystonia" | "rotational cd" | "spasmodic torticollis" => {
            Some(0)
        }
        "laterocollis" => Some(1),
        "anterocollis" => Some(2),
        "retrocollis" => Some(3),
        "head tremor" | "oscillation" | "jerky" => Some(4),
        _ => None,
    }
}

// ---------------------------------------------------------------------------
// Cleaners
// ---------------------------------------------------------------------------

/// Unit-aware amplitude conversion: centimetres become millimetres (x10);
/// angular, normalized, and unknown-unit values are kept as reported. The
/// returned class is the post-conversion family.
pub fn normalize_amplitude(value: f64, unit: &str) -> (f64, UnitClass) {
    match canonical_amplitude_unit(unit) {
        UnitClass::Centimetres => (value * 10.0, UnitClass::Millimetres),
        class => (value, class),
    }
}

fn canonical_amplitude_unit(unit: &str) -> UnitClass {
    let folded = unit.trim().to_lowercase();
    match folded.as_str() {
        "degrees" | "degree" | "deg" | "°" => UnitClass::Degrees,
        "mm" | "millimetre" | "millimetres" | "millimeter" | "millimeters" => {
            UnitClass::Millimetres
        }
        "cm" | "centimetre" | "centimetres" | "centimeter" | "centimeters" => {
            UnitClass::Centimetres
        }
        "emg-percentage" | "emg %" | "%vr" | "% of voluntary range" => UnitClass::EmgPercentage,
        "dimensionless" | "normalized" | "ratio" => UnitClass::Dimensionless,
        _ => UnitClass::Other,
    }
}

/// Tremor-band plausibility window in Hz: the union of the resting (3-6),
/// action (4-11), and dystonic (1-6) ranges, closed at both ends. The
/// per-record tremor class is unknown, so the union applies.
pub const FREQUENCY_WINDOW_HZ: (f64, f64) = (1.0, 11.0);

/// Keep a frequency only inside the plausibility window; out-of-window
/// values go back to missing for imputation.
pub fn clean_frequency(value: f64) -> Option<f64> {
    let (lo, hi) = FREQUENCY_WINDOW_HZ;
    (value.is_finite() && value >= lo && value <= hi).then_some(value)
}

/// Keep millisecond latencies; convert seconds (x1000); drop any other unit.
pub fn clean_latency(value: f64, unit: &str) -> Option<f64> {
    if !value.is_finite() {
        return None;
    }
    match unit.trim().to_lowercase().as_str() {
        "ms" | "msec" | "millisecond" | "milliseconds" => Some(value),
        "s" | "sec" | "second" | "seconds" => Some(value * 1000.0),
        _ => None,
    }
}

/// Ordinal codes for acquisition modalities. Multi-system strings take the
/// lowest code present.
pub fn encode_measurement_system(system: &str) -> u8 {
    const FALLBACK: u8 = 7;
    let folded = system.to_lowercase();
    let mut code = FALLBACK;
    let table: [(&[&str], u8); 7] = [
        (&["emg", "electromyography"], 0),
        (&["accelerometer", "imu", "inertial measurement"], 1),
        (&["optical motion capture", "motion capture"], 2),
        (&["goniometer", "goniometry"], 3),
        (&["eye tracking", "vog", "video-oculography", "search coil"], 4),
        (&["video analysis", "video"], 5),
        (&["mri", "magnetic resonance"], 6),
    ];
    for (keywords, c) in table {
        if keywords.iter().any(|k| folded.contains(k)) {
            code = code.min(c);
        }
    }
    code
}

// ---------------------------------------------------------------------------
// Row assembly and imputation
// ---------------------------------------------------------------------------

/// One CD-Q row after label mapping and unit cleaning, before imputation.
#[derive(Debug, Clone, PartialEq)]
pub struct CleanRow {
    pub paper_id: String,
    pub group_id: String,
    pub labels: LabelSet,
    pub amplitude: Option<f64>,
    pub amplitude_class: UnitClass,
    pub frequency_hz: Option<f64>,
    pub latency_ms: Option<f64>,
    pub velocity: Option<f64>,
    pub velocity_unit: Option<String>,
    pub system_code: u8,
}

/// Map labels and clean units for every row; rows with unmapped movement
/// terms are excluded with a warning.
pub fn prepare_rows(rows: &[CdQRow]) -> (Vec<CleanRow>, Vec<FeatureWarning>) {
    let mut clean = Vec::new();
    let mut warnings = Vec::new();
    for row in rows {
        let raw_type = match row.movement.movement_type.known() {
            Some(t) => t.as_str(),
            None => {
                warnings.push(FeatureWarning::UnmappedLabel {
                    paper_id: row.paper_id.clone(),
                    group_id: row.group_id.clone(),
                    term: String::new(),
                });
                continue;
            }
        };
        let labels = match standardize_labels(raw_type) {
            Ok(labels) => labels,
            Err(term) => {
                warnings.push(FeatureWarning::UnmappedLabel {
                    paper_id: row.paper_id.clone(),
                    group_id: row.group_id.clone(),
                    term,
                });
                continue;
            }
        };

        let (amplitude, amplitude_class) = match row.measurement.amplitude_value.known_copied() {
            Some(v) => {
                let unit = row
                    .measurement
                    .amplitude_unit
                    .known()
                    .map(String::as_str)
                    .unwrap_or("");
                let (converted, class) = normalize_amplitude(v, unit);
                if class == UnitClass::Other && !unit.is_empty() {
                    warnings.push(FeatureWarning::UnknownAmplitudeUnit {
                        unit: unit.to_string(),
                    });
                }
                (Some(converted), class)
            }
            None => (None, UnitClass::Other),
        };

        let frequency_hz = row
            .measurement
            .frequency_value
            .known_copied()
            .and_then(clean_frequency);
        let latency_ms = row.measurement.latency_value.known_copied().and_then(|v| {
            let unit = row
                .measurement
                .latency_unit
                .known()
                .map(String::as_str)
                .unwrap_or("ms");
            clean_latency(v, unit)
        });
        // Velocity has no unit cleaner; carried as reported.
        let velocity = row.measurement.velocity_value.known_copied();
        let velocity_unit = row.measurement.velocity_unit.known().cloned();
        let system_code = row
            .measurement
            .measurement_system
            .known()
            .map(|s| encode_measurement_system(s))
            .unwrap_or(7);

        clean.push(CleanRow {
            paper_id: row.paper_id.clone(),
            group_id: row.group_id.clone(),
            labels,
            amplitude,
            amplitude_class,
            frequency_hz,
            latency_ms,
            velocity,
            velocity_unit,
            system_code,
        });
    }
    (clean, warnings)
}

/// Median of a non-empty slice; even counts average the middle pair.
fn median(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(|a, b| a.partial_cmp(b).expect("finite donor values"));
    let mid = values.len() / 2;
    if values.len() % 2 == 1 {
        Some(values[mid])
    } else {
        Some((values[mid - 1] + values[mid]) / 2.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum KinematicField {
    Amplitude,
    Frequency,
    Latency,
    Velocity,
}

impl KinematicField {
    const ALL: [KinematicField; 4] = [
        KinematicField::Amplitude,
        KinematicField::Frequency,
        KinematicField::Latency,
        KinematicField::Velocity,
    ];

    fn name(&self) -> &'static str {
        match self {
            KinematicField::Amplitude => "amplitude",
            KinematicField::Frequency => "frequency_hz",
            KinematicField::Latency => "latency_ms",
            KinematicField::Velocity => "velocity",
        }
    }

    fn get(&self, row: &CleanRow) -> Option<f64> {
        match self {
            KinematicField::Amplitude => row.amplitude,
            KinematicField::Frequency => row.frequency_hz,
            KinematicField::Latency => row.latency_ms,
            KinematicField::Velocity => row.velocity,
        }
    }

    fn set(&self, row: &mut CleanRow, value: f64) {
        match self {
            KinematicField::Amplitude => row.amplitude = Some(value),
            KinematicField::Frequency => row.frequency_hz = Some(value),
            KinematicField::Latency => row.latency_ms = Some(value),
            KinematicField::Velocity => row.velocity = Some(value),
        }
    }
}

/// A row with every surviving kinematic field filled in, plus the flags
/// saying which values were imputed.
#[derive(Debug, Clone, PartialEq)]
pub struct CompletedRow {
    pub row: CleanRow,
    pub imputed_amplitude: bool,
    pub imputed_frequency: bool,
    pub imputed_latency: bool,
    pub imputed_velocity: bool,
}

impl CompletedRow {
    fn imputed_flag(&self, field: KinematicField) -> bool {
        match field {
            KinematicField::Amplitude => self.imputed_amplitude,
            KinematicField::Frequency => self.imputed_frequency,
            KinematicField::Latency => self.imputed_latency,
            KinematicField::Velocity => self.imputed_velocity,
        }
    }

    fn set_imputed(&mut self, field: KinematicField) {
        match field {
            KinematicField::Amplitude => self.imputed_amplitude = true,
            KinematicField::Frequency => self.imputed_frequency = true,
            KinematicField::Latency => self.imputed_latency = true,
            KinematicField::Velocity => self.imputed_velocity = true,
        }
    }
}

/// Fill missing kinematic values with within-class medians.
///
/// The donor cohort for a record is every record sharing at least one of its
/// labels (each donor counted once); a record whose cohort has no value for
/// the field falls back to the global median. Fields with no value anywhere
/// are dropped and reported.
pub fn impute_by_class_median(
    rows: &[CleanRow],
) -> Result<(Vec<CompletedRow>, Vec<FeatureWarning>), FeatureError> {
    if rows.is_empty() {
        return Err(FeatureError::EmptyInput);
    }
    let mut warnings = Vec::new();
    let mut completed: Vec<CompletedRow> = rows
        .iter()
        .map(|row| CompletedRow {
            row: row.clone(),
            imputed_amplitude: false,
            imputed_frequency: false,
            imputed_latency: false,
            imputed_velocity: false,
        })
        .collect();

    for field in KinematicField::ALL {
        let global: Vec<f64> = rows.iter().filter_map(|r| field.get(r)).collect();
        if global.is_empty() {
            warnings.push(FeatureWarning::ColumnDropped {
                column: field.name().to_string(),
            });
            continue;
        }
        let global_median = median(&mut global.clone()).expect("non-empty");

        for item in completed.iter_mut() {
            if field.get(&item.row).is_some() {
                continue;
            }
            let labels = item.row.labels.as_array();
            // Donors: rows sharing any label, value present, counted once.
            let mut donors: Vec<f64> = rows
                .iter()
                .filter(|r| {
                    r.labels
                        .as_array()
                        .into_iter()
                        .zip(labels)
                        .any(|(a, b)| a && b)
                })
                .filter_map(|r| field.get(r))
                .collect();
            let fill = median(&mut donors).unwrap_or(global_median);
            field.set(&mut item.row, fill);
            item.set_imputed(field);
        }
    }
    Ok((completed, warnings))
}

// ---------------------------------------------------------------------------
// Feature matrix
// ---------------------------------------------------------------------------

/// Dense feature matrix with named columns; row order matches the input.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
    /// (paper_id, group_id) per row, aligned with `rows`.
    pub row_ids: Vec<(String, String)>,
}

impl FeatureMatrix {
    pub fn width(&self) -> usize {
        self.columns.len()
    }

    pub fn csv(&self) -> Result<String, csv::Error> {
        let mut writer = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["paper_id".to_string(), "group_id".to_string()];
        header.extend(self.columns.iter().cloned());
        writer.write_record(&header)?;
        for (id, row) in self.row_ids.iter().zip(&self.rows) {
            let mut record = vec![id.0.clone(), id.1.clone()];
            record.extend(row.iter().map(|v| format!("{v}")));
            writer.write_record(&record)?;
        }
        finish_csv(writer)
    }
}

/// Run the full preprocessing pipeline: cleaning, imputation, encodings.
///
/// Kinematic columns with no observed value anywhere are dropped (with their
/// imputation flags); the fixed column order is documented by the returned
/// header. Returns the matrix, the aligned label sets, and all warnings.
pub fn build_feature_matrix(
    rows: &[CdQRow],
) -> Result<(FeatureMatrix, Vec<LabelSet>, Vec<FeatureWarning>), FeatureError> {
    if rows.is_empty() {
        return Err(FeatureError::EmptyInput);
    }
    let (clean, mut warnings) = prepare_rows(rows);
    if clean.is_empty() {
        return Err(FeatureError::NoLabeledRows);
    }
    let (completed, impute_warnings) = impute_by_class_median(&clean)?;
    warnings.extend(impute_warnings);

    let dropped: BTreeSet<&str> = warnings
        .iter()
        .filter_map(|w| match w {
            FeatureWarning::ColumnDropped { column } => Some(column.as_str()),
            _ => None,
        })
        .collect();

    let kinematic_columns: Vec<KinematicField> = KinematicField::ALL
        .into_iter()
        .filter(|f| !dropped.contains(f.name()))
        .collect();

    let mut columns: Vec<String> = kinematic_columns
        .iter()
        .map(|f| f.name().to_string())
        .collect();
    columns.push("measurement_system".to_string());
    columns.extend(
        ["amplitude_unit_degrees", "amplitude_unit_mm", "amplitude_unit_cm"]
            .map(str::to_string),
    );
    columns.extend(kinematic_columns.iter().map(|f| format!("{}_imputed", f.name())));

    let mut matrix_rows = Vec::with_capacity(completed.len());
    let mut labels = Vec::with_capacity(completed.len());
    let mut row_ids = Vec::with_capacity(completed.len());
    for item in &completed {
        let mut row = Vec::with_capacity(columns.len());
        for field in &kinematic_columns {
            row.push(field.get(&item.row).expect("imputation filled surviving columns"));
        }
        row.push(item.row.system_code as f64);
        // Unit indicators reflect the reported unit; imputed amplitudes
        // stay all-zero.
        let one_hot = if item.imputed_amplitude {
            [0.0, 0.0, 0.0]
        } else {
            item.row.amplitude_class.one_hot()
        };
        row.extend(one_hot);
        for field in &kinematic_columns {
            row.push(if item.imputed_flag(*field) { 1.0 } else { 0.0 });
        }
        matrix_rows.push(row);
        labels.push(item.row.labels);
        row_ids.push((item.row.paper_id.clone(), item.row.group_id.clone()));
    }

    Ok((
        FeatureMatrix {
            columns,
            rows: matrix_rows,
            row_ids,
        },
        labels,
        warnings,
    ))
}
