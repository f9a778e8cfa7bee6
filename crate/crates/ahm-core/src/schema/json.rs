//! JSON interchange for extraction records.
//!
//! Parsing is strict: unknown fields are rejected with the offending field
//! name, type mismatches carry the dotted path, and scientific notation is
//! refused because source numbers are copied as plain decimals. Absent
//! optional fields, JSON `null`, and the literal string `"NR"` all read back
//! as not-reported; serialization always writes the explicit `"NR"` marker.

use std::collections::BTreeSet;

use serde_json::{Map, Number, Value};

use super::{
    ClinicalScaleRecord, ConditionCategory, HeadMovement, PainAssessment, PatientGroup,
    QuantMeasurement, Reported, SchemaError, ScoreRange, StudyExtraction, StudyType, TriState,
};

const NR: &str = "NR";

const STUDY_FIELDS: &[&str] = &[
    "paper_id",
    "study_title",
    "study_type",
    "total_sample_size",
    "study_age_range",
    "study_gender_distribution",
    "groups",
];

const GROUP_FIELDS: &[&str] = &[
    "group_id",
    "condition_name",
    "condition_category",
    "n_patients",
    "age",
    "age_range",
    "gender",
    "gender_distribution",
    "causes_ahm",
    "head_symptoms",
    "general_symptoms",
    "head_movement",
    "measurement",
    "pain",
    "eye_abnormalities",
    "scales",
];

const MOVEMENT_FIELDS: &[&str] = &[
    "type",
    "direction",
    "laterality",
    "degree",
    "frequency",
    "consistency",
    "pattern",
];

const MEASUREMENT_FIELDS: &[&str] = &[
    "measurement_performed",
    "measurement_system",
    "measurement_location",
    "frequency_value",
    "frequency_unit",
    "velocity_value",
    "velocity_unit",
    "amplitude_value",
    "amplitude_unit",
    "amplitude_direction",
    "latency_value",
    "latency_unit",
];

const PAIN_FIELDS: &[&str] = &[
    "pain_present",
    "pain_severity",
    "pain_severity_scale",
    "pain_location",
    "pain_characteristics",
];

const SCALE_FIELDS: &[&str] = &[
    "scale_name",
    "scale_type",
    "subscale",
    "score_range",
    "baseline_value",
    "post_treatment_value",
    "change_value",
    "p_value",
    "measurement_timepoint",
];

/// Parse one UTF-8 JSON record into a [`StudyExtraction`].
pub fn parse_extraction(text: &str) -> Result<StudyExtraction, SchemaError> {
    let value: Value = serde_json::from_str(text).map_err(|e| SchemaError::Malformed {
        detail: e.to_string(),
    })?;
    study_from_value(&value, "$")
}

/// Parse a corpus file: either a single JSON record or one record per line.
pub fn parse_corpus_text(text: &str) -> Result<Vec<StudyExtraction>, SchemaError> {
    let trimmed = text.trim();
    if trimmed.is_empty() {
        return Ok(Vec::new());
    }
    if let Ok(record) = parse_extraction(trimmed) {
        return Ok(vec![record]);
    }
    let mut records = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let record = parse_extraction(line).map_err(|e| SchemaError::Malformed {
            detail: format!("line {}: {e}", lineno + 1),
        })?;
        records.push(record);
    }
    Ok(records)
}

/// Serialize one record as pretty-printed JSON with a trailing newline.
pub fn serialize_extraction(record: &StudyExtraction) -> Result<String, SchemaError> {
    let value = study_to_value(record)?;
    let mut text = serde_json::to_string_pretty(&value).map_err(|e| SchemaError::Malformed {
        detail: e.to_string(),
    })?;
    text.push('\n');
    Ok(text)
}

/// Serialize one record as a single JSON line (no trailing newline).
pub fn serialize_extraction_compact(record: &StudyExtraction) -> Result<String, SchemaError> {
    let value = study_to_value(record)?;
    serde_json::to_string(&value).map_err(|e| SchemaError::Malformed {
        detail: e.to_string(),
    })
}

/// Serialize a corpus as one compact record per line.
pub fn serialize_corpus_lines(records: &[StudyExtraction]) -> Result<String, SchemaError> {
    let mut out = String::new();
    for record in records {
        out.push_str(&serialize_extraction_compact(record)?);
        out.push('\n');
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Value -> record
// ---------------------------------------------------------------------------

fn study_from_value(value: &Value, path: &str) -> Result<StudyExtraction, SchemaError> {
    let map = as_object(value, path)?;
    reject_unknown(map, STUDY_FIELDS, path)?;

    let paper_id = required_string(map, "paper_id", path)?;
    let groups_value = map.get("groups");
    let mut groups = Vec::new();
    if let Some(gv) = groups_value {
        let arr = as_array(gv, &format!("{path}.groups"))?;
        for (i, gv) in arr.iter().enumerate() {
            groups.push(group_from_value(gv, &format!("{path}.groups[{i}]"))?);
        }
    }

    Ok(StudyExtraction {
        paper_id,
        study_title: reported_string(map, "study_title", path)?,
        study_type: reported_study_type(map, path)?,
        total_sample_size: reported_u64(map, "total_sample_size", path)?,
        study_age_range: reported_string(map, "study_age_range", path)?,
        study_gender_distribution: reported_string(map, "study_gender_distribution", path)?,
        groups,
    })
}

fn group_from_value(value: &Value, path: &str) -> Result<PatientGroup, SchemaError> {
    let map = as_object(value, path)?;
    reject_unknown(map, GROUP_FIELDS, path)?;

    let mut scales = Vec::new();
    if let Some(sv) = map.get("scales") {
        if !is_missing(sv) {
            let arr = as_array(sv, &format!("{path}.scales"))?;
            for (i, sv) in arr.iter().enumerate() {
                scales.push(scale_from_value(sv, &format!("{path}.scales[{i}]"))?);
            }
        }
    }

    Ok(PatientGroup {
        group_id: required_string(map, "group_id", path)?,
        condition_name: reported_string(map, "condition_name", path)?,
        condition_category: reported_condition_category(map, path)?,
        n_patients: reported_u64(map, "n_patients", path)?,
        age: reported_string(map, "age", path)?,
        age_range: reported_string(map, "age_range", path)?,
        gender: reported_string(map, "gender", path)?,
        gender_distribution: reported_string(map, "gender_distribution", path)?,
        causes_ahm: tri_state(map, "causes_ahm", path)?,
        head_symptoms: reported_string_set(map, "head_symptoms", path)?,
        general_symptoms: reported_string_set(map, "general_symptoms", path)?,
        head_movement: sub_object(map, "head_movement", path, movement_from_value)?,
        measurement: sub_object(map, "measurement", path, measurement_from_value)?,
        pain: sub_object(map, "pain", path, pain_from_value)?,
        eye_abnormalities: reported_string(map, "eye_abnormalities", path)?,
        scales,
    })
}

fn movement_from_value(value: &Value, path: &str) -> Result<HeadMovement, SchemaError> {
    let map = as_object(value, path)?;
    reject_unknown(map, MOVEMENT_FIELDS, path)?;
    Ok(HeadMovement {
        movement_type: reported_string(map, "type", path)?,
        direction: reported_string(map, "direction", path)?,
        laterality: reported_string(map, "laterality", path)?,
        degree: reported_string(map, "degree", path)?,
        frequency_descriptor: reported_string(map, "frequency", path)?,
        consistency: reported_string(map, "consistency", path)?,
        pattern: reported_string(map, "pattern", path)?,
    })
}

fn measurement_from_value(value: &Value, path: &str) -> Result<QuantMeasurement, SchemaError> {
    let map = as_object(value, path)?;
    reject_unknown(map, MEASUREMENT_FIELDS, path)?;
    Ok(QuantMeasurement {
        measurement_performed: reported_bool(map, "measurement_performed", path)?,
        measurement_system: reported_string(map, "measurement_system", path)?,
        measurement_location: reported_string(map, "measurement_location", path)?,
        frequency_value: reported_f64(map, "frequency_value", path)?,
        frequency_unit: reported_string(map, "frequency_unit", path)?,
        velocity_value: reported_f64(map, "velocity_value", path)?,
        velocity_unit: reported_string(map, "velocity_unit", path)?,
        amplitude_value: reported_f64(map, "amplitude_value", path)?,
        amplitude_unit: reported_string(map, "amplitude_unit", path)?,
        amplitude_direction: reported_string(map, "amplitude_direction", path)?,
        latency_value: reported_f64(map, "latency_value", path)?,
        latency_unit: reported_string(map, "latency_unit", path)?,
    })
}

fn pain_from_value(value: &Value, path: &str) -> Result<PainAssessment, SchemaError> {
    let map = as_object(value, path)?;
    reject_unknown(map, PAIN_FIELDS, path)?;
    Ok(PainAssessment {
        pain_present: tri_state(map, "pain_present", path)?,
        pain_severity: reported_f64(map, "pain_severity", path)?,
        pain_severity_scale: reported_string(map, "pain_severity_scale", path)?,
        pain_location: reported_string(map, "pain_location", path)?,
        pain_characteristics: reported_string(map, "pain_characteristics", path)?,
    })
}

fn scale_from_value(value: &Value, path: &str) -> Result<ClinicalScaleRecord, SchemaError> {
    let map = as_object(value, path)?;
    reject_unknown(map, SCALE_FIELDS, path)?;
    let score_range = match map.get("score_range") {
        None => Reported::NotReported,
        Some(v) if is_missing(v) => Reported::NotReported,
        Some(Value::String(s)) => Reported::Known(ScoreRange::parse(s)),
        Some(other) => {
            return Err(type_mismatch(
                &format!("{path}.score_range"),
                "string of the form lo-hi or \"NR\"",
                other,
            ))
        }
    };
    Ok(ClinicalScaleRecord {
        scale_name: reported_string(map, "scale_name", path)?,
        scale_type: reported_string(map, "scale_type", path)?,
        subscale: reported_string(map, "subscale", path)?,
        score_range,
        baseline_value: reported_f64(map, "baseline_value", path)?,
        post_treatment_value: reported_f64(map, "post_treatment_value", path)?,
        change_value: reported_f64(map, "change_value", path)?,
        p_value: reported_f64(map, "p_value", path)?,
        measurement_timepoint: reported_string(map, "measurement_timepoint", path)?,
    })
}

// ---------------------------------------------------------------------------
// Field readers
// ---------------------------------------------------------------------------

fn as_object<'a>(value: &'a Value, path: &str) -> Result<&'a Map<String, Value>, SchemaError> {
    value
        .as_object()
        .ok_or_else(|| type_mismatch(path, "object", value))
}

fn as_array<'a>(value: &'a Value, path: &str) -> Result<&'a Vec<Value>, SchemaError> {
    value
        .as_array()
        .ok_or_else(|| type_mismatch(path, "array", value))
}

fn reject_unknown(
    map: &Map<String, Value>,
    allowed: &[&str],
    path: &str,
) -> Result<(), SchemaError> {
    for key in map.keys() {
        if !allowed.contains(&key.as_str()) {
            return Err(SchemaError::UnknownField {
                path: path.to_string(),
                field: key.clone(),
            });
        }
    }
    Ok(())
}

/// `null` and the literal `"NR"` both mean not-reported on input.
fn is_missing(value: &Value) -> bool {
    matches!(value, Value::Null) || matches!(value, Value::String(s) if s == NR)
}

fn required_string(
    map: &Map<String, Value>,
    key: &str,
    path: &str,
) -> Result<String, SchemaError> {
    match map.get(key) {
        None => Err(SchemaError::MissingField {
            path: path.to_string(),
            field: key.to_string(),
        }),
        Some(Value::String(s)) => Ok(s.clone()),
        Some(other) => Err(type_mismatch(&format!("{path}.{key}"), "string", other)),
    }
}

fn reported_string(
    map: &Map<String, Value>,
    key: &str,
    path: &str,
) -> Result<Reported<String>, SchemaError> {
    match map.get(key) {
        None => Ok(Reported::NotReported),
        Some(v) if is_missing(v) => Ok(Reported::NotReported),
        Some(Value::String(s)) => Ok(Reported::Known(s.clone())),
        Some(other) => Err(type_mismatch(&format!("{path}.{key}"), "string or \"NR\"", other)),
    }
}

fn reported_bool(
    map: &Map<String, Value>,
    key: &str,
    path: &str,
) -> Result<Reported<bool>, SchemaError> {
    match map.get(key) {
        None => Ok(Reported::NotReported),
        Some(v) if is_missing(v) => Ok(Reported::NotReported),
        Some(Value::Bool(b)) => Ok(Reported::Known(*b)),
        Some(other) => Err(type_mismatch(&format!("{path}.{key}"), "boolean or \"NR\"", other)),
    }
}

fn reported_u64(
    map: &Map<String, Value>,
    key: &str,
    path: &str,
) -> Result<Reported<u64>, SchemaError> {
    match map.get(key) {
        None => Ok(Reported::NotReported),
        Some(v) if is_missing(v) => Ok(Reported::NotReported),
        Some(Value::Number(n)) => {
            let field_path = format!("{path}.{key}");
            reject_scientific(n, &field_path)?;
            n.as_u64().map(Reported::Known).ok_or_else(|| {
                type_mismatch(&field_path, "nonnegative integer", &Value::Number(n.clone()))
            })
        }
        Some(other) => Err(type_mismatch(
            &format!("{path}.{key}"),
            "nonnegative integer or \"NR\"",
            other,
        )),
    }
}

fn reported_f64(
    map: &Map<String, Value>,
    key: &str,
    path: &str,
) -> Result<Reported<f64>, SchemaError> {
    match map.get(key) {
        None => Ok(Reported::NotReported),
        Some(v) if is_missing(v) => Ok(Reported::NotReported),
        Some(Value::Number(n)) => {
            let field_path = format!("{path}.{key}");
            reject_scientific(n, &field_path)?;
            let parsed = n.to_string().parse::<f64>().ok().filter(|v| v.is_finite());
            parsed.map(Reported::Known).ok_or_else(|| {
                type_mismatch(&field_path, "finite number", &Value::Number(n.clone()))
            })
        }
        Some(other) => Err(type_mismatch(&format!("{path}.{key}"), "number or \"NR\"", other)),
    }
}

/// Source numbers are copied as written; exponent forms signal a conversion
/// artifact and are rejected outright.
fn reject_scientific(n: &Number, path: &str) -> Result<(), SchemaError> {
    let token = n.to_string();
    if token.contains(['e', 'E']) {
        return Err(SchemaError::ScientificNotation {
            path: path.to_string(),
            token,
        });
    }
    Ok(())
}

fn tri_state(map: &Map<String, Value>, key: &str, path: &str) -> Result<TriState, SchemaError> {
    match map.get(key) {
        None => Ok(TriState::NotReported),
        Some(v) if is_missing(v) => Ok(TriState::NotReported),
        Some(Value::Bool(true)) => Ok(TriState::Yes),
        Some(Value::Bool(false)) => Ok(TriState::No),
        Some(Value::String(s)) => match s.trim().to_lowercase().as_str() {
            "yes" => Ok(TriState::Yes),
            "no" => Ok(TriState::No),
            _ => Err(type_mismatch(
                &format!("{path}.{key}"),
                "\"yes\", \"no\", or \"NR\"",
                &Value::String(s.clone()),
            )),
        },
        Some(other) => Err(type_mismatch(
            &format!("{path}.{key}"),
            "\"yes\", \"no\", or \"NR\"",
            other,
        )),
    }
}

fn reported_string_set(
    map: &Map<String, Value>,
    key: &str,
    path: &str,
) -> Result<Reported<BTreeSet<String>>, SchemaError> {
    match map.get(key) {
        None => Ok(Reported::NotReported),
        Some(v) if is_missing(v) => Ok(Reported::NotReported),
        Some(Value::Array(items)) => {
            let mut set = BTreeSet::new();
            for (i, item) in items.iter().enumerate() {
                match item {
                    Value::String(s) => {
                        set.insert(s.clone());
                    }
                    other => {
                        return Err(type_mismatch(
                            &format!("{path}.{key}[{i}]"),
                            "string",
                            other,
                        ))
                    }
                }
            }
            Ok(Reported::Known(set))
        }
        Some(other) => Err(type_mismatch(
            &format!("{path}.{key}"),
            "array of strings or \"NR\"",
            other,
        )),
    }
}

fn reported_study_type(
    map: &Map<String, Value>,
    path: &str,
) -> Result<Reported<StudyType>, SchemaError> {
    match reported_string(map, "study_type", path)? {
        Reported::NotReported => Ok(Reported::NotReported),
        Reported::Known(name) => StudyType::from_name(&name)
            .map(Reported::Known)
            .ok_or_else(|| {
                type_mismatch(
                    &format!("{path}.study_type"),
                    "one of the study-type names",
                    &Value::String(name),
                )
            }),
    }
}

fn reported_condition_category(
    map: &Map<String, Value>,
    path: &str,
) -> Result<Reported<ConditionCategory>, SchemaError> {
    match reported_string(map, "condition_category", path)? {
        Reported::NotReported => Ok(Reported::NotReported),
        Reported::Known(name) => ConditionCategory::from_name(&name)
            .map(Reported::Known)
            .ok_or_else(|| {
                type_mismatch(
                    &format!("{path}.condition_category"),
                    "\"disease\" or \"disorder\"",
                    &Value::String(name),
                )
            }),
    }
}

fn sub_object<T>(
    map: &Map<String, Value>,
    key: &str,
    path: &str,
    parse: impl FnOnce(&Value, &str) -> Result<T, SchemaError>,
) -> Result<Option<T>, SchemaError> {
    match map.get(key) {
        None => Ok(None),
        Some(v) if is_missing(v) => Ok(None),
        Some(v) => parse(v, &format!("{path}.{key}")).map(Some),
    }
}

fn type_mismatch(path: &str, expected: &str, found: &Value) -> SchemaError {
    let found = match found {
        Value::Null => "null".to_string(),
        Value::Bool(_) => "boolean".to_string(),
        Value::Number(n) => format!("number `{n}`"),
        Value::String(s) => format!("string `{s}`"),
        Value::Array(_) => "array".to_string(),
        Value::Object(_) => "object".to_string(),
    };
    SchemaError::TypeMismatch {
        path: path.to_string(),
        expected: expected.to_string(),
        found,
    }
}

// ---------------------------------------------------------------------------
// Record -> Value
// ---------------------------------------------------------------------------

fn study_to_value(record: &StudyExtraction) -> Result<Value, SchemaError> {
    let mut map = Map::new();
    map.insert("paper_id".into(), Value::String(record.paper_id.clone()));
    map.insert("study_title".into(), string_field(&record.study_title));
    map.insert(
        "study_type".into(),
        match &record.study_type {
            Reported::Known(t) => Value::String(t.as_str().to_string()),
            Reported::NotReported => nr(),
        },
    );
    map.insert(
        "total_sample_size".into(),
        match record.total_sample_size {
            Reported::Known(n) => Value::Number(Number::from(n)),
            Reported::NotReported => nr(),
        },
    );
    map.insert("study_age_range".into(), string_field(&record.study_age_range));
    map.insert(
        "study_gender_distribution".into(),
        string_field(&record.study_gender_distribution),
    );
    let groups = record
        .groups
        .iter()
        .map(group_to_value)
        .collect::<Result<Vec<_>, _>>()?;
    map.insert("groups".into(), Value::Array(groups));
    Ok(Value::Object(map))
}

fn group_to_value(group: &PatientGroup) -> Result<Value, SchemaError> {
    let mut map = Map::new();
    map.insert("group_id".into(), Value::String(group.group_id.clone()));
    map.insert("condition_name".into(), string_field(&group.condition_name));
    map.insert(
        "condition_category".into(),
        match &group.condition_category {
            Reported::Known(c) => Value::String(c.as_str().to_string()),
            Reported::NotReported => nr(),
        },
    );
    map.insert(
        "n_patients".into(),
        match group.n_patients {
            Reported::Known(n) => Value::Number(Number::from(n)),
            Reported::NotReported => nr(),
        },
    );
    map.insert("age".into(), string_field(&group.age));
    map.insert("age_range".into(), string_field(&group.age_range));
    map.insert("gender".into(), string_field(&group.gender));
    map.insert("gender_distribution".into(), string_field(&group.gender_distribution));
    map.insert("causes_ahm".into(), Value::String(group.causes_ahm.as_str().into()));
    map.insert("head_symptoms".into(), set_field(&group.head_symptoms));
    map.insert("general_symptoms".into(), set_field(&group.general_symptoms));
    if let Some(movement) = &group.head_movement {
        map.insert("head_movement".into(), movement_to_value(movement));
    }
    if let Some(measurement) = &group.measurement {
        map.insert("measurement".into(), measurement_to_value(measurement)?);
    }
    if let Some(pain) = &group.pain {
        map.insert("pain".into(), pain_to_value(pain)?);
    }
    map.insert("eye_abnormalities".into(), string_field(&group.eye_abnormalities));
    let scales = group
        .scales
        .iter()
        .map(scale_to_value)
        .collect::<Result<Vec<_>, _>>()?;
    map.insert("scales".into(), Value::Array(scales));
    Ok(Value::Object(map))
}

fn movement_to_value(movement: &HeadMovement) -> Value {
    let mut map = Map::new();
    map.insert("type".into(), string_field(&movement.movement_type));
    map.insert("direction".into(), string_field(&movement.direction));
    map.insert("laterality".into(), string_field(&movement.laterality));
    map.insert("degree".into(), string_field(&movement.degree));
    map.insert("frequency".into(), string_field(&movement.frequency_descriptor));
    map.insert("consistency".into(), string_field(&movement.consistency));
    map.insert("pattern".into(), string_field(&movement.pattern));
    Value::Object(map)
}

fn measurement_to_value(m: &QuantMeasurement) -> Result<Value, SchemaError> {
    let mut map = Map::new();
    map.insert(
        "measurement_performed".into(),
        match m.measurement_performed {
            Reported::Known(b) => Value::Bool(b),
            Reported::NotReported => nr(),
        },
    );
    map.insert("measurement_system".into(), string_field(&m.measurement_system));
    map.insert("measurement_location".into(), string_field(&m.measurement_location));
    map.insert("frequency_value".into(), number_field(&m.frequency_value, "frequency_value")?);
    map.insert("frequency_unit".into(), string_field(&m.frequency_unit));
    map.insert("velocity_value".into(), number_field(&m.velocity_value, "velocity_value")?);
    map.insert("velocity_unit".into(), string_field(&m.velocity_unit));
    map.insert("amplitude_value".into(), number_field(&m.amplitude_value, "amplitude_value")?);
    map.insert("amplitude_unit".into(), string_field(&m.amplitude_unit));
    map.insert("amplitude_direction".into(), string_field(&m.amplitude_direction));
    map.insert("latency_value".into(), number_field(&m.latency_value, "latency_value")?);
    map.insert("latency_unit".into(), string_field(&m.latency_unit));
    Ok(Value::Object(map))
}

fn pain_to_value(pain: &PainAssessment) -> Result<Value, SchemaError> {
    let mut map = Map::new();
    map.insert("pain_present".into(), Value::String(pain.pain_present.as_str().into()));
    map.insert("pain_severity".into(), number_field(&pain.pain_severity, "pain_severity")?);
    map.insert("pain_severity_scale".into(), string_field(&pain.pain_severity_scale));
    map.insert("pain_location".into(), string_field(&pain.pain_location));
    map.insert("pain_characteristics".into(), string_field(&pain.pain_characteristics));
    Ok(Value::Object(map))
}

fn scale_to_value(scale: &ClinicalScaleRecord) -> Result<Value, SchemaError> {
    let mut map = Map::new();
    map.insert("scale_name".into(), string_field(&scale.scale_name));
    map.insert("scale_type".into(), string_field(&scale.scale_type));
    map.insert("subscale".into(), string_field(&scale.subscale));
    map.insert(
        "score_range".into(),
        match &scale.score_range {
            Reported::Known(r) => Value::String(r.raw.clone()),
            Reported::NotReported => nr(),
        },
    );
    map.insert("baseline_value".into(), number_field(&scale.baseline_value, "baseline_value")?);
    map.insert(
        "post_treatment_value".into(),
        number_field(&scale.post_treatment_value, "post_treatment_value")?,
    );
    map.insert("change_value".into(), number_field(&scale.change_value, "change_value")?);
    map.insert("p_value".into(), number_field(&scale.p_value, "p_value")?);
    map.insert("measurement_timepoint".into(), string_field(&scale.measurement_timepoint));
    Ok(Value::Object(map))
}

fn nr() -> Value {
    Value::String(NR.to_string())
}

fn string_field(field: &Reported<String>) -> Value {
    match field {
        Reported::Known(s) => Value::String(s.clone()),
        Reported::NotReported => nr(),
    }
}

fn set_field(field: &Reported<BTreeSet<String>>) -> Value {
    match field {
        Reported::Known(set) => {
            Value::Array(set.iter().map(|s| Value::String(s.clone())).collect())
        }
        Reported::NotReported => nr(),
    }
}

/// Emit a float as a plain decimal token. Rust's `Display` for `f64` never
/// uses exponent form and produces the shortest string that parses back to
/// the same value, so the round trip is exact.
fn number_field(field: &Reported<f64>, name: &str) -> Result<Value, SchemaError> {
    match field {
        Reported::NotReported => Ok(nr()),
        Reported::Known(v) => {
            if !v.is_finite() {
                return Err(SchemaError::NonFiniteValue {
                    path: name.to_string(),
                });
            }
            let token = format!("{v}");
            let number: Number =
                serde_json::from_str(&token).map_err(|e| SchemaError::Malformed {
                    detail: format!("number token `{token}`: {e}"),
                })?;
            Ok(Value::Number(number))
        }
    }
}
