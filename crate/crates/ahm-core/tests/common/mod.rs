//! Shared test helpers: a seeded generator of arbitrary extraction records.

use std::collections::BTreeSet;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use ahm_core::schema::{
    ClinicalScaleRecord, ConditionCategory, HeadMovement, PainAssessment, PatientGroup,
    QuantMeasurement, Reported, ScoreRange, StudyExtraction, StudyType, TriState,
};

const WORDS: &[&str] = &[
    "cervical dystonia",
    "essential tremor",
    "torticollis",
    "head tremor",
    "laterocollis",
    "anterocollis",
    "retrocollis",
    "Parkinson disease",
    "寝違え",
    "tortícolis",
    "blépharospasme",
    "neck pain",
    "mixed presentation",
];

fn maybe<T>(rng: &mut ChaCha8Rng, p: f64, value: impl FnOnce(&mut ChaCha8Rng) -> T) -> Reported<T> {
    if rng.gen_bool(p) {
        Reported::Known(value(rng))
    } else {
        Reported::NotReported
    }
}

fn word(rng: &mut ChaCha8Rng) -> String {
    WORDS[rng.gen_range(0..WORDS.len())].to_string()
}

fn decimal(rng: &mut ChaCha8Rng) -> f64 {
    // Plain decimals with up to 4 places, the shape real extractions carry.
    (rng.gen_range(0.0..500.0_f64) * 10_000.0).round() / 10_000.0
}

fn tri(rng: &mut ChaCha8Rng) -> TriState {
    match rng.gen_range(0..3) {
        0 => TriState::Yes,
        1 => TriState::No,
        _ => TriState::NotReported,
    }
}

fn symptom_set(rng: &mut ChaCha8Rng) -> BTreeSet<String> {
    let n = rng.gen_range(0..4);
    (0..n).map(|_| word(rng)).collect()
}

fn movement(rng: &mut ChaCha8Rng) -> HeadMovement {
    HeadMovement {
        movement_type: maybe(rng, 0.9, word),
        direction: maybe(rng, 0.5, word),
        laterality: maybe(rng, 0.5, word),
        degree: maybe(rng, 0.4, word),
        frequency_descriptor: maybe(rng, 0.4, word),
        consistency: maybe(rng, 0.4, word),
        pattern: maybe(rng, 0.4, word),
    }
}

fn measurement(rng: &mut ChaCha8Rng) -> QuantMeasurement {
    let with_unit = |rng: &mut ChaCha8Rng, unit: &str| {
        if rng.gen_bool(0.6) {
            (Reported::Known(decimal(rng)), Reported::Known(unit.to_string()))
        } else {
            (Reported::NotReported, Reported::NotReported)
        }
    };
    let (frequency_value, frequency_unit) = with_unit(rng, "Hz");
    let (velocity_value, velocity_unit) = with_unit(rng, "deg/s");
    let (amplitude_value, amplitude_unit) = with_unit(rng, "degrees");
    let (latency_value, latency_unit) = with_unit(rng, "ms");
    let amplitude_direction = if amplitude_value.is_known() {
        maybe(rng, 0.4, word)
    } else {
        Reported::NotReported
    };
    QuantMeasurement {
        measurement_performed: maybe(rng, 0.8, |rng| rng.gen_bool(0.7)),
        measurement_system: maybe(rng, 0.7, |rng| {
            ["EMG", "Accelerometer/IMU", "Motion capture", "MRI"][rng.gen_range(0..4)].to_string()
        }),
        measurement_location: maybe(rng, 0.3, word),
        frequency_value,
        frequency_unit,
        velocity_value,
        velocity_unit,
        amplitude_value,
        amplitude_unit,
        amplitude_direction,
        latency_value,
        latency_unit,
    }
}

fn pain(rng: &mut ChaCha8Rng) -> PainAssessment {
    let pain_present = tri(rng);
    let pain_severity = if pain_present == TriState::Yes && rng.gen_bool(0.6) {
        Reported::Known((rng.gen_range(0.0..10.0_f64) * 10.0).round() / 10.0)
    } else {
        Reported::NotReported
    };
    PainAssessment {
        pain_present,
        pain_severity,
        pain_severity_scale: maybe(rng, 0.3, |_| "VAS".to_string()),
        pain_location: maybe(rng, 0.3, word),
        pain_characteristics: maybe(rng, 0.3, word),
    }
}

fn scale(rng: &mut ChaCha8Rng) -> ClinicalScaleRecord {
    let names = ["TWSTRS", "Tsui", "TRS", "GDRS", "UPDRS"];
    let ranges = ["0-35", "0-20", "0-8", "0-10", "0 – 108", "not stated"];
    ClinicalScaleRecord {
        scale_name: maybe(rng, 0.9, |rng| names[rng.gen_range(0..names.len())].to_string()),
        scale_type: maybe(rng, 0.5, |_| "severity".to_string()),
        subscale: maybe(rng, 0.6, |rng| {
            ["Severity Scale (TSS)", "total", "head", "neck", "disability"][rng.gen_range(0..5)]
                .to_string()
        }),
        score_range: maybe(rng, 0.7, |rng| {
            ScoreRange::parse(ranges[rng.gen_range(0..ranges.len())])
        }),
        baseline_value: maybe(rng, 0.7, |rng| (rng.gen_range(0.0..35.0_f64) * 2.0).round() / 2.0),
        post_treatment_value: maybe(rng, 0.4, decimal),
        change_value: maybe(rng, 0.3, decimal),
        p_value: maybe(rng, 0.4, |rng| (rng.gen_range(0.0..1.0_f64) * 1000.0).round() / 1000.0),
        measurement_timepoint: maybe(rng, 0.4, |_| "baseline".to_string()),
    }
}

fn group(rng: &mut ChaCha8Rng, index: usize) -> PatientGroup {
    PatientGroup {
        group_id: format!("g{index}"),
        condition_name: maybe(rng, 0.95, word),
        condition_category: maybe(rng, 0.8, |rng| {
            if rng.gen_bool(0.5) {
                ConditionCategory::Disease
            } else {
                ConditionCategory::Disorder
            }
        }),
        n_patients: maybe(rng, 0.8, |rng| rng.gen_range(1..200u64)),
        age: maybe(rng, 0.4, |rng| format!("{}", rng.gen_range(18..90))),
        age_range: maybe(rng, 0.4, |rng| {
            format!("{}-{}", rng.gen_range(18..50), rng.gen_range(50..90))
        }),
        gender: maybe(rng, 0.3, |rng| {
            ["male", "female", "mixed"][rng.gen_range(0..3)].to_string()
        }),
        gender_distribution: maybe(rng, 0.3, |rng| {
            format!("{}M/{}F", rng.gen_range(0..50), rng.gen_range(0..50))
        }),
        causes_ahm: tri(rng),
        head_symptoms: maybe(rng, 0.7, symptom_set),
        general_symptoms: maybe(rng, 0.7, symptom_set),
        head_movement: rng.gen_bool(0.6).then(|| movement(rng)),
        measurement: rng.gen_bool(0.5).then(|| measurement(rng)),
        pain: rng.gen_bool(0.4).then(|| pain(rng)),
        eye_abnormalities: maybe(rng, 0.2, word),
        scales: {
            let n = rng.gen_range(0..4);
            (0..n).map(|_| scale(rng)).collect()
        },
    }
}

/// One arbitrary extraction record with the given paper index.
pub fn random_record(rng: &mut ChaCha8Rng, index: usize) -> StudyExtraction {
    let study_types = StudyType::ALL;
    let n_groups = rng.gen_range(1..4);
    StudyExtraction {
        paper_id: format!("P{index:03}"),
        study_title: maybe(rng, 0.8, |rng| format!("{} study of {}", word(rng), word(rng))),
        study_type: maybe(rng, 0.9, |rng| study_types[rng.gen_range(0..study_types.len())]),
        total_sample_size: maybe(rng, 0.7, |rng| rng.gen_range(1..500u64)),
        study_age_range: maybe(rng, 0.5, |rng| {
            format!("{}-{}", rng.gen_range(18..40), rng.gen_range(40..95))
        }),
        study_gender_distribution: maybe(rng, 0.5, |rng| {
            format!("{}% male", rng.gen_range(0..100))
        }),
        groups: (0..n_groups).map(|i| group(rng, i)).collect(),
    }
}
