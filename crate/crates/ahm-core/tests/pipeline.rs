//! End-to-end pipeline runs over scripted backends.

use ahm_core::orchestrator::{
    run_pipeline, AuditLog, Scenario, StopReason, R_MAX,
};

const MINIMAL_DOC: &str = r#"{"paper_id": "P1", "study_type": "case report",
    "groups": [{"group_id": "g1", "condition_name": "cervical dystonia"}]}"#;

fn uniform_report(score: f64, high_severity: u32) -> String {
    format!(
        r#"{{"scores": {{"completeness": {score}, "quantitative_accuracy": {score},
            "symptom_extraction": {score}, "head_movement_classification": {score},
            "schema_compliance": {score}, "edge_case_handling": {score}}},
            "high_severity_count": {high_severity}}}"#
    )
}

fn scenario_json(evals_a: &[f64], evals_b: &[f64]) -> String {
    let list = |scores: &[f64]| {
        scores
            .iter()
            .map(|s| uniform_report(*s, 0))
            .collect::<Vec<_>>()
            .join(",")
    };
    format!(
        r#"{{
            "backend_a": "alpha",
            "backend_b": "beta",
            "backends": {{
                "alpha": {{
                    "extractions": {{"P1": {MINIMAL_DOC}}},
                    "evaluations": {{"P1": [{evals_b}]}}
                }},
                "beta": {{
                    "extractions": {{"P1": {MINIMAL_DOC}}},
                    "evaluations": {{"P1": [{evals_a}]}}
                }}
            }}
        }}"#,
        evals_a = list(evals_a),
        evals_b = list(evals_b),
    )
}

#[test]
fn immediate_excellent_stops_in_one_round() {
    // Beta judges alpha's document at 4.5 with no issues: excellent on round
    // one, no refinement ever happens.
    let scenario = Scenario::from_json(&scenario_json(&[4.5], &[3.0])).unwrap();
    let (alpha, beta) = scenario.into_backends().unwrap();
    let mut audit = AuditLog::new();
    let result = run_pipeline("paper text", "P1", &alpha, &beta, R_MAX, &mut audit).unwrap();

    assert_eq!(result.rounds_used, 1);
    assert_eq!(result.stop_reason, StopReason::Excellent);
    assert_eq!(result.winner_backend_id, "alpha");
    assert!((result.weighted_a - 4.5).abs() < 1e-12);
    assert!((result.weighted_b - 3.0).abs() < 1e-12);
    assert_eq!(result.trace.len(), 1);
}

#[test]
fn flat_scores_converge_in_two_rounds() {
    // 3.0 every round on both sides: round two sees improvement 0.0 < 0.2.
    let scenario = Scenario::from_json(&scenario_json(&[3.0, 3.0, 3.0], &[3.0, 3.0, 3.0])).unwrap();
    let (alpha, beta) = scenario.into_backends().unwrap();
    let mut audit = AuditLog::new();
    let result = run_pipeline("paper text", "P1", &alpha, &beta, R_MAX, &mut audit).unwrap();

    assert_eq!(result.rounds_used, 2);
    assert_eq!(result.stop_reason, StopReason::Converged);
    // Equal weighted and overall scores fall to the first-listed backend.
    assert_eq!(result.winner_backend_id, "alpha");
}

#[test]
fn steady_improvement_runs_all_rounds() {
    // 3.0 -> 3.3 -> 3.6 on both sides: improvements of 0.3 never converge
    // and the scores never reach the acceptance thresholds.
    let scenario = Scenario::from_json(&scenario_json(
        &[3.0, 3.3, 3.6],
        &[3.0, 3.3, 3.6],
    ))
    .unwrap();
    let (alpha, beta) = scenario.into_backends().unwrap();
    let mut audit = AuditLog::new();
    let result = run_pipeline("paper text", "P1", &alpha, &beta, R_MAX, &mut audit).unwrap();

    assert_eq!(result.rounds_used, 3);
    assert_eq!(result.stop_reason, StopReason::MaxRounds);
    let weighted: Vec<f64> = result.trace.iter().map(|r| r.weighted_a).collect();
    assert!((weighted[0] - 3.0).abs() < 1e-12);
    assert!((weighted[1] - 3.3).abs() < 1e-12);
    assert!((weighted[2] - 3.6).abs() < 1e-12);
}

#[test]
fn reruns_are_byte_identical() {
    let scenario_text = scenario_json(&[3.0, 3.0], &[3.2, 3.2]);
    let run = |text: &str| {
        let scenario = Scenario::from_json(text).unwrap();
        let (alpha, beta) = scenario.into_backends().unwrap();
        let mut audit = AuditLog::new();
        let result = run_pipeline("paper text", "P1", &alpha, &beta, R_MAX, &mut audit).unwrap();
        (serde_json::to_string(&result).unwrap(), audit.to_jsonl())
    };
    let (result_1, audit_1) = run(&scenario_text);
    let (result_2, audit_2) = run(&scenario_text);
    assert_eq!(result_1, result_2);
    assert_eq!(audit_1, audit_2);
}

#[test]
fn trace_replay_reproduces_stop_reason() {
    use ahm_core::orchestrator::check_stop;

    for (evals_a, evals_b) in [
        (vec![4.5], vec![3.0]),
        (vec![3.0, 3.0, 3.0], vec![3.0, 3.0, 3.0]),
        (vec![3.0, 3.3, 3.6], vec![3.0, 3.3, 3.6]),
        (vec![4.1], vec![4.05]),
    ] {
        let scenario = Scenario::from_json(&scenario_json(&evals_a, &evals_b)).unwrap();
        let (alpha, beta) = scenario.into_backends().unwrap();
        let mut audit = AuditLog::new();
        let result = run_pipeline("text", "P1", &alpha, &beta, R_MAX, &mut audit).unwrap();

        // Replay the stop rule over the recorded trace.
        let mut replayed = None;
        for (i, scores) in result.trace.iter().enumerate() {
            let round = i + 1;
            let previous = if i > 0 { Some(&result.trace[i - 1]) } else { None };
            if let Some(reason) = check_stop(round, scores, previous) {
                replayed = Some(reason);
                break;
            }
            if round == R_MAX {
                replayed = Some(StopReason::MaxRounds);
            }
        }
        assert_eq!(replayed, Some(result.stop_reason));
        assert_eq!(result.trace.len(), result.rounds_used);
    }
}

#[test]
fn winner_document_must_parse() {
    // The winning "document" is not valid JSON for the record schema.
    let scenario_text = format!(
        r#"{{
            "backend_a": "alpha",
            "backend_b": "beta",
            "backends": {{
                "alpha": {{
                    "extractions": {{"P1": "not a record"}},
                    "evaluations": {{"P1": [{}]}}
                }},
                "beta": {{
                    "extractions": {{"P1": "also not a record"}},
                    "evaluations": {{"P1": [{}]}}
                }}
            }}
        }}"#,
        uniform_report(3.0, 0),
        uniform_report(4.5, 0),
    );
    let scenario = Scenario::from_json(&scenario_text).unwrap();
    let (alpha, beta) = scenario.into_backends().unwrap();
    let mut audit = AuditLog::new();
    let err = run_pipeline("text", "P1", &alpha, &beta, R_MAX, &mut audit).unwrap_err();
    assert!(err.to_string().contains("schema"), "{err}");
}

#[test]
fn winner_violating_record_invariants_is_rejected() {
    // Parses fine, but n_patients = 0 breaks a record invariant.
    let bad_doc = r#"{"paper_id": "P1", "study_type": "case report",
        "groups": [{"group_id": "g1", "n_patients": 0}]}"#;
    let scenario_text = format!(
        r#"{{
            "backend_a": "alpha",
            "backend_b": "beta",
            "backends": {{
                "alpha": {{
                    "extractions": {{"P1": {bad_doc}}},
                    "evaluations": {{"P1": [{}]}}
                }},
                "beta": {{
                    "extractions": {{"P1": {MINIMAL_DOC}}},
                    "evaluations": {{"P1": [{}]}}
                }}
            }}
        }}"#,
        uniform_report(3.0, 0),
        uniform_report(4.5, 0),
    );
    let scenario = Scenario::from_json(&scenario_text).unwrap();
    let (alpha, beta) = scenario.into_backends().unwrap();
    let mut audit = AuditLog::new();
    let err = run_pipeline("text", "P1", &alpha, &beta, R_MAX, &mut audit).unwrap_err();
    assert!(err.to_string().contains("n_patients"), "{err}");
}

#[test]
fn transport_failure_surfaces_backend_and_round() {
    let scenario_text = format!(
        r#"{{
            "backend_a": "alpha",
            "backend_b": "beta",
            "backends": {{
                "alpha": {{
                    "extractions": {{"P1": {{"error": "transport"}}}},
                    "evaluations": {{"P1": [{}]}}
                }},
                "beta": {{
                    "extractions": {{"P1": {MINIMAL_DOC}}},
                    "evaluations": {{"P1": [{}]}}
                }}
            }}
        }}"#,
        uniform_report(3.0, 0),
        uniform_report(3.0, 0),
    );
    let scenario = Scenario::from_json(&scenario_text).unwrap();
    let (alpha, beta) = scenario.into_backends().unwrap();
    let mut audit = AuditLog::new();
    let err = run_pipeline("text", "P1", &alpha, &beta, R_MAX, &mut audit).unwrap_err();
    let message = err.to_string();
    assert!(message.contains("alpha"), "{message}");
    assert!(message.contains("transport"), "{message}");
}

#[test]
fn inconsistent_report_rejected_after_one_retry() {
    // High-severity count of 2 with every dimension above 2 violates the
    // consistency rule; the scripted judge repeats the same bad report.
    let scenario_text = format!(
        r#"{{
            "backend_a": "alpha",
            "backend_b": "beta",
            "backends": {{
                "alpha": {{
                    "extractions": {{"P1": {MINIMAL_DOC}}},
                    "evaluations": {{"P1": [{}]}}
                }},
                "beta": {{
                    "extractions": {{"P1": {MINIMAL_DOC}}},
                    "evaluations": {{"P1": [{}]}}
                }}
            }}
        }}"#,
        uniform_report(4.0, 0),
        uniform_report(4.0, 2),
    );
    let scenario = Scenario::from_json(&scenario_text).unwrap();
    let (alpha, beta) = scenario.into_backends().unwrap();
    let mut audit = AuditLog::new();
    let err = run_pipeline("text", "P1", &alpha, &beta, R_MAX, &mut audit).unwrap_err();
    assert!(err.to_string().contains("high-severity"), "{err}");
}

#[test]
fn audit_log_has_one_line_per_phase() {
    let scenario = Scenario::from_json(&scenario_json(&[4.5], &[3.0])).unwrap();
    let (alpha, beta) = scenario.into_backends().unwrap();
    let mut audit = AuditLog::new();
    run_pipeline("text", "P1", &alpha, &beta, R_MAX, &mut audit).unwrap();
    // 2 extract + 2 evaluate + 1 select, no refinement in a 1-round run.
    assert_eq!(audit.events.len(), 5);
    let jsonl = audit.to_jsonl();
    assert_eq!(jsonl.lines().count(), 5);
    for line in jsonl.lines() {
        let value: serde_json::Value = serde_json::from_str(line).unwrap();
        assert_eq!(value["paper_id"], "P1");
    }
}
