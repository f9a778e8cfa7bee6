//! Acceptance suite: one test per criterion, each printing a pass line.
//!
//! Criterion 8 needs the published dataset; point `AHM_PUBLISHED_DATASET` at
//! a dataset manifest to enable it, otherwise it reports SKIP and passes
//! vacuously. Everything else is self-contained and fast.

mod common;

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use ahm_core::agreement::{cohen_kappa, icc_2_1};
use ahm_core::bridge::{correlation_p_value, fisher_ci, link_papers};
use ahm_core::classify::{
    binary_gradient, binary_loss, cross_validate, evaluate, predict, train_lr, train_mlp,
    CvConfig, LrHyperParams, MlpHyperParams, MlpNet, ModelKind,
};
use ahm_core::corpus::{filter_condition, load_corpus, partition_cd, Manifest};
use ahm_core::features::{
    build_feature_matrix, clean_frequency, clean_latency, normalize_amplitude,
    standardize_labels, LabelSet,
};
use ahm_core::hnsi::{
    cohort_band_distribution, cohort_hnsi, collect_observations, compare_band_distributions,
    normalize_score, paper_hnsi, Band, BandDistribution, ScaleObservation, ScaleRegistry,
};
use ahm_core::orchestrator::{run_pipeline, AuditLog, Scenario, StopReason, R_MAX};
use ahm_core::schema::{parse_extraction, serialize_extraction, Reported, TriState};

fn pass(criterion: usize, name: &str) {
    println!("ACCEPTANCE {criterion} ({name}): PASS");
}

// ---------------------------------------------------------------------------
// 1. Statistics oracles
// ---------------------------------------------------------------------------

fn kappa_contingency_oracle(pairs: &[(String, String)]) -> Option<f64> {
    let categories: Vec<String> = {
        let mut set = BTreeSet::new();
        for (a, b) in pairs {
            set.insert(a.clone());
            set.insert(b.clone());
        }
        set.into_iter().collect()
    };
    let k = categories.len();
    let index = |c: &str| categories.iter().position(|x| x == c).unwrap();
    let mut table = vec![vec![0usize; k]; k];
    for (a, b) in pairs {
        table[index(a)][index(b)] += 1;
    }
    let n = pairs.len() as f64;
    let p_o: f64 = (0..k).map(|i| table[i][i] as f64).sum::<f64>() / n;
    let p_e: f64 = (0..k)
        .map(|i| {
            let row: usize = table[i].iter().sum();
            let col: usize = (0..k).map(|j| table[j][i]).sum();
            (row as f64 / n) * (col as f64 / n)
        })
        .sum();
    if (1.0 - p_e).abs() < 1e-12 {
        return None;
    }
    Some((p_o - p_e) / (1.0 - p_e))
}

fn icc_anova_oracle(rows: &[[f64; 2]]) -> f64 {
    let n = rows.len() as f64;
    let grand: f64 = rows.iter().flatten().sum::<f64>() / (2.0 * n);
    let row_means: Vec<f64> = rows.iter().map(|r| (r[0] + r[1]) / 2.0).collect();
    let col_means = [
        rows.iter().map(|r| r[0]).sum::<f64>() / n,
        rows.iter().map(|r| r[1]).sum::<f64>() / n,
    ];
    let mut ss_error = 0.0;
    for (i, row) in rows.iter().enumerate() {
        for (j, &x) in row.iter().enumerate() {
            let residual = x - row_means[i] - col_means[j] + grand;
            ss_error += residual * residual;
        }
    }
    let ms_rows: f64 =
        row_means.iter().map(|m| 2.0 * (m - grand).powi(2)).sum::<f64>() / (n - 1.0);
    let ms_cols: f64 = col_means.iter().map(|m| n * (m - grand).powi(2)).sum();
    let ms_error = ss_error / (n - 1.0);
    (ms_rows - ms_error) / (ms_rows + ms_error + (2.0 / n) * (ms_cols - ms_error))
}

#[test]
fn criterion_1_statistics_oracles() {
    // Hand-derived kappa example: p_o = 0.7, p_e = 0.5, kappa = 0.4.
    let r1 = ["A", "A", "A", "A", "A", "B", "B", "B", "B", "B"];
    let r2 = ["A", "A", "A", "B", "B", "B", "B", "B", "A", "B"];
    let pairs: Vec<(String, String)> = r1
        .iter()
        .zip(r2)
        .map(|(a, b)| (a.to_string(), b.to_string()))
        .collect();
    let breakdown = cohen_kappa(&pairs).unwrap();
    assert!((breakdown.p_o - 0.7).abs() < 1e-12);
    assert!((breakdown.p_e - 0.5).abs() < 1e-12);
    assert!((breakdown.kappa - 0.4).abs() < 1e-12);

    // Hand-derived ICC example: constant +1 offset, ICC = 10/13.
    let ratings = [[1.0, 2.0], [2.0, 3.0], [3.0, 4.0], [4.0, 5.0]];
    let icc = icc_2_1(&ratings).unwrap().icc;
    assert!((icc - 10.0 / 13.0).abs() < 1e-9);

    // 100 random small instances against the independent oracles.
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..100 {
        let n = rng.gen_range(2..=6);
        let categories = ["a", "b", "c"];
        let pairs: Vec<(String, String)> = (0..n)
            .map(|_| {
                (
                    categories[rng.gen_range(0..3)].to_string(),
                    categories[rng.gen_range(0..3)].to_string(),
                )
            })
            .collect();
        match (cohen_kappa(&pairs), kappa_contingency_oracle(&pairs)) {
            (Ok(got), Some(expected)) => {
                assert!((got.kappa - expected).abs() < 1e-12, "{} vs {expected}", got.kappa)
            }
            (Ok(got), None) => assert!(got.degenerate),
            (Err(_), None) => {}
            (Err(e), Some(x)) => panic!("kappa errored ({e}) where oracle gives {x}"),
        }
    }
    for _ in 0..100 {
        let n = rng.gen_range(2..=5);
        let rows: Vec<[f64; 2]> = (0..n)
            .map(|_| [rng.gen_range(0.0..10.0), rng.gen_range(0.0..10.0)])
            .collect();
        let got = icc_2_1(&rows).unwrap();
        if !got.degenerate {
            let expected = icc_anova_oracle(&rows);
            assert!((got.icc - expected).abs() < 1e-9, "{} vs {expected}", got.icc);
        }
    }
    pass(1, "statistics oracles");
}

// ---------------------------------------------------------------------------
// 2. Correlation-table arithmetic
// ---------------------------------------------------------------------------

#[test]
fn criterion_2_correlation_table_arithmetic() {
    // Nine published (r, CI, p) rows at n = 24. p entries are either the
    // printed 3-decimal value or an upper bound.
    struct Row {
        r: f64,
        ci: (f64, f64),
        p: PExpectation,
    }
    enum PExpectation {
        Printed(f64),
        Below(f64),
    }
    use PExpectation::*;
    let rows = [
        Row { r: 0.578, ci: (0.23, 0.80), p: Printed(0.003) },
        Row { r: 0.530, ci: (0.16, 0.77), p: Printed(0.008) },
        Row { r: 0.450, ci: (0.06, 0.72), p: Printed(0.027) },
        Row { r: 0.532, ci: (0.16, 0.77), p: Printed(0.007) },
        Row { r: 0.595, ci: (0.25, 0.81), p: Printed(0.002) },
        Row { r: 0.457, ci: (0.07, 0.73), p: Printed(0.025) },
        Row { r: 0.760, ci: (0.51, 0.89), p: Below(0.001) },
        Row { r: 0.779, ci: (0.55, 0.90), p: Below(0.001) },
        Row { r: 0.740, ci: (0.48, 0.88), p: Below(0.001) },
    ];
    let n = 24;
    let round2 = |x: f64| (x * 100.0).round() / 100.0;
    for row in &rows {
        let (lo, hi) = fisher_ci(row.r, n, 0.95).unwrap();
        assert_eq!(round2(lo), row.ci.0, "r = {}: lo {lo}", row.r);
        assert_eq!(round2(hi), row.ci.1, "r = {}: hi {hi}", row.r);
        let p = correlation_p_value(row.r, n).unwrap();
        match row.p {
            Printed(expected) => {
                let round3 = (p * 1000.0).round() / 1000.0;
                assert_eq!(round3, expected, "r = {}: p {p}", row.r);
            }
            Below(bound) => assert!(p < bound, "r = {}: p {p}", row.r),
        }
    }
    pass(2, "correlation-table arithmetic at n = 24");
}

// ---------------------------------------------------------------------------
// 3. Severity-index unit behavior
// ---------------------------------------------------------------------------

#[test]
fn criterion_3_severity_index_unit_behavior() {
    let registry = ScaleRegistry::default();
    let twstrs = registry.find("TWSTRS").unwrap();
    assert!((normalize_score(20.0, twstrs).unwrap() - 0.5714).abs() < 1e-4);
    assert_eq!(normalize_score(-3.0, twstrs).unwrap(), 0.0);
    assert_eq!(normalize_score(40.0, twstrs).unwrap(), 1.0);

    // Band boundaries, half-open exactly at the thresholds.
    assert_eq!(Band::from_hnsi(0.33 - 1e-12), Band::Mild);
    assert_eq!(Band::from_hnsi(0.33), Band::Moderate);
    assert_eq!(Band::from_hnsi(0.66 - 1e-12), Band::Moderate);
    assert_eq!(Band::from_hnsi(0.66), Band::Severe);

    // Equal-weight multi-scale aggregation on randomized fixtures.
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    for _ in 0..50 {
        let scales = ["TWSTRS", "Tsui", "TRS", "GDRS"];
        let k = rng.gen_range(2..=4);
        let mut observations = Vec::new();
        let mut means = Vec::new();
        for scale in scales.iter().take(k) {
            let count = rng.gen_range(1..6);
            let values: Vec<f64> = (0..count).map(|_| rng.gen_range(0.0..1.0)).collect();
            means.push(values.iter().sum::<f64>() / count as f64);
            observations.extend(values.into_iter().map(|v| ScaleObservation {
                paper_id: "P".into(),
                scale_name: scale.to_string(),
                raw_score: v,
                normalized: v,
            }));
        }
        let paper = paper_hnsi("P", &observations).unwrap();
        let expected = means.iter().sum::<f64>() / k as f64;
        assert!((paper.hnsi - expected).abs() < 1e-12);
        assert_eq!(paper.k_scales, k);
    }
    pass(3, "severity-index unit behavior");
}

// ---------------------------------------------------------------------------
// 4. Severity-band validation harness
// ---------------------------------------------------------------------------

#[test]
fn criterion_4_band_validation_harness() {
    // Engineered external cohort: 1 mild, 27 moderate, 2 severe of 30.
    let mut external = vec![0.25];
    external.extend(std::iter::repeat_n(0.5, 27));
    external.extend([0.68, 0.72]);
    let literature = BandDistribution::from_values(&[0.2, 0.4, 0.5, 0.7]);
    let comparison = compare_band_distributions(&literature, &external).unwrap();

    let round1 = |x: f64| (x * 10.0).round() / 10.0;
    assert_eq!(round1(comparison.external.percentages[&Band::Mild]), 3.3);
    assert_eq!(round1(comparison.external.percentages[&Band::Moderate]), 90.0);
    assert_eq!(round1(comparison.external.percentages[&Band::Severe]), 6.7);
    assert!((comparison.severe_threshold_twstrs_raw - 23.1).abs() < 1e-9);
    pass(4, "severity-band validation harness");
}

// ---------------------------------------------------------------------------
// 5. Pipeline behavior over scripted backends
// ---------------------------------------------------------------------------

const PIPELINE_DOC: &str = r#"{"paper_id": "P1", "study_type": "case report",
    "groups": [{"group_id": "g1", "condition_name": "cervical dystonia"}]}"#;

fn uniform_report_json(score: f64) -> String {
    format!(
        r#"{{"scores": {{"completeness": {score}, "quantitative_accuracy": {score},
            "symptom_extraction": {score}, "head_movement_classification": {score},
            "schema_compliance": {score}, "edge_case_handling": {score}}},
            "high_severity_count": 0}}"#
    )
}

fn pipeline_scenario(evals_of_a: &[f64], evals_of_b: &[f64]) -> String {
    let list = |scores: &[f64]| {
        scores
            .iter()
            .map(|s| uniform_report_json(*s))
            .collect::<Vec<_>>()
            .join(",")
    };
    format!(
        r#"{{
            "backend_a": "alpha",
            "backend_b": "beta",
            "backends": {{
                "alpha": {{
                    "extractions": {{"P1": {PIPELINE_DOC}}},
                    "evaluations": {{"P1": [{evals_b}]}}
                }},
                "beta": {{
                    "extractions": {{"P1": {PIPELINE_DOC}}},
                    "evaluations": {{"P1": [{evals_a}]}}
                }}
            }}
        }}"#,
        evals_a = list(evals_of_a),
        evals_b = list(evals_of_b),
    )
}

fn run_scenario(text: &str) -> (ahm_core::orchestrator::PipelineResult, String) {
    let scenario = Scenario::from_json(text).unwrap();
    let (alpha, beta) = scenario.into_backends().unwrap();
    let mut audit = AuditLog::new();
    let result = run_pipeline("paper text", "P1", &alpha, &beta, R_MAX, &mut audit).unwrap();
    (result, audit.to_jsonl())
}

#[test]
fn criterion_5_pipeline_scenarios() {
    // Immediate excellent.
    let (result, _) = run_scenario(&pipeline_scenario(&[4.5], &[3.0]));
    assert_eq!(result.rounds_used, 1);
    assert_eq!(result.stop_reason, StopReason::Excellent);

    // Flat scores converge at round two.
    let (result, _) = run_scenario(&pipeline_scenario(&[3.0, 3.0, 3.0], &[3.0, 3.0, 3.0]));
    assert_eq!(result.rounds_used, 2);
    assert_eq!(result.stop_reason, StopReason::Converged);

    // Steady 0.3 improvement runs out the round budget.
    let (result, _) = run_scenario(&pipeline_scenario(&[3.0, 3.3, 3.6], &[3.0, 3.3, 3.6]));
    assert_eq!(result.rounds_used, 3);
    assert_eq!(result.stop_reason, StopReason::MaxRounds);

    // Tie-margin winner selection with mixed dimension scores:
    // A: weighted = .25*4.6+.25*4.5+.2*4+.2*4+.05*4+.05*4 = 4.275, overall 4.1833;
    // B: uniform 4.2 gives weighted = overall = 4.2.
    // |4.275 - 4.2| = 0.075 < 0.1 and overall_B > overall_A, so B wins.
    let scenario_text = format!(
        r#"{{
            "backend_a": "alpha",
            "backend_b": "beta",
            "backends": {{
                "alpha": {{
                    "extractions": {{"P1": {PIPELINE_DOC}}},
                    "evaluations": {{"P1": [{{"scores": {{"completeness": 4.2,
                        "quantitative_accuracy": 4.2, "symptom_extraction": 4.2,
                        "head_movement_classification": 4.2, "schema_compliance": 4.2,
                        "edge_case_handling": 4.2}}, "high_severity_count": 0}}]}}
                }},
                "beta": {{
                    "extractions": {{"P1": {PIPELINE_DOC}}},
                    "evaluations": {{"P1": [{{"scores": {{"completeness": 4.5,
                        "quantitative_accuracy": 4.0, "symptom_extraction": 4.0,
                        "head_movement_classification": 4.6, "schema_compliance": 4.0,
                        "edge_case_handling": 4.0}}, "high_severity_count": 0}}]}}
                }}
            }}
        }}"#
    );
    let (result, _) = run_scenario(&scenario_text);
    assert!((result.weighted_a - 4.275).abs() < 1e-9);
    assert!((result.weighted_b - 4.2).abs() < 1e-9);
    assert_eq!(result.winner_backend_id, "beta");

    // Reruns are byte-identical.
    let text = pipeline_scenario(&[3.0, 3.0], &[3.2, 3.2]);
    let (result_1, audit_1) = run_scenario(&text);
    let (result_2, audit_2) = run_scenario(&text);
    assert_eq!(
        serde_json::to_string(&result_1).unwrap(),
        serde_json::to_string(&result_2).unwrap()
    );
    assert_eq!(audit_1, audit_2);
    pass(5, "pipeline scenarios, tie-break, determinism");
}

// ---------------------------------------------------------------------------
// 6. Learner correctness
// ---------------------------------------------------------------------------

fn xor_dataset() -> (Vec<Vec<f64>>, Vec<LabelSet>) {
    let corners = [[1.0, 1.0], [1.0, -1.0], [-1.0, 1.0], [-1.0, -1.0]];
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for _ in 0..25 {
        for corner in corners {
            let xor = corner[0] * corner[1] < 0.0;
            rows.push(corner.to_vec());
            labels.push(LabelSet::from_array([xor, false, false, false, !xor]));
        }
    }
    (rows, labels)
}

fn separable_dataset(rng: &mut ChaCha8Rng) -> (Vec<Vec<f64>>, Vec<LabelSet>) {
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    while rows.len() < 60 {
        let mut flags = [false; 5];
        let row: Vec<f64> = (0..5)
            .map(|j| {
                let sign: f64 = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
                let magnitude = rng.gen_range(0.5..2.0);
                flags[j] = sign > 0.0;
                sign * magnitude
            })
            .collect();
        if flags.iter().any(|&f| f) {
            rows.push(row);
            labels.push(LabelSet::from_array(flags));
        }
    }
    (rows, labels)
}

#[test]
fn criterion_6_learner_correctness() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);

    // LR gradient vs central finite differences at random points.
    let rows: Vec<Vec<f64>> = (0..15)
        .map(|_| (0..3).map(|_| rng.gen_range(-2.0..2.0)).collect())
        .collect();
    let targets: Vec<f64> = (0..15).map(|i| (i % 2) as f64).collect();
    let sample_weights = vec![1.0; 15];
    for _ in 0..10 {
        let weights: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let bias = rng.gen_range(-1.0..1.0);
        let (grad_w, grad_b) =
            binary_gradient(&rows, &targets, &sample_weights, &weights, bias, 1.0);
        let step = 1e-5;
        for j in 0..3 {
            let mut plus = weights.clone();
            plus[j] += step;
            let mut minus = weights.clone();
            minus[j] -= step;
            let numeric = (binary_loss(&rows, &targets, &sample_weights, &plus, bias, 1.0)
                - binary_loss(&rows, &targets, &sample_weights, &minus, bias, 1.0))
                / (2.0 * step);
            let denom = numeric.abs().max(grad_w[j].abs()).max(1e-8);
            assert!(((numeric - grad_w[j]) / denom).abs() < 1e-4);
        }
        let numeric_b = (binary_loss(&rows, &targets, &sample_weights, &weights, bias + step, 1.0)
            - binary_loss(&rows, &targets, &sample_weights, &weights, bias - step, 1.0))
            / (2.0 * step);
        let denom = numeric_b.abs().max(grad_b.abs()).max(1e-8);
        assert!(((numeric_b - grad_b) / denom).abs() < 1e-4);
    }

    // MLP gradient vs central finite differences over all parameters.
    let mlp_rows: Vec<Vec<f64>> = (0..8)
        .map(|_| (0..3).map(|_| rng.gen_range(-1.5..1.5)).collect())
        .collect();
    let mlp_targets: Vec<[f64; 5]> = (0..8)
        .map(|i| {
            let mut t = [0.0; 5];
            t[i % 5] = 1.0;
            t
        })
        .collect();
    for trial in 0..10 {
        let mut net = MlpNet::init(3, 4, 900 + trial);
        for row in net.w1.iter_mut().chain(net.w2.iter_mut()) {
            for w in row.iter_mut() {
                *w += rng.gen_range(-0.4..0.4);
            }
        }
        let analytic = net.gradients(&mlp_rows, &mlp_targets);
        let step = 1e-5;
        let check = |plus: f64, minus: f64, expected: f64| {
            let numeric = (plus - minus) / (2.0 * step);
            let denom = numeric.abs().max(expected.abs()).max(1e-8);
            assert!(((numeric - expected) / denom).abs() < 1e-4, "{numeric} vs {expected}");
        };
        for h in 0..net.b1.len() {
            for j in 0..3 {
                let mut p = net.clone();
                p.w1[h][j] += step;
                let mut m = net.clone();
                m.w1[h][j] -= step;
                check(p.loss(&mlp_rows, &mlp_targets), m.loss(&mlp_rows, &mlp_targets), analytic.w1[h][j]);
            }
            let mut p = net.clone();
            p.b1[h] += step;
            let mut m = net.clone();
            m.b1[h] -= step;
            check(p.loss(&mlp_rows, &mlp_targets), m.loss(&mlp_rows, &mlp_targets), analytic.b1[h]);
        }
        for o in 0..5 {
            for h in 0..net.b1.len() {
                let mut p = net.clone();
                p.w2[o][h] += step;
                let mut m = net.clone();
                m.w2[o][h] -= step;
                check(p.loss(&mlp_rows, &mlp_targets), m.loss(&mlp_rows, &mlp_targets), analytic.w2[o][h]);
            }
            let mut p = net.clone();
            p.b2[o] += step;
            let mut m = net.clone();
            m.b2[o] -= step;
            check(p.loss(&mlp_rows, &mlp_targets), m.loss(&mlp_rows, &mlp_targets), analytic.b2[o]);
        }
    }

    // LR reaches training F1 = 1.0 on a separable set.
    let (sep_rows, sep_labels) = separable_dataset(&mut rng);
    let sep_all: Vec<usize> = (0..sep_rows.len()).collect();
    let lr_model = train_lr(&sep_rows, &sep_labels, &sep_all, LrHyperParams::default()).unwrap();
    let probs = lr_model.predict_proba(&sep_rows).unwrap();
    let predictions = predict(&probs, 0.5);
    let metrics = evaluate(&predictions, &probs, &sep_labels).unwrap();
    assert_eq!(metrics.macro_f1, 1.0, "separable macro F1");

    // XOR: LR is at chance by symmetry, the MLP exceeds 0.9 accuracy.
    let (xor_rows, xor_labels) = xor_dataset();
    let xor_all: Vec<usize> = (0..xor_rows.len()).collect();
    let lr_xor = train_lr(&xor_rows, &xor_labels, &xor_all, LrHyperParams::default()).unwrap();
    let lr_probs = lr_xor.predict_proba(&xor_rows).unwrap();
    // The symmetric optimum leaves both active heads exactly at 0.5.
    for probs in &lr_probs {
        assert!((probs[0] - 0.5).abs() < 1e-9);
        assert!((probs[4] - 0.5).abs() < 1e-9);
    }
    let lr_predictions = predict(&lr_probs, 0.5);
    let lr_metrics = evaluate(&lr_predictions, &lr_probs, &xor_labels).unwrap();
    assert_eq!(lr_metrics.exact_match_accuracy, 0.0);

    let mlp_hyper = MlpHyperParams {
        hidden: 16,
        learning_rate: 2.0,
        epochs: 4000,
        seed: 42,
    };
    let mlp_model = train_mlp(&xor_rows, &xor_labels, &xor_all, mlp_hyper).unwrap();
    let mlp_probs = mlp_model.predict_proba(&xor_rows).unwrap();
    let mlp_predictions = predict(&mlp_probs, 0.5);
    let mlp_metrics = evaluate(&mlp_predictions, &mlp_probs, &xor_labels).unwrap();
    assert!(
        mlp_metrics.exact_match_accuracy > 0.9,
        "MLP XOR accuracy {}",
        mlp_metrics.exact_match_accuracy
    );

    // Fixed-seed retraining is bit-reproducible.
    let again = train_mlp(&xor_rows, &xor_labels, &xor_all, mlp_hyper).unwrap();
    assert_eq!(mlp_model, again);
    let lr_again = train_lr(&sep_rows, &sep_labels, &sep_all, LrHyperParams::default()).unwrap();
    assert_eq!(lr_model, lr_again);
    pass(6, "learner gradients, separable LR, XOR MLP, reproducibility");
}

// ---------------------------------------------------------------------------
// 7. Preprocessing contracts
// ---------------------------------------------------------------------------

#[test]
fn criterion_7_preprocessing_contracts() {
    assert_eq!(normalize_amplitude(2.0, "cm").0, 20.0);
    assert_eq!(clean_latency(0.1, "s"), Some(100.0));
    assert_eq!(clean_frequency(15.0), None);
    assert_eq!(clean_frequency(0.5), None);
    assert_eq!(clean_frequency(5.0), Some(5.0));

    let torticollis = standardize_labels("spasmodic torticollis").unwrap();
    assert!(torticollis.torticollis && torticollis.count() == 1);
    let tremor = standardize_labels("oscillation").unwrap();
    assert!(tremor.head_tremor && tremor.count() == 1);

    // Determinism and idempotence of the full pipeline on a fixture.
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut rows = Vec::new();
    for i in 0..12 {
        let mut record = common::random_record(&mut rng, i);
        // Force usable movement rows.
        record.groups[0].causes_ahm = TriState::Yes;
        if let Some(movement) = record.groups[0].head_movement.as_mut() {
            movement.movement_type = Reported::Known(
                ["torticollis", "laterocollis", "head tremor"][i % 3].to_string(),
            );
        }
        rows.push(record);
    }
    let corpus = ahm_core::corpus::corpus_from_records(rows).unwrap();
    let partition = partition_cd(&filtered_or_all(&corpus));
    if partition.cd_q.len() >= 2 {
        let (m1, l1, _) = build_feature_matrix(&partition.cd_q).unwrap();
        let (m2, l2, _) = build_feature_matrix(&partition.cd_q).unwrap();
        assert_eq!(m1, m2);
        assert_eq!(l1, l2);
    }

    // Scalar cleaners are idempotent on clean values.
    let f = clean_frequency(4.5).unwrap();
    assert_eq!(clean_frequency(f), Some(f));
    let (a, _) = normalize_amplitude(3.0, "cm");
    assert_eq!(normalize_amplitude(a, "mm").0, a);
    pass(7, "preprocessing contracts");
}

fn filtered_or_all(corpus: &ahm_core::corpus::Corpus) -> ahm_core::corpus::Corpus {
    let filtered = filter_condition(corpus, "cervical dystonia");
    if filtered.is_empty() {
        corpus.clone()
    } else {
        filtered
    }
}

// ---------------------------------------------------------------------------
// 8. Published-dataset reproduction (optional)
// ---------------------------------------------------------------------------

#[test]
fn criterion_8_published_dataset_reproduction() {
    let Some(manifest_path) = std::env::var_os("AHM_PUBLISHED_DATASET") else {
        println!("ACCEPTANCE 8 (published-dataset reproduction): SKIP (set AHM_PUBLISHED_DATASET to run)");
        return;
    };
    let manifest = Manifest::load(std::path::Path::new(&manifest_path)).expect("manifest loads");
    let corpus = load_corpus(&manifest).expect("corpus loads");

    let cd = filter_condition(&corpus, "cervical dystonia");
    assert_eq!(cd.len(), 202, "CD papers");

    let partition = partition_cd(&cd);
    assert_eq!(partition.cd_q.len(), 113, "CD-Q rows");
    let cd_q_papers: BTreeSet<&str> =
        partition.cd_q.iter().map(|r| r.paper_id.as_str()).collect();
    assert_eq!(cd_q_papers.len(), 45, "CD-Q papers");
    assert_eq!(partition.cd_cs.len(), 809, "CD-CS rows");
    let cd_cs_papers: BTreeSet<&str> =
        partition.cd_cs.iter().map(|r| r.paper_id.as_str()).collect();
    assert_eq!(cd_cs_papers.len(), 137, "CD-CS papers");

    let scan = collect_observations(&partition.cd_cs, &ScaleRegistry::default()).unwrap();
    let papers = cohort_hnsi(&scan.observations).unwrap();
    assert_eq!(papers.len(), 66, "HNSI papers");
    let distribution = cohort_band_distribution(&papers).unwrap();
    for (band, expected) in [(Band::Mild, 47.0), (Band::Moderate, 42.0), (Band::Severe, 11.0)] {
        let got = distribution.percentages[&band];
        assert!(
            (got - expected).abs() <= 3.0,
            "{} share {got}% vs {expected}%",
            band.as_str()
        );
    }

    let (matrix, labels, _) = build_feature_matrix(&partition.cd_q).unwrap();
    let outcome = cross_validate(
        &matrix.rows,
        &labels,
        &CvConfig {
            model: ModelKind::LogisticRegression,
            ..CvConfig::default()
        },
    )
    .unwrap();
    let f1 = outcome.metrics.macro_f1;
    assert!((0.80..=0.90).contains(&f1), "LR pooled macro F1 {f1}");

    let probabilities: Vec<(String, [f64; 5])> = matrix
        .row_ids
        .iter()
        .zip(&outcome.probabilities)
        .map(|(id, p)| (id.0.clone(), *p))
        .collect();
    let pairs = link_papers(&probabilities, &papers).unwrap();
    assert_eq!(pairs.len(), 24, "bridge papers");
    pass(8, "published-dataset reproduction");
}

// ---------------------------------------------------------------------------
// 9. Schema round trip and NR semantics
// ---------------------------------------------------------------------------

#[test]
fn criterion_9_schema_round_trip_and_nr() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for index in 0..50 {
        let record = common::random_record(&mut rng, index);
        let text = serialize_extraction(&record).unwrap();
        let reparsed = parse_extraction(&text).unwrap();
        assert_eq!(reparsed, record, "record {index}");
    }

    // NR never coerces to zero, false, or empty.
    let record = parse_extraction(
        r#"{"paper_id": "P1", "total_sample_size": "NR",
            "groups": [{"group_id": "g", "n_patients": "NR", "causes_ahm": "NR",
                        "condition_name": "NR", "head_symptoms": "NR",
                        "measurement": {"measurement_performed": "NR",
                                        "frequency_value": "NR"}}]}"#,
    )
    .unwrap();
    assert_eq!(record.total_sample_size, Reported::NotReported);
    assert_ne!(record.total_sample_size, Reported::Known(0));
    let group = &record.groups[0];
    assert_ne!(group.n_patients, Reported::Known(0));
    assert_eq!(group.causes_ahm, TriState::NotReported);
    assert_ne!(group.condition_name, Reported::Known(String::new()));
    assert_eq!(group.head_symptoms, Reported::NotReported);
    let measurement = group.measurement.as_ref().unwrap();
    assert_eq!(measurement.measurement_performed, Reported::NotReported);
    assert_ne!(measurement.frequency_value, Reported::Known(0.0));
    // And the marker survives serialization verbatim.
    let text = serialize_extraction(&record).unwrap();
    assert!(text.contains("\"total_sample_size\": \"NR\""));
    pass(9, "schema round trip and NR semantics");
}
