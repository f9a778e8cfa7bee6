//! Dual-backend extraction with cross-evaluation and bounded refinement.
//!
//! Two extractor backends each produce a candidate document; each round the
//! documents are cross-judged (A's output scored by B and vice versa, blind
//! to the source text), weighted scores are computed, the stop rule is
//! checked, and otherwise each document is refined with its own feedback.
//! After at most `R_MAX` rounds the higher-scoring document wins, with an
//! overall-score tie-break inside a 0.1 margin.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::schema;

/// Maximum refinement rounds.
pub const R_MAX: usize = 3;
/// Weighted score at which a single extraction is excellent.
pub const EXCELLENT_SCORE: f64 = 4.2;
/// Weighted score both extractions must reach to stop as acceptable.
pub const ACCEPTABLE_SCORE: f64 = 4.0;
/// Stop when the best between-round improvement falls below this.
pub const CONVERGENCE_IMPROVEMENT: f64 = 0.2;
/// Weighted-score margin inside which the overall score breaks the tie.
pub const TIE_MARGIN: f64 = 0.1;
/// Transport failures are retried this many times.
pub const TRANSPORT_RETRIES: usize = 2;

/// The six evaluation dimensions, each scored on 1-5.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DimensionScores {
    pub completeness: f64,
    pub quantitative_accuracy: f64,
    pub symptom_extraction: f64,
    pub head_movement_classification: f64,
    pub schema_compliance: f64,
    pub edge_case_handling: f64,
}

impl DimensionScores {
    pub fn uniform(score: f64) -> DimensionScores {
        DimensionScores {
            completeness: score,
            quantitative_accuracy: score,
            symptom_extraction: score,
            head_movement_classification: score,
            schema_compliance: score,
            edge_case_handling: score,
        }
    }

    pub fn as_array(&self) -> [f64; 6] {
        [
            self.completeness,
            self.quantitative_accuracy,
            self.symptom_extraction,
            self.head_movement_classification,
            self.schema_compliance,
            self.edge_case_handling,
        ]
    }

    pub fn mean(&self) -> f64 {
        self.as_array().iter().sum::<f64>() / 6.0
    }

    pub fn min(&self) -> f64 {
        self.as_array().into_iter().fold(f64::INFINITY, f64::min)
    }
}

/// One cross-evaluation verdict: dimension scores, their unweighted mean,
/// a narrative justification, and the count of high-severity issues.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub scores: DimensionScores,
    /// Unweighted mean of the six dimensions. Scenario files may omit it
    /// (0 stands in); [`EvaluationReport::normalized`] fills it.
    #[serde(default)]
    pub overall_score: f64,
    #[serde(default)]
    pub justification: String,
    pub high_severity_count: u32,
}

impl EvaluationReport {
    pub fn new(scores: DimensionScores, justification: &str, high_severity_count: u32) -> Self {
        EvaluationReport {
            overall_score: scores.mean(),
            scores,
            justification: justification.to_string(),
            high_severity_count,
        }
    }

    /// Fill a missing overall score with the dimension mean.
    pub fn normalized(mut self) -> Self {
        if self.overall_score == 0.0 {
            self.overall_score = self.scores.mean();
        }
        self
    }
}

/// Check the report's internal consistency: dimensions on the 1-5 scale,
/// overall equal to their mean, and any high-severity issue reflected in at
/// least one dimension score of 2 or lower.
pub fn validate_report(report: &EvaluationReport) -> Result<(), PipelineError> {
    for score in report.scores.as_array() {
        if !(1.0..=5.0).contains(&score) || !score.is_finite() {
            return Err(PipelineError::InconsistentEvaluation {
                detail: format!("dimension score {score} outside [1,5]"),
            });
        }
    }
    if (report.overall_score - report.scores.mean()).abs() > 1e-9 {
        return Err(PipelineError::InconsistentEvaluation {
            detail: format!(
                "overall score {} is not the dimension mean {}",
                report.overall_score,
                report.scores.mean()
            ),
        });
    }
    if report.high_severity_count > 0 && report.scores.min() > 2.0 {
        return Err(PipelineError::InconsistentEvaluation {
            detail: format!(
                "{} high-severity issues but no dimension scored <= 2",
                report.high_severity_count
            ),
        });
    }
    Ok(())
}

/// Priority-weighted score: movement classification and completeness carry
/// 25% each, quantitative accuracy and symptom extraction 20% each, schema
/// compliance and edge-case handling 5% each.
pub fn weighted_score(report: &EvaluationReport) -> f64 {
    let s = &report.scores;
    0.25 * s.head_movement_classification
        + 0.25 * s.completeness
        + 0.20 * s.quantitative_accuracy
        + 0.20 * s.symptom_extraction
        + 0.05 * s.schema_compliance
        + 0.05 * s.edge_case_handling
}

/// Why the refinement loop stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Excellent,
    BothAcceptable,
    Converged,
    MaxRounds,
}

impl StopReason {
    pub fn as_str(&self) -> &'static str {
        match self {
            StopReason::Excellent => "excellent",
            StopReason::BothAcceptable => "both_acceptable",
            StopReason::Converged => "converged",
            StopReason::MaxRounds => "max_rounds",
        }
    }
}

/// One round's weighted scores and high-severity counts for both backends.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoundScores {
    pub weighted_a: f64,
    pub weighted_b: f64,
    pub high_severity_a: u32,
    pub high_severity_b: u32,
}

/// The early-stopping rule. `None` means continue (the caller declares
/// [`StopReason::MaxRounds`] when the round budget is spent).
///
/// Convergence measures the larger of the two backends' improvements over
/// the previous round.
pub fn check_stop(
    round: usize,
    current: &RoundScores,
    previous: Option<&RoundScores>,
) -> Option<StopReason> {
    let excellent_a = current.weighted_a >= EXCELLENT_SCORE && current.high_severity_a == 0;
    let excellent_b = current.weighted_b >= EXCELLENT_SCORE && current.high_severity_b == 0;
    if excellent_a || excellent_b {
        return Some(StopReason::Excellent);
    }
    if current.weighted_a >= ACCEPTABLE_SCORE
        && current.weighted_b >= ACCEPTABLE_SCORE
        && current.high_severity_a == 0
        && current.high_severity_b == 0
    {
        return Some(StopReason::BothAcceptable);
    }
    if round >= 2 {
        if let Some(prev) = previous {
            let improvement = (current.weighted_a - prev.weighted_a)
                .max(current.weighted_b - prev.weighted_b);
            if improvement < CONVERGENCE_IMPROVEMENT {
                return Some(StopReason::Converged);
            }
        }
    }
    None
}

/// Which backend won.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WinnerSide {
    A,
    B,
}

/// Winner selection: the higher weighted score wins outright; inside the
/// 0.1 tie margin the higher overall (unweighted) score decides; an exact
/// tie falls to the first-listed backend.
pub fn select_winner(
    weighted_a: f64,
    weighted_b: f64,
    overall_a: f64,
    overall_b: f64,
) -> WinnerSide {
    if (weighted_a - weighted_b).abs() < TIE_MARGIN {
        if overall_b > overall_a {
            WinnerSide::B
        } else {
            WinnerSide::A
        }
    } else if weighted_b > weighted_a {
        WinnerSide::B
    } else {
        WinnerSide::A
    }
}

/// Backend call failure modes. Transport problems are retryable noise;
/// malformed output is a quality signal and is not retried.
#[derive(Debug, Error)]
pub enum BackendError {
    #[error("transport: {0}")]
    Transport(String),
    #[error("malformed output: {0}")]
    Malformed(String),
}

/// An extraction backend. Evaluation never sees the source text: judging is
/// blind to everything but the candidate document and the paper identifier.
pub trait ExtractorBackend {
    fn backend_id(&self) -> &str;
    /// Produce a candidate extraction document from the paper text.
    fn extract(&self, markdown: &str, paper_id: &str) -> Result<String, BackendError>;
    /// Judge another backend's document.
    fn evaluate(&self, extraction_json: &str, paper_id: &str)
        -> Result<EvaluationReport, BackendError>;
    /// Revise this backend's own document given the judge's feedback.
    fn refine(&self, previous_json: &str, feedback: &EvaluationReport)
        -> Result<String, BackendError>;
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("backend `{backend_id}` failed in round {round}: {source}")]
    Backend {
        backend_id: String,
        round: usize,
        source: BackendError,
    },
    #[error("evaluation report rejected: {detail}")]
    InconsistentEvaluation { detail: String },
    #[error("winning document failed schema validation: {detail}")]
    InvalidWinner { detail: String },
    #[error("scenario: {0}")]
    Scenario(String),
}

/// Pipeline phases, as logged.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Extract,
    Evaluate,
    Refine,
    Select,
}

/// One structured audit line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditEvent {
    pub paper_id: String,
    pub round: usize,
    pub phase: Phase,
    pub backend_id: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub weighted_score: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub high_severity_count: Option<u32>,
}

/// Collects one line per pipeline phase.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AuditLog {
    pub events: Vec<AuditEvent>,
}

impl AuditLog {
    pub fn new() -> AuditLog {
        AuditLog::default()
    }

    fn push(
        &mut self,
        paper_id: &str,
        round: usize,
        phase: Phase,
        backend_id: &str,
        weighted: Option<f64>,
        high_severity: Option<u32>,
    ) {
        self.events.push(AuditEvent {
            paper_id: paper_id.to_string(),
            round,
            phase,
            backend_id: backend_id.to_string(),
            weighted_score: weighted,
            high_severity_count: high_severity,
        });
    }

    /// One JSON object per line.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for event in &self.events {
            out.push_str(&serde_json::to_string(event).expect("audit events serialize"));
            out.push('\n');
        }
        out
    }
}

/// Final pipeline output for one paper.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PipelineResult {
    pub paper_id: String,
    pub winner_backend_id: String,
    pub winning_document: String,
    pub rounds_used: usize,
    pub trace: Vec<RoundScores>,
    pub stop_reason: StopReason,
    pub weighted_a: f64,
    pub weighted_b: f64,
}

fn call_with_retry<T>(
    backend_id: &str,
    round: usize,
    mut call: impl FnMut() -> Result<T, BackendError>,
) -> Result<T, PipelineError> {
    let mut attempt = 0;
    loop {
        match call() {
            Ok(value) => return Ok(value),
            Err(BackendError::Transport(detail)) if attempt < TRANSPORT_RETRIES => {
                attempt += 1;
                let _ = detail;
            }
            Err(source) => {
                return Err(PipelineError::Backend {
                    backend_id: backend_id.to_string(),
                    round,
                    source,
                })
            }
        }
    }
}

/// Evaluate with the self-consistency rule: an inconsistent report is
/// re-requested once, then errors.
fn evaluate_checked(
    judge: &dyn ExtractorBackend,
    document: &str,
    paper_id: &str,
    round: usize,
) -> Result<EvaluationReport, PipelineError> {
    let report = call_with_retry(judge.backend_id(), round, || {
        judge.evaluate(document, paper_id)
    })?
    .normalized();
    match validate_report(&report) {
        Ok(()) => Ok(report),
        Err(_) => {
            let retry = call_with_retry(judge.backend_id(), round, || {
                judge.evaluate(document, paper_id)
            })?
            .normalized();
            validate_report(&retry)?;
            Ok(retry)
        }
    }
}

/// Run the full dual-backend loop for one paper.
pub fn run_pipeline(
    markdown: &str,
    paper_id: &str,
    backend_a: &dyn ExtractorBackend,
    backend_b: &dyn ExtractorBackend,
    max_rounds: usize,
    audit: &mut AuditLog,
) -> Result<PipelineResult, PipelineError> {
    let max_rounds = max_rounds.max(1);
    let id_a = backend_a.backend_id().to_string();
    let id_b = backend_b.backend_id().to_string();

    let mut document_a =
        call_with_retry(&id_a, 0, || backend_a.extract(markdown, paper_id))?;
    audit.push(paper_id, 0, Phase::Extract, &id_a, None, None);
    let mut document_b =
        call_with_retry(&id_b, 0, || backend_b.extract(markdown, paper_id))?;
    audit.push(paper_id, 0, Phase::Extract, &id_b, None, None);

    let mut trace: Vec<RoundScores> = Vec::new();
    let mut report_a = None;
    let mut report_b = None;
    let mut stop_reason = StopReason::MaxRounds;

    for round in 1..=max_rounds {
        // Symmetric cross-judging: B scores A's document, A scores B's.
        let eval_a = evaluate_checked(backend_b, &document_a, paper_id, round)?;
        let eval_b = evaluate_checked(backend_a, &document_b, paper_id, round)?;

        let scores = RoundScores {
            weighted_a: weighted_score(&eval_a),
            weighted_b: weighted_score(&eval_b),
            high_severity_a: eval_a.high_severity_count,
            high_severity_b: eval_b.high_severity_count,
        };
        audit.push(paper_id, round, Phase::Evaluate, &id_b, Some(scores.weighted_a), Some(scores.high_severity_a));
        audit.push(paper_id, round, Phase::Evaluate, &id_a, Some(scores.weighted_b), Some(scores.high_severity_b));

        let previous = trace.last().copied();
        trace.push(scores);
        report_a = Some(eval_a);
        report_b = Some(eval_b);

        if let Some(reason) = check_stop(round, &scores, previous.as_ref()) {
            stop_reason = reason;
            break;
        }
        if round == max_rounds {
            stop_reason = StopReason::MaxRounds;
            break;
        }

        // Each backend refines its own document with its own feedback.
        let feedback_a = report_a.as_ref().expect("round evaluated");
        let feedback_b = report_b.as_ref().expect("round evaluated");
        document_a = call_with_retry(&id_a, round, || backend_a.refine(&document_a, feedback_a))?;
        audit.push(paper_id, round, Phase::Refine, &id_a, None, None);
        document_b = call_with_retry(&id_b, round, || backend_b.refine(&document_b, feedback_b))?;
        audit.push(paper_id, round, Phase::Refine, &id_b, None, None);
    }

    let final_scores = *trace.last().expect("at least one round");
    let report_a = report_a.expect("at least one round");
    let report_b = report_b.expect("at least one round");
    let winner = select_winner(
        final_scores.weighted_a,
        final_scores.weighted_b,
        report_a.overall_score,
        report_b.overall_score,
    );
    let (winner_backend_id, winning_document) = match winner {
        WinnerSide::A => (id_a.clone(), document_a),
        WinnerSide::B => (id_b.clone(), document_b),
    };
    audit.push(paper_id, trace.len(), Phase::Select, &winner_backend_id, None, None);

    // The winner must parse and satisfy every record invariant.
    let record = schema::parse_extraction(&winning_document)
        .map_err(|e| PipelineError::InvalidWinner { detail: e.to_string() })?;
    let report = schema::validate(&record);
    if !report.is_clean() {
        let first = &report.violations[0];
        return Err(PipelineError::InvalidWinner {
            detail: format!(
                "{} violations, first at {}: {}",
                report.violations.len(),
                first.path,
                first.message
            ),
        });
    }

    Ok(PipelineResult {
        paper_id: paper_id.to_string(),
        winner_backend_id,
        winning_document,
        rounds_used: trace.len(),
        trace,
        stop_reason,
        weighted_a: final_scores.weighted_a,
        weighted_b: final_scores.weighted_b,
    })
}

// ---------------------------------------------------------------------------
// Scripted backend
// ---------------------------------------------------------------------------

/// Either a canned payload or a simulated failure.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum ScriptedOutcome {
    Failure { error: String },
    Document(Value),
}

/// Canned behavior for one backend across all papers.
#[derive(Debug, Clone, Default, Deserialize)]
pub struct BackendScript {
    #[serde(default)]
    pub extractions: BTreeMap<String, ScriptedOutcome>,
    /// Reports this backend issues when judging the other's document, in
    /// round order. The last entry repeats if rounds outrun the list.
    #[serde(default)]
    pub evaluations: BTreeMap<String, Vec<EvaluationReport>>,
    /// Documents returned by successive refine calls. When exhausted, the
    /// previous document passes through unchanged.
    #[serde(default)]
    pub refinements: BTreeMap<String, Vec<ScriptedOutcome>>,
}

/// Scenario file: two named backends with their scripts.
#[derive(Debug, Clone, Deserialize)]
pub struct Scenario {
    pub backend_a: String,
    pub backend_b: String,
    pub backends: BTreeMap<String, BackendScript>,
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Scenario, PipelineError> {
        serde_json::from_str(text).map_err(|e| PipelineError::Scenario(e.to_string()))
    }

    pub fn from_path(path: &Path) -> Result<Scenario, PipelineError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| PipelineError::Scenario(format!("{}: {e}", path.display())))?;
        Scenario::from_json(&text)
    }

    /// Instantiate the A and B backends named by the scenario.
    pub fn into_backends(self) -> Result<(ScriptedBackend, ScriptedBackend), PipelineError> {
        let mut backends = self.backends;
        let script_a = backends
            .remove(&self.backend_a)
            .ok_or_else(|| PipelineError::Scenario(format!("no script for backend `{}`", self.backend_a)))?;
        let script_b = backends
            .remove(&self.backend_b)
            .ok_or_else(|| PipelineError::Scenario(format!("no script for backend `{}`", self.backend_b)))?;
        Ok((
            ScriptedBackend::new(&self.backend_a, script_a),
            ScriptedBackend::new(&self.backend_b, script_b),
        ))
    }
}

/// Deterministic mock backend driven by a scenario script. Successive calls
/// for the same (paper, phase) step through the scripted sequence.
pub struct ScriptedBackend {
    backend_id: String,
    script: BackendScript,
    counters: Mutex<BTreeMap<(String, &'static str), usize>>,
}

impl ScriptedBackend {
    pub fn new(backend_id: &str, script: BackendScript) -> ScriptedBackend {
        ScriptedBackend {
            backend_id: backend_id.to_string(),
            script,
            counters: Mutex::new(BTreeMap::new()),
        }
    }

    /// Clear call counters so a rerun replays the script from the start.
    pub fn reset(&self) {
        self.counters.lock().expect("counter lock").clear();
    }

    fn next_index(&self, paper_id: &str, phase: &'static str) -> usize {
        let mut counters = self.counters.lock().expect("counter lock");
        let counter = counters.entry((paper_id.to_string(), phase)).or_insert(0);
        let index = *counter;
        *counter += 1;
        index
    }

    fn outcome_to_document(outcome: &ScriptedOutcome) -> Result<String, BackendError> {
        match outcome {
            ScriptedOutcome::Failure { error } => {
                if error.eq_ignore_ascii_case("transport") {
                    Err(BackendError::Transport("scripted transport failure".to_string()))
                } else {
                    Err(BackendError::Malformed(format!("scripted failure: {error}")))
                }
            }
            ScriptedOutcome::Document(value) => match value {
                Value::String(s) => Ok(s.clone()),
                other => Ok(serde_json::to_string(other).expect("scenario document serializes")),
            },
        }
    }
}

impl ExtractorBackend for ScriptedBackend {
    fn backend_id(&self) -> &str {
        &self.backend_id
    }

    fn extract(&self, _markdown: &str, paper_id: &str) -> Result<String, BackendError> {
        let outcome = self.script.extractions.get(paper_id).ok_or_else(|| {
            BackendError::Malformed(format!(
                "scenario for `{}` has no extraction for paper `{paper_id}`",
                self.backend_id
            ))
        })?;
        Self::outcome_to_document(outcome)
    }

    fn evaluate(
        &self,
        _extraction_json: &str,
        paper_id: &str,
    ) -> Result<EvaluationReport, BackendError> {
        let reports = self
            .script
            .evaluations
            .get(paper_id)
            .filter(|r| !r.is_empty())
            .ok_or_else(|| {
                BackendError::Malformed(format!(
                    "scenario for `{}` has no evaluations for paper `{paper_id}`",
                    self.backend_id
                ))
            })?;
        let index = self.next_index(paper_id, "evaluate").min(reports.len() - 1);
        Ok(reports[index].clone().normalized())
    }

    fn refine(
        &self,
        previous_json: &str,
        _feedback: &EvaluationReport,
    ) -> Result<String, BackendError> {
        // Refinements are keyed by paper inside the document itself; the
        // counter keys on the raw previous text when no paper id is at hand.
        // Scripts are per paper, so look the paper id up from the document.
        let paper_id = serde_json::from_str::<Value>(previous_json)
            .ok()
            .and_then(|v| v.get("paper_id").and_then(|p| p.as_str()).map(String::from))
            .unwrap_or_default();
        match self.script.refinements.get(&paper_id) {
            None => Ok(previous_json.to_string()),
            Some(steps) => {
                let index = self.next_index(&paper_id, "refine");
                match steps.get(index) {
                    None => Ok(previous_json.to_string()),
                    Some(outcome) => Self::outcome_to_document(outcome),
                }
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Backend configuration
// ---------------------------------------------------------------------------

/// One backend's configuration. Live entries carry connection details with
/// credentials strictly via an environment variable name; scripted entries
/// point at a scenario file.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum BackendConfig {
    Scripted { id: String, scenario: String },
    Live {
        id: String,
        endpoint: String,
        model: String,
        timeout_seconds: u64,
        credential_env: String,
    },
}

impl BackendConfig {
    pub fn id(&self) -> &str {
        match self {
            BackendConfig::Scripted { id, .. } => id,
            BackendConfig::Live { id, .. } => id,
        }
    }
}

/// Pairing of the two configured backends.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackendPairConfig {
    pub backend_a: BackendConfig,
    pub backend_b: BackendConfig,
}

impl BackendPairConfig {
    pub fn from_json(text: &str) -> Result<BackendPairConfig, PipelineError> {
        let config: BackendPairConfig =
            serde_json::from_str(text).map_err(|e| PipelineError::Scenario(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn from_path(path: &Path) -> Result<BackendPairConfig, PipelineError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| PipelineError::Scenario(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    fn validate(&self) -> Result<(), PipelineError> {
        for config in [&self.backend_a, &self.backend_b] {
            if let BackendConfig::Live {
                endpoint,
                credential_env,
                ..
            } = config
            {
                if endpoint.trim().is_empty() {
                    return Err(PipelineError::Scenario("live backend needs an endpoint".into()));
                }
                if credential_env.trim().is_empty() {
                    return Err(PipelineError::Scenario(
                        "live backend needs a credential environment variable name".into(),
                    ));
                }
            }
        }
        Ok(())
    }
}
