//! The `extract` command: run the dual-backend pipeline over a batch of
//! paper files and write the winners into the three-folder corpus layout.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context, Result};

use ahm_core::orchestrator::{
    run_pipeline, AuditLog, BackendConfig, BackendPairConfig, Scenario, ScriptedBackend,
};
use ahm_core::schema::{parse_extraction, ConditionCategory, Reported, StudyExtraction};

use crate::runctx::RunManifest;
use crate::CliError;

pub struct ExtractArgs {
    pub backend_config: PathBuf,
    pub papers: Vec<PathBuf>,
    pub out: PathBuf,
    pub max_rounds: usize,
}

/// Load the scripted backend named by one config entry.
fn scripted_backend(config: &BackendConfig, base: &Path) -> Result<ScriptedBackend, CliError> {
    match config {
        BackendConfig::Scripted { id, scenario } => {
            let mut path = PathBuf::from(scenario);
            if path.is_relative() {
                path = base.join(path);
            }
            let scenario = Scenario::from_path(&path)
                .map_err(|e| CliError::config(anyhow!("scenario {}: {e}", path.display())))?;
            let script = scenario.backends.get(id).cloned().ok_or_else(|| {
                CliError::config(anyhow!(
                    "scenario {} has no backend `{id}`",
                    path.display()
                ))
            })?;
            Ok(ScriptedBackend::new(id, script))
        }
        BackendConfig::Live { id, .. } => Err(CliError::config(anyhow!(
            "backend `{id}` is configured as live; this build drives live extraction through \
             operator-supplied adapters only — use a scripted scenario"
        ))),
    }
}

/// Collect (paper_id, markdown) pairs, sorted by id. Directories contribute
/// every `*.md` file; the id is the file stem.
fn collect_papers(paths: &[PathBuf]) -> Result<Vec<(String, String)>> {
    let mut papers = Vec::new();
    for path in paths {
        if path.is_dir() {
            for entry in fs::read_dir(path)? {
                let p = entry?.path();
                if p.extension().and_then(|e| e.to_str()) == Some("md") {
                    papers.push(read_paper(&p)?);
                }
            }
        } else {
            papers.push(read_paper(path)?);
        }
    }
    papers.sort_by(|a, b| a.0.cmp(&b.0));
    Ok(papers)
}

fn read_paper(path: &Path) -> Result<(String, String)> {
    let id = path
        .file_stem()
        .and_then(|s| s.to_str())
        .ok_or_else(|| anyhow!("paper file {} has no usable name", path.display()))?
        .to_string();
    let text =
        fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    Ok((id, text))
}

fn record_category(record: &StudyExtraction) -> &'static str {
    let any_disease = record.groups.iter().any(|g| {
        matches!(
            g.condition_category,
            Reported::Known(ConditionCategory::Disease)
        )
    });
    if any_disease {
        "disease"
    } else {
        "disorder"
    }
}

/// Distribute one winning record into the corpus folders it belongs to.
fn write_into_layout(out: &Path, record: &StudyExtraction, document: &str) -> Result<Vec<String>> {
    let category = record_category(record);
    let mut roles = vec!["abnormal-head-movements"];
    if record.groups.iter().any(|g| g.measurement.is_some()) {
        roles.push("kinematics-quantitative");
    }
    if record.groups.iter().any(|g| !g.scales.is_empty()) {
        roles.push("severity-scales");
    }
    let mut written = Vec::new();
    for role in roles {
        let dir = out.join(role).join(category);
        fs::create_dir_all(&dir)?;
        let name = format!("{role}/{category}/{}.json", record.paper_id);
        fs::write(dir.join(format!("{}.json", record.paper_id)), document)?;
        written.push(name);
    }
    Ok(written)
}

pub fn run(args: ExtractArgs) -> Result<(), CliError> {
    let config = BackendPairConfig::from_path(&args.backend_config)
        .map_err(|e| CliError::config(anyhow!("backend config: {e}")))?;
    let base = args
        .backend_config
        .parent()
        .unwrap_or_else(|| Path::new("."))
        .to_path_buf();
    let backend_a = scripted_backend(&config.backend_a, &base)?;
    let backend_b = scripted_backend(&config.backend_b, &base)?;

    let papers = collect_papers(&args.papers).map_err(CliError::data)?;
    if papers.is_empty() {
        return Err(CliError::usage(anyhow!("no paper files supplied")));
    }

    let mut manifest = RunManifest::new("extract");
    manifest.param("backend_a", config.backend_a.id());
    manifest.param("backend_b", config.backend_b.id());
    manifest.param("max_rounds", args.max_rounds);
    manifest.input(&args.backend_config).map_err(CliError::data)?;

    let mut audit = AuditLog::new();
    let mut results = Vec::new();
    let mut failures = Vec::new();
    for (paper_id, markdown) in &papers {
        match run_pipeline(markdown, paper_id, &backend_a, &backend_b, args.max_rounds, &mut audit)
        {
            Ok(result) => {
                let record = parse_extraction(&result.winning_document)
                    .expect("run_pipeline validated the winner");
                write_into_layout(&args.out, &record, &result.winning_document)
                    .map_err(CliError::data)?;
                results.push(result);
            }
            Err(e) => {
                eprintln!("warning: paper `{paper_id}` failed: {e}");
                failures.push((paper_id.clone(), e.to_string()));
            }
        }
    }

    let results_jsonl: String = results
        .iter()
        .map(|r| serde_json::to_string(r).expect("results serialize"))
        .map(|line| line + "\n")
        .collect();
    manifest
        .write_output(&args.out, "results.jsonl", &results_jsonl)
        .map_err(CliError::data)?;
    manifest
        .write_output(&args.out, "audit.jsonl", &audit.to_jsonl())
        .map_err(CliError::data)?;
    if !failures.is_empty() {
        let failures_jsonl: String = failures
            .iter()
            .map(|(id, error)| {
                serde_json::json!({"paper_id": id, "error": error}).to_string() + "\n"
            })
            .collect();
        manifest
            .write_output(&args.out, "failures.jsonl", &failures_jsonl)
            .map_err(CliError::data)?;
    }
    manifest.param("papers_succeeded", results.len());
    manifest.param("papers_failed", failures.len());
    manifest.finish(&args.out).map_err(CliError::data)?;

    println!(
        "extract: {} succeeded, {} failed, outputs in {}",
        results.len(),
        failures.len(),
        args.out.display()
    );
    if results.is_empty() {
        return Err(CliError::pipeline(anyhow!("every paper in the batch failed")));
    }
    Ok(())
}
