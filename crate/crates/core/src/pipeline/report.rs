use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::config::{embedded_labels, CommentRecord, LabelRecord};
use super::evaluate::{EvaluationReport, LABELS_FILE, METRICS_FILE};
use super::store::{read_json, RunDir, COMMENTS_FILE};
use super::{ExecuteArtifact, GentestsArtifact, PipelineError, ScoreArtifact, Stage, SCHEMA_VERSION};
use crate::estimator::{normalize_scores, CorrectnessScore};
use crate::harness::TestStatus;

/// Column order of the CSV report.
pub const CSV_HEADER: &str = "comment_id,n_pass,n_fail,n_nocompile,n_excluded,score,normalized,label,category";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Json,
    Md,
}

impl ReportFormat {
    pub fn extension(self) -> &'static str {
        match self {
            ReportFormat::Csv => "csv",
            ReportFormat::Json => "json",
            ReportFormat::Md => "md",
        }
    }
}

impl FromStr for ReportFormat {
    type Err = PipelineError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "csv" => Ok(ReportFormat::Csv),
            "json" => Ok(ReportFormat::Json),
            "md" => Ok(ReportFormat::Md),
            other => Err(PipelineError::Config(format!("unknown report format {other:?} (csv, json, md)"))),
        }
    }
}

/// One CSV row; field order is [`CSV_HEADER`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub comment_id: String,
    pub n_pass: u32,
    pub n_fail: u32,
    pub n_nocompile: u32,
    pub n_excluded: u32,
    pub score: f64,
    pub normalized: f64,
    /// `accurate`, `inaccurate`, or empty when unlabeled.
    pub label: String,
    pub category: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestVerdict {
    pub ordinal: usize,
    pub method_name: String,
    pub status: TestStatus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropertyVerdicts {
    pub property_index: usize,
    pub property: String,
    pub tests: Vec<TestVerdict>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetailedRow {
    #[serde(flatten)]
    pub row: ReportRow,
    pub unverifiable: bool,
    pub properties: Vec<PropertyVerdicts>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JsonReport {
    pub schema_version: u32,
    pub run_id: String,
    pub w: f64,
    pub rows: Vec<DetailedRow>,
    pub metrics: Option<EvaluationReport>,
}

struct Loaded {
    comments: Vec<CommentRecord>,
    rows: Vec<DetailedRow>,
    gentests: BTreeMap<String, GentestsArtifact>,
    executes: BTreeMap<String, ExecuteArtifact>,
    metrics: Option<EvaluationReport>,
    w: f64,
}

fn load(run: &RunDir) -> Result<Loaded, PipelineError> {
    let manifest = run.read_manifest()?;
    let comments: Vec<CommentRecord> = read_json(&run.path.join(COMMENTS_FILE))?;
    let eval_dir = run.stage_dir(Stage::Evaluate);
    let labels: Vec<LabelRecord> = if eval_dir.join(LABELS_FILE).is_file() {
        read_json(&eval_dir.join(LABELS_FILE))?
    } else {
        embedded_labels(&comments)
    };
    let labels: BTreeMap<&str, &LabelRecord> = labels.iter().map(|l| (l.comment_id.as_str(), l)).collect();
    let metrics: Option<EvaluationReport> = if eval_dir.join(METRICS_FILE).is_file() {
        Some(read_json(&eval_dir.join(METRICS_FILE))?)
    } else {
        None
    };

    let mut scores: Vec<ScoreArtifact> = Vec::new();
    let mut gentests = BTreeMap::new();
    let mut executes = BTreeMap::new();
    for c in &comments {
        if !run.has_artifact(Stage::Score, &c.comment_id) {
            continue;
        }
        scores.push(run.read_artifact(Stage::Score, &c.comment_id)?);
        if run.has_artifact(Stage::Gentests, &c.comment_id) {
            gentests.insert(c.comment_id.clone(), run.read_artifact(Stage::Gentests, &c.comment_id)?);
        }
        if run.has_artifact(Stage::Execute, &c.comment_id) {
            executes.insert(c.comment_id.clone(), run.read_artifact(Stage::Execute, &c.comment_id)?);
        }
    }
    let plain: Vec<CorrectnessScore> = scores.iter().map(|s| s.score.clone()).collect();
    let normalized = if plain.is_empty() {
        Vec::new()
    } else {
        normalize_scores(&plain).map_err(|e| PipelineError::Artifact(e.to_string()))?
    };

    let rows = scores
        .iter()
        .zip(normalized)
        .map(|(s, n)| {
            let label = labels.get(s.comment_id.as_str());
            let properties = gentests
                .get(&s.comment_id)
                .map(|g: &GentestsArtifact| {
                    g.properties
                        .iter()
                        .map(|p| PropertyVerdicts {
                            property_index: p.property_index,
                            property: p.property.clone(),
                            tests: executes
                                .get(&s.comment_id)
                                .map(|e: &ExecuteArtifact| {
                                    e.outcomes
                                        .iter()
                                        .filter(|o| o.test_id.property_index == p.property_index)
                                        .map(|o| TestVerdict {
                                            ordinal: o.test_id.ordinal,
                                            method_name: o.method_name.clone(),
                                            status: o.status,
                                        })
                                        .collect()
                                })
                                .unwrap_or_default(),
                        })
                        .collect()
                })
                .unwrap_or_default();
            DetailedRow {
                row: ReportRow {
                    comment_id: s.comment_id.clone(),
                    n_pass: s.tally.n_pass,
                    n_fail: s.tally.n_fail,
                    n_nocompile: s.tally.n_nocompile,
                    n_excluded: s.tally.n_excluded,
                    score: s.score.score,
                    normalized: n.normalized.unwrap_or(0.5),
                    label: label
                        .map(|l| if l.label.is_accurate() { "accurate" } else { "inaccurate" })
                        .unwrap_or("")
                        .to_string(),
                    category: label.map(|l| l.label.category.as_str()).unwrap_or("").to_string(),
                },
                unverifiable: s.score.unverifiable,
                properties,
            }
        })
        .collect();
    Ok(Loaded {
        comments,
        rows,
        gentests,
        executes,
        metrics,
        w: manifest.w,
    })
}

/// Render the report for a run.
pub fn report(run: &RunDir, format: ReportFormat) -> Result<String, PipelineError> {
    let loaded = load(run)?;
    match format {
        ReportFormat::Csv => csv_report(&loaded),
        ReportFormat::Json => {
            let report = JsonReport {
                schema_version: SCHEMA_VERSION,
                run_id: run.run_id.clone(),
                w: loaded.w,
                rows: loaded.rows,
                metrics: loaded.metrics,
            };
            Ok(serde_json::to_string_pretty(&report)? + "\n")
        }
        ReportFormat::Md => Ok(md_report(&run.run_id, &loaded)),
    }
}

fn csv_report(loaded: &Loaded) -> Result<String, PipelineError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in &loaded.rows {
        w.serialize(&r.row).map_err(|e| PipelineError::Artifact(e.to_string()))?;
    }
    let mut bytes = w.into_inner().map_err(|e| PipelineError::Artifact(e.to_string()))?;
    if loaded.rows.is_empty() {
        bytes = format!("{CSV_HEADER}\n").into_bytes();
    }
    String::from_utf8(bytes).map_err(|e| PipelineError::Artifact(e.to_string()))
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(|v| format!("{v:.4}")).unwrap_or_else(|| "n/a".into())
}

fn fence(lang: &str, body: &str) -> String {
    // A fence longer than any backtick run inside the body.
    let longest = body
        .split(|c| c != '`')
        .map(str::len)
        .max()
        .unwrap_or(0);
    let ticks = "`".repeat(longest.max(2) + 1);
    format!("{ticks}{lang}\n{}\n{ticks}\n", body.trim_end())
}

fn md_report(run_id: &str, loaded: &Loaded) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# Comment accuracy report: {run_id}\n");
    let _ = writeln!(out, "Weight w = {}; {} comments scored.\n", loaded.w, loaded.rows.len());

    if let Some(m) = &loaded.metrics {
        let b = &m.metrics;
        let _ = writeln!(out, "## Metrics\n");
        let _ = writeln!(
            out,
            "Labeled: {} accurate, {} inaccurate ({} ambiguous excluded, w = {}).\n",
            b.n_accurate, b.n_inaccurate, m.n_ambiguous, m.w
        );
        let _ = writeln!(out, "| metric | value |\n|---|---|");
        for (name, v) in [
            ("Welch t-test p", b.welch_p),
            ("point-biserial r", b.pointbiserial_r),
            ("point-biserial p", b.pointbiserial_p),
            ("ROC-AUC", b.roc_auc),
            ("average precision", b.ap),
            ("pass rate (accurate)", m.pass_rates.accurate),
            ("pass rate (inaccurate)", m.pass_rates.inaccurate),
        ] {
            let _ = writeln!(out, "| {name} | {} |", fmt_opt(v));
        }
        out.push('\n');
        let _ = writeln!(out, "| normalized bin | comments | accuracy | 95% CI |\n|---|---|---|---|");
        for bin in &m.bins {
            let ci = bin
                .ci95
                .map(|(lo, hi)| format!("{lo:.3}–{hi:.3}"))
                .unwrap_or_else(|| "n/a".into());
            let _ = writeln!(
                out,
                "| [{:.1}, {:.1}) | {} | {} | {ci} |",
                bin.bin_range.0,
                bin.bin_range.1,
                bin.n_total,
                fmt_opt(bin.accuracy)
            );
        }
        out.push('\n');
    }

    let _ = writeln!(out, "## Comments\n");
    let _ = writeln!(
        out,
        "| comment | pass | fail | no compile | excluded | score | normalized | label | category |\n|---|---|---|---|---|---|---|---|---|"
    );
    for d in &loaded.rows {
        let r = &d.row;
        let flag = if d.unverifiable { " (unverifiable)" } else { "" };
        let _ = writeln!(
            out,
            "| {} | {} | {} | {} | {} | {}{flag} | {:.3} | {} | {} |",
            r.comment_id, r.n_pass, r.n_fail, r.n_nocompile, r.n_excluded, r.score, r.normalized, r.label, r.category
        );
    }
    out.push('\n');

    let flagged: Vec<&DetailedRow> = loaded.rows.iter().filter(|d| d.row.n_fail > 0).collect();
    let _ = writeln!(out, "## Flagged comments\n");
    if flagged.is_empty() {
        let _ = writeln!(out, "No comment has a failing test.");
    }
    let texts: BTreeMap<&str, &str> =
        loaded.comments.iter().map(|c| (c.comment_id.as_str(), c.comment_text.as_str())).collect();
    for d in flagged {
        let id = d.row.comment_id.as_str();
        let _ = writeln!(out, "### {id} (score {})\n", d.row.score);
        if let Some(text) = texts.get(id) {
            for line in text.lines() {
                let _ = writeln!(out, "> {line}");
            }
            out.push('\n');
        }
        let (Some(g), Some(e)) = (loaded.gentests.get(id), loaded.executes.get(id)) else {
            continue;
        };
        for o in e.outcomes.iter().filter(|o| o.status == TestStatus::Fail) {
            let prop = g.properties.iter().find(|p| p.property_index == o.test_id.property_index);
            if let Some(p) = prop {
                let _ = writeln!(out, "**Property {}:** {}\n", p.property_index, p.property);
            }
            let host = o.host_file.as_ref().map(|h| h.display().to_string()).unwrap_or_default();
            let _ = writeln!(out, "Failing test `{}` in `{host}`:\n", o.method_name);
            let source = prop
                .and_then(|p| p.tests.iter().find(|t| t.ordinal == o.test_id.ordinal))
                .map(|t| t.source.as_str());
            if let Some(src) = source {
                out.push_str(&fence("java", src));
                out.push('\n');
            }
            out.push_str(&fence("text", &o.log_excerpt));
            out.push('\n');
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn formats() {
        assert_eq!("md".parse::<ReportFormat>().unwrap(), ReportFormat::Md);
        assert!("pdf".parse::<ReportFormat>().is_err());
    }

    #[test]
    fn fences_outgrow_content() {
        assert_eq!(fence("text", "a"), "```text\na\n```\n");
        assert!(fence("text", "x ````` y").starts_with("``````text"));
    }

    #[test]
    fn header_matches_row_fields() {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.serialize(ReportRow {
            comment_id: "c,1".into(),
            n_pass: 1,
            n_fail: 2,
            n_nocompile: 3,
            n_excluded: 4,
            score: -199.0,
            normalized: 0.0,
            label: String::new(),
            category: String::new(),
        })
        .unwrap();
        let text = String::from_utf8(w.into_inner().unwrap()).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), CSV_HEADER);
        assert_eq!(lines.next().unwrap(), "\"c,1\",1,2,3,4,-199.0,0.0,,");
    }
}
