use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::config::LabelRecord;
use super::store::{write_json, RunDir};
use super::{PipelineError, Stage, ScoreArtifact, SCHEMA_VERSION};
use crate::estimator::{
    bin_accuracy, correctness_score, normalize_scores, threshold_table, w_schedule, BinSummary, CorrectnessScore,
    ThresholdRow, DEFAULT_BIN_WIDTH, DEFAULT_W, SCHEDULE_STEPS,
};
use crate::evalstats::{average_precision, metrics_block, roc_auc, welch_t_test, Category, MetricsBlock};
use crate::harness::TestTally;

pub const THRESHOLD_CUTOFFS: [f64; 11] = [0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0];
pub const METRICS_FILE: &str = "metrics.json";
pub const LABELS_FILE: &str = "labels.json";

#[derive(Debug, Clone, Default, PartialEq)]
pub struct EvaluateOptions {
    /// Re-score with this weight instead of the one the run used.
    pub w: Option<f64>,
    /// Also report ROC-AUC and AP across the exponential w schedule.
    pub sweep: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PassRates {
    /// Mean per-comment pass rate over comments with at least one pass/fail.
    pub accurate: Option<f64>,
    pub inaccurate: Option<f64>,
    pub welch_p: Option<f64>,
    /// Fraction of comments with at least one test that passed or failed.
    pub executable_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub run_id: String,
    pub metrics: MetricsBlock,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub i: u32,
    pub w: f64,
    pub roc_auc: Option<f64>,
    pub ap: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluatedComment {
    pub comment_id: String,
    pub category: Category,
    pub accurate: bool,
    /// Mean over runs.
    pub score: f64,
    pub normalized: f64,
    pub pass_rate: Option<f64>,
    pub unverifiable: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub schema_version: u32,
    pub runs: Vec<String>,
    pub w: f64,
    pub n_labeled: usize,
    pub n_ambiguous: usize,
    /// Labeled, unambiguous comments without a score in any run.
    pub n_unscored: usize,
    pub n_unverifiable: usize,
    pub metrics: MetricsBlock,
    pub pass_rates: PassRates,
    pub bins: Vec<BinSummary>,
    pub thresholds: Vec<ThresholdRow>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub per_run: Vec<RunMetrics>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<Vec<SweepPoint>>,
    pub comments: Vec<EvaluatedComment>,
}

impl EvaluationReport {
    /// Store under `<run>/evaluate/`, together with the labels used.
    pub fn save(&self, run: &RunDir, labels: &[LabelRecord]) -> Result<(), PipelineError> {
        let dir = run.stage_dir(Stage::Evaluate);
        write_json(&dir.join(METRICS_FILE), self)?;
        write_json(&dir.join(LABELS_FILE), &labels)
    }
}

fn mean(xs: &[f64]) -> Option<f64> {
    (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64)
}

fn score_of(tally: &TestTally, w: f64) -> Result<f64, PipelineError> {
    correctness_score(tally, w)
        .map(|s| s.score)
        .map_err(|e| PipelineError::Config(e.to_string()))
}

/// Evaluate scores from one or more runs against labels. A comment's score
/// is the mean of its scores over the runs that scored it.
pub fn evaluate_tallies(
    runs: &[(String, Vec<TestTally>)],
    labels: &[LabelRecord],
    w: f64,
    sweep: bool,
) -> Result<EvaluationReport, PipelineError> {
    let by_id: BTreeMap<&str, &LabelRecord> = labels.iter().map(|l| (l.comment_id.as_str(), l)).collect();
    let n_ambiguous = by_id.values().filter(|l| l.label.ambiguous).count();

    let mut tallies: BTreeMap<&str, Vec<&TestTally>> = BTreeMap::new();
    for (_, run) in runs {
        for t in run {
            tallies.entry(t.comment_id.as_str()).or_default().push(t);
        }
    }

    let mut n_unscored = 0;
    let mut rows: Vec<(&LabelRecord, Vec<&TestTally>)> = Vec::new();
    for (id, label) in &by_id {
        if label.label.ambiguous {
            continue;
        }
        match tallies.get(id) {
            Some(ts) => rows.push((label, ts.clone())),
            None => n_unscored += 1,
        }
    }
    let accurate = rows.iter().filter(|(l, _)| l.label.is_accurate()).count();
    let inaccurate = rows.len() - accurate;
    if accurate < 2 || inaccurate < 2 {
        return Err(PipelineError::InsufficientLabels { accurate, inaccurate });
    }

    let mean_score = |ts: &[&TestTally], w: f64| -> Result<f64, PipelineError> {
        let scores = ts.iter().map(|t| score_of(t, w)).collect::<Result<Vec<_>, _>>()?;
        Ok(mean(&scores).unwrap_or(0.0))
    };
    let scores: Vec<f64> = rows.iter().map(|(_, ts)| mean_score(ts, w)).collect::<Result<_, _>>()?;
    let truth: Vec<bool> = rows.iter().map(|(l, _)| l.label.is_accurate()).collect();
    let metrics = metrics_block(&scores, &truth).map_err(|e| PipelineError::Artifact(e.to_string()))?;

    let as_scores: Vec<CorrectnessScore> = rows
        .iter()
        .zip(&scores)
        .map(|((l, _), &score)| CorrectnessScore {
            comment_id: l.comment_id.clone(),
            n_pass: 0,
            n_fail: 0,
            w,
            score,
            normalized: None,
            unverifiable: false,
        })
        .collect();
    let normalized: Vec<f64> = normalize_scores(&as_scores)
        .map_err(|e| PipelineError::Artifact(e.to_string()))?
        .into_iter()
        .map(|s| s.normalized.unwrap_or(0.5))
        .collect();
    let records: Vec<(f64, bool)> = normalized.iter().copied().zip(truth.iter().copied()).collect();
    let bins = bin_accuracy(&records, DEFAULT_BIN_WIDTH).map_err(|e| PipelineError::Artifact(e.to_string()))?;
    let thresholds = threshold_table(&records, &THRESHOLD_CUTOFFS);

    let comments: Vec<EvaluatedComment> = rows
        .iter()
        .zip(scores.iter().zip(&normalized))
        .map(|((l, ts), (&score, &normalized))| {
            let (pass, scoreable) = ts.iter().fold((0, 0), |(p, n), t| (p + t.n_pass, n + t.scoreable()));
            EvaluatedComment {
                comment_id: l.comment_id.clone(),
                category: l.label.category,
                accurate: l.label.is_accurate(),
                score,
                normalized,
                pass_rate: (scoreable > 0).then(|| pass as f64 / scoreable as f64),
                unverifiable: scoreable == 0,
            }
        })
        .collect();

    let rates = |acc: bool| -> Vec<f64> {
        comments.iter().filter(|c| c.accurate == acc).filter_map(|c| c.pass_rate).collect()
    };
    let (acc_rates, inacc_rates) = (rates(true), rates(false));
    let n_unverifiable = comments.iter().filter(|c| c.unverifiable).count();
    let pass_rates = PassRates {
        accurate: mean(&acc_rates),
        inaccurate: mean(&inacc_rates),
        welch_p: welch_t_test(&acc_rates, &inacc_rates).ok().map(|r| r.p_value),
        executable_fraction: 1.0 - n_unverifiable as f64 / comments.len() as f64,
    };

    let per_run = if runs.len() > 1 {
        runs.iter()
            .map(|(run_id, run)| {
                let by_comment: BTreeMap<&str, &TestTally> = run.iter().map(|t| (t.comment_id.as_str(), t)).collect();
                let mut s = Vec::new();
                let mut l = Vec::new();
                for (label, _) in &rows {
                    if let Some(t) = by_comment.get(label.comment_id.as_str()) {
                        s.push(score_of(t, w)?);
                        l.push(label.label.is_accurate());
                    }
                }
                Ok(RunMetrics {
                    run_id: run_id.clone(),
                    metrics: metrics_block(&s, &l).map_err(|e| PipelineError::Artifact(e.to_string()))?,
                })
            })
            .collect::<Result<Vec<_>, PipelineError>>()?
    } else {
        Vec::new()
    };

    let sweep = if sweep {
        let mut points = Vec::with_capacity(SCHEDULE_STEPS as usize + 1);
        for i in 0..=SCHEDULE_STEPS {
            let wi = w_schedule(i).map_err(|e| PipelineError::Config(e.to_string()))?;
            let s: Vec<f64> = rows.iter().map(|(_, ts)| mean_score(ts, wi)).collect::<Result<_, _>>()?;
            points.push(SweepPoint {
                i,
                w: wi,
                roc_auc: roc_auc(&s, &truth).ok(),
                ap: average_precision(&s, &truth).ok(),
            });
        }
        Some(points)
    } else {
        None
    };

    Ok(EvaluationReport {
        schema_version: SCHEMA_VERSION,
        runs: runs.iter().map(|(id, _)| id.clone()).collect(),
        w,
        n_labeled: by_id.len(),
        n_ambiguous,
        n_unscored,
        n_unverifiable,
        metrics,
        pass_rates,
        bins,
        thresholds,
        per_run,
        sweep,
        comments,
    })
}

/// Score tallies of a run, sorted by comment id.
pub fn run_tallies(run: &RunDir) -> Result<Vec<TestTally>, PipelineError> {
    run.artifact_ids(Stage::Score)?
        .iter()
        .map(|id| run.read_artifact::<ScoreArtifact>(Stage::Score, id).map(|a| a.tally))
        .collect()
}

/// Evaluate the score artifacts of `runs`. Without an explicit weight, the
/// first run's weight is used.
pub fn evaluate_runs(
    runs: &[RunDir],
    labels: &[LabelRecord],
    opts: &EvaluateOptions,
) -> Result<EvaluationReport, PipelineError> {
    let w = match (opts.w, runs.first()) {
        (Some(w), _) => w,
        (None, Some(run)) => run.read_manifest()?.w,
        (None, None) => DEFAULT_W,
    };
    let data = runs
        .iter()
        .map(|r| Ok((r.run_id.clone(), run_tallies(r)?)))
        .collect::<Result<Vec<_>, PipelineError>>()?;
    evaluate_tallies(&data, labels, w, opts.sweep)
}
