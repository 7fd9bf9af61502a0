//! Statistics for judging scores against accuracy labels.
//!
//! Welch's t-test and point-biserial correlation give p-values; ROC-AUC and
//! average precision measure ranking quality with accurate comments as the
//! positive class; Wilson intervals bound per-bin accuracy; BLEU is the
//! n-gram similarity baseline.

pub mod special;

use std::collections::HashMap;
use std::hash::Hash;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};
use thiserror::Error;

use special::student_t_two_sided_p;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum EvalError {
    #[error("both samples have zero variance")]
    DegenerateSample,
    #[error("not enough observations")]
    TooFewSamples,
    #[error("labels contain a single class")]
    SingleClass,
    #[error("all scores are equal")]
    ConstantScores,
    #[error("no positive labels")]
    NoPositives,
    #[error("empty input")]
    EmptyInput,
    #[error("invalid counts")]
    InvalidCounts,
    #[error("scores and labels differ in length")]
    LengthMismatch,
    #[error("non-finite score")]
    NonFinite,
}

/// Taxonomy of inaccurate comments. Only `Accurate` counts as accurate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Category {
    Accurate,
    HallucinatingIntent,
    HallucinatingReference,
    LackingCodeContext,
    CodeMischaracterization,
}

impl Category {
    pub fn as_str(self) -> &'static str {
        match self {
            Category::Accurate => "Accurate",
            Category::HallucinatingIntent => "HallucinatingIntent",
            Category::HallucinatingReference => "HallucinatingReference",
            Category::LackingCodeContext => "LackingCodeContext",
            Category::CodeMischaracterization => "CodeMischaracterization",
        }
    }

    /// The two categories that describe behavior and so can be caught by tests.
    pub fn is_behavioral(self) -> bool {
        matches!(self, Category::LackingCodeContext | Category::CodeMischaracterization)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledScore {
    pub comment_id: String,
    pub score: f64,
    pub accurate: bool,
    pub category: Category,
    #[serde(default)]
    pub ambiguous: bool,
}

impl LabeledScore {
    /// `accurate` must agree with the category.
    pub fn is_consistent(&self) -> bool {
        self.accurate == (self.category == Category::Accurate)
    }
}

/// Drop ambiguous records; split the rest into (scores, labels).
pub fn unambiguous(records: &[LabeledScore]) -> (Vec<f64>, Vec<bool>) {
    records.iter().filter(|r| !r.ambiguous).map(|r| (r.score, r.accurate)).unzip()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StatResult {
    pub statistic: f64,
    pub df: Option<f64>,
    pub p_value: f64,
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn sample_variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() as f64 - 1.0)
}

fn check_finite(xs: &[f64]) -> Result<(), EvalError> {
    if xs.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(EvalError::NonFinite)
    }
}

/// Two-sided Welch's t-test for a difference in means (unequal variances).
pub fn welch_t_test(xs: &[f64], ys: &[f64]) -> Result<StatResult, EvalError> {
    if xs.len() < 2 || ys.len() < 2 {
        return Err(EvalError::TooFewSamples);
    }
    check_finite(xs)?;
    check_finite(ys)?;
    let (n1, n2) = (xs.len() as f64, ys.len() as f64);
    let (v1, v2) = (sample_variance(xs) / n1, sample_variance(ys) / n2);
    let se2 = v1 + v2;
    if se2 == 0.0 {
        return Err(EvalError::DegenerateSample);
    }
    let t = (mean(xs) - mean(ys)) / se2.sqrt();
    let df = se2 * se2 / (v1 * v1 / (n1 - 1.0) + v2 * v2 / (n2 - 1.0));
    Ok(StatResult {
        statistic: t,
        df: Some(df),
        p_value: student_t_two_sided_p(t, df),
    })
}

/// Pearson correlation coefficient.
pub fn pearson(xs: &[f64], ys: &[f64]) -> Result<f64, EvalError> {
    if xs.len() != ys.len() {
        return Err(EvalError::LengthMismatch);
    }
    if xs.len() < 2 {
        return Err(EvalError::TooFewSamples);
    }
    let (mx, my) = (mean(xs), mean(ys));
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx).powi(2);
        syy += (y - my).powi(2);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(EvalError::ConstantScores);
    }
    Ok(sxy / (sxx * syy).sqrt())
}

/// Point-biserial correlation between scores and a binary label, computed
/// from the group means. Equal to Pearson on a 0/1 encoding of the labels.
pub fn point_biserial(scores: &[f64], labels: &[bool]) -> Result<StatResult, EvalError> {
    if scores.len() != labels.len() {
        return Err(EvalError::LengthMismatch);
    }
    check_finite(scores)?;
    let n1 = labels.iter().filter(|&&l| l).count();
    let n0 = labels.len() - n1;
    if n1 == 0 || n0 == 0 {
        return Err(EvalError::SingleClass);
    }
    let n = scores.len() as f64;
    let m = mean(scores);
    let var = scores.iter().map(|s| (s - m).powi(2)).sum::<f64>() / n;
    if var == 0.0 {
        return Err(EvalError::ConstantScores);
    }
    if scores.len() < 3 {
        return Err(EvalError::TooFewSamples);
    }
    let (mut sum1, mut sum0) = (0.0, 0.0);
    for (s, &l) in scores.iter().zip(labels) {
        if l {
            sum1 += s;
        } else {
            sum0 += s;
        }
    }
    let (m1, m0) = (sum1 / n1 as f64, sum0 / n0 as f64);
    let r = ((m1 - m0) / var.sqrt() * (n1 as f64 * n0 as f64).sqrt() / n).clamp(-1.0, 1.0);
    let df = n - 2.0;
    let p_value = if 1.0 - r * r <= 0.0 {
        0.0
    } else {
        let t = r * (df / (1.0 - r * r)).sqrt();
        student_t_two_sided_p(t, df)
    };
    Ok(StatResult {
        statistic: r,
        df: Some(df),
        p_value,
    })
}

fn class_counts(scores: &[f64], labels: &[bool]) -> Result<(usize, usize), EvalError> {
    if scores.len() != labels.len() {
        return Err(EvalError::LengthMismatch);
    }
    check_finite(scores)?;
    let pos = labels.iter().filter(|&&l| l).count();
    Ok((pos, labels.len() - pos))
}

/// Average ranks (1-based), ties sharing the mean of their positions.
fn average_ranks(scores: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut ranks = vec![0.0; scores.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = avg;
        }
        i = j + 1;
    }
    ranks
}

/// Area under the ROC curve as the Mann-Whitney statistic: the fraction of
/// (positive, negative) pairs where the positive scores higher, ties
/// counting one half.
pub fn roc_auc(scores: &[f64], labels: &[bool]) -> Result<f64, EvalError> {
    let (pos, neg) = class_counts(scores, labels)?;
    if pos == 0 || neg == 0 {
        return Err(EvalError::SingleClass);
    }
    let ranks = average_ranks(scores);
    let rank_sum: f64 = ranks.iter().zip(labels).filter(|(_, &l)| l).map(|(r, _)| r).sum();
    let u = rank_sum - (pos * (pos + 1)) as f64 / 2.0;
    Ok(u / (pos as f64 * neg as f64))
}

/// ROC curve points (false positive rate, true positive rate), from (0, 0)
/// to (1, 1), one point per distinct score.
pub fn roc_curve(scores: &[f64], labels: &[bool]) -> Result<Vec<(f64, f64)>, EvalError> {
    let (pos, neg) = class_counts(scores, labels)?;
    if pos == 0 || neg == 0 {
        return Err(EvalError::SingleClass);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut points = vec![(0.0, 0.0)];
    let (mut tp, mut fp) = (0usize, 0usize);
    for (k, &i) in order.iter().enumerate() {
        if labels[i] {
            tp += 1;
        } else {
            fp += 1;
        }
        let last_of_group = order.get(k + 1).is_none_or(|&next| scores[next] != scores[i]);
        if last_of_group {
            points.push((fp as f64 / neg as f64, tp as f64 / pos as f64));
        }
    }
    Ok(points)
}

/// Mean precision at the rank of each positive, ranking by descending score.
/// Equal scores keep their input order.
pub fn average_precision(scores: &[f64], labels: &[bool]) -> Result<f64, EvalError> {
    let (pos, _) = class_counts(scores, labels)?;
    if pos == 0 {
        return Err(EvalError::NoPositives);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (rank, &i) in order.iter().enumerate() {
        if labels[i] {
            hits += 1;
            sum += hits as f64 / (rank + 1) as f64;
        }
    }
    Ok(sum / pos as f64)
}

fn ngram_counts<T: Eq + Hash>(tokens: &[T], n: usize) -> HashMap<&[T], usize> {
    let mut counts = HashMap::new();
    for gram in tokens.windows(n) {
        *counts.entry(gram).or_insert(0) += 1;
    }
    counts
}

/// Sentence BLEU against a single reference, without smoothing.
///
/// Orders above the candidate length have no n-grams and are left out of the
/// geometric mean, so `bleu(c, c) == 1` even for very short `c`. Any order
/// with zero clipped matches makes the score 0.
pub fn bleu<T: Eq + Hash>(candidate: &[T], reference: &[T], max_n: usize) -> Result<f64, EvalError> {
    if candidate.is_empty() || reference.is_empty() || max_n == 0 {
        return Err(EvalError::EmptyInput);
    }
    let orders = max_n.min(candidate.len());
    let mut log_sum = 0.0;
    for n in 1..=orders {
        let cand = ngram_counts(candidate, n);
        let refs = ngram_counts(reference, n);
        let clipped: usize = cand.iter().map(|(g, &c)| c.min(refs.get(g).copied().unwrap_or(0))).sum();
        if clipped == 0 {
            return Ok(0.0);
        }
        let total = candidate.len() + 1 - n;
        log_sum += (clipped as f64 / total as f64).ln();
    }
    let (c, r) = (candidate.len() as f64, reference.len() as f64);
    let bp = if c < r { (1.0 - r / c).exp() } else { 1.0 };
    Ok(bp * (log_sum / orders as f64).exp())
}

/// Wilson score interval for a binomial proportion.
pub fn wilson_interval(successes: u64, n: u64, confidence: f64) -> Result<(f64, f64), EvalError> {
    if n == 0 || successes > n || !(confidence > 0.0 && confidence < 1.0) {
        return Err(EvalError::InvalidCounts);
    }
    let z = Normal::standard().inverse_cdf(1.0 - (1.0 - confidence) / 2.0);
    let nf = n as f64;
    let p = successes as f64 / nf;
    let z2 = z * z;
    let denom = 1.0 + z2 / nf;
    let center = (p + z2 / (2.0 * nf)) / denom;
    let half = z / denom * (p * (1.0 - p) / nf + z2 / (4.0 * nf * nf)).sqrt();
    let lo = if successes == 0 { 0.0 } else { (center - half).max(0.0) };
    let hi = if successes == n { 1.0 } else { (center + half).min(1.0) };
    Ok((lo, hi))
}

/// Metrics block for one set of labeled scores. A statistic that is
/// undefined for the data (say, zero variance) is left out with a warning.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsBlock {
    pub n_accurate: usize,
    pub n_inaccurate: usize,
    pub welch_t: Option<f64>,
    pub welch_df: Option<f64>,
    pub welch_p: Option<f64>,
    pub pointbiserial_r: Option<f64>,
    pub pointbiserial_p: Option<f64>,
    pub roc_auc: Option<f64>,
    pub ap: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

fn keep<T>(warnings: &mut Vec<String>, name: &str, r: Result<T, EvalError>) -> Option<T> {
    r.map_err(|e| warnings.push(format!("{name}: {e}"))).ok()
}

/// All headline statistics, accurate comments as the positive class.
pub fn metrics_block(scores: &[f64], labels: &[bool]) -> Result<MetricsBlock, EvalError> {
    if scores.len() != labels.len() {
        return Err(EvalError::LengthMismatch);
    }
    check_finite(scores)?;
    let acc: Vec<f64> = scores.iter().zip(labels).filter(|(_, &l)| l).map(|(s, _)| *s).collect();
    let inacc: Vec<f64> = scores.iter().zip(labels).filter(|(_, &l)| !l).map(|(s, _)| *s).collect();
    let mut warnings = Vec::new();
    let welch = keep(&mut warnings, "welch", welch_t_test(&acc, &inacc));
    let pb = keep(&mut warnings, "pointbiserial", point_biserial(scores, labels));
    let roc_auc = keep(&mut warnings, "roc_auc", roc_auc(scores, labels));
    let ap = keep(&mut warnings, "ap", average_precision(scores, labels));
    Ok(MetricsBlock {
        n_accurate: acc.len(),
        n_inaccurate: inacc.len(),
        welch_t: welch.map(|r| r.statistic),
        welch_df: welch.and_then(|r| r.df),
        welch_p: welch.map(|r| r.p_value),
        pointbiserial_r: pb.map(|r| r.statistic),
        pointbiserial_p: pb.map(|r| r.p_value),
        roc_auc,
        ap,
        warnings,
    })
}
