//! The correctness estimator `n_pass - w * n_fail` and the analysis around it.
//!
//! If each generated test passes with probability `p1` when the comment is
//! accurate and `p2 < p1` when it is not, the posterior log-odds of accuracy is
//! `n_pass * ln(p1/p2) + n_fail * ln((1-p1)/(1-p2))` plus a constant. Dividing
//! by `ln(p1/p2) > 0` gives the score with `w = -ln((1-p1)/(1-p2)) / ln(p1/p2)`,
//! so ranking by score at that weight is ranking by posterior.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::evalstats::wilson_interval;
use crate::harness::TestTally;

pub const DEFAULT_W: f64 = 100.0;
pub const DEFAULT_BIN_WIDTH: f64 = 0.2;
pub const SCHEDULE_STEPS: u32 = 200;

#[derive(Debug, Error, PartialEq)]
pub enum EstimatorError {
    #[error("weight must be positive, got {0}")]
    NonPositiveWeight(f64),
    #[error("schedule index {0} outside 0..={SCHEDULE_STEPS}")]
    OutOfRange(u32),
    #[error("empty score list")]
    EmptyList,
    #[error("invalid model parameters: {0}")]
    InvalidParams(String),
    #[error("bin width {0} does not divide 1")]
    InvalidBinWidth(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrectnessScore {
    pub comment_id: String,
    pub n_pass: u32,
    pub n_fail: u32,
    pub w: f64,
    pub score: f64,
    pub normalized: Option<f64>,
    /// No test passed or failed, so the score carries no evidence.
    #[serde(default)]
    pub unverifiable: bool,
}

pub fn correctness_score(tally: &TestTally, w: f64) -> Result<CorrectnessScore, EstimatorError> {
    if !(w > 0.0 && w.is_finite()) {
        return Err(EstimatorError::NonPositiveWeight(w));
    }
    Ok(CorrectnessScore {
        comment_id: tally.comment_id.clone(),
        n_pass: tally.n_pass,
        n_fail: tally.n_fail,
        w,
        score: tally.n_pass as f64 - w * tally.n_fail as f64,
        normalized: None,
        unverifiable: tally.scoreable() == 0,
    })
}

/// The exponential sweep `w_i = 100^(i/100 - 1)`, from 0.01 to 100.
pub fn w_schedule(i: u32) -> Result<f64, EstimatorError> {
    match i {
        0 => Ok(0.01),
        100 => Ok(1.0),
        200 => Ok(100.0),
        i if i > SCHEDULE_STEPS => Err(EstimatorError::OutOfRange(i)),
        i => Ok(100f64.powf(i as f64 / 100.0 - 1.0)),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GenerativeModelParams {
    /// P(pass | accurate)
    pub p1: f64,
    /// P(pass | inaccurate)
    pub p2: f64,
    pub prior_odds: f64,
}

impl GenerativeModelParams {
    /// Requires `0 < p2 < p1 < 1` and a positive prior.
    pub fn new(p1: f64, p2: f64, prior_odds: f64) -> Result<Self, EstimatorError> {
        if !(0.0 < p2 && p2 < p1 && p1 < 1.0) {
            return Err(EstimatorError::InvalidParams(format!("need 0 < p2 < p1 < 1, got p1={p1}, p2={p2}")));
        }
        if !(prior_odds > 0.0 && prior_odds.is_finite()) {
            return Err(EstimatorError::InvalidParams(format!("prior odds must be positive, got {prior_odds}")));
        }
        Ok(GenerativeModelParams { p1, p2, prior_odds })
    }

    /// Tests pass with probability `p` whatever the comment says: a control
    /// for simulations where outcomes carry no signal.
    pub fn uninformative(p: f64) -> Result<Self, EstimatorError> {
        if !(0.0 < p && p < 1.0) {
            return Err(EstimatorError::InvalidParams(format!("pass probability {p} not in (0, 1)")));
        }
        Ok(GenerativeModelParams {
            p1: p,
            p2: p,
            prior_odds: 1.0,
        })
    }

    /// Weight that makes the score a monotone transform of the posterior.
    /// Only meaningful when `p2 < p1`.
    pub fn optimal_weight(&self) -> f64 {
        -((1.0 - self.p1) / (1.0 - self.p2)).ln() / (self.p1 / self.p2).ln()
    }

    pub fn log_posterior_odds(&self, n_pass: u32, n_fail: u32) -> f64 {
        n_pass as f64 * (self.p1 / self.p2).ln()
            + n_fail as f64 * ((1.0 - self.p1) / (1.0 - self.p2)).ln()
            + self.prior_odds.ln()
    }
}

/// `(p1/p2)^n_pass * ((1-p1)/(1-p2))^n_fail * prior_odds`, via log space.
pub fn exact_posterior_odds(n_pass: u32, n_fail: u32, params: &GenerativeModelParams) -> f64 {
    params.log_posterior_odds(n_pass, n_fail).exp()
}

/// Min-max normalize into [0, 1]. All-equal scores map to 0.5.
pub fn normalize_scores(scores: &[CorrectnessScore]) -> Result<Vec<CorrectnessScore>, EstimatorError> {
    if scores.is_empty() {
        return Err(EstimatorError::EmptyList);
    }
    let lo = scores.iter().map(|s| s.score).fold(f64::INFINITY, f64::min);
    let hi = scores.iter().map(|s| s.score).fold(f64::NEG_INFINITY, f64::max);
    Ok(scores
        .iter()
        .map(|s| {
            let normalized = if hi > lo { (s.score - lo) / (hi - lo) } else { 0.5 };
            CorrectnessScore {
                normalized: Some(normalized),
                ..s.clone()
            }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinSummary {
    pub bin_range: (f64, f64),
    pub n_total: u64,
    pub n_accurate: u64,
    pub accuracy: Option<f64>,
    pub ci95: Option<(f64, f64)>,
}

/// Accuracy per half-open bin of normalized score; the last bin includes 1.0.
pub fn bin_accuracy(records: &[(f64, bool)], bin_width: f64) -> Result<Vec<BinSummary>, EstimatorError> {
    let n_bins = (1.0 / bin_width).round();
    if !(bin_width > 0.0) || n_bins < 1.0 || (n_bins * bin_width - 1.0).abs() > 1e-9 {
        return Err(EstimatorError::InvalidBinWidth(bin_width));
    }
    let n_bins = n_bins as usize;
    let mut counts = vec![(0u64, 0u64); n_bins];
    for &(x, accurate) in records {
        // The epsilon keeps exact boundaries like 0.6 / 0.2 = 2.9999.. in the upper bin.
        let idx = ((x.clamp(0.0, 1.0) / bin_width) + 1e-9).floor() as usize;
        let slot = &mut counts[idx.min(n_bins - 1)];
        slot.0 += 1;
        slot.1 += accurate as u64;
    }
    Ok(counts
        .into_iter()
        .enumerate()
        .map(|(i, (n_total, n_accurate))| BinSummary {
            bin_range: (i as f64 * bin_width, (i + 1) as f64 * bin_width),
            n_total,
            n_accurate,
            accuracy: (n_total > 0).then(|| n_accurate as f64 / n_total as f64),
            ci95: wilson_interval(n_accurate, n_total, 0.95).ok(),
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdRow {
    pub cutoff: f64,
    /// Fraction of inaccurate comments whose normalized score is below the cutoff.
    pub inaccurate_removed: Option<f64>,
    /// Fraction of accurate comments at or above the cutoff.
    pub accurate_retained: Option<f64>,
}

/// Trade-off of discarding comments below each normalized cutoff.
pub fn threshold_table(records: &[(f64, bool)], cutoffs: &[f64]) -> Vec<ThresholdRow> {
    let n_acc = records.iter().filter(|r| r.1).count();
    let n_inacc = records.len() - n_acc;
    let frac = |k: usize, n: usize| (n > 0).then(|| k as f64 / n as f64);
    cutoffs
        .iter()
        .map(|&cutoff| {
            let removed = records.iter().filter(|&&(x, a)| !a && x < cutoff).count();
            let kept = records.iter().filter(|&&(x, a)| a && x >= cutoff).count();
            ThresholdRow {
                cutoff,
                inaccurate_removed: frac(removed, n_inacc),
                accurate_retained: frac(kept, n_acc),
            }
        })
        .collect()
}

/// Synthetic documents under the pass-probability model. Each document gets
/// its own ChaCha stream, so output for a seed does not depend on how the
/// work is split.
pub fn simulate_documents(
    params: &GenerativeModelParams,
    n_docs: usize,
    tests_per_doc: u32,
    accurate_fraction: f64,
    seed: u64,
) -> Vec<(TestTally, bool)> {
    (0..n_docs)
        .map(|doc| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(doc as u64);
            let accurate = rng.random::<f64>() < accurate_fraction;
            let p = if accurate { params.p1 } else { params.p2 };
            let n_pass = (0..tests_per_doc).filter(|_| rng.random::<f64>() < p).count() as u32;
            let tally = TestTally {
                comment_id: format!("sim-{doc:05}"),
                n_pass,
                n_fail: tests_per_doc - n_pass,
                n_nocompile: 0,
                n_excluded: 0,
            };
            (tally, accurate)
        })
        .collect()
}
