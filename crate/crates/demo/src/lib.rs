//! Browser playground: simulate comments under the pass-probability model and
//! look at how the score separates accurate from inaccurate ones.
//!
//! Every export returns a JSON string; the page parses it. The `*_json`
//! functions hold the logic so they can be tested natively.

use docprobe_core::estimator::{
    bin_accuracy, correctness_score, normalize_scores, simulate_documents, threshold_table, w_schedule,
    BinSummary, CorrectnessScore, GenerativeModelParams, ThresholdRow, SCHEDULE_STEPS,
};
use docprobe_core::evalstats::{average_precision, roc_auc, roc_curve};
use docprobe_core::harness::TestTally;
use serde::{Deserialize, Serialize};
use wasm_bindgen::prelude::*;

/// What to simulate. Documents get between 1 and `max_tests` tests each, in
/// equal-sized groups, so the weight on failures actually matters.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Scenario {
    pub p1: f64,
    pub p2: f64,
    pub accurate_fraction: f64,
    pub n_docs: usize,
    pub max_tests: u32,
    pub seed: u64,
}

impl Scenario {
    fn params(&self) -> Result<GenerativeModelParams, String> {
        if !(0.0 < self.accurate_fraction && self.accurate_fraction < 1.0) {
            return Err(format!("accurate fraction {} not in (0, 1)", self.accurate_fraction));
        }
        if self.p1 == self.p2 {
            return GenerativeModelParams::uninformative(self.p1).map_err(|e| e.to_string());
        }
        let prior = self.accurate_fraction / (1.0 - self.accurate_fraction);
        GenerativeModelParams::new(self.p1, self.p2, prior).map_err(|e| e.to_string())
    }

    pub fn documents(&self) -> Result<Vec<(TestTally, bool)>, String> {
        let params = self.params()?;
        if self.max_tests == 0 || self.n_docs == 0 {
            return Err("need at least one document and one test".into());
        }
        if self.n_docs > 200_000 || self.max_tests > 1000 {
            return Err("scenario too large for the browser".into());
        }
        let groups = self.max_tests as usize;
        let mut docs = Vec::with_capacity(self.n_docs);
        for k in 1..=self.max_tests {
            let n = self.n_docs / groups + usize::from((k as usize) <= self.n_docs % groups);
            let seed = self.seed.wrapping_mul(1000).wrapping_add(k as u64);
            docs.extend(simulate_documents(&params, n, k, self.accurate_fraction, seed));
        }
        Ok(docs)
    }

    fn optimal_w(&self) -> Option<f64> {
        (self.p2 < self.p1).then(|| self.params().ok()).flatten().map(|p| p.optimal_weight())
    }
}

fn scores(docs: &[(TestTally, bool)], w: f64) -> Result<(Vec<CorrectnessScore>, Vec<bool>), String> {
    let scored = docs
        .iter()
        .map(|(t, _)| correctness_score(t, w))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| e.to_string())?;
    Ok((scored, docs.iter().map(|d| d.1).collect()))
}

fn raw(scored: &[CorrectnessScore]) -> Vec<f64> {
    scored.iter().map(|s| s.score).collect()
}

#[derive(Debug, Serialize, Deserialize)]
pub struct RocView {
    pub w: f64,
    pub optimal_w: Option<f64>,
    pub n_accurate: usize,
    pub n_inaccurate: usize,
    pub auc: f64,
    pub ap: f64,
    pub curve: Vec<(f64, f64)>,
}

pub fn roc_json(s: &Scenario, w: f64) -> Result<String, String> {
    let docs = s.documents()?;
    let (scored, labels) = scores(&docs, w)?;
    let xs = raw(&scored);
    let n_accurate = labels.iter().filter(|&&a| a).count();
    let view = RocView {
        w,
        optimal_w: s.optimal_w(),
        n_accurate,
        n_inaccurate: labels.len() - n_accurate,
        auc: roc_auc(&xs, &labels).map_err(|e| e.to_string())?,
        ap: average_precision(&xs, &labels).map_err(|e| e.to_string())?,
        curve: roc_curve(&xs, &labels).map_err(|e| e.to_string())?,
    };
    Ok(serde_json::to_string(&view).unwrap())
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SweepView {
    pub optimal_w: Option<f64>,
    pub points: Vec<SweepRow>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SweepRow {
    pub w: f64,
    pub auc: f64,
    pub ap: f64,
}

/// AUC and AP along the w schedule, every `stride`-th step.
pub fn sweep_json(s: &Scenario, stride: u32) -> Result<String, String> {
    let docs = s.documents()?;
    let stride = stride.max(1);
    let mut points = Vec::new();
    for i in (0..=SCHEDULE_STEPS).step_by(stride as usize) {
        let w = w_schedule(i).map_err(|e| e.to_string())?;
        let (scored, labels) = scores(&docs, w)?;
        let xs = raw(&scored);
        points.push(SweepRow {
            w,
            auc: roc_auc(&xs, &labels).map_err(|e| e.to_string())?,
            ap: average_precision(&xs, &labels).map_err(|e| e.to_string())?,
        });
    }
    Ok(serde_json::to_string(&SweepView {
        optimal_w: s.optimal_w(),
        points,
    })
    .unwrap())
}

#[derive(Debug, Serialize, Deserialize)]
pub struct CalibrationView {
    pub bins: Vec<BinSummary>,
    pub thresholds: Vec<ThresholdRow>,
}

/// Accuracy by normalized-score bin, with the discard trade-off at cutoffs 0.0..=1.0.
pub fn calibration_json(s: &Scenario, w: f64, bin_width: f64) -> Result<String, String> {
    let docs = s.documents()?;
    let (scored, labels) = scores(&docs, w)?;
    let normalized = normalize_scores(&scored).map_err(|e| e.to_string())?;
    let records: Vec<(f64, bool)> = normalized
        .iter()
        .zip(&labels)
        .map(|(c, &a)| (c.normalized.unwrap_or(0.5), a))
        .collect();
    let cutoffs: Vec<f64> = (0..=10).map(|i| i as f64 / 10.0).collect();
    Ok(serde_json::to_string(&CalibrationView {
        bins: bin_accuracy(&records, bin_width).map_err(|e| e.to_string())?,
        thresholds: threshold_table(&records, &cutoffs),
    })
    .unwrap())
}

fn js<T>(r: Result<T, String>) -> Result<T, JsError> {
    r.map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn simulate_roc(
    p1: f64,
    p2: f64,
    accurate_fraction: f64,
    n_docs: usize,
    max_tests: u32,
    seed: u64,
    w: f64,
) -> Result<String, JsError> {
    let s = Scenario { p1, p2, accurate_fraction, n_docs, max_tests, seed };
    js(roc_json(&s, w))
}

#[wasm_bindgen]
pub fn w_sweep(
    p1: f64,
    p2: f64,
    accurate_fraction: f64,
    n_docs: usize,
    max_tests: u32,
    seed: u64,
    stride: u32,
) -> Result<String, JsError> {
    let s = Scenario { p1, p2, accurate_fraction, n_docs, max_tests, seed };
    js(sweep_json(&s, stride))
}

#[wasm_bindgen]
#[allow(clippy::too_many_arguments)]
pub fn calibration_bins(
    p1: f64,
    p2: f64,
    accurate_fraction: f64,
    n_docs: usize,
    max_tests: u32,
    seed: u64,
    w: f64,
    bin_width: f64,
) -> Result<String, JsError> {
    let s = Scenario { p1, p2, accurate_fraction, n_docs, max_tests, seed };
    js(calibration_json(&s, w, bin_width))
}

/// Weight at which the score ranks like the posterior odds of accuracy.
#[wasm_bindgen]
pub fn optimal_weight(p1: f64, p2: f64) -> Result<f64, JsError> {
    js(GenerativeModelParams::new(p1, p2, 1.0)
        .map(|p| p.optimal_weight())
        .map_err(|e| e.to_string()))
}
