//! Evaluation metrics and cross-fold aggregation.
//!
//! The suite mirrors what the cross-validation harness reports: mean
//! cross-entropy loss, accuracy, per-class recall, and the "flat" AUC
//! variant where one-hot labels and predicted probabilities are flattened
//! into a single list of binary (label, score) points before a standard
//! tie-aware rank AUC. Fold values aggregate into symmetric 95%
//! t-distribution confidence intervals (dof = folds − 1).

use crate::data::ClassLabel;
use crate::error::{Error, Result};
use crate::optim::cross_entropy;
use crate::tensor::Tensor;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Metrics of one model on one split.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EvalResult {
    pub loss: f64,
    pub accuracy: f64,
    /// Recall per class; only classes present in the split appear.
    pub recall: BTreeMap<ClassLabel, f64>,
    pub flat_auc: f64,
    pub n: usize,
}

/// Argmax prediction (ties to the lowest class index), accuracy, recall
/// `TP/(TP+FN)` per present class, loss, and flat AUC.
pub fn evaluate(probs: &Tensor, labels: &Tensor) -> Result<EvalResult> {
    let [n, c] = match probs.shape() {
        [n, c] => [*n, *c],
        s => {
            return Err(Error::Dimension(format!(
                "evaluate expects [N, c] probabilities, got {s:?}"
            )))
        }
    };
    if n == 0 {
        return Err(Error::Domain("cannot evaluate an empty split".into()));
    }
    if c != 3 {
        return Err(Error::Dimension(format!(
            "evaluation is defined for the 3-class scheme, got {c} columns"
        )));
    }
    let (loss, _) = cross_entropy(probs, labels)?;

    let mut correct = 0usize;
    let mut tp = [0usize; 3];
    let mut present = [0usize; 3];
    for (prow, lrow) in probs.data().chunks(c).zip(labels.data().chunks(c)) {
        let mut pred = 0;
        for j in 1..c {
            if prow[j] > prow[pred] {
                pred = j;
            }
        }
        let truth = lrow.iter().position(|&v| v == 1.0).unwrap();
        present[truth] += 1;
        if pred == truth {
            correct += 1;
            tp[truth] += 1;
        }
    }
    let mut recall = BTreeMap::new();
    for label in ClassLabel::ALL {
        let i = label.index();
        if present[i] > 0 {
            recall.insert(label, tp[i] as f64 / present[i] as f64);
        }
    }
    Ok(EvalResult {
        loss,
        accuracy: correct as f64 / n as f64,
        recall,
        flat_auc: flat_auc(probs, labels)?,
        n,
    })
}

/// Flattens `[N, c]` probabilities and one-hot labels into `N·c` binary
/// points and computes the tie-aware Mann-Whitney AUC:
/// `P(score_pos > score_neg) + P(tie)/2` via average ranks.
pub fn flat_auc(probs: &Tensor, labels: &Tensor) -> Result<f64> {
    if probs.shape() != labels.shape() || probs.rank() != 2 {
        return Err(Error::Dimension(format!(
            "flat AUC expects matching [N, c] tensors, got {:?} and {:?}",
            probs.shape(),
            labels.shape()
        )));
    }
    let mut points: Vec<(f64, bool)> = Vec::with_capacity(probs.len());
    for (&score, &label) in probs.data().iter().zip(labels.data()) {
        if label != 0.0 && label != 1.0 {
            return Err(Error::Domain(format!(
                "flat AUC labels must be 0 or 1, got {label}"
            )));
        }
        points.push((score, label == 1.0));
    }
    let pos = points.iter().filter(|(_, p)| *p).count();
    let neg = points.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::Domain(
            "flat AUC needs at least one positive and one negative point".into(),
        ));
    }
    points.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("scores must not be NaN"));

    // Average ranks over tie groups, accumulate positive ranks.
    let mut rank_sum_pos = 0.0f64;
    let mut i = 0;
    while i < points.len() {
        let mut j = i;
        while j < points.len() && points[j].0 == points[i].0 {
            j += 1;
        }
        let avg_rank = (i + 1 + j) as f64 / 2.0; // ranks are 1-based
        for p in &points[i..j] {
            if p.1 {
                rank_sum_pos += avg_rank;
            }
        }
        i = j;
    }
    let u = rank_sum_pos - (pos * (pos + 1)) as f64 / 2.0;
    Ok(u / (pos as f64 * neg as f64))
}

/// Two-sided 95% critical values of the t-distribution (0.975 quantile)
/// for 1..=30 degrees of freedom.
const T_975: [f64; 30] = [
    12.706205, 4.302653, 3.182446, 2.776445, 2.570582, 2.446912, 2.364624, 2.306004, 2.262157,
    2.228139, 2.200985, 2.178813, 2.160369, 2.144787, 2.131450, 2.119905, 2.109816, 2.100922,
    2.093024, 2.085963, 2.079614, 2.073873, 2.068658, 2.063899, 2.059539, 2.055529, 2.051831,
    2.048407, 2.045230, 2.042272,
];

pub fn t_critical_975(dof: usize) -> Result<f64> {
    if dof == 0 || dof > T_975.len() {
        return Err(Error::Domain(format!(
            "t critical value table covers dof 1..=30, got {dof}"
        )));
    }
    Ok(T_975[dof - 1])
}

/// `(low, mean, high)` of the symmetric 95% confidence interval
/// `mean ± t_{0.975, n−1} · s/√n`, with `s` the sample standard deviation
/// (ddof 1). Only the 0.95 level is supported.
pub fn t_confidence_interval(values: &[f64], level: f64) -> Result<(f64, f64, f64)> {
    if values.len() < 2 {
        return Err(Error::Domain(format!(
            "confidence interval needs at least 2 values, got {}",
            values.len()
        )));
    }
    if (level - 0.95).abs() > 1e-12 {
        return Err(Error::Domain(format!(
            "only the 0.95 confidence level is supported, got {level}"
        )));
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    let s = var.sqrt();
    let half = t_critical_975(values.len() - 1)? * s / n.sqrt();
    Ok((mean - half, mean, mean + half))
}

/// Names of the six reported metrics, in table row order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum MetricName {
    Loss,
    Accuracy,
    FlatAuc,
    RecallCovid19,
    RecallNoFinding,
    RecallOtherPneumonia,
}

impl MetricName {
    pub const ALL: [MetricName; 6] = [
        MetricName::Loss,
        MetricName::Accuracy,
        MetricName::FlatAuc,
        MetricName::RecallCovid19,
        MetricName::RecallNoFinding,
        MetricName::RecallOtherPneumonia,
    ];

    pub fn key(self) -> &'static str {
        match self {
            MetricName::Loss => "loss",
            MetricName::Accuracy => "accuracy",
            MetricName::FlatAuc => "flat_auc",
            MetricName::RecallCovid19 => "covid19_recall",
            MetricName::RecallNoFinding => "no_finding_recall",
            MetricName::RecallOtherPneumonia => "other_pneumonia_recall",
        }
    }

    pub fn display_name(self) -> &'static str {
        match self {
            MetricName::Loss => "Loss",
            MetricName::Accuracy => "Accuracy",
            MetricName::FlatAuc => "Flat AUC",
            MetricName::RecallCovid19 => "COVID-19 Recall",
            MetricName::RecallNoFinding => "No Finding Recall",
            MetricName::RecallOtherPneumonia => "Other Pneumonia Recall",
        }
    }

    fn extract(self, r: &EvalResult) -> Option<f64> {
        match self {
            MetricName::Loss => Some(r.loss),
            MetricName::Accuracy => Some(r.accuracy),
            MetricName::FlatAuc => Some(r.flat_auc),
            MetricName::RecallCovid19 => r.recall.get(&ClassLabel::Covid19).copied(),
            MetricName::RecallNoFinding => r.recall.get(&ClassLabel::NoFinding).copied(),
            MetricName::RecallOtherPneumonia => {
                r.recall.get(&ClassLabel::OtherPneumonia).copied()
            }
        }
    }
}

/// Mean, sample std (ddof 1), and 95% CI bounds of one metric across folds.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MetricSummary {
    pub mean: f64,
    pub std: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

/// Per-fold results plus per-metric aggregation for the training
/// ("internal") and held-out ("external") splits.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CVSummary {
    pub folds: Vec<FoldEval>,
    pub internal: BTreeMap<MetricName, MetricSummary>,
    pub external: BTreeMap<MetricName, MetricSummary>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FoldEval {
    pub fold: usize,
    pub train: EvalResult,
    pub test: EvalResult,
}

fn summarize_split(results: Vec<&EvalResult>) -> Result<BTreeMap<MetricName, MetricSummary>> {
    let mut out = BTreeMap::new();
    for metric in MetricName::ALL {
        let values: Vec<f64> = results.iter().filter_map(|r| metric.extract(r)).collect();
        if values.len() != results.len() {
            continue; // metric missing in some fold (class absent); skip it
        }
        let (lo, mean, hi) = t_confidence_interval(&values, 0.95)?;
        let n = values.len() as f64;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
        out.insert(
            metric,
            MetricSummary {
                mean,
                std: var.sqrt(),
                ci_low: lo,
                ci_high: hi,
            },
        );
    }
    Ok(out)
}

/// Aggregates `(train, test)` fold results into a [`CVSummary`].
pub fn summarize(folds: &[(EvalResult, EvalResult)]) -> Result<CVSummary> {
    if folds.len() < 2 || folds.len() > 31 {
        return Err(Error::Domain(format!(
            "summary needs between 2 and 31 fold results, got {}",
            folds.len()
        )));
    }
    let internal = summarize_split(folds.iter().map(|(tr, _)| tr).collect())?;
    let external = summarize_split(folds.iter().map(|(_, te)| te).collect())?;
    Ok(CVSummary {
        folds: folds
            .iter()
            .enumerate()
            .map(|(i, (tr, te))| FoldEval {
                fold: i,
                train: tr.clone(),
                test: te.clone(),
            })
            .collect(),
        internal,
        external,
    })
}

/// Round-half-even to `decimals` places.
pub fn round_half_even(x: f64, decimals: u32) -> f64 {
    let scale = 10f64.powi(decimals as i32);
    (x * scale).round_ties_even() / scale
}

/// Renders a value rounded to the thousandth, e.g. `0.93949 -> "0.939"`.
pub fn format_thousandth(x: f64) -> String {
    format!("{:.3}", round_half_even(x, 3))
}

/// `mean`/`half` as a percent string with one decimal: `"93.9(±3.4)%"`.
pub fn format_percent_ci(mean: f64, half: f64) -> String {
    format!(
        "{:.1}(±{:.1})%",
        round_half_even(mean * 100.0, 1),
        round_half_even(half * 100.0, 1)
    )
}

/// Comparison-table cell with explicit bounds: `"93.9_{-3.4}^{+3.4}%"`.
pub fn format_percent_pm(mean: f64, lo: f64, hi: f64) -> String {
    format!(
        "{:.1}_{{-{:.1}}}^{{+{:.1}}}%",
        round_half_even(mean * 100.0, 1),
        round_half_even((mean - lo) * 100.0, 1),
        round_half_even((hi - mean) * 100.0, 1)
    )
}

/// CSV with columns `metric,lhs95,value,rhs95,split`: six metric rows for
/// the internal split, then six for the external, all rounded to the
/// thousandth.
pub fn summary_csv(summary: &CVSummary) -> String {
    let mut out = String::from("metric,lhs95,value,rhs95,split\n");
    for (split_name, table) in [("internal", &summary.internal), ("external", &summary.external)]
    {
        for metric in MetricName::ALL {
            if let Some(s) = table.get(&metric) {
                out.push_str(&format!(
                    "{},{},{},{},{}\n",
                    metric.key(),
                    format_thousandth(s.ci_low),
                    format_thousandth(s.mean),
                    format_thousandth(s.ci_high),
                    split_name
                ));
            }
        }
    }
    out
}

/// Full-precision JSON of the whole summary.
pub fn summary_json(summary: &CVSummary) -> String {
    serde_json::to_string_pretty(summary).expect("summary serializes")
}
