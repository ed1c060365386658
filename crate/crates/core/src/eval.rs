//! Anomaly scoring, average precision and experiment summaries.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::data::{AnomalyLabel, EncodedBatch};
use crate::error::{Error, Result};
use crate::nn::{self, ArchitectureSpec, ParamVector};

#[derive(Debug, Clone, PartialEq)]
pub struct ScoredRow {
    pub error: f64,
    pub label: AnomalyLabel,
    pub department: String,
}

/// Per-row reconstruction loss as the anomaly score.
pub fn score_rows(params: &ParamVector, spec: &ArchitectureSpec, batch: &EncodedBatch, theta_mix: f64) -> Result<Vec<ScoredRow>> {
    if !batch.has_labels() {
        return Err(Error::Contract("batch carries no anomaly labels".into()));
    }
    let out = nn::forward(params, spec, batch.rows.view())?;
    let losses = nn::row_losses(&batch.layout, batch.rows.view(), out.view(), theta_mix)?;
    losses
        .iter()
        .zip(&batch.labels)
        .zip(&batch.departments)
        .map(|((l, &label), d)| {
            if !l.total.is_finite() {
                return Err(Error::Numeric("non-finite reconstruction error".into()));
            }
            Ok(ScoredRow {
                error: l.total,
                label,
                department: d.clone(),
            })
        })
        .collect()
}

/// Step-wise average precision: `sum_i (R_i - R_{i-1}) * P_i` over every
/// rank of the descending score order. Ties keep input order. `None` when
/// there are no positives.
pub fn average_precision(scores: &[f64], positives: &[bool]) -> Option<f64> {
    assert_eq!(scores.len(), positives.len(), "scores and labels differ in length");
    let total = positives.iter().filter(|&&p| p).count();
    if total == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut tp = 0usize;
    let mut ap = 0.0;
    let mut prev_recall = 0.0;
    for (rank, &i) in order.iter().enumerate() {
        if positives[i] {
            tp += 1;
        }
        let recall = tp as f64 / total as f64;
        let precision = tp as f64 / (rank + 1) as f64;
        ap += (recall - prev_recall) * precision;
        prev_recall = recall;
    }
    Some(ap)
}

/// AP for one anomaly class. With `exclude_other` the other anomaly class is
/// dropped from the pool; otherwise it counts as negative.
pub fn ap_per_class(rows: &[ScoredRow], target: AnomalyLabel, exclude_other: bool) -> Option<f64> {
    let (scores, pos): (Vec<f64>, Vec<bool>) = rows
        .iter()
        .filter(|r| !(exclude_other && r.label.is_anomaly() && r.label != target))
        .map(|r| (r.error, r.label == target))
        .unzip();
    average_precision(&scores, &pos)
}

/// Scores of one evaluated experience for one strategy pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub seed: u64,
    pub t: usize,
    pub fl: String,
    pub cl: String,
    pub arch: String,
    pub ap_global: Option<f64>,
    pub ap_local: Option<f64>,
    /// Mean reconstruction error per department, sorted by name.
    pub dept_errors: BTreeMap<String, f64>,
    pub mean_rec_error: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    pub std: f64,
    pub seeds: usize,
}

impl Stat {
    /// Mean and population std.
    pub fn of(values: &[f64]) -> Option<Stat> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        Some(Stat {
            mean,
            std: var.sqrt(),
            seeds: values.len(),
        })
    }

    pub fn percent(&self) -> String {
        format!("{:.2} ± {:.2}", 100.0 * self.mean, 100.0 * self.std)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub fl: String,
    pub cl: String,
    pub ap_global: Option<Stat>,
    pub ap_local: Option<Stat>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SummaryTable {
    pub rows: Vec<SummaryRow>,
}

impl SummaryTable {
    pub fn get(&self, fl: &str, cl: &str) -> Option<&SummaryRow> {
        self.rows.iter().find(|r| r.fl == fl && r.cl == cl)
    }

    /// Plain-text table in percent.
    pub fn render(&self) -> String {
        let cell = |s: &Option<Stat>| s.map_or_else(|| "n/a".to_string(), |s| s.percent());
        let mut out = format!("{:<10} {:<12} {:>16} {:>16}\n", "fl", "cl", "AP_global", "AP_local");
        for r in &self.rows {
            out.push_str(&format!(
                "{:<10} {:<12} {:>16} {:>16}\n",
                r.fl,
                r.cl,
                cell(&r.ap_global),
                cell(&r.ap_local)
            ));
        }
        out
    }

    /// JSON with percent values rounded to two decimals.
    pub fn to_json(&self) -> serde_json::Value {
        let cell = |s: &Option<Stat>| match s {
            Some(s) => serde_json::json!({
                "mean": round2(100.0 * s.mean),
                "std": round2(100.0 * s.std),
                "seeds": s.seeds,
            }),
            None => serde_json::Value::Null,
        };
        let rows: Vec<_> = self
            .rows
            .iter()
            .map(|r| {
                serde_json::json!({
                    "fl": r.fl,
                    "cl": r.cl,
                    "ap_global": cell(&r.ap_global),
                    "ap_local": cell(&r.ap_local),
                })
            })
            .collect();
        serde_json::json!({ "rows": rows })
    }
}

fn round2(x: f64) -> f64 {
    (x * 100.0).round() / 100.0
}

fn seed_stat<F>(records: &[&MetricsRecord], pick: F) -> Option<Stat>
where
    F: Fn(&MetricsRecord) -> Option<f64>,
{
    let mut per_seed: BTreeMap<u64, Vec<f64>> = BTreeMap::new();
    for r in records {
        if let Some(v) = pick(r) {
            per_seed.entry(r.seed).or_default().push(v);
        }
    }
    let means: Vec<f64> = per_seed.values().map(|v| v.iter().sum::<f64>() / v.len() as f64).collect();
    Stat::of(&means)
}

/// Mean over experiences within each seed, then mean and population std over
/// seeds. When both architectures are present, global anomalies are read from
/// the shallow model and local ones from the deep model.
pub fn summarize(records: &[MetricsRecord]) -> SummaryTable {
    let mut groups: BTreeMap<(String, String), Vec<&MetricsRecord>> = BTreeMap::new();
    for r in records {
        groups.entry((r.fl.clone(), r.cl.clone())).or_default().push(r);
    }
    let rows = groups
        .into_iter()
        .map(|((fl, cl), recs)| {
            let prefer = |arch: &str| -> Vec<&MetricsRecord> {
                let sel: Vec<&MetricsRecord> = recs.iter().copied().filter(|r| r.arch == arch).collect();
                if sel.is_empty() {
                    recs.clone()
                } else {
                    sel
                }
            };
            SummaryRow {
                ap_global: seed_stat(&prefer("shallow"), |r| r.ap_global),
                ap_local: seed_stat(&prefer("deep"), |r| r.ap_local),
                fl,
                cl,
            }
        })
        .collect();
    SummaryTable { rows }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperienceEval {
    pub ap_global: Option<f64>,
    pub ap_local: Option<f64>,
    pub dept_errors: BTreeMap<String, f64>,
    pub mean_rec_error: f64,
}

pub fn evaluate_batch(
    params: &ParamVector,
    spec: &ArchitectureSpec,
    batch: &EncodedBatch,
    theta_mix: f64,
    exclude_other: bool,
) -> Result<ExperienceEval> {
    let scored = score_rows(params, spec, batch, theta_mix)?;
    let mut sums: BTreeMap<String, (f64, usize)> = BTreeMap::new();
    for r in &scored {
        let e = sums.entry(r.department.clone()).or_default();
        e.0 += r.error;
        e.1 += 1;
    }
    let total: f64 = scored.iter().map(|r| r.error).sum();
    Ok(ExperienceEval {
        ap_global: ap_per_class(&scored, AnomalyLabel::Global, exclude_other),
        ap_local: ap_per_class(&scored, AnomalyLabel::Local, exclude_other),
        dept_errors: sums.into_iter().map(|(d, (s, n))| (d, s / n as f64)).collect(),
        mean_rec_error: if scored.is_empty() { f64::NAN } else { total / scored.len() as f64 },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(error: f64, label: AnomalyLabel) -> ScoredRow {
        ScoredRow {
            error,
            label,
            department: "D".into(),
        }
    }

    #[test]
    fn ap_fixtures() {
        assert_eq!(average_precision(&[0.9, 0.8, 0.1], &[true, true, false]), Some(1.0));
        assert_eq!(average_precision(&[0.9, 0.1], &[false, true]), Some(0.5));
        let ap = average_precision(&[4.0, 3.0, 2.0, 1.0], &[true, false, true, false]).unwrap();
        assert!((ap - (0.5 + 0.5 * 2.0 / 3.0)).abs() < 1e-15);
        assert_eq!(average_precision(&[1.0, 2.0], &[false, false]), None);
    }

    #[test]
    fn ties_follow_input_order() {
        assert_eq!(average_precision(&[1.0, 1.0], &[true, false]), Some(1.0));
        assert_eq!(average_precision(&[1.0, 1.0], &[false, true]), Some(0.5));
    }

    #[test]
    fn other_class_exclusion() {
        let rows = vec![
            row(5.0, AnomalyLabel::Local),
            row(4.0, AnomalyLabel::Global),
            row(1.0, AnomalyLabel::None),
        ];
        assert_eq!(ap_per_class(&rows, AnomalyLabel::Global, true), Some(1.0));
        assert_eq!(ap_per_class(&rows, AnomalyLabel::Global, false), Some(0.5));
        let only_global = vec![row(1.0, AnomalyLabel::Global), row(0.0, AnomalyLabel::None)];
        assert_eq!(ap_per_class(&only_global, AnomalyLabel::Local, true), None);
    }

    fn rec(seed: u64, t: usize, g: f64) -> MetricsRecord {
        MetricsRecord {
            seed,
            t,
            fl: "fedavg".into(),
            cl: "sequential".into(),
            arch: "shallow".into(),
            ap_global: Some(g),
            ap_local: None,
            dept_errors: BTreeMap::new(),
            mean_rec_error: 0.0,
        }
    }

    #[test]
    fn summary_fixtures() {
        let one = summarize(&[rec(1, 0, 0.5)]);
        assert_eq!(one.rows[0].ap_global.unwrap().percent(), "50.00 ± 0.00");
        assert!(one.rows[0].ap_local.is_none());
        let two = summarize(&[rec(1, 0, 0.5), rec(1, 1, 0.7), rec(2, 0, 0.8)]);
        let s = two.rows[0].ap_global.unwrap();
        assert!((s.mean - 0.7).abs() < 1e-12);
        assert!((s.std - 0.1).abs() < 1e-12);
        assert_eq!(s.percent(), "70.00 ± 10.00");
    }
}
