use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Serialize, Serializer};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum EvalTask {
    Segmentation,
    Detection,
    Keypoints,
    Diagnosis,
}

impl EvalTask {
    pub fn metric_name(self) -> &'static str {
        match self {
            EvalTask::Segmentation => "mIoU (%)",
            EvalTask::Detection => "F1",
            EvalTask::Keypoints => "MDE (px)",
            EvalTask::Diagnosis => "accuracy (%)",
        }
    }
}

/// Pooled detection counts at the operating point.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DetectionSummary {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Score cut-off of the reported operating point; `null` when every
    /// prediction is kept regardless of score, `"+inf"` when none is.
    #[serde(serialize_with = "serialize_threshold")]
    pub threshold: Option<f64>,
    pub iou_thresh: f64,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

fn serialize_threshold<S: Serializer>(t: &Option<f64>, s: S) -> Result<S::Ok, S::Error> {
    match t {
        None => s.serialize_none(),
        Some(v) if v.is_infinite() => s.serialize_str("+inf"),
        Some(v) => s.serialize_f64(*v),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricReport {
    pub task: EvalTask,
    pub metric: &'static str,
    pub per_site: BTreeMap<String, f64>,
    /// `None` when no site has any support.
    pub overall: Option<f64>,
    pub support_counts: BTreeMap<String, usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub detection: Option<DetectionSummary>,
    /// Keypoint images left out because a named point was not predicted.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub incomplete: Option<usize>,
}

impl MetricReport {
    /// Builds a report whose `overall` is the support-weighted mean of `per_site`.
    pub(crate) fn weighted(task: EvalTask, per_site: BTreeMap<String, (f64, usize)>) -> Self {
        let support_counts: BTreeMap<String, usize> =
            per_site.iter().map(|(k, &(_, n))| (k.clone(), n)).collect();
        let per_site: BTreeMap<String, f64> =
            per_site.into_iter().map(|(k, (v, _))| (k, v)).collect();
        let overall = support_weighted(&per_site, &support_counts);
        Self {
            task,
            metric: task.metric_name(),
            per_site,
            overall,
            support_counts,
            detection: None,
            incomplete: None,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Aligned plain-text table, two decimals.
    pub fn to_table(&self) -> String {
        let mut rows: Vec<(String, String, String)> = self
            .per_site
            .iter()
            .map(|(site, v)| {
                (
                    site.clone(),
                    self.support_counts[site].to_string(),
                    format!("{v:.2}"),
                )
            })
            .collect();
        let total: usize = self.support_counts.values().sum();
        let overall = self.overall.map_or("-".to_string(), |v| format!("{v:.2}"));
        rows.push(("overall".into(), total.to_string(), overall));
        let w0 = rows.iter().map(|r| r.0.len()).chain([4]).max().unwrap_or(4);
        let w1 = rows.iter().map(|r| r.1.len()).chain([7]).max().unwrap_or(7);
        let w2 = rows
            .iter()
            .map(|r| r.2.len())
            .chain([self.metric.len()])
            .max()
            .unwrap_or(0);
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<w0$}  {:>w1$}  {:>w2$}",
            "site", "support", self.metric
        );
        let _ = writeln!(out, "{}", "-".repeat(w0 + w1 + w2 + 4));
        for (a, b, c) in &rows {
            let _ = writeln!(out, "{a:<w0$}  {b:>w1$}  {c:>w2$}");
        }
        if let Some(d) = &self.detection {
            let thr = match d.threshold {
                None => "all".to_string(),
                Some(t) if t.is_infinite() => "+inf".to_string(),
                Some(t) => format!("{t:.2}"),
            };
            let _ = writeln!(
                out,
                "P {:.2}  R {:.2}  F1 {:.2}  score>={thr}  IoU>={:.2}  tp {} fp {} fn {}",
                d.precision, d.recall, d.f1, d.iou_thresh, d.tp, d.fp, d.fn_
            );
        }
        if let Some(n) = self.incomplete {
            let _ = writeln!(out, "incomplete images: {n}");
        }
        out
    }
}

/// Σ nᵢ·vᵢ / Σ nᵢ over sites with support.
pub fn support_weighted(
    per_site: &BTreeMap<String, f64>,
    support: &BTreeMap<String, usize>,
) -> Option<f64> {
    let mut num = 0.0;
    let mut den = 0usize;
    for (site, v) in per_site {
        let n = support.get(site).copied().unwrap_or(0);
        if n > 0 {
            num += n as f64 * v;
            den += n;
        }
    }
    (den > 0).then(|| num / den as f64)
}

/// Mean that does not depend on input order: values are sorted before summing.
pub(crate) fn ordered_mean(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    values.iter().sum::<f64>() / values.len() as f64
}
