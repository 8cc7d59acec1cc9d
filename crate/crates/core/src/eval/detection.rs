use std::cmp::Ordering;
use std::collections::BTreeMap;

use serde::Serialize;

use super::{
    iou_boxes, AnnotationRecord, Corpus, DetectionSummary, EvalError, EvalTask, MetricReport, Rect,
};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoredBox {
    pub rect: Rect,
    pub score: Option<f64>,
}

/// Predictions and ground truth that compete for matches (one image, one label).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DetectionGroup {
    pub preds: Vec<ScoredBox>,
    pub gts: Vec<Rect>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize)]
pub struct Matching {
    /// Accepted (pred index, gt index) pairs in acceptance order.
    pub pairs: Vec<(usize, usize)>,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepResult {
    pub f1: f64,
    pub precision: f64,
    pub recall: f64,
    /// Predictions with score ≥ threshold are kept; may be +∞.
    pub threshold: f64,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

/// Precision, recall and F1 from pooled counts; each is 0 when undefined.
/// F1 is evaluated as 2tp / (2tp + fp + fn), which equals 2PR / (P + R) but is
/// a single rounding of an exact ratio, so equal F1 values compare equal.
pub fn precision_recall_f1(tp: usize, fp: usize, fn_: usize) -> (f64, f64, f64) {
    let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    let p = ratio(tp, tp + fp);
    let r = ratio(tp, tp + fn_);
    let f1 = if tp == 0 {
        0.0
    } else {
        (2 * tp) as f64 / (2 * tp + fp + fn_) as f64
    };
    (p, r, f1)
}

fn check_thresh(iou_thresh: f64) -> Result<(), EvalError> {
    if !(iou_thresh > 0.0 && iou_thresh <= 1.0) {
        return Err(EvalError::Protocol(format!(
            "IoU threshold {iou_thresh} outside (0, 1]"
        )));
    }
    Ok(())
}

/// Candidate pairs with IoU ≥ thresh, best first; ties by (pred, gt) index.
struct Candidates {
    n_pred: usize,
    n_gt: usize,
    pairs: Vec<(f64, usize, usize)>,
}

impl Candidates {
    fn new(preds: &[Rect], gts: &[Rect], iou_thresh: f64) -> Result<Self, EvalError> {
        for r in preds.iter().chain(gts) {
            r.validate()?;
        }
        let mut pairs = Vec::new();
        for (p, pr) in preds.iter().enumerate() {
            for (g, gr) in gts.iter().enumerate() {
                let iou = iou_boxes(pr, gr)?;
                if iou >= iou_thresh {
                    pairs.push((iou, p, g));
                }
            }
        }
        pairs.sort_by(|a, b| {
            b.0.partial_cmp(&a.0)
                .unwrap_or(Ordering::Equal)
                .then(a.1.cmp(&b.1))
                .then(a.2.cmp(&b.2))
        });
        Ok(Self {
            n_pred: preds.len(),
            n_gt: gts.len(),
            pairs,
        })
    }

    fn greedy(&self, keep: impl Fn(usize) -> bool) -> Matching {
        let mut pred_used = vec![false; self.n_pred];
        let mut gt_used = vec![false; self.n_gt];
        let mut pairs = Vec::new();
        for &(_, p, g) in &self.pairs {
            if keep(p) && !pred_used[p] && !gt_used[g] {
                pred_used[p] = true;
                gt_used[g] = true;
                pairs.push((p, g));
            }
        }
        let kept = (0..self.n_pred).filter(|&p| keep(p)).count();
        let tp = pairs.len();
        Matching {
            pairs,
            tp,
            fp: kept - tp,
            fn_: self.n_gt - tp,
        }
    }
}

/// Greedy one-to-one matching by descending IoU.
pub fn match_detections(
    preds: &[Rect],
    gts: &[Rect],
    iou_thresh: f64,
) -> Result<Matching, EvalError> {
    check_thresh(iou_thresh)?;
    Ok(Candidates::new(preds, gts, iou_thresh)?.greedy(|_| true))
}

struct Prepared<'a> {
    group: &'a DetectionGroup,
    candidates: Candidates,
}

fn prepare(groups: &[DetectionGroup], iou_thresh: f64) -> Result<Vec<Prepared<'_>>, EvalError> {
    check_thresh(iou_thresh)?;
    groups
        .iter()
        .map(|group| {
            let rects: Vec<Rect> = group.preds.iter().map(|p| p.rect).collect();
            Ok(Prepared {
                group,
                candidates: Candidates::new(&rects, &group.gts, iou_thresh)?,
            })
        })
        .collect()
}

fn scores(groups: &[DetectionGroup]) -> Result<Vec<f64>, EvalError> {
    let mut all = Vec::new();
    for (gi, g) in groups.iter().enumerate() {
        for (pi, p) in g.preds.iter().enumerate() {
            match p.score {
                Some(s) if s.is_finite() => all.push(s),
                _ => {
                    return Err(EvalError::Protocol(format!(
                        "prediction {pi} in group {gi} has no finite score"
                    )))
                }
            }
        }
    }
    Ok(all)
}

fn pooled_at(prepared: &[Prepared<'_>], threshold: f64) -> (usize, usize, usize) {
    prepared.iter().fold((0, 0, 0), |(tp, fp, fn_), p| {
        let m = p
            .candidates
            .greedy(|i| p.group.preds[i].score.unwrap_or(f64::NEG_INFINITY) >= threshold);
        (tp + m.tp, fp + m.fp, fn_ + m.fn_)
    })
}

/// Maximum corpus-pooled F1 over score thresholds (each distinct score plus
/// +∞); ties go to the higher threshold.
pub fn best_f1_sweep(groups: &[DetectionGroup], iou_thresh: f64) -> Result<SweepResult, EvalError> {
    let mut thresholds = scores(groups)?;
    thresholds.sort_by(|a, b| b.total_cmp(a));
    thresholds.dedup();
    thresholds.insert(0, f64::INFINITY);
    let prepared = prepare(groups, iou_thresh)?;
    let mut best: Option<SweepResult> = None;
    for threshold in thresholds {
        let (tp, fp, fn_) = pooled_at(&prepared, threshold);
        let (precision, recall, f1) = precision_recall_f1(tp, fp, fn_);
        if best.is_none_or(|b| f1 > b.f1) {
            best = Some(SweepResult {
                f1,
                precision,
                recall,
                threshold,
                tp,
                fp,
                fn_,
            });
        }
    }
    Ok(best.expect("+inf is always a candidate"))
}

pub fn eval_detection(
    preds: &[AnnotationRecord],
    gts: &[AnnotationRecord],
    iou_thresh: f64,
    best_f1: bool,
) -> Result<MetricReport, EvalError> {
    eval_detection_corpus(
        &Corpus::from_records(preds.to_vec())?,
        &Corpus::from_records(gts.to_vec())?,
        iou_thresh,
        best_f1,
    )
}

/// Detection report. Boxes compete within (image, label) groups; predicted
/// images absent from the ground truth contribute false positives. With
/// `best_f1` the operating point comes from [`best_f1_sweep`], otherwise every
/// prediction is kept. `per_site` is the F1 of each site's pooled counts,
/// weighted by its number of gt boxes.
pub fn eval_detection_corpus(
    preds: &Corpus,
    gts: &Corpus,
    iou_thresh: f64,
    best_f1: bool,
) -> Result<MetricReport, EvalError> {
    check_thresh(iou_thresh)?;
    let mut groups: BTreeMap<(String, String), (String, DetectionGroup)> = BTreeMap::new();
    for (corpus, is_gt) in [(gts, true), (preds, false)] {
        for rec in corpus.iter() {
            let site = gts.get(&rec.image_id).map_or(&rec.site, |g| &g.site);
            for t in &rec.targets {
                let Some(rect) = t.bbox else { continue };
                let key = (rec.image_id.clone(), t.label.clone());
                let (_, group) = groups
                    .entry(key)
                    .or_insert_with(|| (site.clone(), DetectionGroup::default()));
                if is_gt {
                    group.gts.push(rect);
                } else {
                    group.preds.push(ScoredBox {
                        rect,
                        score: t.score,
                    });
                }
            }
        }
    }
    let sites: Vec<String> = groups.values().map(|(s, _)| s.clone()).collect();
    let groups: Vec<DetectionGroup> = groups.into_values().map(|(_, g)| g).collect();

    let threshold = if best_f1 {
        Some(best_f1_sweep(&groups, iou_thresh)?.threshold)
    } else {
        None
    };
    let prepared = prepare(&groups, iou_thresh)?;
    let mut site_counts: BTreeMap<String, (usize, usize, usize)> = BTreeMap::new();
    for (p, site) in prepared.iter().zip(&sites) {
        let m = p.candidates.greedy(|i| match threshold {
            None => true,
            Some(t) => p.group.preds[i].score.unwrap_or(f64::NEG_INFINITY) >= t,
        });
        let c = site_counts.entry(site.clone()).or_default();
        *c = (c.0 + m.tp, c.1 + m.fp, c.2 + m.fn_);
    }
    let (tp, fp, fn_) = site_counts
        .values()
        .fold((0, 0, 0), |a, c| (a.0 + c.0, a.1 + c.1, a.2 + c.2));
    let per_site = site_counts
        .into_iter()
        .map(|(site, (tp, fp, fn_))| (site, (precision_recall_f1(tp, fp, fn_).2, tp + fn_)))
        .collect();
    let mut report = MetricReport::weighted(EvalTask::Detection, per_site);
    let (precision, recall, f1) = precision_recall_f1(tp, fp, fn_);
    report.detection = Some(DetectionSummary {
        precision,
        recall,
        f1,
        threshold,
        iou_thresh,
        tp,
        fp,
        fn_,
    });
    Ok(report)
}
