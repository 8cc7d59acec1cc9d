use std::collections::BTreeMap;

use super::record::label_matched;
use super::report::ordered_mean;
use super::{AnnotationRecord, Corpus, EvalError, EvalTask, MetricReport};

pub fn eval_keypoints(
    preds: &[AnnotationRecord],
    gts: &[AnnotationRecord],
) -> Result<MetricReport, EvalError> {
    eval_keypoints_corpus(
        &Corpus::from_records(preds.to_vec())?,
        &Corpus::from_records(gts.to_vec())?,
    )
}

/// Mean distance error in pixels. Each image contributes the mean Euclidean
/// distance over its name-matched keypoints; images lacking any predicted
/// point are counted in `incomplete` and left out. Images without gt
/// keypoints are skipped.
pub fn eval_keypoints_corpus(preds: &Corpus, gts: &Corpus) -> Result<MetricReport, EvalError> {
    let mut by_site: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    let mut incomplete = 0usize;
    for gt in gts.iter() {
        let pred = preds.get(&gt.image_id).map(|p| p.targets.as_slice());
        let matched = label_matched(&gt.targets, pred);
        let mut dists = Vec::new();
        let mut complete = true;
        for (target, cand) in gt.targets.iter().zip(matched) {
            let Some(gt_kps) = &target.keypoints else {
                continue;
            };
            let pred_kps = cand.and_then(|c| c.keypoints.as_deref()).unwrap_or(&[]);
            for kp in gt_kps {
                match pred_kps.iter().find(|p| p.name == kp.name) {
                    Some(p) => dists.push((p.x - kp.x).hypot(p.y - kp.y)),
                    None => complete = false,
                }
            }
        }
        if !complete {
            incomplete += 1;
        } else if !dists.is_empty() {
            by_site
                .entry(gt.site.clone())
                .or_default()
                .push(ordered_mean(&mut dists));
        }
    }
    let sites = by_site
        .into_iter()
        .map(|(site, mut v)| {
            let n = v.len();
            (site, (ordered_mean(&mut v), n))
        })
        .collect();
    let mut report = MetricReport::weighted(EvalTask::Keypoints, sites);
    report.incomplete = Some(incomplete);
    Ok(report)
}
