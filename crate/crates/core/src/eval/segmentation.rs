use std::collections::BTreeMap;

use super::record::label_matched;
use super::{iou_masks, rle_decode, AnnotationRecord, Corpus, EvalError, EvalTask, MetricReport};

pub fn eval_segmentation(
    preds: &[AnnotationRecord],
    gts: &[AnnotationRecord],
) -> Result<MetricReport, EvalError> {
    eval_segmentation_corpus(
        &Corpus::from_records(preds.to_vec())?,
        &Corpus::from_records(gts.to_vec())?,
    )
}

/// mIoU in percent: per (image, target) IoU against the label-matched
/// prediction, averaged within each site, support-weighted across sites.
pub fn eval_segmentation_corpus(preds: &Corpus, gts: &Corpus) -> Result<MetricReport, EvalError> {
    let mut by_site: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for gt in gts.iter() {
        let pred = preds.get(&gt.image_id).map(|p| p.targets.as_slice());
        let matched = label_matched(&gt.targets, pred);
        for (target, cand) in gt.targets.iter().zip(matched) {
            let gt_mask = target.mask.as_ref().ok_or_else(|| {
                EvalError::Protocol(format!(
                    "image {:?}: gt target {:?} has no mask",
                    gt.image_id, target.label
                ))
            })?;
            let gt_mask = rle_decode(gt_mask)?;
            let iou = match cand.and_then(|c| c.mask.as_ref()) {
                Some(m) => iou_masks(&rle_decode(m)?, &gt_mask)?,
                None => 0.0,
            };
            by_site.entry(gt.site.clone()).or_default().push(iou);
        }
    }
    let sites = by_site
        .into_iter()
        .map(|(site, mut v)| {
            let n = v.len();
            (site, (100.0 * super::report::ordered_mean(&mut v), n))
        })
        .collect();
    Ok(MetricReport::weighted(EvalTask::Segmentation, sites))
}
