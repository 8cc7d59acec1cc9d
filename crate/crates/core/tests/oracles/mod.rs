//! Brute-force references for the detection protocol, shared by test targets.

use dynmask_core::eval::{iou_boxes, Rect};

/// One image: `(scored predictions, gt boxes)`.
pub type ScoredImage = (Vec<(Rect, f64)>, Vec<Rect>);
pub type ScoredCorpus = Vec<ScoredImage>;

/// IoU of half-open integer boxes by counting pixels of a 32×32 grid.
pub fn raster_iou(a: [i64; 4], b: [i64; 4]) -> f64 {
    let inside = |r: [i64; 4], x: i64, y: i64| x >= r[0] && x < r[2] && y >= r[1] && y < r[3];
    let (mut inter, mut union) = (0u64, 0u64);
    for y in 0..32 {
        for x in 0..32 {
            let (p, q) = (inside(a, x, y), inside(b, x, y));
            inter += u64::from(p && q);
            union += u64::from(p || q);
        }
    }
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}

/// Independent greedy matcher over a kept subset, original indices preserved.
pub fn oracle_counts(
    preds: &[(Rect, f64)],
    keep: &[bool],
    gts: &[Rect],
    thresh: f64,
) -> (usize, usize, usize) {
    let mut pairs = Vec::new();
    for (i, (p, _)) in preds.iter().enumerate().filter(|(i, _)| keep[*i]) {
        for (j, g) in gts.iter().enumerate() {
            let iou = iou_boxes(p, g).unwrap();
            if iou >= thresh {
                pairs.push((iou, i, j));
            }
        }
    }
    pairs.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let (mut pu, mut gu) = (vec![false; preds.len()], vec![false; gts.len()]);
    let mut tp = 0;
    for (_, i, j) in pairs {
        if !pu[i] && !gu[j] {
            pu[i] = true;
            gu[j] = true;
            tp += 1;
        }
    }
    let kept = keep.iter().filter(|&&k| k).count();
    (tp, kept - tp, gts.len() - tp)
}

/// Maximum F1 over every prediction subset closed under "higher score",
/// with ties going to the smaller subset.
pub fn brute_force_best(groups: &[ScoredImage], thresh: f64) -> (f64, f64) {
    let flat: Vec<(usize, usize, f64)> = groups
        .iter()
        .enumerate()
        .flat_map(|(g, (p, _))| p.iter().enumerate().map(move |(i, x)| (g, i, x.1)))
        .collect();
    let n = flat.len();
    let mut best: Option<(usize, f64, f64)> = None;
    for bits in 0u32..(1 << n) {
        let inset = |k: usize| bits & (1 << k) != 0;
        let closed = (0..n).all(|a| !inset(a) || (0..n).all(|b| flat[b].2 < flat[a].2 || inset(b)));
        if !closed {
            continue;
        }
        let (mut tp, mut fp, mut fn_) = (0, 0, 0);
        for (g, (preds, gts)) in groups.iter().enumerate() {
            let keep: Vec<bool> = (0..preds.len())
                .map(|i| inset(flat.iter().position(|f| f.0 == g && f.1 == i).unwrap()))
                .collect();
            let c = oracle_counts(preds, &keep, gts, thresh);
            tp += c.0;
            fp += c.1;
            fn_ += c.2;
        }
        let f1 = if tp == 0 {
            0.0
        } else {
            2.0 * tp as f64 / (2 * tp + fp + fn_) as f64
        };
        let threshold = (0..n)
            .filter(|&k| inset(k))
            .map(|k| flat[k].2)
            .fold(f64::INFINITY, f64::min);
        let size = bits.count_ones() as usize;
        let better = match best {
            None => true,
            Some((bs, bf, _)) => f1 > bf + 1e-12 || ((f1 - bf).abs() <= 1e-12 && size < bs),
        };
        if better {
            best = Some((size, f1, threshold));
        }
    }
    let (_, f1, t) = best.unwrap();
    (f1, t)
}
