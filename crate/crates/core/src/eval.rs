//! Detection matching, precision/recall and discrete ROC summaries.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::bbox::BBox;

pub fn iou(a: &BBox, b: &BBox) -> f64 {
    a.iou(b)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoredBox {
    pub bbox: BBox,
    pub confidence: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub confidence: f64,
    pub true_positive: bool,
    pub image: String,
    pub bbox: BBox,
    pub matched_gt: Option<usize>,
}

/// Greedy matching: detections in descending confidence each claim the
/// unclaimed ground truth they overlap most, when that IoU reaches `iou_thresh`.
pub fn match_detections(image: &str, dets: &[ScoredBox], gts: &[BBox], iou_thresh: f64) -> Vec<EvalRecord> {
    let mut order: Vec<&ScoredBox> = dets.iter().collect();
    order.sort_by(|a, b| b.confidence.total_cmp(&a.confidence).then(a.bbox.tie_order(&b.bbox)));
    let mut claimed = vec![false; gts.len()];
    order
        .into_iter()
        .map(|d| {
            let best = gts
                .iter()
                .enumerate()
                .filter(|(i, _)| !claimed[*i])
                .map(|(i, g)| (i, iou(&d.bbox, g)))
                .fold(None::<(usize, f64)>, |acc, (i, v)| match acc {
                    Some((_, bv)) if bv >= v => acc,
                    _ => Some((i, v)),
                });
            let matched = best.filter(|&(_, v)| v >= iou_thresh).map(|(i, _)| i);
            if let Some(i) = matched {
                claimed[i] = true;
            }
            EvalRecord {
                confidence: d.confidence,
                true_positive: matched.is_some(),
                image: image.to_string(),
                bbox: d.bbox,
                matched_gt: matched,
            }
        })
        .collect()
}

/// Matches every image of `dets` against `gts`, in image-id order. Images
/// missing from `dets` contribute only false negatives.
pub fn match_all(
    dets: &BTreeMap<String, Vec<ScoredBox>>,
    gts: &BTreeMap<String, Vec<BBox>>,
    iou_thresh: f64,
) -> (Vec<EvalRecord>, usize) {
    let empty = Vec::new();
    let mut records = Vec::new();
    for (id, boxes) in gts {
        records.extend(match_detections(id, dets.get(id).unwrap_or(&empty), boxes, iou_thresh));
    }
    // detections on images without annotations are all false positives
    for (id, d) in dets.iter().filter(|(id, _)| !gts.contains_key(*id)) {
        records.extend(match_detections(id, d, &[], iou_thresh));
    }
    let total_gt = gts.values().map(Vec::len).sum();
    (records, total_gt)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub threshold: f64,
    pub x: f64,
    pub y: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurveData {
    pub points: Vec<CurvePoint>,
    /// AP for precision/recall curves, normalized AUC for ROC curves.
    pub summary: f64,
}

/// Cumulative (threshold, TP, FP) after each distinct confidence, highest first.
fn sweep(records: &[EvalRecord]) -> Vec<(f64, usize, usize)> {
    let mut sorted: Vec<&EvalRecord> = records.iter().collect();
    sorted.sort_by(|a, b| {
        b.confidence
            .total_cmp(&a.confidence)
            .then_with(|| a.image.cmp(&b.image))
            .then(a.bbox.tie_order(&b.bbox))
    });
    let mut out: Vec<(f64, usize, usize)> = Vec::new();
    let (mut tp, mut fp) = (0, 0);
    for (i, r) in sorted.iter().enumerate() {
        if r.true_positive {
            tp += 1;
        } else {
            fp += 1;
        }
        let last_of_group = sorted.get(i + 1).is_none_or(|n| n.confidence != r.confidence);
        if last_of_group {
            out.push((r.confidence, tp, fp));
        }
    }
    out
}

/// Precision (y) against recall (x) at every distinct threshold, with
/// AP = Σ (R_i − R_{i−1}) · P_i.
pub fn pr_curve(records: &[EvalRecord], total_gt: usize) -> CurveData {
    if total_gt == 0 {
        return CurveData {
            points: Vec::new(),
            summary: 0.0,
        };
    }
    let mut points = Vec::new();
    let mut ap = 0.0;
    let mut prev_recall = 0.0;
    for (threshold, tp, fp) in sweep(records) {
        let precision = tp as f64 / (tp + fp) as f64;
        let recall = tp as f64 / total_gt as f64;
        ap += (recall - prev_recall) * precision;
        prev_recall = recall;
        points.push(CurvePoint {
            threshold,
            x: recall,
            y: precision,
        });
    }
    CurveData { points, summary: ap }
}

/// True-positive rate (y) against the false-positive count (x). The
/// summary is the area under the step curve over `[0, max FP]` divided by
/// `max FP`; with no false positives at all it is the final TPR.
pub fn roc_curve(records: &[EvalRecord], total_gt: usize) -> CurveData {
    let tpr = |tp: usize| if total_gt == 0 { 0.0 } else { tp as f64 / total_gt as f64 };
    let mut points = vec![CurvePoint {
        threshold: f64::INFINITY,
        x: 0.0,
        y: 0.0,
    }];
    for (threshold, tp, fp) in sweep(records) {
        points.push(CurvePoint {
            threshold,
            x: fp as f64,
            y: tpr(tp),
        });
    }
    let max_fp = points.last().map_or(0.0, |p| p.x);
    let summary = if max_fp == 0.0 {
        points.last().map_or(0.0, |p| p.y)
    } else {
        step_area(&points) / max_fp
    };
    CurveData { points, summary }
}

/// ∫ over `[0, last x]` of the highest TPR reached at each FP count.
fn step_area(points: &[CurvePoint]) -> f64 {
    let mut area = 0.0;
    let mut i = 0;
    while i < points.len() {
        // best height at this x is the last point sharing it
        let mut j = i;
        while j + 1 < points.len() && points[j + 1].x == points[i].x {
            j += 1;
        }
        if let Some(next) = points.get(j + 1) {
            area += (next.x - points[j].x) * points[j].y;
        }
        i = j + 1;
    }
    area
}

/// Rectangle adjustment for ellipse-annotated benchmarks: the height grows
/// by 25% about the center and the center moves up by 10% of the original
/// height (of the extended height when `shift_by_extended`). Clamped to the
/// image when its size is given; degenerate boxes are returned unchanged.
pub fn adapt_box_for_ellipse_eval(b: &BBox, image_size: Option<(usize, usize)>, shift_by_extended: bool) -> BBox {
    if b.is_degenerate() {
        return *b;
    }
    let new_h = b.h * 1.25;
    let shift = 0.1 * if shift_by_extended { new_h } else { b.h };
    let (cx, cy) = b.center();
    let out = BBox::centered(cx, cy - shift, b.w, new_h);
    match image_size {
        Some((w, h)) => out.clamp_to(w, h),
        None => out,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub ap: f64,
    pub auc: f64,
    /// Matched faces over all faces, at the lowest confidence.
    pub recall: f64,
    pub n_images: usize,
    pub n_gt: usize,
    pub n_detections: usize,
}

/// Matching, both curves and their summary in one pass.
pub fn evaluate(
    dets: &BTreeMap<String, Vec<ScoredBox>>,
    gts: &BTreeMap<String, Vec<BBox>>,
    iou_thresh: f64,
) -> (CurveData, CurveData, EvalSummary) {
    let (records, total_gt) = match_all(dets, gts, iou_thresh);
    let pr = pr_curve(&records, total_gt);
    let roc = roc_curve(&records, total_gt);
    let tp = records.iter().filter(|r| r.true_positive).count();
    let summary = EvalSummary {
        ap: pr.summary,
        auc: roc.summary,
        recall: if total_gt == 0 { 0.0 } else { tp as f64 / total_gt as f64 },
        n_images: gts.len(),
        n_gt: total_gt,
        n_detections: records.len(),
    };
    (pr, roc, summary)
}
