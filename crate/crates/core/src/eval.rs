//! Detection-to-truth matching and the PR/AP/mAP/F1 evaluation stack.
//!
//! AP uses the 101-point interpolated precision grid and mAP@0.5:0.95
//! averages over the ten IoU thresholds 0.50, 0.55, ..., 0.95. Matching is
//! greedy by descending confidence; on equal IoU the lower truth index wins,
//! and equal confidences keep their input order. Pooled rankings across
//! images break confidence ties by image id, so results never depend on the
//! order images are visited.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{iou, Annotation, Detection};

/// IoU thresholds of the mAP@0.5:0.95 family.
pub const IOU_THRESHOLDS: [f64; 10] = [0.50, 0.55, 0.60, 0.65, 0.70, 0.75, 0.80, 0.85, 0.90, 0.95];

/// Number of points on the interpolated-precision recall grid.
pub const AP_GRID_POINTS: usize = 101;

/// Number of points on the confidence grid swept for the best F1.
pub const F1_GRID_POINTS: usize = 1001;

/// One matched (detection, truth) pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchPair {
    pub detection: usize,
    pub truth: usize,
    pub iou: f64,
}

/// Outcome of matching one detection list against one truth list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchSet {
    /// Pairs in the order detections were processed (descending confidence).
    pub pairs: Vec<MatchPair>,
    /// Detection indices left unmatched (false positives), ascending.
    pub unmatched_detections: Vec<usize>,
    /// Truth indices left unmatched (false negatives), ascending.
    pub unmatched_truths: Vec<usize>,
    pub iou_threshold: f64,
}

/// Detection indices sorted by descending confidence, ties in input order.
fn confidence_order(dets: &[Detection]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&a, &b| dets[b].confidence.total_cmp(&dets[a].confidence));
    order
}

/// Core greedy rule: walk detections in `order`, assigning each the still
/// unmatched truth with the highest IoU at or above `thr` (lowest truth
/// index on ties). Returns the assigned truth per detection index.
fn greedy_assign(
    iou_mat: &[Vec<f64>],
    order: &[usize],
    thr: f64,
    n_truths: usize,
) -> Vec<Option<usize>> {
    let mut assigned: Vec<Option<usize>> = vec![None; iou_mat.len()];
    let mut used = vec![false; n_truths];
    for &di in order {
        let mut best: Option<(usize, f64)> = None;
        for (ti, &v) in iou_mat[di].iter().enumerate() {
            if used[ti] || v < thr {
                continue;
            }
            if best.map_or(true, |(_, bv)| v > bv) {
                best = Some((ti, v));
            }
        }
        if let Some((ti, _)) = best {
            used[ti] = true;
            assigned[di] = Some(ti);
        }
    }
    assigned
}

fn iou_matrix(dets: &[Detection], truths: &[Annotation]) -> Vec<Vec<f64>> {
    dets.iter()
        .map(|d| truths.iter().map(|t| iou(&d.bbox, &t.bbox)).collect())
        .collect()
}

/// Match detections of one category against truths of the same category.
///
/// Callers group by category first; this function does not look at
/// `category_id`.
pub fn match_detections(dets: &[Detection], truths: &[Annotation], iou_threshold: f64) -> MatchSet {
    let order = confidence_order(dets);
    let mat = iou_matrix(dets, truths);
    let assigned = greedy_assign(&mat, &order, iou_threshold, truths.len());

    let mut pairs = Vec::new();
    for &di in &order {
        if let Some(ti) = assigned[di] {
            pairs.push(MatchPair {
                detection: di,
                truth: ti,
                iou: mat[di][ti],
            });
        }
    }
    let matched_truths: Vec<bool> = {
        let mut v = vec![false; truths.len()];
        for p in &pairs {
            v[p.truth] = true;
        }
        v
    };
    MatchSet {
        unmatched_detections: (0..dets.len()).filter(|&i| assigned[i].is_none()).collect(),
        unmatched_truths: (0..truths.len()).filter(|&i| !matched_truths[i]).collect(),
        pairs,
        iou_threshold,
    }
}

/// One (recall, precision) point at a detection rank.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrPoint {
    pub recall: f64,
    pub precision: f64,
}

/// Cumulative precision/recall per rank plus the interpolated AP.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrCurve {
    pub points: Vec<PrPoint>,
    pub ap: f64,
    pub iou_threshold: f64,
}

/// AP on the 101-point grid from a ranked list of (confidence, is_tp)
/// outcomes sorted by descending confidence.
fn ap_from_ranked(ranked: &[(f64, bool)], n_truths: usize) -> (Vec<PrPoint>, f64) {
    debug_assert!(n_truths > 0);
    let mut points = Vec::with_capacity(ranked.len());
    let mut tp = 0usize;
    let mut fp = 0usize;
    for &(_, is_tp) in ranked {
        if is_tp {
            tp += 1;
        } else {
            fp += 1;
        }
        points.push(PrPoint {
            recall: tp as f64 / n_truths as f64,
            precision: tp as f64 / (tp + fp) as f64,
        });
    }

    // suffix_max[i] = best precision at rank >= i
    let mut suffix_max = vec![0.0f64; points.len()];
    let mut running = 0.0f64;
    for i in (0..points.len()).rev() {
        running = running.max(points[i].precision);
        suffix_max[i] = running;
    }

    let mut total = 0.0;
    for g in 0..AP_GRID_POINTS {
        let r = g as f64 / (AP_GRID_POINTS - 1) as f64;
        // first rank reaching recall r; recalls are non-decreasing
        let idx = points.partition_point(|p| p.recall < r);
        if idx < points.len() {
            total += suffix_max[idx];
        }
    }
    (points, total / AP_GRID_POINTS as f64)
}

/// Precision/recall curve and AP for a single category's detections against
/// its truths (one pooled list; use [`map_summary`] for per-image data).
pub fn pr_curve(dets: &[Detection], truths: &[Annotation], iou_threshold: f64) -> Result<PrCurve> {
    if truths.is_empty() {
        return Err(Error::NoGroundTruth);
    }
    let ms = match_detections(dets, truths, iou_threshold);
    let mut is_tp = vec![false; dets.len()];
    for p in &ms.pairs {
        is_tp[p.detection] = true;
    }
    let ranked: Vec<(f64, bool)> = confidence_order(dets)
        .into_iter()
        .map(|di| (dets[di].confidence, is_tp[di]))
        .collect();
    let (points, ap) = ap_from_ranked(&ranked, truths.len());
    Ok(PrCurve {
        points,
        ap,
        iou_threshold,
    })
}

pub type DetectionsByImage = BTreeMap<String, Vec<Detection>>;
pub type TruthsByImage = BTreeMap<String, Vec<Annotation>>;

/// Per-category evaluation results.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CategoryEval {
    pub category_id: u32,
    /// AP at IoU 0.50.
    pub ap50: f64,
    /// AP averaged over IoU 0.50:0.05:0.95.
    pub ap5095: f64,
    /// Precision at the best-F1 confidence, IoU 0.50.
    pub precision: f64,
    /// Recall at the best-F1 confidence, IoU 0.50.
    pub recall: f64,
}

/// Full evaluation summary over all categories with ground truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub per_category: Vec<CategoryEval>,
    /// Unweighted mean of per-category AP at IoU 0.50.
    pub map50: f64,
    /// Unweighted mean of per-category AP over IoU 0.50:0.05:0.95.
    pub map5095: f64,
    pub best_f1: f64,
    pub best_f1_confidence: f64,
}

/// Pooled (confidence, is_tp) outcomes for one category at each requested
/// IoU threshold, plus the category's truth count.
///
/// Matching runs per image; the pooled ranking sorts by descending
/// confidence with ties resolved by (image id, input index), which makes the
/// result independent of image iteration order.
fn ranked_outcomes(
    dets_by_image: &DetectionsByImage,
    truths_by_image: &TruthsByImage,
    category: u32,
    thresholds: &[f64],
) -> (Vec<Vec<(f64, bool)>>, usize) {
    let mut ranked: Vec<Vec<(f64, bool)>> = vec![Vec::new(); thresholds.len()];
    let mut n_truths = 0usize;
    static NO_DETS: Vec<Detection> = Vec::new();
    for (image_id, truths) in truths_by_image {
        let tcat: Vec<Annotation> = truths
            .iter()
            .filter(|a| a.category_id == category)
            .copied()
            .collect();
        n_truths += tcat.len();
        let dcat: Vec<Detection> = dets_by_image
            .get(image_id)
            .unwrap_or(&NO_DETS)
            .iter()
            .filter(|d| d.category_id == category)
            .copied()
            .collect();
        if dcat.is_empty() {
            continue;
        }
        let order = confidence_order(&dcat);
        let mat = iou_matrix(&dcat, &tcat);
        for (k, &thr) in thresholds.iter().enumerate() {
            let assigned = greedy_assign(&mat, &order, thr, tcat.len());
            for &di in &order {
                ranked[k].push((dcat[di].confidence, assigned[di].is_some()));
            }
        }
    }
    // BTreeMap iteration already yields (image id asc, rank-in-image asc);
    // a stable sort on confidence alone keeps that as the tie order.
    for r in ranked.iter_mut() {
        r.sort_by(|a, b| b.0.total_cmp(&a.0));
    }
    (ranked, n_truths)
}

fn check_image_keys(
    dets_by_image: &DetectionsByImage,
    truths_by_image: &TruthsByImage,
) -> Result<()> {
    for id in dets_by_image.keys() {
        if !truths_by_image.contains_key(id) {
            return Err(Error::DatasetMismatch(format!(
                "detections reference unknown image {id:?}"
            )));
        }
    }
    Ok(())
}

/// Categories (из the caller's list) that have at least one truth instance.
fn categories_with_truth(truths_by_image: &TruthsByImage, categories: &[u32]) -> Vec<u32> {
    categories
        .iter()
        .copied()
        .filter(|&c| {
            truths_by_image
                .values()
                .any(|anns| anns.iter().any(|a| a.category_id == c))
        })
        .collect()
}

/// Evaluate detections against ground truth: per-category AP at 0.50 and
/// 0.50:0.95, mAP means, and precision/recall at the best-F1 confidence.
///
/// Categories without any ground-truth instance are excluded from the means
/// rather than scored zero. Errors with [`Error::NoGroundTruth`] when no
/// category has truth.
pub fn map_summary(
    dets_by_image: &DetectionsByImage,
    truths_by_image: &TruthsByImage,
    categories: &[u32],
) -> Result<EvalSummary> {
    check_image_keys(dets_by_image, truths_by_image)?;
    let cats = categories_with_truth(truths_by_image, categories);
    if cats.is_empty() {
        return Err(Error::NoGroundTruth);
    }

    let sweep = f1_sweep(dets_by_image, truths_by_image, categories)?;
    let best_conf = sweep.best_confidence;

    let mut per_category = Vec::with_capacity(cats.len());
    for &c in &cats {
        let (ranked, n_truths) =
            ranked_outcomes(dets_by_image, truths_by_image, c, &IOU_THRESHOLDS);
        debug_assert!(n_truths > 0);
        let mut aps = [0.0f64; IOU_THRESHOLDS.len()];
        for (k, r) in ranked.iter().enumerate() {
            aps[k] = ap_from_ranked(r, n_truths).1;
        }
        // precision/recall at the best-F1 confidence, IoU 0.50
        let at50 = &ranked[0];
        let kept = at50.partition_point(|&(conf, _)| conf >= best_conf);
        let tp = at50[..kept].iter().filter(|&&(_, t)| t).count();
        let precision = if kept == 0 { 0.0 } else { tp as f64 / kept as f64 };
        let recall = tp as f64 / n_truths as f64;
        per_category.push(CategoryEval {
            category_id: c,
            ap50: aps[0],
            ap5095: aps.iter().sum::<f64>() / aps.len() as f64,
            precision,
            recall,
        });
    }

    let n = per_category.len() as f64;
    Ok(EvalSummary {
        map50: per_category.iter().map(|c| c.ap50).sum::<f64>() / n,
        map5095: per_category.iter().map(|c| c.ap5095).sum::<f64>() / n,
        best_f1: sweep.best_f1,
        best_f1_confidence: sweep.best_confidence,
        per_category,
    })
}

/// Harmonic mean of precision and recall, zero when both are zero.
pub fn f1_score(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

/// Mean precision, recall and F1 over categories at one confidence cutoff.
/// `f1` is the mean of per-category F1 values, not the F1 of the means.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct F1Point {
    pub confidence: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Mean-F1 curve over the 1001-point confidence grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct F1Sweep {
    pub points: Vec<F1Point>,
    pub best_f1: f64,
    /// Lowest grid confidence achieving `best_f1`.
    pub best_confidence: f64,
}

/// Sweep the confidence cutoff over {0.000, 0.001, ..., 1.000} and report
/// mean per-category F1 at IoU 0.50 for each cutoff.
pub fn f1_sweep(
    dets_by_image: &DetectionsByImage,
    truths_by_image: &TruthsByImage,
    categories: &[u32],
) -> Result<F1Sweep> {
    check_image_keys(dets_by_image, truths_by_image)?;
    let cats = categories_with_truth(truths_by_image, categories);
    if cats.is_empty() {
        return Err(Error::NoGroundTruth);
    }

    struct CatRank {
        ranked: Vec<(f64, bool)>,
        tp_prefix: Vec<usize>,
        n_truths: usize,
    }
    let per_cat: Vec<CatRank> = cats
        .iter()
        .map(|&c| {
            let (mut ranked, n_truths) =
                ranked_outcomes(dets_by_image, truths_by_image, c, &[0.5]);
            let ranked = std::mem::take(&mut ranked[0]);
            let mut tp_prefix = Vec::with_capacity(ranked.len() + 1);
            tp_prefix.push(0);
            for &(_, is_tp) in &ranked {
                tp_prefix.push(tp_prefix.last().unwrap() + usize::from(is_tp));
            }
            CatRank {
                ranked,
                tp_prefix,
                n_truths,
            }
        })
        .collect();

    let mut points = Vec::with_capacity(F1_GRID_POINTS);
    let mut best_f1 = -1.0;
    let mut best_confidence = 0.0;
    for g in 0..F1_GRID_POINTS {
        let tau = g as f64 / (F1_GRID_POINTS - 1) as f64;
        let mut sum_p = 0.0;
        let mut sum_r = 0.0;
        let mut sum_f1 = 0.0;
        for cat in &per_cat {
            let kept = cat.ranked.partition_point(|&(conf, _)| conf >= tau);
            let tp = cat.tp_prefix[kept];
            let p = if kept == 0 { 0.0 } else { tp as f64 / kept as f64 };
            let r = tp as f64 / cat.n_truths as f64;
            sum_p += p;
            sum_r += r;
            sum_f1 += f1_score(p, r);
        }
        let n = per_cat.len() as f64;
        let point = F1Point {
            confidence: tau,
            precision: sum_p / n,
            recall: sum_r / n,
            f1: sum_f1 / n,
        };
        if point.f1 > best_f1 {
            best_f1 = point.f1;
            best_confidence = tau;
        }
        points.push(point);
    }
    Ok(F1Sweep {
        points,
        best_f1,
        best_confidence,
    })
}
