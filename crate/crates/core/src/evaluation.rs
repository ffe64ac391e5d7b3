//! Video instance segmentation metrics.
//!
//! Tracks are compared with spatio-temporal IoU (per-frame mask
//! intersections and unions summed over the whole video), matched greedily
//! in score order per video and category, and summarized as COCO-style
//! interpolated AP and capped-detection AR.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::rle::{intersection_area, RleMask};
use crate::types::{Track, VideoGroundTruth, VideoTracks};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub iou_thresholds: Vec<f64>,
    pub recall_points: u32,
    pub max_detections: Vec<u32>,
    pub category_agnostic: bool,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            iou_thresholds: (0..10).map(|i| (50 + 5 * i) as f64 / 100.0).collect(),
            recall_points: 101,
            max_detections: vec![1, 10],
            category_agnostic: false,
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iou_thresholds.is_empty() {
            return Err(Error::InvalidConfig("eval.iou_thresholds must not be empty".into()));
        }
        if self.iou_thresholds.iter().any(|t| !(*t > 0.0 && *t <= 1.0)) {
            return Err(Error::InvalidConfig("eval.iou_thresholds must lie in (0,1]".into()));
        }
        if self.iou_thresholds.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidConfig(
                "eval.iou_thresholds must be strictly increasing".into(),
            ));
        }
        if self.recall_points < 2 {
            return Err(Error::InvalidConfig("eval.recall_points must be at least 2".into()));
        }
        if self.max_detections.is_empty() || self.max_detections.contains(&0) {
            return Err(Error::InvalidConfig(
                "eval.max_detections must be non-empty and positive".into(),
            ));
        }
        Ok(())
    }
}

/// The five summary numbers for one category (or their average).
#[derive(Debug, Clone, PartialEq)]
pub struct Metrics {
    pub ap: f64,
    pub ap50: f64,
    pub ap75: f64,
    /// Average recall keyed by the per-video detection cap.
    pub ar: BTreeMap<u32, f64>,
}

impl Metrics {
    pub fn ar_at(&self, k: u32) -> Option<f64> {
        self.ar.get(&k).copied()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    /// `None` for categories without ground truth. Empty when evaluating
    /// category-agnostically.
    pub per_category: BTreeMap<u32, Option<Metrics>>,
    pub overall: Option<Metrics>,
}

fn frame_mask<'a>(t: &'a Track, frame: u32, empty: &'a RleMask) -> &'a RleMask {
    t.mask_at(frame).unwrap_or(empty)
}

fn check_dims(t: &Track, dims: (u32, u32)) -> Result<()> {
    for e in t.entries.values() {
        if let Some(m) = &e.mask {
            if (m.height, m.width) != dims {
                return Err(Error::DimensionMismatch(format!(
                    "track {} mask {}x{} in video {}x{}",
                    t.track_id, m.height, m.width, dims.0, dims.1
                )));
            }
        }
    }
    Ok(())
}

/// `Σ_t |A_t ∩ B_t| / Σ_t |A_t ∪ B_t|` over frames `0..video_length`, with
/// missing entries or masks counting as empty; 1.0 when both sums vanish.
/// `dims` is `(height, width)`.
pub fn st_iou(a: &Track, b: &Track, video_length: u32, dims: (u32, u32)) -> Result<f64> {
    check_dims(a, dims)?;
    check_dims(b, dims)?;
    let empty = RleMask::empty(dims.0, dims.1);
    let frames: BTreeSet<u32> = a
        .entries
        .keys()
        .chain(b.entries.keys())
        .copied()
        .filter(|f| *f < video_length)
        .collect();
    let (mut inter, mut union) = (0u64, 0u64);
    for f in frames {
        let (ma, mb) = (frame_mask(a, f, &empty), frame_mask(b, f, &empty));
        let i = intersection_area(ma, mb)?;
        inter += i;
        union += ma.area() + mb.area() - i;
    }
    Ok(if union == 0 { 1.0 } else { inter as f64 / union as f64 })
}

/// Greedy matching for one video: predictions in descending score (stable
/// on input order) each take the unmatched ground truth with the highest IoU
/// at or above `threshold`; ties go to the lower ground-truth index.
/// Returns the matched ground-truth index per prediction.
pub fn greedy_match(ious: &Matrix, order: &[usize], threshold: f64) -> Vec<Option<usize>> {
    let mut taken = vec![false; ious.cols()];
    let mut out = vec![None; ious.rows()];
    for &p in order {
        let mut best: Option<(usize, f64)> = None;
        for g in 0..ious.cols() {
            let v = ious[(p, g)];
            if !taken[g] && v >= threshold && best.is_none_or(|(_, b)| v > b) {
                best = Some((g, v));
            }
        }
        if let Some((g, _)) = best {
            taken[g] = true;
            out[p] = Some(g);
        }
    }
    out
}

/// Track-level wrapper around [`greedy_match`]: returns `(pred, gt)` index
/// pairs in processing order; unmatched ground truth is absent from the list.
pub fn match_tracks(
    pred_tracks: &[Track],
    gt_tracks: &[Track],
    iou_threshold: f64,
    video_length: u32,
    dims: (u32, u32),
) -> Result<Vec<(usize, Option<usize>)>> {
    let mut ious = Matrix::zeros(pred_tracks.len(), gt_tracks.len());
    for (i, p) in pred_tracks.iter().enumerate() {
        for (j, g) in gt_tracks.iter().enumerate() {
            ious[(i, j)] = st_iou(p, g, video_length, dims)?;
        }
    }
    let order = score_order(pred_tracks);
    let m = greedy_match(&ious, &order, iou_threshold);
    Ok(order.into_iter().map(|p| (p, m[p])).collect())
}

/// Prediction indices by descending score, then ascending track id, then
/// input position.
fn score_order(tracks: &[Track]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..tracks.len()).collect();
    order.sort_by(|&a, &b| {
        tracks[b]
            .score
            .total_cmp(&tracks[a].score)
            .then(tracks[a].track_id.cmp(&tracks[b].track_id))
    });
    order
}

/// Interpolated AP from true/false-positive flags already sorted by
/// descending score. `None` when there is no ground truth.
pub fn average_precision(tp_flags: &[bool], n_gt: usize, recall_points: u32) -> Option<f64> {
    if n_gt == 0 {
        return None;
    }
    let mut recall = Vec::with_capacity(tp_flags.len());
    let mut precision = Vec::with_capacity(tp_flags.len());
    let (mut tp, mut fp) = (0usize, 0usize);
    for &flag in tp_flags {
        if flag {
            tp += 1;
        } else {
            fp += 1;
        }
        recall.push(tp as f64 / n_gt as f64);
        precision.push(tp as f64 / (tp + fp) as f64);
    }
    for i in (0..precision.len().saturating_sub(1)).rev() {
        precision[i] = precision[i].max(precision[i + 1]);
    }
    let steps = (recall_points - 1) as f64;
    let total: f64 = (0..recall_points)
        .map(|k| {
            let r = k as f64 / steps;
            let idx = recall.partition_point(|&x| x < r);
            precision.get(idx).copied().unwrap_or(0.0)
        })
        .sum();
    Some(total / recall_points as f64)
}

/// Per (video, category group) data: prediction scores/ids and the IoU table.
struct Cell {
    video_id: u64,
    scores: Vec<f64>,
    track_ids: Vec<u64>,
    order: Vec<usize>,
    ious: Matrix,
}

struct ThresholdOutcome {
    ap: Option<f64>,
    recall_at: Vec<f64>,
}

fn evaluate_group(cells: &[&Cell], n_gt: usize, threshold: f64, cfg: &EvalConfig) -> ThresholdOutcome {
    // (score, video, track id, position, tp)
    let mut all: Vec<(f64, u64, u64, usize, bool)> = Vec::new();
    let mut hits_at = vec![0usize; cfg.max_detections.len()];
    for cell in cells {
        let m = greedy_match(&cell.ious, &cell.order, threshold);
        for (rank, &p) in cell.order.iter().enumerate() {
            let tp = m[p].is_some();
            all.push((cell.scores[p], cell.video_id, cell.track_ids[p], p, tp));
            for (k, &cap) in cfg.max_detections.iter().enumerate() {
                if tp && rank < cap as usize {
                    hits_at[k] += 1;
                }
            }
        }
    }
    all.sort_by(|a, b| {
        b.0.total_cmp(&a.0)
            .then(a.1.cmp(&b.1))
            .then(a.2.cmp(&b.2))
            .then(a.3.cmp(&b.3))
    });
    let flags: Vec<bool> = all.iter().map(|x| x.4).collect();
    ThresholdOutcome {
        ap: average_precision(&flags, n_gt, cfg.recall_points),
        recall_at: hits_at
            .into_iter()
            .map(|h| if n_gt == 0 { 0.0 } else { h as f64 / n_gt as f64 })
            .collect(),
    }
}

fn group_metrics(cells: &[&Cell], n_gt: usize, cfg: &EvalConfig) -> Option<Metrics> {
    if n_gt == 0 {
        return None;
    }
    let per_t: Vec<ThresholdOutcome> = cfg
        .iou_thresholds
        .iter()
        .map(|&t| evaluate_group(cells, n_gt, t, cfg))
        .collect();
    let nt = per_t.len() as f64;
    let ap = per_t.iter().map(|o| o.ap.unwrap_or(0.0)).sum::<f64>() / nt;
    let at = |t: f64| {
        per_t
            .iter()
            .zip(&cfg.iou_thresholds)
            .find(|(_, &x)| (x - t).abs() < 1e-9)
            .map(|(o, _)| o.ap.unwrap_or(0.0))
            .unwrap_or_else(|| evaluate_group(cells, n_gt, t, cfg).ap.unwrap_or(0.0))
    };
    let ar = cfg
        .max_detections
        .iter()
        .enumerate()
        .map(|(k, &cap)| (cap, per_t.iter().map(|o| o.recall_at[k]).sum::<f64>() / nt))
        .collect();
    Some(Metrics {
        ap,
        ap50: at(0.5),
        ap75: at(0.75),
        ar,
    })
}

fn mean_metrics(items: &[&Metrics]) -> Option<Metrics> {
    if items.is_empty() {
        return None;
    }
    let n = items.len() as f64;
    let avg = |f: &dyn Fn(&Metrics) -> f64| items.iter().map(|m| f(m)).sum::<f64>() / n;
    let ar = items[0].ar.keys().map(|&k| (k, avg(&|m: &Metrics| m.ar[&k]))).collect();
    Some(Metrics {
        ap: avg(&|m| m.ap),
        ap50: avg(&|m| m.ap50),
        ap75: avg(&|m| m.ap75),
        ar,
    })
}

/// Full evaluation over a corpus.
///
/// AP is averaged over the IoU thresholds; ARk over thresholds of the recall
/// reached by each video's k highest-scoring predictions. Both are averaged
/// over categories that have ground truth. AP itself is not capped.
pub fn evaluate(
    predictions: &[VideoTracks],
    ground_truth: &[VideoGroundTruth],
    cfg: &EvalConfig,
) -> Result<EvalReport> {
    cfg.validate()?;
    let gt_by_id: HashMap<u64, &VideoGroundTruth> = ground_truth.iter().map(|g| (g.video_id, g)).collect();
    if gt_by_id.len() != ground_truth.len() {
        return Err(Error::InvalidInput("duplicate video id in ground truth".into()));
    }
    let mut categories: BTreeSet<u32> = BTreeSet::new();
    for g in ground_truth {
        categories.extend(g.category_set.iter().copied());
        categories.extend(g.gt_tracks.iter().map(|t| t.category_id));
    }
    let mut preds_by_id: BTreeMap<u64, Vec<&Track>> = BTreeMap::new();
    for vt in predictions {
        let Some(g) = gt_by_id.get(&vt.meta.video_id) else {
            return Err(Error::UnknownVideoId(vt.meta.video_id));
        };
        for t in &vt.tracks {
            if !cfg.category_agnostic && !categories.contains(&t.category_id) {
                return Err(Error::UnknownCategory(t.category_id));
            }
            check_dims(t, (g.height, g.width))?;
        }
        preds_by_id
            .entry(vt.meta.video_id)
            .or_default()
            .extend(vt.tracks.iter());
    }

    // Group key: Some(category) or None when category-agnostic.
    let groups: Vec<Option<u32>> = if cfg.category_agnostic {
        vec![None]
    } else {
        categories.iter().copied().map(Some).collect()
    };
    let mut videos: Vec<&VideoGroundTruth> = ground_truth.iter().collect();
    videos.sort_by_key(|g| g.video_id);

    let per_video: Vec<Vec<(Cell, usize)>> = videos
        .par_iter()
        .map(|g| {
            let preds = preds_by_id.get(&g.video_id).map(Vec::as_slice).unwrap_or(&[]);
            groups
                .iter()
                .map(|&grp| {
                    let keep = |t: &&Track| grp.is_none_or(|c| t.category_id == c);
                    let p: Vec<Track> = preds.iter().copied().filter(keep).cloned().collect();
                    let gts: Vec<&Track> = g.gt_tracks.iter().filter(keep).collect();
                    let mut ious = Matrix::zeros(p.len(), gts.len());
                    for (i, pt) in p.iter().enumerate() {
                        for (j, gt) in gts.iter().enumerate() {
                            ious[(i, j)] = st_iou(pt, gt, g.length, (g.height, g.width))?;
                        }
                    }
                    Ok((
                        Cell {
                            video_id: g.video_id,
                            scores: p.iter().map(|t| t.score).collect(),
                            track_ids: p.iter().map(|t| t.track_id).collect(),
                            order: score_order(&p),
                            ious,
                        },
                        gts.len(),
                    ))
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;

    let mut results: Vec<(Option<u32>, Option<Metrics>)> = Vec::new();
    for (gi, grp) in groups.iter().enumerate() {
        let cells: Vec<&Cell> = per_video.iter().map(|v| &v[gi].0).collect();
        let n_gt = per_video.iter().map(|v| v[gi].1).sum();
        results.push((*grp, group_metrics(&cells, n_gt, cfg)));
    }

    let present: Vec<&Metrics> = results.iter().filter_map(|(_, m)| m.as_ref()).collect();
    let overall = mean_metrics(&present);
    let per_category = results.into_iter().filter_map(|(grp, m)| grp.map(|c| (c, m))).collect();
    Ok(EvalReport { per_category, overall })
}

impl EvalReport {
    /// Plain-text table with one row per category and an overall row,
    /// values in percent.
    pub fn to_table(&self, max_detections: &[u32]) -> String {
        let mut out = String::new();
        let _ = write!(out, "{:<10}{:>8}{:>8}{:>8}", "category", "mAP", "AP50", "AP75");
        for k in max_detections {
            let _ = write!(out, "{:>8}", format!("AR{k}"));
        }
        out.push('\n');
        let row = |out: &mut String, label: &str, m: &Option<Metrics>| {
            let _ = write!(out, "{label:<10}");
            match m {
                Some(m) => {
                    for v in [m.ap, m.ap50, m.ap75] {
                        let _ = write!(out, "{:>8.1}", 100.0 * v);
                    }
                    for k in max_detections {
                        let _ = write!(out, "{:>8.1}", 100.0 * m.ar_at(*k).unwrap_or(0.0));
                    }
                }
                None => {
                    for _ in 0..3 + max_detections.len() {
                        let _ = write!(out, "{:>8}", "-");
                    }
                }
            }
            out.push('\n');
        };
        for (c, m) in &self.per_category {
            row(&mut out, &c.to_string(), m);
        }
        row(&mut out, "overall", &self.overall);
        out
    }
}
