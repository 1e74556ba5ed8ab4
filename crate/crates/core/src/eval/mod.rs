//! Per-class average precision and mAP over temporal IoU thresholds.

mod csv;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::detect::types::{rank_order, temporal_iou, Detection, GroundTruthInstance};
use crate::error::{Error, Result};

pub use csv::{read_eval_csv, write_eval_csv, EvalTable};

pub const DEFAULT_THRESHOLDS: [f64; 5] = [0.1, 0.2, 0.3, 0.4, 0.5];

/// Hit/miss flags for the detections of `class_id`, in input order.
///
/// Detections must already be ranked by descending score. A detection is a
/// hit when an unmatched ground-truth instance of the same class on the same
/// video overlaps it with IoU strictly above `iou_threshold`; it consumes the
/// best-overlapping such instance (earliest start on ties).
pub fn match_detections(
    detections: &[Detection],
    ground_truth: &[GroundTruthInstance],
    class_id: usize,
    iou_threshold: f64,
) -> Result<Vec<bool>> {
    let dets: Vec<&Detection> = detections.iter().filter(|d| d.class_id == class_id).collect();
    if dets.windows(2).any(|w| w[0].score < w[1].score) {
        return Err(Error::InvalidArgument(
            "detections must be sorted by descending score".into(),
        ));
    }
    let gts: Vec<&GroundTruthInstance> =
        ground_truth.iter().filter(|g| g.class_id == class_id).collect();
    let mut used = vec![false; gts.len()];
    let mut flags = Vec::with_capacity(dets.len());
    for d in dets {
        let mut best: Option<(usize, f64)> = None;
        for (j, g) in gts.iter().enumerate() {
            if used[j] || g.video_id != d.video_id {
                continue;
            }
            let iou = temporal_iou(d.segment(), g.segment());
            if iou <= iou_threshold {
                continue;
            }
            let better = match best {
                None => true,
                Some((b, biou)) => iou > biou || (iou == biou && g.start < gts[b].start),
            };
            if better {
                best = Some((j, iou));
            }
        }
        match best {
            Some((j, _)) => {
                used[j] = true;
                flags.push(true);
            }
            None => flags.push(false),
        }
    }
    Ok(flags)
}

/// Non-interpolated AP: sum over ranks of (recall step) x (precision).
pub fn average_precision(flags: &[bool], n_ground_truth: usize) -> f64 {
    if n_ground_truth == 0 || flags.is_empty() {
        return 0.0;
    }
    let mut hits = 0usize;
    let mut ap = 0.0;
    for (k, &hit) in flags.iter().enumerate() {
        if hit {
            hits += 1;
            ap += hits as f64 / (k + 1) as f64;
        }
    }
    ap / n_ground_truth as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdResult {
    pub threshold: f64,
    /// Every class seen in ground truth or detections.
    pub ap: BTreeMap<usize, f64>,
    /// Mean AP over classes with at least one ground-truth instance.
    pub map: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub per_threshold: Vec<ThresholdResult>,
    pub gt_counts: BTreeMap<usize, usize>,
    /// Detections ignored because their video has no annotations.
    pub warnings: Vec<String>,
}

impl EvalResult {
    pub fn map_at(&self, threshold: f64) -> Option<f64> {
        self.per_threshold
            .iter()
            .find(|t| (t.threshold - threshold).abs() < 1e-12)
            .map(|t| t.map)
    }

    pub fn classes(&self) -> Vec<usize> {
        let mut set: BTreeSet<usize> = self.gt_counts.keys().copied().collect();
        for t in &self.per_threshold {
            set.extend(t.ap.keys().copied());
        }
        set.into_iter().collect()
    }
}

pub fn evaluate(
    detections: &[Detection],
    ground_truth: &[GroundTruthInstance],
    thresholds: &[f64],
) -> Result<EvalResult> {
    if thresholds.is_empty() {
        return Err(Error::Config("no IoU thresholds given".into()));
    }
    if let Some(t) = thresholds.iter().find(|t| !(0.0..=1.0).contains(*t)) {
        return Err(Error::Config(format!("IoU threshold {t} outside [0, 1]")));
    }
    for g in ground_truth {
        g.validate()?;
    }
    let videos: BTreeSet<&str> = ground_truth.iter().map(|g| g.video_id.as_str()).collect();
    let (mut ranked, mut unknown): (Vec<Detection>, Vec<Detection>) = detections
        .iter()
        .cloned()
        .partition(|d| videos.contains(d.video_id.as_str()));
    ranked.sort_by(rank_order);
    unknown.sort_by(rank_order);
    let warnings = unknown
        .iter()
        .map(|d| {
            format!(
                "detection [{}, {}) references unknown video {:?}; ignored",
                d.start, d.end, d.video_id
            )
        })
        .collect();

    let mut gt_counts = BTreeMap::new();
    for g in ground_truth {
        *gt_counts.entry(g.class_id).or_insert(0usize) += 1;
    }
    let mut classes: BTreeSet<usize> = gt_counts.keys().copied().collect();
    classes.extend(ranked.iter().map(|d| d.class_id));

    let mut per_threshold = Vec::with_capacity(thresholds.len());
    for &t in thresholds {
        let mut ap = BTreeMap::new();
        for &c in &classes {
            let flags = match_detections(&ranked, ground_truth, c, t)?;
            ap.insert(c, average_precision(&flags, gt_counts.get(&c).copied().unwrap_or(0)));
        }
        let map = if gt_counts.is_empty() {
            0.0
        } else {
            gt_counts.keys().map(|c| ap[c]).sum::<f64>() / gt_counts.len() as f64
        };
        per_threshold.push(ThresholdResult { threshold: t, ap, map });
    }
    Ok(EvalResult {
        per_threshold,
        gt_counts,
        warnings,
    })
}
