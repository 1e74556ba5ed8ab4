//! Reference implementations written independently of the library, plus
//! seeded random instance generators.
#![allow(dead_code)]

use ivsnet_core::detect::{Detection, GroundTruthInstance};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// IoU by counting frames one at a time.
pub fn frame_iou(a: (usize, usize), b: (usize, usize)) -> f64 {
    let lo = a.0.min(b.0);
    let hi = a.1.max(b.1);
    let (mut inter, mut union) = (0usize, 0usize);
    for t in lo..hi {
        let in_a = t >= a.0 && t < a.1;
        let in_b = t >= b.0 && t < b.1;
        if in_a && in_b {
            inter += 1;
        }
        if in_a || in_b {
            union += 1;
        }
    }
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}

/// True when `a` should be ranked before `b`.
fn ranks_before(a: &Detection, b: &Detection) -> bool {
    if a.score != b.score {
        return a.score > b.score;
    }
    if a.start != b.start {
        return a.start < b.start;
    }
    a.video_id < b.video_id
}

/// Selection sort into ranking order.
fn ranked(dets: &[Detection]) -> Vec<Detection> {
    let mut rest: Vec<Detection> = dets.to_vec();
    let mut out = Vec::new();
    while !rest.is_empty() {
        let mut best = 0;
        for i in 1..rest.len() {
            if ranks_before(&rest[i], &rest[best]) {
                best = i;
            }
        }
        out.push(rest.remove(best));
    }
    out
}

/// Per-threshold `(per-class AP over classes with GT, mAP)`.
pub fn naive_map(dets: &[Detection], gt: &[GroundTruthInstance], thresholds: &[f64]) -> Vec<f64> {
    let mut classes: Vec<usize> = gt.iter().map(|g| g.class_id).collect();
    classes.sort();
    classes.dedup();
    let known: Vec<&str> = gt.iter().map(|g| g.video_id.as_str()).collect();
    let usable: Vec<Detection> = dets.iter().filter(|d| known.contains(&d.video_id.as_str())).cloned().collect();
    let order = ranked(&usable);
    let mut out = Vec::new();
    for &t in thresholds {
        if classes.is_empty() {
            out.push(0.0);
            continue;
        }
        let mut total = 0.0;
        for &c in &classes {
            let n_gt = gt.iter().filter(|g| g.class_id == c).count();
            let mut taken = vec![false; gt.len()];
            let mut hit = Vec::new();
            for d in order.iter().filter(|d| d.class_id == c) {
                let mut choice: Option<usize> = None;
                for (j, g) in gt.iter().enumerate() {
                    if taken[j] || g.class_id != c || g.video_id != d.video_id {
                        continue;
                    }
                    let iou = frame_iou((d.start, d.end), (g.start, g.end));
                    if !(iou > t) {
                        continue;
                    }
                    choice = match choice {
                        None => Some(j),
                        Some(k) => {
                            let kiou = frame_iou((d.start, d.end), (gt[k].start, gt[k].end));
                            if iou > kiou || (iou == kiou && g.start < gt[k].start) {
                                Some(j)
                            } else {
                                Some(k)
                            }
                        }
                    };
                }
                if let Some(j) = choice {
                    taken[j] = true;
                }
                hit.push(choice.is_some());
            }
            // Precision and recall at every rank, then the stepwise area.
            let mut ap = 0.0;
            let mut prev_recall = 0.0;
            for k in 0..hit.len() {
                let tp = hit[..=k].iter().filter(|h| **h).count() as f64;
                let precision = tp / (k + 1) as f64;
                let recall = tp / n_gt as f64;
                ap += (recall - prev_recall) * precision;
                prev_recall = recall;
            }
            total += ap;
        }
        out.push(total / classes.len() as f64);
    }
    out
}

/// Repeatedly take the best remaining detection and strike out everything of
/// its class and video that overlaps it too much.
pub fn naive_nms(dets: &[Detection], threshold: f64) -> Vec<Detection> {
    let mut remaining: Vec<Detection> = dets.to_vec();
    let mut kept = Vec::new();
    while !remaining.is_empty() {
        let mut best = 0;
        for i in 1..remaining.len() {
            if ranks_before(&remaining[i], &remaining[best]) {
                best = i;
            }
        }
        let top = remaining.remove(best);
        remaining.retain(|d| {
            !(d.class_id == top.class_id
                && d.video_id == top.video_id
                && frame_iou((d.start, d.end), (top.start, top.end)) > threshold)
        });
        kept.push(top);
    }
    kept
}

/// Up to 20 detections and 8 ground-truth instances over at most 3 classes
/// and two videos; detection scores are distinct.
pub fn random_instance(seed: u64) -> (Vec<Detection>, Vec<GroundTruthInstance>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let videos = ["va", "vb"];
    let n_classes = rng.random_range(1..=3);
    let n_gt = rng.random_range(0..=8);
    let gt = (0..n_gt)
        .map(|_| {
            let s = rng.random_range(0..60);
            GroundTruthInstance {
                video_id: videos[rng.random_range(0..2)].into(),
                start: s,
                end: s + rng.random_range(2..20),
                class_id: rng.random_range(1..=n_classes),
            }
        })
        .collect();
    let n_det = rng.random_range(0..=20);
    let mut scores: Vec<u32> = (1..=10_000).collect();
    let dets = (0..n_det)
        .map(|i| {
            let j = rng.random_range(i..scores.len());
            scores.swap(i, j);
            let s = rng.random_range(0..60);
            Detection {
                video_id: videos[rng.random_range(0..2)].into(),
                start: s,
                end: s + rng.random_range(2..20),
                class_id: rng.random_range(1..=n_classes),
                score: scores[i] as f64 / 10_000.0,
            }
        })
        .collect();
    (dets, gt)
}

/// Detections with heavy overlap and repeated scores, for NMS.
pub fn random_nms_set(seed: u64) -> Vec<Detection> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(0..=40);
    (0..n)
        .map(|_| {
            let s = rng.random_range(0..50);
            Detection {
                video_id: ["va", "vb"][rng.random_range(0..2)].into(),
                start: s,
                end: s + rng.random_range(1..25),
                class_id: rng.random_range(1..=3),
                score: rng.random_range(1..=50) as f64 / 50.0,
            }
        })
        .collect()
}

pub fn walk_files(root: &std::path::Path) -> Vec<std::path::PathBuf> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push(p.strip_prefix(root).unwrap().to_path_buf());
            }
        }
    }
    out.sort();
    out
}
