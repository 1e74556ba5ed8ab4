use super::types::{rank_order, temporal_iou, Detection};
use crate::error::{Error, Result};

pub const DEFAULT_NMS_THRESHOLD: f64 = 0.3;

/// Greedy per-class temporal NMS.
///
/// Detections are ranked by score (ties: earlier start, then video id). The
/// top remaining detection is kept and every remaining detection of the same
/// class on the same video whose IoU with it exceeds `iou_threshold` is
/// dropped. Kept detections come back in rank order, unmodified.
pub fn nms(detections: &[Detection], iou_threshold: f64) -> Result<Vec<Detection>> {
    if !(0.0..=1.0).contains(&iou_threshold) {
        return Err(Error::InvalidArgument(format!(
            "NMS threshold {iou_threshold} outside [0, 1]"
        )));
    }
    let mut ranked: Vec<&Detection> = detections.iter().collect();
    ranked.sort_by(|a, b| rank_order(a, b));
    let mut kept: Vec<&Detection> = Vec::new();
    for d in ranked {
        let suppressed = kept.iter().any(|k| {
            k.class_id == d.class_id
                && k.video_id == d.video_id
                && temporal_iou(k.segment(), d.segment()) > iou_threshold
        });
        if !suppressed {
            kept.push(d);
        }
    }
    Ok(kept.into_iter().cloned().collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn det(video: &str, start: usize, end: usize, class_id: usize, score: f64) -> Detection {
        Detection {
            video_id: video.into(),
            start,
            end,
            class_id,
            score,
        }
    }

    #[test]
    fn single_detection_survives() {
        let d = vec![det("v", 0, 10, 1, 0.4)];
        assert_eq!(nms(&d, 0.3).unwrap(), d);
    }

    #[test]
    fn overlapping_same_class_keeps_higher_score() {
        // IoU([0,10),[1,11)) = 9/11 ≈ 0.82
        let d = vec![det("v", 0, 10, 1, 0.4), det("v", 1, 11, 1, 0.9)];
        assert_eq!(nms(&d, 0.3).unwrap(), vec![d[1].clone()]);
    }

    #[test]
    fn other_class_or_video_is_not_suppressed() {
        let d = vec![
            det("v", 0, 10, 1, 0.9),
            det("v", 0, 10, 2, 0.8),
            det("w", 0, 10, 1, 0.7),
        ];
        assert_eq!(nms(&d, 0.3).unwrap().len(), 3);
    }

    #[test]
    fn iou_equal_to_threshold_is_kept() {
        // IoU([0,10),[5,15)) = 1/3
        let d = vec![det("v", 0, 10, 1, 0.9), det("v", 5, 15, 1, 0.8)];
        assert_eq!(nms(&d, 1.0 / 3.0).unwrap().len(), 2);
    }

    fn arb_detections() -> impl Strategy<Value = Vec<Detection>> {
        prop::collection::vec((0usize..2, 0usize..60, 1usize..20, 1usize..4, 1u32..1000), 0..25).prop_map(
            |raw| {
                raw.into_iter()
                    .map(|(v, s, l, c, sc)| det(&format!("v{v}"), s, s + l, c, sc as f64 / 1000.0))
                    .collect()
            },
        )
    }

    proptest! {
        #[test]
        fn idempotent_and_separating(dets in arb_detections(), t in 0.0f64..=1.0) {
            let once = nms(&dets, t).unwrap();
            prop_assert_eq!(nms(&once, t).unwrap(), once.clone());
            prop_assert!(once.len() <= dets.len());
            for (i, a) in once.iter().enumerate() {
                prop_assert!(dets.contains(a));
                for b in &once[i + 1..] {
                    if a.class_id == b.class_id && a.video_id == b.video_id {
                        prop_assert!(temporal_iou(a.segment(), b.segment()) <= t);
                    }
                }
            }
        }
    }
}
