mod common;

use common::{frame_iou, naive_map, naive_nms, random_instance, random_nms_set};
use ivsnet_core::detect::{nms, temporal_iou, Segment};
use ivsnet_core::eval::{evaluate, DEFAULT_THRESHOLDS};

#[test]
fn evaluate_matches_naive_reference() {
    for seed in 0..100 {
        let (dets, gt) = random_instance(seed);
        let got = evaluate(&dets, &gt, &DEFAULT_THRESHOLDS).unwrap();
        let want = naive_map(&dets, &gt, &DEFAULT_THRESHOLDS);
        for (t, w) in got.per_threshold.iter().zip(&want) {
            assert!((t.map - w).abs() < 1e-9, "seed {seed} threshold {}: {} vs {w}", t.threshold, t.map);
        }
    }
}

#[test]
fn nms_matches_quadratic_oracle() {
    for seed in 0..100 {
        let dets = random_nms_set(seed);
        for t in [0.0, 0.3, 0.5, 0.7, 1.0] {
            assert_eq!(nms(&dets, t).unwrap(), naive_nms(&dets, t), "seed {seed} threshold {t}");
        }
    }
}

#[test]
fn iou_agrees_with_frame_counting() {
    for a in 0..12 {
        for la in 1..8 {
            for b in 0..12 {
                for lb in 1..8 {
                    let x = Segment::new(a, a + la).unwrap();
                    let y = Segment::new(b, b + lb).unwrap();
                    assert_eq!(temporal_iou(x, y), frame_iou((a, a + la), (b, b + lb)));
                }
            }
        }
    }
}

#[test]
fn reference_reproduces_hand_example() {
    use ivsnet_core::detect::{Detection, GroundTruthInstance};
    // ranks [hit, miss, hit] over 2 GT: 0.5 * 1 + 0.5 * 2/3
    let gt = vec![
        GroundTruthInstance { video_id: "v".into(), start: 0, end: 10, class_id: 1 },
        GroundTruthInstance { video_id: "v".into(), start: 50, end: 60, class_id: 1 },
    ];
    let dets = vec![
        Detection { video_id: "v".into(), start: 0, end: 10, class_id: 1, score: 0.9 },
        Detection { video_id: "v".into(), start: 20, end: 30, class_id: 1, score: 0.8 },
        Detection { video_id: "v".into(), start: 50, end: 60, class_id: 1, score: 0.7 },
    ];
    let want = 0.5 + 0.5 * 2.0 / 3.0;
    assert!((naive_map(&dets, &gt, &[0.5])[0] - want).abs() < 1e-15);
    assert!((evaluate(&dets, &gt, &[0.5]).unwrap().map_at(0.5).unwrap() - want).abs() < 1e-15);
}
