use crate::detect::types::Segment;
use crate::error::{Error, Result};

/// Multi-scale sliding windows over `[0, total_length)`.
///
/// For each window length `w` the stride is `max(1, floor(w * stride_fraction))`;
/// when the last full window stops short of the end, one more window is
/// placed flush with the end. Windows longer than the video are skipped.
/// Output is deduplicated and ordered by start, then length.
pub fn generate_proposals(
    total_length: usize,
    window_lengths: &[usize],
    stride_fraction: f64,
) -> Result<Vec<Segment>> {
    if window_lengths.is_empty() || window_lengths.contains(&0) {
        return Err(Error::InvalidArgument(format!(
            "window lengths must be >= 1, got {window_lengths:?}"
        )));
    }
    if !(stride_fraction > 0.0 && stride_fraction <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "stride fraction {stride_fraction} outside (0, 1]"
        )));
    }
    let min_window = *window_lengths.iter().min().expect("non-empty");
    if total_length < min_window {
        return Err(Error::InvalidArgument(format!(
            "video of {total_length} frames is shorter than the smallest window {min_window}"
        )));
    }
    let mut out = Vec::new();
    for &w in window_lengths {
        if w > total_length {
            continue;
        }
        let stride = ((w as f64 * stride_fraction).floor() as usize).max(1);
        let mut start = 0;
        while start + w <= total_length {
            out.push(Segment { start, end: start + w });
            start += stride;
        }
        if out.last().is_some_and(|s| s.end < total_length) {
            out.push(Segment {
                start: total_length - w,
                end: total_length,
            });
        }
    }
    out.sort_by_key(|s| (s.start, s.len()));
    out.dedup();
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn single_scale_with_tail() {
        let p = generate_proposals(100, &[16], 0.5).unwrap();
        assert_eq!(p.len(), 12);
        let starts: Vec<_> = p.iter().map(|s| s.start).collect();
        assert_eq!(starts, vec![0, 8, 16, 24, 32, 40, 48, 56, 64, 72, 80, 84]);
        assert_eq!(*p.last().unwrap(), Segment { start: 84, end: 100 });
    }

    #[test]
    fn multi_scale_union_without_duplicates() {
        let both = generate_proposals(64, &[16, 32], 0.5).unwrap();
        let a = generate_proposals(64, &[16], 0.5).unwrap();
        let b = generate_proposals(64, &[32], 0.5).unwrap();
        assert_eq!(both.len(), a.len() + b.len());
        for s in a.iter().chain(&b) {
            assert!(both.contains(s));
        }
        let dup = generate_proposals(64, &[16, 16], 0.5).unwrap();
        assert_eq!(dup, a);
    }

    #[test]
    fn window_equal_to_video() {
        assert_eq!(
            generate_proposals(16, &[16], 0.5).unwrap(),
            vec![Segment { start: 0, end: 16 }]
        );
    }

    #[test]
    fn errors() {
        assert!(generate_proposals(10, &[16], 0.5).is_err());
        assert!(generate_proposals(100, &[0], 0.5).is_err());
        assert!(generate_proposals(100, &[16], 0.0).is_err());
        assert!(generate_proposals(100, &[16], 1.5).is_err());
    }

    proptest! {
        #[test]
        fn proposals_cover_every_frame(
            total in 1usize..200,
            windows in prop::collection::vec(1usize..40, 1..4),
            frac in 0.05f64..=1.0,
        ) {
            prop_assume!(total >= *windows.iter().min().unwrap());
            let p = generate_proposals(total, &windows, frac).unwrap();
            for f in 0..total {
                prop_assert!(p.iter().any(|s| s.contains_frame(f)), "frame {} uncovered", f);
            }
            for s in &p {
                prop_assert!(s.end <= total && s.start < s.end);
            }
            for w in p.windows(2) {
                prop_assert!((w[0].start, w[0].len()) < (w[1].start, w[1].len()));
            }
        }
    }
}
