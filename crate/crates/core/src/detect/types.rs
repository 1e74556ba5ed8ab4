use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Half-open frame interval `[start, end)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Segment {
    pub start: usize,
    pub end: usize,
}

impl Segment {
    pub fn new(start: usize, end: usize) -> Result<Self> {
        if start >= end {
            return Err(Error::InvalidArgument(format!("empty segment [{start}, {end})")));
        }
        Ok(Segment { start, end })
    }

    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }

    pub fn contains_frame(&self, frame: usize) -> bool {
        self.start <= frame && frame < self.end
    }
}

/// Intersection over union of two frame intervals.
pub fn temporal_iou(a: Segment, b: Segment) -> f64 {
    let inter = a.end.min(b.end).saturating_sub(a.start.max(b.start));
    if inter == 0 {
        return 0.0;
    }
    let union = a.len() + b.len() - inter;
    inter as f64 / union as f64
}

/// A scored, classified segment. `class_id` is never background.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub video_id: String,
    pub start: usize,
    pub end: usize,
    pub class_id: usize,
    pub score: f64,
}

impl Detection {
    pub fn segment(&self) -> Segment {
        Segment {
            start: self.start,
            end: self.end,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.class_id == 0 {
            return Err(Error::InvalidArgument(format!(
                "detection on {} [{}, {}) has background class",
                self.video_id, self.start, self.end
            )));
        }
        if !(self.score > 0.0 && self.score <= 1.0) {
            return Err(Error::InvalidArgument(format!("score {} outside (0, 1]", self.score)));
        }
        Segment::new(self.start, self.end).map(|_| ())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct GroundTruthInstance {
    pub video_id: String,
    pub start: usize,
    pub end: usize,
    pub class_id: usize,
}

impl GroundTruthInstance {
    pub fn segment(&self) -> Segment {
        Segment {
            start: self.start,
            end: self.end,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.class_id == 0 {
            return Err(Error::InvalidArgument(format!(
                "ground truth on {} uses the background class",
                self.video_id
            )));
        }
        Segment::new(self.start, self.end).map(|_| ())
    }
}

/// Ordering used everywhere detections are ranked: score descending, then
/// start ascending, then video id.
pub fn rank_order(a: &Detection, b: &Detection) -> std::cmp::Ordering {
    b.score
        .total_cmp(&a.score)
        .then(a.start.cmp(&b.start))
        .then_with(|| a.video_id.cmp(&b.video_id))
}
