//! Proposal -> classify -> NMS detection over untrimmed videos.

pub mod classify;
pub mod io;
pub mod nms;
pub mod proposals;
pub mod types;

pub use classify::classify_proposals;
pub use io::{read_detections, read_ground_truth, write_detections, write_ground_truth};
pub use nms::{nms, DEFAULT_NMS_THRESHOLD};
pub use proposals::generate_proposals;
pub use types::{temporal_iou, Detection, GroundTruthInstance, Segment};

pub use crate::data::synthetic::UntrimmedVideo;
