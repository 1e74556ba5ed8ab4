use super::types::{rank_order, Detection, Segment};
use crate::data::synthetic::{resample_clip, UntrimmedVideo};
use crate::error::{Error, Result};
use crate::net::SiameseModel;
use crate::tensor::Element;

/// Scores every proposal with the identification head.
///
/// Each proposal is resampled to the model's clip length. Proposals whose
/// most likely class is background (index 0) are dropped; the rest become
/// detections of the argmax class scored by its probability, ranked by
/// descending score.
pub fn classify_proposals<T: Element>(
    model: &SiameseModel<T>,
    video: &UntrimmedVideo,
    proposals: &[Segment],
) -> Result<Vec<Detection>> {
    let [c, t, h, w] = model.config().input_shape;
    let vshape = video.frames.shape();
    if vshape[0] != c || vshape[2] != h || vshape[3] != w {
        return Err(Error::shape(
            "classify_proposals",
            format!("video {vshape:?} vs model input {:?}", model.config().input_shape),
        ));
    }
    let mut out = Vec::new();
    for &seg in proposals {
        if seg.end > video.total_length() || seg.is_empty() {
            return Err(Error::InvalidArgument(format!(
                "proposal [{}, {}) outside video {} of {} frames",
                seg.start,
                seg.end,
                video.id,
                video.total_length()
            )));
        }
        let clip = resample_clip(&video.frames, seg, t)?.cast::<T>();
        let probs = model.identify(&model.forward_features(&clip)?)?;
        let class_id = probs.argmax();
        if class_id == 0 {
            continue;
        }
        let score = probs.data()[class_id].to_f64().unwrap_or(0.0);
        if score <= 0.0 {
            continue;
        }
        out.push(Detection {
            video_id: video.id.clone(),
            start: seg.start,
            end: seg.end,
            class_id,
            score,
        });
    }
    out.sort_by(rank_order);
    Ok(out)
}
