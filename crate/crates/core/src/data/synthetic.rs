//! Deterministic synthetic action clips and untrimmed videos.
//!
//! Every action class is a Gaussian blob sweeping across the frame along a
//! class-specific direction. Classes listed together in
//! [`SyntheticDatasetSpec::confusable_pairs`] share the direction and differ
//! only in blob size. Per-clip variation comes from the trajectory phase, a
//! lateral offset, a static background texture and pixel noise. Background
//! clips hold a motionless blob over texture.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::detect::types::{GroundTruthInstance, Segment};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

use super::dataset::{Clip, Dataset, Split};

const BASE_BLOB_SIGMA: f64 = 1.2;
const WIDE_BLOB_SIGMA: f64 = 2.4;
const TEXTURE_WAVES: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticDatasetSpec {
    pub seed: u64,
    /// Action classes, excluding background.
    pub n_classes: usize,
    pub clips_per_class: usize,
    /// Extra clips labelled 0 (background).
    pub background_clips: usize,
    /// Trailing clips of every class that go to the test split.
    pub held_out_per_class: usize,
    /// `[channels, length, height, width]` of every clip.
    pub clip_shape: [usize; 4],
    pub noise_sigma: f64,
    /// Max shift of the trajectory start, as a fraction of the path length.
    pub phase_jitter: f64,
    /// Max perpendicular offset of the trajectory, in pixels.
    pub lateral_jitter: f64,
    pub background_amplitude: f64,
    /// Pairs of class ids (1-based) that share a motion direction.
    pub confusable_pairs: Vec<(usize, usize)>,
    /// Inclusive range of source segment lengths, in frames.
    pub action_length: [usize; 2],
}

impl Default for SyntheticDatasetSpec {
    fn default() -> Self {
        SyntheticDatasetSpec {
            seed: 0,
            n_classes: 4,
            clips_per_class: 20,
            background_clips: 20,
            held_out_per_class: 5,
            clip_shape: [1, 8, 16, 16],
            noise_sigma: 0.1,
            phase_jitter: 0.15,
            lateral_jitter: 1.5,
            background_amplitude: 0.2,
            confusable_pairs: vec![(1, 2)],
            action_length: [12, 24],
        }
    }
}

impl SyntheticDatasetSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_classes < 2 {
            return Err(Error::Config(format!("n_classes {} < 2", self.n_classes)));
        }
        if self.clips_per_class < 2 {
            return Err(Error::Config(format!(
                "clips_per_class {} < 2",
                self.clips_per_class
            )));
        }
        if self.held_out_per_class >= self.clips_per_class {
            return Err(Error::Config("held_out_per_class leaves no training clips".into()));
        }
        for (name, v) in [
            ("noise_sigma", self.noise_sigma),
            ("phase_jitter", self.phase_jitter),
            ("lateral_jitter", self.lateral_jitter),
            ("background_amplitude", self.background_amplitude),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        if self.clip_shape.contains(&0) {
            return Err(Error::Config(format!("zero extent in clip_shape {:?}", self.clip_shape)));
        }
        let [lo, hi] = self.action_length;
        if lo == 0 || lo > hi {
            return Err(Error::Config(format!("bad action_length {:?}", self.action_length)));
        }
        let mut seen = Vec::new();
        for &(a, b) in &self.confusable_pairs {
            for c in [a, b] {
                if c == 0 || c > self.n_classes || seen.contains(&c) {
                    return Err(Error::Config(format!(
                        "confusable pair ({a}, {b}) names an unknown or repeated class"
                    )));
                }
                seen.push(c);
            }
            if a == b {
                return Err(Error::Config(format!("confusable pair ({a}, {b}) is degenerate")));
            }
        }
        Ok(())
    }

    /// Model output width: action classes plus background.
    pub fn model_classes(&self) -> usize {
        self.n_classes + 1
    }

    /// Motion pattern of action class `class` (1-based).
    pub fn pattern(&self, class: usize) -> ActionPattern {
        assert!(class >= 1 && class <= self.n_classes, "class {class} out of range");
        // Each confusable pair occupies one direction group; the rest get their own.
        let mut group_of = vec![usize::MAX; self.n_classes + 1];
        let mut secondary = vec![false; self.n_classes + 1];
        let mut groups = 0;
        for c in 1..=self.n_classes {
            if group_of[c] != usize::MAX {
                continue;
            }
            group_of[c] = groups;
            if let Some(&(a, b)) = self.confusable_pairs.iter().find(|p| p.0 == c || p.1 == c) {
                let partner = if a == c { b } else { a };
                group_of[partner] = groups;
                secondary[partner] = true;
            }
            groups += 1;
        }
        ActionPattern {
            direction: 0.3 + 2.0 * PI * group_of[class] as f64 / groups as f64,
            blob_sigma: if secondary[class] {
                WIDE_BLOB_SIGMA
            } else {
                BASE_BLOB_SIGMA
            },
        }
    }

    fn frame_shape(&self) -> [usize; 3] {
        [self.clip_shape[0], self.clip_shape[2], self.clip_shape[3]]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActionPattern {
    /// Direction of motion, radians.
    pub direction: f64,
    pub blob_sigma: f64,
}

/// Static sum of low-frequency plane waves.
#[derive(Debug, Clone, PartialEq)]
pub struct BackgroundTexture {
    pub amplitude: f64,
    /// `(freq_y, freq_x, phase)` per wave, frequencies in radians per pixel.
    pub waves: Vec<(f64, f64, f64)>,
}

impl BackgroundTexture {
    pub fn flat() -> Self {
        BackgroundTexture {
            amplitude: 0.0,
            waves: Vec::new(),
        }
    }

    pub fn random<R: Rng + ?Sized>(amplitude: f64, rng: &mut R) -> Self {
        let waves = (0..TEXTURE_WAVES)
            .map(|_| {
                (
                    rng.random_range(-0.8..0.8),
                    rng.random_range(-0.8..0.8),
                    rng.random_range(0.0..2.0 * PI),
                )
            })
            .collect();
        BackgroundTexture { amplitude, waves }
    }

    fn value(&self, y: f64, x: f64) -> f64 {
        if self.waves.is_empty() {
            return 0.0;
        }
        let s: f64 = self.waves.iter().map(|&(fy, fx, ph)| (fy * y + fx * x + ph).sin()).sum();
        self.amplitude * s / self.waves.len() as f64
    }
}

/// Per-instance trajectory variation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClipVariation {
    /// Shift of the trajectory start, fraction of the path length.
    pub phase: f64,
    /// Perpendicular offset, pixels.
    pub lateral: f64,
}

impl ClipVariation {
    pub fn random<R: Rng + ?Sized>(spec: &SyntheticDatasetSpec, rng: &mut R) -> Self {
        let sym = |r: &mut R, m: f64| if m > 0.0 { r.random_range(-m..=m) } else { 0.0 };
        ClipVariation {
            phase: sym(rng, spec.phase_jitter),
            lateral: sym(rng, spec.lateral_jitter),
        }
    }
}

/// What occupies a span of frames.
#[derive(Debug, Clone, PartialEq)]
pub enum Content {
    Action {
        pattern: ActionPattern,
        variation: ClipVariation,
    },
    /// A motionless blob at `(y, x)`.
    Still { y: f64, x: f64, sigma: f64 },
}

fn gaussian_blob(y: f64, x: f64, cy: f64, cx: f64, sigma: f64) -> f64 {
    let d2 = (y - cy) * (y - cy) + (x - cx) * (x - cx);
    (-d2 / (2.0 * sigma * sigma)).exp()
}

fn blob_center(pattern: &ActionPattern, variation: &ClipVariation, tau: f64, h: usize, w: usize) -> (f64, f64) {
    let travel = 0.7 * h.min(w) as f64;
    let along = (tau - 0.5 + variation.phase) * travel;
    let (dy, dx) = (pattern.direction.sin(), pattern.direction.cos());
    let cy = (h as f64 - 1.0) / 2.0 + along * dy + variation.lateral * dx;
    let cx = (w as f64 - 1.0) / 2.0 + along * dx - variation.lateral * dy;
    (cy, cx)
}

/// Renders frame `[C, H, W]` into `out`. `tau` is the progress through the
/// action in `(0, 1)`; ignored for still content.
fn render_frame(
    out: &mut [f64],
    shape: [usize; 3],
    content: Option<(&Content, f64)>,
    background: &BackgroundTexture,
) {
    let [c, h, w] = shape;
    let blob = content.map(|(content, tau)| match content {
        Content::Action { pattern, variation } => {
            let (cy, cx) = blob_center(pattern, variation, tau, h, w);
            (cy, cx, pattern.blob_sigma)
        }
        Content::Still { y, x, sigma } => (*y, *x, *sigma),
    });
    for ch in 0..c {
        let gain = 1.0 - 0.2 * ch as f64;
        for y in 0..h {
            for x in 0..w {
                let (fy, fx) = (y as f64, x as f64);
                let mut v = background.value(fy, fx);
                if let Some((cy, cx, sigma)) = blob {
                    v += gaussian_blob(fy, fx, cy, cx, sigma);
                }
                out[(ch * h + y) * w + x] = gain * v;
            }
        }
    }
}

/// Renders a `[C, length, H, W]` video with `spans` of content over a
/// background texture, then adds `N(0, noise_sigma^2)` pixel noise.
pub fn render_video<R: Rng + ?Sized>(
    frame_shape: [usize; 3],
    length: usize,
    spans: &[(Segment, Content)],
    background: &BackgroundTexture,
    noise_sigma: f64,
    rng: &mut R,
) -> Tensor {
    let [c, h, w] = frame_shape;
    let plane = h * w;
    let mut frame = vec![0.0; c * plane];
    let mut data = vec![0.0; c * length * plane];
    for t in 0..length {
        let active = spans.iter().find(|(seg, _)| seg.contains_frame(t)).map(|(seg, content)| {
            let tau = (t - seg.start) as f64 + 0.5;
            (content, tau / seg.len() as f64)
        });
        render_frame(&mut frame, frame_shape, active, background);
        for ch in 0..c {
            data[(ch * length + t) * plane..][..plane].copy_from_slice(&frame[ch * plane..][..plane]);
        }
    }
    if noise_sigma > 0.0 {
        let normal = Normal::new(0.0, noise_sigma).expect("sigma checked");
        for v in &mut data {
            *v += normal.sample(rng);
        }
    }
    Tensor::new(vec![c, length, h, w], data).expect("shape by construction")
}

/// Frame indices picked when `segment` is resampled to `target_len` frames:
/// the nearest frame to each of `target_len` evenly spaced centres.
pub fn resample_indices(segment: Segment, target_len: usize) -> Vec<usize> {
    let len = segment.len();
    (0..target_len)
        .map(|k| segment.start + (2 * k + 1) * len / (2 * target_len))
        .collect()
}

/// Cuts `segment` out of a `[C, L, H, W]` video and resamples it to
/// `target_len` frames.
pub fn resample_clip(video: &Tensor, segment: Segment, target_len: usize) -> Result<Tensor> {
    let [c, l, h, w] = match *video.shape() {
        [c, l, h, w] => [c, l, h, w],
        ref s => return Err(Error::shape("resample_clip", format!("video {s:?}"))),
    };
    if segment.end > l {
        return Err(Error::InvalidArgument(format!(
            "segment [{}, {}) outside video of {l} frames",
            segment.start, segment.end
        )));
    }
    let plane = h * w;
    let src = video.data();
    let idx = resample_indices(segment, target_len);
    let mut data = Vec::with_capacity(c * target_len * plane);
    for ch in 0..c {
        for &t in &idx {
            data.extend_from_slice(&src[(ch * l + t) * plane..][..plane]);
        }
    }
    Tensor::new(vec![c, target_len, h, w], data)
}

/// One action instance rendered at source length `length` and resampled to
/// the clip length.
pub fn render_action_clip<R: Rng + ?Sized>(
    spec: &SyntheticDatasetSpec,
    pattern: ActionPattern,
    variation: ClipVariation,
    background: &BackgroundTexture,
    length: usize,
    rng: &mut R,
) -> Tensor {
    let seg = Segment { start: 0, end: length };
    let video = render_video(
        spec.frame_shape(),
        length,
        &[(seg, Content::Action { pattern, variation })],
        background,
        spec.noise_sigma,
        rng,
    );
    resample_clip(&video, seg, spec.clip_shape[1]).expect("segment spans the video")
}

fn random_still<R: Rng + ?Sized>(h: usize, w: usize, rng: &mut R) -> Content {
    Content::Still {
        y: rng.random_range(0.0..h as f64),
        x: rng.random_range(0.0..w as f64),
        sigma: rng.random_range(BASE_BLOB_SIGMA..=WIDE_BLOB_SIGMA),
    }
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Generates the labelled clip set. The same spec always yields the same
/// clips, bit for bit.
pub fn generate_synthetic_dataset(spec: &SyntheticDatasetSpec) -> Result<Dataset> {
    spec.validate()?;
    let [_, _, h, w] = spec.clip_shape;
    let mut clips = Vec::new();
    let mut index = 0u64;
    let mut push = |label: usize, count: usize, clips: &mut Vec<Clip>| {
        for k in 0..count {
            let mut rng = stream_rng(spec.seed, index);
            let length = rng.random_range(spec.action_length[0]..=spec.action_length[1]);
            let background = BackgroundTexture::random(spec.background_amplitude, &mut rng);
            let tensor = if label == 0 {
                let seg = Segment { start: 0, end: length };
                let video = render_video(
                    spec.frame_shape(),
                    length,
                    &[(seg, random_still(h, w, &mut rng))],
                    &background,
                    spec.noise_sigma,
                    &mut rng,
                );
                resample_clip(&video, seg, spec.clip_shape[1]).expect("segment spans the video")
            } else {
                let variation = ClipVariation::random(spec, &mut rng);
                render_action_clip(spec, spec.pattern(label), variation, &background, length, &mut rng)
            };
            let held_out = count.saturating_sub(spec.held_out_per_class);
            clips.push(Clip {
                id: format!("clip{index:05}"),
                tensor,
                label,
                video_id: format!("source{index:05}"),
                segment: Segment { start: 0, end: length },
                split: if k >= held_out { Split::Test } else { Split::Train },
            });
            index += 1;
        }
    };
    push(0, spec.background_clips, &mut clips);
    for class in 1..=spec.n_classes {
        push(class, spec.clips_per_class, &mut clips);
    }
    Ok(Dataset {
        spec: spec.clone(),
        clips,
    })
}

/// Layout of the untrimmed evaluation videos.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VideoSetSpec {
    pub seed: u64,
    pub n_videos: usize,
    pub total_length: usize,
    /// Inclusive range of planted actions per video.
    pub instances_per_video: [usize; 2],
    /// Inclusive range of action lengths, frames.
    pub instance_length: [usize; 2],
    /// Minimum background frames between and around actions.
    pub min_gap: usize,
}

impl Default for VideoSetSpec {
    fn default() -> Self {
        VideoSetSpec {
            seed: 1,
            n_videos: 6,
            total_length: 128,
            instances_per_video: [2, 3],
            instance_length: [12, 24],
            min_gap: 6,
        }
    }
}

impl VideoSetSpec {
    pub fn validate(&self) -> Result<()> {
        let [ilo, ihi] = self.instances_per_video;
        let [llo, lhi] = self.instance_length;
        if ilo > ihi || llo == 0 || llo > lhi {
            return Err(Error::Config("bad instance ranges in video spec".into()));
        }
        if self.total_length < lhi + 2 * self.min_gap {
            return Err(Error::Config(format!(
                "videos of {} frames cannot hold a {lhi}-frame action",
                self.total_length
            )));
        }
        Ok(())
    }
}

/// A long video with planted, annotated action instances.
#[derive(Debug, Clone, PartialEq)]
pub struct UntrimmedVideo {
    pub id: String,
    /// `[C, total_length, H, W]`
    pub frames: Tensor,
    pub ground_truth: Vec<GroundTruthInstance>,
}

impl UntrimmedVideo {
    pub fn total_length(&self) -> usize {
        self.frames.shape()[1]
    }
}

/// Generates untrimmed videos using the class patterns and variation
/// settings of `dataset`.
pub fn generate_videos(dataset: &SyntheticDatasetSpec, spec: &VideoSetSpec) -> Result<Vec<UntrimmedVideo>> {
    dataset.validate()?;
    spec.validate()?;
    let [_, _, h, w] = dataset.clip_shape;
    let mut videos = Vec::with_capacity(spec.n_videos);
    for v in 0..spec.n_videos {
        let mut rng = stream_rng(spec.seed, (1 << 32) + v as u64);
        let id = format!("video{v:03}");
        let target = rng.random_range(spec.instances_per_video[0]..=spec.instances_per_video[1]);
        let mut spans = Vec::new();
        let mut ground_truth = Vec::new();
        let mut cursor = spec.min_gap + rng.random_range(0..=spec.min_gap);
        for _ in 0..target {
            let len = rng.random_range(spec.instance_length[0]..=spec.instance_length[1]);
            if cursor + len + spec.min_gap > spec.total_length {
                break;
            }
            let class = rng.random_range(1..=dataset.n_classes);
            let seg = Segment {
                start: cursor,
                end: cursor + len,
            };
            let variation = ClipVariation::random(dataset, &mut rng);
            spans.push((
                seg,
                Content::Action {
                    pattern: dataset.pattern(class),
                    variation,
                },
            ));
            ground_truth.push(GroundTruthInstance {
                video_id: id.clone(),
                start: seg.start,
                end: seg.end,
                class_id: class,
            });
            cursor = seg.end + spec.min_gap + rng.random_range(0..=2 * spec.min_gap);
        }
        // Distractor: a still blob in one gap between actions.
        let mut gaps = Vec::new();
        let mut prev = 0;
        for (seg, _) in &spans {
            if seg.start > prev {
                gaps.push(Segment { start: prev, end: seg.start });
            }
            prev = seg.end;
        }
        if prev < spec.total_length {
            gaps.push(Segment { start: prev, end: spec.total_length });
        }
        if let Some(&gap) = gaps.iter().max_by_key(|g| g.len()) {
            spans.push((gap, random_still(h, w, &mut rng)));
        }
        let background = BackgroundTexture::random(dataset.background_amplitude, &mut rng);
        let frames = render_video(
            dataset.frame_shape(),
            spec.total_length,
            &spans,
            &background,
            dataset.noise_sigma,
            &mut rng,
        );
        videos.push(UntrimmedVideo {
            id,
            frames,
            ground_truth,
        });
    }
    Ok(videos)
}
