//! In-memory clip sets and their on-disk manifests.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::synthetic::{SyntheticDatasetSpec, UntrimmedVideo, VideoSetSpec};
use crate::detect::io::{read_ground_truth, write_ground_truth};
use crate::detect::types::{GroundTruthInstance, Segment};
use crate::error::{Error, Result};
use crate::tensor::io::{read_tensor, write_tensor};
use crate::tensor::Tensor;

pub const DATASET_FORMAT: &str = "ivsnet-dataset/1";
pub const VIDEOS_FORMAT: &str = "ivsnet-videos/1";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const GROUND_TRUTH_FILE: &str = "ground_truth.jsonl";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

/// A fixed-size clip `[C, T, H, W]` with its label and provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct Clip {
    pub id: String,
    pub tensor: Tensor,
    /// 0 is background.
    pub label: usize,
    pub video_id: String,
    pub segment: Segment,
    pub split: Split,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub spec: SyntheticDatasetSpec,
    pub clips: Vec<Clip>,
}

impl Dataset {
    pub fn split(&self, split: Split) -> Vec<&Clip> {
        self.clips.iter().filter(|c| c.split == split).collect()
    }

    /// Copy of the dataset with training labels permuted by `seed`; test
    /// labels are untouched. Used as a negative control.
    pub fn with_shuffled_train_labels(&self, seed: u64) -> Dataset {
        use rand::seq::SliceRandom;
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let train: Vec<usize> = (0..self.clips.len())
            .filter(|&i| self.clips[i].split == Split::Train)
            .collect();
        let mut labels: Vec<usize> = train.iter().map(|&i| self.clips[i].label).collect();
        labels.shuffle(&mut rng);
        let mut out = self.clone();
        for (&i, l) in train.iter().zip(labels) {
            out.clips[i].label = l;
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClipEntry {
    pub id: String,
    /// Tensor stem relative to the manifest.
    pub file: String,
    pub label: usize,
    pub video_id: String,
    pub segment: Segment,
    pub split: Split,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub format: String,
    pub spec: SyntheticDatasetSpec,
    /// Including background.
    pub n_classes: usize,
    pub clip_shape: [usize; 4],
    pub clips: Vec<ClipEntry>,
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).expect("manifest serializes") + "\n";
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::format(path, e))
}

pub fn save_dataset(dir: &Path, dataset: &Dataset) -> Result<()> {
    let clip_dir = dir.join("clips");
    fs::create_dir_all(&clip_dir).map_err(|e| Error::io(&clip_dir, e))?;
    let mut entries = Vec::with_capacity(dataset.clips.len());
    for clip in &dataset.clips {
        let file = format!("clips/{}", clip.id);
        write_tensor(&dir.join(&file), &clip.tensor)?;
        entries.push(ClipEntry {
            id: clip.id.clone(),
            file,
            label: clip.label,
            video_id: clip.video_id.clone(),
            segment: clip.segment,
            split: clip.split,
        });
    }
    let manifest = DatasetManifest {
        format: DATASET_FORMAT.into(),
        spec: dataset.spec.clone(),
        n_classes: dataset.spec.model_classes(),
        clip_shape: dataset.spec.clip_shape,
        clips: entries,
    };
    write_json(&dir.join(MANIFEST_FILE), &manifest)
}

pub fn load_dataset(dir: &Path) -> Result<Dataset> {
    let path = dir.join(MANIFEST_FILE);
    let manifest: DatasetManifest = read_json(&path)?;
    if manifest.format != DATASET_FORMAT {
        return Err(Error::format(&path, format!("unsupported format {:?}", manifest.format)));
    }
    let mut clips = Vec::with_capacity(manifest.clips.len());
    for e in manifest.clips {
        let tensor: Tensor = read_tensor(&dir.join(&e.file))?;
        if tensor.shape() != manifest.clip_shape {
            return Err(Error::format(
                dir.join(&e.file),
                format!("clip shape {:?} != {:?}", tensor.shape(), manifest.clip_shape),
            ));
        }
        if e.label >= manifest.n_classes {
            return Err(Error::format(&path, format!("clip {} label {} out of range", e.id, e.label)));
        }
        clips.push(Clip {
            id: e.id,
            tensor,
            label: e.label,
            video_id: e.video_id,
            segment: e.segment,
            split: e.split,
        });
    }
    Ok(Dataset {
        spec: manifest.spec,
        clips,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoEntry {
    pub id: String,
    pub file: String,
    pub total_length: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoManifest {
    pub format: String,
    pub spec: VideoSetSpec,
    pub videos: Vec<VideoEntry>,
    /// Ground-truth file relative to the manifest.
    pub ground_truth: String,
}

/// Writes `manifest.json`, one tensor per video and `ground_truth.jsonl`.
pub fn save_videos(dir: &Path, spec: &VideoSetSpec, videos: &[UntrimmedVideo]) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut entries = Vec::new();
    let mut gt = Vec::new();
    for v in videos {
        write_tensor(&dir.join(&v.id), &v.frames)?;
        entries.push(VideoEntry {
            id: v.id.clone(),
            file: v.id.clone(),
            total_length: v.total_length(),
        });
        gt.extend(v.ground_truth.iter().cloned());
    }
    write_ground_truth(&dir.join(GROUND_TRUTH_FILE), &gt)?;
    write_json(
        &dir.join(MANIFEST_FILE),
        &VideoManifest {
            format: VIDEOS_FORMAT.into(),
            spec: spec.clone(),
            videos: entries,
            ground_truth: GROUND_TRUTH_FILE.into(),
        },
    )
}

pub fn load_videos(dir: &Path) -> Result<Vec<UntrimmedVideo>> {
    let path = dir.join(MANIFEST_FILE);
    let manifest: VideoManifest = read_json(&path)?;
    if manifest.format != VIDEOS_FORMAT {
        return Err(Error::format(&path, format!("unsupported format {:?}", manifest.format)));
    }
    let gt: Vec<GroundTruthInstance> = read_ground_truth(&dir.join(&manifest.ground_truth))?;
    let mut videos = Vec::new();
    for e in manifest.videos {
        let frames: Tensor = read_tensor(&dir.join(&e.file))?;
        if frames.rank() != 4 || frames.shape()[1] != e.total_length {
            return Err(Error::format(dir.join(&e.file), "video shape disagrees with manifest"));
        }
        let ground_truth: Vec<_> = gt.iter().filter(|g| g.video_id == e.id).cloned().collect();
        if let Some(g) = ground_truth.iter().find(|g| g.end > e.total_length) {
            return Err(Error::format(
                &path,
                format!("instance [{}, {}) outside video {}", g.start, g.end, e.id),
            ));
        }
        videos.push(UntrimmedVideo {
            id: e.id,
            frames,
            ground_truth,
        });
    }
    Ok(videos)
}
