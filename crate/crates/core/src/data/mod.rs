//! Synthetic clips, untrimmed videos and pair sampling.

pub mod dataset;
pub mod pairs;
pub mod synthetic;

pub use dataset::{load_dataset, load_videos, save_dataset, save_videos, Clip, Dataset, Split};
pub use pairs::{sample_pairs, PairSample};
pub use synthetic::{
    generate_synthetic_dataset, generate_videos, resample_clip, SyntheticDatasetSpec,
    UntrimmedVideo, VideoSetSpec,
};
