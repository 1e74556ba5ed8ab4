use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::{SyntheticDatasetSpec, VideoSetSpec};
use crate::error::{Error, Result};
use crate::eval::DEFAULT_THRESHOLDS;
use crate::net::{NetworkConfig, Preset};
use crate::train::TrainConfig;

pub const DEFAULT_LAMBDA_SWEEP: [f64; 4] = [0.0, 0.5, 1.0, 2.0];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProposalConfig {
    pub windows: Vec<usize>,
    pub stride_fraction: f64,
}

impl Default for ProposalConfig {
    fn default() -> Self {
        ProposalConfig {
            windows: vec![12, 16, 20, 24],
            stride_fraction: 0.25,
        }
    }
}

/// One JSON document describing a whole experiment. Every field has a
/// default, so `{}` is a valid config for the tiny preset.
///
/// `seed` is the single source of randomness: [`ExperimentConfig::resolved`]
/// copies it into the dataset, video, network and training seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub preset: Preset,
    pub dataset: SyntheticDatasetSpec,
    pub videos: VideoSetSpec,
    pub train: TrainConfig,
    pub proposals: ProposalConfig,
    pub nms_threshold: f64,
    pub eval_thresholds: Vec<f64>,
    pub lambda_sweep: Vec<f64>,
    /// Train on permuted labels (a negative control).
    pub shuffle_train_labels: bool,
    pub output_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            seed: 0,
            preset: Preset::Tiny,
            dataset: SyntheticDatasetSpec::default(),
            videos: VideoSetSpec::default(),
            train: TrainConfig::default(),
            proposals: ProposalConfig::default(),
            nms_threshold: crate::detect::DEFAULT_NMS_THRESHOLD,
            eval_thresholds: DEFAULT_THRESHOLDS.to_vec(),
            lambda_sweep: DEFAULT_LAMBDA_SWEEP.to_vec(),
            shuffle_train_labels: false,
            output_dir: PathBuf::from("ivsnet-out"),
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn network(&self) -> NetworkConfig {
        NetworkConfig::preset(self.preset, self.dataset.model_classes()).with_seed(self.seed)
    }

    /// Copy with derived fields filled in: sub-seeds from `seed` and the clip
    /// shape from the network preset.
    pub fn resolved(&self) -> Self {
        let mut out = self.clone();
        out.dataset.seed = self.seed;
        out.videos.seed = self.seed.wrapping_add(1);
        out.train.seed = self.seed;
        out.dataset.clip_shape = self.network().input_shape;
        out
    }

    pub fn validate(&self) -> Result<()> {
        self.dataset.validate()?;
        self.videos.validate()?;
        self.train.validate()?;
        self.network().validate()?;
        if self.proposals.windows.is_empty() || self.proposals.windows.contains(&0) {
            return Err(Error::Config(format!(
                "proposal windows must be non-empty and >= 1, got {:?}",
                self.proposals.windows
            )));
        }
        let f = self.proposals.stride_fraction;
        if !(f > 0.0 && f <= 1.0) {
            return Err(Error::Config(format!("stride_fraction {f} outside (0, 1]")));
        }
        let min_window = self.proposals.windows.iter().min().copied().unwrap_or(0);
        if min_window > self.videos.total_length {
            return Err(Error::Config(format!(
                "shortest proposal window {min_window} exceeds video length {}",
                self.videos.total_length
            )));
        }
        if !(0.0..=1.0).contains(&self.nms_threshold) {
            return Err(Error::Config(format!("nms_threshold {} outside [0, 1]", self.nms_threshold)));
        }
        if self.eval_thresholds.is_empty()
            || self.eval_thresholds.iter().any(|t| !(0.0..=1.0).contains(t))
        {
            return Err(Error::Config(format!("bad eval_thresholds {:?}", self.eval_thresholds)));
        }
        if self.lambda_sweep.is_empty() || self.lambda_sweep.iter().any(|l| !(*l >= 0.0 && l.is_finite())) {
            return Err(Error::Config(format!("bad lambda_sweep {:?}", self.lambda_sweep)));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_json_gives_defaults() {
        let cfg: ExperimentConfig = serde_json::from_str("{}").unwrap();
        assert_eq!(cfg, ExperimentConfig::default());
        cfg.resolved().validate().unwrap();
        assert_eq!(cfg.eval_thresholds, vec![0.1, 0.2, 0.3, 0.4, 0.5]);
        assert_eq!(cfg.lambda_sweep, vec![0.0, 0.5, 1.0, 2.0]);
    }

    #[test]
    fn partial_json_overrides_nested_fields() {
        let cfg: ExperimentConfig =
            serde_json::from_str(r#"{"seed": 3, "train": {"lambda": 0.5}, "dataset": {"n_classes": 3}}"#).unwrap();
        assert_eq!(cfg.train.lambda, 0.5);
        assert_eq!(cfg.train.batch_size, 5);
        let r = cfg.resolved();
        assert_eq!((r.dataset.seed, r.videos.seed, r.train.seed), (3, 4, 3));
        assert_eq!(r.network().n_classes, 4);
    }

    #[test]
    fn unknown_fields_and_bad_values_are_rejected() {
        assert!(serde_json::from_str::<ExperimentConfig>(r#"{"lamda": 1}"#).is_err());
        let bad = ExperimentConfig {
            nms_threshold: 1.5,
            ..Default::default()
        };
        assert!(matches!(bad.validate(), Err(Error::Config(_))));
        let bad = ExperimentConfig {
            proposals: ProposalConfig {
                windows: vec![500],
                stride_fraction: 0.5,
            },
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn full_preset_resolves_clip_shape() {
        let cfg = ExperimentConfig {
            preset: Preset::Full,
            ..Default::default()
        };
        assert_eq!(cfg.resolved().dataset.clip_shape, [3, 16, 112, 112]);
    }
}
