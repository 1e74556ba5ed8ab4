//! Model checkpoints: `checkpoint.json` (format tag, network config, parameter
//! index) plus one tensor file pair per parameter under `params/`.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::NetworkConfig;
use super::model::SiameseModel;
use crate::error::{Error, Result};
use crate::tensor::io::{read_tensor, write_tensor};

pub const CHECKPOINT_FORMAT: &str = "ivsnet-checkpoint/1";
pub const CHECKPOINT_FILE: &str = "checkpoint.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterEntry {
    pub name: String,
    pub shape: Vec<usize>,
    /// Tensor stem relative to the checkpoint directory.
    pub file: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointDescriptor {
    pub format: String,
    pub config: NetworkConfig,
    pub parameters: Vec<ParameterEntry>,
}

pub fn save_checkpoint(dir: &Path, model: &SiameseModel) -> Result<()> {
    let params_dir = dir.join("params");
    fs::create_dir_all(&params_dir).map_err(|e| Error::io(&params_dir, e))?;
    let mut entries = Vec::new();
    for (name, tensor) in model.named_parameters() {
        let file = format!("params/{name}");
        write_tensor(&dir.join(&file), tensor)?;
        entries.push(ParameterEntry {
            name: name.to_string(),
            shape: tensor.shape().to_vec(),
            file,
        });
    }
    let desc = CheckpointDescriptor {
        format: CHECKPOINT_FORMAT.to_string(),
        config: model.config().clone(),
        parameters: entries,
    };
    let path = dir.join(CHECKPOINT_FILE);
    let text = serde_json::to_string_pretty(&desc).expect("checkpoint serializes") + "\n";
    fs::write(&path, text).map_err(|e| Error::io(&path, e))
}

pub fn load_checkpoint(dir: &Path) -> Result<SiameseModel> {
    let path = dir.join(CHECKPOINT_FILE);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let desc: CheckpointDescriptor =
        serde_json::from_str(&text).map_err(|e| Error::format(&path, e))?;
    if desc.format != CHECKPOINT_FORMAT {
        return Err(Error::format(
            &path,
            format!("unsupported format tag {:?}, expected {CHECKPOINT_FORMAT:?}", desc.format),
        ));
    }
    let named = desc
        .parameters
        .iter()
        .map(|e| Ok((e.name.clone(), read_tensor::<f64>(&dir.join(&e.file))?)))
        .collect::<Result<Vec<_>>>()?;
    SiameseModel::from_parameters(desc.config, named).map_err(|e| Error::format(&path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn checkpoint_roundtrip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let model = SiameseModel::build(NetworkConfig::tiny(3).with_seed(8)).unwrap();
        save_checkpoint(dir.path(), &model).unwrap();
        let back = load_checkpoint(dir.path()).unwrap();
        assert_eq!(back, model);
    }

    #[test]
    fn wrong_format_tag_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let model = SiameseModel::build(NetworkConfig::tiny(3)).unwrap();
        save_checkpoint(dir.path(), &model).unwrap();
        let path = dir.path().join(CHECKPOINT_FILE);
        let text = fs::read_to_string(&path).unwrap().replace(CHECKPOINT_FORMAT, "other/9");
        fs::write(&path, text).unwrap();
        assert!(matches!(load_checkpoint(dir.path()), Err(Error::Format { .. })));
    }
}
