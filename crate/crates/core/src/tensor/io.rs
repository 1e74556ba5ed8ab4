//! On-disk tensors: a JSON descriptor `<stem>.json` holding shape and element
//! type next to a flat little-endian row-major payload `<stem>.bin`.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{numel, DType, Element, Tensor};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorDescriptor {
    pub shape: Vec<usize>,
    pub dtype: DType,
    /// Payload file name, relative to the descriptor.
    pub data: String,
}

/// `stem` plus an extension; a dot already in the stem is kept.
fn sibling(stem: &Path, ext: &str) -> PathBuf {
    let mut name = stem.file_name().unwrap_or_default().to_os_string();
    name.push(".");
    name.push(ext);
    stem.with_file_name(name)
}

fn paths(stem: &Path) -> (PathBuf, PathBuf) {
    (sibling(stem, "json"), sibling(stem, "bin"))
}

pub fn write_tensor<T: Element>(stem: &Path, tensor: &Tensor<T>) -> Result<()> {
    let (json_path, bin_path) = paths(stem);
    let desc = TensorDescriptor {
        shape: tensor.shape().to_vec(),
        dtype: T::DTYPE,
        data: bin_path
            .file_name()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default(),
    };
    let mut bytes = Vec::with_capacity(tensor.len() * T::DTYPE.size_of());
    for &v in tensor.data() {
        v.to_le_bytes_vec(&mut bytes);
    }
    let json = serde_json::to_string_pretty(&desc).expect("descriptor serializes");
    fs::write(&json_path, json + "\n").map_err(|e| Error::io(&json_path, e))?;
    fs::write(&bin_path, bytes).map_err(|e| Error::io(&bin_path, e))?;
    Ok(())
}

pub fn read_descriptor(stem: &Path) -> Result<TensorDescriptor> {
    let json_path = sibling(stem, "json");
    let text = fs::read_to_string(&json_path).map_err(|e| Error::io(&json_path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::format(&json_path, e))
}

/// Reads a tensor, converting from the stored element type if needed.
pub fn read_tensor<T: Element>(stem: &Path) -> Result<Tensor<T>> {
    let desc = read_descriptor(stem)?;
    let bin_path = stem
        .parent()
        .map(|dir| dir.join(&desc.data))
        .unwrap_or_else(|| PathBuf::from(&desc.data));
    let bytes = fs::read(&bin_path).map_err(|e| Error::io(&bin_path, e))?;
    let width = desc.dtype.size_of();
    let n = numel(&desc.shape);
    if bytes.len() != n * width {
        return Err(Error::format(
            &bin_path,
            format!("expected {} bytes for {:?}, found {}", n * width, desc.shape, bytes.len()),
        ));
    }
    let data: Vec<T> = match desc.dtype {
        DType::F64 => bytes
            .chunks_exact(8)
            .map(|c| T::from(f64::from_le_slice(c)).unwrap())
            .collect(),
        DType::F32 => bytes
            .chunks_exact(4)
            .map(|c| T::from(f32::from_le_slice(c)).unwrap())
            .collect(),
    };
    Tensor::new(desc.shape, data).map_err(|e| Error::format(&bin_path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn payload_is_little_endian_row_major() {
        let dir = tempfile::tempdir().unwrap();
        let stem = dir.path().join("t");
        let t = Tensor::new(vec![2, 1], vec![1.0f64, -2.5]).unwrap();
        write_tensor(&stem, &t).unwrap();
        let bytes = fs::read(dir.path().join("t.bin")).unwrap();
        assert_eq!(&bytes[..8], &1.0f64.to_le_bytes());
        assert_eq!(&bytes[8..], &(-2.5f64).to_le_bytes());
        let desc = read_descriptor(&stem).unwrap();
        assert_eq!(desc.shape, vec![2, 1]);
        assert_eq!(desc.dtype, DType::F64);
        assert_eq!(desc.data, "t.bin");
    }

    #[test]
    fn dotted_stems_keep_their_name() {
        let dir = tempfile::tempdir().unwrap();
        let stem = dir.path().join("conv1a.weight");
        write_tensor(&stem, &Tensor::<f64>::zeros(&[2])).unwrap();
        assert!(dir.path().join("conv1a.weight.json").exists());
        assert!(dir.path().join("conv1a.weight.bin").exists());
        assert_eq!(read_tensor::<f64>(&stem).unwrap().shape(), &[2]);
    }

    #[test]
    fn truncated_payload_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let stem = dir.path().join("t");
        write_tensor(&stem, &Tensor::<f32>::zeros(&[4])).unwrap();
        fs::write(dir.path().join("t.bin"), [0u8; 3]).unwrap();
        assert!(matches!(read_tensor::<f32>(&stem), Err(Error::Format { .. })));
    }

    proptest! {
        #[test]
        fn roundtrip_preserves_bits(
            shape in prop::collection::vec(1usize..4, 1..4),
            seed in any::<u64>(),
        ) {
            use rand::SeedableRng;
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let t: Tensor = Tensor::randn(&shape, 10.0, &mut rng);
            let dir = tempfile::tempdir().unwrap();
            let stem = dir.path().join("x");
            write_tensor(&stem, &t).unwrap();
            prop_assert_eq!(read_tensor::<f64>(&stem).unwrap(), t.clone());
            let single: Tensor<f32> = t.cast();
            write_tensor(&stem, &single).unwrap();
            prop_assert_eq!(read_tensor::<f32>(&stem).unwrap(), single);
        }
    }
}
