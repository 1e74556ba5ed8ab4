use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{ConvSpec, PoolSpec};

/// One backbone stage: a run of convolutions (each followed by ReLU) and a pool.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockConfig {
    pub conv_channels: Vec<usize>,
    pub pool: PoolSpec,
}

/// Kernel, stride and padding shared by every backbone convolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvGeometry {
    pub kernel: [usize; 3],
    pub stride: [usize; 3],
    pub padding: [usize; 3],
}

impl Default for ConvGeometry {
    fn default() -> Self {
        ConvGeometry {
            kernel: [3, 3, 3],
            stride: [1, 1, 1],
            padding: [1, 1, 1],
        }
    }
}

impl ConvGeometry {
    pub fn spec(&self, out_channels: usize) -> ConvSpec {
        ConvSpec {
            out_channels,
            kernel: self.kernel,
            stride: self.stride,
            padding: self.padding,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkConfig {
    /// `[channels, length, height, width]`
    pub input_shape: [usize; 4],
    pub blocks: Vec<BlockConfig>,
    #[serde(default)]
    pub conv: ConvGeometry,
    /// Widths of the fully-connected layers after the backbone (FC6, FC7).
    pub fc_dims: Vec<usize>,
    /// Includes the background class at index 0.
    pub n_classes: usize,
    #[serde(default)]
    pub seed: u64,
}

/// Which [`NetworkConfig`] preset to start from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    #[default]
    Tiny,
    Full,
}

impl NetworkConfig {
    /// C1a(64) P1(1,1) C2a(128) P2(2,2) C3a/b(256) P3(2,2) C4a/b(512) P4(2,2)
    /// C5a/b(512) P5(2,2), two 4096-wide FC layers, 21 classes on 3x16x112x112.
    pub fn full() -> Self {
        NetworkConfig {
            input_shape: [3, 16, 112, 112],
            blocks: vec![
                BlockConfig {
                    conv_channels: vec![64],
                    pool: PoolSpec::temporal(1, 1),
                },
                BlockConfig {
                    conv_channels: vec![128],
                    pool: PoolSpec::temporal(2, 2),
                },
                BlockConfig {
                    conv_channels: vec![256, 256],
                    pool: PoolSpec::temporal(2, 2),
                },
                BlockConfig {
                    conv_channels: vec![512, 512],
                    pool: PoolSpec::temporal(2, 2),
                },
                BlockConfig {
                    conv_channels: vec![512, 512],
                    pool: PoolSpec::temporal(2, 2).with_spatial_padding(1),
                },
            ],
            conv: ConvGeometry::default(),
            fc_dims: vec![4096, 4096],
            n_classes: 21,
            seed: 0,
        }
    }

    /// Desk-scale variant: channels (4, 8, 8, 8) on 1x8x16x16 clips.
    pub fn tiny(n_classes: usize) -> Self {
        NetworkConfig {
            input_shape: [1, 8, 16, 16],
            blocks: vec![
                BlockConfig {
                    conv_channels: vec![4],
                    pool: PoolSpec::temporal(1, 1),
                },
                BlockConfig {
                    conv_channels: vec![8],
                    pool: PoolSpec::temporal(2, 2),
                },
                BlockConfig {
                    conv_channels: vec![8, 8],
                    pool: PoolSpec::temporal(2, 2),
                },
            ],
            conv: ConvGeometry::default(),
            fc_dims: vec![32, 32],
            n_classes,
            seed: 0,
        }
    }

    pub fn preset(preset: Preset, n_classes: usize) -> Self {
        match preset {
            Preset::Tiny => Self::tiny(n_classes),
            Preset::Full => NetworkConfig {
                n_classes,
                ..Self::full()
            },
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    /// Activation shape after each block, starting from the input.
    pub fn block_shapes(&self) -> Result<Vec<[usize; 4]>> {
        let [c, t, h, w] = self.input_shape;
        if c == 0 || t == 0 || h == 0 || w == 0 {
            return Err(Error::Config(format!("zero extent in input {:?}", self.input_shape)));
        }
        let mut shape = self.input_shape;
        let mut out = Vec::with_capacity(self.blocks.len());
        for (b, block) in self.blocks.iter().enumerate() {
            if block.conv_channels.is_empty() {
                return Err(Error::Config(format!("block {} has no convolution", b + 1)));
            }
            block.pool.validate()?;
            for &ch in &block.conv_channels {
                let spec = self.conv.spec(ch);
                spec.validate()?;
                let [t2, h2, w2] = spec
                    .output_extents([shape[1], shape[2], shape[3]])
                    .map_err(|e| Error::Config(format!("block {}: {e}", b + 1)))?;
                shape = [ch, t2, h2, w2];
            }
            let [t2, h2, w2] = block
                .pool
                .output_extents([shape[1], shape[2], shape[3]])
                .map_err(|e| Error::Config(format!("block {} pool: {e}", b + 1)))?;
            shape = [shape[0], t2, h2, w2];
            out.push(shape);
        }
        Ok(out)
    }

    /// Width of the flattened backbone output feeding FC6.
    pub fn flat_width(&self) -> Result<usize> {
        let shapes = self.block_shapes()?;
        let last = shapes.last().copied().unwrap_or(self.input_shape);
        Ok(last.iter().product())
    }

    pub fn feature_dim(&self) -> usize {
        self.fc_dims.last().copied().unwrap_or(0)
    }

    pub fn validate(&self) -> Result<()> {
        if self.blocks.is_empty() {
            return Err(Error::Config("backbone has no blocks".into()));
        }
        if self.fc_dims.is_empty() || self.fc_dims.contains(&0) {
            return Err(Error::Config(format!("bad fc_dims {:?}", self.fc_dims)));
        }
        if self.n_classes < 2 {
            return Err(Error::Config(format!("n_classes {} < 2", self.n_classes)));
        }
        self.block_shapes()?;
        Ok(())
    }
}
