//! The C3D-style siamese network.

pub mod checkpoint;
pub mod config;
pub mod model;

pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use config::{BlockConfig, ConvGeometry, NetworkConfig, Preset};
pub use model::{ForwardTrace, SiameseModel, SiameseOutput, TapeParams};
