//! Joint identification-verification siamese 3D ConvNets for temporal
//! action detection, built on a small self-contained tensor core.

pub mod data;
pub mod detect;
pub mod error;
pub mod eval;
pub mod experiment;
pub mod losses;
pub mod net;
pub mod tensor;
pub mod train;

pub use error::{Error, ErrorKind, Result};
pub use tensor::{DType, Element, Tensor};
