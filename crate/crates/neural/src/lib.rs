//! A deliberately small neural-network engine: a static list of dense,
//! convolutional and activation layers with hand-written backward rules,
//! Adam, and a checksummed checkpoint format.

pub mod adam;
pub mod checkpoint;
mod error;
pub mod gradcheck;
mod layer;
mod network;
mod tensor;

pub use adam::{AdamConfig, AdamState};
pub use error::{Error, Result};
pub use layer::LayerSpec;
pub use network::{ForwardCache, Gradients, Network};
pub use tensor::{Real, Tensor};
