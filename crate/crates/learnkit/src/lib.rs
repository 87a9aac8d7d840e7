//! Small learning substrate: dense networks with manual backpropagation,
//! Adam, a scan VAE, TD3 with a replay buffer, and a binary checkpoint format.

pub mod adam;
pub mod checkpoint;
pub mod error;
pub mod net;
mod real;
pub mod replay;
pub mod td3;
pub mod vae;

pub use adam::{Adam, AdamConfig};
pub use checkpoint::{Block, BlockShape, Checkpoint};
pub use error::{CheckpointError, LearnError, Result};
pub use net::{Activation, DenseNet, ForwardCache, Gradients};
pub use real::Real;
pub use replay::{Batch, ReplayBuffer, SharedReplayBuffer, Transition};
pub use td3::{TargetBreakdown, Td3Agent, Td3Config, Td3Diagnostics};
pub use vae::{gaussian_kl, Vae, VaeConfig, VaeGradients, VaeLoss, VaeTrainer};
