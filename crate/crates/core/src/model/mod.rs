//! MLP backbone + projector with hand-written backward pass, the EMA key
//! network, and the checkpoint format.

pub mod checkpoint;
mod ema;
mod network;

pub use checkpoint::{peek_precision, Checkpoint};
pub use ema::{momentum_at, EncoderPair};
pub use network::{normalize_backward, ForwardCache, ForwardOutput, Network, NetworkSpec};
