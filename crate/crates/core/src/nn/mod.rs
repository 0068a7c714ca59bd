//! Small MLPs for the drift and diffusion, reverse-mode gradients through the
//! unrolled Euler–Maruyama scheme, and AdamW.

mod adamw;
mod checkpoint;
mod mlp;
mod neural;
mod tape;

pub use adamw::{AdamState, AdamW};
pub use checkpoint::Checkpoint;
pub use mlp::{Activation, Mlp};
pub use neural::{NeuralSde, TimeInput};
pub use tape::{simulate_and_tape, NetGrads, Tape};
