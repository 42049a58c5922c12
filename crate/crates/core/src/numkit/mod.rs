//! Dense numerical kernel: seeded randomness, a multilayer perceptron with
//! hand-written backpropagation for mean-squared-error regression, and Adam.

mod adam;
mod mlp;
mod rng;

pub use adam::{AdamConfig, AdamState};
pub use mlp::{Activation, Checkpoint, MlpParams, Workspace};
pub use rng::SeededRng;
